"""Gaussian mixture density estimation and Gaussian mixture regression.

The last coordinate of every data vector is the regression target; the
leading coordinates are the conditioning inputs.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import logsumexp

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
MODEL_FORMAT = "qcp-gmm/1"


class InsufficientDataError(ValueError):
    """Fewer samples than the requested model needs."""


class Prediction(NamedTuple):
    mean: float
    variance: float


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    labels: np.ndarray
    distortion: float


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Parameters ``{prior_k, mean_k, cov_k}`` of a K-component Gaussian mixture.

    ``log_likelihood_trace`` holds the mean per-sample log-likelihood of each
    EM iterate; the model itself is the last iterate.
    """

    priors: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood_trace: tuple[float, ...] = ()

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=float).reshape(-1)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covariances, dtype=float)
        k, g = means.shape
        if k < 1 or priors.shape != (k,) or covs.shape != (k, g, g):
            raise ValueError(
                f"inconsistent shapes: priors {priors.shape}, means {means.shape}, "
                f"covariances {covs.shape}"
            )
        if np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-9:
            raise ValueError("priors must be non-negative and sum to 1")
        if not np.allclose(covs, covs.transpose(0, 2, 1), rtol=0, atol=1e-12):
            raise ValueError("covariances must be symmetric")
        for cov in covs:
            np.linalg.cholesky(cov)  # LinAlgError if not positive definite
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_pdf(self, X) -> np.ndarray:
        """``log N(x; mean_k, cov_k)`` for every row of X, shape (N, K)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty((X.shape[0], self.n_components))
        for k in range(self.n_components):
            out[:, k] = _gauss_log_pdf(X, self.means[k], self.covariances[k])
        return out

    def log_pdf(self, X) -> np.ndarray:
        return logsumexp(self.component_log_pdf(X) + np.log(self.priors), axis=1)

    def mean_log_likelihood(self, X) -> float:
        return float(self.log_pdf(X).mean())

    @cached_property
    def _regression(self) -> "_Regression":
        return _Regression(self)


def _gauss_log_pdf(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    z = solve_triangular(L, (X - mean).T, lower=True)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return -0.5 * (np.einsum("ij,ij->j", z, z) + logdet + mean.size * LOG_2PI)


def n_parameters(n_components: int, dim: int) -> int:
    """Free parameters of a full-covariance mixture."""
    k, g = n_components, dim
    return (k - 1) + k * g + k * g * (g + 1) // 2


def default_regularization(data) -> float:
    """Covariance ridge scaled to the data's average per-feature variance."""
    scale = float(np.var(np.asarray(data, dtype=float), axis=0).mean())
    return 1e-6 * max(scale, 1e-6)


# --------------------------------------------------------------------------
# k-means


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = [X[rng.integers(n)]]
    d2 = ((X - centroids[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centroids.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(1))
    return np.array(centroids)


def _lloyd(X: np.ndarray, centroids: np.ndarray, max_iter: int) -> KMeansResult:
    k = centroids.shape[0]
    labels = None
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
        new_labels = d2.argmin(1)
        counts = np.bincount(new_labels, minlength=k)
        if np.any(counts == 0):
            # re-seed empty clusters from the points farthest from their centroid
            own = d2[np.arange(len(X)), new_labels]
            for c in np.flatnonzero(counts == 0):
                far = int(own.argmax())
                new_labels[far] = c
                own[far] = -1.0
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            centroids[c] = X[labels == c].mean(0)
    d2 = ((X - centroids[labels]) ** 2).sum(1)
    return KMeansResult(centroids, labels, float(d2.sum()))


def kmeans_init(
    data,
    n_clusters: int,
    rng: np.random.Generator,
    n_init: int = 5,
    max_iter: int = 100,
) -> KMeansResult:
    """Lloyd's k-means from k-means++ seeds, best of ``n_init`` restarts."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[0] < n_clusters:
        raise InsufficientDataError(f"{X.shape[0]} points < {n_clusters} clusters")
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    best = None
    for _ in range(n_init):
        result = _lloyd(X, _kmeans_pp(X, n_clusters, rng), max_iter)
        if best is None or result.distortion < best.distortion:
            best = result
    return best


# --------------------------------------------------------------------------
# EM


def fit_em(
    data,
    n_components: int,
    rng: np.random.Generator,
    reg: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 200,
    n_init: int = 5,
) -> MixtureModel:
    """Maximum-likelihood mixture by EM, initialised from k-means.

    ``reg`` is added to every covariance diagonal after each M-step; it
    defaults to :func:`default_regularization`. Iteration stops when the mean
    log-likelihood changes by less than ``tol`` or after ``max_iter`` steps.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    n, g = X.shape
    if n < n_components:
        raise InsufficientDataError(f"{n} samples < {n_components} components")
    if reg is None:
        reg = default_regularization(X)
    if reg <= 0:
        raise ValueError("reg must be positive")
    ridge = reg * np.eye(g)

    if np.all(X == X[0]):
        point = MixtureModel(np.ones(1), X[:1].copy(), ridge[None].copy())
        return MixtureModel(
            point.priors, point.means, point.covariances, (point.mean_log_likelihood(X),)
        )

    km = kmeans_init(X, n_components, rng, n_init=n_init)
    priors = np.bincount(km.labels, minlength=n_components) / n
    means = km.centroids.copy()
    covs = np.empty((n_components, g, g))
    for k in range(n_components):
        diff = X[km.labels == k] - means[k]
        covs[k] = diff.T @ diff / max(len(diff), 1) + ridge

    trace: list[float] = []
    for _ in range(max_iter):
        # E-step
        weighted = np.empty((n, n_components))
        for k in range(n_components):
            weighted[:, k] = _gauss_log_pdf(X, means[k], covs[k])
        with np.errstate(divide="ignore"):
            weighted += np.log(priors)
        ll = logsumexp(weighted, axis=1)
        trace.append(float(ll.mean()))
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol:
            break
        resp = np.exp(weighted - ll[:, None])
        # M-step
        mass = resp.sum(0)
        priors = mass / n
        for k in range(n_components):
            if mass[k] < 1e-10:
                continue  # dead component keeps its last shape
            means[k] = resp[:, k] @ X / mass[k]
            diff = X - means[k]
            covs[k] = (resp[:, k, None] * diff).T @ diff / mass[k] + ridge
            covs[k] = 0.5 * (covs[k] + covs[k].T)
    priors = priors / priors.sum()
    return MixtureModel(priors, means, covs, tuple(trace))


def select_k(
    data,
    candidates: Sequence[int],
    test_fraction: float,
    rng: np.random.Generator,
    reg: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> MixtureModel:
    """Fit each candidate K on a training split, keep the lowest held-out BIC.

    ``BIC = -2 lnL_test + p ln(N_test)`` with ``p`` from :func:`n_parameters`.
    Candidates with fewer training points than parameters are skipped.
    """
    if not candidates:
        raise ValueError("no candidate component counts")
    X = np.atleast_2d(np.asarray(data, dtype=float))
    n, g = X.shape
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    perm = rng.permutation(n)
    n_test = min(max(1, round(n * test_fraction)), n - 1)
    test, train = X[perm[:n_test]], X[perm[n_test:]]
    if reg is None:
        reg = default_regularization(X)

    best, best_bic = None, math.inf
    for k in candidates:
        p = n_parameters(k, g)
        if len(train) < max(k, p) and k > 1:
            log.debug("skipping K=%d: %d training points < %d parameters", k, len(train), p)
            continue
        try:
            model = fit_em(train, k, rng, reg=reg, tol=tol, max_iter=max_iter)
        except InsufficientDataError as exc:
            log.debug("skipping K=%d: %s", k, exc)
            continue
        bic = -2.0 * model.log_pdf(test).sum() + p * math.log(n_test)
        if bic < best_bic:
            best, best_bic = model, bic
    if best is None:
        raise InsufficientDataError(f"no candidate in {list(candidates)} could be fitted")
    return best


# --------------------------------------------------------------------------
# Gaussian mixture regression


class _Regression:
    """Per-component conditioning terms, precomputed once per model."""

    def __init__(self, model: MixtureModel):
        d = model.dim - 1
        self.log_priors = np.log(np.maximum(model.priors, 1e-300))
        self.mu_x = model.means[:, :d]
        self.mu_q = model.means[:, d]
        self.chol = []
        self.logdet = np.empty(model.n_components)
        self.gain = np.empty((model.n_components, d))
        self.cond_var = np.empty(model.n_components)
        for k, cov in enumerate(model.covariances):
            sxx, sxq, sqq = cov[:d, :d], cov[:d, d], cov[d, d]
            factor = cho_factor(sxx, lower=True)
            self.chol.append(factor[0])
            self.logdet[k] = 2.0 * np.log(np.diag(factor[0])).sum()
            self.gain[k] = cho_solve(factor, sxq)
            self.cond_var[k] = sqq - sxq @ self.gain[k]
        self.d = d

    def __call__(self, X: np.ndarray):
        m, K = X.shape[0], len(self.chol)
        logw = np.empty((m, K))
        cond_mean = np.empty((m, K))
        for k in range(K):
            diff = X - self.mu_x[k]
            z = solve_triangular(self.chol[k], diff.T, lower=True)
            logw[:, k] = self.log_priors[k] - 0.5 * (
                np.einsum("ij,ij->j", z, z) + self.logdet[k] + self.d * LOG_2PI
            )
            cond_mean[:, k] = self.mu_q[k] + diff @ self.gain[k]
        beta = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
        mean = (beta * cond_mean).sum(1)
        # law of total variance: same quantity as sum(beta*(var_k + mu_k^2)) - mean^2
        spread = (beta * (cond_mean - mean[:, None]) ** 2).sum(1)
        variance = (beta * self.cond_var).sum(1) + spread
        return mean, np.maximum(variance, 0.0), beta


class StackedRegression:
    """GMR for several mixtures over the same inputs, evaluated at one query.

    Used for one-density-per-action approximators: all components are
    stacked so a single vectorised pass yields every model's conditional
    mean and variance.
    """

    def __init__(self, models: Sequence[MixtureModel]):
        if not models:
            raise ValueError("no models to stack")
        regs = [m._regression for m in models]
        d = regs[0].d
        if any(r.d != d for r in regs):
            raise ValueError("stacked models must share the input dimension")
        self.n_models = len(models)
        self.d = d
        sizes = [len(r.chol) for r in regs]
        self.starts = np.cumsum([0] + sizes[:-1])
        self.owner = np.repeat(np.arange(len(models)), sizes)
        self.log_priors = np.concatenate([r.log_priors for r in regs])
        self.mu_x = np.concatenate([r.mu_x for r in regs])
        self.mu_q = np.concatenate([r.mu_q for r in regs])
        self.gain = np.concatenate([r.gain for r in regs])
        self.cond_var = np.concatenate([r.cond_var for r in regs])
        self.logdet = np.concatenate([r.logdet for r in regs])
        eye = np.eye(d)
        self.chol_inv = np.stack(
            [solve_triangular(c, eye, lower=True) for r in regs for c in r.chol]
        )

    def __call__(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Conditional mean and variance of each stacked model at input ``x``."""
        diff = np.asarray(x, dtype=float)[None, :] - self.mu_x
        z = np.einsum("cij,cj->ci", self.chol_inv, diff)
        logw = self.log_priors - 0.5 * (np.einsum("ci,ci->c", z, z) + self.logdet
                                        + self.d * LOG_2PI)
        cond_mean = self.mu_q + np.einsum("ci,ci->c", diff, self.gain)
        top = np.maximum.reduceat(logw, self.starts)
        w = np.exp(logw - top[self.owner])
        beta = w / np.add.reduceat(w, self.starts)[self.owner]
        mean = np.add.reduceat(beta * cond_mean, self.starts)
        spread = (cond_mean - mean[self.owner]) ** 2
        var = np.add.reduceat(beta * (self.cond_var + spread), self.starts)
        return mean, np.maximum(var, 0.0)


def responsibilities(model: MixtureModel, X) -> np.ndarray:
    """GMR mixing weights ``beta_k(x)`` for each query row, shape (M, K)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return model._regression(X)[2]


def predict_many(model: MixtureModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Conditional mean and variance of the last coordinate given each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dim - 1:
        raise ValueError(f"query has {X.shape[1]} inputs, model expects {model.dim - 1}")
    mean, variance, _ = model._regression(X)
    return mean, variance


def predict(model: MixtureModel, state: Sequence[float], action: float) -> Prediction:
    x = np.append(np.asarray(state, dtype=float), float(action))
    mean, variance = predict_many(model, x[None, :])
    return Prediction(float(mean[0]), float(variance[0]))


# --------------------------------------------------------------------------
# persistence


def save_model(model: MixtureModel, path: str | Path) -> None:
    """Write ``model`` as JSON: priors, means and row-major covariances."""
    doc = {
        "format": MODEL_FORMAT,
        "n_components": model.n_components,
        "dim": model.dim,
        "priors": model.priors.tolist(),
        "means": model.means.tolist(),
        "covariances": [c.reshape(-1).tolist() for c in model.covariances],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path: str | Path) -> MixtureModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {doc.get('format')!r}")
    k, g = doc["n_components"], doc["dim"]
    covs = np.array(doc["covariances"], dtype=float).reshape(k, g, g)
    return MixtureModel(np.array(doc["priors"]), np.array(doc["means"]), covs)
