"""Experiment runner: config files, fan-out over (algorithm, seed), metric tables.

A config is a flat ``key = value`` text file; ``#`` starts a comment::

    scenario.name = nav
    experiment.algorithms = qcp, vanilla
    experiment.seeds = 0, 1, 2
    experiment.output = runs/nav
    train.iterations = 49
    search.horizon = 4
    fit.n_components = 5

Sections map onto :class:`~qcp.driver.TrainConfig` (``train.*``),
:class:`~qcp.search.SearchConfig` (``search.*``),
:class:`~qcp.qfunction.FitConfig` (``fit.*``) and the scenario's
constructor (``scenario.*``). A few short aliases (``search.H``,
``train.I``, ``fit.K`` ...) are accepted and normalised.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .driver import METRIC_COLUMNS, IterationMetrics, TrainConfig, metrics_table, normalize_rewards, train
from .envs import SCENARIOS, make_game
from .qfunction import FitConfig
from .search import ALGORITHMS, SearchConfig

SUMMARY_COLUMNS = (
    "algorithm", "iteration", "reward_mean", "reward_std", "reward_norm",
    "states_mean", "states_std", "new_states_mean",
)

ALIASES = {
    "train.I": "train.iterations",
    "train.T": "train.timesteps",
    "search.H": "search.horizon",
    "search.M": "search.rollouts",
    "search.C": "search.c",
    "search.lambda0": "search.lam",
    "search.eps_A": "search.eps_admissible",
    "fit.K": "fit.n_components",
}

class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "nav"
    algorithms: tuple[str, ...] = ("qcp",)
    seeds: tuple[int, ...] = (0,)
    output: str = "runs"
    train: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    env: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required", key="experiment.algorithms")
        if not self.seeds:
            raise ConfigError("at least one seed is required", key="experiment.seeds")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}", key="experiment.algorithms")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}", key="scenario.name")

    def train_config(self, algorithm: str, seed: int) -> TrainConfig:
        return TrainConfig(
            algorithm=algorithm, seed=seed,
            search=SearchConfig(**self.search), fit=FitConfig(**self.fit), **self.train,
        )


# --------------------------------------------------------------------------
# parsing and serialisation


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(text: str, default: Any, key: str, line: int | None) -> Any:
    """Parse ``text`` following the type of a field's ``default``."""
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError("expected true or false")
            return low == "true"
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, (frozenset, set, dict)):
            raise ValueError("this field is not configurable from text")
        if isinstance(default, tuple):
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if default and isinstance(default[0], tuple):
                raise ValueError("nested tuples are not configurable")
            elem = default[0] if default else 0.0
            return tuple(_coerce(p, elem, key, line) for p in parts)
        if default is None:
            return None if text.lower() == "none" else int(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"cannot parse {text!r}: {exc}", line, key) from None


def _field_defaults(cls) -> dict[str, Any]:
    out = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            out[f.name] = f.default_factory()
    return out


_TRAIN_FIELDS = {
    k: v for k, v in _field_defaults(TrainConfig).items()
    if k not in ("algorithm", "seed", "search", "fit")
}
_SEARCH_FIELDS = _field_defaults(SearchConfig)
_FIT_FIELDS = _field_defaults(FitConfig)


def _env_fields(scenario: str) -> dict[str, Any]:
    return _field_defaults(SCENARIOS[scenario])


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; raises :class:`ConfigError` with a line/field diagnostic."""
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        key = ALIASES.get(key, key)
        if "." not in key:
            raise ConfigError("keys are dotted (section.name)", lineno, key)
        if key in raw:
            raise ConfigError("duplicate key", lineno, key)
        raw[key] = (value, lineno)

    scenario = raw.pop("scenario.name", ("nav", None))[0]
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}",
                          key="scenario.name")
    env_fields = _env_fields(scenario)
    kwargs: dict[str, Any] = {"scenario": scenario, "train": {}, "search": {}, "fit": {}, "env": {}}
    tables = {"train": _TRAIN_FIELDS, "search": _SEARCH_FIELDS, "fit": _FIT_FIELDS,
              "scenario": env_fields}
    for key, (value, lineno) in raw.items():
        section, name = key.split(".", 1)
        if section == "experiment":
            if name == "algorithms":
                kwargs["algorithms"] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif name == "seeds":
                kwargs["seeds"] = _parse_seeds(value, lineno, key)
            elif name == "output":
                kwargs["output"] = value
            else:
                raise ConfigError("unknown field", lineno, key)
            continue
        table = tables.get(section)
        if table is None:
            raise ConfigError(f"unknown section {section!r}", lineno, key)
        if name not in table:
            raise ConfigError("unknown field", lineno, key)
        dest = "env" if section == "scenario" else section
        kwargs[dest][name] = _coerce(value, table[name], key, lineno)

    try:
        config = ExperimentConfig(**kwargs)
        # surface invariant violations of the nested configs at parse time
        config.train_config(config.algorithms[0], config.seeds[0])
        make_game(config.scenario, **config.env)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return config


def _parse_seeds(value: str, line: int, key: str) -> tuple[int, ...]:
    """``0, 1, 2`` or an inclusive range ``0..9``."""
    try:
        if ".." in value:
            lo, hi = (int(v) for v in value.split(".."))
            return tuple(range(lo, hi + 1))
        return tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"cannot parse seeds {value!r}", line, key) from None


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    lines = [
        f"scenario.name = {config.scenario}",
        f"experiment.algorithms = {_format_value(config.algorithms)}",
        f"experiment.seeds = {_format_value(config.seeds)}",
        f"experiment.output = {config.output}",
    ]
    for section, values in (("scenario", config.env), ("train", config.train),
                            ("search", config.search), ("fit", config.fit)):
        for name in sorted(values):
            lines.append(f"{section}.{name} = {_format_value(values[name])}")
    return "\n".join(lines) + "\n"


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


# --------------------------------------------------------------------------
# running


def run_file(out: Path, algorithm: str, seed: int, kind: str = "metrics", ext: str = "tsv") -> Path:
    return out / f"{kind}_{algorithm}_seed{seed}.{ext}"


def _run_one(config: ExperimentConfig, algorithm: str, seed: int, trace: bool, render: bool) -> str:
    out = Path(config.output)
    game = make_game(config.scenario, **config.env)
    tcfg = config.train_config(algorithm, seed)
    trace_fh = open(run_file(out, algorithm, seed, "trace"), "w") if trace else None
    render_fh = open(run_file(out, algorithm, seed, "render", "txt"), "w") if render else None
    try:
        result = train(game, tcfg, trace_fh, render_fh)
    finally:
        for fh in (trace_fh, render_fh):
            if fh is not None:
                fh.close()
    path = run_file(out, algorithm, seed)
    path.write_text(metrics_table(result.metrics))
    return str(path)


def run_experiment(
    config: ExperimentConfig, workers: int = 1, trace: bool = False, render: bool = False
) -> list[Path]:
    """Execute every (algorithm, seed) run, then write ``summary.tsv``.

    Each run's metric table is written as soon as it finishes, so a failure
    elsewhere leaves completed outputs in place; the first failure is
    re-raised after all runs have ended.
    """
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(serialize_config(config))
    jobs = [(a, s) for a in config.algorithms for s in config.seeds]
    paths: list[Path] = []
    failure: BaseException | None = None
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = [pool.submit(_run_one, config, a, s, trace, render) for a, s in jobs]
            for fut in futures:
                try:
                    paths.append(Path(fut.result()))
                except Exception as exc:  # keep the other runs' outputs
                    failure = failure or exc
    else:
        for a, s in jobs:
            try:
                paths.append(Path(_run_one(config, a, s, trace, render)))
            except Exception as exc:
                failure = failure or exc
                traceback.print_exc()
    if failure is not None:
        raise failure
    summary = summarize(read_metrics(paths))
    (out / "summary.tsv").write_text(summary)
    return paths


# --------------------------------------------------------------------------
# reading and comparing metric tables


def read_metrics(paths: Iterable[str | Path]) -> list[IterationMetrics]:
    """Load metric tables; rejects files whose header is not the metric schema."""
    rows = []
    for path in paths:
        text = Path(path).read_text()
        reader = csv.reader(io.StringIO(text), delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(header) != METRIC_COLUMNS:
            raise ValueError(f"{path}: unknown schema {header!r}; expected {METRIC_COLUMNS}")
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(METRIC_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(METRIC_COLUMNS)} columns")
            rows.append(IterationMetrics(
                row[0], int(row[1]), int(row[2]), float(row[3]), int(row[4]), int(row[5]),
                float(row[6]),
            ))
    return rows


def _by_algorithm(rows: Sequence[IterationMetrics]) -> dict[str, dict[str, np.ndarray]]:
    """Per algorithm: (seeds, iterations) arrays of reward, states and new states."""
    grouped: dict[str, dict[int, list[IterationMetrics]]] = {}
    for m in rows:
        grouped.setdefault(m.algorithm, {}).setdefault(m.seed, []).append(m)
    out = {}
    for algo, seeds in grouped.items():
        runs = [sorted(ms, key=lambda m: m.iteration) for _, ms in sorted(seeds.items())]
        n_iter = min(len(r) for r in runs)
        runs = [r[:n_iter] for r in runs]
        out[algo] = {
            "reward": np.array([[m.mean_reward for m in r] for r in runs]),
            "states": np.array([[m.cum_states for m in r] for r in runs], dtype=float),
            "new": np.array([[m.new_states for m in r] for r in runs], dtype=float),
        }
    return out


def summarize(rows: Sequence[IterationMetrics]) -> str:
    """Seed mean/std per iteration plus rewards normalised across algorithms."""
    data = _by_algorithm(rows)
    norm = normalize_rewards({a: d["reward"] for a, d in data.items()})
    buf = io.StringIO()
    buf.write("\t".join(SUMMARY_COLUMNS) + "\n")
    for algo, d in data.items():
        for k in range(d["reward"].shape[1]):
            r, s = d["reward"][:, k], d["states"][:, k]
            buf.write("\t".join([
                algo, str(k + 1), f"{r.mean():.6g}", f"{r.std():.6g}", f"{norm[algo][k]:.6g}",
                f"{s.mean():.6g}", f"{s.std():.6g}", f"{d['new'][:, k].mean():.6g}",
            ]) + "\n")
    return buf.getvalue()


@dataclass(frozen=True)
class Comparison:
    final_reward: dict[str, float]  # normalised, seed-averaged, last iteration
    final_states: dict[str, float]  # seed-averaged cumulative explored states
    reward_ratio: float  # qcp / vanilla, nan if either is absent
    state_ratio: float


def compare(rows: Sequence[IterationMetrics]) -> Comparison:
    data = _by_algorithm(rows)
    norm = normalize_rewards({a: d["reward"] for a, d in data.items()})
    reward = {a: float(c[-1]) for a, c in norm.items()}
    states = {a: float(d["states"][:, -1].mean()) for a, d in data.items()}

    def ratio(table):
        if "qcp" in table and "vanilla" in table and table["vanilla"] != 0:
            return table["qcp"] / table["vanilla"]
        return math.nan

    return Comparison(reward, states, ratio(reward), ratio(states))


def format_comparison(c: Comparison) -> str:
    lines = [f"{'algorithm':<10}{'final_reward_norm':>20}{'explored_states':>18}"]
    for algo in c.final_reward:
        lines.append(f"{algo:<10}{c.final_reward[algo]:>20.4f}{c.final_states[algo]:>18.1f}")
    lines.append(f"reward parity qcp/vanilla: {c.reward_ratio:.4f}")
    lines.append(f"state ratio qcp/vanilla: {c.state_ratio:.4f}")
    return "\n".join(lines)


def default_workers() -> int:
    return os.cpu_count() or 1
