"""Evaluation scenarios."""
from __future__ import annotations

from typing import Any

from ..game import Game
from .grid import CooperativeNavigation, DoorPassing, GridGame, manhattan, resolve_moves
from .handover import Handover

SCENARIOS = {
    "nav": CooperativeNavigation,
    "door": DoorPassing,
    "handover": Handover,
}


def make_game(name: str, **overrides: Any) -> Game:
    try:
        cls = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    return cls(**overrides)


__all__ = [
    "CooperativeNavigation", "DoorPassing", "GridGame", "Handover",
    "SCENARIOS", "make_game", "manhattan", "resolve_moves",
]
