"""Benchmark objectives with known optima, and the simple-regret metric."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .boxes import SearchBox

__all__ = ["Objective", "ackley2", "hartmann6", "sinc1", "simple_regret",
           "get_objective", "OBJECTIVES"]


@dataclass(frozen=True)
class Objective:
    """A deterministic test function over a box with a known optimum."""

    name: str
    dim: int
    box: SearchBox
    optimum_value: float
    evaluate: Callable[[np.ndarray], float]
    sense: str  # "min" or "max"

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")


def _require_in_box(x: np.ndarray, lo: float, hi: float, dim: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != dim:
        raise ValueError(f"{name} expects a {dim}-vector")
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError(f"{name} evaluated outside its box [{lo}, {hi}]^{dim}")
    return x


def ackley2(x: np.ndarray) -> float:
    """2d Ackley function on [-10, 10]^2 (a=20, b=0.2, c=2*pi); min 0 at 0."""
    x = _require_in_box(x, -10.0, 10.0, 2, "ackley2")
    a, b, c = 20.0, 0.2, 2.0 * np.pi
    return float(-a * np.exp(-b * np.sqrt(np.mean(x * x)))
                 - np.exp(np.mean(np.cos(c * x))) + a + np.e)


_HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN_A = np.array([
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
])
_HARTMANN_P = 1e-4 * np.array([
    [1312, 1696, 5569, 124, 8283, 5886],
    [2329, 4135, 8307, 3736, 1004, 9991],
    [2348, 1451, 3522, 2883, 3047, 6650],
    [4047, 8828, 8732, 5743, 1091, 381],
])


def hartmann6(x: np.ndarray) -> float:
    """6d Hartmann function on [0, 1]^6; min -3.32237."""
    x = _require_in_box(x, 0.0, 1.0, 6, "hartmann6")
    inner = np.sum(_HARTMANN_A * (x - _HARTMANN_P) ** 2, axis=1)
    return float(-np.sum(_HARTMANN_ALPHA * np.exp(-inner)))


def sinc1(x) -> float:
    """sin(x)/x with the removable singularity sinc(0) = 1."""
    return float(np.sinc(np.asarray(x, dtype=float) / np.pi))


def simple_regret(best_so_far: float, objective: Objective) -> float:
    """Gap between the known optimum and the best value found, in the
    objective's native sense (nonnegative up to floating-point slack)."""
    if objective.sense == "max":
        return objective.optimum_value - best_so_far
    return best_so_far - objective.optimum_value


OBJECTIVES: dict[str, Objective] = {
    "ackley2": Objective(
        "ackley2", 2, SearchBox(np.full(2, -10.0), np.full(2, 10.0)),
        0.0, ackley2, "min"),
    "hartmann6": Objective(
        "hartmann6", 6, SearchBox(np.zeros(6), np.ones(6)),
        -3.32237, hartmann6, "min"),
    "sinc1": Objective(
        "sinc1", 1, SearchBox(np.array([-10.0]), np.array([10.0])),
        1.0, lambda x: sinc1(np.asarray(x).ravel()[0]), "max"),
}


def get_objective(name: str) -> Objective:
    try:
        return OBJECTIVES[name]
    except KeyError:
        raise ValueError(f"unknown objective {name!r}; "
                         f"available: {sorted(OBJECTIVES)}") from None
