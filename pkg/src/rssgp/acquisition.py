"""Expected improvement and its global maximization with a DIRECT-style
dividing-rectangles search."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .boxes import SearchBox

__all__ = ["SearchBox", "expected_improvement", "maximize_acquisition"]

_SQRT_2PI = np.sqrt(2.0 * np.pi)

# Potential-optimality slack (relative to |f_min|) and trisection depth cap.
_DIRECT_EPS = 1e-4
_MAX_DEPTH = 30


def expected_improvement(mean, std, incumbent):
    """Expected improvement over the incumbent under a Gaussian predictive.

    With Z = (mean - incumbent) / std this is std * (Z * cdf(Z) + pdf(Z)) for
    std > 0 and exactly 0 for std = 0. Accepts scalars or arrays.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("std must be nonnegative")
    positive = std > 0
    z = np.zeros(np.broadcast_shapes(mean.shape, std.shape))
    np.divide(mean - incumbent, std, out=z, where=positive)
    ei = std * (z * ndtr(z) + np.exp(-0.5 * z * z) / _SQRT_2PI)
    ei = np.where(positive, ei, 0.0)
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


@dataclass
class _Rect:
    center: np.ndarray          # unit-cube coordinates
    depth: np.ndarray           # trisection count per dimension
    value: float
    index: int                  # insertion order, used as deterministic tiebreak

    @property
    def measure(self) -> float:
        return 0.5 * float(np.linalg.norm(3.0 ** (-self.depth.astype(float))))


def _potentially_optimal(rects: list[_Rect], f_min: float) -> list[_Rect]:
    """Rectangles on the lower-right convex hull over (measure, value).

    These are the rectangles for which some Lipschitz constant makes them the
    most promising, subject to the epsilon rule that the implied bound beats
    the incumbent by a relative margin.
    """
    splittable = [r for r in rects if int(r.depth.min()) < _MAX_DEPTH]
    if not splittable:
        return []
    by_measure: dict[float, _Rect] = {}
    for r in splittable:
        s = r.measure
        best = by_measure.get(s)
        if best is None or (r.value, r.index) < (best.value, best.index):
            by_measure[s] = r
    candidates = [by_measure[s] for s in sorted(by_measure)]
    # Lower convex hull, scanned from small to large measure.
    hull: list[_Rect] = []
    for r in candidates:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (b.measure - a.measure) * (r.value - a.value) - \
                    (r.measure - a.measure) * (b.value - a.value)
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(r)
    # Only the portion from the minimum-value vertex rightward admits a
    # positive Lipschitz constant; among ties keep the largest rectangle.
    values = [h.value for h in hull]
    start = max(i for i, v in enumerate(values) if v == min(values))
    hull = hull[start:]
    threshold = f_min - _DIRECT_EPS * abs(f_min)
    result = []
    for i, r in enumerate(hull):
        if i + 1 == len(hull):
            result.append(r)  # the largest rectangle is always kept
            continue
        nxt = hull[i + 1]
        slope = (nxt.value - r.value) / (nxt.measure - r.measure)
        if r.value - slope * r.measure <= threshold:
            result.append(r)
    return result


def maximize_acquisition(model, box: SearchBox, incumbent: float,
                         budget: int = 2000) -> tuple[np.ndarray, float]:
    """Globally maximize EI over the box with the DIRECT algorithm.

    The box is normalized to the unit cube and potentially-optimal rectangles
    (lower-right convex hull over size and value) are trisected along their
    longest sides, evaluating EI at the new centers, until the evaluation
    budget is exhausted. Deterministic for fixed inputs. ``model`` needs a
    ``predict_batch(X, include_noise=False)`` method.

    Returns the best center found and its EI value. If every evaluation is
    zero (flat acquisition), the center of the largest unexplored rectangle
    is returned with a warning.
    """
    d = box.dim
    if budget < 100 * d:
        raise ValueError(f"budget must be at least 100*d = {100 * d}")

    def ei_batch(U: np.ndarray) -> np.ndarray:
        X = box.from_unit(U)
        mean, var = model.predict_batch(X, include_noise=False)
        return expected_improvement(mean, np.sqrt(np.maximum(var, 0.0)), incumbent)

    evals = 0
    rects: list[_Rect] = []
    next_index = 0

    center = np.full(d, 0.5)
    value = -float(ei_batch(center[None, :])[0])
    evals += 1
    rects.append(_Rect(center, np.zeros(d, dtype=int), value, next_index))
    next_index += 1

    best_value = value
    best_center = center.copy()

    while evals < budget:
        chosen = _potentially_optimal(rects, best_value)
        if not chosen:
            break
        progressed = False
        for rect in chosen:
            if evals >= budget:
                break
            min_depth = int(rect.depth.min())
            if min_depth >= _MAX_DEPTH:
                continue
            dims = np.flatnonzero(rect.depth == min_depth)
            delta = 3.0 ** (-(min_depth + 1))
            # Probe both sides of every longest dimension in one batch.
            probes = np.repeat(rect.center[None, :], 2 * len(dims), axis=0)
            for k, dim in enumerate(dims):
                probes[2 * k, dim] += delta
                probes[2 * k + 1, dim] -= delta
            values = -ei_batch(probes)
            evals += len(probes)
            progressed = True
            w = np.minimum(values[0::2], values[1::2])
            order = dims[np.lexsort((dims, w))]
            lookup = {int(dim): 2 * k for k, dim in enumerate(dims)}
            cur_depth = rect.depth.copy()
            for dim in order:
                cur_depth[dim] += 1
                k = lookup[int(dim)]
                for offset, val in ((delta, values[k]), (-delta, values[k + 1])):
                    child_center = rect.center.copy()
                    child_center[dim] += offset
                    rects.append(_Rect(child_center, cur_depth.copy(), float(val),
                                       next_index))
                    next_index += 1
            rect.depth = cur_depth
            better = values.min()
            if better < best_value:
                best_value = float(better)
                best_center = probes[int(values.argmin())].copy()
        if not progressed:
            break

    if best_value >= 0.0:
        largest = max(rects, key=lambda r: (r.measure, -r.index))
        warnings.warn("flat acquisition surface: every EI evaluation was zero; "
                      "returning the largest unexplored rectangle's center",
                      RuntimeWarning)
        return box.from_unit(largest.center), 0.0
    return box.from_unit(best_center), -best_value
