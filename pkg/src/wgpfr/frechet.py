"""Sample Frechet means of point sets and of pointwise mean curves.

The mean is found by Riemannian gradient descent: the update direction is
the tangent average of the log maps at the current iterate and the step is
applied through the exponential map.  The step is halved whenever the
summed squared-distance objective would increase.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInput, GridMismatch, NonConvergedWarning
from .geometry import (
    ManifoldKind,
    ManifoldPoint,
    TangentVector,
    dist,
    exp_map,
    log_map,
    project_to_manifold,
)

MAX_HALVINGS = 30


@dataclass(frozen=True)
class FrechetConfig:
    """Gradient-descent controls: step scale on the mean log, tolerance on
    the gradient norm, and the iteration cap."""

    step_size: float = 0.5
    tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        if self.tol <= 0 or self.step_size <= 0 or self.max_iter < 1:
            raise ValueError("step_size and tol must be positive, max_iter >= 1")


@dataclass(frozen=True)
class FrechetResult:
    point: ManifoldPoint
    converged: bool
    iterations: int
    objective: float
    objective_trace: tuple


def _objective(kind, pts, p) -> float:
    return float(sum(dist(kind, y, p) ** 2 for y in pts))


def _default_init(kind, pts) -> ManifoldPoint:
    avg = np.mean([y.coords for y in pts], axis=0)
    if np.linalg.norm(avg) < 1e-9:
        return pts[0]
    return project_to_manifold(kind, avg)


def sample_frechet_mean(
    kind: ManifoldKind,
    points: Sequence[ManifoldPoint],
    cfg: Optional[FrechetConfig] = None,
    init: Optional[ManifoldPoint] = None,
) -> FrechetResult:
    """Minimize sum_m d(y_m, p)^2 over p.

    Converged when the mean-gradient norm |(2/M) sum_m Log(p, y_m)| drops
    to ``cfg.tol``; otherwise stops at ``cfg.max_iter`` with
    ``converged=False``.  The returned trace holds the objective value at
    every accepted iterate and is non-increasing.
    """
    if len(points) == 0:
        raise EmptyInput("need at least one point")
    cfg = cfg or FrechetConfig()
    p = init if init is not None else _default_init(kind, points)
    obj = _objective(kind, points, p)
    trace = [obj]
    m = len(points)
    for it in range(cfg.max_iter):
        grad = np.zeros_like(p.coords)
        for y in points:
            grad += log_map(kind, p, y).vec
        grad *= 2.0 / m
        if np.linalg.norm(grad) <= cfg.tol:
            return FrechetResult(p, True, it, obj, tuple(trace))
        step = cfg.step_size
        accepted = False
        for _ in range(MAX_HALVINGS):
            cand = exp_map(kind, p, TangentVector(p, step * grad))
            cand_obj = _objective(kind, points, cand)
            if cand_obj <= obj + 1e-12:
                p, obj = cand, cand_obj
                trace.append(obj)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no step along the gradient improves: treat as a stationary point
            return FrechetResult(p, True, it + 1, obj, tuple(trace))
    return FrechetResult(p, False, cfg.max_iter, obj, tuple(trace))


def _check_shared_grid(times) -> None:
    grids = np.asarray(times, dtype=float)
    if grids.ndim == 2:
        if np.max(np.abs(grids - grids[0])) > 1e-12:
            raise GridMismatch("curves are observed on different time grids")


def frechet_mean_curve(
    kind: ManifoldKind,
    curves: Sequence[Sequence[ManifoldPoint]],
    cfg: Optional[FrechetConfig] = None,
    times=None,
    mask=None,
) -> list[ManifoldPoint]:
    """Pointwise sample Frechet mean across curves sharing one time grid.

    ``mask[m, i]`` False drops curve m from the mean at time index i.
    Warns (rather than fails) if any time index hits the iteration cap.
    """
    if len(curves) == 0:
        raise EmptyInput("need at least one curve")
    if times is not None:
        _check_shared_grid(times)
    n = len(curves[0])
    if any(len(c) != n for c in curves):
        raise GridMismatch("curves have different numbers of observations")
    out = []
    bad = []
    for i in range(n):
        if mask is None:
            pts = [c[i] for c in curves]
        else:
            pts = [c[i] for m, c in enumerate(curves) if mask[m][i]]
        if not pts:
            raise EmptyInput(f"no observed curves at time index {i}")
        res = sample_frechet_mean(kind, pts, cfg)
        if not res.converged:
            bad.append(i)
        out.append(res.point)
    if bad:
        warnings.warn(
            f"Frechet mean hit max_iter at time indices {bad}", NonConvergedWarning
        )
    return out
