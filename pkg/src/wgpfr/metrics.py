"""Evaluation metrics: chordal RMSE, discrete Frechet distance, LPPD."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .basis import coords_of
from .errors import EmptyCurve, LengthMismatch
from .geometry import ManifoldPoint, dist
from .gp import log_pointwise_predictive_density
from .model import WGPFRModel, predict_points

LPPD_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    lppd: float
    dfd: float
    n_test: int

    def __post_init__(self):
        if self.n_test < 1:
            raise ValueError("report needs at least one test point")
        for name in ("rmse", "dfd"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    def to_json(self) -> str:
        return json.dumps(
            {"rmse": self.rmse, "lppd": self.lppd, "dfd": self.dfd, "n_test": self.n_test},
            sort_keys=True,
        )


def rmse_chordal(pred, truth) -> float:
    """Root mean squared ambient (chordal) distance between paired points."""
    a = coords_of(pred)
    b = coords_of(truth)
    if a.shape != b.shape or len(a) == 0:
        raise LengthMismatch(f"paired point sets disagree: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def discrete_frechet(curve_a, curve_b, metric: str = "chordal", kind=None) -> float:
    """Minimum over monotone couplings of the maximum pairwise distance.

    ``metric`` is "chordal" (ambient Euclidean, the default) or
    "geodesic" (requires ``kind``).
    """
    a = coords_of(curve_a)
    b = coords_of(curve_b)
    if len(a) == 0 or len(b) == 0:
        raise EmptyCurve("discrete Frechet distance needs non-empty curves")
    if metric == "chordal":
        pair = np.sqrt(
            np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
        )
    elif metric == "geodesic":
        if kind is None:
            raise ValueError("geodesic metric requires the manifold kind")
        pair = np.array(
            [[dist(kind, ManifoldPoint(x), ManifoldPoint(y)) for y in b] for x in a]
        )
    else:
        raise ValueError(f"unknown metric {metric!r}")
    na, nb = pair.shape
    dp = np.full((na, nb), np.inf)
    dp[0, 0] = pair[0, 0]
    for i in range(na):
        for j in range(nb):
            if i == 0 and j == 0:
                continue
            best = np.inf
            if i > 0:
                best = min(best, dp[i - 1, j])
            if j > 0:
                best = min(best, dp[i, j - 1])
            if i > 0 and j > 0:
                best = min(best, dp[i - 1, j - 1])
            dp[i, j] = max(pair[i, j], best)
    return float(dp[-1, -1])


def aggregate_lppd(
    model: WGPFRModel,
    dataset,
    curve_index: int,
    test_indices,
    var_floor: float = LPPD_VAR_FLOOR,
) -> float:
    """Sum of log pointwise predictive densities over test points and
    tangent dimensions of the target curve.

    Targets are the residual tangent coordinates of the held-out
    observations at the model's mean structure; densities come from the
    target curve's per-dimension GP posteriors with the variance floored
    to keep degenerate cases finite.
    """
    if model.cov is None:
        raise ValueError("mean-only model has no predictive density")
    from .geometry import log_map

    idx = np.asarray(test_indices, dtype=int)
    kind = model.mean.kind
    u = dataset.u[curve_index]
    base, _ = predict_points(model, u, dataset.times[idx])
    Xs = dataset.gp_inputs(curve_index)[idx]
    d0 = dataset.ambient_dim
    targets = np.empty((len(idx), d0))
    for t, i in enumerate(idx):
        targets[t] = log_map(kind, ManifoldPoint(base[t]), dataset.point(curve_index, i)).vec
    total = 0.0
    for d in range(d0):
        total += log_pointwise_predictive_density(
            model.cov[curve_index][d], Xs, targets[:, d], var_floor=var_floor
        )
    return float(total)


def evaluate_predictions(pred_coords, truth_coords, lppd: float) -> EvalReport:
    """Bundle the three metrics for one prediction run."""
    return EvalReport(
        rmse=rmse_chordal(pred_coords, truth_coords),
        lppd=lppd,
        dfd=discrete_frechet(pred_coords, truth_coords),
        n_test=len(np.asarray(truth_coords)),
    )
