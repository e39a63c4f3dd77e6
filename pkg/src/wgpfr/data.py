"""Curve dataset container and train/test split rules.

A dataset holds M curves observed on one shared, strictly increasing time
grid in [0, 1], a per-curve scalar covariate vector, optional functional
covariates, and an observation mask.  Mask entries are True for points
that belong to the training set; splits work by clearing mask entries of
one target curve.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigInvalid, DimensionMismatch, GridMismatch
from .geometry import ManifoldKind, ManifoldPoint, check_point

SPLITS = ("type1", "type2", "type3", "short", "long")


@dataclass(frozen=True, eq=False)
class CurveDataset:
    kind: ManifoldKind
    times: np.ndarray  # (N,)
    coords: np.ndarray  # (M, N, d0)
    u: np.ndarray  # (M, p)
    x: Optional[np.ndarray] = None  # (M, N, Q)
    mask: Optional[np.ndarray] = None  # (M, N); True = in training set

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))
        object.__setattr__(self, "u", np.atleast_2d(np.asarray(self.u, dtype=float)))
        if self.coords.ndim != 3:
            raise DimensionMismatch("coords must be (curves, times, ambient)")
        m, n, d0 = self.coords.shape
        if n < 2 or m < 1:
            raise DimensionMismatch("need at least one curve and two time points")
        if self.times.shape != (n,):
            raise GridMismatch("times length does not match coords")
        if np.any(np.diff(self.times) <= 0) or self.times[0] < 0 or self.times[-1] > 1:
            raise GridMismatch("times must be strictly increasing within [0, 1]")
        if self.u.shape[0] != m:
            raise DimensionMismatch("one covariate row per curve required")
        if d0 != self.kind.ambient_dim:
            raise DimensionMismatch(
                f"ambient dim {d0} does not match manifold {self.kind}"
            )
        if self.x is not None:
            x = np.asarray(self.x, dtype=float)
            if x.shape[:2] != (m, n):
                raise DimensionMismatch("functional covariates must be (M, N, Q)")
            object.__setattr__(self, "x", x)
        if self.mask is not None:
            mk = np.asarray(self.mask, dtype=bool)
            if mk.shape != (m, n):
                raise DimensionMismatch("mask must be (M, N)")
            object.__setattr__(self, "mask", mk)
        for c in range(m):
            for i in range(n):
                check_point(self.kind, self.coords[c, i])

    @property
    def n_curves(self) -> int:
        return self.coords.shape[0]

    @property
    def n_times(self) -> int:
        return self.coords.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.coords.shape[2]

    def point(self, m: int, i: int) -> ManifoldPoint:
        return ManifoldPoint(self.coords[m, i])

    def observed(self) -> np.ndarray:
        """(M, N) boolean training mask (all True when no mask was set)."""
        if self.mask is None:
            return np.ones(self.coords.shape[:2], dtype=bool)
        return self.mask

    def gp_inputs(self, m: int) -> np.ndarray:
        """GP input vectors for curve m: the functional covariate values, or
        the times themselves when no functional covariate is supplied."""
        if self.x is not None:
            return self.x[m]
        return self.times[:, None]

    def with_mask(self, mask) -> "CurveDataset":
        return replace(self, mask=np.asarray(mask, dtype=bool))


def split_test_indices(split: str, n: int, rng=None) -> np.ndarray:
    """Held-out time indices of the target curve for each protocol.

    type1: 15 points uniformly at random (interpolation); type2: the last
    5 points (short-range extrapolation); type3: the last 15 points
    (long-range extrapolation); short/long: train on the first half, test
    on the next tenth / the full second half.
    """
    if split not in SPLITS:
        raise ConfigInvalid(f"unknown split {split!r}; expected one of {SPLITS}")
    if split == "type1":
        k = min(15, n - 2)
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        return np.sort(rng.choice(n, size=k, replace=False))
    if split == "type2":
        return np.arange(n - min(5, n - 2), n)
    if split == "type3":
        return np.arange(n - min(15, n - 2), n)
    half = n // 2
    if split == "short":
        return np.arange(half, min(n, half + max(1, n // 10)))
    return np.arange(half, n)


def make_split(dataset: CurveDataset, split: str, target: int, rng=None):
    """Clear the target curve's test points from the training mask.

    Returns the masked dataset and the held-out time indices.  For the
    short/long protocols the target curve trains only on its first half.
    """
    n = dataset.n_times
    test_idx = split_test_indices(split, n, rng)
    mask = dataset.observed().copy()
    if split in ("short", "long"):
        mask[target, n // 2 :] = False
    else:
        mask[target, test_idx] = False
    return dataset.with_mask(mask), test_idx
