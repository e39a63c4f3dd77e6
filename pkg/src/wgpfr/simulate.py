"""Seeded generators for the sphere and shape-space simulation studies.

Sphere curves follow a wavy base curve with two covariate batches whose
slope fields are weighted Fourier sums rotated into the tangent space;
residual fields are independent per-dimension GP draws from the planted
composite kernels, projected to the tangent space before the exponential
map.  Shape curves use the 80-landmark family that morphs between a
rounded and a squarish outline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import CurveDataset
from .errors import ParallelVector
from .geometry import (
    KendallShape,
    ManifoldPoint,
    Sphere,
    TangentVector,
    _from_complex,
    _project,
    exp_map,
    preshape,
)
from .gp import KernelHyperparams, gram

S2 = Sphere(3)

THETA_TRIPLE = (
    KernelHyperparams(0.012, 3.0, 0.01, 0.01, 0.02),
    KernelHyperparams(0.017, 3.1, 0.011, 0.012, 0.015),
    KernelHyperparams(0.015, 3.2, 0.012, 0.013, 0.01),
)

N_WEIGHT_TERMS = 20


def fourier_term(i: int, t):
    """phi_i of the simulation family: 1/sqrt(2) at i=0, then sin(2*pi*i*t)
    for odd i and cos(2*pi*i*t) for even i."""
    ts = np.asarray(t, dtype=float)
    if i == 0:
        return np.full_like(ts, 1.0 / np.sqrt(2.0))
    arg = 2.0 * np.pi * i * ts
    return np.sin(arg) if i % 2 == 1 else np.cos(arg)


def weight_series(batch: int) -> np.ndarray:
    """Planted slope-field weights: i/120 for the first batch and
    -sqrt(sin(i/60))/2 for the second, i = 1..20."""
    i = np.arange(1, N_WEIGHT_TERMS + 1, dtype=float)
    if batch == 1:
        return i / 120.0
    return -0.5 * np.sqrt(np.sin(i / 60.0))


def sphere_mu0(t: float) -> ManifoldPoint:
    """Base curve Exp((0,0,1), (sin(t*pi/2)^2, sin(t*pi)^3, 0))."""
    pole = ManifoldPoint(np.array([0.0, 0.0, 1.0]))
    v = np.array([np.sin(t * np.pi / 2.0) ** 2, np.sin(t * np.pi) ** 3, 0.0])
    return exp_map(S2, pole, TangentVector(pole, v))


def rotate_to_tangent(p: ManifoldPoint, v_raw) -> TangentVector:
    """Norm-preserving projection: project v onto T_p then rescale to |v|."""
    v = np.asarray(v_raw, dtype=float)
    w = v - np.dot(p.coords, v) * p.coords
    nw = np.linalg.norm(w)
    if nw < 1e-12:
        raise ParallelVector("vector has no component tangent to the base point")
    return TangentVector(p, w * (np.linalg.norm(v) / nw))


def sphere_beta(t: float, batch: int, mu0: Optional[ManifoldPoint] = None) -> TangentVector:
    """Planted slope field for one batch, tangent at mu0(t)."""
    p = mu0 if mu0 is not None else sphere_mu0(t)
    w = weight_series(batch)
    raw = np.zeros(3)
    for idx, i in enumerate(range(1, N_WEIGHT_TERMS + 1)):
        raw += w[idx] * np.array(
            [fourier_term(i, t), fourier_term(i, (t + 1) / 2.0), fourier_term(i, (t + 2) / 2.0)]
        )
    return rotate_to_tangent(p, raw)


@dataclass(frozen=True)
class SphereScenario:
    m1: int = 15
    m2: int = 15
    n_points: int = 20
    seed: int = 0
    thetas: tuple = THETA_TRIPLE

    def __post_init__(self):
        if self.n_points < 2 or self.m1 < 0 or self.m2 < 0 or self.m1 + self.m2 < 1:
            raise ValueError("need n_points >= 2 and at least one curve")


def gp_draws(times: np.ndarray, thetas, rng) -> np.ndarray:
    """One zero-mean draw per kernel over the grid; shape (len(thetas), N).

    Exact sampler: triangular factor of the planted gram (noise included)
    times standard normals, with 1e-10 jitter.
    """
    n = len(times)
    out = np.empty((len(thetas), n))
    for d, theta in enumerate(thetas):
        xi = rng.standard_normal(n)
        K = gram(theta, times, noise=True)
        if np.max(np.diag(K)) <= 0.0:
            out[d] = 0.0  # identically zero kernel: no residual field
            continue
        out[d] = np.linalg.cholesky(K + 1e-10 * np.eye(n)) @ xi
    return out


def sphere_mean_structure_curve(times: np.ndarray, u) -> np.ndarray:
    """Mean-structure curve Exp(mu0(t), u1*beta1(t) + u2*beta2(t))."""
    out = np.empty((len(times), 3))
    for i, t in enumerate(times):
        p = sphere_mu0(t)
        tang = np.zeros(3)
        for j, uj in enumerate(u):
            if uj != 0.0:
                tang += uj * sphere_beta(t, j + 1, p).vec
        out[i] = exp_map(S2, p, TangentVector(p, tang)).coords
    return out


def generate_sphere_dataset(scn: SphereScenario) -> CurveDataset:
    """Two-batch dataset with covariates (1,0) and (1,1); deterministic in
    the scenario seed, with per-curve derived substreams."""
    times = np.linspace(0.0, 1.0, scn.n_points)
    m_total = scn.m1 + scn.m2
    u = np.array([[1.0, 0.0]] * scn.m1 + [[1.0, 1.0]] * scn.m2)
    means = {
        0: sphere_mean_structure_curve(times, [1.0, 0.0]),
        1: sphere_mean_structure_curve(times, [1.0, 1.0]),
    }
    streams = np.random.SeedSequence(scn.seed).spawn(m_total)
    coords = np.empty((m_total, scn.n_points, 3))
    for m in range(m_total):
        rng = np.random.default_rng(streams[m])
        base = means[0] if m < scn.m1 else means[1]
        draws = gp_draws(times, scn.thetas, rng)  # (3, N)
        for i in range(scn.n_points):
            p = ManifoldPoint(base[i])
            tang = _project(S2, p.coords, draws[:, i])
            coords[m, i] = exp_map(S2, p, TangentVector(p, tang)).coords
    return CurveDataset(S2, times, coords, u)


# ---------------------------------------------------------------------------
# shape space
# ---------------------------------------------------------------------------

SHAPE_LANDMARKS = 80


@dataclass(frozen=True)
class ShapeScenario:
    curves_per_batch: int = 5
    n_points: int = 10
    seed: int = 0
    u: tuple = ((0.0, 0.0), (1.0, 2.0))
    # planted residual kernels: the sphere triple cycled over dimensions,
    # variances scaled down so the aggregate 160-dim tangent norm stays in
    # the same regime as the 3-dim sphere study
    theta_scale: float = 3.0 / (2 * SHAPE_LANDMARKS)

    def __post_init__(self):
        if self.n_points < 2 or self.curves_per_batch < 1:
            raise ValueError("need n_points >= 2 and at least one curve per batch")


def shape_mu0_raw(t: float) -> np.ndarray:
    """Raw 80-landmark configuration before preshape normalization."""
    z = np.arange(1, SHAPE_LANDMARKS + 1, dtype=float)
    c = z / 20.0 - 1.0
    inner = c**2 + (1.0 - c**2) * (1.0 - t / 2.0) ** 2
    y = np.sqrt(np.maximum(inner, 0.0))
    upper = z <= 40
    re = np.where(upper, c, 1.0 - z / 20.0)
    im = np.where(upper, y, -y)
    return re + 1j * im


def shape_mu0(t: float) -> ManifoldPoint:
    return preshape(shape_mu0_raw(t))


def _shape_direction() -> np.ndarray:
    """Fixed centered unit complex direction used to broadcast the scalar
    tangent expressions over landmarks."""
    z = np.exp(2j * np.pi * np.arange(1, SHAPE_LANDMARKS + 1) / SHAPE_LANDMARKS)
    z = z - z.mean()
    return _from_complex(z / np.linalg.norm(z))


def shape_mean_structure_curve(times: np.ndarray, u, batch: int) -> np.ndarray:
    """Batch mean curves: tangent magnitude sum_p u_p sin(t)^3 sin(r(t)),
    with an extra cos(r(t)) factor in the second batch; r is the 1-based
    rank of t in the grid."""
    kind = KendallShape(SHAPE_LANDMARKS)
    direction = _shape_direction()
    out = np.empty((len(times), 2 * SHAPE_LANDMARKS))
    for i, t in enumerate(times):
        r = float(i + 1)
        scalar = np.sum(np.asarray(u)) * np.sin(t) ** 3 * np.sin(r)
        if batch == 2:
            scalar *= np.cos(r)
        p = shape_mu0(t)
        tang = _project(kind, p.coords, scalar * direction)
        out[i] = exp_map(kind, p, TangentVector(p, tang)).coords
    return out


def shape_thetas(scale: float) -> list[KernelHyperparams]:
    """Per-dimension planted kernels for the 2k tangent coordinates."""
    out = []
    for d in range(2 * SHAPE_LANDMARKS):
        t = THETA_TRIPLE[d % 3]
        out.append(
            KernelHyperparams(
                t.v0 * scale, t.w0, t.a0 * scale, t.a1 * scale, t.sigma * np.sqrt(scale)
            )
        )
    return out


def generate_shape_dataset(scn: ShapeScenario) -> CurveDataset:
    """Two batches of shape curves on an open-interval uniform grid."""
    kind = KendallShape(SHAPE_LANDMARKS)
    n = scn.n_points
    times = np.arange(1, n + 1, dtype=float) / (n + 1)
    m_total = 2 * scn.curves_per_batch
    u = np.array(
        [scn.u[0]] * scn.curves_per_batch + [scn.u[1]] * scn.curves_per_batch
    )
    means = {
        1: shape_mean_structure_curve(times, scn.u[0], 1),
        2: shape_mean_structure_curve(times, scn.u[1], 2),
    }
    thetas = shape_thetas(scn.theta_scale)
    streams = np.random.SeedSequence(scn.seed).spawn(m_total)
    coords = np.empty((m_total, n, 2 * SHAPE_LANDMARKS))
    for m in range(m_total):
        rng = np.random.default_rng(streams[m])
        base = means[1] if m < scn.curves_per_batch else means[2]
        draws = gp_draws(times, thetas, rng)  # (2k, N)
        for i in range(n):
            p = ManifoldPoint(base[i])
            tang = _project(kind, p.coords, draws[:, i])
            coords[m, i] = exp_map(kind, p, TangentVector(p, tang)).coords
    return CurveDataset(kind, times, coords, u)
