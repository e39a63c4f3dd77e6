"""Mean-structure estimation: tangent residuals, basis design, least squares.

The slope field for covariate j is expanded over tangent-valued basis
functions built as projected ambient coordinate frames times scalar
Fourier functions, so every fitted field is automatically tangent to the
mean curve.  The coefficient matrix solves a Kronecker-structured least
squares problem; the normal equations are assembled factor-wise and never
materialize the full design.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import RankDeficientWarning
from .geometry import (
    ManifoldKind,
    ManifoldPoint,
    TangentVector,
    _project,
    exp_map,
    log_map,
)

RIDGE = 1e-8
RANK_TOL = 1e-20  # on normal-matrix eigenvalues, i.e. (1e-10)^2 on singular values


@dataclass(frozen=True)
class BasisSystem:
    """Scalar Fourier family: 1/sqrt(2), then sin(2*pi*i*t) for odd i and
    cos(2*pi*i*t) for even i."""

    k_scalar: int = 5

    def __post_init__(self):
        if self.k_scalar < 1:
            raise ValueError("need at least one scalar basis function")

    def values(self, t) -> np.ndarray:
        """Evaluate all scalar functions at t; shape (..., k_scalar)."""
        ts = np.asarray(t, dtype=float)
        out = np.empty(ts.shape + (self.k_scalar,))
        out[..., 0] = 1.0 / np.sqrt(2.0)
        for i in range(1, self.k_scalar):
            arg = 2.0 * np.pi * i * ts
            out[..., i] = np.sin(arg) if i % 2 == 1 else np.cos(arg)
        return out


def coords_of(curve) -> np.ndarray:
    """Accept a list of ManifoldPoints or a coordinate array; return (N, d0)."""
    if isinstance(curve, np.ndarray):
        return curve
    return np.asarray([p.coords for p in curve])


@dataclass(frozen=True)
class MeanStructure:
    """Fitted mean model: base curve mu0 on the shared grid plus the slope
    coefficient matrix B (p x K, K = k_scalar * d0)."""

    kind: ManifoldKind
    times: np.ndarray
    mu0: np.ndarray  # (N, d0) ambient coordinates
    B: np.ndarray  # (p, K)
    basis: BasisSystem

    def mu0_point(self, i: int) -> ManifoldPoint:
        return ManifoldPoint(self.mu0[i])

    @property
    def n_times(self) -> int:
        return self.mu0.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.mu0.shape[1]


def projection_matrices(kind: ManifoldKind, mu0: np.ndarray) -> np.ndarray:
    """Tangent-projection matrix at every curve point; shape (N, d0, d0)."""
    n, d0 = mu0.shape
    eye = np.eye(d0)
    out = np.empty((n, d0, d0))
    for i in range(n):
        p = ManifoldPoint(mu0[i])
        for d in range(d0):
            out[i, :, d] = _project(kind, p.coords, eye[d])
    return out


def log_residuals(kind: ManifoldKind, mu0_curve, curves) -> np.ndarray:
    """Tangent coordinates of each observation at the mean curve:
    Vhat[m, i] = Log(mu0(t_i), y_m(t_i)) in ambient coordinates."""
    mu0 = coords_of(mu0_curve)
    ys = np.asarray([coords_of(c) for c in curves])
    m_count, n, d0 = ys.shape
    out = np.empty((m_count, n, d0))
    base_pts = [ManifoldPoint(mu0[i]) for i in range(n)]
    for m in range(m_count):
        for i in range(n):
            out[m, i] = log_map(kind, base_pts[i], ManifoldPoint(ys[m, i])).vec
    return out


def build_tangent_basis(
    kind: ManifoldKind, mu0_curve, basis: BasisSystem, times
) -> np.ndarray:
    """Design matrix Phi of shape (N*d0, k_scalar*d0).

    Row (i, d') and column (j, d) hold phi_j(t_i) * P_i[d', d] with P_i the
    tangent projection at mu0(t_i): column (j, d) is the d-th coordinate
    frame projected to the tangent space and modulated by phi_j.
    """
    mu0 = coords_of(mu0_curve)
    n, d0 = mu0.shape
    f = basis.values(np.asarray(times, dtype=float))  # (N, k_scalar)
    proj = projection_matrices(kind, mu0)  # (N, d0, d0)
    blocks = f[:, None, :, None] * proj[:, :, None, :]  # (N, d0, k, d0)
    return blocks.reshape(n * d0, basis.k_scalar * d0)


class KroneckerLstsq:
    """Normal-equation solver for vec(B) over the design (Phi kron U).

    Supports a per-(curve, time) observation mask: unobserved rows are
    dropped from both the normal matrix and the right-hand side.  The
    factorization is cached so repeated solves (mean refits during
    refinement) only pay for a right-hand side.
    """

    def __init__(self, Phi: np.ndarray, U: np.ndarray, mask=None, d0: Optional[int] = None):
        self.Phi = np.asarray(Phi, dtype=float)
        self.U = np.atleast_2d(np.asarray(U, dtype=float))
        self.K = self.Phi.shape[1]
        self.p = self.U.shape[1]
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)
        if self.mask is not None:
            n = self.mask.shape[1]
            self.d0 = self.Phi.shape[0] // n
        else:
            self.d0 = d0 if d0 is not None else 0
        normal = np.kron(self.Phi.T @ self.Phi, self.U.T @ self.U)
        if self.mask is not None and not self.mask.all():
            for m in range(self.mask.shape[0]):
                miss = np.flatnonzero(~self.mask[m])
                if miss.size == 0:
                    continue
                rows = (miss[:, None] * self.d0 + np.arange(self.d0)[None, :]).ravel()
                Pm = self.Phi[rows]
                normal -= np.kron(Pm.T @ Pm, np.outer(self.U[m], self.U[m]))
        self.rank_deficient = False
        eigs = np.linalg.eigvalsh(normal)
        if eigs[0] < max(eigs[-1], 0.0) * RANK_TOL:
            self.rank_deficient = True
            warnings.warn(
                "least-squares design is rank deficient; adding ridge "
                f"{RIDGE:g}",
                RankDeficientWarning,
            )
            normal = normal + RIDGE * np.eye(normal.shape[0])
        try:
            self._factor = cho_factor(normal)
        except np.linalg.LinAlgError:
            if not self.rank_deficient:
                warnings.warn(
                    "normal matrix failed factorization; adding ridge "
                    f"{RIDGE:g}",
                    RankDeficientWarning,
                )
                self.rank_deficient = True
            normal = normal + RIDGE * np.eye(normal.shape[0])
            self._factor = cho_factor(normal)

    def solve(self, Vhat: np.ndarray) -> np.ndarray:
        """Least-squares B (p x K) for the residual tensor Vhat (M, N, d0)."""
        V = np.asarray(Vhat, dtype=float)
        m_count = V.shape[0]
        stacked = V.reshape(m_count, -1).copy()
        if self.mask is not None and not self.mask.all():
            keep = np.repeat(self.mask, self.d0, axis=1)
            stacked[~keep] = 0.0
        G = self.Phi.T @ stacked.T  # (K, M)
        rhs = (G @ self.U).reshape(-1)  # ordering (k, j) -> k*p + j
        vec = cho_solve(self._factor, rhs)
        return vec.reshape(self.K, self.p).T


def fit_B(Vhat, U, Phi, mask=None) -> np.ndarray:
    """One-shot least squares for the slope coefficients."""
    V = np.asarray(Vhat, dtype=float)
    return KroneckerLstsq(Phi, U, mask=mask, d0=V.shape[2]).solve(V)


def slope_fields(ms: MeanStructure) -> np.ndarray:
    """Fitted tangent slope fields beta_j(t_i); shape (p, N, d0)."""
    n, d0 = ms.mu0.shape
    f = ms.basis.values(ms.times)  # (N, k)
    W = ms.B.reshape(ms.B.shape[0], ms.basis.k_scalar, d0)  # (p, k, d0)
    raw = np.einsum("ik,pkd->pid", f, W)
    proj = projection_matrices(ms.kind, ms.mu0)
    return np.einsum("ied,pid->pie", proj, raw)


def mean_curve(ms: MeanStructure, u) -> np.ndarray:
    """Mean-structure curve Exp(mu0(t_i), u.beta(t_i)) for one covariate
    vector; shape (N, d0)."""
    uvec = np.asarray(u, dtype=float)
    n, d0 = ms.mu0.shape
    f = ms.basis.values(ms.times)
    W = (uvec @ ms.B).reshape(ms.basis.k_scalar, d0)
    raw = f @ W  # (N, d0)
    out = np.empty_like(ms.mu0)
    for i in range(n):
        p = ManifoldPoint(ms.mu0[i])
        tang = TangentVector(p, _project(ms.kind, p.coords, raw[i]))
        out[i] = exp_map(ms.kind, p, tang).coords
    return out


def _interp_mu0(ms: MeanStructure, t: float) -> ManifoldPoint:
    times = ms.times
    if t <= times[0]:
        return ms.mu0_point(0)
    if t >= times[-1]:
        return ms.mu0_point(ms.n_times - 1)
    hi = int(np.searchsorted(times, t))
    lo = hi - 1
    if abs(times[lo] - t) < 1e-12:
        return ms.mu0_point(lo)
    lam = (t - times[lo]) / (times[hi] - times[lo])
    p = ms.mu0_point(lo)
    step = log_map(ms.kind, p, ms.mu0_point(hi))
    return exp_map(ms.kind, p, TangentVector(p, lam * step.vec))


def predict_mean(ms: MeanStructure, u, t: float) -> ManifoldPoint:
    """Mean-structure prediction at an arbitrary time.

    On the fitted grid this is Exp(mu0(t_i), proj(u.B.phi(t_i))); off the
    grid, mu0 is geodesically interpolated between bracketing grid points
    (clamped at the ends) and the globally defined Fourier functions are
    evaluated at the requested time.
    """
    uvec = np.asarray(u, dtype=float)
    d0 = ms.ambient_dim
    base = _interp_mu0(ms, float(t))
    f = ms.basis.values(float(t))
    raw = f @ (uvec @ ms.B).reshape(ms.basis.k_scalar, d0)
    tang = TangentVector(base, _project(ms.kind, base.coords, raw))
    return exp_map(ms.kind, base, tang)
