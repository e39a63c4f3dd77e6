"""Closed-form Riemannian operations on the unit sphere and Kendall's planar shape space.

Points are kept in ambient coordinates: R^{n+1} for S^n, and R^{2k}
(interleaved real/imaginary landmark parts) for shape configurations.
Shape tangent vectors live in the centered subspace with the complex
component along the base point removed, so distances and exp/log
roundtrips are rotation-invariant without extra quotient bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import (
    AntipodalPoints,
    DegenerateConfiguration,
    DimensionMismatch,
    NotTangent,
)

# Tolerances, chosen so guards trigger before catastrophic cancellation.
POINT_TOL = 1e-10
BASE_MATCH_TOL = 1e-12
TANGENT_TOL = 1e-8
ZERO_VEC_TOL = 1e-14
ANTIPODAL_TOL = 1e-10


@dataclass(frozen=True)
class Sphere:
    """Unit sphere S^{n-1} embedded in R^n (``ambient_dim`` = n >= 3)."""

    ambient_dim: int

    def __post_init__(self):
        if self.ambient_dim < 3:
            raise DimensionMismatch(f"sphere ambient_dim must be >= 3, got {self.ambient_dim}")


@dataclass(frozen=True)
class KendallShape:
    """Planar shape space of ``landmarks`` >= 3 points, points stored in R^{2k}."""

    landmarks: int

    def __post_init__(self):
        if self.landmarks < 3:
            raise DimensionMismatch(f"shape space needs >= 3 landmarks, got {self.landmarks}")

    @property
    def ambient_dim(self) -> int:
        return 2 * self.landmarks


ManifoldKind = Union[Sphere, KendallShape]


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """Ambient-coordinate point; use :func:`point` to build a validated one."""

    coords: np.ndarray


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Ambient vector attached to ``base``, constrained to the tangent space."""

    base: ManifoldPoint
    vec: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))


def ambient_dim(kind: ManifoldKind) -> int:
    return kind.ambient_dim


def _as_complex(coords: np.ndarray) -> np.ndarray:
    return coords[0::2] + 1j * coords[1::2]


def _from_complex(z: np.ndarray) -> np.ndarray:
    out = np.empty(2 * z.shape[0])
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def _check_len(kind: ManifoldKind, arr: np.ndarray, what: str) -> None:
    if arr.ndim != 1 or arr.shape[0] != kind.ambient_dim:
        raise DimensionMismatch(
            f"{what} has shape {arr.shape}, expected ({kind.ambient_dim},)"
        )


def check_point(kind: ManifoldKind, coords: np.ndarray, tol: float = POINT_TOL) -> None:
    """Raise unless ``coords`` satisfies the point invariants of ``kind``."""
    _check_len(kind, coords, "point")
    nrm = np.linalg.norm(coords)
    if abs(nrm - 1.0) > tol:
        raise DimensionMismatch(f"point norm {nrm} deviates from 1 beyond {tol}")
    if isinstance(kind, KendallShape):
        z = _as_complex(coords)
        if abs(z.mean()) > tol:
            raise DimensionMismatch(f"shape centroid {z.mean()} not zero within {tol}")


def point(kind: ManifoldKind, coords) -> ManifoldPoint:
    """Validated point constructor (copies the input)."""
    arr = np.asarray(coords, dtype=float).copy()
    check_point(kind, arr)
    return ManifoldPoint(arr)


def tangent_residual(kind: ManifoldKind, p: ManifoldPoint, vec: np.ndarray) -> float:
    """Norm of the component of ``vec`` outside T_p M."""
    return float(np.linalg.norm(vec - _project(kind, p.coords, vec)))


def _project(kind: ManifoldKind, p: np.ndarray, w: np.ndarray) -> np.ndarray:
    if isinstance(kind, Sphere):
        return w - np.dot(p, w) * p
    zp = _as_complex(p)
    zw = _as_complex(w)
    zw = zw - zw.mean()
    zw = zw - zp * np.vdot(zp, zw)
    return _from_complex(zw)


def tangent_project(kind: ManifoldKind, p: ManifoldPoint, w) -> TangentVector:
    """Orthogonal projection of an ambient vector onto T_p M.

    Sphere: w - (p.w) p.  Shape: recenter, then remove the complex
    component along the base point.  Idempotent and self-adjoint.
    """
    arr = np.asarray(w, dtype=float)
    _check_len(kind, arr, "vector")
    return TangentVector(p, _project(kind, p.coords, arr))


def _require_tangent(kind: ManifoldKind, p: ManifoldPoint, v: TangentVector) -> np.ndarray:
    if v.vec.shape != p.coords.shape:
        raise DimensionMismatch(
            f"tangent length {v.vec.shape} does not match point {p.coords.shape}"
        )
    if np.max(np.abs(v.base.coords - p.coords)) > BASE_MATCH_TOL:
        raise NotTangent("tangent vector is based at a different point")
    if tangent_residual(kind, p, v.vec) > TANGENT_TOL:
        raise NotTangent("vector violates the tangent constraint beyond 1e-8")
    return v.vec


def exp_map(kind: ManifoldKind, p: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    """Geodesic endpoint gamma(1) with gamma(0)=p, gamma'(0)=v.

    For both supported manifolds the ambient formula is
    cos(|v|) p + sin(|v|) v/|v|; the result is renormalized (and, for
    shapes, recentered) to absorb floating-point drift.
    """
    _check_len(kind, p.coords, "point")
    vec = _require_tangent(kind, p, v)
    nrm = np.linalg.norm(vec)
    if nrm < ZERO_VEC_TOL:
        return p
    out = np.cos(nrm) * p.coords + np.sin(nrm) * (vec / nrm)
    if isinstance(kind, KendallShape):
        z = _as_complex(out)
        z = z - z.mean()
        out = _from_complex(z)
    out /= np.linalg.norm(out)
    return ManifoldPoint(out)


def _sphere_angle(p: np.ndarray, q: np.ndarray):
    """Angle between unit vectors plus the residual direction q - cos(angle) p.

    Uses atan2 of the residual norm rather than arccos of the clamped dot
    product, which stays accurate down to ~1e-15 for nearly equal points.
    """
    c = np.clip(np.dot(p, q), -1.0, 1.0)
    u = q - c * p
    theta = float(np.arctan2(np.linalg.norm(u), c))
    return theta, c, u


def _shape_angle(zp: np.ndarray, zq: np.ndarray):
    """Aligned angle on shape space plus the horizontal residual at zp."""
    h = np.vdot(zp, zq)
    c = min(abs(h), 1.0)
    za = zq / (h / abs(h)) if abs(h) > 0 else zq
    u = za - c * zp
    theta = float(np.arctan2(np.linalg.norm(u), c))
    return theta, u


def dist(kind: ManifoldKind, p: ManifoldPoint, q: ManifoldPoint) -> float:
    """Geodesic distance: arccos(p.q) on the sphere, arccos|<p,q>| on shapes."""
    _check_len(kind, p.coords, "point p")
    _check_len(kind, q.coords, "point q")
    if isinstance(kind, Sphere):
        return _sphere_angle(p.coords, q.coords)[0]
    theta, _ = _shape_angle(_as_complex(p.coords), _as_complex(q.coords))
    return theta


def log_map(kind: ManifoldKind, p: ManifoldPoint, q: ManifoldPoint) -> TangentVector:
    """Inverse of exp_map at p; ``|log_map(p, q)| == dist(p, q)``.

    On the sphere the map is undefined for antipodal pairs.  On shape
    space the representative of q is first rotated to align with p, so
    exp_map(p, log_map(p, q)) lands on q's orbit.  For q on p's orbit
    the zero vector is returned.
    """
    _check_len(kind, p.coords, "point p")
    _check_len(kind, q.coords, "point q")
    if isinstance(kind, Sphere):
        if np.dot(p.coords, q.coords) <= -1.0 + ANTIPODAL_TOL:
            raise AntipodalPoints("log map undefined for antipodal sphere points")
        theta, _, u = _sphere_angle(p.coords, q.coords)
        nu = np.linalg.norm(u)
        if nu < ZERO_VEC_TOL:
            return TangentVector(p, np.zeros_like(p.coords))
        return TangentVector(p, u * (theta / nu))
    theta, u = _shape_angle(_as_complex(p.coords), _as_complex(q.coords))
    nu = np.linalg.norm(u)
    if theta < ZERO_VEC_TOL or nu < ZERO_VEC_TOL:
        return TangentVector(p, np.zeros_like(p.coords))
    return TangentVector(p, _from_complex(u) * (theta / nu))


def preshape(raw_landmarks) -> ManifoldPoint:
    """Center a complex landmark configuration and scale it to unit norm."""
    z = np.asarray(raw_landmarks, dtype=complex)
    if z.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d complex configuration, got shape {z.shape}")
    z = z - z.mean()
    nrm = np.linalg.norm(z)
    if nrm < 1e-12:
        raise DegenerateConfiguration("landmarks coincide after centering")
    return ManifoldPoint(_from_complex(z / nrm))


def project_to_manifold(kind: ManifoldKind, coords) -> ManifoldPoint:
    """Nearest-point retraction of an arbitrary ambient vector onto the manifold."""
    arr = np.asarray(coords, dtype=float)
    _check_len(kind, arr, "vector")
    if isinstance(kind, KendallShape):
        return preshape(_as_complex(arr))
    nrm = np.linalg.norm(arr)
    if nrm < 1e-12:
        raise DegenerateConfiguration("cannot project the zero vector to the sphere")
    return ManifoldPoint(arr / nrm)
