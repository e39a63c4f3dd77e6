"""Shared random-object builders for the test suite."""

import numpy as np

from wgpfr.geometry import (
    KendallShape,
    ManifoldPoint,
    Sphere,
    TangentVector,
    point,
    preshape,
    tangent_project,
)


def random_sphere_point(rng, ambient=3):
    v = rng.normal(size=ambient)
    return point(Sphere(ambient), v / np.linalg.norm(v))


def random_shape_point(rng, landmarks=4):
    z = rng.normal(size=landmarks) + 1j * rng.normal(size=landmarks)
    return preshape(z)


def random_point(kind, rng):
    if isinstance(kind, Sphere):
        return random_sphere_point(rng, kind.ambient_dim)
    return random_shape_point(rng, kind.landmarks)


def random_tangent(kind, p, rng, scale=1.0):
    w = rng.normal(size=kind.ambient_dim)
    t = tangent_project(kind, p, w)
    nrm = np.linalg.norm(t.vec)
    if nrm < 1e-12:
        return TangentVector(p, np.zeros(kind.ambient_dim))
    return TangentVector(p, t.vec * (scale / nrm))


def rotate_shape(p: ManifoldPoint, angle: float, kind: KendallShape) -> ManifoldPoint:
    z = p.coords[0::2] + 1j * p.coords[1::2]
    z = z * np.exp(1j * angle)
    out = np.empty_like(p.coords)
    out[0::2] = z.real
    out[1::2] = z.imag
    return ManifoldPoint(out)
