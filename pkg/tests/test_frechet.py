import numpy as np
import pytest

from helpers import random_sphere_point, random_tangent
from wgpfr.errors import AntipodalPoints, EmptyInput, GridMismatch
from wgpfr.frechet import FrechetConfig, frechet_mean_curve, sample_frechet_mean
from wgpfr.geometry import Sphere, TangentVector, dist, exp_map, log_map, point

S2 = Sphere(3)


def sphere_pt(*coords):
    return point(S2, np.array(coords, dtype=float))


def great_circle_grid_argmin(pts, a, b, resolution=0.001):
    """Brute-force oracle: minimize the summed squared distance over the
    great circle through a and b, sampled at `resolution` radians."""
    b_orth = b.coords - np.dot(a.coords, b.coords) * a.coords
    b_orth /= np.linalg.norm(b_orth)
    best, best_obj = None, np.inf
    for alpha in np.arange(0.0, 2 * np.pi, resolution):
        cand = point(S2, np.cos(alpha) * a.coords + np.sin(alpha) * b_orth)
        obj = sum(dist(S2, y, cand) ** 2 for y in pts)
        if obj < best_obj:
            best, best_obj = cand, obj
    return best


class TestSampleFrechetMean:
    def test_identical_points(self):
        p = sphere_pt(0, 0, 1)
        res = sample_frechet_mean(S2, [p, p, p])
        assert res.converged
        np.testing.assert_allclose(res.point.coords, p.coords, atol=1e-12)

    def test_two_point_midpoint_matches_grid_oracle(self):
        a, b = sphere_pt(1, 0, 0), sphere_pt(0, 1, 0)
        res = sample_frechet_mean(S2, [a, b])
        expected = np.array([1, 1, 0]) / np.sqrt(2)
        oracle = great_circle_grid_argmin([a, b], a, b)
        assert np.linalg.norm(oracle.coords - expected) < 1e-3
        np.testing.assert_allclose(res.point.coords, expected, atol=1e-6)

    def test_symmetric_configuration_gives_pole(self):
        colat = 0.6
        pts = [
            exp_map(
                S2,
                sphere_pt(0, 0, 1),
                TangentVector(
                    sphere_pt(0, 0, 1),
                    colat * np.array([np.cos(a), np.sin(a), 0.0]),
                ),
            )
            for a in (0, np.pi / 2, np.pi, 3 * np.pi / 2)
        ]
        res = sample_frechet_mean(S2, pts)
        np.testing.assert_allclose(res.point.coords, [0, 0, 1], atol=1e-6)

    def test_objective_trace_monotone(self, rng):
        pts = [random_sphere_point(rng) for _ in range(8)]
        # spread-out data so several iterations are needed
        res = sample_frechet_mean(S2, pts, FrechetConfig(step_size=0.9))
        trace = np.array(res.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12)

    def test_permutation_invariance(self, rng):
        pts = [random_sphere_point(rng) for _ in range(6)]
        res1 = sample_frechet_mean(S2, pts)
        res2 = sample_frechet_mean(S2, pts[::-1])
        np.testing.assert_allclose(res1.point.coords, res2.point.coords, atol=1e-9)

    def test_gradient_matches_finite_differences(self, rng):
        base = random_sphere_point(rng)
        pts = [
            exp_map(S2, base, random_tangent(S2, base, rng, scale=rng.uniform(0.1, 0.8)))
            for _ in range(5)
        ]
        p = exp_map(S2, base, random_tangent(S2, base, rng, scale=0.3))
        m = len(pts)
        grad = sum(log_map(S2, p, y).vec for y in pts) * (2.0 / m)
        w = random_tangent(S2, p, rng, scale=1.0)
        h = 1e-6

        def fobj(q):
            return sum(dist(S2, y, q) ** 2 for y in pts) / m

        plus = fobj(exp_map(S2, p, TangentVector(p, h * w.vec)))
        minus = fobj(exp_map(S2, p, TangentVector(p, -h * w.vec)))
        fd = (plus - minus) / (2 * h)
        analytic = -np.dot(grad, w.vec)
        assert abs(fd - analytic) < 1e-5 * max(1.0, abs(analytic))

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            sample_frechet_mean(S2, [])

    def test_antipodal_propagates(self):
        pts = [sphere_pt(0, 0, 1), sphere_pt(0, 0, -1)]
        with pytest.raises(AntipodalPoints):
            sample_frechet_mean(S2, pts)

    def test_nonconverged_flag(self, rng):
        pts = [random_sphere_point(rng) for _ in range(8)]
        res = sample_frechet_mean(S2, pts, FrechetConfig(max_iter=1, tol=1e-15))
        assert not res.converged
        assert res.iterations == 1


class TestFrechetMeanCurve:
    def test_single_curve_returned(self, rng):
        curve = [random_sphere_point(rng) for _ in range(4)]
        out = frechet_mean_curve(S2, [curve])
        for got, want in zip(out, curve):
            np.testing.assert_allclose(got.coords, want.coords, atol=1e-9)

    def test_constant_curves_give_constant_mean(self, rng):
        a, b = random_sphere_point(rng), random_sphere_point(rng)
        out = frechet_mean_curve(S2, [[a] * 3, [a] * 3])
        for got in out:
            np.testing.assert_allclose(got.coords, a.coords, atol=1e-9)
        assert b is not None

    def test_two_curves_pointwise_midpoint(self):
        a1, a2 = sphere_pt(1, 0, 0), sphere_pt(0, 1, 0)
        b1, b2 = sphere_pt(0, 0, 1), sphere_pt(0, 1, 0)
        out = frechet_mean_curve(S2, [[a1, b1], [a2, b2]])
        oracle0 = great_circle_grid_argmin([a1, a2], a1, a2)
        oracle1 = great_circle_grid_argmin([b1, b2], b1, b2)
        assert dist(S2, out[0], oracle0) < 2e-3
        assert dist(S2, out[1], oracle1) < 2e-3
        np.testing.assert_allclose(out[0].coords, np.array([1, 1, 0]) / np.sqrt(2), atol=1e-6)

    def test_grid_mismatch(self, rng):
        c = [random_sphere_point(rng) for _ in range(3)]
        with pytest.raises(GridMismatch):
            frechet_mean_curve(
                S2, [c, c], times=np.array([[0.0, 0.5, 1.0], [0.0, 0.6, 1.0]])
            )

    def test_mask_drops_curves(self, rng):
        a, b = sphere_pt(1, 0, 0), sphere_pt(0, 1, 0)
        out = frechet_mean_curve(
            S2, [[a, a], [b, b]], mask=[[True, True], [False, True]]
        )
        np.testing.assert_allclose(out[0].coords, a.coords, atol=1e-9)
        np.testing.assert_allclose(
            out[1].coords, np.array([1, 1, 0]) / np.sqrt(2), atol=1e-6
        )
