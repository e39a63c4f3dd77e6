import itertools

import numpy as np
import pytest

from helpers import random_sphere_point
from wgpfr.errors import EmptyCurve, LengthMismatch
from wgpfr.geometry import ManifoldPoint, Sphere, dist
from wgpfr.gp import GPPosterior, KernelHyperparams, log_pointwise_predictive_density
from wgpfr.metrics import EvalReport, discrete_frechet, rmse_chordal

S2 = Sphere(3)


def brute_force_dfd(a, b):
    """Enumerate every monotone coupling explicitly (tiny curves only)."""
    na, nb = len(a), len(b)
    best = [np.inf]

    def walk(i, j, worst):
        worst = max(worst, np.linalg.norm(a[i] - b[j]))
        if worst >= best[0]:
            return
        if i == na - 1 and j == nb - 1:
            best[0] = worst
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            ni, nj = i + di, j + dj
            if ni < na and nj < nb:
                walk(ni, nj, worst)

    walk(0, 0, 0.0)
    return best[0]


class TestRmse:
    def test_identical_is_zero(self, rng):
        pts = rng.normal(size=(5, 3))
        assert rmse_chordal(pts, pts.copy()) == 0.0

    def test_single_pair_hand_value(self):
        got = rmse_chordal(np.array([[0.0, 0, 1]]), np.array([[1.0, 0, 0]]))
        assert got == pytest.approx(np.sqrt(2), abs=1e-15)

    def test_joint_permutation_invariance(self, rng):
        a = rng.normal(size=(6, 3))
        b = rng.normal(size=(6, 3))
        perm = rng.permutation(6)
        assert rmse_chordal(a, b) == pytest.approx(rmse_chordal(a[perm], b[perm]), abs=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            rmse_chordal(np.zeros((2, 3)), np.zeros((3, 3)))

    def test_chord_never_exceeds_arc(self, rng):
        pred = [random_sphere_point(rng) for _ in range(40)]
        truth = [random_sphere_point(rng) for _ in range(40)]
        chord = rmse_chordal(pred, truth)
        arc = np.sqrt(np.mean([dist(S2, p, q) ** 2 for p, q in zip(pred, truth)]))
        assert chord <= arc + 1e-12


class TestDiscreteFrechet:
    def test_identical_curves(self, rng):
        c = rng.normal(size=(5, 2))
        assert discrete_frechet(c, c.copy()) == 0.0

    def test_single_point_against_curve(self, rng):
        a = rng.normal(size=(1, 2))
        b = rng.normal(size=(6, 2))
        expected = max(np.linalg.norm(a[0] - q) for q in b)
        assert discrete_frechet(a, b) == pytest.approx(expected, abs=1e-14)

    def test_matches_exhaustive_enumeration(self, rng):
        for _ in range(60):
            na, nb = rng.integers(1, 5), rng.integers(1, 5)
            a = rng.normal(size=(na, 2))
            b = rng.normal(size=(nb, 2))
            assert discrete_frechet(a, b) == pytest.approx(brute_force_dfd(a, b), abs=1e-12)

    def test_symmetric(self, rng):
        a = rng.normal(size=(4, 2))
        b = rng.normal(size=(7, 2))
        assert discrete_frechet(a, b) == pytest.approx(discrete_frechet(b, a), abs=1e-14)

    def test_endpoint_lower_bound(self, rng):
        a = rng.normal(size=(5, 2))
        b = rng.normal(size=(6, 2))
        got = discrete_frechet(a, b)
        assert got >= np.linalg.norm(a[0] - b[0]) - 1e-14
        assert got >= np.linalg.norm(a[-1] - b[-1]) - 1e-14

    def test_geodesic_metric(self, rng):
        a = [random_sphere_point(rng) for _ in range(3)]
        b = [random_sphere_point(rng) for _ in range(3)]
        chordal = discrete_frechet(a, b)
        geo = discrete_frechet(a, b, metric="geodesic", kind=S2)
        assert geo >= chordal - 1e-12

    def test_empty_curve(self):
        with pytest.raises(EmptyCurve):
            discrete_frechet(np.zeros((0, 2)), np.zeros((3, 2)))


class TestLppdPieces:
    def test_two_dim_toy_matches_manual_sum(self, rng):
        theta = KernelHyperparams(0.5, 0.3, 0.1, 0.05, 0.2)
        X = rng.uniform(size=5)
        posts = [GPPosterior.fit(X, rng.normal(size=5), theta) for _ in range(2)]
        Xs = rng.uniform(size=3)
        zs = rng.normal(size=(3, 2))
        total = sum(
            log_pointwise_predictive_density(posts[d], Xs, zs[:, d], var_floor=1e-12)
            for d in range(2)
        )
        manual = 0.0
        from wgpfr.gp import gp_predict

        for d in range(2):
            mean, cov = gp_predict(posts[d], Xs)
            var = np.maximum(np.diag(cov), 0.0) + theta.sigma**2
            manual += np.sum(
                -0.5 * np.log(2 * np.pi * var) - (zs[:, d] - mean) ** 2 / (2 * var)
            )
        assert total == pytest.approx(manual, abs=1e-10)

    def test_zero_variance_guarded_finite(self):
        theta = KernelHyperparams(1.0, 0.5, 0.0, 0.0, 0.0)
        post = GPPosterior.fit([0.5], [1.0], theta)
        got = log_pointwise_predictive_density(post, [0.5], [1.0], var_floor=1e-12)
        assert np.isfinite(got)


class TestEvalReport:
    def test_json_round_trip_fields(self):
        rep = EvalReport(rmse=0.1, lppd=-3.5, dfd=0.2, n_test=7)
        import json

        doc = json.loads(rep.to_json())
        assert doc == {"rmse": 0.1, "lppd": -3.5, "dfd": 0.2, "n_test": 7}

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            EvalReport(rmse=-0.1, lppd=0.0, dfd=0.0, n_test=1)
        with pytest.raises(ValueError):
            EvalReport(rmse=0.1, lppd=0.0, dfd=0.0, n_test=0)
