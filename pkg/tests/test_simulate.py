import numpy as np
import pytest

from wgpfr.data import CurveDataset, make_split, split_test_indices
from wgpfr.errors import ConfigInvalid, DimensionMismatch, GridMismatch, ParallelVector
from wgpfr.gp import KernelHyperparams, kernel_eval
from wgpfr.geometry import KendallShape, ManifoldPoint, Sphere, dist, point, tangent_residual
from wgpfr.simulate import (
    ShapeScenario,
    SphereScenario,
    generate_shape_dataset,
    generate_sphere_dataset,
    gp_draws,
    rotate_to_tangent,
    shape_mean_structure_curve,
    shape_mu0,
    shape_mu0_raw,
    sphere_mean_structure_curve,
    sphere_mu0,
    weight_series,
)

S2 = Sphere(3)


class TestSphereMu0:
    def test_t0_is_pole(self):
        np.testing.assert_allclose(sphere_mu0(0.0).coords, [0, 0, 1], atol=1e-15)

    def test_t1_hand_value(self):
        np.testing.assert_allclose(
            sphere_mu0(1.0).coords, [np.sin(1.0), 0.0, np.cos(1.0)], atol=1e-12
        )

    def test_t_half(self):
        v = np.array([0.5, 1.0, 0.0])
        nv = np.linalg.norm(v)
        expected = np.cos(nv) * np.array([0, 0, 1.0]) + np.sin(nv) * v / nv
        np.testing.assert_allclose(sphere_mu0(0.5).coords, expected, atol=1e-12)

    def test_continuity(self):
        ts = np.linspace(0, 1, 101)
        pts = np.array([sphere_mu0(t).coords for t in ts])
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        assert steps.max() < 0.06


class TestRotateToTangent:
    def test_already_tangent_unchanged(self, rng):
        p = point(S2, [0.0, 0.0, 1.0])
        v = np.array([0.3, -0.2, 0.0])
        got = rotate_to_tangent(p, v)
        np.testing.assert_allclose(got.vec, v, atol=1e-14)

    def test_hand_value(self):
        p = point(S2, [0.0, 0.0, 1.0])
        got = rotate_to_tangent(p, [1.0, 0.0, 1.0])
        np.testing.assert_allclose(got.vec, [np.sqrt(2), 0, 0], atol=1e-14)

    def test_norm_preserved(self, rng):
        for _ in range(1000):
            v = rng.normal(size=3)
            w = rng.normal(size=3)
            p = point(S2, w / np.linalg.norm(w))
            if np.linalg.norm(v - np.dot(p.coords, v) * p.coords) < 1e-9:
                continue
            got = rotate_to_tangent(p, v)
            assert abs(got.norm() - np.linalg.norm(v)) < 1e-12

    def test_parallel_vector_raises(self):
        p = point(S2, [0.0, 0.0, 1.0])
        with pytest.raises(ParallelVector):
            rotate_to_tangent(p, [0.0, 0.0, 2.0])


class TestWeights:
    def test_first_batch_values(self):
        w = weight_series(1)
        assert w[4] == pytest.approx(5.0 / 120.0)
        assert len(w) == 20

    def test_second_batch_values(self):
        w = weight_series(2)
        assert w[0] == pytest.approx(-0.5 * np.sqrt(np.sin(1.0 / 60.0)))


class TestGenerateSphere:
    def test_deterministic_bitwise(self):
        scn = SphereScenario(m1=2, m2=2, n_points=6, seed=99)
        a = generate_sphere_dataset(scn)
        b = generate_sphere_dataset(scn)
        assert np.array_equal(a.coords, b.coords)
        assert np.array_equal(a.times, b.times)

    def test_zero_kernel_gives_exact_mean_structure(self):
        zero = (KernelHyperparams(0, 1, 0, 0, 0),) * 3
        scn = SphereScenario(m1=2, m2=2, n_points=5, seed=1, thetas=zero)
        ds = generate_sphere_dataset(scn)
        mean1 = sphere_mean_structure_curve(ds.times, [1.0, 0.0])
        mean2 = sphere_mean_structure_curve(ds.times, [1.0, 1.0])
        np.testing.assert_allclose(ds.coords[0], mean1, atol=1e-12)
        np.testing.assert_allclose(ds.coords[1], mean1, atol=1e-12)
        np.testing.assert_allclose(ds.coords[2], mean2, atol=1e-12)

    def test_covariates(self):
        ds = generate_sphere_dataset(SphereScenario(m1=1, m2=2, n_points=4, seed=0))
        np.testing.assert_allclose(ds.u, [[1, 0], [1, 1], [1, 1]])

    def test_points_on_manifold_and_residuals_tangent(self):
        ds = generate_sphere_dataset(SphereScenario(m1=2, m2=2, n_points=6, seed=5))
        norms = np.linalg.norm(ds.coords, axis=2)
        np.testing.assert_allclose(norms, 1.0, atol=1e-10)
        mean1 = sphere_mean_structure_curve(ds.times, [1.0, 0.0])
        from wgpfr.geometry import log_map

        for i in range(ds.n_times):
            base = ManifoldPoint(mean1[i])
            v = log_map(S2, base, ds.point(0, i))
            assert tangent_residual(S2, base, v.vec) < 1e-10

    def test_monte_carlo_covariance_matches_kernel(self):
        times = np.linspace(0, 1, 4)
        theta = KernelHyperparams(0.5, 0.3, 0.05, 0.2, 0.1)
        rng = np.random.default_rng(7)
        n_draws = 2000
        draws = np.array([gp_draws(times, [theta], rng)[0] for _ in range(n_draws)])
        i, j = 1, 3
        sample_cov = np.mean(draws[:, i] * draws[:, j])
        truth = kernel_eval(theta, times[i], times[j], same_index=False)
        kii = kernel_eval(theta, times[i], times[i], same_index=True)
        kjj = kernel_eval(theta, times[j], times[j], same_index=True)
        se = np.sqrt((kii * kjj + truth**2) / n_draws)
        assert abs(sample_cov - truth) < 3 * se
        var_i = np.var(draws[:, i])
        se_var = kii * np.sqrt(2.0 / n_draws)
        assert abs(var_i - kii) < 3 * se_var


class TestShape:
    def test_raw_landmark_hand_value(self):
        raw = shape_mu0_raw(0.0)
        assert raw[19] == pytest.approx(0.0 + 1.0j)

    def test_mu0_is_preshape(self):
        for t in (0.0, 0.3, 0.9):
            p = shape_mu0(t)
            z = p.coords[0::2] + 1j * p.coords[1::2]
            assert abs(z.mean()) < 1e-10
            assert abs(np.linalg.norm(z) - 1) < 1e-10

    def test_zero_covariate_mean_equals_mu0(self):
        times = np.arange(1, 5, dtype=float) / 5
        curve = shape_mean_structure_curve(times, (0.0, 0.0), 1)
        for i, t in enumerate(times):
            assert dist(KendallShape(80), ManifoldPoint(curve[i]), shape_mu0(t)) < 1e-12

    def test_generated_dataset_invariants(self):
        ds = generate_shape_dataset(ShapeScenario(curves_per_batch=2, n_points=4, seed=3))
        assert ds.coords.shape == (4, 4, 160)
        for m in range(4):
            for i in range(4):
                z = ds.coords[m, i, 0::2] + 1j * ds.coords[m, i, 1::2]
                assert abs(z.mean()) < 1e-10
                assert abs(np.linalg.norm(z) - 1) < 1e-10

    def test_deterministic(self):
        scn = ShapeScenario(curves_per_batch=2, n_points=3, seed=11)
        assert np.array_equal(
            generate_shape_dataset(scn).coords, generate_shape_dataset(scn).coords
        )


class TestCurveDataset:
    def test_validates_norms(self):
        times = np.array([0.0, 1.0])
        bad = np.ones((1, 2, 3))
        with pytest.raises(DimensionMismatch):
            CurveDataset(S2, times, bad, np.array([[1.0]]))

    def test_validates_grid(self):
        coords = np.zeros((1, 2, 3))
        coords[..., 2] = 1.0
        with pytest.raises(GridMismatch):
            CurveDataset(S2, np.array([0.5, 0.2]), coords, np.array([[1.0]]))

    def test_gp_inputs_default_to_times(self):
        ds = generate_sphere_dataset(SphereScenario(m1=1, m2=1, n_points=4, seed=0))
        np.testing.assert_allclose(ds.gp_inputs(0)[:, 0], ds.times)


class TestSplits:
    def test_type2_holds_out_last_five(self):
        idx = split_test_indices("type2", 20)
        np.testing.assert_array_equal(idx, [15, 16, 17, 18, 19])

    def test_type3_holds_out_last_fifteen(self):
        idx = split_test_indices("type3", 20)
        np.testing.assert_array_equal(idx, np.arange(5, 20))

    def test_type1_random_without_replacement(self):
        idx = split_test_indices("type1", 20, rng=4)
        assert len(idx) == 15
        assert len(set(idx.tolist())) == 15

    def test_short_long_rules(self):
        np.testing.assert_array_equal(split_test_indices("short", 100), np.arange(50, 60))
        np.testing.assert_array_equal(split_test_indices("long", 100), np.arange(50, 100))

    def test_unknown_split(self):
        with pytest.raises(ConfigInvalid):
            split_test_indices("type9", 20)

    def test_make_split_partitions_target(self):
        ds = generate_sphere_dataset(SphereScenario(m1=2, m2=2, n_points=20, seed=0))
        masked, test_idx = make_split(ds, "type1", target=1, rng=3)
        mask = masked.observed()
        assert not mask[1, test_idx].any()
        train_idx = np.flatnonzero(mask[1])
        assert np.intersect1d(train_idx, test_idx).size == 0
        assert train_idx.size + test_idx.size == ds.n_times
        assert mask[0].all() and mask[2].all() and mask[3].all()
