import numpy as np
import pytest

from clay.errors import (
    AntipodalMeans,
    AntipodalPoint,
    DegenerateMean,
    DimensionMismatch,
    ZeroVector,
)
from clay.geometry import (
    Rotation,
    apply_rotation,
    exp_map,
    geodesic_distance,
    householder_align,
    log_map,
    log_map_rows,
    normalize,
    spherical_mean,
)

from oracles import dense_rotation_matrix, random_unit, random_unit_rows


def e(i, d):
    v = np.zeros(d)
    v[i] = 1.0
    return v


class TestNormalize:
    def test_scaling(self):
        np.testing.assert_allclose(normalize([3.0, 4.0]), [0.6, 0.8], atol=1e-15)

    def test_already_unit(self):
        np.testing.assert_allclose(normalize([1.0, 0.0, 0.0]), [1, 0, 0], atol=1e-15)

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            normalize([0.0, 0.0])


class TestSphericalMean:
    def test_two_axes(self):
        mean = spherical_mean(np.array([e(0, 3), e(1, 3)]))
        np.testing.assert_allclose(mean, [1 / np.sqrt(2), 1 / np.sqrt(2), 0], atol=1e-15)

    def test_single_row(self, rng):
        x = random_unit(rng, 8)
        np.testing.assert_allclose(spherical_mean(x[None, :]), x, atol=1e-15)

    def test_antipodal_pair(self):
        with pytest.raises(DegenerateMean):
            spherical_mean(np.array([e(0, 3), -e(0, 3)]))


class TestLogMap:
    def test_reference_point_maps_to_zero(self):
        t = log_map(e(0, 3), e(0, 3))
        assert t.norm == 0.0

    def test_orthogonal_point(self):
        t = log_map(e(0, 2), e(1, 2))
        np.testing.assert_allclose(t.coords, [0.0, np.pi / 2], atol=1e-12)

    def test_small_angle_exact(self):
        # symbolic: log at e1 of (cos a, sin a) is (0, a)
        a = 0.3
        t = log_map(e(0, 2), np.array([np.cos(a), np.sin(a)]))
        np.testing.assert_allclose(t.coords, [0.0, a], atol=1e-12)

    def test_norm_equals_geodesic_distance(self, rng):
        for d in (2, 8, 64):
            mu = random_unit(rng, d)
            for _ in range(50):
                x = random_unit(rng, d)
                if np.dot(x, mu) <= -1 + 1e-6:
                    continue
                t = log_map(mu, x)
                assert abs(t.norm - geodesic_distance(mu, x)) < 1e-6
                assert abs(np.dot(t.coords, mu)) < 1e-5

    def test_antipodal_rejected(self):
        with pytest.raises(AntipodalPoint):
            log_map(e(0, 4), -e(0, 4))

    def test_batch_matches_scalar(self, rng):
        mu = random_unit(rng, 16)
        X = random_unit_rows(rng, 20, 16)
        batch = log_map_rows(mu, X)
        for i in range(20):
            np.testing.assert_allclose(batch[i], log_map(mu, X[i]).coords, atol=1e-12)

    def test_batch_antipodal_rejected(self):
        mu = e(0, 4)
        X = np.vstack([e(1, 4), -mu])
        with pytest.raises(AntipodalPoint):
            log_map_rows(mu, X)


class TestExpMap:
    def test_zero_tangent(self):
        np.testing.assert_allclose(exp_map(e(0, 3), np.zeros(3)), e(0, 3), atol=1e-15)

    def test_quarter_geodesic(self):
        out = exp_map(e(0, 2), np.array([0.0, np.pi / 2]))
        np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-12)

    def test_round_trip(self, rng):
        worst = 0.0
        for _ in range(100):
            d = int(rng.integers(2, 32))
            mu = random_unit(rng, d)
            x = random_unit(rng, d)
            if np.dot(x, mu) <= -0.99:
                continue
            back = exp_map(mu, log_map(mu, x))
            worst = max(worst, float(np.max(np.abs(back - x))))
        assert worst < 1e-6


class TestHouseholderAlign:
    def test_maps_source_to_target_2d(self):
        r = householder_align(e(0, 2), e(1, 2))
        np.testing.assert_allclose(apply_rotation(r, e(0, 2)), e(1, 2), atol=1e-12)

    def test_same_point_is_identity(self, rng):
        x = random_unit(rng, 5)
        r = householder_align(x, x)
        assert r.is_identity
        v = rng.standard_normal(5)
        np.testing.assert_allclose(apply_rotation(r, v), v, atol=1e-15)

    def test_pairwise_inner_products_preserved_2d(self):
        # dense 2x2 oracle for the worked example
        x = np.array([0.6, 0.8])
        y = np.array([0.8, 0.6])
        r = householder_align(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        H = dense_rotation_matrix(r)
        assert abs(x @ y - 0.96) < 1e-12
        assert abs((H @ x) @ (H @ y) - 0.96) < 1e-6
        np.testing.assert_allclose(apply_rotation(r, x), H @ x, atol=1e-12)

    def test_antipodal_means_rejected(self):
        with pytest.raises(AntipodalMeans):
            householder_align(e(0, 3), -e(0, 3))

    def test_alignment_random(self, rng):
        for d in (2, 8, 64):
            for _ in range(20):
                a = random_unit(rng, d)
                b = random_unit(rng, d)
                if np.linalg.norm(a + b) <= 1e-6:
                    continue
                r = householder_align(a, b)
                np.testing.assert_allclose(apply_rotation(r, a), b, atol=1e-6)


class TestApplyRotation:
    def test_identity(self, rng):
        v = rng.standard_normal(6)
        np.testing.assert_allclose(apply_rotation(Rotation.identity(6), v), v, atol=1e-15)

    def test_isometry(self, rng):
        r = householder_align(random_unit(rng, 16), random_unit(rng, 16))
        for _ in range(100):
            x = rng.standard_normal(16)
            assert abs(np.linalg.norm(apply_rotation(r, x)) - np.linalg.norm(x)) < 1e-6

    def test_inner_products_preserved(self, rng):
        r = householder_align(random_unit(rng, 12), random_unit(rng, 12))
        H = dense_rotation_matrix(r)
        for _ in range(50):
            x = rng.standard_normal(12)
            y = rng.standard_normal(12)
            assert abs((H @ x) @ (H @ y) - x @ y) < 1e-6

    def test_rows_match_vectors(self, rng):
        r = householder_align(random_unit(rng, 10), random_unit(rng, 10))
        X = rng.standard_normal((15, 10))
        batch = apply_rotation(r, X)
        for i in range(15):
            np.testing.assert_allclose(batch[i], apply_rotation(r, X[i]), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            apply_rotation(Rotation.identity(4), np.ones(5))


class TestTangentVectorContract:
    def test_non_tangent_coords_rejected(self):
        from clay.geometry import TangentVector

        with pytest.raises(ValueError):
            TangentVector(coords=e(0, 3) * 0.5, base=e(0, 3))

    def test_overlong_tangent_rejected(self):
        from clay.geometry import TangentVector

        with pytest.raises(ValueError):
            TangentVector(coords=e(1, 3) * 4.0, base=e(0, 3))
