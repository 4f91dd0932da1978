import numpy as np
import pytest

from clay.conditioning import (
    ModulatorConfig,
    ZeroProjectionPolicy,
    csim_asym,
    csim_clay,
    csim_raw,
    modulate,
    modulate_batch,
)
from clay.errors import ZeroProjection
from clay.geometry import (
    Rotation,
    exp_map,
    householder_align,
    log_map,
    spherical_mean,
)
from clay.subspace import PromptMatrix, build_subspace

from oracles import (
    dense_csim,
    dense_modulate,
    dense_projection_matrix,
    dense_rotation_matrix,
    random_unit,
    random_unit_rows,
)


def e(i, d):
    v = np.zeros(d)
    v[i] = 1.0
    return v


def cone_prompts(rng, n, d, center=None, spread=0.4):
    center = random_unit(rng, d) if center is None else center
    rows = center + spread * rng.standard_normal((n, d))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return PromptMatrix(rows=rows, condition_names=("c",))


def full_tangent_subspace(rng, d):
    """Prompts spanning the whole tangent space at a known reference point."""
    mu = e(0, d)
    m = np.linalg.qr(rng.standard_normal((d, d)))[0]
    m = m - np.outer(mu, mu @ m)
    q = np.linalg.qr(m)[0]
    cols = [q[:, i] for i in range(d) if abs(q[:, i] @ mu) < 1e-8 and np.linalg.norm(q[:, i]) > 0.5]
    rows = []
    for u in cols[: d - 1]:
        rows.append(exp_map(mu, 0.5 * u))
        rows.append(exp_map(mu, -0.5 * u))
    return build_subspace(PromptMatrix(rows=np.array(rows), condition_names=("full",)), k=d - 1)


class TestModulate:
    def test_reference_point_maps_to_zero(self, rng):
        s = build_subspace(cone_prompts(rng, 30, 8), k=4)
        out = modulate(s, Rotation.identity(8), s.mu_c)
        assert np.linalg.norm(out) < 1e-12

    def test_database_mean_maps_to_zero(self, rng):
        s = build_subspace(cone_prompts(rng, 30, 8), k=4)
        mu_v = random_unit(rng, 8)
        r = householder_align(mu_v, s.mu_c)
        out = modulate(s, r, mu_v)
        assert np.linalg.norm(out) < 1e-10

    def test_matches_dense_pipeline(self, rng):
        s = build_subspace(cone_prompts(rng, 40, 12), k=5)
        mu_v = random_unit(rng, 12)
        r = householder_align(mu_v, s.mu_c)
        H = dense_rotation_matrix(r)
        P = dense_projection_matrix(s.basis)
        for _ in range(25):
            v = random_unit(rng, 12)
            got = modulate(s, r, v)
            want = dense_modulate(s.mu_c, H, P, v)
            np.testing.assert_allclose(got, want, atol=1e-5)

    def test_batch_matches_scalar(self, rng):
        s = build_subspace(cone_prompts(rng, 40, 12), k=5)
        mu_v = random_unit(rng, 12)
        r = householder_align(mu_v, s.mu_c)
        X = random_unit_rows(rng, 30, 12)
        batch = modulate_batch(s, r, X)
        for i in range(30):
            np.testing.assert_allclose(batch[i], modulate(s, r, X[i]), atol=1e-10)

    def test_euclidean_mode_projects_raw_features(self, rng):
        pm = cone_prompts(rng, 30, 8)
        s = build_subspace(pm, k=4, manifold=False)
        cfg = ModulatorConfig(use_rotation=False, use_manifold=False)
        v = random_unit(rng, 8)
        np.testing.assert_allclose(
            modulate(s, Rotation.identity(8), v, cfg),
            s.basis @ (s.basis.T @ v),
            atol=1e-12,
        )

    def test_mode_mismatch_rejected(self, rng):
        s = build_subspace(cone_prompts(rng, 30, 8), k=4)  # manifold build
        cfg = ModulatorConfig(use_rotation=False, use_manifold=False)
        with pytest.raises(ValueError):
            modulate(s, Rotation.identity(8), e(0, 8), cfg)

    def test_rotation_requires_manifold(self):
        with pytest.raises(ValueError):
            ModulatorConfig(use_rotation=True, use_manifold=False)


class TestCsim:
    def test_self_similarity(self, rng):
        s = build_subspace(cone_prompts(rng, 30, 10), k=5)
        r = Rotation.identity(10)
        v = random_unit(rng, 10)
        assert csim_clay(s, r, v, v) == pytest.approx(1.0, abs=1e-6)

    def test_symmetry_bit_for_bit(self, rng):
        s = build_subspace(cone_prompts(rng, 30, 10), k=5)
        mu_v = random_unit(rng, 10)
        r = householder_align(mu_v, s.mu_c)
        for _ in range(10):
            a = random_unit(rng, 10)
            b = random_unit(rng, 10)
            assert csim_clay(s, r, a, b) == csim_clay(s, r, b, a)

    def test_orthogonal_modulated_vectors(self, rng):
        # two-plane subspace: one vector lands on each basis axis
        mu = e(0, 4)
        rows = [exp_map(mu, t * e(ax, 4)) for ax in (1, 2) for t in (0.3, -0.3)]
        s = build_subspace(PromptMatrix(rows=np.array(rows), condition_names=("c",)), k=2)
        r = Rotation.identity(4)
        v_q = exp_map(mu, 0.5 * e(1, 4))
        v_d = exp_map(mu, 0.5 * e(2, 4))
        assert abs(csim_clay(s, r, v_q, v_d)) < 1e-5
        H = dense_rotation_matrix(r)
        P = dense_projection_matrix(s.basis)
        assert abs(dense_csim(s.mu_c, H, P, v_q, v_d)) < 1e-5

    def test_raw_truth_table(self):
        assert csim_raw(e(0, 3), e(0, 3)) == pytest.approx(1.0)
        assert csim_raw(e(0, 3), e(1, 3)) == pytest.approx(0.0)
        assert csim_raw(e(0, 3), -e(0, 3)) == pytest.approx(-1.0)

    def test_scores_in_range(self, rng):
        s = build_subspace(cone_prompts(rng, 30, 10), k=5)
        mu_v = random_unit(rng, 10)
        r = householder_align(mu_v, s.mu_c)
        for _ in range(50):
            val = csim_clay(s, r, random_unit(rng, 10), random_unit(rng, 10))
            assert -1.0 - 1e-6 <= val <= 1.0 + 1e-6

    def test_asym_identity_subspace_regression(self):
        # full tangent projection + identity rotation reduces to
        # cos(log_mu(q), d); value pinned from the dense oracle
        rng = np.random.default_rng(42)
        d = 6
        s = full_tangent_subspace(rng, d)
        q_vec = random_unit(rng, d)
        d_vec = random_unit(rng, d)
        got = csim_asym(s, Rotation.identity(d), q_vec, d_vec)
        assert got == pytest.approx(0.3253702666762602, abs=1e-9)
        t = log_map(s.mu_c, q_vec).coords
        oracle = float(t @ d_vec / (np.linalg.norm(t) * np.linalg.norm(d_vec)))
        assert got == pytest.approx(oracle, abs=1e-10)

    def test_zero_projection_policies(self, rng):
        s = build_subspace(cone_prompts(rng, 30, 8), k=4)
        r = Rotation.identity(8)
        v = random_unit(rng, 8)
        # query at the reference point modulates to zero
        assert csim_clay(s, r, s.mu_c, v) == 0.0
        cfg_err = ModulatorConfig(zero_projection_policy=ZeroProjectionPolicy.ERROR)
        with pytest.raises(ZeroProjection):
            csim_clay(s, r, s.mu_c, v, cfg_err)


class TestAblationCoherence:
    def test_full_rank_euclidean_reduces_to_raw(self, rng):
        d = 8
        pm = cone_prompts(rng, 40, d)  # n > d so the raw rows span R^d
        s = build_subspace(pm, k=d, manifold=False)
        assert s.k == d
        cfg = ModulatorConfig(use_rotation=False, use_manifold=False)
        r = Rotation.identity(d)
        db = random_unit_rows(rng, 25, d)
        q = random_unit(rng, d)
        cond = np.array([csim_clay(s, r, q, row, cfg) for row in db])
        raw = np.array([csim_raw(q, row) for row in db])
        np.testing.assert_allclose(cond, raw, atol=1e-9)
        assert list(np.argsort(-cond)) == list(np.argsort(-raw))

    def test_global_rotation_ranking_invariance(self, rng):
        """Full-rank projection: pre-rotating every input keeps the ranking."""
        d = 12
        n_db = 30
        prompts = cone_prompts(rng, 60, d, spread=0.5)
        db = random_unit_rows(rng, n_db, d) + 1.5 * random_unit(rng, d)
        db /= np.linalg.norm(db, axis=1, keepdims=True)
        q = random_unit(rng, d)
        Q = np.linalg.qr(rng.standard_normal((d, d)))[0]

        def ranking(prompt_rows, db_rows, q_vec):
            pm = PromptMatrix(rows=prompt_rows, condition_names=("c",))
            s = build_subspace(pm, k=d - 1)  # full numerical tangent rank
            mu_v = spherical_mean(db_rows)
            r = householder_align(mu_v, s.mu_c)
            scores = [csim_clay(s, r, q_vec, row) for row in db_rows]
            return list(np.argsort(-np.asarray(scores), kind="stable"))

        base = ranking(prompts.rows, db, q)
        rotated = ranking(prompts.rows @ Q.T, db @ Q.T, Q @ q)
        assert base == rotated
