import math

import numpy as np
import pytest
from conftest import random_params
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from gbrbm_ad.core import (
    UNIT_SIGMA,
    CapabilityError,
    GbrbmParams,
    ShapeError,
    all_hidden_states,
    energy,
    exact_log_partition,
    exact_model_moments,
    fe_score,
    fe_score_enumerated,
    gibbs_step,
    hidden_conditional,
    softplus,
    visible_conditional,
)

LN2 = math.log(2.0)


def one_by_one(**kw):
    p = dict(b=[0.0], c=[0.0], w=[[0.0]], sigma=[0.0])
    p.update(kw)
    return GbrbmParams(**p)


class TestParams:
    def test_shapes_validated(self):
        with pytest.raises(ShapeError):
            GbrbmParams(np.zeros(2), np.zeros(3), np.zeros((3, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            GbrbmParams(np.array([np.nan]), np.zeros(1), np.zeros((1, 1)), np.zeros(1))

    def test_immutable(self):
        p = GbrbmParams.zeros(2, 2)
        with pytest.raises(ValueError):
            p.w[0, 0] = 1.0

    def test_unit_sigma(self):
        assert UNIT_SIGMA == pytest.approx(0.541325, abs=1e-6)
        assert softplus(UNIT_SIGMA) == pytest.approx(1.0, abs=1e-15)


class TestSoftplus:
    @pytest.mark.parametrize("x", [-1e6, 1e6, -745.0, 710.0])
    def test_extremes_finite(self, x):
        y = softplus(x)
        assert np.isfinite(y)
        assert 0.0 <= y - max(x, 0.0) <= LN2

    @given(st.floats(-1e6, 1e6))
    def test_bounds(self, x):
        y = float(softplus(x))
        assert 0.0 <= y - max(x, 0.0) <= LN2 + 1e-15


class TestEnergy:
    def test_zero_params(self):
        assert energy(one_by_one(), [1.0], [1.0]) == pytest.approx(1 / (2 * LN2), abs=1e-12)
        assert energy(one_by_one(), [1.0], [1.0]) == pytest.approx(0.721348, abs=1e-6)

    def test_visible_bias(self):
        assert energy(one_by_one(b=[1.0]), [2.0], [0.0]) == pytest.approx(0.885390, abs=1e-6)

    def test_coupling(self):
        val = energy(one_by_one(c=[1.0], w=[[1.0]]), [1.0], [1.0])
        assert val == pytest.approx(-1.278652, abs=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            energy(one_by_one(), [1.0, 2.0], [1.0])
        with pytest.raises(ShapeError):
            fe_score(GbrbmParams.zeros(3, 2), np.zeros(2))


class TestFeScore:
    def test_zero_params(self):
        assert fe_score(GbrbmParams.zeros(1, 2), [0.0]) == pytest.approx(-2 * LN2, abs=1e-12)

    def test_unit_variance(self):
        p = one_by_one(sigma=[UNIT_SIGMA], w=[[1.0]])
        assert fe_score(p, [1.0]) == pytest.approx(-0.813262, abs=1e-6)

    def test_enumeration_n_h_10(self, rng):
        p = random_params(rng, 4, 10)
        for v in rng.normal(0, 1.5, (5, 4)):
            assert abs(fe_score(p, v) - fe_score_enumerated(p, v)) <= 1e-10

    @given(
        st.integers(1, 5),
        st.integers(1, 12),
        st.integers(0, 2**32 - 1),
    )
    def test_enumeration_property(self, n_v, n_h, seed):
        rng = np.random.default_rng(seed)
        p = random_params(rng, n_v, n_h)
        v = rng.normal(0, 1.5, n_v)
        assert abs(fe_score(p, v) - fe_score_enumerated(p, v)) <= 1e-10

    def test_batched_matches_single(self, rng):
        p = random_params(rng, 3, 4)
        vs = rng.normal(size=(6, 3))
        batched = fe_score(p, vs)
        assert np.allclose(batched, [fe_score(p, v) for v in vs], rtol=0, atol=1e-13)

    def test_large_preactivations_finite(self):
        p = GbrbmParams(np.zeros(2), np.zeros(3), np.full((2, 3), 400.0), np.zeros(2))
        assert np.isfinite(fe_score(p, np.array([5.0, -3.0])))


class TestConditionals:
    def test_hidden_zero(self, rng):
        hc = hidden_conditional(GbrbmParams.zeros(3, 4), rng.normal(size=3))
        assert np.all(hc.p == 0.5)

    def test_hidden_values(self):
        assert hidden_conditional(one_by_one(c=[2.0]), [0.7]).p[0] == pytest.approx(0.880797, abs=1e-6)
        assert hidden_conditional(one_by_one(w=[[1.0]]), [3.0]).p[0] == pytest.approx(0.952574, abs=1e-6)

    def test_visible_values(self):
        vc = visible_conditional(GbrbmParams.zeros(2, 1), [0.0])
        assert np.all(vc.mean == 0) and np.allclose(vc.variance, LN2, atol=1e-15)
        vc = visible_conditional(one_by_one(sigma=[UNIT_SIGMA]), [0.0])
        assert vc.variance[0] == pytest.approx(1.0, abs=1e-15)
        vc = visible_conditional(one_by_one(b=[1.0], w=[[1.0]], sigma=[UNIT_SIGMA]), [1.0])
        assert vc.mean[0] == pytest.approx(2.0, abs=1e-14) and vc.variance[0] == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("n_h", [1, 3, 8])
    def test_hidden_conditional_matches_energy(self, rng, n_h):
        p = random_params(rng, 3, n_h)
        v = rng.normal(size=3)
        hs = all_hidden_states(n_h)
        e = energy(p, np.broadcast_to(v, (hs.shape[0], 3)), hs)
        boltz = np.exp(-(e - e.min()))
        boltz /= boltz.sum()
        pj = hidden_conditional(p, v).p
        factorized = np.prod(np.where(hs == 1, pj, 1 - pj), axis=1)
        assert np.max(np.abs(boltz / factorized - 1.0)) <= 1e-12


class TestGibbs:
    def test_seed_reproducible(self, rng):
        p = random_params(rng, 5, 4)
        v0 = rng.normal(size=(7, 5))
        a = gibbs_step(p, v0, np.random.default_rng(3))
        b = gibbs_step(p, v0, np.random.default_rng(3))
        assert a.tobytes() == b.tobytes()

    def test_independent_standard_normal(self):
        p = GbrbmParams(np.zeros(2), np.zeros(3), np.zeros((2, 3)), np.full(2, UNIT_SIGMA))
        rng = np.random.default_rng(0)
        v = np.zeros((100_000, 2))
        v = gibbs_step(p, v, rng)
        assert np.all(np.abs(v.mean(axis=0)) < 0.02)
        assert np.all(np.abs(v.var(axis=0) - 1) < 0.02)

    def test_second_moment_matches_exact(self):
        rng = np.random.default_rng(11)
        p = random_params(rng, 2, 3, scale=0.7)
        v = rng.standard_normal((20_000, 2))
        for _ in range(200):
            v = gibbs_step(p, v, rng)
        exact = exact_model_moments(p)["v2"]
        se = (v**2).std(axis=0) / math.sqrt(v.shape[0])
        assert np.all(np.abs((v**2).mean(axis=0) - exact) <= 3 * se)


class TestExactLogPartition:
    def test_zero_1x1(self):
        # independent check by adaptive quadrature of (1 + e^0) exp(-v^2 / (2 ln 2))
        ref = math.log(quad(lambda v: 2.0 * math.exp(-v * v / (2 * LN2)), -np.inf, np.inf, epsrel=1e-13)[0])
        got = exact_log_partition(one_by_one()).log_partition
        assert got == pytest.approx(ref, abs=1e-12)
        assert got == pytest.approx(1.4288292534737856, abs=1e-12)

    def test_unit_variance(self):
        got = exact_log_partition(one_by_one(sigma=[UNIT_SIGMA])).log_partition
        assert got == pytest.approx(1.612086, abs=1e-6)

    @pytest.mark.parametrize("n_v", [1, 2])
    def test_analytic_vs_quadrature(self, rng, n_v):
        for _ in range(5):
            p = random_params(rng, n_v, 3, scale=0.8)
            a = exact_log_partition(p, "analytic-hidden-sum")
            q = exact_log_partition(p, "quadrature")
            assert a.method == "analytic-hidden-sum" and q.method == "quadrature"
            assert abs(a.log_partition - q.log_partition) <= 1e-8

    def test_scipy_quad_1d(self, rng):
        p = random_params(rng, 1, 4)
        ref = math.log(quad(lambda v: math.exp(-float(fe_score(p, [v]))), -60, 60, epsrel=1e-13, limit=400)[0])
        assert exact_log_partition(p).log_partition == pytest.approx(ref, abs=1e-8)

    def test_capability_guard(self):
        with pytest.raises(CapabilityError):
            exact_log_partition(GbrbmParams.zeros(1, 21))
        with pytest.raises(CapabilityError):
            exact_log_partition(GbrbmParams.zeros(3, 2), "quadrature")


class TestExactMoments:
    def test_against_quadrature_1d(self, rng):
        p = random_params(rng, 1, 3)
        z = exact_log_partition(p).log_partition
        dens = lambda v: math.exp(-float(fe_score(p, [v])) - z)  # noqa: E731
        ev = quad(lambda v: v * dens(v), -60, 60, epsrel=1e-12, limit=400)[0]
        ev2 = quad(lambda v: v * v * dens(v), -60, 60, epsrel=1e-12, limit=400)[0]
        m = exact_model_moments(p)
        assert m["v"][0] == pytest.approx(ev, abs=1e-9)
        assert m["v2"][0] == pytest.approx(ev2, abs=1e-9)
        ph = quad(lambda v: float(hidden_conditional(p, [v]).p[1]) * dens(v), -60, 60, epsrel=1e-12, limit=400)[0]
        assert m["h"][1] == pytest.approx(ph, abs=1e-9)
