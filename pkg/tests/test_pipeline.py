import hashlib
import itertools
import struct

import numpy as np
import pytest
from conftest import random_params
from hypothesis import given
from hypothesis import strategies as st

from gbrbm_ad.annealing import SaConfig, make_schedule, sa_search
from gbrbm_ad.core import ShapeError, fe_score
from gbrbm_ad.data import LabeledDataset
from gbrbm_ad.density import ScoreFitConfig, threshold_for, train_score_model
from gbrbm_ad.pipeline import (
    BundleError,
    BundleVersionError,
    ChecksumError,
    ConfusionCounts,
    ModelBundle,
    bundle_bytes,
    classify,
    classify_by_probability,
    evaluate,
    load_bundle,
    mcc,
    parse_bundle,
    save_bundle,
    threshold_sweep,
)


@pytest.fixture(scope="module")
def bundle():
    rng = np.random.default_rng(5)
    params = random_params(rng, 3, 4, scale=0.7)
    train = rng.normal(0, 1, (800, 3))
    sa = sa_search(params, SaConfig(make_schedule(50), restarts=10, steps_per_temperature=5), train)
    sm = train_score_model(fe_score(params, train), sa.f_star, ScoreFitConfig(n_hidden=6, epochs=300, learning_rate=1e-2))
    cal = threshold_for(sm, 0.9)
    return ModelBundle(params, sm, sa.f_star, sa.v_star, cal, {"seed": 5, "note": "unit"})


def brute_force_max_mcc(scores, truth):
    best = -np.inf
    cands = np.concatenate([scores, [scores.min() - 1]])
    for t in cands:
        best = max(best, mcc(ConfusionCounts.from_labels(truth, (scores > t).astype(int))))
    return best


class TestMcc:
    def test_examples(self):
        assert mcc(ConfusionCounts(tp=5, fp=0, tn=7, fn=0)) == 1.0
        assert mcc(ConfusionCounts(10, 10, 10, 10)) == 0.0
        assert mcc(ConfusionCounts(tp=0, fp=3, tn=0, fn=4)) == -1.0
        assert mcc(ConfusionCounts(0, 0, 5, 5)) == 0.0

    @given(st.lists(st.integers(0, 50), min_size=4, max_size=4))
    def test_bounded(self, c):
        assert -1.0 - 1e-12 <= mcc(ConfusionCounts(*c)) <= 1.0 + 1e-12

    def test_counts_from_labels(self):
        c = ConfusionCounts.from_labels([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
        assert (c.tp, c.fp, c.tn, c.fn, c.total) == (2, 1, 1, 1, 5)


class TestSweep:
    @given(st.integers(0, 2**32 - 1), st.integers(2, 200))
    def test_matches_brute_force(self, seed, n):
        rng = np.random.default_rng(seed)
        scores = np.round(rng.normal(size=n), 1)  # ties on purpose
        truth = rng.integers(0, 2, n)
        _, values = threshold_sweep(scores, truth)
        assert values.max() == pytest.approx(brute_force_max_mcc(scores, truth), abs=1e-12)

    def test_separable(self):
        t, v = threshold_sweep([0.0, 1.0, 2.0, 3.0], [0, 0, 1, 1])
        k = int(np.argmax(v))
        assert v[k] == 1.0 and t[k] == 1.5


class TestClassify:
    def test_minimum_is_normal(self, bundle):
        assert classify(bundle, bundle.v_star[None, :])[0] == 0

    def test_tie_is_normal(self, bundle):
        # snap kappa to the score of a real point and check the tie-break
        v = np.zeros((1, 3))
        f = float(fe_score(bundle.data_model, v)[0])
        cal = bundle.calibration
        tied = ModelBundle(bundle.data_model, bundle.score_model, bundle.f_star, bundle.v_star,
                           type(cal)(cal.p_anom, cal.kappa_z, f, cal.achieved_p, cal.iterations))
        assert classify(tied, v)[0] == 0

    def test_empty(self, bundle):
        assert classify(bundle, np.zeros((0, 3))).shape == (0,)
        assert classify_by_probability(bundle, []).shape == (0,)

    def test_dimension_mismatch(self, bundle):
        with pytest.raises(ShapeError):
            classify(bundle, np.zeros((2, 4)))

    def test_probability_equivalence(self, bundle):
        pts = np.random.default_rng(0).normal(0, 1.5, (2000, 3))
        assert np.array_equal(classify(bundle, pts), classify_by_probability(bundle, pts))

    def test_requires_calibration(self, bundle):
        with pytest.raises(BundleError):
            classify(ModelBundle(bundle.data_model), np.zeros((1, 3)))


class TestEvaluate:
    def test_report(self, bundle):
        rng = np.random.default_rng(1)
        pts = np.concatenate([rng.normal(0, 1, (100, 3)), rng.normal(0, 3, (100, 3))])
        test = LabeledDataset(pts, np.repeat([0, 1], 100), {})
        r = evaluate(bundle, test, bins=20)
        assert r.max_mcc >= r.mcc_at_kappa and r.counts.total == 200
        assert set(r.histogram) == {"bin_lo", "bin_hi", "density_normal", "density_anomalous", "fitted_pdf"}
        assert all(len(c) == 20 for c in r.histogram.values())
        width = r.histogram["bin_hi"] - r.histogram["bin_lo"]
        assert r.histogram["density_normal"] @ width == pytest.approx(1.0)

    def test_single_class(self, bundle):
        r = evaluate(bundle, LabeledDataset(np.zeros((5, 3)), np.zeros(5, int), {}))
        assert r.max_mcc is None and "single-class" in r.note


class TestPersistence:
    def test_round_trip(self, bundle, tmp_path):
        digest = save_bundle(bundle, tmp_path / "m.gbad")
        back = load_bundle(tmp_path / "m.gbad")
        assert digest == hashlib.sha256((tmp_path / "m.gbad").read_bytes()).hexdigest()
        assert back.data_model.equals(bundle.data_model) and back.score_model.params.equals(bundle.score_model.params)
        assert back.f_star == bundle.f_star and np.array_equal(back.v_star, bundle.v_star)
        assert back.calibration == bundle.calibration
        assert back.score_model.normalizer == bundle.score_model.normalizer
        assert back.provenance == bundle.provenance
        probes = np.random.default_rng(2).normal(size=(100, 3))
        assert fe_score(back.data_model, probes).tobytes() == fe_score(bundle.data_model, probes).tobytes()
        assert np.array_equal(classify(back, probes), classify(bundle, probes))
        assert np.array_equal(back.score_model.cdf(probes[:, 0]), bundle.score_model.cdf(probes[:, 0]))
        assert bundle_bytes(back) == bundle_bytes(bundle)

    def test_partial_bundle(self, bundle):
        back = parse_bundle(bundle_bytes(ModelBundle(bundle.data_model)))
        assert back.score_model is None and back.calibration is None and back.f_star is None

    def test_every_corrupted_byte(self, bundle):
        raw = bytearray(bundle_bytes(bundle))
        for pos in itertools.chain(range(0, 64), range(len(raw) - 64, len(raw)), range(64, len(raw), 97)):
            bad = bytearray(raw)
            bad[pos] ^= 0x10
            with pytest.raises(BundleError) as err:
                parse_bundle(bytes(bad))
            if pos >= 4:
                assert isinstance(err.value, ChecksumError)

    def test_future_version(self, bundle):
        raw = bundle_bytes(bundle)
        body = raw[:4] + struct.pack("<H", 99) + raw[6:-32]
        with pytest.raises(BundleVersionError):
            parse_bundle(body + hashlib.sha256(body).digest())

    def test_not_a_bundle(self):
        with pytest.raises(BundleError):
            parse_bundle(b"hello")
