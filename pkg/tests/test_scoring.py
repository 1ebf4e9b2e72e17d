import numpy as np
import pytest

from freqreg.complexity import complexity
from freqreg.datasets import Dataset
from freqreg.errors import ConfigError, DomainError, EmptyDatasetError, FrequencyMismatchError, ShapeError
from freqreg.frequency import FrequencyConfig
from freqreg.metrics import auroc
from freqreg.models import FlowModel, InputSpec, VaeModel
from freqreg.scoring import (
    ScoreRecord,
    calibrate_threshold,
    check_compatible,
    label_records,
    records_to_table,
    score_dataset,
    score_frl,
    score_ic,
    score_nll,
    threshold_classify,
)

FREQ = FrequencyConfig(method="gaussian", kernel_size=3)


@pytest.fixture(scope="module")
def freq_model():
    return VaeModel(InputSpec(8, 8, 1, quant_levels=16, freq=FREQ), latent_dim=3, n_conv=1, filters=4).freeze()


@pytest.fixture(scope="module")
def plain_model():
    return VaeModel(InputSpec(8, 8, 1, quant_levels=16), latent_dim=3, n_conv=1, filters=4).freeze()


@pytest.fixture
def images(rng):
    return Dataset("toy", rng.integers(0, 256, size=(6, 8, 8, 1), dtype=np.uint8))


def _all_pairs_auroc(a, b):
    wins = sum((y > x) + 0.5 * (y == x) for x in a for y in b)
    return wins / (len(a) * len(b))


class TestAuroc:
    def test_matches_all_pairs_count(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = rng.integers(0, 10, size=rng.integers(1, 12)).astype(float)
            b = rng.integers(0, 10, size=rng.integers(1, 12)).astype(float)
            assert auroc(a, b) == pytest.approx(_all_pairs_auroc(a, b), abs=1e-12)

    def test_swapping_roles_complements(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = rng.integers(0, 5, size=7).astype(float)
            b = rng.integers(0, 5, size=9).astype(float)
            assert auroc(a, b) + auroc(b, a) == 1.0

    def test_invariant_under_monotone_transform(self, rng):
        a, b = rng.normal(size=30), rng.normal(0.5, 1.0, size=40)
        assert auroc(np.exp(a), np.exp(b)) == auroc(a, b)
        assert auroc(3 * a - 2, 3 * b - 2) == auroc(a, b)

    def test_extremes(self):
        assert auroc([0, 1], [2, 3]) == 1.0
        assert auroc([2, 3], [0, 1]) == 0.0
        assert auroc([1, 1], [1, 1]) == 0.5
        assert auroc([1, 3], [2, 4]) == 0.75

    def test_rejects_empty_and_nan(self):
        with pytest.raises(EmptyDatasetError):
            auroc([], [1.0])
        with pytest.raises(DomainError):
            auroc([np.nan], [1.0])


class TestScorers:
    def test_frl_is_nll_minus_complexity(self, freq_model, images):
        frl = score_frl(freq_model, images, FREQ, k=3, seed=5)
        nll = score_nll(freq_model, images, FREQ, k=3, seed=5)
        for f, n, img in zip(frl, nll, images.images):
            assert f.nll_bpd == n.nll_bpd
            assert f.complexity_bpd == complexity(img)
            assert f.score == n.score - f.complexity_bpd
            assert n.complexity_bpd == 0.0

    def test_zero_complexity_weight_reduces_to_nll(self, freq_model, images):
        frl = score_frl(freq_model, images, k=3, seed=5, complexity_weight=0.0)
        nll = score_nll(freq_model, images, k=3, seed=5)
        assert [r.score for r in frl] == [r.score for r in nll]

    def test_ic_on_plain_model(self, plain_model, images):
        recs = score_ic(plain_model, images, k=3, seed=1)
        assert [r.sample_id for r in recs] == list(range(6))
        assert all(r.dataset == "toy" and r.label is None for r in recs)
        assert all(r.score == r.nll_bpd - r.complexity_bpd for r in recs)

    def test_image_denominator_rescales(self, freq_model, images):
        per_input = np.array([r.nll_bpd for r in score_nll(freq_model, images, k=3)])
        per_image = np.array([r.nll_bpd for r in score_nll(freq_model, images, k=3, nll_denominator="image")])
        spec = freq_model.spec
        np.testing.assert_allclose(per_image, per_input * spec.dims / spec.image_dims)
        with pytest.raises(ConfigError):
            score_nll(freq_model, images, k=3, nll_denominator="pixels")

    def test_rgb_input_adapted_to_gray_model(self, freq_model, rng):
        rgb = rng.integers(0, 256, size=(2, 8, 8, 3), dtype=np.uint8)
        assert len(score_frl(freq_model, rgb, k=2)) == 2

    def test_two_channel_input_rejected(self, freq_model, rng):
        with pytest.raises(ShapeError):
            score_frl(freq_model, rng.integers(0, 256, size=(2, 8, 8, 2), dtype=np.uint8), k=2)

    def test_scorer_model_mismatches(self, freq_model, plain_model, images):
        with pytest.raises(FrequencyMismatchError):
            score_frl(plain_model, images, k=2)
        with pytest.raises(FrequencyMismatchError):
            score_ic(freq_model, images, k=2)
        with pytest.raises(FrequencyMismatchError):
            score_frl(freq_model, images, FrequencyConfig(method="gaussian", kernel_size=5), k=2)

    def test_weight_is_vae_only(self, images):
        flow = FlowModel(InputSpec(8, 8, 1, quant_levels=16, freq=FREQ), n_layers=2, filters=2).freeze()
        with pytest.raises(ConfigError):
            score_frl(flow, images, weight=0.5)

    def test_check_compatible(self, freq_model, plain_model):
        check_compatible("frl", freq_model)
        check_compatible("ic", plain_model)
        check_compatible("nll", freq_model)
        with pytest.raises(ConfigError):
            check_compatible("odin", freq_model)
        with pytest.raises(FrequencyMismatchError):
            check_compatible("frl", plain_model)


class TestScoreDataset:
    def test_workers_do_not_change_results(self, freq_model, images):
        serial = score_dataset("frl", freq_model, images, workers=1, k=3, seed=2)
        forked = score_dataset("frl", freq_model, images, workers=3, k=3, seed=2)
        assert [r.sample_id for r in forked] == list(range(6))
        assert {r.dataset for r in forked} == {"toy"}
        np.testing.assert_allclose([r.score for r in forked], [r.score for r in serial], rtol=1e-10)

    def test_empty(self, freq_model):
        with pytest.raises(EmptyDatasetError):
            score_dataset("frl", freq_model, Dataset("none", np.zeros((0, 8, 8, 1), dtype=np.uint8)))


class TestDecision:
    def test_threshold_is_inclusive(self):
        assert threshold_classify([0.5, 1.0, 1.5], 1.0) == ["ID", "ID", "OOD"]

    def test_threshold_accepts_records(self):
        recs = [ScoreRecord(0, "a", 1.0, 0.0, 2.0), ScoreRecord(1, "a", 1.0, 0.0, -1.0)]
        assert threshold_classify(recs, 0.0) == ["OOD", "ID"]

    def test_nan_threshold(self):
        with pytest.raises(DomainError):
            threshold_classify([1.0], float("nan"))

    def test_calibration_keeps_requested_rate(self):
        scores = np.arange(1, 101, dtype=float)
        lam = calibrate_threshold(scores, 0.95)
        assert lam == 95.0
        assert threshold_classify(scores, lam).count("ID") == 95
        assert calibrate_threshold(scores, 1.0) == 100.0

    def test_calibration_errors(self):
        with pytest.raises(EmptyDatasetError):
            calibrate_threshold([])
        with pytest.raises(DomainError):
            calibrate_threshold([1.0], 0.0)

    def test_labels(self, freq_model, images):
        recs = label_records(score_nll(freq_model, images, k=2), "OOD")
        assert {r.label for r in recs} == {"OOD"}
        with pytest.raises(DomainError):
            label_records(recs, "maybe")

    def test_records_table(self, freq_model, images):
        table = records_to_table(label_records(score_frl(freq_model, images, k=2), "ID"))
        assert table.column_names == ["sample_id", "dataset", "label", "nll_bpd", "complexity_bpd", "score"]
        assert table.num_rows == 6
        assert table.column("label").to_pylist() == ["ID"] * 6
