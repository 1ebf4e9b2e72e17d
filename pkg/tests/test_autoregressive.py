import itertools
import math

import numpy as np
import pytest
from scipy.special import logsumexp

from freqreg.errors import ConfigError
from freqreg.frequency import FrequencyConfig
from freqreg.models import ArModel, InputSpec, ModelConfig, ar_nll, build_model
from freqreg.models.autoregressive import causal_mask, channel_groups

FREQ = FrequencyConfig(method="gaussian", kernel_size=1)


def _scramble(model: ArModel, seed: int) -> ArModel:
    rng = np.random.default_rng(seed + 50)
    for t in model.params.values():
        t.data = rng.normal(0.0, 0.5, size=t.shape).astype(t.dtype)
    return model.freeze()


def _randomized(spec: InputSpec, channel_order: str = "hf_first", seed: int = 0) -> ArModel:
    return _scramble(ArModel(spec, n_layers=3, filters=4, channel_order=channel_order, seed=seed), seed)


def _all_inputs(spec: InputSpec) -> np.ndarray:
    levels = range(spec.quant_levels)
    grid = np.array(list(itertools.product(levels, repeat=spec.dims)), dtype=np.int64)
    return grid.reshape(-1, *spec.shape)


def _assert_causal(model: ArModel, trials: int, seed: int) -> None:
    """Editing (pixel r0, channel g0) leaves every logit at or before (r0, g0) bit-identical."""
    h, w, c = model.spec.shape
    q = model.spec.quant_levels
    rng = np.random.default_rng(seed)
    base = rng.integers(0, q, size=(1, h, w, c))
    before = model.logits(base)
    saw_change = False
    for _ in range(trials):
        i, j, g0 = rng.integers(h), rng.integers(w), rng.integers(c)
        x = base.copy()
        x[0, i, j, model.order[g0]] = (x[0, i, j, model.order[g0]] + rng.integers(1, q)) % q
        after = model.logits(x)
        r0 = i * w + j
        for r in range(h * w):
            for g in range(c):
                pi, pj = divmod(r, w)
                same = np.array_equal(after[0, g, :, pi, pj], before[0, g, :, pi, pj])
                if (r, g) <= (r0, g0):
                    assert same, f"logit at pixel {r} channel {g} moved after editing ({r0}, {g0})"
                elif not same:
                    saw_change = True
    assert saw_change


class TestNormalization:
    @pytest.mark.parametrize("q", [3, 4])
    @pytest.mark.parametrize("hw", [(1, 2), (2, 2)])
    def test_probabilities_sum_to_one(self, hw, q):
        spec = InputSpec(*hw, 1, quant_levels=q)
        model = ArModel(spec, n_layers=2, filters=4, seed=q).freeze()
        nll = model.nll_nats(_all_inputs(spec))
        assert math.exp(logsumexp(-nll)) == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("order", ["hf_first", "hf_last"])
    @pytest.mark.parametrize("q", [3, 4])
    def test_sums_to_one_with_frequency_channel(self, order, q):
        spec = InputSpec(1, 2, 1, quant_levels=q, freq=FREQ)
        model = _randomized(spec, channel_order=order, seed=q)
        nll = model.nll_nats(_all_inputs(spec))
        assert math.exp(logsumexp(-nll)) == pytest.approx(1.0, abs=1e-6)


class TestCausality:
    @pytest.mark.parametrize("order", ["hf_first", "hf_last"])
    def test_logits_ignore_current_and_later_values(self, order):
        spec = InputSpec(3, 3, 1, quant_levels=4, freq=FREQ)
        model = _randomized(spec, channel_order=order, seed=1)
        _assert_causal(model, trials=500, seed=99)

    def test_mask_a_hides_current_group(self):
        mask = causal_mask(4, 2, 5, 2, "A")
        assert mask[:2, :, 2, 2].sum() == 0
        np.testing.assert_array_equal(mask[2:, :, 2, 2], [[1, 0], [1, 0]])
        assert mask[:, :, 3:, :].sum() == 0 and mask[:, :, 2, 3:].sum() == 0
        assert np.all(mask[:, :, :2, :] == 1)

    def test_mask_b_shows_current_group(self):
        mask = causal_mask(4, 4, 3, 2, "B")
        np.testing.assert_array_equal(mask[:, :, 1, 1], [[1, 1, 0, 0], [1, 1, 0, 0], [1, 1, 1, 1], [1, 1, 1, 1]])


class TestUnevenGroups:
    def test_group_sizes(self):
        np.testing.assert_array_equal(np.bincount(channel_groups(64, 3)), [22, 21, 21])
        np.testing.assert_array_equal(channel_groups(12, 3), np.repeat([0, 1, 2], 4))

    def test_mask_over_uneven_groups(self):
        mask = causal_mask(5, 3, 1, 3, "A")
        np.testing.assert_array_equal(mask[:, :, 0, 0], [[0, 0, 0], [0, 0, 0], [1, 0, 0], [1, 0, 0], [1, 1, 0]])

    def test_plain_rgb_with_default_filters_is_normalized(self):
        spec = InputSpec(1, 1, 3, quant_levels=3)
        model = _scramble(build_model(ModelConfig(family="ar", quant_levels=3), spec), seed=4)
        assert model.filters == 64
        nll = model.nll_nats(_all_inputs(spec))
        assert math.exp(logsumexp(-nll)) == pytest.approx(1.0, abs=1e-6)

    def test_plain_rgb_with_default_filters_is_causal(self):
        spec = InputSpec(2, 2, 3, quant_levels=4)
        model = _scramble(build_model(ModelConfig(family="ar", quant_levels=4), spec), seed=5)
        _assert_causal(model, trials=200, seed=7)


class TestChannelOrder:
    def test_high_frequency_first(self):
        model = ArModel(InputSpec(2, 2, 3, freq=FREQ), n_layers=2, filters=4)
        assert model.order == [3, 0, 1, 2]

    def test_high_frequency_last(self):
        model = ArModel(InputSpec(2, 2, 3, freq=FREQ), n_layers=2, filters=4, channel_order="hf_last")
        assert model.order == [0, 1, 2, 3]

    def test_plain_model_keeps_image_order(self):
        assert ArModel(InputSpec(2, 2, 3), n_layers=2, filters=3).order == [0, 1, 2]

    def test_logit_shape_for_both_orders(self, rng):
        spec = InputSpec(2, 2, 1, quant_levels=4, freq=FREQ)
        xq = rng.integers(0, 4, size=(3, 2, 2, 2))
        first = _randomized(spec, "hf_first").logits(xq)
        last = _randomized(spec, "hf_last").logits(xq)
        assert first.shape == last.shape == (3, 2, 4, 2, 2)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"n_layers": 1},
        {"filters": 1},
        {"channel_order": "random"},
    ])
    def test_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            ArModel(InputSpec(2, 2, 1, freq=FREQ), **{"n_layers": 2, "filters": 4, **kwargs})

    def test_needs_two_levels(self):
        with pytest.raises(ConfigError):
            ArModel(InputSpec(2, 2, 1, quant_levels=1), n_layers=2, filters=2)

    def test_bits_per_dim(self, rng):
        spec = InputSpec(2, 2, 1, quant_levels=4, freq=FREQ)
        model = _randomized(spec)
        xq = rng.integers(0, 4, size=(4, 2, 2, 2))
        np.testing.assert_allclose(ar_nll(model, xq), model.nll_nats(xq) / (spec.dims * math.log(2)))
