import json
import math

import numpy as np
import pytest

from sparq.analysis import (
    SimReport,
    activation_sparsity,
    bit_toggle_stats,
    empirical_window_probability,
    error_metrics,
    metadata_overhead,
    msb_window_probability,
    pair_zero_fraction,
    synthetic_activations,
    synthetic_weights,
)
from sparq.bitquant import NAMED_CONFIGS
from sparq.datapath import fast_matmul


class TestBitToggleStats:
    def test_hand_enumeration(self):
        stats = bit_toggle_stats(np.array([1, 2, 3, 0], dtype=np.uint8))
        assert stats.nonzero_count == 3
        assert not stats.empty
        # rates run from bit 7 down to bit 0
        assert stats.rates[:6] == (0.0,) * 6
        assert stats.rates[6] == pytest.approx(2 / 3)  # bit 1: values 2, 3
        assert stats.rates[7] == pytest.approx(2 / 3)  # bit 0: values 1, 3

    def test_all_zeros(self):
        stats = bit_toggle_stats(np.zeros(8, dtype=np.uint8))
        assert stats.empty and stats.nonzero_count == 0
        assert stats.rates == (0.0,) * 8

    def test_all_255(self):
        stats = bit_toggle_stats(np.full(5, 255, dtype=np.uint8))
        assert stats.rates == (1.0,) * 8

    def test_rejects_non_uint8(self):
        with pytest.raises(ValueError):
            bit_toggle_stats(np.zeros(4, dtype=np.int8))


class TestMsbWindowProbability:
    MEASURED_RATES = (0.005, 0.092, 0.338, 0.448, 0.0, 0.0, 0.0, 0.0)

    def test_headline_value(self):
        p = msb_window_probability(self.MEASURED_RATES, 4)
        assert abs(p - 0.67) <= 0.005

    def test_certain_bit(self):
        assert msb_window_probability((0.2, 1.0, 0.1, 0.0), 3) == 1.0

    def test_all_clear(self):
        assert msb_window_probability((0.0,) * 8, 8) == 0.0

    def test_monotone_in_each_rate(self):
        base = list(self.MEASURED_RATES)
        p0 = msb_window_probability(base, 4)
        for b in range(4):
            bumped = list(base)
            bumped[b] = min(1.0, bumped[b] + 0.05)
            assert msb_window_probability(bumped, 4) >= p0

    def test_rejects_bad_window(self):
        with pytest.raises(ValueError):
            msb_window_probability((0.1, 0.2), 3)
        with pytest.raises(ValueError):
            msb_window_probability((0.1, 0.2), 0)

    def test_empirical_agrees_with_independence_on_point_mass(self):
        # all values identical: leading bit either always in the window
        # or never
        x = np.full(64, 200, dtype=np.uint8)
        assert empirical_window_probability(x, 4) == 1.0
        x = np.full(64, 9, dtype=np.uint8)
        assert empirical_window_probability(x, 4) == 0.0

    def test_empirical_counts_leading_bits(self):
        x = np.array([128, 64, 32, 16, 8, 0], dtype=np.uint8)
        assert empirical_window_probability(x, 4) == pytest.approx(4 / 5)


class TestErrorMetrics:
    def test_identical(self):
        m = error_metrics(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        assert m["mse"] == 0.0 and m["sqnr_db"] == math.inf

    def test_direct_formula(self):
        m = error_metrics(np.array([10.0]), np.array([8.0]))
        assert m["mse"] == 4.0
        assert m["sqnr_db"] == pytest.approx(10 * math.log10(25.0))

    def test_zero_signal_nonzero_error(self):
        m = error_metrics(np.zeros(3), np.ones(3))
        assert m["sqnr_db"] == -math.inf

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            error_metrics(np.zeros(2), np.zeros(3))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            error_metrics(np.zeros(0), np.zeros(0))


class TestMetadataOverhead:
    @pytest.mark.parametrize(
        "name,vsparq,want",
        [
            ("3opt", True, 3),
            ("5opt", True, 4),
            ("2opt", False, 1),
            ("2opt", True, 2),
            ("3opt", False, 2),
            ("5opt", False, 3),
            ("6opt", True, 4),
            ("6opt", False, 3),
            ("7opt", True, 4),
            ("7opt", False, 3),
        ],
    )
    def test_table(self, name, vsparq, want):
        assert metadata_overhead(NAMED_CONFIGS[name], vsparq) == want


class TestSimReport:
    @staticmethod
    def _report(**overrides):
        kwargs = dict(
            engine="ref",
            config="5opt",
            rounding=True,
            vsparq=True,
            shape_a=(4, 8),
            shape_b=(8, 2),
            mse=0.0,
            sqnr_db=math.inf,
            activation_sparsity=0.5,
            pair_zero_fraction=0.75,
            toggle_rates=(0.0,) * 8,
            metadata_bits_per_activation=4,
        )
        kwargs.update(overrides)
        return SimReport(**kwargs)

    def test_flat_json(self):
        doc = self._report().to_json()
        assert doc["config"] == "5opt"
        assert doc["shape_a"] == [4, 8]
        assert doc["metadata_bits_per_activation"] == 4
        assert all(not isinstance(v, dict) for v in doc.values())

    def test_infinity_survives_json(self):
        text = self._report().dumps()
        assert json.loads(text)["sqnr_db"] == math.inf

    def test_extra_fields_merge(self):
        doc = self._report(extra={"seed": 7}).to_json()
        assert doc["seed"] == 7


class TestSynthetic:
    def test_deterministic(self):
        a = synthetic_activations((32, 32), zero_fraction=0.4, seed=9)
        b = synthetic_activations((32, 32), zero_fraction=0.4, seed=9)
        assert np.array_equal(a, b)
        assert a.dtype == np.uint8

    def test_zero_inflation(self):
        dense = synthetic_activations((64, 64), zero_fraction=0.0, seed=1)
        sparse = synthetic_activations((64, 64), zero_fraction=0.6, seed=1)
        assert activation_sparsity(sparse) > activation_sparsity(dense)
        assert activation_sparsity(sparse) == pytest.approx(0.6, abs=0.05)

    def test_rejects_bad_fraction(self):
        with pytest.raises(ValueError):
            synthetic_activations((4,), zero_fraction=1.5)

    def test_weights_range(self):
        w = synthetic_weights((64, 64), seed=2)
        assert w.dtype == np.int8
        assert int(w.min()) >= -127 and int(w.max()) <= 127


class TestSparsityMeasures:
    def test_activation_sparsity(self):
        assert activation_sparsity(np.array([[1, 0, 3, 4]], dtype=np.uint8)) == 0.25

    def test_pair_zero_fraction(self):
        x = np.array([[1, 0, 3, 4]], dtype=np.uint8)
        assert pair_zero_fraction(x) == 0.5

    def test_pair_zero_fraction_odd_tail_pads(self):
        x = np.array([[1, 2, 3]], dtype=np.uint8)
        assert pair_zero_fraction(x) == 0.5  # (1,2) dense, (3,pad 0) sparse

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            activation_sparsity(np.zeros((0,), dtype=np.uint8))
        with pytest.raises(ValueError):
            pair_zero_fraction(np.zeros((0, 4), dtype=np.uint8))


class TestMseOrderings:
    """Small-scale version of the ablation grid; the full-size run lives
    in the acceptance suite."""

    @staticmethod
    def _mse(a, b, name, rounding, vsparq_on):
        exact = fast_matmul(a, b, None)
        approx = fast_matmul(a, b, NAMED_CONFIGS[name], rounding, vsparq_on)
        return error_metrics(exact, approx)["mse"]

    def test_orderings(self):
        a = synthetic_activations((128, 64), zero_fraction=0.5, seed=33)
        b = synthetic_weights((64, 8), seed=34)
        ladder = ["5opt", "3opt", "2opt"]
        for rounding in (False, True):
            mses = [self._mse(a, b, n, rounding, True) for n in ladder]
            assert mses[0] <= mses[1] <= mses[2]
        for name in ladder:
            assert self._mse(a, b, name, True, True) <= self._mse(a, b, name, False, True)
            assert self._mse(a, b, name, True, True) <= self._mse(a, b, name, True, False)
