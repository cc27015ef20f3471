import numpy as np
import pytest

from sparq.bitquant import (
    NAMED_CONFIGS,
    TrimConfig,
    TrimmedValue,
    dequant,
    dequant_lut,
    select_window,
    trim,
    trim_wide,
    wide_dequant_lut,
)

from oracles import oracle_trim, oracle_trim_wide, oracle_window

ALL_CONFIGS = sorted(NAMED_CONFIGS)
N4_CONFIGS = [n for n in ALL_CONFIGS if NAMED_CONFIGS[n].bits == 4]


class TestTrimConfig:
    def test_named_table(self):
        assert NAMED_CONFIGS["5opt"] == TrimConfig(4, (4, 3, 2, 1, 0))
        assert NAMED_CONFIGS["3opt"] == TrimConfig(4, (4, 2, 0))
        assert NAMED_CONFIGS["2opt"] == TrimConfig(4, (4, 0))
        assert NAMED_CONFIGS["6opt"] == TrimConfig(3, (5, 4, 3, 2, 1, 0))
        assert NAMED_CONFIGS["7opt"] == TrimConfig(2, (6, 5, 4, 3, 2, 1, 0))

    def test_named_constructor(self):
        assert TrimConfig.named("3opt") is NAMED_CONFIGS["3opt"]
        with pytest.raises(ValueError):
            TrimConfig.named("4opt")

    @pytest.mark.parametrize(
        "bits,placements",
        [
            (1, (7, 0)),  # width out of range
            (5, (3, 0)),
            (4, ()),  # empty
            (4, (4, 4, 0)),  # not strictly decreasing
            (4, (0, 4)),  # increasing
            (4, (4, 2, 1)),  # lowest not zero
            (4, (3, 2, 0)),  # top window misses bit 7
            (4, (5, 4, 0)),  # placement above 8 - bits
        ],
    )
    def test_rejects_bad_tables(self, bits, placements):
        with pytest.raises(ValueError):
            TrimConfig(bits, placements)

    def test_shift_ctrl_bits(self):
        widths = {name: NAMED_CONFIGS[name].shift_ctrl_bits for name in ALL_CONFIGS}
        assert widths == {"5opt": 3, "3opt": 2, "2opt": 1, "6opt": 3, "7opt": 3}


class TestSelectWindow:
    def test_value_27(self):
        assert select_window(27, NAMED_CONFIGS["5opt"]) == 1
        assert select_window(27, NAMED_CONFIGS["3opt"]) == 2
        assert select_window(27, NAMED_CONFIGS["2opt"]) == 4

    def test_value_33(self):
        assert select_window(33, NAMED_CONFIGS["5opt"]) == 2

    @pytest.mark.parametrize("name", ALL_CONFIGS)
    def test_zero(self, name):
        assert select_window(0, NAMED_CONFIGS[name]) == 0

    @pytest.mark.parametrize("name", ALL_CONFIGS)
    def test_matches_enumeration_oracle(self, name):
        cfg = NAMED_CONFIGS[name]
        for x in range(256):
            assert select_window(x, cfg) == oracle_window(x, cfg.placements, cfg.bits)

    def test_rejects_out_of_range(self):
        cfg = NAMED_CONFIGS["5opt"]
        with pytest.raises(ValueError):
            select_window(256, cfg)
        with pytest.raises(ValueError):
            select_window(-1, cfg)


class TestTrim:
    def test_value_27_no_rounding(self):
        t = trim(27, NAMED_CONFIGS["5opt"])
        assert (t.mantissa, t.shift, t.saturated) == (0b1101, 1, False)
        assert dequant(t) == 26

    def test_value_27_rounding(self):
        t = trim(27, NAMED_CONFIGS["3opt"], rounding=True)
        assert (t.mantissa, t.shift, t.saturated) == (0b0111, 2, False)
        assert dequant(t) == 28

    def test_saturation_clamp(self):
        t = trim(255, NAMED_CONFIGS["5opt"], rounding=True)
        assert (t.mantissa, t.shift, t.saturated) == (0b1111, 4, True)
        assert dequant(t) == 240

    @pytest.mark.parametrize("name", N4_CONFIGS)
    @pytest.mark.parametrize("rounding", [False, True])
    def test_small_values_exact(self, name, rounding):
        t = trim(7, NAMED_CONFIGS[name], rounding)
        assert (t.mantissa, t.shift, t.saturated) == (0b0111, 0, False)

    @pytest.mark.parametrize("name", ALL_CONFIGS)
    @pytest.mark.parametrize("rounding", [False, True])
    def test_matches_oracle_exhaustively(self, name, rounding):
        cfg = NAMED_CONFIGS[name]
        for x in range(256):
            t = trim(x, cfg, rounding)
            assert (t.mantissa, t.shift, t.saturated) == oracle_trim(
                x, cfg.placements, cfg.bits, rounding
            )

    @pytest.mark.parametrize("name", ALL_CONFIGS)
    def test_exact_below_window(self, name):
        cfg = NAMED_CONFIGS[name]
        for x in range(1 << cfg.bits):
            for rounding in (False, True):
                assert dequant(trim(x, cfg, rounding)) == x

    @pytest.mark.parametrize("name", ALL_CONFIGS)
    def test_truncation_bound(self, name):
        cfg = NAMED_CONFIGS[name]
        for x in range(256):
            t = trim(x, cfg)
            err = x - dequant(t)
            assert 0 <= err <= (1 << t.shift) - 1

    @pytest.mark.parametrize("name", ALL_CONFIGS)
    def test_rounding_bound(self, name):
        cfg = NAMED_CONFIGS[name]
        for x in range(256):
            t = trim(x, cfg, rounding=True)
            err = x - dequant(t)
            if t.saturated:
                assert 0 <= err <= (1 << t.shift) - 1
            else:
                assert abs(err) <= (1 << t.shift) >> 1

    @pytest.mark.parametrize("name", ALL_CONFIGS)
    def test_idempotent_without_rounding(self, name):
        cfg = NAMED_CONFIGS[name]
        for x in range(256):
            t = trim(x, cfg)
            assert trim(dequant(t), cfg) == t

    def test_invariants_hold_everywhere(self):
        for name in ALL_CONFIGS:
            cfg = NAMED_CONFIGS[name]
            for rounding in (False, True):
                for x in range(256):
                    t = trim(x, cfg, rounding)
                    assert 0 <= t.mantissa < (1 << cfg.bits)
                    assert t.shift in cfg.placements
                    assert dequant(t) <= 255


class TestPlacementRichnessMonotonicity:
    """Finer placement sets dominate coarser ones.

    With rounding, the saturation clamp creates a handful of values
    where a finer config saturates at a low window while a coarser one
    jumps to a higher window and rounds exactly; those are pinned here
    rather than glossed over.
    """

    LADDER = ("5opt", "3opt", "2opt")

    @staticmethod
    def _err(x, name, rounding):
        t = trim(x, NAMED_CONFIGS[name], rounding)
        return abs(x - dequant(t)), t.saturated

    def test_no_rounding_monotone_everywhere(self):
        for x in range(256):
            errs = [self._err(x, n, False)[0] for n in self.LADDER]
            assert errs[0] <= errs[1] <= errs[2], (x, errs)

    def test_rounding_monotone_unless_finer_saturates(self):
        violations = set()
        for x in range(256):
            for fine, coarse in zip(self.LADDER, self.LADDER[1:]):
                fine_err, fine_sat = self._err(x, fine, True)
                coarse_err, _ = self._err(x, coarse, True)
                if fine_err > coarse_err:
                    violations.add(x)
                    assert fine_sat, (x, fine, coarse)
        assert violations == {63, 125, 126, 127}


class TestTrimWide:
    def test_width8_identity(self):
        for x in (0, 3, 200, 255):
            t = trim_wide(x, 8)
            assert (t.mantissa, t.shift, t.saturated) == (x, 0, False)

    def test_width6_rounding(self):
        t = trim_wide(201, 6, rounding=True)
        assert (t.mantissa, t.shift, t.saturated) == (0b110010, 2, False)
        assert dequant(t) == 200

    def test_width4_small_exact(self):
        t = trim_wide(3, 4)
        assert (t.mantissa, t.shift, t.saturated) == (0b0011, 0, False)

    @pytest.mark.parametrize("width", [4, 6, 8])
    @pytest.mark.parametrize("rounding", [False, True])
    def test_matches_oracle_exhaustively(self, width, rounding):
        for x in range(256):
            t = trim_wide(x, width, rounding)
            assert (t.mantissa, t.shift, t.saturated) == oracle_trim_wide(x, width, rounding)

    @pytest.mark.parametrize("width", [3, 5, 7, 9, 10])
    def test_rejects_bad_width(self, width):
        with pytest.raises(ValueError):
            trim_wide(100, width)


class TestDequant:
    def test_examples(self):
        assert dequant(TrimmedValue(0b1101, 1)) == 26
        assert dequant(TrimmedValue(0, 0)) == 0
        assert dequant(TrimmedValue(0b1000, 2)) == 32

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            dequant(TrimmedValue(-1, 0))
        with pytest.raises(ValueError):
            dequant(TrimmedValue(255, 4))  # 255 << 4 > 255


class TestLookupTables:
    @pytest.mark.parametrize("name", ALL_CONFIGS)
    @pytest.mark.parametrize("rounding", [False, True])
    def test_narrow_lut_matches_scalar(self, name, rounding):
        cfg = NAMED_CONFIGS[name]
        lut = dequant_lut(cfg, rounding)
        assert lut.dtype == np.int32 and lut.shape == (256,)
        for x in range(256):
            assert lut[x] == dequant(trim(x, cfg, rounding))

    @pytest.mark.parametrize("width", [4, 6, 8])
    @pytest.mark.parametrize("rounding", [False, True])
    def test_wide_lut_matches_scalar(self, width, rounding):
        lut = wide_dequant_lut(width, rounding)
        for x in range(256):
            assert lut[x] == dequant(trim_wide(x, width, rounding))

    def test_luts_are_read_only(self):
        lut = dequant_lut(NAMED_CONFIGS["5opt"], False)
        with pytest.raises(ValueError):
            lut[0] = 1
