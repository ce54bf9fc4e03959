import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chebslider.market import (
    EXPIRY_PILLARS,
    MONEYNESS_PILLARS,
    TENOR_PILLARS,
    VOL_FLOOR,
    MarketSnapshot,
    RateCurve,
    RiskFactorType,
    Taxonomy,
    VolSurface,
    apply_shocks,
    default_snapshot,
    discount_factor,
    flatten,
    risk_factor_count,
    shock_levels,
    unflatten,
    universe_ids,
    vol_lookup,
)


@pytest.fixture
def snap():
    return default_snapshot(universe_ids(12), seed=3)


class TestVolLookup:
    def test_pillar_reproduction(self, snap):
        srf = snap.surfaces["EQ00"]
        for i, t in enumerate(EXPIRY_PILLARS):
            for j, m in enumerate(MONEYNESS_PILLARS):
                assert vol_lookup(srf, t, m) == pytest.approx(srf.values[i, j], abs=1e-15)

    def test_constant_surface(self):
        srf = VolSurface.flat(0.2)
        for t, m in [(0.0, 0.3), (0.7, 1.01), (4.0, 2.5), (20.0, 0.9)]:
            assert vol_lookup(srf, t, m) == pytest.approx(0.2, abs=1e-15)

    def test_cell_midpoint(self):
        values = np.full((8, 9), 0.3)
        values[0, 0], values[0, 1], values[1, 0], values[1, 1] = 0.1, 0.2, 0.3, 0.4
        srf = VolSurface(values)
        t = 0.5 * (EXPIRY_PILLARS[0] + EXPIRY_PILLARS[1])
        m = 0.5 * (MONEYNESS_PILLARS[0] + MONEYNESS_PILLARS[1])
        assert vol_lookup(srf, t, m) == pytest.approx(0.25, abs=1e-14)

    def test_flat_extrapolation(self, snap):
        srf = snap.surfaces["EQ01"]
        assert vol_lookup(srf, 50.0, 5.0) == srf.values[-1, -1]
        assert vol_lookup(srf, 0.0, 0.01) == srf.values[0, 0]

    def test_rejects_bad_inputs(self, snap):
        with pytest.raises(ValueError):
            vol_lookup(snap.surfaces["EQ00"], -0.1, 1.0)
        with pytest.raises(ValueError):
            vol_lookup(snap.surfaces["EQ00"], 1.0, 0.0)

    @given(st.floats(0.0, 12.0), st.floats(0.3, 2.0))
    @settings(max_examples=100, deadline=None)
    def test_continuity(self, t, m):
        srf = default_snapshot(["EQ00"], seed=1).surfaces["EQ00"]
        d = 1e-7
        assert abs(vol_lookup(srf, t + d, m) - vol_lookup(srf, t, m)) < 1e-4
        assert abs(vol_lookup(srf, t, m + d) - vol_lookup(srf, t, m)) < 1e-4


class TestDiscount:
    def test_zero_time(self):
        assert discount_factor(RateCurve.flat(0.05), 0.0) == 1.0

    def test_flat_curve(self):
        assert discount_factor(RateCurve.flat(0.03), 2.0) == pytest.approx(math.exp(-0.06), rel=1e-15)

    def test_two_pillar_linear(self):
        # zero rates 0.02 at 1y and 0.04 at 3y, elsewhere flat beyond pillars
        tenors = TENOR_PILLARS
        z = np.interp(tenors, [1.0, 3.0], [0.02, 0.04])
        assert discount_factor(RateCurve(z), 2.0) == pytest.approx(math.exp(-0.03 * 2), rel=1e-14)

    @given(st.floats(0.0, 29.0))
    @settings(max_examples=100, deadline=None)
    def test_continuity(self, t):
        c = default_snapshot(["EQ00"], seed=2).curves["discount"]
        assert abs(discount_factor(c, t + 1e-7) - discount_factor(c, t)) < 1e-6


class TestValidation:
    def test_surface_shape(self):
        with pytest.raises(ValueError):
            VolSurface(np.full((8, 8), 0.2))

    def test_surface_positive(self):
        v = np.full((8, 9), 0.2)
        v[3, 3] = 0.0
        with pytest.raises(ValueError):
            VolSurface(v)

    def test_curve_pillars(self):
        with pytest.raises(ValueError):
            RateCurve(np.zeros(31), TENOR_PILLARS[:31])
        bad = TENOR_PILLARS.copy()
        bad[0] = 1 / 365
        with pytest.raises(ValueError):
            RateCurve(np.zeros(32), bad)

    def test_snapshot_needs_three_curves(self, snap):
        curves = dict(snap.curves)
        curves.pop("spread")
        with pytest.raises(ValueError):
            MarketSnapshot(snap.spots, snap.surfaces, curves)

    def test_snapshot_spots_positive(self, snap):
        spots = dict(snap.spots)
        spots["EQ00"] = -1.0
        with pytest.raises(ValueError):
            MarketSnapshot(spots, snap.surfaces, snap.curves)


class TestTaxonomy:
    # closed form U + 72U + 96
    @pytest.mark.parametrize("u,n", [(1, 169), (3, 315), (5, 461), (10, 826)])
    def test_lengths(self, u, n):
        assert risk_factor_count(u) == n
        assert Taxonomy(universe_ids(u)).size == n

    def test_ordering(self):
        tax = Taxonomy(["EQ02", "EQ00"])
        keys = tax.keys
        assert keys[0].instrument == "EQ00" and keys[0].rf_type == RiskFactorType.SPOT
        assert keys[2].rf_type == RiskFactorType.VOL and keys[2].index == 0
        assert keys[2 + 72].instrument == "EQ02"
        assert keys[-96].instrument == "discount" and keys[-1].instrument == "spread"

    def test_columns_in(self):
        uni = Taxonomy(universe_ids(5))
        sub = Taxonomy(["EQ01", "EQ03"])
        cols = sub.columns_in(uni)
        labels = np.array(uni.labels())[cols]
        assert list(labels) == sub.labels()


class TestFlatten:
    def test_round_trip(self, snap):
        tax = Taxonomy(["EQ03", "EQ07", "EQ11"])
        vec = flatten(snap, tax)
        back = unflatten(snap, vec, tax)
        assert np.array_equal(flatten(back, tax), vec)
        assert back.to_dict() == snap.to_dict()

    def test_length_mismatch(self, snap):
        tax = Taxonomy(["EQ00"])
        with pytest.raises(ValueError):
            unflatten(snap, np.zeros(170), tax)

    @given(st.integers(0, 10_000), st.sampled_from([1, 3, 5, 10]))
    @settings(max_examples=25, deadline=None)
    def test_bijection(self, seed, u):
        snap = default_snapshot(universe_ids(10), seed=seed)
        tax = Taxonomy(universe_ids(10)[:u])
        rng = np.random.default_rng(seed)
        vec = flatten(snap, tax) * rng.uniform(0.9, 1.1, tax.size)
        assert np.array_equal(flatten(unflatten(snap, vec, tax), tax), vec)

    def test_json_round_trip(self, snap):
        assert MarketSnapshot.from_dict(snap.to_dict()).to_dict() == snap.to_dict()


class TestShocks:
    def test_zero_shock_identity(self, snap):
        tax = Taxonomy(["EQ00", "EQ05"])
        out = apply_shocks(snap, np.zeros(tax.size), tax)
        assert np.array_equal(flatten(out, tax), flatten(snap, tax))

    def test_spot_log_shock(self, snap):
        tax = Taxonomy(["EQ00"])
        s = np.zeros(tax.size)
        s[0] = math.log(1.1)
        out = apply_shocks(snap, s, tax)
        assert out.spots["EQ00"] == pytest.approx(snap.spots["EQ00"] * 1.1, rel=1e-15)

    def test_vol_floor(self):
        snap = default_snapshot(["EQ00"])
        v = np.full((8, 9), 0.05)
        snap = MarketSnapshot(snap.spots, {"EQ00": VolSurface(v)}, snap.curves)
        tax = Taxonomy(["EQ00"])
        s = np.zeros(tax.size)
        s[tax.vol] = -0.2
        out = apply_shocks(snap, s, tax)
        assert np.all(out.surfaces["EQ00"].values == VOL_FLOOR)

    def test_rate_additive(self, snap):
        tax = Taxonomy(["EQ00"])
        s = np.zeros(tax.size)
        s[tax.rate] = 0.001
        out = apply_shocks(snap, s, tax)
        assert np.allclose(out.curves["funding"].zero_rates, snap.curves["funding"].zero_rates + 0.001,
                           atol=1e-16)

    def test_all_false_mask_identity(self, snap):
        tax = Taxonomy(["EQ00", "EQ01", "EQ02"])
        rng = np.random.default_rng(0)
        out = apply_shocks(snap, rng.normal(0, 0.1, tax.size), tax, np.zeros(tax.size, bool))
        assert np.array_equal(flatten(out, tax), flatten(snap, tax))

    def test_mask_keeps_unshocked(self, snap):
        tax = Taxonomy(["EQ00"])
        base = flatten(snap, tax)
        shocks = np.full(tax.size, 0.01)
        lv = shock_levels(base, shocks, tax, tax.type_mask([RiskFactorType.RATE]))
        assert np.array_equal(lv[tax.spot], base[tax.spot])
        assert np.array_equal(lv[tax.vol], base[tax.vol])
        assert np.allclose(lv[tax.rate], base[tax.rate] + 0.01, atol=1e-16)

    def test_vectorised_rows(self, snap):
        tax = Taxonomy(["EQ00"])
        base = flatten(snap, tax)
        rng = np.random.default_rng(1)
        shocks = rng.normal(0, 0.01, (4, tax.size))
        rows = shock_levels(base, shocks, tax)
        for i in range(4):
            assert np.array_equal(rows[i], shock_levels(base, shocks[i], tax))

    def test_length_mismatch(self, snap):
        with pytest.raises(ValueError):
            apply_shocks(snap, np.zeros(10), Taxonomy(["EQ00"]))
