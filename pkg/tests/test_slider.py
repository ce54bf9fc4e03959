import math
import time

import numpy as np
import pytest

from chebslider.market import RiskFactorType, Taxonomy, default_snapshot, flatten, universe_ids
from chebslider.pca import PcaBasis, TradeBases, build_trade_bases
from chebslider.portfolio import AutocallableSpec
from chebslider.pricer import McConfig, TradePricer
from chebslider.scenarios import build_scenario_sets, generate_history
from chebslider.slider import (
    CalibrationError,
    ChebyshevSlide,
    ChebyshevSlider,
    barycentric_eval,
    barycentric_weights,
    build_calibration_plan,
    calibrate,
    calibration_count,
    chebyshev_nodes,
    compute_domain_boxes,
)

S, V, R = RiskFactorType.SPOT, RiskFactorType.VOL, RiskFactorType.RATE


def axis_bases(u=1):
    """Bases whose coordinates are plain columns of the shock vector."""
    tax = Taxonomy(universe_ids(u))
    ks = {S: u, V: 3, R: 6}
    bases = {}
    for t, k in ks.items():
        sl = tax.slice_of(t)
        n = sl.stop - sl.start
        bases[t] = PcaBasis(t, np.eye(n)[:, :k], np.ones(k), float(k))
    return TradeBases(tax, bases)


def slide_of(values, a=-1.0, b=1.0):
    n = len(values)
    return ChebyshevSlide(0, a, b, chebyshev_nodes(n, a, b), np.asarray(values, float), barycentric_weights(n))


def p5(x):
    return 2 * x**5 - x**3 + 4


class TestNodes:
    def test_two_points(self):
        assert np.allclose(chebyshev_nodes(2), [1, -1], atol=0)

    def test_three_points(self):
        assert np.allclose(chebyshev_nodes(3), [1, 0, -1], atol=1e-16)

    def test_six_on_zero_two(self):
        expected = [1 + math.cos(j * math.pi / 5) for j in range(6)]
        assert np.allclose(chebyshev_nodes(6, 0, 2), expected, atol=1e-15)

    def test_rejects(self):
        with pytest.raises(ValueError):
            chebyshev_nodes(1)
        with pytest.raises(ValueError):
            chebyshev_nodes(6, 1.0, 1.0)


class TestBarycentric:
    def test_node_reproduction(self):
        s = slide_of([3.0, -1.0, 2.5, 7.0, 0.0, 1.0], -0.3, 0.8)
        for x, v in zip(s.nodes, s.values):
            assert barycentric_eval(s, x) == v

    def test_degree_five_exact(self):
        a, b = -1.7, 2.2
        nodes = chebyshev_nodes(6, a, b)
        s = slide_of(p5(nodes), a, b)
        xs = np.random.default_rng(0).uniform(a, b, 500)
        assert np.max(np.abs(s(xs) - p5(xs))) <= 1e-10

    def test_constant(self):
        s = slide_of([4.2] * 6, 0, 5)
        assert np.allclose(s(np.linspace(0, 5, 77)), 4.2, rtol=0, atol=1e-14)

    def test_clamped(self):
        nodes = chebyshev_nodes(6)
        s = slide_of(p5(nodes))
        assert s(3.0) == pytest.approx(p5(1.0), abs=1e-12)
        assert s(-9.0) == pytest.approx(p5(-1.0), abs=1e-12)

    def test_scalar_and_array(self):
        s = slide_of(p5(chebyshev_nodes(6)))
        assert isinstance(s(0.3), float)
        assert s(np.array([0.3, 0.4])).shape == (2,)


class TestBoxes:
    def test_expanded_range(self):
        b = axis_bases()
        rows = np.zeros((250, b.taxonomy.size))
        rows[:, 0] = np.linspace(-2, 3, 250)
        boxes = compute_domain_boxes(b, rows, np.zeros_like(rows))
        assert boxes[0] == pytest.approx([-2.25, 3.25], abs=1e-15)

    def test_degenerate(self):
        b = axis_bases()
        rows = np.zeros((250, b.taxonomy.size))
        boxes = compute_domain_boxes(b, rows, rows)
        assert np.allclose(boxes, [[-1e-6, 1e-6]] * b.d, atol=1e-18)

    def test_covers_both_periods(self):
        b = axis_bases()
        cur = np.zeros((250, b.taxonomy.size))
        strs = np.zeros_like(cur)
        cur[:, 1] = np.linspace(-1, 1, 250)
        strs[:, 1] = np.linspace(-3, 2, 250)
        boxes = compute_domain_boxes(b, cur, strs)
        assert boxes[1] == pytest.approx([-3.25, 2.25], abs=1e-15)


@pytest.fixture(scope="module")
def world():
    uni = Taxonomy(universe_ids(12))
    cur, strs = generate_history(uni, "current", 21), generate_history(uni, "stress", 21)
    return uni, cur, strs, build_scenario_sets(cur, strs)


def real_plan(world, u):
    uni, cur, strs, _ = world
    tax = Taxonomy(uni.underlyings[:u])
    b = build_trade_bases(tax, cur)
    boxes = compute_domain_boxes(b, cur.for_taxonomy(tax), strs.for_taxonomy(tax))
    return build_calibration_plan(b, boxes)


class TestCalibration:
    @pytest.mark.parametrize("u,n", [(1, 61), (3, 73), (5, 85), (10, 115)])
    def test_counts(self, world, u, n):
        plan = real_plan(world, u)
        assert len(plan) == n == calibration_count(plan.bases.d)
        slider = calibrate(plan, np.zeros(n))
        assert slider.calibration_calls == n

    def test_plan_layout(self, world):
        plan = real_plan(world, 1)
        assert np.all(plan.coords[0] == 0) and np.all(plan.shocks[0] == 0)
        for i in range(plan.bases.d):
            block = plan.coords[1 + 6 * i:7 + 6 * i]
            assert np.allclose(block[:, i], chebyshev_nodes(6, *plan.boxes[i]), rtol=0, atol=0)
            assert np.all(np.delete(block, i, axis=1) == 0)

    def test_plan_snapshots(self, world):
        plan = real_plan(world, 1)
        snap = default_snapshot(universe_ids(12))
        snaps = plan.snapshots(snap)
        assert len(snaps) == 61
        assert np.array_equal(flatten(snaps[0], plan.bases.taxonomy), flatten(snap, plan.bases.taxonomy))

    def test_constant_pricer(self, world):
        plan = real_plan(world, 3)
        slider = calibrate(plan, np.full(len(plan), 7.0))
        assert slider.base_value == 7.0
        assert all(np.all(s.values == 7.0) for s in slider.slides)

    def test_misaligned(self, world):
        plan = real_plan(world, 1)
        with pytest.raises(CalibrationError):
            calibrate(plan, np.zeros(60))

    def test_non_finite_named(self, world):
        plan = real_plan(world, 1)
        p = np.zeros(61)
        p[17] = np.nan
        with pytest.raises(CalibrationError, match="scenario 17"):
            calibrate(plan, p, "AC0001")

    def test_portfolio_average(self):
        avg = 0.20 * 61 + 0.54 * 73 + 0.25 * 85 + 0.01 * 115
        assert avg == pytest.approx(74.02)
        assert 70 <= avg <= 85


@pytest.fixture(scope="module")
def calibrated(world):
    plan = real_plan(world, 3)
    rng = np.random.default_rng(0)
    coef = rng.normal(size=(plan.bases.d, 6))
    centres = plan.boxes.mean(axis=1)
    scales = 0.5 * np.diff(plan.boxes, axis=1)[:, 0]

    def f(x):
        z = (np.atleast_2d(x) - centres) / scales
        return 1.5 + sum(np.polynomial.polynomial.polyval(z[:, i], coef[i]) for i in range(len(coef)))

    return plan, f, calibrate(plan, f(plan.coords))


class TestExactness:
    def test_additive_polynomials(self, calibrated):
        plan, f, slider = calibrated
        rng = np.random.default_rng(1)
        x = rng.uniform(plan.boxes[:, 0], plan.boxes[:, 1], size=(1000, plan.bases.d))
        assert np.max(np.abs(slider.evaluate_coords(x) - f(x))) <= 1e-9

    def test_base_value(self, calibrated):
        plan, f, slider = calibrated
        assert slider.evaluate_coords(np.zeros(plan.bases.d)) == slider.base_value
        assert slider.evaluate(np.zeros(plan.bases.taxonomy.size)) == slider.base_value

    def test_calibration_points(self, calibrated):
        plan, f, slider = calibrated
        prices = f(plan.coords)
        out = slider.evaluate_coords(plan.coords)
        assert np.max(np.abs(out - prices)) <= 1e-9 * np.max(np.abs(prices))
        back = slider.evaluate(plan.shocks)
        assert np.max(np.abs(back - prices)) <= 1e-9 * np.max(np.abs(prices))

    def test_no_cross_terms(self, world):
        plan = real_plan(world, 1)
        f = plan.coords[:, 0] * plan.coords[:, 1]
        slider = calibrate(plan, f)
        x = np.random.default_rng(2).uniform(plan.boxes[:, 0], plan.boxes[:, 1], size=(1000, plan.bases.d))
        assert np.all(slider.evaluate_coords(x) == 0.0)

    def test_speed(self, calibrated):
        plan, f, slider = calibrated
        x = np.random.default_rng(3).uniform(plan.boxes[:, 0], plan.boxes[:, 1], size=(20000, plan.bases.d))
        slider.evaluate_coords(x[:10])
        t0 = time.perf_counter()
        slider.evaluate_coords(x)
        rate = len(x) / (time.perf_counter() - t0)
        assert rate >= 1e4

    def test_json_round_trip(self, calibrated):
        plan, f, slider = calibrated
        again = ChebyshevSlider.from_json(slider.to_json())
        x = np.random.default_rng(4).uniform(plan.boxes[:, 0], plan.boxes[:, 1], size=(50, plan.bases.d))
        assert np.array_equal(again.evaluate_coords(x), slider.evaluate_coords(x))
        assert again.calibration_calls == slider.calibration_calls

    def test_dimension_mismatch(self, calibrated):
        plan, f, slider = calibrated
        with pytest.raises(ValueError):
            slider.evaluate(np.zeros(plan.bases.taxonomy.size + 1))


class TestOnPricer:
    def test_scenarios_inside_box_and_reuse(self, world):
        uni, cur, strs, sets = world
        t = AutocallableSpec("S1", ("EQ00", "EQ01", "EQ02"), (100.0, 100.0, 100.0), 1e6,
                             tuple(0.25 * k for k in range(1, 9)))
        snap = default_snapshot(uni.underlyings)
        pr = TradePricer(t, snap, McConfig(paths=1024))
        tax = pr.taxonomy
        b = build_trade_bases(tax, cur)
        trade_sets = [s.for_taxonomy(uni, tax) for s in sets]
        masks = {p: [m for s, (_, m) in zip(sets, trade_sets) if s.period == p] for p in ("current", "stress")}
        boxes = compute_domain_boxes(b, cur.for_taxonomy(tax), strs.for_taxonomy(tax),
                                     masks["current"], masks["stress"])
        plan = build_calibration_plan(b, boxes)
        slider = calibrate(plan, pr.price_levels(plan.levels(flatten(snap, tax))), t.trade_id)
        before = pr.counter.value
        for sh, m in trade_sets:
            c = b.project(sh, m)
            assert np.all((c >= boxes[:, 0]) & (c <= boxes[:, 1]))
            assert np.all(np.isfinite(slider.evaluate(sh, m)))
        assert pr.counter.value == before
