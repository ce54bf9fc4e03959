"""End-to-end experiment: benchmark revaluation vs Chebyshev Slider proxies."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .market import MarketSnapshot, RiskFactorType, Taxonomy, default_snapshot, flatten, shock_levels, universe_ids
from .pca import build_trade_bases
from .portfolio import AutocallableSpec, generate_portfolio, load_portfolio
from .pricer import GLOBAL_COUNTER, CallCounter, McConfig, TradePricer
from .riskmetrics import (
    PlaThresholds,
    UndefinedStatistic,
    aggregate_lh_es,
    classify_pla,
    cost_report,
    expected_shortfall,
    ks_statistic,
    relative_es_error,
    spearman,
)
from .scenarios import (
    VALID_HORIZONS,
    LiquidityAssignment,
    ScenarioSet,
    build_scenario_sets,
    generate_history,
)
from .slider import ChebyshevSlider, build_calibration_plan, calibrate, compute_domain_boxes

log = logging.getLogger(__name__)

RF_NAMES = {t.value: t for t in RiskFactorType}
# execution settings that must not change results, so they are not echoed into results.json
EXECUTION_FIELDS = ("output_dir", "threads")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 7
    portfolio_size: int = 400
    portfolio_path: str | None = None
    market_path: str | None = None
    universe_size: int = 20
    paths: int = 8192
    substeps_per_period: int = 1
    correlation: float = 0.5
    liquidity_horizons: dict = field(default_factory=lambda: {"Spot": 10, "Rate": 20, "Vol": 60})
    reduced_set: list = field(default_factory=lambda: ["Spot", "Rate"])
    retention: dict = field(default_factory=lambda: {"Spot": None, "Vol": 3, "Rate": 6})
    slide_points: int = 6
    pla_thresholds: dict = field(default_factory=lambda: asdict(PlaThresholds()))
    output_dir: str = "out"
    trades_subset: list | int | None = None
    threads: int = 1
    export_artifacts: bool = False

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RunConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> RunConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def mc(self) -> McConfig:
        return McConfig(self.paths, self.substeps_per_period, self.seed)

    @property
    def assignment(self) -> LiquidityAssignment:
        return LiquidityAssignment({RF_NAMES[k]: int(v) for k, v in self.liquidity_horizons.items()},
                                   frozenset(RF_NAMES[k] for k in self.reduced_set))

    @property
    def retention_map(self) -> dict:
        return {RF_NAMES[k]: v for k, v in self.retention.items()}

    @property
    def thresholds(self) -> PlaThresholds:
        return PlaThresholds(**self.pla_thresholds)


def validate_config(cfg: RunConfig) -> list[str]:
    """Problems that would stop ``cfg`` from running, each as 'field: reason'."""
    out = []
    if not isinstance(cfg.seed, int):
        out.append("seed: must be an integer")
    if cfg.portfolio_path is None:
        if not isinstance(cfg.portfolio_size, int) or cfg.portfolio_size < 100:
            out.append("portfolio_size: must be >= 100 so the 1% ten-underlying bucket is non-empty")
    elif not Path(cfg.portfolio_path).is_file():
        out.append(f"portfolio_path: {cfg.portfolio_path} is not a readable file")
    if cfg.market_path is not None and not Path(cfg.market_path).is_file():
        out.append(f"market_path: {cfg.market_path} is not a readable file")
    if cfg.market_path is None and (not isinstance(cfg.universe_size, int) or cfg.universe_size < 10):
        out.append("universe_size: must be >= 10 so ten-underlying trades exist")
    if not isinstance(cfg.paths, int) or cfg.paths < 2:
        out.append("paths: must be an integer >= 2")
    if not isinstance(cfg.substeps_per_period, int) or cfg.substeps_per_period < 1:
        out.append("substeps_per_period: must be an integer >= 1")
    if not -1.0 / (max(cfg.universe_size, 2) - 1) < cfg.correlation < 1.0:
        out.append("correlation: outside the positive-definite range for the universe")
    if set(cfg.liquidity_horizons) != set(RF_NAMES):
        out.append(f"liquidity_horizons: need exactly the keys {sorted(RF_NAMES)}")
    else:
        for k, h in cfg.liquidity_horizons.items():
            if h not in VALID_HORIZONS:
                out.append(f"liquidity_horizons: {k} horizon {h} not in {VALID_HORIZONS}")
    if not cfg.reduced_set or any(k not in RF_NAMES for k in cfg.reduced_set):
        out.append(f"reduced_set: must be a non-empty subset of {sorted(RF_NAMES)}")
    if set(cfg.retention) != set(RF_NAMES):
        out.append(f"retention: need exactly the keys {sorted(RF_NAMES)}")
    else:
        for k, v in cfg.retention.items():
            if v is not None and (not isinstance(v, int) or v < 1):
                out.append(f"retention: {k} must be null (all components) or an integer >= 1")
            elif v is not None and v > 250:
                out.append(f"retention: {k} cannot exceed the 250 history observations")
    if not isinstance(cfg.slide_points, int) or cfg.slide_points < 2:
        out.append("slide_points: interpolation needs at least 2 Chebyshev points")
    try:
        cfg.thresholds
    except TypeError as exc:
        out.append(f"pla_thresholds: {exc}")
    if not isinstance(cfg.threads, int) or cfg.threads < 1:
        out.append("threads: must be an integer >= 1")
    out_dir = Path(cfg.output_dir)
    probe = out_dir if out_dir.exists() else out_dir.parent if str(out_dir.parent) else Path(".")
    if probe.exists() and not probe.is_dir():
        out.append(f"output_dir: {cfg.output_dir} is not a directory")
    return out


@dataclass
class TradeOutcome:
    trade: AutocallableSpec
    d: int
    base_pv: float
    full_pnl: dict[str, np.ndarray]
    slider_pnl: dict[str, np.ndarray]
    benchmark_calls: int
    calibration_calls: int
    post_calibration_calls: int
    clamped_coordinates: int
    slider: ChebyshevSlider | None = None


@dataclass
class RunContext:
    config: RunConfig
    snapshot: MarketSnapshot
    universe: Taxonomy
    sets: list[ScenarioSet]
    current: Any
    stress: Any
    full_counter: CallCounter = field(default_factory=lambda: CallCounter(GLOBAL_COUNTER))
    slider_counter: CallCounter = field(default_factory=lambda: CallCounter(GLOBAL_COUNTER))
    basis_cache: dict = field(default_factory=dict)


def process_trade(trade: AutocallableSpec, ctx: RunContext) -> TradeOutcome:
    """Revalue one trade on every scenario set, then build and evaluate its slider."""
    cfg = ctx.config
    pricer = TradePricer(trade, ctx.snapshot, cfg.mc, ctx.full_counter)
    tax = pricer.taxonomy
    base_levels = flatten(ctx.snapshot, tax)

    base_pv = float(pricer.price_levels(base_levels)[0])
    full_pnl, trade_sets = {}, []
    for s in ctx.sets:
        shocks, mask = s.for_taxonomy(ctx.universe, tax)
        trade_sets.append((s, shocks, mask))
        full_pnl[s.label] = pricer.price_levels(shock_levels(base_levels, shocks, tax, mask)) - base_pv
    benchmark_calls = 1 + sum(len(v) for v in full_pnl.values())

    bases = build_trade_bases(tax, ctx.current, cfg.retention_map, ctx.basis_cache)
    cur = ctx.current.for_taxonomy(tax)
    strs = ctx.stress.for_taxonomy(tax)
    masks = {p: [m for s, _, m in trade_sets if s.period == p] for p in ("current", "stress")}
    boxes = compute_domain_boxes(bases, cur, strs, masks["current"] or None, masks["stress"] or None)
    plan = build_calibration_plan(bases, boxes, cfg.slide_points)
    before = ctx.slider_counter.value
    prices = pricer.price_levels(plan.levels(base_levels), counter=ctx.slider_counter)
    slider = calibrate(plan, prices, trade.trade_id)
    calibrated_at = ctx.slider_counter.value

    slider_pnl, clamped = {}, 0
    for s, shocks, mask in trade_sets:
        coords = bases.project(shocks, mask)
        clamped += int(np.sum((coords < slider.boxes[:, 0]) | (coords > slider.boxes[:, 1])))
        slider_pnl[s.label] = slider.evaluate_coords(coords) - slider.base_value
    return TradeOutcome(
        trade=trade, d=bases.d, base_pv=base_pv, full_pnl=full_pnl, slider_pnl=slider_pnl,
        benchmark_calls=benchmark_calls, calibration_calls=calibrated_at - before,
        post_calibration_calls=ctx.slider_counter.value - calibrated_at, clamped_coordinates=clamped,
        slider=slider if cfg.export_artifacts else None,
    )


def _pla(full: np.ndarray, proxy: np.ndarray, thresholds: PlaThresholds) -> dict:
    try:
        rho = spearman(full, proxy)
    except UndefinedStatistic:
        return {"spearman": None, "ks": ks_statistic(full, proxy), "zone": None}
    ks = ks_statistic(full, proxy)
    return {"spearman": rho, "ks": ks, "zone": classify_pla(rho, ks, thresholds)}


def _set_metrics(s: ScenarioSet, full: np.ndarray, proxy: np.ndarray, thresholds: PlaThresholds) -> dict:
    es_f, es_s = expected_shortfall(full), expected_shortfall(proxy)
    out = {"es_full": es_f, "es_slider": es_s, "relative_es_error": relative_es_error(es_f, es_s)}
    if s.is_pla_set:
        out["pla"] = _pla(full, proxy, thresholds)
    return out


def _lh_aggregates(sets: list[ScenarioSet], es: Mapping[str, dict]) -> dict:
    families: dict[str, dict[int, str]] = {}
    for s in sets:
        families.setdefault(f"{s.period}_{s.rf_set}", {})[s.horizon] = s.label
    out = {}
    for fam, labels in families.items():
        full = aggregate_lh_es({h: es[lab]["es_full"] for h, lab in labels.items()})
        prox = aggregate_lh_es({h: es[lab]["es_slider"] for h, lab in labels.items()})
        out[fam] = {"es_full": full, "es_slider": prox, "relative_es_error": relative_es_error(full, prox)}
    return out


def select_trades(trades: list[AutocallableSpec], subset) -> list[AutocallableSpec]:
    if subset is None:
        return trades
    if isinstance(subset, int):
        return trades[:subset]
    ids = [subset] if isinstance(subset, str) else list(subset)
    by_id = {t.trade_id: t for t in trades}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ConfigError(f"trades_subset: unknown trade ids {missing}")
    return [by_id[i] for i in ids]


@dataclass
class RunResult:
    results: dict
    cost: dict
    outcomes: list[TradeOutcome]
    sets: list[ScenarioSet]
    portfolio_pnl: dict[str, tuple[np.ndarray, np.ndarray]]


def prepare(cfg: RunConfig) -> tuple[RunContext, list[AutocallableSpec]]:
    if cfg.market_path:
        snapshot = MarketSnapshot.from_dict(json.loads(Path(cfg.market_path).read_text()))
    else:
        snapshot = default_snapshot(universe_ids(cfg.universe_size), cfg.seed, cfg.correlation)
    universe = Taxonomy(snapshot.underlyings)
    if cfg.portfolio_path:
        trades = load_portfolio(cfg.portfolio_path)
    else:
        trades = generate_portfolio(cfg.portfolio_size, list(universe.underlyings), cfg.seed, snapshot.spots)
    outside = sorted({u for t in trades for u in t.underlyings} - set(universe.underlyings))
    if outside:
        raise ConfigError(f"portfolio references underlyings missing from the market: {outside}")
    trades = select_trades(trades, cfg.trades_subset)
    current = generate_history(universe, "current", cfg.seed)
    stress = generate_history(universe, "stress", cfg.seed)
    sets = build_scenario_sets(current, stress, cfg.assignment)
    return RunContext(cfg, snapshot, universe, sets, current, stress), trades


def run(cfg: RunConfig, write: bool = True) -> RunResult:
    bad = validate_config(cfg)
    if bad:
        raise ConfigError("; ".join(bad))
    started = time.perf_counter()
    ctx, trades = prepare(cfg)
    log.info("pricing %d trades on %d scenario sets with %d paths", len(trades), len(ctx.sets), cfg.paths)

    def work(item):
        i, t = item
        out = process_trade(t, ctx)
        if (i + 1) % 20 == 0 or i + 1 == len(trades):
            log.info("  %d/%d trades done (%.0fs)", i + 1, len(trades), time.perf_counter() - started)
        return out

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            outcomes = list(pool.map(work, enumerate(trades)))
    else:
        outcomes = [work(x) for x in enumerate(trades)]

    th = cfg.thresholds
    portfolio_pnl, port_sets = {}, {}
    for s in ctx.sets:
        full = np.sum([o.full_pnl[s.label] for o in outcomes], axis=0)
        prox = np.sum([o.slider_pnl[s.label] for o in outcomes], axis=0)
        portfolio_pnl[s.label] = (full, prox)
        port_sets[s.label] = _set_metrics(s, full, prox, th)

    trade_rows = []
    for o in outcomes:
        per_set = {s.label: _set_metrics(s, o.full_pnl[s.label], o.slider_pnl[s.label], th) for s in ctx.sets}
        trade_rows.append({
            "trade_id": o.trade.trade_id,
            "n_underlyings": o.trade.n_underlyings,
            "slider_dimension": o.d,
            "calibration_calls": o.calibration_calls,
            "benchmark_calls": o.benchmark_calls,
            "base_pv": o.base_pv,
            "sets": per_set,
            "lh_aggregates": _lh_aggregates(ctx.sets, per_set),
        })

    report = cost_report([o.benchmark_calls - 1 for o in outcomes], [o.calibration_calls for o in outcomes])
    by_u: dict[int, list[int]] = {}
    for o in outcomes:
        by_u.setdefault(o.trade.n_underlyings, []).append(o.calibration_calls)
    cost = {
        **report.to_dict(),
        "trades": len(outcomes),
        "counter_full": ctx.full_counter.value,
        "counter_slider": ctx.slider_counter.value,
        "average_calibration_calls": report.calls_slider / max(len(outcomes), 1),
        "average_benchmark_calls": report.calls_full / max(len(outcomes), 1),
        "calibration_calls_by_underlyings": {str(u): sorted(set(v)) for u, v in sorted(by_u.items())},
        "trades_by_underlyings": {str(u): len(v) for u, v in sorted(by_u.items())},
    }
    results = {
        "config": {k: v for k, v in cfg.to_dict().items() if k not in EXECUTION_FIELDS},
        "scenario_sets": [{"label": s.label, "period": s.period, "rf_set": s.rf_set, "horizon": s.horizon,
                           "shocked_types": [t.value for t in s.shocked_types], "pla_set": s.is_pla_set}
                          for s in ctx.sets],
        "portfolio": {"sets": port_sets, "lh_aggregates": _lh_aggregates(ctx.sets, port_sets)},
        "checks": {
            "clamped_coordinates": sum(o.clamped_coordinates for o in outcomes),
            "post_calibration_pricer_calls": sum(o.post_calibration_calls for o in outcomes),
        },
        "cost": cost,
        "trades": trade_rows,
    }
    result = RunResult(results, cost, outcomes, ctx.sets, portfolio_pnl)
    if write:
        write_reports(result, Path(cfg.output_dir), ctx)
    log.info("done in %.0fs: reduction %.4f", time.perf_counter() - started, report.reduction)
    return result


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n")


def write_reports(result: RunResult, out_dir: Path, ctx: RunContext | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump(result.results, out_dir / "results.json")
    _dump(result.cost, out_dir / "cost_report.json")
    with open(out_dir / "pla_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "scenario_set", "spearman", "ks", "zone", "es_full", "es_slider", "relative_es_error"])
        rows = [("portfolio", result.results["portfolio"]["sets"])]
        rows += [(t["trade_id"], t["sets"]) for t in result.results["trades"]]
        for level, sets in rows:
            for label, m in sets.items():
                if "pla" in m:
                    p = m["pla"]
                    w.writerow([level, label, p["spearman"], p["ks"], p["zone"],
                                m["es_full"], m["es_slider"], m["relative_es_error"]])
    for label, (full, prox) in result.portfolio_pnl.items():
        with open(out_dir / f"pnl_scatter_{label}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "full_pnl", "slider_pnl"])
            for i, (a, b) in enumerate(zip(full, prox)):
                w.writerow([i, repr(float(a)), repr(float(b))])
    if ctx is not None and ctx.config.export_artifacts:
        art = out_dir / "artifacts"
        art.mkdir(exist_ok=True)
        _dump(ctx.snapshot.to_dict(), art / "market.json")
        _dump([o.trade.to_dict() for o in result.outcomes], art / "portfolio.json")
        ctx.current.to_csv(art / "history_current.csv")
        ctx.stress.to_csv(art / "history_stress.csv")
        for s in ctx.sets:
            s.to_csv(art / f"scenarios_{s.label}.csv", ctx.universe)
        _dump([o.slider.to_dict() for o in result.outcomes if o.slider is not None], art / "sliders.json")
