"""Synthetic shock histories and FRTB liquidity-horizon scenario sets.

Histories come from a small factor model so that risk factors of one type are
strongly co-moving (which is what makes per-type PCA truncation effective):

* spots: one market factor with loading 0.7 plus idiosyncratic noise,
  daily log-return vol between 1% and 3% per name;
* vols: global level / term / skew factors (level partly anti-correlated
  with the equity market), a small per-name level and point noise; about
  0.4 vol points per day;
* rates: level / slope / curvature shared by discount and funding, a
  funding basis, spread level and slope; about 3bp per day.

The stress period draws fresh factors with every volatility multiplied by
``STRESS_MULTIPLIER``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .market import (
    CURVE_NAMES,
    EXPIRY_PILLARS,
    MONEYNESS_PILLARS,
    N_CURVE,
    TENOR_PILLARS,
    RiskFactorType,
    Taxonomy,
)

N_OBS = 250
STRESS_MULTIPLIER = 3.0
VALID_HORIZONS = (10, 20, 40, 60, 120)
PERIODS = ("current", "stress")

SPOT_MARKET_LOADING = 0.7
VOL_DAILY = 0.004
RATE_DAILY = 0.0003


@dataclass(frozen=True, eq=False)
class ShockHistory:
    period: str
    taxonomy: Taxonomy
    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if self.period not in PERIODS:
            raise ValueError(f"unknown period {self.period!r}")
        if rows.shape != (N_OBS, self.taxonomy.size):
            raise ValueError(f"history must be {N_OBS} x {self.taxonomy.size}, got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("history contains non-finite shocks")

    def for_taxonomy(self, taxonomy: Taxonomy) -> np.ndarray:
        return self.rows[:, taxonomy.columns_in(self.taxonomy)]

    def to_csv(self, path: str | Path) -> None:
        _write_rows(path, self.taxonomy.labels(), self.rows)


def _name_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 0x4E, *name.encode()]))


def name_parameters(seed: int, name: str) -> tuple[float, float]:
    """(daily spot vol, vol-factor beta) for one underlying."""
    rng = _name_rng(seed, name)
    return float(rng.uniform(0.01, 0.03)), float(rng.uniform(0.8, 1.2))


def generate_history(taxonomy: Taxonomy, period: str, seed: int) -> ShockHistory:
    """Draw 250 daily shock vectors over ``taxonomy`` for ``period``.

    Per-name parameters depend on (seed, name) only, so current and stress
    histories share them; the draws depend on (seed, period).
    """
    if period not in PERIODS:
        raise ValueError(f"unknown period {period!r}")
    kappa = STRESS_MULTIPLIER if period == "stress" else 1.0
    rng = np.random.default_rng(np.random.SeedSequence([seed, PERIODS.index(period) + 1]))
    names = taxonomy.underlyings
    n_names = len(names)
    out = np.empty((N_OBS, taxonomy.size))

    market = rng.standard_normal(N_OBS)
    idio = rng.standard_normal((N_OBS, n_names))
    sig = np.array([name_parameters(seed, u)[0] for u in names])
    idio_w = np.sqrt(1.0 - SPOT_MARKET_LOADING**2)
    out[:, taxonomy.spot] = (SPOT_MARKET_LOADING * market[:, None] + idio_w * idio) * sig

    level = -0.5 * market + np.sqrt(0.75) * rng.standard_normal(N_OBS)
    term = rng.standard_normal(N_OBS)
    skew = rng.standard_normal(N_OBS)
    t = EXPIRY_PILLARS[:, None]
    logm = np.log(MONEYNESS_PILLARS)[None, :]
    term_shape = (np.exp(-t / 2.0) - 0.5) * np.ones_like(logm)
    skew_shape = (logm / 0.4) / np.sqrt(1.0 + t)
    lvl_shape = np.ones((len(EXPIRY_PILLARS), len(MONEYNESS_PILLARS))) / np.sqrt(1.0 + 0.3 * t)
    name_level = rng.standard_normal((N_OBS, n_names))
    point_noise = rng.standard_normal((N_OBS, n_names) + lvl_shape.shape)
    vol_block = np.empty((N_OBS, n_names) + lvl_shape.shape)
    common = (level[:, None, None] * lvl_shape + 0.5 * term[:, None, None] * term_shape
              + 0.5 * skew[:, None, None] * skew_shape)
    for i, u in enumerate(names):
        beta = name_parameters(seed, u)[1]
        vol_block[:, i] = beta * common + 0.2 * name_level[:, i, None, None] * lvl_shape
    vol_block += 0.1 * point_noise
    out[:, taxonomy.vol] = VOL_DAILY * vol_block.reshape(N_OBS, -1)

    tau = TENOR_PILLARS
    slope_shape = (1 - np.exp(-tau / 3.0)) / (tau / 3.0)
    curv_shape = slope_shape - np.exp(-tau / 3.0)
    f = rng.standard_normal((N_OBS, 6))
    noise = rng.standard_normal((N_OBS, len(CURVE_NAMES), N_CURVE))
    discount = f[:, [0]] + 0.6 * f[:, [1]] * slope_shape + 0.4 * f[:, [2]] * curv_shape
    funding = discount + 0.3 * f[:, [3]]
    spread = 0.5 * f[:, [4]] + 0.3 * f[:, [5]] * slope_shape
    rates = np.stack([discount, funding, spread], axis=1) + 0.03 * noise
    out[:, taxonomy.rate] = RATE_DAILY * rates.reshape(N_OBS, -1)

    return ShockHistory(period, taxonomy, kappa * out)


@dataclass(frozen=True)
class LiquidityAssignment:
    horizons: Mapping[RiskFactorType, int] = field(default_factory=lambda: {
        RiskFactorType.SPOT: 10, RiskFactorType.RATE: 20, RiskFactorType.VOL: 60})
    reduced: frozenset = frozenset({RiskFactorType.SPOT, RiskFactorType.RATE})

    def violations(self) -> list[str]:
        out = []
        for t in RiskFactorType:
            h = self.horizons.get(t)
            if h not in VALID_HORIZONS:
                out.append(f"liquidity horizon for {t.value} must be one of {VALID_HORIZONS}, got {h}")
        if not self.reduced:
            out.append("reduced risk-factor set must be non-empty")
        return out

    def members(self, rf_set: str) -> list[RiskFactorType]:
        if rf_set == "extended":
            return list(RiskFactorType)
        if rf_set == "reduced":
            return [t for t in RiskFactorType if t in self.reduced]
        raise ValueError(f"unknown risk-factor set {rf_set!r}")

    def family_horizons(self, rf_set: str) -> list[int]:
        return sorted({10} | {self.horizons[t] for t in self.members(rf_set)})

    def shocked_types(self, rf_set: str, horizon: int) -> list[RiskFactorType]:
        return [t for t in self.members(rf_set) if self.horizons[t] >= horizon]


DEFAULT_FAMILIES = (("current", "extended"), ("current", "reduced"), ("stress", "reduced"))


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    label: str
    period: str
    rf_set: str
    horizon: int
    mask: np.ndarray
    shocks: np.ndarray
    shocked_types: tuple[RiskFactorType, ...] = ()

    @property
    def is_pla_set(self) -> bool:
        # horizon-10 extended (every risk factor shocked) plus all stress sets
        return (self.rf_set == "extended" and self.horizon == 10) or self.period == "stress"

    def for_taxonomy(self, universe: Taxonomy, taxonomy: Taxonomy) -> tuple[np.ndarray, np.ndarray]:
        cols = taxonomy.columns_in(universe)
        return self.shocks[:, cols], self.mask[cols]

    def to_csv(self, path: str | Path, taxonomy: Taxonomy) -> None:
        _write_rows(path, taxonomy.labels(), self.shocks)


def scenario_label(period: str, rf_set: str, horizon: int) -> str:
    return f"{period}_{rf_set}_lh{horizon}"


def build_scenario_sets(current: ShockHistory, stress: ShockHistory,
                        assignment: LiquidityAssignment | None = None,
                        families: Sequence[tuple[str, str]] = DEFAULT_FAMILIES) -> list[ScenarioSet]:
    """Cascade each (period, risk-factor set) family over its liquidity horizons.

    The horizon-``h`` set shocks only risk-factor types whose assigned horizon
    is at least ``h``; all other keys are zero.
    """
    assignment = assignment or LiquidityAssignment()
    if current.taxonomy != stress.taxonomy:
        raise ValueError("current and stress histories must share a taxonomy")
    bad = assignment.violations()
    if bad:
        raise ValueError("; ".join(bad))
    tax = current.taxonomy
    hist = {"current": current, "stress": stress}
    sets = []
    for period, rf_set in families:
        for h in assignment.family_horizons(rf_set):
            types = assignment.shocked_types(rf_set, h)
            mask = tax.type_mask(types)
            mask.setflags(write=False)
            shocks = np.where(mask, hist[period].rows, 0.0)
            shocks.setflags(write=False)
            sets.append(ScenarioSet(scenario_label(period, rf_set, h), period, rf_set, h, mask, shocks,
                                    tuple(types)))
    return sets


def _write_rows(path: str | Path, header: Iterable[str], rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", *header])
        for i, row in enumerate(rows):
            w.writerow([i, *(repr(float(v)) for v in row)])
