"""Expected shortfall, PLA statistics and pricing-call economics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

ES_OBS = 250
ES_TAIL = 6.25  # 2.5 % of 250 observations


class UndefinedStatistic(ValueError):
    """Raised when a statistic has no defined value for the input (e.g. constant ranks)."""


def expected_shortfall(pnls: Sequence[float]) -> float:
    """97.5 % ES of 250 PnLs as a positive loss: mean of the 6.25 worst losses."""
    x = np.asarray(pnls, dtype=float)
    if x.shape != (ES_OBS,):
        raise ValueError(f"expected shortfall needs exactly {ES_OBS} PnLs, got {x.shape}")
    losses = np.sort(-x)[::-1]
    return float((losses[:6].sum() + 0.25 * losses[6]) / ES_TAIL)


def relative_es_error(es_full: float, es_slider: float) -> float | None:
    """|ES_slider - ES_full| / |ES_full|, or None when the benchmark ES is zero."""
    if es_full == 0:
        return None
    return abs(es_slider - es_full) / abs(es_full)


def aggregate_lh_es(es_by_horizon: Mapping[int, float]) -> float:
    """Square-root-of-time cascade: sqrt(sum_j (ES_j * sqrt((h_j - h_{j-1}) / 10))^2)."""
    horizons = sorted(es_by_horizon)
    if not horizons or horizons[0] != 10:
        raise ValueError("liquidity-horizon ES needs the 10-day horizon as its base")
    total = es_by_horizon[10] ** 2
    for prev, h in zip(horizons, horizons[1:]):
        total += es_by_horizon[h] ** 2 * (h - prev) / 10.0
    return math.sqrt(total)


def average_ranks(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    start = 0
    for end in range(1, len(x) + 1):
        if end == len(x) or xs[end] != xs[start]:
            ranks[order[start:end]] = 0.5 * (start + end - 1) + 1.0
            start = end
    return ranks


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("spearman needs two equal-length samples of size >= 2")
    ra, rb = average_ranks(a), average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    den = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if den == 0:
        raise UndefinedStatistic("Spearman correlation undefined: a sample has constant ranks")
    return float(np.clip((ra @ rb) / den, -1.0, 1.0))


def ks_statistic(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov distance between right-continuous empirical CDFs."""
    a, b = np.sort(np.asarray(a, dtype=float)), np.sort(np.asarray(b, dtype=float))
    if a.size < 1 or b.size < 1:
        raise ValueError("ks_statistic needs non-empty samples")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


@dataclass(frozen=True)
class PlaThresholds:
    spearman_green: float = 0.80
    ks_green: float = 0.09
    spearman_red: float = 0.70
    ks_red: float = 0.12


@dataclass(frozen=True)
class PlaResult:
    spearman: float
    ks: float
    zone: str

    def to_dict(self) -> dict:
        return asdict(self)


def classify_pla(rho: float, ks: float, thresholds: PlaThresholds | None = None) -> str:
    t = thresholds or PlaThresholds()
    if rho < t.spearman_red or ks > t.ks_red:
        return "red"
    if rho >= t.spearman_green and ks <= t.ks_green:
        return "green"
    return "amber"


def pla_test(hypothetical: Sequence[float], proxy: Sequence[float],
             thresholds: PlaThresholds | None = None) -> PlaResult:
    rho = spearman(hypothetical, proxy)
    ks = ks_statistic(hypothetical, proxy)
    return PlaResult(rho, ks, classify_pla(rho, ks, thresholds))


@dataclass(frozen=True)
class CostReport:
    calls_full: int
    calls_slider: int

    @property
    def reduction(self) -> float:
        return 1.0 - self.calls_slider / self.calls_full if self.calls_full else 0.0

    def to_dict(self) -> dict:
        return {"calls_full": self.calls_full, "calls_slider": self.calls_slider, "reduction": self.reduction}


def cost_report(scenario_counts: Iterable[int], calibration_counts: Iterable[int]) -> CostReport:
    """Pricing calls for full revaluation vs slider calibration.

    ``scenario_counts`` holds, per trade, the number of scenarios revalued;
    one base valuation per trade is added on top.
    """
    full = sum(int(n) + 1 for n in scenario_counts)
    return CostReport(full, sum(int(c) for c in calibration_counts))
