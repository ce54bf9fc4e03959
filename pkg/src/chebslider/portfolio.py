"""Randomised worst-of autocallable test portfolio."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

UNDERLYING_COUNTS = (1, 3, 5, 10)
BUCKET_WEIGHTS = {1: 0.20, 3: 0.54, 5: 0.25, 10: 0.01}


@dataclass(frozen=True)
class AutocallableSpec:
    """Worst-of autocallable note.

    Barriers and coupons are ratios of the initial fixings; ``coupon_rate``
    accrues once per observation period. Structural fields are checked on
    construction; economic ordering lives in :meth:`violations` so that pricer
    tests can build degenerate contracts (zero or infinite barriers).
    """

    trade_id: str
    underlyings: tuple[str, ...]
    initial_fixings: tuple[float, ...]
    notional: float
    observation_dates: tuple[float, ...]
    autocall_barrier: float = 1.0
    ki_barrier: float = 0.7
    coupon_rate: float = 0.02
    maturity: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "underlyings", tuple(self.underlyings))
        object.__setattr__(self, "initial_fixings", tuple(float(f) for f in self.initial_fixings))
        object.__setattr__(self, "observation_dates", tuple(float(t) for t in self.observation_dates))
        if self.maturity is None and self.observation_dates:
            object.__setattr__(self, "maturity", self.observation_dates[-1])
        if len(self.underlyings) != len(self.initial_fixings):
            raise ValueError(f"{self.trade_id}: one initial fixing per underlying required")
        if len(set(self.underlyings)) != len(self.underlyings):
            raise ValueError(f"{self.trade_id}: duplicate underlyings")
        if any(f <= 0 for f in self.initial_fixings):
            raise ValueError(f"{self.trade_id}: initial fixings must be positive")
        d = np.asarray(self.observation_dates)
        if d.size == 0 or d[0] <= 0 or np.any(np.diff(d) <= 0):
            raise ValueError(f"{self.trade_id}: observation dates must be positive and strictly increasing")
        if abs(d[-1] - self.maturity) > 1e-12:
            raise ValueError(f"{self.trade_id}: last observation date must equal maturity")

    @property
    def n_underlyings(self) -> int:
        return len(self.underlyings)

    def violations(self) -> list[str]:
        out = []
        if not 0 < self.ki_barrier < self.autocall_barrier:
            out.append("need 0 < ki_barrier < autocall_barrier")
        if self.n_underlyings not in UNDERLYING_COUNTS:
            out.append(f"underlying count {self.n_underlyings} not in {UNDERLYING_COUNTS}")
        if self.notional <= 0:
            out.append("notional must be positive")
        if self.coupon_rate < 0:
            out.append("coupon_rate must be non-negative")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["underlyings"] = list(self.underlyings)
        d["initial_fixings"] = list(self.initial_fixings)
        d["observation_dates"] = list(self.observation_dates)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> AutocallableSpec:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def bucket_sizes(count: int) -> dict[int, int]:
    """Trade count per underlying bucket; rounding slack goes to the 3-underlying bucket."""
    sizes = {u: int(round(w * count)) for u, w in BUCKET_WEIGHTS.items() if u != 3}
    sizes[10] = max(sizes[10], 1)
    sizes[3] = count - sum(sizes.values())
    return {u: sizes[u] for u in UNDERLYING_COUNTS}


def generate_portfolio(count: int, universe: Sequence[str], seed: int,
                       spots: Mapping[str, float] | None = None) -> list[AutocallableSpec]:
    """Draw ``count`` autocallables with the 20/54/25/1 % underlying-count mix.

    Fixings are set within +-10 % of ``spots`` (100 when no spots are given) so
    the book holds seasoned trades rather than only at-the-money issues.
    """
    if count < 100:
        raise ValueError("portfolio needs at least 100 trades so the 10-underlying bucket is non-empty")
    universe = sorted(universe)
    if len(universe) < 10:
        raise ValueError("universe needs at least 10 underlyings")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAC]))
    counts = np.concatenate([np.full(n, u) for u, n in bucket_sizes(count).items()])
    rng.shuffle(counts)
    trades = []
    for i, u in enumerate(counts):
        names = tuple(sorted(rng.choice(universe, size=int(u), replace=False).tolist()))
        level = [100.0 if spots is None else spots[n] for n in names]
        fixings = tuple(round(s * rng.uniform(0.9, 1.1), 4) for s in level)
        n_periods = int(rng.integers(8, 21))
        dates = tuple(0.25 * k for k in range(1, n_periods + 1))
        trades.append(AutocallableSpec(
            trade_id=f"AC{i:04d}",
            underlyings=names,
            initial_fixings=fixings,
            notional=float(rng.integers(1, 11)) * 1e6,
            observation_dates=dates,
            autocall_barrier=round(float(rng.uniform(0.95, 1.05)), 4),
            ki_barrier=round(float(rng.uniform(0.5, 0.8)), 4),
            coupon_rate=round(float(rng.uniform(0.01, 0.03)), 5),
            maturity=dates[-1],
        ))
    return trades


def save_portfolio(trades: Sequence[AutocallableSpec], path: str | Path) -> None:
    Path(path).write_text(json.dumps([t.to_dict() for t in trades], indent=1))


def load_portfolio(path: str | Path) -> list[AutocallableSpec]:
    trades = [AutocallableSpec.from_dict(d) for d in json.loads(Path(path).read_text())]
    for t in trades:
        bad = t.violations()
        if bad:
            raise ValueError(f"{t.trade_id}: {'; '.join(bad)}")
    return trades
