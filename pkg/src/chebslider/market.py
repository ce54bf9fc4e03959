"""Risk-factor taxonomy, market snapshot and shock conventions.

A trade's pricing input is flattened into a fixed-order vector of risk
factors::

    spots (one per underlying, sorted by id)
    vol surfaces (72 points per underlying, row-major expiry x moneyness)
    rate curves (discount, funding, spread; 32 tenors each)

so that a trade on ``U`` underlyings sees ``U + 72 U + 96`` risk factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

EXPIRY_PILLARS = np.array([1 / 12, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0])
MONEYNESS_PILLARS = np.array([0.5, 0.7, 0.85, 0.95, 1.0, 1.05, 1.15, 1.3, 1.5])
TENOR_PILLARS = np.array(
    [1 / 52, 2 / 52, 1 / 12, 2 / 12, 0.25, 4 / 12, 0.5, 0.75,
     1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 3.5,
     4.0, 4.5, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0,
     12.0, 15.0, 17.0, 20.0, 22.0, 25.0, 27.0, 30.0]
)
CURVE_NAMES = ("discount", "funding", "spread")

N_SURFACE = len(EXPIRY_PILLARS) * len(MONEYNESS_PILLARS)  # 72
N_CURVE = len(TENOR_PILLARS)  # 32
N_RATES = N_CURVE * len(CURVE_NAMES)  # 96

VOL_FLOOR = 1e-4


class RiskFactorType(str, Enum):
    SPOT = "Spot"
    VOL = "Vol"
    RATE = "Rate"


class RiskFactorKey(NamedTuple):
    rf_type: RiskFactorType
    instrument: str
    index: int


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_increasing(name: str, pillars: np.ndarray) -> None:
    if np.any(np.diff(pillars) <= 0):
        raise ValueError(f"{name} must be strictly increasing")


@dataclass(frozen=True, eq=False)
class VolSurface:
    """Implied vol grid of 8 expiries by 9 moneyness ratios."""

    values: np.ndarray
    expiry_pillars: np.ndarray = field(default_factory=lambda: EXPIRY_PILLARS.copy())
    moneyness_pillars: np.ndarray = field(default_factory=lambda: MONEYNESS_PILLARS.copy())

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "expiry_pillars", _frozen(self.expiry_pillars))
        object.__setattr__(self, "moneyness_pillars", _frozen(self.moneyness_pillars))
        shape = (len(EXPIRY_PILLARS), len(MONEYNESS_PILLARS))
        if (self.values.shape != shape or self.expiry_pillars.shape != shape[:1]
                or self.moneyness_pillars.shape != shape[1:]):
            raise ValueError(f"vol surface needs {N_SURFACE} values on an 8x9 grid, got {self.values.shape}")
        if not np.all(self.values > 0):
            raise ValueError("vol surface values must be positive")
        _check_increasing("expiry_pillars", self.expiry_pillars)
        _check_increasing("moneyness_pillars", self.moneyness_pillars)

    @classmethod
    def flat(cls, vol: float) -> VolSurface:
        return cls(np.full((len(EXPIRY_PILLARS), len(MONEYNESS_PILLARS)), vol))

    def to_dict(self) -> dict:
        return {
            "expiry_pillars": self.expiry_pillars.tolist(),
            "moneyness_pillars": self.moneyness_pillars.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> VolSurface:
        return cls(np.asarray(d["values"]), np.asarray(d["expiry_pillars"]), np.asarray(d["moneyness_pillars"]))


@dataclass(frozen=True, eq=False)
class RateCurve:
    """Continuously-compounded zero curve on 32 tenor pillars."""

    zero_rates: np.ndarray
    tenor_pillars: np.ndarray = field(default_factory=lambda: TENOR_PILLARS.copy())

    def __post_init__(self):
        object.__setattr__(self, "zero_rates", _frozen(self.zero_rates))
        object.__setattr__(self, "tenor_pillars", _frozen(self.tenor_pillars))
        if self.tenor_pillars.shape != (N_CURVE,) or self.zero_rates.shape != (N_CURVE,):
            raise ValueError(f"rate curve needs exactly {N_CURVE} pillars")
        _check_increasing("tenor_pillars", self.tenor_pillars)
        if self.tenor_pillars[0] < 1 / 52 - 1e-12 or self.tenor_pillars[-1] > 30 + 1e-12:
            raise ValueError("tenor pillars must lie within [1/52, 30]")

    @classmethod
    def flat(cls, rate: float) -> RateCurve:
        return cls(np.full(N_CURVE, rate))

    def to_dict(self) -> dict:
        return {"tenor_pillars": self.tenor_pillars.tolist(), "zero_rates": self.zero_rates.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> RateCurve:
        return cls(np.asarray(d["zero_rates"]), np.asarray(d["tenor_pillars"]))


@dataclass(frozen=True, eq=False)
class MarketSnapshot:
    spots: Mapping[str, float]
    surfaces: Mapping[str, VolSurface]
    curves: Mapping[str, RateCurve]
    correlation: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "spots", {k: float(v) for k, v in sorted(self.spots.items())})
        object.__setattr__(self, "surfaces", dict(sorted(self.surfaces.items())))
        if set(self.curves) != set(CURVE_NAMES):
            raise ValueError(f"snapshot needs exactly the curves {CURVE_NAMES}, got {sorted(self.curves)}")
        object.__setattr__(self, "curves", {name: self.curves[name] for name in CURVE_NAMES})
        if set(self.spots) != set(self.surfaces):
            raise ValueError("snapshot needs exactly one vol surface per underlying")
        if any(s <= 0 for s in self.spots.values()):
            raise ValueError("spot prices must be positive")
        n = len(self.spots)
        lower = -1.0 / (n - 1) if n > 1 else -1.0
        if not lower < self.correlation < 1.0:
            raise ValueError(f"correlation {self.correlation} outside ({lower:.4g}, 1)")

    @property
    def underlyings(self) -> list[str]:
        return list(self.spots)

    def to_dict(self) -> dict:
        return {
            "spots": dict(self.spots),
            "surfaces": {k: s.to_dict() for k, s in self.surfaces.items()},
            "curves": {k: c.to_dict() for k, c in self.curves.items()},
            "correlation": self.correlation,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> MarketSnapshot:
        return cls(
            spots=dict(d["spots"]),
            surfaces={k: VolSurface.from_dict(v) for k, v in d["surfaces"].items()},
            curves={k: RateCurve.from_dict(v) for k, v in d["curves"].items()},
            correlation=float(d.get("correlation", 0.5)),
        )


def vol_lookup(surface: VolSurface, t: float, m: float) -> float:
    """Bilinear read of the surface in (expiry, moneyness), flat outside the grid."""
    if t < 0 or m <= 0:
        raise ValueError("vol_lookup needs t >= 0 and m > 0")
    ex, mn, v = surface.expiry_pillars, surface.moneyness_pillars, surface.values
    i = int(np.clip(np.searchsorted(ex, t, side="right") - 1, 0, len(ex) - 2))
    j = int(np.clip(np.searchsorted(mn, m, side="right") - 1, 0, len(mn) - 2))
    wt = float(np.clip((t - ex[i]) / (ex[i + 1] - ex[i]), 0.0, 1.0))
    wm = float(np.clip((m - mn[j]) / (mn[j + 1] - mn[j]), 0.0, 1.0))
    return float(
        (1 - wt) * ((1 - wm) * v[i, j] + wm * v[i, j + 1])
        + wt * ((1 - wm) * v[i + 1, j] + wm * v[i + 1, j + 1])
    )


def zero_rate(curve: RateCurve, t: float) -> float:
    return float(np.interp(t, curve.tenor_pillars, curve.zero_rates))


def discount_factor(curve: RateCurve, t: float) -> float:
    if t < 0:
        raise ValueError("discount_factor needs t >= 0")
    return float(np.exp(-zero_rate(curve, t) * t))


class Taxonomy:
    """Ordered risk-factor keys for a set of underlyings plus the three curves."""

    def __init__(self, underlyings: Iterable[str]):
        self.underlyings: tuple[str, ...] = tuple(sorted(set(underlyings)))
        if not self.underlyings:
            raise ValueError("taxonomy needs at least one underlying")
        u = len(self.underlyings)
        self.spot = slice(0, u)
        self.vol = slice(u, u + N_SURFACE * u)
        self.rate = slice(u + N_SURFACE * u, u + N_SURFACE * u + N_RATES)
        self.size = self.rate.stop

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Taxonomy) and other.underlyings == self.underlyings

    def __hash__(self) -> int:
        return hash(self.underlyings)

    def __repr__(self) -> str:
        return f"Taxonomy({list(self.underlyings)})"

    def slice_of(self, rf_type: RiskFactorType) -> slice:
        return {RiskFactorType.SPOT: self.spot, RiskFactorType.VOL: self.vol, RiskFactorType.RATE: self.rate}[
            RiskFactorType(rf_type)
        ]

    @property
    def keys(self) -> list[RiskFactorKey]:
        keys = [RiskFactorKey(RiskFactorType.SPOT, u, 0) for u in self.underlyings]
        keys += [RiskFactorKey(RiskFactorType.VOL, u, i) for u in self.underlyings for i in range(N_SURFACE)]
        keys += [RiskFactorKey(RiskFactorType.RATE, c, i) for c in CURVE_NAMES for i in range(N_CURVE)]
        return keys

    def labels(self) -> list[str]:
        return [f"{k.rf_type.value}:{k.instrument}:{k.index}" for k in self.keys]

    def type_mask(self, types: Iterable[RiskFactorType]) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        for t in types:
            mask[self.slice_of(t)] = True
        return mask

    def columns_in(self, universe: Taxonomy) -> np.ndarray:
        """Indices of this taxonomy's keys inside a larger (universe) taxonomy."""
        missing = set(self.underlyings) - set(universe.underlyings)
        if missing:
            raise ValueError(f"universe taxonomy lacks underlyings {sorted(missing)}")
        pos = {u: i for i, u in enumerate(universe.underlyings)}
        nu = len(universe.underlyings)
        spot = [pos[u] for u in self.underlyings]
        vol = [nu + N_SURFACE * pos[u] + i for u in self.underlyings for i in range(N_SURFACE)]
        rate = list(range(universe.rate.start, universe.rate.stop))
        return np.array(spot + vol + rate, dtype=np.intp)


def risk_factor_count(n_underlyings: int) -> int:
    return n_underlyings + N_SURFACE * n_underlyings + N_RATES


def flatten(snapshot: MarketSnapshot, taxonomy: Taxonomy) -> np.ndarray:
    missing = set(taxonomy.underlyings) - set(snapshot.spots)
    if missing:
        raise ValueError(f"snapshot lacks underlyings {sorted(missing)}")
    parts = [np.array([snapshot.spots[u] for u in taxonomy.underlyings])]
    parts += [snapshot.surfaces[u].values.ravel() for u in taxonomy.underlyings]
    parts += [snapshot.curves[c].zero_rates for c in CURVE_NAMES]
    return np.concatenate(parts)


def unflatten(base: MarketSnapshot, vector: np.ndarray, taxonomy: Taxonomy) -> MarketSnapshot:
    """Overwrite ``base`` with the levels in ``vector``; factors outside the taxonomy are kept."""
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (taxonomy.size,):
        raise ValueError(f"vector length {vector.shape} does not match taxonomy size {taxonomy.size}")
    spots = dict(base.spots)
    surfaces = dict(base.surfaces)
    for i, u in enumerate(taxonomy.underlyings):
        spots[u] = float(vector[taxonomy.spot][i])
        old = base.surfaces[u]
        block = vector[taxonomy.vol][i * N_SURFACE:(i + 1) * N_SURFACE]
        surfaces[u] = VolSurface(block.reshape(old.values.shape), old.expiry_pillars, old.moneyness_pillars)
    rates = vector[taxonomy.rate].reshape(len(CURVE_NAMES), N_CURVE)
    curves = {c: RateCurve(rates[i], base.curves[c].tenor_pillars) for i, c in enumerate(CURVE_NAMES)}
    return MarketSnapshot(spots, surfaces, curves, base.correlation)


def shock_levels(levels: np.ndarray, shocks: np.ndarray, taxonomy: Taxonomy,
                 mask: np.ndarray | None = None) -> np.ndarray:
    """Apply shock conventions on flat vectors; works row-wise on 2-D input.

    Spots move log-multiplicatively, vols additively with a floor, rates
    additively. Keys where ``mask`` is False keep their base level.
    """
    levels = np.asarray(levels, dtype=float)
    shocks = np.asarray(shocks, dtype=float)
    if shocks.shape[-1] != taxonomy.size or levels.shape[-1] != taxonomy.size:
        raise ValueError(f"shock length {shocks.shape[-1]} does not match taxonomy size {taxonomy.size}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (taxonomy.size,):
            raise ValueError("mask length does not match taxonomy")
        shocks = np.where(mask, shocks, 0.0)
    out = np.broadcast_to(levels, np.broadcast_shapes(levels.shape, shocks.shape)).copy()
    s, v, r = taxonomy.spot, taxonomy.vol, taxonomy.rate
    out[..., s] = out[..., s] * np.exp(shocks[..., s])
    out[..., v] = np.maximum(out[..., v] + shocks[..., v], VOL_FLOOR)
    out[..., r] = out[..., r] + shocks[..., r]
    if mask is not None:
        out = np.where(mask, out, levels)
    return out


def apply_shocks(base: MarketSnapshot, shocks: np.ndarray, taxonomy: Taxonomy,
                 mask: np.ndarray | None = None) -> MarketSnapshot:
    levels = flatten(base, taxonomy)
    return unflatten(base, shock_levels(levels, shocks, taxonomy, mask), taxonomy)


def universe_ids(n: int) -> list[str]:
    return [f"EQ{i:02d}" for i in range(n)]


def default_snapshot(underlyings: Sequence[str], seed: int = 0, correlation: float = 0.5) -> MarketSnapshot:
    """Synthetic but plausible base market: skewed, term-structured surfaces and upward sloping curves."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    spots, surfaces = {}, {}
    t = EXPIRY_PILLARS[:, None]
    logm = np.log(MONEYNESS_PILLARS)[None, :]
    for u in sorted(underlyings):
        spots[u] = float(np.round(rng.uniform(20.0, 300.0), 2))
        atm = rng.uniform(0.18, 0.35)
        skew = rng.uniform(0.15, 0.35)
        term = rng.uniform(-0.03, 0.02)
        vals = atm + term * np.log1p(t) - skew * logm / np.sqrt(1.0 + t) + 0.25 * logm**2
        surfaces[u] = VolSurface(np.round(np.maximum(vals, 0.05), 6))
    tau = TENOR_PILLARS
    discount = 0.025 + 0.012 * (1 - np.exp(-tau / 3.0))
    curves = {
        "discount": RateCurve(np.round(discount, 8)),
        "funding": RateCurve(np.round(discount + 0.002 + 0.001 * (1 - np.exp(-tau / 5.0)), 8)),
        "spread": RateCurve(np.round(0.008 + 0.006 * (1 - np.exp(-tau / 4.0)), 8)),
    }
    return MarketSnapshot(spots, surfaces, curves, correlation)
