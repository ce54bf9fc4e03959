"""Chebyshev Sliders: additive proxies built from one-dimensional Chebyshev slides.

A slider approximates a pricer ``f`` around a base point ``x0 = 0`` in
principal-component coordinates as::

    f(x) ~ v0 + sum_i [p_i(x_i) - p_i(0)]

where ``p_i`` interpolates ``f`` along coordinate axis ``i`` through
Chebyshev-Lobatto nodes. Calibration needs ``n_points * d + 1`` pricer calls:
one per node per dimension plus the base.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .market import MarketSnapshot, Taxonomy, flatten, shock_levels, unflatten
from .pca import TradeBases

DEFAULT_POINTS = 6
BOX_EXPANSION = 0.10
DEGENERATE_HALF_WIDTH = 1e-6


def chebyshev_nodes(n: int, a: float = -1.0, b: float = 1.0) -> np.ndarray:
    """Second-kind Chebyshev points cos(j pi / (n-1)) mapped onto [a, b] (decreasing)."""
    if n < 2:
        raise ValueError("need at least two Chebyshev points")
    if not a < b:
        raise ValueError("need a < b")
    x = 0.5 * (a + b) + 0.5 * (b - a) * np.cos(np.pi * np.arange(n) / (n - 1))
    # pin the endpoints so clamping at the box edge still hits a node exactly
    x[0], x[-1] = b, a
    return x


def barycentric_weights(n: int) -> np.ndarray:
    w = (-1.0) ** np.arange(n)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@dataclass(frozen=True, eq=False)
class ChebyshevSlide:
    dim_index: int
    a: float
    b: float
    nodes: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"slide {self.dim_index}: need a < b")
        if len(self.nodes) != len(self.values) or len(self.nodes) != len(self.weights):
            raise ValueError(f"slide {self.dim_index}: nodes, values and weights must align")

    def __call__(self, x):
        return barycentric_eval(self, x)

    def to_dict(self) -> dict:
        return {"dim_index": self.dim_index, "a": self.a, "b": self.b, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> ChebyshevSlide:
        values = np.asarray(d["values"], dtype=float)
        n = len(values)
        return cls(int(d["dim_index"]), float(d["a"]), float(d["b"]),
                   chebyshev_nodes(n, d["a"], d["b"]), values, barycentric_weights(n))


def barycentric_eval(slide: ChebyshevSlide, x):
    """Interpolant value at ``x`` (scalar or array), clamped to [a, b]."""
    xs = np.clip(np.asarray(x, dtype=float), slide.a, slide.b)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    diff = xs[:, None] - slide.nodes[None, :]
    hit = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        q = slide.weights / diff
        out = (q @ slide.values) / q.sum(axis=1)
    rows = hit.any(axis=1)
    if rows.any():
        out[rows] = slide.values[np.argmax(hit[rows], axis=1)]
    return float(out[0]) if scalar else out


def compute_domain_boxes(bases: TradeBases, current: np.ndarray, stress: np.ndarray,
                         current_masks: Sequence[np.ndarray] | None = None,
                         stress_masks: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """Per-coordinate [lo, hi] covering every masked, projected scenario row, widened by 10 %.

    ``current`` / ``stress`` are trade-level shock matrices; each is projected
    once per mask in its list (the full mask when none is given).
    """
    lo = np.full(bases.d, np.inf)
    hi = np.full(bases.d, -np.inf)
    for rows, masks in ((current, current_masks), (stress, stress_masks)):
        if rows is None:
            continue
        for mask in masks if masks is not None else [None]:
            c = bases.project(rows, mask)
            lo = np.minimum(lo, c.min(axis=0))
            hi = np.maximum(hi, c.max(axis=0))
    width = hi - lo
    pad = 0.5 * BOX_EXPANSION * width
    boxes = np.stack([lo - pad, hi + pad], axis=1)
    flat = width <= 0
    mid = 0.5 * (lo + hi)
    boxes[flat, 0] = mid[flat] - DEGENERATE_HALF_WIDTH
    boxes[flat, 1] = mid[flat] + DEGENERATE_HALF_WIDTH
    return boxes


@dataclass(frozen=True, eq=False)
class CalibrationPlan:
    """Coordinates and full shock vectors of the 6d+1 calibration scenarios.

    Row 0 is the base (zero shock); row ``1 + i * n_points + m`` sets
    coordinate ``i`` to node ``m`` of its box.
    """

    bases: TradeBases
    boxes: np.ndarray
    n_points: int
    coords: np.ndarray
    shocks: np.ndarray

    def __len__(self) -> int:
        return self.coords.shape[0]

    def levels(self, base_levels: np.ndarray) -> np.ndarray:
        return shock_levels(base_levels, self.shocks, self.bases.taxonomy)

    def snapshots(self, base: MarketSnapshot) -> list[MarketSnapshot]:
        tax = self.bases.taxonomy
        return [unflatten(base, row, tax) for row in self.levels(flatten(base, tax))]


def build_calibration_plan(bases: TradeBases, boxes: np.ndarray, n_points: int = DEFAULT_POINTS) -> CalibrationPlan:
    boxes = np.asarray(boxes, dtype=float)
    if boxes.shape != (bases.d, 2):
        raise ValueError(f"boxes must be ({bases.d}, 2), got {boxes.shape}")
    coords = np.zeros((1 + n_points * bases.d, bases.d))
    for i, (a, b) in enumerate(boxes):
        coords[1 + i * n_points:1 + (i + 1) * n_points, i] = chebyshev_nodes(n_points, a, b)
    return CalibrationPlan(bases, boxes, n_points, coords, bases.reconstruct(coords))


class ChebyshevSlider:
    def __init__(self, trade_id: str, bases: TradeBases, base_value: float,
                 slides: Sequence[ChebyshevSlide], calibration_calls: int):
        if len(slides) != bases.d:
            raise ValueError(f"slider needs {bases.d} slides, got {len(slides)}")
        self.trade_id = trade_id
        self.bases = bases
        self.base_value = float(base_value)
        self.slides = list(slides)
        self.calibration_calls = int(calibration_calls)
        self.boxes = np.array([[s.a, s.b] for s in self.slides])
        self._at_zero = np.array([s(0.0) for s in self.slides])

    @property
    def d(self) -> int:
        return self.bases.d

    def evaluate_coords(self, coords: np.ndarray) -> np.ndarray | float:
        coords = np.asarray(coords, dtype=float)
        flat = np.atleast_2d(coords)
        total = np.full(flat.shape[0], self.base_value)
        for i, s in enumerate(self.slides):
            total += s(flat[:, i]) - self._at_zero[i]
        return float(total[0]) if coords.ndim == 1 else total

    def evaluate(self, shocks: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray | float:
        """Proxy PV for one shock vector or a matrix of them over the trade taxonomy."""
        return self.evaluate_coords(self.bases.project(shocks, mask))

    def to_dict(self) -> dict:
        return {
            "trade_id": self.trade_id,
            "base_value": self.base_value,
            "calibration_calls": self.calibration_calls,
            "slides": [s.to_dict() for s in self.slides],
            "bases": self.bases.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ChebyshevSlider:
        return cls(d["trade_id"], TradeBases.from_dict(d["bases"]), d["base_value"],
                   [ChebyshevSlide.from_dict(s) for s in d["slides"]], d["calibration_calls"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> ChebyshevSlider:
        return cls.from_dict(json.loads(text))


class CalibrationError(ValueError):
    pass


def calibrate(plan: CalibrationPlan, prices: Iterable[float], trade_id: str = "") -> ChebyshevSlider:
    prices = np.asarray(list(prices), dtype=float)
    if prices.shape != (len(plan),):
        raise CalibrationError(f"{trade_id}: expected {len(plan)} calibration prices, got {prices.shape[0]}")
    bad = np.flatnonzero(~np.isfinite(prices))
    if bad.size:
        raise CalibrationError(f"{trade_id}: non-finite price for calibration scenario {int(bad[0])}")
    n = plan.n_points
    slides = []
    for i, (a, b) in enumerate(plan.boxes):
        vals = prices[1 + i * n:1 + (i + 1) * n].copy()
        slides.append(ChebyshevSlide(i, float(a), float(b), chebyshev_nodes(n, a, b), vals, barycentric_weights(n)))
    return ChebyshevSlider(trade_id, plan.bases, prices[0], slides, len(plan))


def calibration_count(d: int, n_points: int = DEFAULT_POINTS) -> int:
    return n_points * d + 1
