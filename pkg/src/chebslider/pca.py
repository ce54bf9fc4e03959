"""Per-risk-factor-type principal components of shock histories.

Components are taken from the uncentred second moment ``X^T X / N`` so the
zero shock maps to zero coordinates. Eigenpairs come from a cyclic Jacobi
solver; when there are more columns than observations the ``N x N`` Gram
matrix is decomposed instead and its eigenvectors mapped back.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from numba import njit

from .market import RiskFactorType, Taxonomy
from .portfolio import AutocallableSpec

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 50
DEFAULT_RETENTION = {RiskFactorType.SPOT: None, RiskFactorType.VOL: 3, RiskFactorType.RATE: 6}


class JacobiConvergenceError(RuntimeError):
    def __init__(self, residual: float, sweeps: int):
        super().__init__(f"Jacobi eigensolve did not converge after {sweeps} sweeps "
                         f"(relative off-diagonal residual {residual:.3e})")
        self.residual = residual
        self.sweeps = sweeps


@njit(cache=True)
def _jacobi_sweeps(a, v, tol, max_sweeps):
    n = a.shape[0]
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    scale = math.sqrt(scale)
    off = 0.0
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        off = math.sqrt(off)
        if off <= tol * scale:
            return sweep, off / scale if scale > 0 else 0.0
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return -1, off / scale if scale > 0 else 0.0


def jacobi_eigh(matrix: np.ndarray, tol: float = JACOBI_TOL,
                max_sweeps: int = JACOBI_MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors (columns) of a symmetric matrix.

    Stops once the off-diagonal Frobenius norm falls below ``tol`` times the
    matrix norm.
    """
    a = np.array(matrix, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("jacobi_eigh needs a square matrix")
    a = 0.5 * (a + a.T)
    v = np.eye(a.shape[0])
    sweeps, residual = _jacobi_sweeps(a, v, tol, max_sweeps)
    if sweeps < 0:
        raise JacobiConvergenceError(residual, max_sweeps)
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def _fix_signs(loadings: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(loadings), axis=0)
    signs = np.sign(loadings[idx, np.arange(loadings.shape[1])])
    signs[signs == 0] = 1.0
    return loadings * signs


def _complete(loadings: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace columns not flagged ``good`` with unit vectors orthogonal to the rest."""
    out = loadings.copy()
    basis = [out[:, j] for j in range(out.shape[1]) if good[j]]
    candidates = iter(np.eye(out.shape[0]))
    for j in range(out.shape[1]):
        if good[j]:
            continue
        for e in candidates:
            r = e - sum(np.dot(b, e) * b for b in basis) if basis else e.copy()
            nr = np.linalg.norm(r)
            if nr > 1e-8:
                out[:, j] = r / nr
                basis.append(out[:, j])
                break
    return out


@dataclass(frozen=True, eq=False)
class PcaBasis:
    rf_type: RiskFactorType | None
    loadings: np.ndarray
    eigenvalues: np.ndarray
    total_variance: float

    @property
    def n(self) -> int:
        return self.loadings.shape[0]

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    @property
    def explained_ratio(self) -> float:
        return float(self.eigenvalues.sum() / self.total_variance) if self.total_variance > 0 else 1.0

    def to_dict(self) -> dict:
        return {
            "rf_type": None if self.rf_type is None else RiskFactorType(self.rf_type).value,
            "n": self.n,
            "k": self.k,
            "eigenvalues": self.eigenvalues.tolist(),
            "total_variance": self.total_variance,
            "loadings": self.loadings.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> PcaBasis:
        rf = None if d.get("rf_type") is None else RiskFactorType(d["rf_type"])
        return cls(rf, np.asarray(d["loadings"], dtype=float).reshape(d["n"], d["k"]),
                   np.asarray(d["eigenvalues"], dtype=float), float(d["total_variance"]))


def fit(shocks: np.ndarray, k: int, rf_type: RiskFactorType | None = None) -> PcaBasis:
    """Top-``k`` uncentred principal components of an (observations x n) shock matrix."""
    x = np.asarray(shocks, dtype=float)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError("fit needs a 2-D shock matrix with at least one column")
    n_obs, n = x.shape
    if not 1 <= k <= min(n, n_obs):
        raise ValueError(f"k={k} outside [1, {min(n, n_obs)}]")
    total = float(np.sum(x * x) / n_obs)
    if n <= n_obs:
        w, v = jacobi_eigh(x.T @ x / n_obs)
        w, loadings = np.maximum(w[:k], 0.0), v[:, :k]
    else:
        w, u = jacobi_eigh(x @ x.T / n_obs)
        w = np.maximum(w[:k], 0.0)
        good = w > 1e-14 * max(w[0], 1e-300)
        loadings = np.zeros((n, k))
        loadings[:, good] = (x.T @ u[:, :k][:, good]) / np.sqrt(n_obs * w[good])
        if not good.all():
            loadings = _complete(loadings, good)
    return PcaBasis(rf_type, _fix_signs(loadings), w, total)


def project(basis: PcaBasis, shock: np.ndarray) -> np.ndarray:
    shock = np.asarray(shock, dtype=float)
    if shock.shape[-1] != basis.n:
        raise ValueError(f"shock length {shock.shape[-1]} != basis dimension {basis.n}")
    return shock @ basis.loadings


def reconstruct(basis: PcaBasis, coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if coords.shape[-1] != basis.k:
        raise ValueError(f"coords length {coords.shape[-1]} != retained components {basis.k}")
    return coords @ basis.loadings.T


TYPE_ORDER = (RiskFactorType.SPOT, RiskFactorType.VOL, RiskFactorType.RATE)


class TradeBases:
    """The three per-type bases of one trade, concatenated into slider coordinates.

    Coordinates are ordered spot components, then vol, then rate.
    """

    def __init__(self, taxonomy: Taxonomy, bases: Mapping[RiskFactorType, PcaBasis]):
        self.taxonomy = taxonomy
        self.bases = {t: bases[t] for t in TYPE_ORDER}
        for t in TYPE_ORDER:
            width = taxonomy.slice_of(t).stop - taxonomy.slice_of(t).start
            if self.bases[t].n != width:
                raise ValueError(f"{t.value} basis has n={self.bases[t].n}, taxonomy expects {width}")
        ks = [self.bases[t].k for t in TYPE_ORDER]
        self.d = sum(ks)
        edges = np.cumsum([0, *ks])
        self.coord_slices = {t: slice(int(edges[i]), int(edges[i + 1])) for i, t in enumerate(TYPE_ORDER)}

    @property
    def spot_basis(self) -> PcaBasis:
        return self.bases[RiskFactorType.SPOT]

    @property
    def vol_basis(self) -> PcaBasis:
        return self.bases[RiskFactorType.VOL]

    @property
    def rate_basis(self) -> PcaBasis:
        return self.bases[RiskFactorType.RATE]

    def dim_types(self) -> list[RiskFactorType]:
        return [t for t in TYPE_ORDER for _ in range(self.bases[t].k)]

    def project(self, shocks: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        shocks = np.asarray(shocks, dtype=float)
        if shocks.shape[-1] != self.taxonomy.size:
            raise ValueError(f"shock length {shocks.shape[-1]} != taxonomy size {self.taxonomy.size}")
        if mask is not None:
            shocks = np.where(mask, shocks, 0.0)
        out = np.empty(shocks.shape[:-1] + (self.d,))
        for t in TYPE_ORDER:
            out[..., self.coord_slices[t]] = project(self.bases[t], shocks[..., self.taxonomy.slice_of(t)])
        return out

    def reconstruct(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        if coords.shape[-1] != self.d:
            raise ValueError(f"coords length {coords.shape[-1]} != slider dimension {self.d}")
        out = np.empty(coords.shape[:-1] + (self.taxonomy.size,))
        for t in TYPE_ORDER:
            out[..., self.taxonomy.slice_of(t)] = reconstruct(self.bases[t], coords[..., self.coord_slices[t]])
        return out

    def to_dict(self) -> dict:
        return {"underlyings": list(self.taxonomy.underlyings),
                "bases": {t.value: self.bases[t].to_dict() for t in TYPE_ORDER}}

    @classmethod
    def from_dict(cls, d: Mapping) -> TradeBases:
        return cls(Taxonomy(d["underlyings"]),
                   {RiskFactorType(k): PcaBasis.from_dict(v) for k, v in d["bases"].items()})

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def retained(rf_type: RiskFactorType, n: int, retention: Mapping[RiskFactorType, int | None]) -> int:
    k = retention.get(rf_type)
    return n if k is None else min(int(k), n)


def build_trade_bases(trade: AutocallableSpec | Taxonomy, history,
                      retention: Mapping[RiskFactorType, int | None] | None = None,
                      cache: dict | None = None) -> TradeBases:
    """Fit spot (all components), vol and rate bases on the trade's own history columns.

    ``history`` is a :class:`~chebslider.scenarios.ShockHistory`. ``cache``
    memoises fits across trades keyed on the exact columns used.
    """
    retention = DEFAULT_RETENTION if retention is None else retention
    tax = trade if isinstance(trade, Taxonomy) else Taxonomy(trade.underlyings)
    rows = history.for_taxonomy(tax)
    bases = {}
    for t in TYPE_ORDER:
        block = rows[:, tax.slice_of(t)]
        k = retained(t, block.shape[1], retention)
        key = (id(history), t, tax.underlyings if t != RiskFactorType.RATE else (), k)
        if cache is not None and key in cache:
            bases[t] = cache[key]
            continue
        bases[t] = fit(block, k, t)
        if cache is not None:
            cache[key] = bases[t]
    return TradeBases(tax, bases)
