"""Monte Carlo reference pricer for worst-of autocallables.

Each underlying follows a lognormal step with the volatility read from its
surface at (time, spot / fixing), drifted at the funding curve's forward rate
and discounted on the discount curve; coupons additionally carry the spread
curve. All revaluations of one trade share the same normal draws (common
random numbers), so PnLs across scenarios are driven by the market move and
not by sampling noise.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit
from scipy.stats import norm

from .market import CURVE_NAMES, N_CURVE, MarketSnapshot, Taxonomy, flatten
from .portfolio import AutocallableSpec


class PricingError(RuntimeError):
    pass


@dataclass(frozen=True)
class McConfig:
    paths: int = 8192
    substeps_per_period: int = 1
    seed: int = 0

    def violations(self) -> list[str]:
        out = []
        if self.paths < 2:
            out.append("paths must be >= 2")
        if self.substeps_per_period < 1:
            out.append("substeps_per_period must be >= 1")
        return out


class CallCounter:
    """Thread-safe tally of pricer invocations (one per scenario priced).

    Counts added here are forwarded to ``parent`` as well, so per-leg
    counters can roll up into the process-wide one.
    """

    def __init__(self, parent: CallCounter | None = None):
        self._lock = threading.Lock()
        self._count = 0
        self.parent = parent

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._count += n
        if self.parent is not None:
            self.parent.add(n)

    def reset(self) -> None:
        with self._lock:
            self._count = 0

    @property
    def value(self) -> int:
        return self._count


GLOBAL_COUNTER = CallCounter()


def call_counter() -> int:
    return GLOBAL_COUNTER.value


def reset_call_counter() -> None:
    GLOBAL_COUNTER.reset()


def black_scholes_put(spot: float, strike: float, vol: float, rate: float, t: float) -> float:
    if t <= 0 or vol <= 0:
        return max(strike * math.exp(-rate * max(t, 0.0)) - spot, 0.0)
    sd = vol * math.sqrt(t)
    d1 = (math.log(spot / strike) + (rate + 0.5 * vol * vol) * t) / sd
    d2 = d1 - sd
    return float(strike * math.exp(-rate * t) * norm.cdf(-d2) - spot * norm.cdf(-d1))


def correlation_cholesky(n: int, rho: float) -> np.ndarray:
    corr = np.full((n, n), rho)
    np.fill_diagonal(corr, 1.0)
    return np.linalg.cholesky(corr)


def generator_key(seed: int, trade_id: str) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}:{trade_id}".encode(), digest_size=16).digest()
    return np.frombuffer(digest, dtype=np.uint64).copy()


def box_muller_normals(seed: int, trade_id: str, paths: int, steps: int, dims: int) -> np.ndarray:
    """Standard normals of shape (paths, steps, dims) from a Philox stream keyed by trade.

    Draws for path ``p`` depend only on (seed, trade_id, p, step, dim), so
    adding paths never changes the earlier ones.
    """
    gen = np.random.Generator(np.random.Philox(key=generator_key(seed, trade_id)))
    u = gen.random((paths, steps, dims, 2))
    return np.sqrt(-2.0 * np.log1p(-u[..., 0])) * np.cos(2.0 * np.pi * u[..., 1])


def _interp_weights(x: np.ndarray, pillars: np.ndarray) -> np.ndarray:
    """Matrix W such that W @ y == np.interp(x, pillars, y) for any y."""
    eye = np.eye(len(pillars))
    return np.stack([np.interp(x, pillars, eye[j]) for j in range(len(pillars))], axis=1)


@njit(nogil=True, cache=True)
def _expm(y):
    # exp via (Taylor(y/16))**16; accurate to ~1e-16 relative for |y| <= 1
    h = y * 0.0625
    e = 1.0 + h * (1.0 + h * (0.5 + h * (1.0 / 6 + h * (1.0 / 24 + h * (1.0 / 120 + h * (
        1.0 / 720 + h * (1.0 / 5040 + h * (1.0 / 40320 + h * (1.0 / 362880)))))))))
    e = e * e
    e = e * e
    e = e * e
    return e * e


@njit(nogil=True, cache=True)
def _mc_kernel(z, m0, slices, mny, drift, dt, sqdt, obs_idx, ac, ki, pay_call, ki_scale, pv, se):
    """Simulate all paths for each scenario row of ``m0`` (spot / fixing).

    ``z`` is (steps, underlyings, paths) of correlated normals. Paths are
    compacted after each observation so called paths cost nothing further.
    The 9-pillar moneyness interpolation is unrolled as a sum of clipped
    ramps, which keeps the path loop branch-free and vectorisable.
    """
    n_steps, n_und, n_paths = z.shape
    n_obs = pay_call.shape[1]
    m = np.empty((n_und, n_paths))
    inc = np.empty(n_paths)
    mold = np.empty(n_paths)
    zbuf = np.empty(n_paths)
    payoff = np.zeros(n_paths)
    idx = np.empty(n_paths, dtype=np.int64)
    wmin = np.empty(n_paths)
    a = np.empty(8)
    for b in range(m0.shape[0]):
        for u in range(n_und):
            m[u, :] = m0[b, u]
        for p in range(n_paths):
            idx[p] = p
        na = n_paths
        for k in range(n_steps):
            if na == 0:
                break
            c0 = drift[b, k]
            hdt = 0.5 * dt[k]
            sq = sqdt[k]
            for u in range(n_und):
                q = mny[u]
                sl = slices[b, k, u]
                for j in range(8):
                    a[j] = (sl[j + 1] - sl[j]) / (q[j + 1] - q[j])
                q0, q1, q2, q3, q4, q5, q6, q7, q8 = q[0], q[1], q[2], q[3], q[4], q[5], q[6], q[7], q[8]
                a0, a1, a2, a3, a4, a5, a6, a7 = a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]
                s0 = sl[0]
                mu = m[u]
                zu = z[k, u]
                if na == n_paths:
                    zbuf[:] = zu
                else:
                    for p in range(na):
                        zbuf[p] = zu[idx[p]]
                for p in range(na):
                    mp = mu[p]
                    sig = (s0 + a0 * (min(max(mp, q0), q1) - q0) + a1 * (min(max(mp, q1), q2) - q1)
                           + a2 * (min(max(mp, q2), q3) - q2) + a3 * (min(max(mp, q3), q4) - q3)
                           + a4 * (min(max(mp, q4), q5) - q4) + a5 * (min(max(mp, q5), q6) - q5)
                           + a6 * (min(max(mp, q6), q7) - q6) + a7 * (min(max(mp, q7), q8) - q7))
                    y = c0 - hdt * sig * sig + sig * sq * zbuf[p]
                    inc[p] = y
                    mold[p] = mp
                    mu[p] = mp * _expm(y)
                for p in range(na):
                    if abs(inc[p]) > 1.0:
                        mu[p] = mold[p] * math.exp(inc[p])
            obs = obs_idx[k]
            if obs >= 0:
                for p in range(na):
                    v = m[0, p]
                    for u in range(1, n_und):
                        v = min(v, m[u, p])
                    wmin[p] = v
                keep = 0
                for p in range(na):
                    if wmin[p] >= ac:
                        payoff[idx[p]] = pay_call[b, obs]
                    else:
                        idx[keep] = idx[p]
                        wmin[keep] = wmin[p]
                        for u in range(n_und):
                            m[u, keep] = m[u, p]
                        keep += 1
                na = keep
        for p in range(na):
            w = wmin[p]
            payoff[idx[p]] = ki_scale[b] * w if w < ki else pay_call[b, n_obs - 1]
        # shift by the first payoff so a constant payoff averages exactly
        ref = payoff[0]
        acc = 0.0
        acc2 = 0.0
        for p in range(n_paths):
            d = payoff[p] - ref
            acc += d
            acc2 += d * d
        mean_d = acc / n_paths
        pv[b] = ref + mean_d
        var = (acc2 - n_paths * mean_d * mean_d) / (n_paths - 1)
        se[b] = math.sqrt(max(var, 0.0) / n_paths)


class TradePricer:
    """Prices one trade on many market states with shared random numbers.

    Market states are passed as flat risk-factor level vectors in the
    trade's :class:`Taxonomy` order; pillars and correlation come from the
    base snapshot.
    """

    def __init__(self, spec: AutocallableSpec, base: MarketSnapshot, mc: McConfig | None = None,
                 counter: CallCounter | None = None):
        missing = [u for u in spec.underlyings if u not in base.spots]
        if missing:
            raise PricingError(f"{spec.trade_id}: snapshot lacks underlyings {missing}")
        self.spec = spec
        self.mc = mc or McConfig()
        self.counter = counter if counter is not None else GLOBAL_COUNTER
        self.taxonomy = Taxonomy(spec.underlyings)
        self.base = base
        order = [spec.underlyings.index(u) for u in self.taxonomy.underlyings]
        self._fixings = np.array(spec.initial_fixings)[order]
        self._surfaces = [base.surfaces[u] for u in self.taxonomy.underlyings]

        obs = np.asarray(spec.observation_dates)
        s = self.mc.substeps_per_period
        edges = np.concatenate([[0.0], obs])
        grid = [0.0]
        obs_idx = []
        for j in range(len(obs)):
            sub = np.linspace(edges[j], edges[j + 1], s + 1)[1:]
            grid.extend(sub.tolist())
            obs_idx.extend([-1] * (s - 1) + [j])
        self.grid = np.array(grid)
        self.dt = np.diff(self.grid)
        self.sqdt = np.sqrt(self.dt)
        self.obs_idx = np.array(obs_idx, dtype=np.int64)
        self.obs = obs

        starts = self.grid[:-1]
        self._vol_w = []
        for srf in self._surfaces:
            ex = srf.expiry_pillars
            i = np.clip(np.searchsorted(ex, starts, side="right") - 1, 0, len(ex) - 2)
            w = np.clip((starts - ex[i]) / (ex[i + 1] - ex[i]), 0.0, 1.0)
            self._vol_w.append((i, w))
        self._mny = np.ascontiguousarray(np.stack([srf.moneyness_pillars for srf in self._surfaces]))

        tenors = {c: base.curves[c].tenor_pillars for c in CURVE_NAMES}
        self._w_grid = _interp_weights(self.grid, tenors["funding"]) * self.grid[:, None]
        self._w_obs_d = _interp_weights(obs, tenors["discount"]) * obs[:, None]
        self._w_obs_s = _interp_weights(obs, tenors["spread"]) * obs[:, None]

        chol = correlation_cholesky(len(self._fixings), base.correlation)
        raw = box_muller_normals(self.mc.seed, spec.trade_id, self.mc.paths, len(self.dt), len(self._fixings))
        self._z = np.ascontiguousarray((raw @ chol.T).transpose(1, 2, 0))

    def _inputs(self, levels: np.ndarray):
        tax = self.taxonomy
        u = len(self._fixings)
        b = levels.shape[0]
        spots = levels[:, tax.spot]
        m0 = spots / self._fixings
        vols = levels[:, tax.vol].reshape((b, u) + self._surfaces[0].values.shape)
        slices = np.empty((b, len(self.dt), u, vols.shape[-1]))
        for j, (i, w) in enumerate(self._vol_w):
            slices[:, :, j, :] = (1 - w)[None, :, None] * vols[:, j, i, :] + w[None, :, None] * vols[:, j, i + 1, :]
        rates = levels[:, tax.rate].reshape(b, len(CURVE_NAMES), N_CURVE)
        zt = rates[:, 1, :] @ self._w_grid.T
        drift = np.diff(zt, axis=1)
        df_d = np.exp(-(rates[:, 0, :] @ self._w_obs_d.T))
        df_s = np.exp(-(rates[:, 2, :] @ self._w_obs_s.T))
        k = np.arange(1, len(self.obs) + 1)
        n = self.spec.notional
        pay_call = n * (df_d + k[None, :] * self.spec.coupon_rate * df_d * df_s)
        ki_scale = n * df_d[:, -1]
        return m0, np.ascontiguousarray(slices), np.ascontiguousarray(drift), pay_call, ki_scale

    def price_levels(self, levels: np.ndarray, with_stderr: bool = False, counter: CallCounter | None = None):
        """Present values for each row of risk-factor levels (one pricer call per row).

        ``counter`` overrides the pricer's own tally for this batch.
        """
        levels = np.atleast_2d(np.asarray(levels, dtype=float))
        if levels.shape[1] != self.taxonomy.size:
            raise PricingError(f"{self.spec.trade_id}: level vector length {levels.shape[1]} "
                               f"!= {self.taxonomy.size}")
        m0, slices, drift, pay_call, ki_scale = self._inputs(levels)
        pv = np.empty(levels.shape[0])
        se = np.empty(levels.shape[0])
        _mc_kernel(self._z, m0, slices, self._mny, drift, self.dt, self.sqdt, self.obs_idx,
                   float(self.spec.autocall_barrier), float(self.spec.ki_barrier), pay_call, ki_scale, pv, se)
        (counter if counter is not None else self.counter).add(levels.shape[0])
        bad = ~np.isfinite(pv)
        if bad.any():
            raise PricingError(f"{self.spec.trade_id}: non-finite PV in rows {np.flatnonzero(bad)[:5].tolist()}")
        return (pv, se) if with_stderr else pv

    def price_snapshots(self, snapshots: Sequence[MarketSnapshot], with_stderr: bool = False):
        levels = np.stack([flatten(s, self.taxonomy) for s in snapshots])
        return self.price_levels(levels, with_stderr)


def price(spec: AutocallableSpec, snapshot: MarketSnapshot, mc: McConfig | None = None,
          counter: CallCounter | None = None) -> float:
    return float(TradePricer(spec, snapshot, mc, counter).price_snapshots([snapshot])[0])


def price_with_stderr(spec: AutocallableSpec, snapshot: MarketSnapshot, mc: McConfig | None = None,
                      counter: CallCounter | None = None) -> tuple[float, float]:
    pv, se = TradePricer(spec, snapshot, mc, counter).price_snapshots([snapshot], with_stderr=True)
    return float(pv[0]), float(se[0])
