"""Independent reference implementations used as test oracles."""

import math

import numpy as np
from scipy.integrate import quad


def brute_es(pnls):
    losses = sorted((-float(p) for p in pnls), reverse=True)
    total = 0.0
    for i in range(6):
        total += losses[i]
    return (total + 0.25 * losses[6]) / 6.25


def brute_ranks(x):
    out = []
    for xi in x:
        below = sum(1 for xj in x if xj < xi)
        equal = sum(1 for xj in x if xj == xi)
        out.append(below + (equal + 1) / 2)
    return out


def brute_spearman(a, b):
    ra, rb = brute_ranks(a), brute_ranks(b)
    n = len(ra)
    ma, mb = sum(ra) / n, sum(rb) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    va = sum((x - ma) ** 2 for x in ra)
    vb = sum((y - mb) ** 2 for y in rb)
    return cov / math.sqrt(va * vb)


def brute_ks(a, b):
    best = 0.0
    for x in list(a) + list(b):
        fa = sum(1 for v in a if v <= x) / len(a)
        fb = sum(1 for v in b if v <= x) / len(b)
        best = max(best, abs(fa - fb))
    return best


def eig2_closed(m):
    a, b, d = m[0, 0], m[0, 1], m[1, 1]
    mid, rad = 0.5 * (a + d), math.hypot(0.5 * (a - d), b)
    return np.array([mid + rad, mid - rad])


def eig3_closed(m):
    # trigonometric roots of the characteristic cubic of a symmetric 3x3
    p1 = m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2
    q = np.trace(m) / 3
    p2 = sum((m[i, i] - q) ** 2 for i in range(3)) + 2 * p1
    p = math.sqrt(p2 / 6)
    if p == 0:
        return np.full(3, q)
    r = np.linalg.det((m - q * np.eye(3)) / p) / 2
    phi = math.acos(min(1.0, max(-1.0, r))) / 3
    e1 = q + 2 * p * math.cos(phi)
    e3 = q + 2 * p * math.cos(phi + 2 * math.pi / 3)
    return np.array([e1, 3 * q - e1 - e3, e3])


def bs_put_quadrature(spot, strike, vol, rate, t):
    mu = math.log(spot) + (rate - 0.5 * vol * vol) * t
    sd = vol * math.sqrt(t)

    def integrand(x):
        return max(strike - math.exp(x), 0.0) * math.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))

    val, _ = quad(integrand, mu - 12 * sd, math.log(strike), epsabs=1e-13, epsrel=1e-13, limit=200)
    return math.exp(-rate * t) * val
