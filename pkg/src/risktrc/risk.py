"""Entropic risk measures on discrete distributions and samples."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NEG_INF = -math.inf


def erm(values, weights=None, beta: float = 0.0) -> float:
    """ERM_beta of a finitely supported distribution.

    Shifted by the minimum so every exponential is <= 1, and written with
    ``expm1``/``log1p`` so it degrades gracefully to the mean as beta -> 0.
    ``-inf`` atoms with positive weight make the result ``-inf``.
    """
    x = np.asarray(values, dtype=float).ravel()
    if weights is None:
        p = np.full(x.size, 1.0 / x.size) if x.size else x
    else:
        p = np.asarray(weights, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("ERM of an empty distribution")
    keep = p > 0
    x, p = x[keep], p[keep]
    if np.any(np.isnan(x)):
        raise ValueError("NaN in values")
    if np.any(x == -np.inf):
        return NEG_INF
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if np.any(x == np.inf) and (beta == 0 or np.all(x == np.inf)):
        return math.inf
    if beta == 0:
        return float(np.dot(p, x))
    m = float(x[np.isfinite(x)].min())
    z = np.expm1(-beta * (x - m))
    s = float(np.dot(p, z)) + (float(p.sum()) - 1.0)
    return m - math.log1p(s) / beta


def empirical_erm(returns, beta: float) -> float:
    return erm(returns, None, beta)


def aggregate_initial(v, mu, beta: float) -> float:
    """``ERM_beta`` of the value vector under the initial distribution.

    States with zero initial mass do not affect the result, even if their
    value is infinite.
    """
    return erm(v, mu, beta)


def h_value(g: float, beta: float, alpha: float) -> float:
    if not beta > 0:
        raise ValueError("beta must be positive")
    if g == NEG_INF:
        return NEG_INF
    return g + math.log(alpha) / beta


@dataclass(frozen=True)
class EvarEstimate:
    value: float
    beta: float
    at_boundary: bool


def _sample_objective(x: np.ndarray, m: float, log_alpha: float, beta: float) -> float:
    # ERM_beta + log(alpha)/beta, shifted by the sample minimum
    z = np.exp(-beta * (x - m))
    return m - (math.log(z.mean()) - log_alpha) / beta


def evar_search(returns, alpha: float, beta_lo: float = 1e-8, rel_width: float = 1e-10) -> EvarEstimate:
    """Maximize ``ERM_beta[x] + log(alpha)/beta`` over beta for an empirical sample.

    As a function of ``1/beta`` the objective is concave, so it is unimodal
    in ``log beta`` and a golden-section search applies. When the minimum
    carries at least ``alpha`` of the mass the supremum is the minimum
    itself, reached only as beta -> infinity; that case is flagged.
    """
    x = np.asarray(returns, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    m = float(x.min())
    p_min = float(np.mean(x == m))
    if p_min >= alpha:
        return EvarEstimate(m, math.inf, True)
    la = math.log(alpha)

    def f(log_b: float) -> float:
        return _sample_objective(x, m, la, math.exp(log_b))

    lo = math.log(beta_lo)
    hi = 0.0
    f_hi = f(hi)
    while True:
        nxt = hi + math.log(2.0)
        f_nxt = f(nxt)
        if f_nxt <= f_hi or nxt > math.log(1e15):
            hi = nxt
            break
        hi, f_hi = nxt, f_nxt
    if f(lo) >= f(lo + 1e-3):
        # objective still rising toward beta_lo: supremum sits at the bracket edge
        return EvarEstimate(f(lo), math.exp(lo), True)
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > rel_width * max(1.0, abs(a) + abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    best = 0.5 * (a + b)
    val = max(f(best), fc, fd)
    return EvarEstimate(min(val, float(x.mean())), math.exp(best), False)


def evar_of_samples(returns, alpha: float) -> float:
    return evar_search(returns, alpha).value
