"""Spectral radius of nonnegative matrices and transience diagnostics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import BudgetExceededError, SpectralConvergenceError
from .matrices import build_exponential_matrices, build_policy_matrices
from .model import DecisionRule, TransientMdp

RADIUS_TOL = 1e-9
MAX_POWER_ITER = 100_000
TRANSIENCE_MARGIN = 1e-10
DEFAULT_POLICY_CAP = 100_000


def _block_bracket(M: np.ndarray, tol: float, max_iter: int, threshold: float | None):
    """Collatz-Wielandt bracket for an irreducible nonnegative block.

    Iterates with ``M + I``: it shares the Perron vector of ``M``, is
    primitive, and so the power method converges for any positive start.
    """
    n = M.shape[0]
    if n == 1:
        r = float(M[0, 0])
        return r, r
    A = M + np.eye(n)
    # A dense eigensolve gives a near-Perron start; the bracket below is what certifies it.
    x = np.ones(n)
    try:
        vals, vecs = np.linalg.eig(M)
        k = int(np.argmax(vals.real))
        guess = np.abs(vecs[:, k].real)
        if np.all(np.isfinite(guess)) and guess.max() > 0:
            x = guess / guess.max() + 1e-12
    except np.linalg.LinAlgError:
        pass
    lo, hi = 0.0, np.inf
    for it in range(max_iter):
        y = A @ x
        ratio = y / x
        lo = max(lo, float(ratio.min()) - 1.0)
        hi = min(hi, float(ratio.max()) - 1.0)
        if hi - lo < tol:
            return lo, hi
        if threshold is not None and (hi < threshold or lo >= threshold):
            return lo, hi
        x = y / y.max()
        if not np.all(x > 0):
            # underflow: the block is too badly scaled for a certified bracket
            break
    raise SpectralConvergenceError(lo, hi, it + 1)


def spectral_bracket(
    M,
    tol: float = RADIUS_TOL,
    max_iter: int = MAX_POWER_ITER,
    threshold: float | None = None,
) -> tuple[float, float]:
    """Return ``(lower, upper)`` with ``lower <= rho(M) <= upper``.

    The bracket is narrower than ``tol`` unless ``threshold`` is given and
    already lies outside it, in which case iteration stops early.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)) or np.any(M < 0):
        raise ValueError("spectral_bracket needs a finite nonnegative matrix")
    n = M.shape[0]
    if n == 0:
        return 0.0, 0.0
    n_comp, labels = connected_components(M > 0, directed=True, connection="strong")
    lo_all, hi_all = 0.0, 0.0
    for c in range(n_comp):
        idx = np.flatnonzero(labels == c)
        block = M[np.ix_(idx, idx)]
        if not block.any():
            continue
        lo, hi = _block_bracket(block, tol, max_iter, threshold)
        lo_all, hi_all = max(lo_all, lo), max(hi_all, hi)
        if threshold is not None and lo_all >= threshold:
            break
    return max(lo_all, 0.0), max(hi_all, 0.0)


def spectral_radius(M, tol: float = RADIUS_TOL, max_iter: int = MAX_POWER_ITER) -> float:
    lo, hi = spectral_bracket(M, tol=tol, max_iter=max_iter)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TransienceVerdict:
    transient: bool
    radius: float
    policy: DecisionRule | None = None
    checked: int = 1

    def to_dict(self) -> dict:
        return {
            "transient": self.transient,
            "radius": self.radius,
            "policy": _rule_json(self.policy),
            "checked": self.checked,
        }


def _rule_json(rule: DecisionRule | None):
    if rule is None:
        return None
    if rule.is_deterministic:
        return [int(a) for a in rule.actions]
    return rule.probs.tolist()


def _below_one(M: np.ndarray, margin: float) -> tuple[bool, float]:
    lo, hi = spectral_bracket(M)
    return hi < 1.0 - margin, 0.5 * (lo + hi)


def check_transient_policy(
    model: TransientMdp, rule: DecisionRule, tol_margin: float = TRANSIENCE_MARGIN
) -> TransienceVerdict:
    P = build_policy_matrices(model, rule).P
    ok, radius = _below_one(P, tol_margin)
    return TransienceVerdict(ok, radius, rule)


def check_bounded_policy(
    model: TransientMdp, rule: DecisionRule, beta: float, tol_margin: float = TRANSIENCE_MARGIN
) -> TransienceVerdict:
    """Same test on ``B^d``: the ERM total return of the rule is finite iff rho < 1."""
    B = build_exponential_matrices(model, rule, beta).B
    ok, radius = _below_one(B, tol_margin)
    return TransienceVerdict(ok, radius, rule)


def count_deterministic_policies(model: TransientMdp) -> int:
    n = 1
    for k in model.available.sum(axis=1):
        n *= int(k)
    return n


def check_transient_exhaustive(
    model: TransientMdp, cap: int = DEFAULT_POLICY_CAP, tol_margin: float = TRANSIENCE_MARGIN
) -> TransienceVerdict:
    """Check every deterministic stationary rule; stop at the first non-transient one.

    On success the reported radius is the largest one seen.
    """
    count = count_deterministic_policies(model)
    if count > cap:
        raise BudgetExceededError(count, cap)
    choices = [np.flatnonzero(row) for row in model.available]
    worst = 0.0
    checked = 0
    for combo in itertools.product(*choices):
        rule = DecisionRule.deterministic(combo, model.n_actions)
        verdict = check_transient_policy(model, rule, tol_margin)
        checked += 1
        if not verdict.transient:
            return TransienceVerdict(False, verdict.radius, rule, checked)
        worst = max(worst, verdict.radius)
    return TransienceVerdict(True, worst, None, checked)
