"""EVaR of the total reward, reduced to ERM solves over a finite beta grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BetaGridError, IterationCapError, RiskTrcError
from .erm import (
    BOUNDED,
    TIE_TOL,
    UNBOUNDED,
    needs_shaping,
    risk_neutral_solve,
    solve_erm,
)
from .matrices import action_exponentials, rule_matrix, rule_vector
from .model import DecisionRule, TransientMdp
from .spectral import TRANSIENCE_MARGIN

MAX_HALVINGS = 200
GRID_SNAP = 1e-9  # a point this close (in steps) to the endpoint merges into it


@dataclass(frozen=True)
class BetaGrid:
    alpha: float
    delta: float
    beta0: float
    betas: np.ndarray

    @property
    def beta_k(self) -> float:
        return float(self.betas[-1])

    def __len__(self) -> int:
        return int(self.betas.size)


def beta_max(alpha: float, delta: float) -> float:
    return -math.log(alpha) / delta


def build_beta_grid(alpha: float, delta: float, beta0: float) -> BetaGrid:
    """Points ``beta_{k+1} = beta_k log(a) / (beta_k delta + log(a))`` below ``-log(a)/delta``, then that endpoint.

    Consecutive reciprocals differ by ``delta / -log(alpha)``. A ``beta0``
    equal to the endpoint yields the one-point grid.
    """
    if not 0.0 < alpha < 1.0:
        raise BetaGridError(f"alpha must lie in (0, 1), got {alpha}")
    if not delta > 0:
        raise BetaGridError(f"delta must be positive, got {delta}")
    if not beta0 > 0:
        raise BetaGridError(f"beta0 must be positive, got {beta0}")
    bk = beta_max(alpha, delta)
    if beta0 > bk * (1.0 + 1e-12):
        raise BetaGridError(
            f"beta0={beta0!r} is not below the last grid point {bk!r}; shrink beta0 or enlarge delta"
        )
    # the recurrence in closed form: reciprocals drop by a fixed step, so rounding does not accumulate
    step = delta / -math.log(alpha)
    inv0, inv_k = 1.0 / min(beta0, bk), 1.0 / bk
    n = max(0, math.ceil((inv0 - inv_k) / step - GRID_SNAP))
    out = [1.0 / (inv0 - k * step) for k in range(n)]
    out.append(bk)
    return BetaGrid(alpha, delta, float(beta0), np.asarray(out))


# ---------------------------------------------------------------------------
# sweeping ERM over an increasing list of betas


@dataclass
class SweepResult:
    betas: np.ndarray
    g: np.ndarray
    status: list
    policies: np.ndarray  # (n, S) action ids; -1 where unbounded
    full_solves: int
    values: np.ndarray | None = None


def _aggregate_batch(V: np.ndarray, mu: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Row-wise ERM_beta of values V (n, S) under mu."""
    pos = mu > 0
    Vp, mp = V[:, pos], mu[pos]
    out = np.full(V.shape[0], -np.inf)
    ok = np.all(np.isfinite(Vp), axis=1)
    if not ok.any():
        return out
    Vo, bo = Vp[ok], betas[ok][:, None]
    m = Vo.min(axis=1, keepdims=True)
    s = (np.expm1(-bo * (Vo - m)) * mp).sum(axis=1) + (mp.sum() - 1.0)
    out[ok] = m[:, 0] - np.log1p(s) / bo[:, 0]
    return out


def _certify(model: TransientMdp, betas: np.ndarray, actions: np.ndarray, phi) -> tuple[np.ndarray, np.ndarray]:
    """Check, for each beta, that ``actions`` stays optimal; return (ok mask, values).

    The rule is evaluated exactly and accepted where the result is a
    nonpositive fixed point of the optimal exponential Bellman operator,
    which makes it the optimal value (the rule is greedy for its own value).
    """
    shaped = phi is not None
    ax = action_exponentials(model, betas, phi, tolerant=shaped)
    S = model.n_states
    off = ax.b if shaped else ax.c
    Bd = rule_matrix(ax.B, actions)
    M = np.eye(S)[None] - Bd
    nb = betas.size
    try:
        m = np.linalg.solve(M, np.ones((nb, S, 1)))[..., 0]
        x = np.linalg.solve(M, rule_vector(off, actions)[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.zeros(nb, dtype=bool), np.full((nb, S), np.nan)
    bounded = np.all(m > 0, axis=1) & (m.max(axis=1) * TRANSIENCE_MARGIN < 1.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        u = x if shaped else 1.0 + x
        log_u = np.log(u) if shaped else np.log1p(x)
        base = np.zeros(S) if phi is None else np.asarray(phi, dtype=float)
        v = base[None] - log_u / betas[:, None]
        Q = np.einsum("nast,nt->nas", ax.B, x) + off
        log_q = np.log(np.maximum(Q, 0.0)) if shaped else np.log1p(np.maximum(Q, -1.0))
        qv = -log_q / betas[:, None, None]
    qv = np.where(np.swapaxes(ax.available, 1, 2), qv, -np.inf)
    qv = np.where(np.isnan(qv), -np.inf, qv)
    best = qv.max(axis=1)
    scale = 1.0 + np.abs(base)[None] + np.where(np.isfinite(best), np.abs(best), 0.0)
    with np.errstate(invalid="ignore"):
        ok_tie = (best[:, None, :] - qv) <= TIE_TOL * scale[:, None, :]
    greedy = np.argmax(ok_tie, axis=1)
    ok = bounded & np.all(u > 0, axis=1) & np.all(np.isfinite(v), axis=1) & np.all(greedy == actions[None], axis=1)
    return ok, v


def erm_sweep(model: TransientMdp, betas, method: str = "lp") -> SweepResult:
    """Optimal ERM objective at each beta of an increasing sequence.

    A full solve is done only where the previous optimal rule stops being
    optimal; in between, that rule is certified in batches. Once a beta is
    unbounded every larger one is too (the optimal objective is
    non-increasing in beta), so the rest are marked without solving.
    """
    betas = np.asarray(betas, dtype=float)
    n = betas.size
    if n == 0:
        raise ValueError("empty beta sequence")
    if np.any(np.diff(betas) <= 0) or betas[0] <= 0:
        raise ValueError("betas must be positive and strictly increasing")
    S = model.n_states
    V = np.full((n, S), -np.inf)
    pol = np.full((n, S), -1, dtype=np.int64)
    status: list[str] = [UNBOUNDED] * n
    solves = 0

    def full(i, phi):
        nonlocal solves
        solves += 1
        pot = phi if phi is not None and needs_shaping(model, betas[i]) else None
        rep = solve_erm(model, float(betas[i]), method, potential=pot)
        V[i] = rep.value
        status[i] = rep.status
        if rep.status == BOUNDED:
            pol[i] = rep.policy.actions
        return rep

    rep = full(0, None)
    i = 1
    size = 64
    while i < n and rep.status == BOUNDED:
        actions = rep.policy.actions
        phi = rep.value
        j = min(n, i + size)
        chunk = betas[i:j]
        shaped = np.array([needs_shaping(model, b) for b in chunk])
        ok = np.zeros(chunk.size, dtype=bool)
        vals = np.full((chunk.size, S), np.nan)
        for flag in (False, True):
            sel = shaped == flag
            if sel.any():
                ok[sel], vals[sel] = _certify(model, chunk[sel], actions, phi if flag else None)
        lead = int(np.argmin(ok)) if not ok.all() else ok.size
        V[i : i + lead] = vals[:lead]
        pol[i : i + lead] = actions
        for k in range(i, i + lead):
            status[k] = BOUNDED
        i += lead
        if lead == chunk.size:
            size = min(size * 2, 4096)
            continue
        rep = full(i, phi)
        i += 1
        size = 64
    g = _aggregate_batch(V, model.mu, betas)
    return SweepResult(betas, g, status, pol, solves, V)


# ---------------------------------------------------------------------------
# the EVaR reduction


def h_values(g: np.ndarray, betas: np.ndarray, alpha: float) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        h = g + math.log(alpha) / betas
    return np.where(np.isneginf(g), -np.inf, h)


def find_beta0(model: TransientMdp, alpha: float, delta: float, method: str = "lp") -> tuple[float, int]:
    """Halve beta from the grid endpoint until ``g*(0) - g*(beta) <= delta``.

    Returns ``(beta0, halvings)``.
    """
    g0 = risk_neutral_solve(model).objective
    if not math.isfinite(g0):
        raise RiskTrcError("risk-neutral objective is not finite")
    b = beta_max(alpha, delta)
    for k in range(MAX_HALVINGS + 1):
        g = solve_erm(model, b, method).objective
        if g0 - g <= delta:
            return b, k
        b *= 0.5
    raise IterationCapError(
        f"g*(0) - g*(beta) still exceeds delta after {MAX_HALVINGS} halvings; g is numerically flat near 0"
    )


@dataclass
class EvarSolution:
    policy: DecisionRule
    beta_star: float
    evar_lower: float
    suboptimality: float
    alpha: float
    grid: BetaGrid
    sweep: SweepResult
    h: np.ndarray
    g0: float
    halvings: int
    detail: dict = field(default_factory=dict)

    def per_beta_rows(self):
        for b, g, h, st in zip(self.sweep.betas, self.sweep.g, self.h, self.sweep.status):
            yield float(b), float(g), float(h), st

    def to_dict(self) -> dict:
        from .erm import _json_float

        return {
            "alpha": self.alpha,
            "delta": self.suboptimality,
            "beta0": self.grid.beta0,
            "beta_star": self.beta_star,
            "evar_lower": _json_float(self.evar_lower),
            "policy": [int(a) for a in self.policy.actions],
            "risk_neutral_objective": _json_float(self.g0),
            "halvings": self.halvings,
            "grid_size": len(self.grid),
            "full_solves": self.sweep.full_solves,
            "per_beta": [
                {"beta": b, "g_star": _json_float(g), "h_star": _json_float(h), "status": st}
                for b, g, h, st in self.per_beta_rows()
            ],
        }


def evar_solve(
    model: TransientMdp,
    alpha: float,
    delta: float,
    method: str = "lp",
    beta0: float | None = None,
) -> EvarSolution:
    g0 = risk_neutral_solve(model).objective
    halvings = 0
    if beta0 is None:
        beta0, halvings = find_beta0(model, alpha, delta, method)
    grid = build_beta_grid(alpha, delta, beta0)
    sw = erm_sweep(model, grid.betas, method)
    h = h_values(sw.g, sw.betas, alpha)
    if np.all(np.isneginf(h)):
        raise RiskTrcError("ERM is unbounded at every grid point")
    k = int(np.argmax(h))  # first maximizer = smallest grid index
    policy = DecisionRule.deterministic(sw.policies[k], model.n_actions)
    return EvarSolution(
        policy=policy,
        beta_star=float(sw.betas[k]),
        evar_lower=float(h[k]),
        suboptimality=delta,
        alpha=alpha,
        grid=grid,
        sweep=sw,
        h=h,
        g0=g0,
        halvings=halvings,
    )


@dataclass
class AuditReport:
    gap: float
    bound: float
    passed: bool
    grid_max: float
    dense_max: float
    dense_betas: np.ndarray
    dense_h: np.ndarray

    def to_dict(self) -> dict:
        return {
            "gap": self.gap,
            "bound": self.bound,
            "passed": self.passed,
            "grid_max": self.grid_max,
            "dense_max": self.dense_max,
            "n_dense": int(self.dense_betas.size),
        }


def grid_error_audit(
    model: TransientMdp,
    grid: BetaGrid,
    n_dense: int = 400,
    method: str = "lp",
    grid_h: np.ndarray | None = None,
) -> AuditReport:
    """Compare the grid maximum of h* with a dense log-spaced sweep past both ends of the grid."""
    if grid_h is None:
        sw = erm_sweep(model, grid.betas, method)
        grid_h = h_values(sw.g, sw.betas, grid.alpha)
    dense = np.geomspace(grid.beta0 / 10.0, 10.0 * grid.beta_k, n_dense)
    dsw = erm_sweep(model, dense, method)
    dense_h = h_values(dsw.g, dense, grid.alpha)
    grid_max = float(np.max(grid_h))
    dense_max = float(np.max(dense_h))
    gap = dense_max - grid_max
    g0 = risk_neutral_solve(model).objective
    g_b0 = solve_erm(model, grid.beta0, method).objective
    bound = grid.delta + max(0.0, g0 - g_b0)
    return AuditReport(gap, bound, bool(gap <= bound), grid_max, dense_max, dense, dense_h)
