"""Solvers for the entropic risk measure (ERM) under the total reward criterion.

The exponential value ``w = -exp(-beta v)`` is never iterated directly.
Unshaped (small beta * reward) problems carry ``x = -w - 1 = expm1(-beta v)``
with update ``x <- min_a (B^a x + c^a)``, ``c^a = B^a 1 + b^a - 1``
accumulated through ``expm1``; this keeps full precision as beta -> 0.
Shaped problems carry ``x = -w`` with ``x <- min_a (B^a x + b^a)``, which
never cancels and so tolerates the large ``B`` entries of poor actions.
Both updates are exactly monotone in floating point because ``B >= 0``.

Shaping subtracts a potential ``phi`` (an estimate of the values) from the
rewards before exponentiating: ``r + phi(s') - phi(s)``. That is a diagonal
similarity on ``B``, so values move by ``phi`` while greedy choices and
spectral radii stay put, and it keeps large-beta solves in floating-point range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import (
    NotTransientError,
    SpectralConvergenceError,
    RiskTrcError,
    SingularSystemError,
    UnboundedPolicyError,
)
from .matrices import (
    ExponentialMatrices,
    action_exponentials,
    action_probabilities,
    rule_matrix,
    rule_vector,
)
from .model import DecisionRule, TransientMdp
from .risk import aggregate_initial
from .spectral import TRANSIENCE_MARGIN, spectral_bracket

BOUNDED = "Bounded"
UNBOUNDED = "Unbounded"
MAX_ITERATIONS = "MaxIterations"

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1_000_000
W_FLOOR = -1e150
CHECK_EVERY = 100
# greedy ties: value gaps below this (relative, in reward units) count as equal
TIE_TOL = 1e-11

METHODS = ("vi", "pi", "lp")
LP_ROW_LIMIT = 1e8


@dataclass
class SolveReport:
    value: np.ndarray
    exp_value: np.ndarray | None
    policy: DecisionRule
    objective: float
    status: str
    method: str
    beta: float
    residual: float
    iterations: int
    trace: list = field(default_factory=list)
    witness: DecisionRule | None = None
    witness_radius: float | None = None
    detail: dict = field(default_factory=dict)
    history: list | None = None

    @property
    def bounded(self) -> bool:
        return self.status == BOUNDED

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "status": self.status,
            "beta": self.beta,
            "objective": _json_float(self.objective),
            "value": [_json_float(x) for x in self.value],
            "policy": [int(a) for a in self.policy.actions],
            "residual": _json_float(self.residual),
            "iterations": int(self.iterations),
        }
        if self.witness is not None:
            out["witness"] = {
                "policy": [int(a) for a in self.witness.actions],
                "radius": _json_float(self.witness_radius),
            }
        return out


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


# ---------------------------------------------------------------------------
# public operator-level helpers


def exp_bellman_apply(mats: ExponentialMatrices, w) -> np.ndarray:
    return mats.B @ np.asarray(w, dtype=float) - mats.b


def exp_bellman_optimal(model: TransientMdp, beta: float, w) -> tuple[np.ndarray, DecisionRule]:
    """``max_a (B^a w - b^a)`` per state with the first maximizing action."""
    st = action_exponentials(model, beta)
    w = np.asarray(w, dtype=float)
    Q = st.B @ w - st.b
    Q[~st.available.T] = -np.inf
    actions = np.argmax(Q, axis=0)
    return Q.max(axis=0), DecisionRule.deterministic(actions, model.n_actions)


def erm_from_exponential(w, beta: float) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w > 0):
        raise ValueError("exponential values must be nonpositive")
    with np.errstate(divide="ignore"):
        return -np.log(-w) / beta


# ---------------------------------------------------------------------------
# shared machinery


@dataclass(eq=False)
class _Stack:
    model: TransientMdp
    beta: float
    B: np.ndarray  # (A, S, S)
    b: np.ndarray  # (A, S)
    c: np.ndarray  # (A, S)
    avail: np.ndarray  # (S, A)
    phi: np.ndarray  # (S,)
    reach: np.ndarray  # (A, S, S) structural support, immune to exp underflow
    shaped: bool

    @classmethod
    def build(cls, model, beta, potential=None, tolerant=False) -> "_Stack":
        ax = action_exponentials(model, beta, potential, tolerant=tolerant)
        phi = np.zeros(model.n_states) if potential is None else np.asarray(potential, dtype=float)
        P, _ = action_probabilities(model)
        return cls(model, float(beta), ax.B, ax.b, ax.c, ax.available, phi, P > 0, potential is not None)

    @property
    def n_states(self) -> int:
        return self.model.n_states

    def q(self, x: np.ndarray, alive: np.ndarray | None = None, avail: np.ndarray | None = None) -> np.ndarray:
        avail = self.avail if avail is None else avail
        if alive is not None:
            x = np.where(alive, x, 0.0)
        Q = self.B @ x + self.off
        Q[~avail.T] = np.inf
        if alive is not None:
            Q[:, ~alive] = np.inf
        return Q

    @property
    def off(self) -> np.ndarray:
        return self.b if self.shaped else self.c

    @property
    def x_zero(self) -> float:
        """The iterate that stands for ``w = 0``."""
        return 0.0 if self.shaped else -1.0

    def log_u(self, x):
        """``log(-w)`` from an iterate."""
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.shaped:
                return np.log(np.maximum(x, 0.0))
            return np.log1p(np.maximum(x, -1.0))

    def from_u(self, u):
        return np.asarray(u, dtype=float) if self.shaped else np.asarray(u, dtype=float) - 1.0

    def to_w(self, x):
        return -x if self.shaped else -1.0 - x

    def values(self, x: np.ndarray) -> np.ndarray:
        v = self.phi - self.log_u(x) / self.beta
        return np.where(np.isposinf(x), -np.inf, v)

    def q_values(self, Q: np.ndarray) -> np.ndarray:
        """Q in (shaped) reward units, so tie tolerances are scale-aware."""
        qv = -self.log_u(Q) / self.beta
        return np.where(np.isposinf(Q), -np.inf, qv)

    def greedy(self, x: np.ndarray, avail: np.ndarray | None = None) -> np.ndarray:
        return _canonical_argmax(self.q_values(self.q(x, avail=avail)), self.phi)

    def rule(self, actions) -> DecisionRule:
        return DecisionRule.deterministic(actions, self.model.n_actions)

    def radius(self, actions: np.ndarray) -> float:
        """Spectral radius of ``B^d`` for reporting; nan if power iteration gives up."""
        try:
            lo, hi = spectral_bracket(rule_matrix(self.B, actions))
        except SpectralConvergenceError:
            return math.nan
        return 0.5 * (lo + hi)

    def evaluate(self, actions: np.ndarray) -> np.ndarray:
        """Exact iterate of a deterministic rule: solve ``(I - B^d) x = off^d``.

        Boundedness is certified on the way: for ``B >= 0``,
        ``rho(B) < 1`` iff ``m = (I - B)^{-1} 1`` exists and is positive, and
        then ``rho(B) <= 1 - 1/max(m)``. Unlike power iteration this does not
        care how badly scaled a shaped ``B`` is.
        """
        Bd = rule_matrix(self.B, actions)
        M = np.eye(self.n_states) - Bd
        try:
            m = np.linalg.solve(M, np.ones(self.n_states))
        except np.linalg.LinAlgError:
            m = None
        if m is None or not np.all(m > 0) or float(m.max()) * TRANSIENCE_MARGIN >= 1.0:
            # radius is computed lazily: callers that retry never need it
            raise UnboundedPolicyError(math.nan, self.rule(actions))
        try:
            return np.linalg.solve(M, rule_vector(self.off, actions))
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(str(exc)) from exc

    def residual(self, x: np.ndarray) -> float:
        v = self.values(x)
        v_next = self.values(self.q(x).min(axis=0))
        return _max_change(v_next, v)


def _canonical_argmax(qv: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Per-state smallest action whose value is within TIE_TOL of the best."""
    best = qv.max(axis=0)
    scale = 1.0 + np.abs(phi) + np.where(np.isfinite(best), np.abs(best), 0.0)
    with np.errstate(invalid="ignore"):
        gap = best[None, :] - qv
    gap = np.where(np.isposinf(best)[None, :] & np.isposinf(qv), 0.0, gap)
    ok = gap <= TIE_TOL * scale[None, :]
    return np.argmax(ok, axis=0)


def _max_change(a: np.ndarray, b: np.ndarray) -> float:
    same = (a == b) | (np.isnan(a) & np.isnan(b))
    with np.errstate(invalid="ignore"):
        d = np.where(same, 0.0, np.abs(a - b))
    return float(d.max(initial=0.0))


def _finish(stack: _Stack, x, actions, status, method, iterations, trace, **extra) -> SolveReport:
    model = stack.model
    v = stack.values(x)
    if status == BOUNDED and np.any(np.isposinf(v)):
        raise NotTransientError(
            f"value +inf at states {np.flatnonzero(np.isposinf(v)).tolist()}: "
            "some policy never terminates, so the total reward criterion is not defined"
        )
    with np.errstate(over="ignore", under="ignore"):
        w = -np.exp(-stack.beta * v)
    residual = extra.pop("residual", None)
    if residual is None:
        residual = stack.residual(x) if status == BOUNDED else math.nan
    return SolveReport(
        value=v,
        exp_value=w,
        policy=stack.rule(actions),
        objective=aggregate_initial(v, model.mu, stack.beta),
        status=status,
        method=method,
        beta=stack.beta,
        residual=residual,
        iterations=iterations,
        trace=trace,
        **extra,
    )


# ---------------------------------------------------------------------------
# value iteration


def _ray_set(stack: _Stack, z: np.ndarray, avail: np.ndarray, alive: np.ndarray) -> np.ndarray | None:
    """States certified to have ERM value -inf, or None.

    ``z`` is the latest (nonnegative) increment of the iterate. If ``z <= B^a z`` holds
    for every available action on the support of ``z``, then ``t z`` stays
    feasible for every t in the LP whose greatest solution is ``-w*``, so
    ``w*`` is -inf on that support.
    """
    z = np.where(alive, np.maximum(z, 0.0), 0.0)
    zmax = float(z.max(initial=0.0))
    if not zmax > 0 or not np.isfinite(zmax):
        return None
    z = np.where(z >= 1e-6 * zmax, z, 0.0)
    supp = z > 0
    Bz = stack.B @ z
    ok = (Bz >= z[None, :] * (1.0 - 1e-12)) | ~avail.T | ~supp[None, :]
    if np.all(ok):
        return supp
    return None


def _close_dead(stack: _Stack, dead: np.ndarray, avail: np.ndarray):
    """Grow the -inf set: a state is lost once every action can reach it."""
    dead = dead.copy()
    while True:
        hits = (stack.reach[:, :, dead].any(axis=2)).T  # (S, A)
        ok = avail & ~hits
        new_dead = dead | ~ok.any(axis=1)
        if np.array_equal(new_dead, dead):
            return dead, ok & ~dead[:, None]
        dead = new_dead


def _vi_core(stack: _Stack, tol, max_iter, record, alive=None, avail=None):
    S = stack.n_states
    alive = np.ones(S, dtype=bool) if alive is None else alive
    avail = stack.avail if avail is None else avail
    x = np.where(alive, stack.x_zero, np.inf)
    v_old = stack.values(x)
    trace: list[float] = []
    history = [x.copy()] if record else None
    for k in range(1, max_iter + 1):
        Q = stack.q(x, alive, avail)
        new = np.where(alive, Q.min(axis=0), np.inf)
        with np.errstate(invalid="ignore"):
            z = new - x  # inf - inf on dead states
        x = new
        if record:
            history.append(x.copy())
        v = stack.values(x)
        dv = _max_change(v, v_old)
        v_old = v
        trace.append(dv)
        if np.any(x[alive] > -W_FLOOR):
            return x, "floor", k, trace, history, x > -W_FLOOR
        if k > S and dv <= tol:
            return x, BOUNDED, k, trace, history, None
        if k % CHECK_EVERY == 0:
            ray = _ray_set(stack, z, avail, alive)
            if ray is not None:
                return x, "ray", k, trace, history, ray
    return x, MAX_ITERATIONS, max_iter, trace, history, None


def _vi(stack: _Stack, tol, max_iter, record=False) -> SolveReport:
    x, how, k, trace, history, dead = _vi_core(stack, tol, max_iter, record)
    hist_w = None if history is None else [stack.to_w(h) for h in history]
    if how == BOUNDED:
        actions = stack.greedy(x)
        polished = False
        try:
            exact = stack.evaluate(actions)
            if np.array_equal(stack.greedy(exact), actions) and np.all(exact > stack.x_zero):
                x, polished = exact, True
        except (UnboundedPolicyError, SingularSystemError):
            pass
        return _finish(stack, x, actions, BOUNDED, "vi", k, trace, history=hist_w, detail={"polished": polished})
    if how == MAX_ITERATIONS:
        return _finish(stack, x, stack.greedy(x), MAX_ITERATIONS, "vi", k, trace, history=hist_w)
    return _unbounded_report(stack, x, dead, "vi", k, trace, tol, max_iter, how, hist_w)


def _unbounded_report(stack, x, dead, method, k, trace, tol, max_iter, how, history=None) -> SolveReport:
    witness = stack.greedy(np.where(np.isfinite(x), x, 1e300))
    radius = stack.radius(witness)
    dead, avail = _close_dead(stack, dead, stack.avail)
    alive = ~dead
    x_full = np.full(stack.n_states, np.inf)
    actions = witness.copy()
    # values of states that can still avoid the -inf set
    while alive.any():
        e2, how2, _, _, _, dead2 = _vi_core(stack, tol, max_iter, False, alive, avail)
        if how2 in ("ray", "floor"):
            dead, avail = _close_dead(stack, dead | (dead2 & alive), avail)
            alive = ~dead
            continue
        x_full[alive] = e2[alive]
        actions[alive] = stack.greedy(np.where(alive, e2, 1e300), avail)[alive]
        break
    return _finish(
        stack,
        x_full,
        actions,
        UNBOUNDED,
        method,
        k,
        trace,
        residual=math.nan,
        witness=stack.rule(witness),
        witness_radius=radius,
        detail={"detected_by": how, "unbounded_states": np.flatnonzero(dead).tolist()},
        history=history,
    )


# ---------------------------------------------------------------------------
# policy iteration


def _pi_loop(stack: _Stack, actions: np.ndarray, max_iter: int):
    trace = []
    S = stack.n_states
    idx = np.arange(S)
    for k in range(1, max_iter + 1):
        x = stack.evaluate(actions)
        qv = stack.q_values(stack.q(x))
        cur = qv[actions, idx]
        best = qv.max(axis=0)
        scale = 1.0 + np.abs(stack.phi) + np.abs(cur)
        improve = best > cur + TIE_TOL * scale
        trace.append(float(np.max(best - cur, initial=0.0)))
        if not improve.any():
            return x, actions, k, trace, True
        new = actions.copy()
        new[improve] = _canonical_argmax(qv, stack.phi)[improve]
        actions = new
    return x, actions, max_iter, trace, False


def _pi(stack: _Stack, tol, max_iter, init=None) -> SolveReport:
    if init is None:
        actions = stack.greedy(np.full(stack.n_states, stack.x_zero))
        try:
            stack.evaluate(actions)
            start = "greedy-w0"
        except UnboundedPolicyError:
            vi = _vi(stack, tol, max_iter)
            if vi.status != BOUNDED:
                vi.method = "pi"
                vi.detail["init"] = "vi-fallback"
                return vi
            actions = vi.policy.actions
            start = "vi-fallback"
    else:
        init.check_against(stack.model)
        actions = init.actions.copy()
        start = "given"
    try:
        x, actions, k, trace, done = _pi_loop(stack, actions, max_iter)
    except UnboundedPolicyError as exc:
        raise UnboundedPolicyError(stack.radius(exc.policy.actions), exc.policy) from None
    status = BOUNDED if done else MAX_ITERATIONS
    return _finish(stack, x, stack.greedy(x), status, "pi", k, trace, detail={"init": start})


# ---------------------------------------------------------------------------
# linear programming


def _lp(stack: _Stack, tol, max_iter) -> SolveReport:
    from .simplex import simplex_max

    S = stack.n_states
    # Rows with huge entries belong to actions that are hopeless relative to
    # the potential; they only wreck the tableau's conditioning. They are left
    # out here and re-admitted by the policy-iteration polish below.
    size = np.maximum(stack.B.max(axis=2), stack.b).T  # (S, A)
    size = np.where(stack.avail, size, np.inf)
    keep = stack.avail & ((size <= LP_ROW_LIMIT) | (size <= size.min(axis=1, keepdims=True)))
    pairs = np.argwhere(keep)  # (s, a) rows in state-major order
    s_idx, a_idx = pairs[:, 0], pairs[:, 1]
    # y = -w >= 0: maximize 1'y s.t. (I - B^a) y <= b^a row by row
    A = np.eye(S)[s_idx] - stack.B[a_idx, s_idx, :]
    rhs = stack.b[a_idx, s_idx]
    res = simplex_max(np.ones(S), A, rhs)
    if res.status == "unbounded":
        # the ray itself is not extracted; value iteration supplies the -inf set and witness
        vi = _vi(stack, tol, max_iter)
        vi.method = "lp"
        vi.detail["lp_status"] = res.status
        return vi
    if res.status != "optimal":
        raise RiskTrcError(f"simplex stopped with status {res.status}")
    y = res.x
    slack_tol = 1e-9 * (1.0 + np.abs(rhs) + np.abs(A) @ np.abs(y))
    binding = np.abs(res.slack) <= slack_tol
    actions = np.full(S, -1)
    for row in np.flatnonzero(binding)[::-1]:
        actions[s_idx[row]] = a_idx[row]
    source = "binding-rows"
    if np.any(actions < 0):
        actions = stack.greedy(stack.from_u(y))
        source = "greedy"
    try:
        x, actions, k, trace, done = _pi_loop(stack, actions, max_iter)
    except UnboundedPolicyError:
        actions = stack.greedy(stack.from_u(y))
        x, actions, k, trace, done = _pi_loop(stack, actions, max_iter)
        source = "greedy"
    return _finish(
        stack,
        x,
        stack.greedy(x),
        BOUNDED,
        "lp",
        res.pivots,
        trace,
        detail={"policy_source": source, "lp_objective": -res.objective, "polish_steps": k},
    )


# ---------------------------------------------------------------------------
# log-domain value iteration (any beta, slower; used to find a potential)


def log_value_iteration(
    model: TransientMdp, beta: float, tol: float = 1e-9, max_iter: int = 200_000
) -> tuple[np.ndarray, int, bool]:
    """Value iteration directly on ``v`` with a log-sum-exp Bellman step.

    Starts at ``v = +inf`` (the image of ``w = 0``). Returns the values, the
    iteration count and whether the tolerance was met.
    """
    lay = model.layout
    avail = model.available
    S = model.n_states
    v = np.full(S, np.inf)
    for k in range(1, max_iter + 1):
        ext = np.append(v, 0.0)
        x = -beta * (lay.rew + ext[lay.dst])
        with np.errstate(divide="ignore"):
            q = -logsumexp(np.where(lay.prob > 0, x, -np.inf), b=np.where(lay.prob > 0, lay.prob, 1.0), axis=2) / beta
        q = np.where(avail, q, -np.inf)
        new = q.max(axis=1)
        dv = _max_change(new, v)
        v = new
        if k > S and dv <= tol * (1.0 + float(np.max(np.abs(v[np.isfinite(v)]), initial=0.0))):
            return v, k, True
        if np.any(v < W_FLOOR):
            return v, k, False
    return v, max_iter, False


# ---------------------------------------------------------------------------
# entry points


# beyond this many reward units times beta, 1 + x loses digits; shape first
SHAPE_THRESHOLD = 0.5
POTENTIAL_SPAN = 600.0


def needs_shaping(model: TransientMdp, beta: float) -> bool:
    r = model.rew[model.entry_mask]
    return r.size > 0 and beta * float(np.max(np.abs(r))) > SHAPE_THRESHOLD


def _prepare(model: TransientMdp, beta: float, potential=None) -> _Stack:
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    if potential is not None:
        return _Stack.build(model, beta, potential, tolerant=True)
    if not needs_shaping(model, beta):
        return _Stack.build(model, beta)
    v, _, converged = log_value_iteration(model, beta, tol=1e-10, max_iter=20_000)
    phi = np.where(np.isfinite(v), v, 0.0)
    if not converged:
        # a diverging pre-pass drifts without limit; past this floor the exit weights underflow to 0
        phi = np.maximum(phi, float(model.rew[model.entry_mask].min()) - POTENTIAL_SPAN / beta)
    return _Stack.build(model, beta, phi, tolerant=True)


def _run(model, beta, potential, solver) -> SolveReport:
    """Solve, and re-solve once around the result if the potential was far off."""
    stack = _prepare(model, beta, potential)
    rep = solver(stack)
    if stack.shaped and rep.status == BOUNDED and np.all(np.isfinite(rep.value)):
        drift = beta * float(np.max(np.abs(rep.value - stack.phi)))
        if drift > 1.0:
            rep = solver(_Stack.build(model, beta, rep.value, tolerant=True))
    return rep


def value_iteration(
    model: TransientMdp,
    beta: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    potential=None,
    record_history: bool = False,
) -> SolveReport:
    """Value iteration from ``w = 0``.

    Stops when the value vector (reward units) moves by at most ``tol``, then
    evaluates the greedy rule exactly and keeps that evaluation if the rule
    is greedy for it too. ``record_history`` keeps every iterate ``w^k``.
    """
    if record_history:
        return _vi(_prepare(model, beta, potential), tol, max_iter, True)
    return _run(model, beta, potential, lambda st: _vi(st, tol, max_iter))


def policy_iteration(
    model: TransientMdp,
    beta: float,
    init: DecisionRule | None = None,
    max_iter: int = 10_000,
    potential=None,
    tol: float = DEFAULT_TOL,
) -> SolveReport:
    return _run(model, beta, potential, lambda st: _pi(st, tol, max_iter, init))


def lp_solve(
    model: TransientMdp, beta: float, potential=None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> SolveReport:
    return _run(model, beta, potential, lambda st: _lp(st, tol, max_iter))


def policy_evaluation_exact(
    model: TransientMdp, rule: DecisionRule, beta: float, potential=None
) -> np.ndarray:
    """Exponential values ``w`` of a deterministic rule (unshaped, may underflow)."""
    stack = _prepare(model, beta, potential)
    rule.check_against(model)
    if rule.is_deterministic:
        x = stack.evaluate(rule.actions)
        v = stack.values(x)
        with np.errstate(over="ignore", under="ignore"):
            return -np.exp(-beta * v)
    from .matrices import build_exponential_matrices

    mats = build_exponential_matrices(model, rule, beta)
    lo, hi = spectral_bracket(mats.B, threshold=1.0 - TRANSIENCE_MARGIN)
    if hi >= 1.0 - TRANSIENCE_MARGIN:
        raise UnboundedPolicyError(0.5 * (lo + hi), rule)
    return -np.linalg.solve(np.eye(model.n_states) - mats.B, mats.b)


def policy_values(model: TransientMdp, rule: DecisionRule, beta: float, potential=None) -> np.ndarray:
    """ERM values ``v`` of a deterministic rule, computed without leaving the safe range."""
    if beta == 0:
        return risk_neutral_evaluate(model, rule)
    rule.check_against(model)
    if potential is None and needs_shaping(model, beta):
        # shape around the rule's own values, not the optimal ones
        only = _restrict(model, rule.actions)
        v, _, _ = log_value_iteration(only, beta, tol=1e-10, max_iter=20_000)
        if not np.all(np.isfinite(v)):
            raise UnboundedPolicyError(math.nan, rule)
        potential = v
    stack = _prepare(model, beta, potential)
    return stack.values(stack.evaluate(rule.actions))


def _restrict(model: TransientMdp, actions) -> TransientMdp:
    keep = model.act == np.asarray(actions)[model.src]
    return TransientMdp(
        model.n_states, model.n_actions, model.src[keep], model.act[keep], model.dst[keep],
        model.prob[keep], model.rew[keep], model.mu,
        allowed_actions=tuple((int(a),) for a in actions),
    )


def solve_erm(
    model: TransientMdp,
    beta: float,
    method: str = "lp",
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    potential=None,
    record_history: bool = False,
) -> SolveReport:
    """Optimal stationary ERM policy with one of ``vi``, ``pi`` or ``lp``; beta = 0 is risk neutral."""
    if beta == 0:
        return risk_neutral_solve(model)
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "vi":
        return value_iteration(model, beta, tol, max_iter or DEFAULT_MAX_ITER, potential, record_history)
    if method == "pi":
        return policy_iteration(model, beta, None, max_iter or 10_000, potential, tol)
    return lp_solve(model, beta, potential, tol, max_iter or DEFAULT_MAX_ITER)


# ---------------------------------------------------------------------------
# finite horizon


def finite_horizon_solve(
    model: TransientMdp, beta: float, horizon: int, terminal_z=None
) -> tuple[list[np.ndarray], list[DecisionRule]]:
    """Backward recursion ``w^t = L* w^{t-1}`` from ``w^0 = -z``.

    Returns ``[w^0, ..., w^T]`` and ``[d_1, ..., d_T]`` where ``d_t`` attains
    ``w^t``; with ``t`` steps to go the optimal Markov policy plays ``d_t``.
    Exponent overflow raises ``UnboundedRiskError``.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    stack = _Stack.build(model, beta)
    z = np.ones(model.n_states) if terminal_z is None else np.asarray(terminal_z, dtype=float)
    if np.any(z < 0):
        raise ValueError("terminal_z must be nonnegative")
    x = stack.from_u(z)
    ws = [-z.copy()]
    rules = []
    for _ in range(horizon):
        Q = stack.q(x)
        actions = _canonical_argmax(stack.q_values(Q), stack.phi)
        x = Q.min(axis=0)
        ws.append(stack.to_w(x))
        rules.append(stack.rule(actions))
    return ws, rules


# ---------------------------------------------------------------------------
# risk neutral


def _proper_rule(P: np.ndarray, p_term: np.ndarray, avail: np.ndarray) -> np.ndarray | None:
    """A rule reaching the sink with positive probability from every state."""
    S = avail.shape[0]
    reached = np.zeros(S, dtype=bool)
    actions = np.full(S, -1)
    frontier_ok = (p_term.T > 0) & avail
    while True:
        hit = (frontier_ok | ((P[:, :, reached].sum(axis=2).T > 0) & avail)) & ~reached[:, None]
        new = hit.any(axis=1)
        if not new.any():
            break
        actions[new] = np.argmax(hit[new], axis=1)
        reached |= new
    return actions if reached.all() else None


def risk_neutral_evaluate(model: TransientMdp, rule: DecisionRule) -> np.ndarray:
    P, _ = action_probabilities(model)
    a = rule.actions
    Pd = rule_matrix(P, a)
    lo, hi = spectral_bracket(Pd, threshold=1.0 - TRANSIENCE_MARGIN)
    if hi >= 1.0 - TRANSIENCE_MARGIN:
        raise UnboundedPolicyError(0.5 * (lo + hi), rule)
    rbar = model.expected_reward[np.arange(model.n_states), a]
    return np.linalg.solve(np.eye(model.n_states) - Pd, rbar)


def risk_neutral_solve(model: TransientMdp, max_iter: int = 10_000) -> SolveReport:
    """Expected total reward by policy iteration on ``(P, r_bar)``."""
    P, p_term = action_probabilities(model)
    rbar = model.expected_reward.T  # (A, S)
    avail = model.available
    S = model.n_states
    idx = np.arange(S)
    phi0 = np.zeros(S)

    def q_of(v):
        q = rbar + P @ v
        return np.where(avail.T, q, -np.inf)

    def radius(a):
        return spectral_bracket(rule_matrix(P, a), threshold=1.0 - TRANSIENCE_MARGIN)

    actions = _canonical_argmax(np.where(avail.T, rbar, -np.inf), phi0)
    start = "greedy-reward"
    if radius(actions)[1] >= 1.0 - TRANSIENCE_MARGIN:
        proper = _proper_rule(P, p_term, avail)
        if proper is None:
            raise NotTransientError("no policy reaches the sink from every state")
        actions, start = proper, "proper"
    trace = []
    done = False
    for k in range(1, max_iter + 1):
        lo, hi = radius(actions)
        if hi >= 1.0 - TRANSIENCE_MARGIN:
            rule = DecisionRule.deterministic(actions, model.n_actions)
            raise UnboundedPolicyError(0.5 * (lo + hi), rule)
        v = np.linalg.solve(np.eye(S) - rule_matrix(P, actions), rule_vector(rbar, actions))
        q = q_of(v)
        cur = q[actions, idx]
        best = q.max(axis=0)
        improve = best > cur + TIE_TOL * (1.0 + np.abs(cur))
        trace.append(float(np.max(best - cur, initial=0.0)))
        if not improve.any():
            done = True
            break
        actions = actions.copy()
        actions[improve] = _canonical_argmax(q, phi0)[improve]
    final = _canonical_argmax(q_of(v), phi0)
    lo, hi = radius(final)
    status = BOUNDED if done else MAX_ITERATIONS
    if hi >= 1.0 - TRANSIENCE_MARGIN:
        final = actions
    residual = _max_change(q_of(v).max(axis=0), v)
    return SolveReport(
        value=v,
        exp_value=None,
        policy=DecisionRule.deterministic(final, model.n_actions),
        objective=aggregate_initial(v, model.mu, 0.0),
        status=status,
        method="risk-neutral",
        beta=0.0,
        residual=residual,
        iterations=k,
        trace=trace,
        detail={"init": start},
    )
