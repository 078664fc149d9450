"""Benchmark models: the one-state chain, gambler's ruin, random transient MDPs.

Also closed-form chain values and the nested-CVaR recursion on the chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import SINK, TransientMdp


@dataclass(frozen=True)
class ChainParams:
    epsilon: float = 0.9
    r: float = -0.2
    gamma: float | None = None  # set -> discounted variant (no sink)

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.gamma is not None and not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")


def single_state_chain(params: ChainParams = ChainParams()) -> TransientMdp:
    """One state, one action. Transient variant: loop w.p. epsilon, exit w.p. 1 - epsilon, reward r either way.

    The discounted variant is a plain reward-r self-loop, meant for ``discount_to_trc``.
    """
    if params.gamma is not None:
        rows = [(0, 0, 0, 1.0, params.r)]
        name = f"chain-discounted(gamma={params.gamma}, r={params.r})"
    else:
        rows = [(0, 0, 0, params.epsilon, params.r), (0, 0, SINK, 1.0 - params.epsilon, params.r)]
        rows = [t for t in rows if t[3] > 0.0]
        name = f"chain(epsilon={params.epsilon}, r={params.r})"
    return TransientMdp.from_transitions(
        1, 1, rows, [1.0], state_labels=["s"], action_labels=["a"], name=name
    )


def analytic_chain_erm(params: ChainParams, beta: float, horizon: int | None = None, terminal: float = 1.0) -> float:
    """Closed-form ERM of the chain's total reward.

    The return is ``r * N`` where ``N`` (steps until exit) is geometric. For a
    finite horizon the episode is cut after ``horizon`` steps; ``terminal``
    weights the surviving paths exactly like ``z`` in the finite-horizon
    recursion (``terminal = 0`` drops them, which reproduces the bare series).
    ``horizon=None`` means the infinite horizon, ``-inf`` once
    ``epsilon * exp(-beta r) >= 1``.
    """
    eps, r = params.epsilon, params.r
    if beta == 0:
        if horizon is None:
            return -math.inf if eps >= 1.0 else r / (1.0 - eps)
        return r * sum(eps**k for k in range(horizon))
    x = math.exp(-beta * r)
    if horizon is None:
        if eps * x >= 1.0:
            return -math.inf
        return -math.log((1.0 - eps) * x / (1.0 - eps * x)) / beta
    total = sum((1.0 - eps) * eps**k * x ** (k + 1) for k in range(horizon))
    total += terminal * eps**horizon * x**horizon
    return -math.log(total) / beta


class InitialDistribution(str, Enum):
    UNIFORM_MIDDLE = "middle"
    UNIFORM_ALL = "all"
    UNIFORM_NONRUIN = "nonruin"  # capitals 1..K


@dataclass(frozen=True)
class GamblersRuinParams:
    q: float = 0.68
    cap: int = 7
    initial: InitialDistribution = InitialDistribution.UNIFORM_MIDDLE
    mode: str = "strict"

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if self.cap < 2:
            raise ValueError("cap must be at least 2")
        if self.mode not in ("strict", "literal"):
            raise ValueError("mode must be 'strict' or 'literal'")
        object.__setattr__(self, "initial", InitialDistribution(self.initial))


QUIT = 0


def gamblers_ruin(params: GamblersRuinParams = GamblersRuinParams()) -> TransientMdp:
    """Gambler's ruin with capitals ``0..K`` as states.

    Action ids: ``0`` quits (the only action at capitals 0 and K), ``a`` in
    ``1..K-1`` bets ``a``. Betting is limited to the current capital and a win
    beyond K lands on K. ``literal`` mode adds a bet of 0 (a self-loop) with
    the highest action id ``K``, so the smallest-id tie-break never prefers it.
    """
    q, K = params.q, params.cap
    n_actions = K + 1 if params.mode == "literal" else K
    rows = [(0, QUIT, SINK, 1.0, -1.0), (K, QUIT, SINK, 1.0, float(K))]
    allowed = [[QUIT]] + [[] for _ in range(K - 1)] + [[QUIT]]
    for c in range(1, K):
        rows.append((c, QUIT, SINK, 1.0, float(c)))
        allowed[c].append(QUIT)
        for a in range(1, c + 1):
            rows.append((c, a, min(c + a, K), q, 0.0))
            rows.append((c, a, c - a, 1.0 - q, 0.0))
            allowed[c].append(a)
        if params.mode == "literal":
            rows.append((c, K, c, 1.0, 0.0))
            allowed[c].append(K)
    rows.sort(key=lambda t: (t[0], t[1]))
    if params.initial is InitialDistribution.UNIFORM_MIDDLE:
        mu = [0.0] + [1.0 / (K - 1)] * (K - 1) + [0.0]
    elif params.initial is InitialDistribution.UNIFORM_NONRUIN:
        mu = [0.0] + [1.0 / K] * K
    else:
        mu = [1.0 / (K + 1)] * (K + 1)
    action_labels = ["quit"] + [f"bet{a}" for a in range(1, K)]
    if params.mode == "literal":
        action_labels.append("bet0")
    return TransientMdp.from_transitions(
        K + 1,
        n_actions,
        rows,
        mu,
        state_labels=[f"c{c}" for c in range(K + 1)],
        action_labels=action_labels,
        allowed_actions=allowed,
        name=f"gamblers-ruin(q={q}, K={K}, {params.mode})",
    )


def nested_cvar_chain_values(epsilon: float, alpha: float, r: float, horizon: int) -> list[float]:
    """Nested CVaR_alpha recursion on the chain, ``[v_0, ..., v_T]``.

    Each stage takes ``r`` plus the worst reweighting of the continuation
    value allowed by the CVaR dual: the weight ``q1`` on looping ranges over
    ``[max(0, 1 - (1 - eps)/alpha), min(1, eps/alpha)]`` and exiting is worth 0.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if alpha > epsilon:
        raise ValueError(f"the divergence regime needs epsilon >= alpha, got epsilon={epsilon}, alpha={alpha}")
    lo = max(0.0, 1.0 - (1.0 - epsilon) / alpha)
    hi = min(1.0, epsilon / alpha)
    vals = [0.0]
    for _ in range(horizon):
        prev = vals[-1]
        vals.append(r + min(lo * prev, hi * prev))
    return vals


def random_transient_mdp(
    rng: np.random.Generator,
    n_states: int,
    n_actions: int,
    *,
    min_exit: float = 0.4,
    reward_range: tuple[float, float] = (-1.0, 1.0),
    density: float = 0.7,
    next_state_rewards: bool = True,
) -> TransientMdp:
    """Random model where every state-action pair exits w.p. at least ``min_exit``.

    That bounds every policy's ERM whenever ``(1 - min_exit) * exp(beta * max|r|) < 1``.
    """
    rows = []
    lo, hi = reward_range
    for s in range(n_states):
        for a in range(n_actions):
            targets = np.flatnonzero(rng.random(n_states) < density)
            exit_p = min_exit + (1.0 - min_exit) * rng.random() * (1.0 if targets.size else 0.0)
            if targets.size == 0:
                exit_p = 1.0
            weights = rng.random(targets.size) + 0.05
            probs = (1.0 - exit_p) * weights / weights.sum() if targets.size else np.zeros(0)
            base = rng.uniform(lo, hi)
            for t, p in zip(targets, probs):
                rw = rng.uniform(lo, hi) if next_state_rewards else base
                rows.append((s, a, int(t), float(p), float(rw)))
            rows.append((s, a, SINK, 1.0 - float(probs.sum()), float(rng.uniform(lo, hi) if next_state_rewards else base)))
    mu = rng.random(n_states) + 0.1
    mu = mu / mu.sum()
    return TransientMdp.from_transitions(n_states, n_actions, rows, mu, name="random")
