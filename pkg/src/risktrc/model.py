"""Transient MDP representation, decision rules and model validation.

States are numbered ``0..n_states-1``. The sink is implicit and addressed as
``SINK == -1``: transitions may point to it but never leave it, and its
self-loop with zero reward is never stored.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidModelError

SINK = -1
MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TransientMdp:
    """Finite MDP with an implicit absorbing sink.

    Transitions are stored as parallel arrays (``src``, ``act``, ``dst``,
    ``prob``, ``rew``); rewards attach to ``(s, a, s')`` triples. Repeated
    triples are allowed and behave like a random reward on that transition.
    """

    n_states: int
    n_actions: int
    src: np.ndarray
    act: np.ndarray
    dst: np.ndarray
    prob: np.ndarray
    rew: np.ndarray
    mu: np.ndarray
    state_labels: tuple[str, ...] | None = None
    action_labels: tuple[str, ...] | None = None
    allowed_actions: tuple[tuple[int, ...], ...] | None = None
    name: str = field(default="", compare=False)

    @classmethod
    def from_transitions(
        cls,
        n_states: int,
        n_actions: int,
        transitions: Iterable[Sequence[float]],
        mu: Sequence[float],
        *,
        state_labels: Sequence[str] | None = None,
        action_labels: Sequence[str] | None = None,
        allowed_actions: Sequence[Sequence[int]] | None = None,
        name: str = "",
    ) -> "TransientMdp":
        rows = [tuple(t) for t in transitions]
        for i, t in enumerate(rows):
            if len(t) != 5:
                raise ValueError(f"transition {i} must be (s, a, s_next, p, r), got {t!r}")
        src = np.array([int(t[0]) for t in rows], dtype=np.int64)
        act = np.array([int(t[1]) for t in rows], dtype=np.int64)
        dst = np.array([int(t[2]) for t in rows], dtype=np.int64)
        prob = np.array([float(t[3]) for t in rows], dtype=float)
        rew = np.array([float(t[4]) for t in rows], dtype=float)
        return cls(
            n_states=int(n_states),
            n_actions=int(n_actions),
            src=src,
            act=act,
            dst=dst,
            prob=prob,
            rew=rew,
            mu=np.asarray(mu, dtype=float),
            state_labels=tuple(state_labels) if state_labels is not None else None,
            action_labels=tuple(action_labels) if action_labels is not None else None,
            allowed_actions=(
                tuple(tuple(int(a) for a in acts) for acts in allowed_actions)
                if allowed_actions is not None
                else None
            ),
            name=name,
        )

    def transitions(self) -> list[tuple[int, int, int, float, float]]:
        return [
            (int(s), int(a), int(t), float(p), float(r))
            for s, a, t, p, r in zip(self.src, self.act, self.dst, self.prob, self.rew)
        ]

    @property
    def nnz(self) -> int:
        return int(self.src.shape[0])

    @cached_property
    def available(self) -> np.ndarray:
        """Boolean (S, A) mask of actions that have at least one transition."""
        mask = np.zeros((self.n_states, self.n_actions), dtype=bool)
        ok = (self.src >= 0) & (self.src < self.n_states) & (self.act >= 0) & (self.act < self.n_actions)
        mask[self.src[ok], self.act[ok]] = True
        if self.allowed_actions is not None:
            allowed = np.zeros_like(mask)
            for s, acts in enumerate(self.allowed_actions[: self.n_states]):
                for a in acts:
                    if 0 <= a < self.n_actions:
                        allowed[s, a] = True
            mask &= allowed
        return mask

    @cached_property
    def entry_mask(self) -> np.ndarray:
        """Which stored transitions belong to an available (s, a) pair."""
        return self.available[self.src, self.act]

    @cached_property
    def layout(self) -> "PaddedLayout":
        return PaddedLayout.build(self)

    @cached_property
    def expected_reward(self) -> np.ndarray:
        """(S, A) one-step expected reward; zero for unavailable pairs."""
        out = np.zeros((self.n_states, self.n_actions))
        m = self.entry_mask
        np.add.at(out, (self.src[m], self.act[m]), self.prob[m] * self.rew[m])
        return out

    def state_label(self, s: int) -> str:
        if s == SINK:
            return "e"
        if self.state_labels is not None:
            return self.state_labels[s]
        return str(s)

    def action_label(self, a: int) -> str:
        if self.action_labels is not None:
            return self.action_labels[a]
        return str(a)

    def with_rewards(self, rew: np.ndarray) -> "TransientMdp":
        return TransientMdp(
            n_states=self.n_states,
            n_actions=self.n_actions,
            src=self.src,
            act=self.act,
            dst=self.dst,
            prob=self.prob,
            rew=np.asarray(rew, dtype=float),
            mu=self.mu,
            state_labels=self.state_labels,
            action_labels=self.action_labels,
            allowed_actions=self.allowed_actions,
            name=self.name,
        )

    def shaped(self, potential: np.ndarray | None) -> "TransientMdp":
        """Return the model with rewards ``r + phi(s') - phi(s)`` (``phi(sink) = 0``).

        Every episode ends in the sink, so the return from ``s`` shifts by the
        constant ``-phi(s)``; values shift the same way and greedy choices do
        not change.
        """
        if potential is None:
            return self
        phi = np.asarray(potential, dtype=float)
        ext = np.append(phi, 0.0)
        return self.with_rewards(self.rew + ext[self.dst] - phi[self.src])


@dataclass(frozen=True)
class PaddedLayout:
    """Transitions regrouped as dense (S, A, K) arrays, K = max out-degree.

    Padding slots carry probability 0 and point at the sink.
    """

    dst: np.ndarray
    prob: np.ndarray
    rew: np.ndarray
    valid: np.ndarray

    @classmethod
    def build(cls, model: TransientMdp) -> "PaddedLayout":
        S, A = model.n_states, model.n_actions
        m = model.entry_mask
        src, act = model.src[m], model.act[m]
        order = np.lexsort((act, src))
        src, act = src[order], act[order]
        dst, prob, rew = model.dst[m][order], model.prob[m][order], model.rew[m][order]
        flat = src * A + act
        counts = np.bincount(flat, minlength=S * A)
        K = max(int(counts.max()) if counts.size else 0, 1)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        slot = np.arange(flat.size) - starts[flat]
        P = np.zeros((S, A, K))
        R = np.zeros((S, A, K))
        D = np.full((S, A, K), SINK, dtype=np.int64)
        V = np.zeros((S, A, K), dtype=bool)
        P[src, act, slot] = prob
        R[src, act, slot] = rew
        D[src, act, slot] = dst
        V[src, act, slot] = True
        return cls(dst=D, prob=P, rew=R, valid=V)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> dict:
        return {"valid": self.ok, "violations": list(self.violations), "warnings": list(self.warnings)}


def validate_model(model: TransientMdp) -> ValidationReport:
    """List every structural problem of ``model``.

    Hard violations make the model unusable by the solvers; warnings (such as
    a zero initial probability) do not.
    """
    rep = ValidationReport()
    S, A = model.n_states, model.n_actions
    if S < 1:
        rep.violations.append(f"n_states must be >= 1, got {S}")
    if A < 1:
        rep.violations.append(f"n_actions must be >= 1, got {A}")
    n = model.nnz
    if not (model.act.shape[0] == n and model.dst.shape[0] == n and model.prob.shape[0] == n and model.rew.shape[0] == n):
        rep.violations.append("transition arrays have inconsistent lengths")
        return rep

    for i in range(n):
        s, a, t = int(model.src[i]), int(model.act[i]), int(model.dst[i])
        p, r = float(model.prob[i]), float(model.rew[i])
        where = f"transition {i} (s={s}, a={a}, s_next={t})"
        if not 0 <= s < S:
            rep.violations.append(f"{where}: source state out of range [0, {S})")
        if not 0 <= a < A:
            rep.violations.append(f"{where}: action out of range [0, {A})")
        if not SINK <= t < S:
            rep.violations.append(f"{where}: next state out of range [-1, {S})")
        if not (math.isfinite(p) and 0.0 <= p <= 1.0):
            rep.violations.append(f"{where}: probability {float(p)!r} not in [0, 1]")
        if not math.isfinite(r):
            rep.violations.append(f"{where}: reward {float(r)!r} is not finite")
    if rep.violations:
        return rep

    mass = np.zeros((S, A))
    np.add.at(mass, (model.src, model.act), model.prob)
    listed = np.zeros((S, A), dtype=bool)
    listed[model.src, model.act] = True
    for s, a in zip(*np.nonzero(listed)):
        if abs(mass[s, a] - 1.0) > MASS_TOL:
            rep.violations.append(f"row mass != 1 at (s={s}, a={a}): outgoing probability sums to {float(mass[s, a])!r}")

    if model.allowed_actions is not None:
        if len(model.allowed_actions) != S:
            rep.violations.append(f"allowed_actions has {len(model.allowed_actions)} entries, expected {S}")
        else:
            for s, acts in enumerate(model.allowed_actions):
                for a in acts:
                    if not 0 <= a < A:
                        rep.violations.append(f"allowed action {a} of state {s} out of range")
                    elif not listed[s, a]:
                        rep.violations.append(f"row mass != 1 at (s={s}, a={a}): allowed action has no transitions")

    avail = model.available
    for s in np.nonzero(~avail.any(axis=1))[0]:
        rep.violations.append(f"state {s} has no available action")

    mu = model.mu
    if mu.shape != (S,):
        rep.violations.append(f"mu has shape {mu.shape}, expected ({S},)")
    else:
        if not np.all(np.isfinite(mu)) or np.any(mu < 0):
            rep.violations.append("mu must be finite and nonnegative")
        elif abs(math.fsum(mu) - 1.0) > MASS_TOL:
            rep.violations.append(f"mu sums to {math.fsum(mu)!r}, expected 1")
        zero = np.nonzero(mu == 0)[0]
        if zero.size and not rep.violations:
            rep.warnings.append(
                "initial distribution is zero on states "
                + ", ".join(str(int(s)) for s in zero)
                + "; their values are reported per state only"
            )

    if model.state_labels is not None and len(model.state_labels) != S:
        rep.violations.append(f"{len(model.state_labels)} state labels for {S} states")
    if model.action_labels is not None and len(model.action_labels) != A:
        rep.violations.append(f"{len(model.action_labels)} action labels for {A} actions")
    return rep


def require_valid(model: TransientMdp) -> TransientMdp:
    rep = validate_model(model)
    if not rep.ok:
        raise InvalidModelError(rep.violations)
    return model


@dataclass(frozen=True, eq=False)
class DecisionRule:
    """Per-state distribution over actions, shape (S, A)."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError("decision rule must be a 2-D (states x actions) array")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > MASS_TOL):
            raise ValueError("each row of a decision rule must be a probability distribution")
        object.__setattr__(self, "probs", p)

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "DecisionRule":
        actions = np.asarray(actions, dtype=np.int64)
        p = np.zeros((actions.size, n_actions))
        p[np.arange(actions.size), actions] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, model: TransientMdp) -> "DecisionRule":
        avail = model.available.astype(float)
        return cls(avail / avail.sum(axis=1, keepdims=True))

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0) | (self.probs == 1)))

    @property
    def actions(self) -> np.ndarray:
        if not self.is_deterministic:
            raise ValueError("randomized rule has no single action per state")
        return self.probs.argmax(axis=1)

    def __eq__(self, other) -> bool:
        return isinstance(other, DecisionRule) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def check_against(self, model: TransientMdp) -> None:
        if self.probs.shape != (model.n_states, model.n_actions):
            raise ValueError(
                f"decision rule shape {self.probs.shape} does not match model "
                f"({model.n_states}, {model.n_actions})"
            )
        if np.any(self.probs[~model.available] > 0):
            s, a = np.argwhere((self.probs > 0) & ~model.available)[0]
            raise ValueError(f"decision rule puts mass on unavailable action {a} in state {s}")


def discount_to_trc(model: TransientMdp, gamma: float) -> TransientMdp:
    """Convert a discounted MDP (no sink transitions) to an equivalent transient one.

    Non-sink transitions are scaled by ``gamma``; every available pair gets a
    sink transition of probability ``1 - gamma`` carrying the expected one-step
    reward, so risk-neutral total values equal the discounted values.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma!r}")
    require_valid(model)
    if np.any(model.dst == SINK):
        raise ValueError("discounted model must not contain sink transitions")
    rows = []
    for s, a, t, p, r in model.transitions():
        if gamma * p > 0.0:
            rows.append((s, a, t, gamma * p, r))
    rbar = model.expected_reward
    for s, a in zip(*np.nonzero(model.available)):
        rows.append((int(s), int(a), SINK, 1.0 - gamma, float(rbar[s, a])))
    rows.sort(key=lambda t: (t[0], t[1], t[2] if t[2] != SINK else 1 << 60))
    return TransientMdp.from_transitions(
        model.n_states,
        model.n_actions,
        rows,
        model.mu,
        state_labels=model.state_labels,
        action_labels=model.action_labels,
        allowed_actions=model.allowed_actions,
        name=(model.name + f"-trc(gamma={gamma})") if model.name else "",
    )


def warn_if_invalid(model: TransientMdp) -> ValidationReport:
    rep = validate_model(model)
    for w in rep.warnings:
        warnings.warn(w, stacklevel=2)
    return rep
