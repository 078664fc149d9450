"""Probability and exponential matrices of decision rules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnboundedRiskError
from .model import SINK, DecisionRule, TransientMdp

# exp(700) ~ 1e304, the last safe decade below float overflow.
EXPONENT_LIMIT = 700.0


@dataclass(frozen=True, eq=False)
class PolicyMatrices:
    P: np.ndarray
    p_term: np.ndarray


@dataclass(frozen=True, eq=False)
class ExponentialMatrices:
    """``B`` and ``b`` of a decision rule at risk level ``beta``.

    ``c`` equals ``B @ 1 + b - 1`` but is accumulated with ``expm1`` so it
    keeps full relative precision as ``beta -> 0``.
    """

    B: np.ndarray
    b: np.ndarray
    beta: float
    c: np.ndarray | None = None


def build_policy_matrices(model: TransientMdp, rule: DecisionRule) -> PolicyMatrices:
    rule.check_against(model)
    S = model.n_states
    m = model.entry_mask
    src, act, dst, prob = model.src[m], model.act[m], model.dst[m], model.prob[m]
    weight = prob * rule.probs[src, act]
    inner = dst != SINK
    P = np.zeros((S, S))
    np.add.at(P, (src[inner], dst[inner]), weight[inner])
    p_term = np.zeros(S)
    np.add.at(p_term, src[~inner], weight[~inner])
    return PolicyMatrices(P=P, p_term=p_term)


def _exponents(model: TransientMdp, betas: np.ndarray) -> np.ndarray:
    m = model.entry_mask
    return -np.multiply.outer(betas, model.rew[m])


def _first_overflow(model: TransientMdp, expo: np.ndarray) -> UnboundedRiskError | None:
    bad = np.argwhere(expo > EXPONENT_LIMIT)
    if bad.size == 0:
        return None
    i = bad[0][-1]
    m = model.entry_mask
    return UnboundedRiskError(
        int(model.src[m][i]), int(model.act[m][i]), int(model.dst[m][i]), float(expo.reshape(-1, expo.shape[-1])[:, i].max())
    )


def build_exponential_matrices(
    model: TransientMdp, rule: DecisionRule, beta: float, potential: np.ndarray | None = None
) -> ExponentialMatrices:
    """Assemble ``B[s, s'] = sum_a d_a(s) p(s,a,s') exp(-beta r(s,a,s'))`` and ``b`` likewise for the sink.

    With ``potential`` the rewards are shaped first (see ``TransientMdp.shaped``),
    which rescales ``B`` by a positive diagonal similarity.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    rule.check_against(model)
    shaped = model.shaped(potential)
    expo = _exponents(shaped, np.asarray(beta, dtype=float))
    err = _first_overflow(shaped, expo)
    if err is not None:
        raise err
    m = shaped.entry_mask
    src, act, dst, prob = shaped.src[m], shaped.act[m], shaped.dst[m], shaped.prob[m]
    d = rule.probs[src, act]
    weight = prob * d * np.exp(expo)
    S = model.n_states
    inner = dst != SINK
    B = np.zeros((S, S))
    np.add.at(B, (src[inner], dst[inner]), weight[inner])
    b = np.zeros(S)
    np.add.at(b, src[~inner], weight[~inner])
    c = np.zeros(S)
    np.add.at(c, src, prob * d * np.expm1(expo))
    mass = np.zeros(S)
    np.add.at(mass, src, prob * d)
    c += mass - 1.0
    return ExponentialMatrices(B=B, b=b, beta=float(beta), c=c)


@dataclass(frozen=True, eq=False)
class ActionExponentials:
    """Per-action exponential matrices, optionally for a stack of betas.

    Shapes: ``B`` (..., A, S, S), ``b`` and ``c`` (..., A, S), ``available``
    (..., S, A). Leading axes index betas when built for an array.
    """

    B: np.ndarray
    b: np.ndarray
    c: np.ndarray
    available: np.ndarray
    betas: np.ndarray
    potential: np.ndarray | None


def action_exponentials(
    model: TransientMdp,
    betas,
    potential: np.ndarray | None = None,
    tolerant: bool = False,
) -> ActionExponentials:
    """Exponential matrices of every deterministic action for one or many betas.

    Out-of-range exponents raise ``UnboundedRiskError`` unless ``tolerant``:
    then the affected state-action pairs are dropped instead. That is only
    sound when ``potential`` approximates the value function, because such a
    pair is then worse than the state's value by a factor above ``e**700`` in
    exponential terms.
    """
    betas = np.asarray(betas, dtype=float)
    scalar = betas.ndim == 0
    bs = np.atleast_1d(betas)
    if np.any(~(bs > 0)):
        raise ValueError("beta must be positive")
    shaped = model.shaped(potential)
    S, A = model.n_states, model.n_actions
    m = shaped.entry_mask
    src, act, dst, prob = shaped.src[m], shaped.act[m], shaped.dst[m], shaped.prob[m]
    expo = _exponents(shaped, bs)  # (nb, nnz)
    over = expo > EXPONENT_LIMIT
    avail = np.broadcast_to(model.available, (bs.size, S, A)).copy()
    if over.any():
        if not tolerant:
            raise _first_overflow(shaped, expo)
        kb, ki = np.nonzero(over)
        avail[kb, src[ki], act[ki]] = False
        if np.any(~avail.any(axis=2)):
            raise _first_overflow(shaped, expo)
        expo = np.where(over, 0.0, expo)
    weight = prob * np.exp(expo)
    nb = bs.size
    inner = dst != SINK
    B = np.zeros((nb, A, S, S))
    b = np.zeros((nb, A, S))
    c = np.zeros((nb, A, S))
    kk = np.arange(nb)[:, None]
    np.add.at(B, (kk, act[inner][None, :], src[inner][None, :], dst[inner][None, :]), weight[:, inner])
    np.add.at(b, (kk, act[~inner][None, :], src[~inner][None, :]), weight[:, ~inner])
    np.add.at(c, (kk, act[None, :], src[None, :]), prob * np.expm1(expo))
    mass = np.zeros((A, S))
    np.add.at(mass, (act, src), prob)
    c += np.where(model.available.T, mass - 1.0, 0.0)
    # dropped pairs must not look attractive to any solver
    dropped = ~np.swapaxes(avail, 1, 2) & model.available.T[None]
    if dropped.any():
        B[dropped] = 0.0
        b[dropped] = 0.0
        c[dropped] = 0.0
    if scalar:
        return ActionExponentials(B[0], b[0], c[0], avail[0], betas, potential)
    return ActionExponentials(B, b, c, avail, bs, potential)


def action_probabilities(model: TransientMdp) -> tuple[np.ndarray, np.ndarray]:
    """(A, S, S) non-sink transition probabilities and (A, S) sink probabilities per action."""
    S, A = model.n_states, model.n_actions
    m = model.entry_mask
    src, act, dst, prob = model.src[m], model.act[m], model.dst[m], model.prob[m]
    inner = dst != SINK
    P = np.zeros((A, S, S))
    np.add.at(P, (act[inner], src[inner], dst[inner]), prob[inner])
    p_term = np.zeros((A, S))
    np.add.at(p_term, (act[~inner], src[~inner]), prob[~inner])
    return P, p_term


def exponents_in_range(model: TransientMdp, beta: float, potential: np.ndarray | None = None) -> bool:
    """True when every ``-beta * r`` (shaped) lies within +-EXPONENT_LIMIT."""
    expo = _exponents(model.shaped(potential), np.asarray(beta, dtype=float))
    return bool(expo.size == 0 or np.max(np.abs(expo)) <= EXPONENT_LIMIT)


def rule_matrix(B: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Rows of an (..., A, S, S) stack chosen by a deterministic rule -> (..., S, S)."""
    return B[..., actions, np.arange(actions.size), :]


def rule_vector(v: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Entries of an (..., A, S) stack chosen by a deterministic rule -> (..., S)."""
    return v[..., actions, np.arange(actions.size)]
