"""Shared oracles for the test suite.

The oracles here rebuild matrices straight from the transition list and use
plain dense linear algebra or path enumeration, so they share no code with
the solvers under test.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dense_kernels(model):
    """``P[a, s, s']``, ``term[a, s]`` and reward arrays built from the raw transition list."""
    S, A = model.n_states, model.n_actions
    P = np.zeros((A, S, S))
    term = np.zeros((A, S))
    entries = [[[] for _ in range(S)] for _ in range(A)]
    for s, a, t, p, r in model.transitions():
        entries[a][s].append((t, p, r))
        if t == -1:
            term[a, s] += p
        else:
            P[a, s, t] += p
    return P, term, entries


def available_actions(model) -> list[list[int]]:
    _, _, entries = dense_kernels(model)
    out = []
    for s in range(model.n_states):
        acts = [a for a in range(model.n_actions) if entries[a][s]]
        if model.allowed_actions is not None:
            acts = [a for a in acts if a in model.allowed_actions[s]]
        out.append(acts)
    return out


def policy_erm_oracle(model, actions, beta):
    """ERM values of a deterministic rule by a direct solve of ``w = B w - b``; ``None`` if unbounded."""
    S = model.n_states
    _, _, entries = dense_kernels(model)
    B = np.zeros((S, S))
    b = np.zeros(S)
    for s in range(S):
        for t, p, r in entries[actions[s]][s]:
            e = p * math.exp(-beta * r)
            if t == -1:
                b[s] += e
            else:
                B[s, t] += e
    if max(abs(np.linalg.eigvals(B))) >= 1 - 1e-12:
        return None
    u = np.linalg.solve(np.eye(S) - B, b)
    return -np.log(u) / beta


def brute_force_erm(model, beta):
    """Best value per state over all deterministic stationary rules, plus the maximizing rules."""
    best = np.full(model.n_states, -np.inf)
    table = []
    for combo in itertools.product(*available_actions(model)):
        v = policy_erm_oracle(model, combo, beta)
        if v is None:
            continue
        table.append((combo, v))
        best = np.maximum(best, v)
    argmax = [c for c, v in table if np.all(v >= best - 1e-9 * (1 + np.abs(best)))]
    return best, argmax


def path_erm(model, beta, epoch_actions, s0):
    """ERM of the horizon-``T`` total reward from ``s0`` by enumerating every path.

    ``epoch_actions[k][s]`` is the action at decision epoch ``k``.
    """
    _, _, entries = dense_kernels(model)
    outcomes = []  # (prob, total)

    def walk(s, k, prob, total):
        if s == -1 or k == len(epoch_actions):
            outcomes.append((prob, total))
            return
        for t, p, r in entries[epoch_actions[k][s]][s]:
            if p > 0:
                walk(t, k + 1, prob * p, total + r)

    walk(s0, 0, 1.0, 0.0)
    m = min(x for _, x in outcomes)
    acc = math.fsum(p * math.exp(-beta * (x - m)) for p, x in outcomes)
    return m - math.log(acc) / beta


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
