import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import brute_force_erm
from risktrc.benchmarks import (
    ChainParams,
    GamblersRuinParams,
    analytic_chain_erm,
    gamblers_ruin,
    random_transient_mdp,
    single_state_chain,
)
from risktrc.erm import BOUNDED, UNBOUNDED, solve_erm
from risktrc.errors import BetaGridError
from risktrc.evar import beta_max, build_beta_grid, erm_sweep, evar_solve, find_beta0, grid_error_audit
from risktrc.model import SINK, TransientMdp
from risktrc.risk import erm

CP = ChainParams(0.9, -0.2)
CHAIN = single_state_chain(CP)


def _zero_reward_model():
    rows = [(0, 0, 1, 0.5, 0.0), (0, 0, SINK, 0.5, 0.0), (1, 0, SINK, 1.0, 0.0), (1, 1, 0, 0.3, 0.0), (1, 1, SINK, 0.7, 0.0)]
    return TransientMdp.from_transitions(2, 2, rows, [0.5, 0.5])


def _small_random(seed):
    rng = np.random.default_rng(seed)
    return random_transient_mdp(rng, int(rng.integers(1, 4)), int(rng.integers(1, 3)), min_exit=0.7)


# --- grid -------------------------------------------------------------------------------


def test_grid_endpoint_example():
    assert beta_max(0.5, 0.1) == pytest.approx(6.93147, abs=1e-5)
    g = build_beta_grid(0.5, 0.1, 0.05)
    assert g.beta_k == pytest.approx(math.log(2) / 0.1, rel=1e-15)
    assert g.betas[0] == 0.05


@given(st.floats(0.01, 0.99), st.floats(0.01, 1.0), st.floats(1e-3, 1.0))
def test_grid_reciprocals_evenly_spaced(alpha, delta, frac):
    beta0 = frac * beta_max(alpha, delta)
    g = build_beta_grid(alpha, delta, beta0)
    inv = 1.0 / g.betas
    step = delta / -math.log(alpha)
    assert np.all(np.diff(g.betas) > 0)
    np.testing.assert_allclose(-np.diff(inv[:-1]), step, rtol=1e-9, atol=1e-12 * inv[0])
    if len(g) > 1:
        # the last step may be a partial one
        assert 0 < inv[-2] - inv[-1] <= step * (1 + 1e-9)
    expected = math.ceil((1 / beta0 - 1 / g.beta_k) / step - 1e-9) + 1
    assert len(g) == expected


def test_one_point_grid():
    bk = beta_max(0.3, 0.2)
    g = build_beta_grid(0.3, 0.2, bk)
    assert len(g) == 1 and g.betas[0] == bk


@pytest.mark.parametrize("args", [(1.0, 0.1, 1.0), (0.5, 0.0, 1.0), (0.5, 0.1, -1.0), (0.5, 0.1, 100.0)])
def test_grid_errors(args):
    with pytest.raises(BetaGridError):
        build_beta_grid(*args)


# --- beta0 search ------------------------------------------------------------------------


def test_find_beta0_flat_model_needs_no_halving():
    m = _zero_reward_model()
    b, k = find_beta0(m, 0.5, 0.1)
    assert k == 0 and b == beta_max(0.5, 0.1)


def test_find_beta0_chain_against_closed_form():
    alpha, delta = 0.9, 0.1
    b, k = beta_max(alpha, delta), 0
    while -2.0 - analytic_chain_erm(CP, b) > delta:
        b, k = b / 2, k + 1
    assert find_beta0(CHAIN, alpha, delta) == (pytest.approx(b, rel=1e-15), k)


# --- sweep -----------------------------------------------------------------------------------


def test_sweep_on_chain_matches_closed_form():
    betas = np.linspace(0.05, 0.8, 40)
    sw = erm_sweep(CHAIN, betas)
    for b, g, st_ in zip(betas, sw.g, sw.status):
        ref = analytic_chain_erm(CP, b)
        if math.isinf(ref):
            assert st_ == UNBOUNDED and g == -math.inf
        else:
            assert st_ == BOUNDED and g == pytest.approx(ref, abs=1e-8)


@pytest.mark.parametrize("seed", range(6))
def test_sweep_matches_independent_solves(seed):
    m = _small_random(seed)
    betas = np.geomspace(0.01, 1.0, 30)
    sw = erm_sweep(m, betas)
    for i, b in enumerate(betas):
        best, _ = brute_force_erm(m, b)
        assert sw.g[i] == pytest.approx(erm(best, m.mu, b), abs=1e-8)
    assert sw.full_solves <= len(betas)


def test_sweep_rejects_unsorted():
    with pytest.raises(ValueError):
        erm_sweep(CHAIN, [0.3, 0.2])


# --- EVaR solve ----------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(8))
def test_evar_solve_matches_exhaustive_oracle(seed):
    m = _small_random(seed)
    alpha, delta = 0.8, 0.25
    sol = evar_solve(m, alpha, delta)
    hs = []
    for b in sol.grid.betas:
        best, _ = brute_force_erm(m, b)
        hs.append(erm(best, m.mu, b) + math.log(alpha) / b)
    k = int(np.argmax(hs))
    assert sol.evar_lower == pytest.approx(hs[k], abs=1e-8)
    assert sol.beta_star == pytest.approx(sol.grid.betas[k])
    # the returned rule attains the grid maximum at its own beta
    best, winners = brute_force_erm(m, sol.beta_star)
    assert tuple(int(a) for a in sol.policy.actions) in winners


def test_zero_reward_model_evar_is_minus_delta():
    sol = evar_solve(_zero_reward_model(), 0.5, 0.1)
    assert len(sol.grid) == 1
    assert sol.evar_lower == pytest.approx(-0.1, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_last_grid_point_h_is_g_minus_delta(seed):
    m = _small_random(seed)
    sol = evar_solve(m, 0.8, 0.25)
    assert sol.h[-1] == pytest.approx(sol.sweep.g[-1] - 0.25, abs=1e-12)


def test_evar_lower_monotone_in_alpha_up_to_delta():
    m = _small_random(3)
    delta = 0.2
    vals = [evar_solve(m, a, delta).evar_lower for a in (0.6, 0.7, 0.8, 0.9)]
    for a, b in zip(vals, vals[1:]):
        assert a <= b + delta


def test_evar_chain_bracketed_by_risk_neutral():
    sol = evar_solve(CHAIN, 0.9, 0.1)
    assert sol.evar_lower <= -2.0
    assert any(s == UNBOUNDED for s in sol.sweep.status)
    assert math.isfinite(sol.evar_lower)


def test_solution_json_shape():
    d = evar_solve(CHAIN, 0.9, 0.1).to_dict()
    assert d["grid_size"] == len(d["per_beta"])
    assert any(row["g_star"] == "-inf" for row in d["per_beta"])


# --- audit -----------------------------------------------------------------------------------


@pytest.mark.parametrize("model", [CHAIN, _zero_reward_model()], ids=["chain", "flat"])
def test_grid_audit(model):
    sol = evar_solve(model, 0.9, 0.1)
    rep = grid_error_audit(model, sol.grid, n_dense=200, grid_h=sol.h)
    assert rep.passed and rep.gap <= rep.bound


def test_solve_erm_rejects_nonpositive_beta_via_prepare():
    with pytest.raises(ValueError):
        solve_erm(CHAIN, -1.0)


def _payout_evar(model, actions, alpha, q=0.68, cap=7):
    """Exact EVaR of a gambler's-ruin payout via absorption probabilities and a dense beta ladder."""
    S = cap + 1
    P = np.zeros((S, S))
    for c, a in enumerate(actions):
        if a:
            P[c, min(c + a, cap)] += q
            P[c, c - a] += 1 - q
    reach = model.mu @ np.linalg.inv(np.eye(S) - P)
    quits = [c for c in range(S) if actions[c] == 0 and reach[c] > 1e-15]
    x = np.array([-1.0 if c == 0 else float(c) for c in quits])
    w = reach[quits]
    b = np.geomspace(1e-3, 1e3, 6000)[:, None]
    h = x.min() - np.log((w * np.exp(-b * (x - x.min()))).sum(axis=1)) / b[:, 0] + math.log(alpha) / b[:, 0]
    return float(h.max())


def test_gambler_high_alpha_policy_is_exhaustive_optimum():
    g = gamblers_ruin(GamblersRuinParams(initial="nonruin"))
    choices = [[0]] + [list(range(c + 1)) for c in range(1, 7)] + [[0]]
    scores = {p: _payout_evar(g, p, 0.9) for p in itertools.product(*choices)}
    best = max(scores, key=scores.get)
    sol = evar_solve(g, 0.9, 0.01)
    assert tuple(int(a) for a in sol.policy.actions) == best
    assert sol.evar_lower <= scores[best] + 1e-9
    assert scores[best] - sol.evar_lower <= 0.01 + 1e-9
