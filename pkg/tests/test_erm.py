import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import brute_force_erm, policy_erm_oracle
from risktrc.benchmarks import ChainParams, GamblersRuinParams, analytic_chain_erm, gamblers_ruin, random_transient_mdp, single_state_chain
from risktrc.erm import (
    BOUNDED,
    UNBOUNDED,
    erm_from_exponential,
    exp_bellman_apply,
    exp_bellman_optimal,
    finite_horizon_solve,
    lp_solve,
    policy_evaluation_exact,
    policy_iteration,
    policy_values,
    risk_neutral_solve,
    solve_erm,
    value_iteration,
)
from risktrc.errors import NotTransientError, UnboundedPolicyError
from risktrc.matrices import build_exponential_matrices
from risktrc.model import SINK, DecisionRule, TransientMdp
from risktrc.risk import aggregate_initial

CP = ChainParams(0.9, -0.2)
CHAIN = single_state_chain(CP)
ONE = DecisionRule.deterministic([0], 1)
METHODS = ("vi", "pi", "lp")


def _random(seed, S=None, A=None):
    rng = np.random.default_rng(seed)
    S = S or int(rng.integers(1, 6))
    A = A or int(rng.integers(1, 4))
    return random_transient_mdp(rng, S, A)


# --- operators ----------------------------------------------------------------


def test_chain_operator():
    mats = build_exponential_matrices(CHAIN, ONE, 0.5)
    e = math.exp(0.1)
    assert exp_bellman_apply(mats, np.array([-2.0]))[0] == pytest.approx(0.9 * e * -2.0 - 0.1 * e)
    assert exp_bellman_apply(mats, np.zeros(1))[0] == pytest.approx(-0.1 * e)


def test_zero_rewards_fix_minus_one():
    m = _random(2)
    m = m.with_rewards(np.zeros_like(m.rew))
    w, _ = exp_bellman_optimal(m, 0.3, -np.ones(m.n_states))
    np.testing.assert_allclose(w, -1.0, atol=1e-15)


def test_gambler_greedy_at_capital_three():
    g = gamblers_ruin()
    beta = 0.1
    w = -np.ones(g.n_states)
    got, rule = exp_bellman_optimal(g, beta, w)
    cands = {}
    for s, a, t, p, r in g.transitions():
        if s == 3:
            cands.setdefault(a, 0.0)
            cands[a] += p * math.exp(-beta * r) * (w[t] if t != SINK else 0.0) - (p * math.exp(-beta * r) if t == SINK else 0.0)
    best = max(cands.values())
    assert got[3] == pytest.approx(best, rel=1e-14)
    assert rule.actions[3] == min(a for a, v in cands.items() if v == best)


def test_identical_actions_pick_smallest():
    rows = [(0, a, SINK, 1.0, 0.5) for a in range(3)]
    m = TransientMdp.from_transitions(1, 3, rows, [1.0])
    _, rule = exp_bellman_optimal(m, 1.0, np.zeros(1))
    assert rule.actions[0] == 0
    for method in METHODS:
        assert solve_erm(m, 1.0, method).policy.actions[0] == 0


@given(st.integers(0, 10_000), st.floats(0.05, 1.0))
def test_operator_monotone(seed, beta):
    m = _random(seed)
    rng = np.random.default_rng(seed + 1)
    w2 = -rng.random(m.n_states) * 3
    w1 = w2 + rng.random(m.n_states)
    a1, _ = exp_bellman_optimal(m, beta, w1)
    a2, _ = exp_bellman_optimal(m, beta, w2)
    assert np.all(a1 >= a2 - 1e-15)


def test_erm_from_exponential():
    np.testing.assert_allclose(erm_from_exponential(-np.ones(3), 0.7), 0.0, atol=0)
    assert erm_from_exponential(np.array([-math.exp(-0.5 * 3.0)]), 0.5)[0] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        erm_from_exponential(np.array([0.5]), 1.0)


# --- chain ------------------------------------------------------------------------


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("beta", [0.1, 0.2, 0.3, 0.4, 0.5, 0.52])
def test_chain_closed_form(method, beta):
    rep = solve_erm(CHAIN, beta, method)
    assert rep.status == BOUNDED
    assert rep.value[0] == pytest.approx(analytic_chain_erm(CP, beta), abs=1e-8)


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("beta", [0.527, 0.53, 0.6, 1.0, 5.0])
def test_chain_unbounded(method, beta):
    rep = solve_erm(CHAIN, beta, method)
    assert rep.status == UNBOUNDED
    assert rep.value[0] == -math.inf and rep.objective == -math.inf
    assert rep.witness is not None


def test_boundedness_dichotomy_threshold():
    threshold = math.log(1 / 0.9) / 0.2
    assert threshold == pytest.approx(0.52680, abs=1e-5)
    assert solve_erm(CHAIN, threshold * (1 - 1e-3)).status == BOUNDED
    assert solve_erm(CHAIN, threshold * (1 + 1e-3)).status == UNBOUNDED


def test_chain_exact_evaluation():
    w = policy_evaluation_exact(CHAIN, ONE, 0.4)
    B, b = 0.9 * math.exp(0.08), 0.1 * math.exp(0.08)
    assert w[0] == pytest.approx(-b / (1 - B), rel=1e-12)
    with pytest.raises(UnboundedPolicyError):
        policy_evaluation_exact(CHAIN, ONE, 0.6)


def test_quit_everywhere_values_equal_capital():
    g = gamblers_ruin()
    rule = DecisionRule.deterministic([0] * 8, g.n_actions)
    for beta in (0.1, 1.0, 10.0):
        v = policy_values(g, rule, beta)
        np.testing.assert_allclose(v[1:7], np.arange(1, 7), atol=1e-12)


@pytest.mark.parametrize("beta", [0.5, 2.0, 20.0, 200.0])
def test_policy_values_match_oracle_for_nonoptimal_rules(beta):
    g = gamblers_ruin()
    for acts in ([0, 1, 1, 1, 1, 1, 1, 0], [0, 1, 2, 3, 3, 2, 1, 0]):
        rule = DecisionRule.deterministic(acts, g.n_actions)
        got = policy_values(g, rule, beta)
        ref = policy_erm_oracle(g, acts, beta) if beta < 50 else None
        if ref is not None:
            np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-9)
        assert np.all(np.isfinite(got)) and np.all(got >= -1 - 1e-12)


# --- cross-method agreement and brute force --------------------------------------------


@given(st.integers(0, 10_000), st.floats(0.05, 0.5))
def test_methods_agree_with_brute_force(seed, beta):
    m = _random(seed)
    best, winners = brute_force_erm(m, beta)
    reps = {meth: solve_erm(m, beta, meth) for meth in METHODS}
    for rep in reps.values():
        assert rep.status == BOUNDED
        np.testing.assert_allclose(rep.value, best, atol=1e-8, rtol=1e-8)
        assert tuple(int(a) for a in rep.policy.actions) in winners
    assert reps["vi"].policy == reps["pi"].policy == reps["lp"].policy


def test_pi_from_quit_everywhere_matches_lp():
    g = gamblers_ruin()
    init = DecisionRule.deterministic([0] * 8, g.n_actions)
    pi = policy_iteration(g, 0.5, init=init)
    lp = lp_solve(g, 0.5)
    np.testing.assert_allclose(pi.value, lp.value, atol=1e-8)


def test_pi_single_action_stops_after_one_evaluation():
    assert policy_iteration(CHAIN, 0.4).iterations == 1


def test_vi_residual_and_restart_uniqueness():
    m = _random(7, 4, 3)
    rep = value_iteration(m, 0.2)
    w = -np.exp(-0.2 * rep.value)
    lw, _ = exp_bellman_optimal(m, 0.2, w)
    assert np.max(np.abs(lw - w)) <= 1e-9
    # restart below the fixed point through the finite-horizon recursion
    ws, _ = finite_horizon_solve(m, 0.2, 3000, terminal_z=-(w - 0.1))
    np.testing.assert_allclose(ws[-1], w, atol=1e-6)


@given(st.integers(0, 10_000), st.floats(0.05, 0.5))
def test_vi_iterates_non_increasing(seed, beta):
    m = _random(seed)
    hist = value_iteration(m, beta, record_history=True).history
    assert hist[0].tolist() == [0.0] * m.n_states
    for a, b in zip(hist, hist[1:]):
        assert np.all(b <= a)
        assert np.all(b <= 0)


def test_gambler_small_beta_matches_risk_neutral():
    g = gamblers_ruin()
    rn = risk_neutral_solve(g)
    for method in METHODS:
        np.testing.assert_allclose(solve_erm(g, 1e-9, method).value, rn.value, atol=1e-6)


@pytest.mark.parametrize("beta", [1e-3, 0.1, 1.0, 10.0, 100.0])
def test_gambler_methods_agree_over_wide_beta(beta):
    g = gamblers_ruin()
    vals = [solve_erm(g, beta, m) for m in METHODS]
    for rep in vals:
        assert rep.status == BOUNDED
        np.testing.assert_allclose(rep.value, vals[0].value, atol=1e-8)
        assert rep.policy == vals[0].policy


def test_beta_monotone_on_gambler():
    g = gamblers_ruin()
    objs = [solve_erm(g, b).objective for b in np.geomspace(1e-3, 50, 25)]
    assert all(b <= a + 1e-12 for a, b in zip(objs, objs[1:]))


def test_objective_is_aggregate():
    g = gamblers_ruin()
    rep = solve_erm(g, 0.7)
    assert rep.objective == pytest.approx(aggregate_initial(rep.value, g.mu, 0.7), abs=1e-12)


def test_partially_unbounded_model():
    # state 0 can only loop with a cost; state 1 exits immediately
    rows = [(0, 0, 0, 0.95, -1.0), (0, 0, SINK, 0.05, 0.0), (1, 0, SINK, 1.0, 2.0)]
    m = TransientMdp.from_transitions(2, 1, rows, [0.5, 0.5])
    for method in METHODS:
        rep = solve_erm(m, 1.0, method)
        assert rep.status == UNBOUNDED
        assert rep.value[0] == -math.inf
        assert rep.value[1] == pytest.approx(2.0)


def test_report_json_shape():
    d = solve_erm(CHAIN, 0.6).to_dict()
    assert {"method", "status", "beta", "objective", "value", "policy", "residual", "iterations"} <= set(d)
    assert d["objective"] == "-inf" and d["value"] == ["-inf"]


# --- finite horizon and risk neutral ---------------------------------------------------


def test_finite_horizon_base_and_one_step():
    ws, rules = finite_horizon_solve(CHAIN, 0.4, 0)
    assert ws[0].tolist() == [-1.0] and rules == []
    ws, _ = finite_horizon_solve(CHAIN, 0.4, 1)
    assert -math.log(-ws[1][0]) / 0.4 == pytest.approx(-0.2, abs=1e-15)


@pytest.mark.parametrize("T", [1, 5, 50, 200])
def test_finite_horizon_chain_series(T):
    ws, _ = finite_horizon_solve(CHAIN, 0.4, T)
    v = -math.log(-ws[T][0]) / 0.4
    assert v == pytest.approx(analytic_chain_erm(CP, 0.4, horizon=T), abs=1e-10)


def test_finite_horizon_converges_toward_infinite():
    vals = [-math.log(-finite_horizon_solve(CHAIN, 0.4, T, terminal_z=[0.0])[0][T][0]) / 0.4 for T in (5, 20, 80, 2000)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(analytic_chain_erm(CP, 0.4), abs=1e-8)


def test_risk_neutral_examples():
    assert risk_neutral_solve(CHAIN).value[0] == pytest.approx(-2.0, abs=1e-12)
    m = _random(4).with_rewards(np.zeros(_random(4).nnz))
    np.testing.assert_allclose(risk_neutral_solve(m).value, 0.0, atol=1e-12)
    rn = solve_erm(CHAIN, 0.0)
    assert rn.method == "risk-neutral" and rn.exp_value is None


def test_literal_gambler_vi_refuses_pi_lp_find_terminating_rule():
    lit = gamblers_ruin(GamblersRuinParams(mode="literal"))
    with pytest.raises(NotTransientError):
        solve_erm(lit, 0.5, "vi")
    strict = solve_erm(gamblers_ruin(), 0.5)
    for method in ("pi", "lp"):
        rep = solve_erm(lit, 0.5, method)
        assert rep.policy == DecisionRule.deterministic(strict.policy.actions, lit.n_actions)
        np.testing.assert_allclose(rep.value, strict.value, atol=1e-9)
