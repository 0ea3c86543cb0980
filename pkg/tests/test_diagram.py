import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dissuade.diagram import (EDGES, NODES, InfluenceDiagram, build_diagram,
                              conditional_expected_payoff, expected_payoff, full_assignments,
                              joint_probability, marginal_payoff_distribution, optimal_decision,
                              rank_decisions)
from dissuade.errors import UsageError, ValidationError
from dissuade.samplers import RandomStream
from dissuade.scenario import ExperimentDraw, draw_experiment

from oracles import (TOY_EXPECTED_PAYOFF, exact_expected_payoffs, oracle_choice,
                     random_diagram)


def toy_draw(**over):
    fields = dict(theta=[1000.0, 100.0, 0.0], gamma=[50.0], eta_attack=40.0, q_attack=[0.5],
                  w=[[0.2, 0.3, 0.5]])
    fields.update(over)
    return ExperimentDraw(**fields)


def two_measure_diagram(q=(0.5, 0.5), gamma=(50.0, 50.0), damage=(1000.0, 100.0, 0.0),
                        w_attack=((0.2, 0.3, 0.5), (0.2, 0.3, 0.5))):
    q = np.array(q)
    quiet = [0.0, 0.0, 1.0]
    return InfluenceDiagram(
        decisions=["d1", "d2"], conducts=["attack", "no_attack"],
        impacts=["massive", "substantial", "negligible"], damage=damage,
        conduct_given_decision=np.column_stack([q, 1 - q]),
        impact_given_decision_conduct=[[w_attack[0], quiet], [w_attack[1], quiet]],
        gamma=gamma, eta=(40.0, 0.0))


def test_topology():
    assert set(NODES) == {"D", "C", "Theta", "Gamma", "H", "DP", "CP"}
    assert set(EDGES) == {("D", "C"), ("D", "Theta"), ("C", "Theta"), ("D", "Gamma"), ("C", "H"),
                          ("Gamma", "DP"), ("Theta", "DP"), ("Theta", "CP"), ("H", "CP")}


def test_uniform_draw_builds_valid_rows():
    draw = ExperimentDraw(theta=[10, 5, 1], gamma=[1, 2, 3], eta_attack=1,
                          q_attack=[0.5] * 3, w=np.full((3, 3), 1 / 3))
    diagram = build_diagram(draw)
    assert np.allclose(diagram.q.sum(axis=-1), 1, atol=1e-9)
    assert np.allclose(diagram.w.sum(axis=-1), 1, atol=1e-9)


def test_bad_w_row_is_named():
    draw = toy_draw(gamma=[1, 2], q_attack=[0.5, 0.5], w=[[0.2, 0.3, 0.5], [0.2, 0.3, 0.4]])
    with pytest.raises(ValidationError, match=r"w\[d2\]"):
        build_diagram(draw)


@pytest.mark.parametrize("field, value, pattern", [
    ("gamma", [-1.0], r"gamma\[d1\]"),
    ("q_attack", [1.5], r"q_attack\[d1\]"),
    ("w", [[0.5, 0.5]], r"w: expected shape"),
])
def test_invalid_draw_entries(field, value, pattern):
    with pytest.raises(ValidationError, match=pattern):
        build_diagram(toy_draw(**{field: value}))


def test_cpt_row_error_names_parent_configuration():
    with pytest.raises(ValidationError, match=r"P\(C\|D=1\)"):
        InfluenceDiagram(["a", "b"], ["x", "y"], ["t"], [1.0],
                         [[0.5, 0.5], [0.7, 0.7]], np.ones((2, 2, 1)), [0, 0], [0, 0])


def test_default_draw_row_count(default_spec):
    draw = draw_experiment(default_spec, RandomStream(0, 0))
    diagram = build_diagram(draw)
    n, m, k = diagram.shape
    assert (n, m, k) == (6, 2, 3)
    # 6 attack rows from the draw plus 6 forced no-attack rows
    assert diagram.w.reshape(-1, k).shape[0] == 12
    assert np.all(diagram.w[:, 1, draw.negligible_index] == 1.0)


def test_toy_expected_payoff():
    diagram = build_diagram(toy_draw(theta=[1000.0, 100.0, 0.0]))
    assert expected_payoff(diagram, 0) == pytest.approx(TOY_EXPECTED_PAYOFF, abs=1e-9)
    exact = exact_expected_payoffs(diagram.q, diagram.w, diagram.damage, diagram.gamma)
    assert float(exact[0]) == pytest.approx(TOY_EXPECTED_PAYOFF, abs=1e-9)


def test_single_branch_collapse():
    diagram = build_diagram(toy_draw(q_attack=[0.0], theta=[1000.0, 100.0, 7.0], gamma=[30.0]))
    assert expected_payoff(diagram, "d1") == -7.0 - 30.0


def test_zero_mode_quiet_branch_has_no_damage():
    diagram = build_diagram(toy_draw(q_attack=[0.0], theta=[1000.0, 100.0, 7.0],
                                     no_attack_damage_mode="zero"))
    assert expected_payoff(diagram, 0) == -50.0


def test_unknown_decision():
    with pytest.raises(UsageError):
        expected_payoff(build_diagram(toy_draw()), "d7")


def test_joint_hand_product():
    diagram = two_measure_diagram(w_attack=((0, 0, 1), (0, 0, 1)))
    a = {"D": 0, "C": 0, "Theta": 2, "Gamma": 50.0, "H": 40.0, "DP": -50.0, "CP": -40.0}
    assert joint_probability(diagram, a) == pytest.approx(0.5 * 0.5 * 1.0, abs=1e-15)


def test_joint_inconsistent_deterministic_node_is_zero():
    diagram = two_measure_diagram()
    a = {"D": 0, "C": 0, "Theta": 0, "Gamma": 50.0, "H": 40.0, "DP": -1000.0, "CP": 960.0}
    assert joint_probability(diagram, a) == 0.0
    a["DP"] = -1050.0
    assert joint_probability(diagram, a) > 0.0
    a["Gamma"] = 51.0
    assert joint_probability(diagram, a) == 0.0


def test_joint_incomplete_assignment():
    with pytest.raises(UsageError, match="missing"):
        joint_probability(two_measure_diagram(), {"D": 0, "C": 0})


def test_joint_normalizes():
    rng = np.random.default_rng(3)
    for _ in range(20):
        diagram = random_diagram(rng, n=int(rng.integers(1, 4)), m=2, k=int(rng.integers(1, 4)),
                                 integer_costs=True)
        total = math.fsum(joint_probability(diagram, a) for a in full_assignments(diagram))
        assert total == pytest.approx(1.0, abs=1e-9)


def test_point_mass_policy_reproduces_expected_payoff():
    rng = np.random.default_rng(4)
    for _ in range(50):
        diagram = random_diagram(rng)
        n = len(diagram.decisions)
        for d in range(n):
            policy = np.eye(n)[d]
            dist = marginal_payoff_distribution(diagram, policy)
            assert math.fsum(dist.probs) == pytest.approx(1.0, abs=1e-9)
            assert dist.mean() == pytest.approx(expected_payoff(diagram, d), rel=1e-12, abs=1e-9)


def test_degenerate_attack_collapses_support():
    diagram = two_measure_diagram(q=(1.0, 0.0), gamma=(10.0, 20.0))
    dist = marginal_payoff_distribution(diagram, [1.0, 0.0])
    assert set(dist.values) == {-1010.0, -110.0, -10.0}


def test_marginal_matches_enumeration():
    diagram = two_measure_diagram(q=(0.3, 0.8), gamma=(10.0, 25.0),
                                  w_attack=((0.1, 0.2, 0.7), (0.5, 0.25, 0.25)))
    dist = dict(zip(*marginal_payoff_distribution(diagram, [0.5, 0.5])))
    ref = {}
    for a in full_assignments(diagram):
        p = joint_probability(diagram, a, [0.5, 0.5])
        if p:
            ref[a["DP"]] = ref.get(a["DP"], 0.0) + p
    assert dist.keys() == ref.keys()
    for v in ref:
        assert dist[v] == pytest.approx(ref[v], abs=1e-12)


def test_non_simplex_policy():
    with pytest.raises(UsageError):
        marginal_payoff_distribution(two_measure_diagram(), [0.7, 0.7])


def test_strictly_better_measure_is_selected():
    # expected payoffs -165 and -200
    diagram = two_measure_diagram(gamma=(50.0, 85.0))
    choice = optimal_decision(diagram)
    assert (choice.label, choice.value) == ("d1", pytest.approx(-165.0))


def test_ties_go_to_cheaper_then_lower_index():
    draw = ExperimentDraw(theta=[10, 5, 1], gamma=[0, 0, 0], eta_attack=0,
                          q_attack=[0.5] * 3, w=np.full((3, 3), 1 / 3))
    assert optimal_decision(build_diagram(draw)).index == 0
    diagram = InfluenceDiagram(["a", "b", "c"], ["x"], ["t"], [10.0], np.ones((3, 1)),
                               np.ones((3, 1, 1)), [5.0, 5.0, 5.0], [0.0])
    assert rank_decisions(diagram) == [0, 1, 2]
    # equal payoffs under the printed sign can come from different costs
    diagram = InfluenceDiagram(["a", "b"], ["x"], ["t1", "t2"], [10.0, 0.0], np.ones((2, 1)),
                               [[[1.0, 0.0]], [[0.5, 0.5]]], [6.0, 1.0], [0.0],
                               cost_convention="cost_added")
    assert expected_payoff(diagram, 0) == expected_payoff(diagram, 1)
    assert optimal_decision(diagram).index == 1


def test_default_draw_matches_brute_force(default_spec):
    for index in range(50):
        draw = draw_experiment(default_spec, RandomStream(9, index))
        for convention, sign in (("net", -1), ("cost_added", 1)):
            diagram = build_diagram(draw, convention)
            exact = exact_expected_payoffs(diagram.q, diagram.w, diagram.damage, diagram.gamma, sign)
            choice = optimal_decision(diagram)
            assert choice.index == oracle_choice(exact, diagram.gamma)
            assert choice.value == pytest.approx(float(exact[choice.index]), abs=1e-9)


def test_intervention_equals_conditioning():
    rng = np.random.default_rng(5)
    for _ in range(100):
        diagram = random_diagram(rng)
        n = len(diagram.decisions)
        policy = rng.dirichlet(np.ones(n))
        for d in range(n):
            assert abs(expected_payoff(diagram, d) - conditional_expected_payoff(diagram, d, policy)) <= 1e-12 * max(1.0, abs(expected_payoff(diagram, d)))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32), delta=st.floats(1e-3, 1e3))
def test_cost_increase_shifts_only_that_measure(seed, delta):
    rng = np.random.default_rng(seed)
    diagram = random_diagram(rng, n=3)
    before = [expected_payoff(diagram, i) for i in range(3)]
    gamma = diagram.gamma.copy()
    gamma[1] += delta
    bumped = InfluenceDiagram(diagram.decisions, diagram.conducts, diagram.impacts, diagram.damage,
                              diagram.q, diagram.w, gamma, diagram.eta)
    after = [expected_payoff(bumped, i) for i in range(3)]
    assert after[0] == before[0] and after[2] == before[2]
    assert after[1] == pytest.approx(before[1] - delta, abs=1e-9 * max(1.0, abs(before[1])))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_interaction_is_zero_sum(seed):
    diagram = random_diagram(np.random.default_rng(seed))
    assert np.all(diagram.defender.interaction + diagram.attacker.interaction == 0.0)
    n, m, k = diagram.shape
    for d in range(n):
        for c in range(m):
            for h in range(k):
                dp = diagram.defender.value(d, c, h)
                cp = diagram.attacker.value(d, c, h)
                assert dp + cp == pytest.approx(-diagram.gamma[d] - diagram.eta[c], abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_cpt_rows_are_distributions(seed):
    diagram = random_diagram(np.random.default_rng(seed))
    assert np.all(np.abs(diagram.q.sum(axis=-1) - 1) <= 1e-9)
    assert np.all(np.abs(diagram.w.sum(axis=-1) - 1) <= 1e-9)
