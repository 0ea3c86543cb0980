import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dissuade.game import (GameForm, attacker_best_response, enumerate_pure_nash, game_form,
                           is_nash, solve_spe)
from dissuade.samplers import RandomStream
from dissuade.scenario import ExperimentDraw, draw_experiment

from oracles import (TOY_ATTACKER_ATTACK, TOY_ATTACKER_QUIET, TOY_DEFENDER_ATTACK,
                     TOY_DEFENDER_QUIET, spe_violations)

ATTACK, QUIET = 0, 1


def toy_form():
    draw = ExperimentDraw(theta=[1000.0, 100.0, 0.0], gamma=[50.0], eta_attack=40.0,
                          q_attack=[0.5], w=[[0.2, 0.3, 0.5]])
    return game_form(draw)


def random_form(rng, n=None, m=2, ties=False):
    n = n or int(rng.integers(1, 6))
    if ties:
        defender = rng.integers(-3, 3, size=(n, m)).astype(float)
        attacker = rng.integers(-3, 3, size=(n, m)).astype(float)
        gamma = rng.integers(0, 3, size=n).astype(float)
    else:
        defender, attacker = rng.normal(size=(n, m)), rng.normal(size=(n, m))
        gamma = rng.uniform(0, 1, size=n)
    return GameForm.from_tables(defender, attacker, gamma)


def test_toy_payoffs():
    form = toy_form()
    assert form.defender[0, ATTACK] == pytest.approx(TOY_DEFENDER_ATTACK)
    assert form.attacker[0, ATTACK] == pytest.approx(TOY_ATTACKER_ATTACK)
    assert form.defender[0, QUIET] == pytest.approx(TOY_DEFENDER_QUIET)
    assert form.attacker[0, QUIET] == pytest.approx(TOY_ATTACKER_QUIET)
    assert attacker_best_response(form, 0) == ATTACK


def test_null_world_is_all_zero():
    draw = ExperimentDraw(theta=[0.0, 0.0], gamma=[0.0, 0.0], eta_attack=0.0,
                          q_attack=[0.3, 0.6], w=[[0.5, 0.5], [1.0, 0.0]])
    form = game_form(draw)
    assert not form.defender.any() and not form.attacker.any()


def test_cell_sums_are_minus_costs(default_spec):
    for index in range(20):
        draw = draw_experiment(default_spec, RandomStream(2, index))
        form = game_form(draw)
        eta = np.array([draw.eta_attack, 0.0])
        total = form.defender + form.attacker
        assert np.allclose(total, -draw.gamma[:, None] - eta[None, :], atol=1e-9)


def test_attacker_ties_and_dominance():
    form = GameForm.from_tables([[0, 0], [0, 0]], [[5, 5], [-10, 0]])
    assert attacker_best_response(form, 0) == QUIET
    assert attacker_best_response(form, 1) == QUIET


def test_deterring_measure_beats_failed_deterrence():
    # d1 deters at cost 10, d2 does not and costs the defender 280
    form = GameForm.from_tables(defender=[[-300, -10], [-280, -50]],
                                attacker=[[-5, 0], [190, 0]], gamma=[10, 50])
    spe = solve_spe(form)
    assert spe.defender_choice == 0 and spe.outcome_conduct == QUIET
    assert spe.attacker_strategy == (QUIET, ATTACK)


def test_cheapest_deterring_measure_wins():
    draw = ExperimentDraw(theta=[1000.0, 100.0, 0.0], gamma=[150.0, 400.0, 0.0], eta_attack=2000.0,
                          q_attack=[0.5, 0.5, 0.5], w=[[0.2, 0.3, 0.5], [0.0, 0.1, 0.9], [0.6, 0.3, 0.1]])
    spe = solve_spe(game_form(draw))
    assert spe.attacker_strategy == (QUIET, QUIET, QUIET)
    assert spe.defender_choice == 2


def test_attack_regardless_picks_best_mitigator_net_of_cost():
    draw = ExperimentDraw(theta=[1000.0, 100.0, 0.0], gamma=[150.0, 400.0, 0.0], eta_attack=0.0,
                          q_attack=[0.5, 0.5, 0.5], w=[[0.2, 0.3, 0.5], [0.0, 0.1, 0.9], [0.6, 0.3, 0.1]])
    form = game_form(draw)
    spe = solve_spe(form)
    assert spe.attacker_strategy == (ATTACK, ATTACK, ATTACK)
    net = [-230 - 150, -10 - 400, -630 - 0]
    assert spe.defender_choice == int(np.argmax(net))


def test_non_credible_threat_is_nash_but_not_subgame_perfect():
    # Off the path, attacking after d2 is strictly worse for the attacker, yet the
    # threat keeps the defender on the costly d1.
    form = GameForm.from_tables(defender=[[-100, -20], [-500, -5]],
                                attacker=[[-5, 0], [-10, 0]], gamma=[20, 5])
    threat = (QUIET, ATTACK)
    assert is_nash(form, 0, threat)
    spe = solve_spe(form)
    assert (spe.defender_choice, spe.attacker_strategy) == (1, (QUIET, QUIET))
    profiles = {(p.defender_choice, p.attacker_strategy) for p in enumerate_pure_nash(form)}
    assert (0, threat) in profiles
    assert (spe.defender_choice, spe.attacker_strategy) in profiles
    assert spe_violations(form, type(spe)(0, threat, -20.0, 0.0, "NE"))


def test_dominant_actions_give_one_equilibrium():
    form = GameForm.from_tables(defender=[[0, -1]], attacker=[[3, 0]])
    equilibria = enumerate_pure_nash(form)
    assert [(p.defender_choice, p.attacker_strategy) for p in equilibria] == [(0, (ATTACK,))]


def test_dominance_in_every_subgame_fixes_the_outcome():
    # With several measures the off-path replies are free in a Nash profile,
    # so uniqueness holds for the outcome and for the subgame perfect profile.
    form = GameForm.from_tables(defender=[[0, 0], [-5, -5]], attacker=[[3, 0], [3, 0]])
    equilibria = enumerate_pure_nash(form)
    assert {(p.defender_choice, p.outcome_conduct) for p in equilibria} == {(0, ATTACK)}
    perfect = [p for p in equilibria if not spe_violations(form, p)]
    assert [(p.defender_choice, p.attacker_strategy) for p in perfect] == [(0, (ATTACK, ATTACK))]


def test_spe_is_nash_on_random_forms():
    rng = np.random.default_rng(11)
    for i in range(1000):
        form = random_form(rng, ties=i % 2 == 0)
        spe = solve_spe(form)
        assert not spe_violations(form, spe)
        profiles = {(p.defender_choice, p.attacker_strategy) for p in enumerate_pure_nash(form)}
        assert (spe.defender_choice, spe.attacker_strategy) in profiles


def test_defender_tie_break():
    form = GameForm.from_tables(defender=[[-1, -1], [-1, -1], [-1, -1]],
                                attacker=[[0, 0]] * 3, gamma=[3, 1, 1])
    assert solve_spe(form).defender_choice == 1


def test_shape_validation():
    with pytest.raises(ValueError):
        GameForm.from_tables([[0, 0]], [[0, 0, 0]])
    with pytest.raises(ValueError):
        GameForm.from_tables([[0, np.inf]], [[0, 0]])


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32), shift_d=st.integers(-1000, 1000), shift_a=st.integers(-1000, 1000))
def test_constant_shift_keeps_choices(seed, shift_d, shift_a):
    rng = np.random.default_rng(seed)
    form = random_form(rng, ties=bool(seed % 2))
    shifted = GameForm.from_tables(form.defender + shift_d, form.attacker + shift_a, form.gamma)
    a, b = solve_spe(form), solve_spe(shifted)
    assert (a.defender_choice, a.attacker_strategy) == (b.defender_choice, b.attacker_strategy)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_every_response_is_subgame_best(seed):
    form = random_form(np.random.default_rng(seed), m=int(seed % 3) + 2)
    spe = solve_spe(form)
    for d, c in enumerate(spe.attacker_strategy):
        assert form.attacker[d, c] == form.attacker[d].max()
