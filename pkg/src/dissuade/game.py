"""Two-stage defender/attacker game: the adversary's conduct becomes a decision.

The defender commits to a measure ``d``; the attacker observes it and picks a
conduct ``c``. Payoffs are expectations over the impact distribution, with
every sampled quantity common knowledge:

    defender(d, attack)    = -E[damage | d, attack] - gamma_d
    defender(d, no_attack) = -no_attack_damage      - gamma_d
    attacker(d, attack)    =  E[damage | d, attack] - eta_attack
    attacker(d, no_attack) =  no_attack_damage      - 0

Only pure strategies are considered. An attacker strategy maps every measure
(on and off the equilibrium path) to a conduct.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .scenario import CONDUCTS, ExperimentDraw, defender_damage

__all__ = [
    "GameForm",
    "EquilibriumProfile",
    "game_form",
    "attacker_best_response",
    "solve_spe",
    "enumerate_pure_nash",
    "is_nash",
]


@dataclass(frozen=True)
class GameForm:
    """Expected payoffs of both players for every (measure, conduct) cell.

    ``gamma`` is only used to break defender ties (cheaper measure wins);
    ``passive_conduct`` is the conduct the attacker picks on ties.
    """

    defender_actions: tuple
    attacker_actions: tuple
    defender: np.ndarray
    attacker: np.ndarray
    gamma: np.ndarray
    passive_conduct: int = 1

    def __post_init__(self):
        n, m = len(self.defender_actions), len(self.attacker_actions)
        for name in ("defender", "attacker"):
            table = np.array(getattr(self, name), dtype=float)
            if table.shape != (n, m):
                raise ValidationError(f"{name} payoffs: expected shape {(n, m)}, got {table.shape}")
            if not np.all(np.isfinite(table)):
                raise ValidationError(f"{name} payoffs must be finite")
            table.setflags(write=False)
            object.__setattr__(self, name, table)
        gamma = np.array(self.gamma, dtype=float)
        if gamma.shape != (n,):
            raise ValidationError(f"gamma: expected {n} entries")
        object.__setattr__(self, "gamma", gamma)
        if not 0 <= self.passive_conduct < m:
            raise ValidationError("passive_conduct out of range")

    @property
    def shape(self) -> tuple:
        return self.defender.shape

    @classmethod
    def from_tables(cls, defender, attacker, gamma=None, passive_conduct=None,
                    defender_actions=None, attacker_actions=None) -> "GameForm":
        """Form from raw payoff tables, with generated labels."""
        defender = np.asarray(defender, dtype=float)
        n, m = defender.shape
        if attacker_actions is None:
            attacker_actions = CONDUCTS if m == 2 else tuple(f"c{j + 1}" for j in range(m))
        if passive_conduct is None:
            passive_conduct = 1 if m == 2 else 0
        return cls(
            defender_actions=tuple(defender_actions or (f"d{i + 1}" for i in range(n))),
            attacker_actions=tuple(attacker_actions),
            defender=defender, attacker=attacker,
            gamma=np.zeros(n) if gamma is None else gamma,
            passive_conduct=passive_conduct,
        )


@dataclass(frozen=True)
class EquilibriumProfile:
    defender_choice: int
    attacker_strategy: tuple
    defender_value: float
    attacker_value: float
    kind: str

    @property
    def outcome_conduct(self) -> int:
        """Conduct played on the equilibrium path."""
        return self.attacker_strategy[self.defender_choice]


def game_form(draw: ExperimentDraw) -> GameForm:
    """Game for one sampled world (conducts ``attack``, ``no_attack``)."""
    draw.validate()
    n = len(draw.measure_ids)
    quiet = draw.no_attack_damage
    defender = np.empty((n, 2))
    attacker = np.empty((n, 2))
    for i in range(n):
        hit = defender_damage(draw, i, 0)
        gamma = float(draw.gamma[i])
        defender[i, 0] = -hit - gamma
        defender[i, 1] = -quiet - gamma
        attacker[i, 0] = hit - draw.eta_attack
        attacker[i, 1] = quiet - 0.0
    return GameForm(draw.measure_ids, CONDUCTS, defender, attacker, draw.gamma, passive_conduct=1)


def attacker_best_response(form: GameForm, d: int) -> int:
    """Attacker's best conduct after measure ``d``; ties go to the passive conduct."""
    row = form.attacker[d]
    best = form.passive_conduct
    for j in range(row.size):
        if row[j] > row[best]:
            best = j
    return best


def _defender_order(form: GameForm, values: Sequence[float]) -> list:
    return sorted(range(len(values)), key=lambda i: (-values[i], form.gamma[i], i))


def solve_spe(form: GameForm) -> EquilibriumProfile:
    """Subgame perfect equilibrium by backward induction.

    The attacker's response is fixed in every subgame first; the defender then
    maximises against those responses (ties: lower cost, then lower index).
    """
    n = form.shape[0]
    strategy = tuple(attacker_best_response(form, d) for d in range(n))
    values = [float(form.defender[d, strategy[d]]) for d in range(n)]
    choice = _defender_order(form, values)[0]
    return EquilibriumProfile(
        defender_choice=choice,
        attacker_strategy=strategy,
        defender_value=values[choice],
        attacker_value=float(form.attacker[choice, strategy[choice]]),
        kind="SPE",
    )


def is_nash(form: GameForm, choice: int, strategy: Sequence[int]) -> bool:
    """No unilateral deviation is profitable for either player.

    The defender compares against every other measure (with the attacker's
    strategy held fixed); the attacker only affects its payoff on the path.
    """
    n, m = form.shape
    on_path = form.defender[choice, strategy[choice]]
    for d in range(n):
        if form.defender[d, strategy[d]] > on_path:
            return False
    reply = form.attacker[choice, strategy[choice]]
    return all(form.attacker[choice, c] <= reply for c in range(m))


def enumerate_pure_nash(form: GameForm) -> list:
    """Every pure profile (measure, full attacker strategy) that is a Nash equilibrium.

    Exhaustive over ``n * m**n`` profiles; meant for the small games built
    here. Profiles are returned in lexicographic order of
    ``(defender_choice, attacker_strategy)``.
    """
    n, m = form.shape
    out = []
    for strategy in itertools.product(range(m), repeat=n):
        for choice in range(n):
            if is_nash(form, choice, strategy):
                out.append(EquilibriumProfile(
                    defender_choice=choice,
                    attacker_strategy=tuple(strategy),
                    defender_value=float(form.defender[choice, strategy[choice]]),
                    attacker_value=float(form.attacker[choice, strategy[choice]]),
                    kind="NE",
                ))
    out.sort(key=lambda p: (p.defender_choice, p.attacker_strategy))
    return out

