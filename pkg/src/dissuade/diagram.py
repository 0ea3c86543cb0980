"""Causal influence diagram for one sampled defender/attacker world.

Topology (fixed; sizes n measures, m conducts, k impact states)::

    D --> C --> Theta --> DP <-- Gamma <-- D
    D ---------> Theta --> CP <-- H <-- C

``D`` is the defender's decision, ``C`` the adversary's conduct (a chance
node here; the game module promotes it to a decision), ``Theta`` the impact
category, ``Gamma``/``H`` the direct costs and ``DP``/``CP`` the total
payoffs. Everything below ``Theta`` is deterministic once a world is drawn.

Impacts are stored as damages (positive US$ millions). The defender's
interaction payoff for impact ``h`` is ``-damage[h]``, the attacker's is
``+damage[h]``, so the interaction is zero-sum. Direct costs enter the
defender total according to ``cost_convention``:

    net         DP = -damage - gamma   (default)
    cost_added  DP = -damage + gamma   (cost enters the selection objective with a plus sign)

The attacker total is always ``CP = damage - eta``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import UsageError, ValidationError

__all__ = [
    "EDGES",
    "COST_CONVENTIONS",
    "CPT",
    "PayoffTable",
    "InfluenceDiagram",
    "PayoffDistribution",
    "Choice",
    "build_diagram",
    "joint_probability",
    "full_assignments",
    "marginal_payoff_distribution",
    "expected_payoff",
    "conditional_expected_payoff",
    "optimal_decision",
    "rank_decisions",
]

EDGES = (
    ("D", "C"), ("D", "Theta"), ("C", "Theta"), ("D", "Gamma"), ("C", "H"),
    ("Gamma", "DP"), ("Theta", "DP"), ("Theta", "CP"), ("H", "CP"),
)
NODES = ("D", "C", "Theta", "Gamma", "H", "DP", "CP")
COST_CONVENTIONS = ("net", "cost_added")
ROW_TOL = 1e-9


@dataclass(frozen=True)
class CPT:
    """Conditional probability table ``P(child | parents)``.

    ``rows`` has shape ``parent_sizes + (child_size,)``; every slice along
    the last axis is a probability vector.
    """

    child: str
    parents: tuple
    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if rows.ndim != len(self.parents) + 1:
            raise ValidationError(
                f"P({self.child}|{','.join(self.parents)}): expected "
                f"{len(self.parents) + 1}-d table, got shape {rows.shape}")
        for idx in np.ndindex(*rows.shape[:-1]):
            row = rows[idx]
            where = f"P({self.child}|{_fmt_idx(self.parents, idx)})"
            if not np.all(np.isfinite(row)) or row.min() < 0.0 or row.max() > 1.0:
                raise ValidationError(f"{where}: entries must lie in [0, 1], got {row.tolist()}")
            total = math.fsum(row)
            if abs(total - 1.0) > ROW_TOL:
                raise ValidationError(f"{where}: row sums to {total!r}, not 1")

    def __getitem__(self, idx):
        return self.rows[idx]


def _fmt_idx(parents, idx):
    return ",".join(f"{p}={i}" for p, i in zip(parents, idx))


@dataclass(frozen=True)
class PayoffTable:
    """Total payoff of one agent for every ``(d, c, theta)`` cell.

    ``interaction`` is the zero-sum component; ``values`` adds the agent's
    direct cost.
    """

    agent: str
    interaction: np.ndarray
    values: np.ndarray

    def value(self, d: int, c: int, h: int) -> float:
        return float(self.values[d, c, h])


class InfluenceDiagram:
    """Immutable diagram over ``n`` measures, ``m`` conducts and ``k`` impact states."""

    def __init__(self, decisions: Sequence[str], conducts: Sequence[str],
                 impacts: Sequence[str], damage, conduct_given_decision,
                 impact_given_decision_conduct, gamma, eta,
                 cost_convention: str = "net"):
        self.decisions = tuple(decisions)
        self.conducts = tuple(conducts)
        self.impacts = tuple(impacts)
        n, m, k = len(self.decisions), len(self.conducts), len(self.impacts)
        if n < 1 or m < 1 or k < 1:
            raise ValidationError("diagram needs at least one decision, conduct and impact state")
        if cost_convention not in COST_CONVENTIONS:
            raise ValidationError(f"cost_convention must be one of {COST_CONVENTIONS}")
        self.cost_convention = cost_convention

        self.damage = _vector("damage", damage, k, self.impacts, finite_only=True)
        self.gamma = _vector("gamma", gamma, n, self.decisions)
        self.eta = _vector("eta", eta, m, self.conducts)

        q = np.asarray(conduct_given_decision, dtype=float)
        if q.shape != (n, m):
            raise ValidationError(f"P(C|D): expected shape {(n, m)}, got {q.shape}")
        w = np.asarray(impact_given_decision_conduct, dtype=float)
        if w.shape != (n, m, k):
            raise ValidationError(f"P(Theta|D,C): expected shape {(n, m, k)}, got {w.shape}")
        self.cpt_c = CPT("C", ("D",), q)
        self.cpt_theta = CPT("Theta", ("D", "C"), w)

        sign = -1.0 if cost_convention == "net" else 1.0
        inter = np.broadcast_to(-self.damage, (n, m, k))
        self.defender = PayoffTable(
            "defender", _frozen(inter), _frozen(inter + sign * self.gamma[:, None, None]))
        self.attacker = PayoffTable(
            "attacker", _frozen(-inter), _frozen(-inter - self.eta[None, :, None]))

    @property
    def shape(self) -> tuple:
        return len(self.decisions), len(self.conducts), len(self.impacts)

    @property
    def q(self) -> np.ndarray:
        return self.cpt_c.rows

    @property
    def w(self) -> np.ndarray:
        return self.cpt_theta.rows

    @property
    def cost_sign(self) -> float:
        return -1.0 if self.cost_convention == "net" else 1.0

    def decision_index(self, d) -> int:
        if isinstance(d, (int, np.integer)) and not isinstance(d, bool):
            if 0 <= d < len(self.decisions):
                return int(d)
        elif d in self.decisions:
            return self.decisions.index(d)
        raise UsageError(f"unknown decision {d!r}; expected one of {self.decisions}")

    def defender_total(self, gamma: float, damage: float) -> float:
        """Deterministic DP node: payoff from one cost and one impact damage."""
        return -damage + self.cost_sign * gamma

    def attacker_total(self, damage: float, eta: float) -> float:
        """Deterministic CP node."""
        return damage - eta

    def state_spaces(self) -> dict:
        """State space of every node. Index-valued for D, C, Theta; value-valued otherwise."""
        gammas = sorted(set(self.gamma.tolist()))
        etas = sorted(set(self.eta.tolist()))
        dmg = self.damage.tolist()
        return {
            "D": list(range(len(self.decisions))),
            "C": list(range(len(self.conducts))),
            "Theta": list(range(len(self.impacts))),
            "Gamma": gammas,
            "H": etas,
            "DP": sorted({self.defender_total(g, t) for g in gammas for t in dmg}),
            "CP": sorted({self.attacker_total(t, e) for t in dmg for e in etas}),
        }

    def __repr__(self):
        n, m, k = self.shape
        return f"InfluenceDiagram(n={n}, m={m}, k={k}, cost_convention={self.cost_convention!r})"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _vector(name, values, size, labels, finite_only=False):
    v = np.array(values, dtype=float).reshape(-1)
    if v.shape != (size,):
        raise ValidationError(f"{name}: expected {size} entries, got {v.size}")
    for label, x in zip(labels, v):
        if not math.isfinite(x):
            raise ValidationError(f"{name}[{label}]: must be finite, got {x}")
        if not finite_only and x < 0:
            raise ValidationError(f"{name}[{label}]: cost must be >= 0, got {x}")
    v.setflags(write=False)
    return v


def build_diagram(draw, cost_convention: str = "net") -> InfluenceDiagram:
    """Diagram for one :class:`~dissuade.scenario.ExperimentDraw`.

    Conducts are ``(attack, no_attack)``. Given no attack the impact is the
    negligible category with probability 1, or a zero-damage ``none`` state
    when the draw uses ``no_attack_damage_mode = "zero"``.
    """
    draw.validate()
    theta = np.asarray(draw.theta, dtype=float)
    n, k = len(draw.measure_ids), theta.size
    impacts = list(draw.impact_names)
    damage = theta.tolist()
    w_attack = np.asarray(draw.w, dtype=float)
    if draw.no_attack_damage_mode == "zero":
        impacts.append("none")
        damage.append(0.0)
        w_attack = np.hstack([w_attack, np.zeros((n, 1))])
        quiet = np.zeros(k + 1)
        quiet[k] = 1.0
    else:
        quiet = np.zeros(k)
        quiet[draw.negligible_index] = 1.0
    q = np.asarray(draw.q_attack, dtype=float)
    return InfluenceDiagram(
        decisions=draw.measure_ids,
        conducts=("attack", "no_attack"),
        impacts=impacts,
        damage=damage,
        conduct_given_decision=np.column_stack([q, 1.0 - q]),
        impact_given_decision_conduct=np.stack(
            [w_attack, np.broadcast_to(quiet, w_attack.shape)], axis=1),
        gamma=draw.gamma,
        eta=(draw.eta_attack, 0.0),
        cost_convention=cost_convention,
    )


def _policy(diagram: InfluenceDiagram, decision_policy) -> np.ndarray:
    n = len(diagram.decisions)
    if decision_policy is None:
        return np.full(n, 1.0 / n)
    p = np.asarray(decision_policy, dtype=float)
    if p.shape != (n,) or not np.all(np.isfinite(p)) or p.min() < 0 or abs(math.fsum(p) - 1) > ROW_TOL:
        raise UsageError(f"decision policy must be a probability vector of length {n}")
    return p


def joint_probability(diagram: InfluenceDiagram, assignment: Mapping,
                      decision_policy=None) -> float:
    """``P(d, c, theta, gamma, eta, dp, cp)`` as the product of node factors.

    ``assignment`` maps every node in :data:`NODES` to a state: indices for
    ``D``, ``C``, ``Theta``; values for ``Gamma``, ``H``, ``DP``, ``CP``.
    Deterministic nodes contribute 0/1 indicator factors. ``P(d)`` comes from
    ``decision_policy`` (uniform if omitted).
    """
    missing = [node for node in NODES if node not in assignment]
    if missing:
        raise UsageError(f"assignment is missing node(s) {missing}")
    n, m, k = diagram.shape
    d, c, h = assignment["D"], assignment["C"], assignment["Theta"]
    for node, idx, size in (("D", d, n), ("C", c, m), ("Theta", h, k)):
        if not (isinstance(idx, (int, np.integer)) and 0 <= idx < size):
            raise UsageError(f"{node}={idx!r} out of range 0..{size - 1}")
    gamma, eta = assignment["Gamma"], assignment["H"]
    p_d = _policy(diagram, decision_policy)[d]
    p = p_d * diagram.q[d, c] * diagram.w[d, c, h]
    p *= float(gamma == diagram.gamma[d])
    p *= float(eta == diagram.eta[c])
    p *= float(assignment["DP"] == diagram.defender_total(gamma, diagram.damage[h]))
    p *= float(assignment["CP"] == diagram.attacker_total(diagram.damage[h], eta))
    return float(p)


def full_assignments(diagram: InfluenceDiagram):
    """Every full assignment over the node state spaces (the Cartesian product)."""
    spaces = diagram.state_spaces()
    for combo in itertools.product(*(spaces[node] for node in NODES)):
        yield dict(zip(NODES, combo))


class PayoffDistribution(NamedTuple):
    """Finite distribution over defender totals, sorted by value."""

    values: tuple
    probs: tuple

    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))


def marginal_payoff_distribution(diagram: InfluenceDiagram, decision_policy) -> PayoffDistribution:
    """``P(dp)`` under a policy over ``D``, marginalising every other node."""
    p_d = _policy(diagram, decision_policy)
    n, m, k = diagram.shape
    mass: dict = {}
    for d in range(n):
        if p_d[d] == 0:
            continue
        for c in range(m):
            for h in range(k):
                p = p_d[d] * diagram.q[d, c] * diagram.w[d, c, h]
                if p == 0:
                    continue
                dp = diagram.defender_total(diagram.gamma[d], diagram.damage[h])
                mass[dp] = mass.get(dp, 0.0) + p
    values = tuple(sorted(mass))
    return PayoffDistribution(values, tuple(mass[v] for v in values))


def expected_payoff(diagram: InfluenceDiagram, d) -> float:
    """``E[dp | do(D=d)]`` with a fixed summation order.

    Sum over conducts of ``q * (sum over impacts of w * -damage)``, then the
    direct cost. The order never changes, so equal inputs give bit-equal
    outputs on any IEEE-754 machine.
    """
    i = diagram.decision_index(d)
    q, w, damage = diagram.q, diagram.w, diagram.damage
    m, k = q.shape[1], damage.size
    total = 0.0
    for j in range(m):
        inner = 0.0
        for h in range(k):
            inner += float(w[i, j, h]) * -float(damage[h])
        total += float(q[i, j]) * inner
    return total + diagram.cost_sign * float(diagram.gamma[i])


def conditional_expected_payoff(diagram: InfluenceDiagram, d, decision_policy=None) -> float:
    """``E[dp | D=d]`` by observational conditioning on the joint.

    Sums ``dp * P(d, c, theta, gamma, dp)`` over the consistent assignments and
    divides by ``P(d)``; used to check that intervening on the root decision
    equals conditioning on it.
    """
    i = diagram.decision_index(d)
    p_d = float(_policy(diagram, decision_policy)[i])
    if p_d == 0:
        raise UsageError(f"cannot condition on D={diagram.decisions[i]!r} with P(d) = 0")
    m, k = diagram.q.shape[1], diagram.damage.size
    num = 0.0
    for j in range(m):
        for h in range(k):
            dp = diagram.defender_total(float(diagram.gamma[i]), float(diagram.damage[h]))
            num += dp * (p_d * float(diagram.q[i, j]) * float(diagram.w[i, j, h]))
    return num / p_d


class Choice(NamedTuple):
    index: int
    label: str
    value: float


def rank_decisions(diagram: InfluenceDiagram, values=None) -> list:
    """Decision indices from best to worst.

    Ties on expected payoff go to the lower cost, then the lower index.
    """
    if values is None:
        values = [expected_payoff(diagram, i) for i in range(len(diagram.decisions))]
    return sorted(range(len(values)), key=lambda i: (-values[i], diagram.gamma[i], i))


def optimal_decision(diagram: InfluenceDiagram) -> Choice:
    """Best measure by exhaustive enumeration of the one-hot selection program."""
    values = [expected_payoff(diagram, i) for i in range(len(diagram.decisions))]
    best = rank_decisions(diagram, values)[0]
    return Choice(best, diagram.decisions[best], values[best])
