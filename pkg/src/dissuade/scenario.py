"""Scenario files: measure catalogue, priors and per-experiment draws.

A scenario is a YAML document (the repository ships
``scenarios/appendix_b.cfg``). Schema, version 1::

    schema_version: 1
    no_attack_damage_mode: negligible_draw   # or: zero
    cost_convention: net                     # or: cost_added
    negligible_impact: negligible            # name of the no-attack impact
    impact_priors:                           # one entry per impact category
      - {name: massive, kind: truncated_normal, mu: 1000, sigma: 300, lower: 0}
      - {name: negligible, kind: half_normal, sigma: 5}
    attacker_cost_prior: {kind: truncated_normal, mu: 50, sigma: 20, lower: 0}
    measures:
      - id: d1
        name: Active intelligence sharing
        cost_prior: {kind: truncated_normal, mu: 150, sigma: 50, lower: 0}
        deterrence_prior: {kind: beta, alpha: 5, beta: 5}
        deterrence_semantics: attack_prob    # or: dissuade_prob
        mitigation_prior: {kind: dirichlet, alpha: [4, 8, 12]}
      - id: d6
        name: No deterrence measure
        no_op: true                          # cost is 0; cost_prior omitted
        deterrence_prior: ...

Prior kinds are ``truncated_normal`` (``mu``, ``sigma``, optional ``lower``
and ``upper``, unbounded when omitted), ``half_normal`` (``sigma``),
``beta`` (``alpha``, ``beta``) and ``dirichlet`` (``alpha`` list). Unknown
keys are rejected everywhere.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import samplers
from .errors import ConfigError, ValidationError
from .samplers import DistributionSpec, Kind, RandomStream

__all__ = [
    "SCHEMA_VERSION",
    "CONDUCTS",
    "MeasureSpec",
    "ScenarioSpec",
    "ExperimentDraw",
    "load_scenario",
    "load_scenario_file",
    "default_scenario_path",
    "parse_prior",
    "draw_experiment",
    "defender_damage",
]

SCHEMA_VERSION = 1
CONDUCTS = ("attack", "no_attack")
SEMANTICS = ("attack_prob", "dissuade_prob")
NO_ATTACK_MODES = ("negligible_draw", "zero")
COST_CONVENTIONS = ("net", "cost_added")

_TOP_KEYS = {
    "schema_version", "measures", "impact_priors", "attacker_cost_prior",
    "no_attack_damage_mode", "cost_convention", "negligible_impact",
}
_REQUIRED_TOP = {"schema_version", "measures", "impact_priors", "attacker_cost_prior"}
_MEASURE_KEYS = {
    "id", "name", "cost_prior", "deterrence_prior", "deterrence_semantics",
    "mitigation_prior", "no_op",
}
_PRIOR_KEYS = {
    "truncated_normal": {"mu", "sigma", "lower", "upper"},
    "half_normal": {"sigma"},
    "beta": {"alpha", "beta"},
    "dirichlet": {"alpha"},
}


@dataclass(frozen=True)
class MeasureSpec:
    id: str
    name: str
    cost_prior: DistributionSpec | None
    deterrence_prior: DistributionSpec
    deterrence_semantics: str
    mitigation_prior: DistributionSpec
    no_op: bool = False


@dataclass(frozen=True)
class ScenarioSpec:
    measures: tuple
    impact_names: tuple
    impact_priors: tuple
    attacker_cost_prior: DistributionSpec
    negligible_index: int
    no_attack_damage_mode: str = "negligible_draw"
    cost_convention: str = "net"
    schema_version: int = SCHEMA_VERSION
    config_hash: str = ""
    conducts: tuple = CONDUCTS

    @property
    def measure_ids(self) -> tuple:
        return tuple(m.id for m in self.measures)

    def measure_index(self, measure) -> int:
        if isinstance(measure, (int, np.integer)) and 0 <= measure < len(self.measures):
            return int(measure)
        ids = self.measure_ids
        if measure in ids:
            return ids.index(measure)
        raise ConfigError(f"unknown measure {measure!r}; expected one of {list(ids)}")

    def replace(self, **changes) -> "ScenarioSpec":
        out = dataclasses.replace(self, **changes)
        _check_scenario(out)
        return out

    def defaults_in_force(self) -> dict:
        """Settings not fixed by the scenario priors, for report headers."""
        return {
            "attacker_cost_prior": self.attacker_cost_prior.describe(),
            "attacker_no_attack_cost": 0.0,
            "no_attack_damage_mode": self.no_attack_damage_mode,
            "cost_convention": self.cost_convention,
            "decision_tie_break": "higher expected payoff, then lower cost, then lower index",
            "attacker_tie_break": "no_attack",
            "deterrence_semantics": {m.id: m.deterrence_semantics for m in self.measures},
        }


# --------------------------------------------------------------------------
# parsing


def _compose(text: str):
    """Parse YAML into plain objects plus a map from field path to source line."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"parse error: {exc.problem or exc}", line=line) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    lines: dict = {}
    constructor = yaml.SafeLoader("")

    def walk(node, path):
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for key_node, value_node in node.value:
                key = constructor.construct_object(key_node)
                if key in out:
                    raise ConfigError(f"duplicate key {key!r}", _join(path, key),
                                      key_node.start_mark.line + 1)
                out[key] = walk(value_node, _join(path, key))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [walk(v, f"{path}[{i}]") for i, v in enumerate(node.value)]
        return constructor.construct_object(node)

    if root is None:
        raise ConfigError("empty scenario document")
    return walk(root, ""), lines


def _join(path, key):
    return f"{path}.{key}" if path else str(key)


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def error(self, message, path):
        line = None
        probe = path
        while probe and line is None:
            line = self.lines.get(probe)
            probe = probe.rsplit(".", 1)[0] if "." in probe else ""
        return ConfigError(message, path, line)

    def mapping(self, obj, path, allowed, required=()):
        if not isinstance(obj, dict):
            raise self.error("expected a mapping", path)
        unknown = sorted(set(obj) - set(allowed), key=str)
        if unknown:
            raise self.error(f"unknown field(s) {unknown}", _join(path, unknown[0]))
        for key in sorted(required):
            if key not in obj:
                raise self.error(f"missing required field {key!r}", _join(path, key))
        return obj

    def number(self, obj, path):
        if isinstance(obj, bool) or not isinstance(obj, (int, float)):
            if isinstance(obj, str) and obj.strip().lower() in ("inf", "+inf", ".inf", "-inf", "-.inf"):
                return float(obj.replace(".", ""))
            raise self.error(f"expected a number, got {obj!r}", path)
        return float(obj)

    def choice(self, obj, path, options):
        if obj not in options:
            raise self.error(f"must be one of {list(options)}, got {obj!r}", path)
        return obj


def parse_prior(obj, path: str = "prior", ctx: _Ctx | None = None) -> DistributionSpec:
    """Build a :class:`DistributionSpec` from its mapping form."""
    ctx = ctx or _Ctx({})
    if not isinstance(obj, dict):
        raise ctx.error("expected a prior mapping with a 'kind' field", path)
    kind = ctx.choice(obj.get("kind"), _join(path, "kind"), tuple(_PRIOR_KEYS))
    allowed = _PRIOR_KEYS[kind] | {"kind"}
    ctx.mapping(obj, path, allowed)
    params = {}
    for key in sorted(_PRIOR_KEYS[kind]):
        if key not in obj:
            if kind == "truncated_normal" and key in ("lower", "upper"):
                params[key] = -math.inf if key == "lower" else math.inf
                continue
            raise ctx.error(f"missing required field {key!r}", _join(path, key))
        if kind == "dirichlet":
            values = obj[key]
            if not isinstance(values, list):
                raise ctx.error("expected a list of concentrations", _join(path, key))
            params[key] = tuple(ctx.number(v, f"{_join(path, key)}[{i}]")
                                for i, v in enumerate(values))
        else:
            params[key] = ctx.number(obj[key], _join(path, key))
    try:
        return DistributionSpec(Kind(kind), params)
    except ConfigError as exc:
        raise ctx.error(exc.message, _join(path, exc.path) if exc.path else path) from None


def _nonnegative_support(spec: DistributionSpec) -> bool:
    if spec.kind is Kind.HALF_NORMAL:
        return True
    return spec.kind is Kind.TRUNCATED_NORMAL and spec["lower"] >= 0


def load_scenario(config_text: str) -> ScenarioSpec:
    """Parse and validate a scenario document."""
    data, lines = _compose(config_text)
    ctx = _Ctx(lines)
    ctx.mapping(data, "", _TOP_KEYS, _REQUIRED_TOP)

    version = data["schema_version"]
    if version != SCHEMA_VERSION:
        raise ctx.error(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}",
                        "schema_version")
    mode = ctx.choice(data.get("no_attack_damage_mode", "negligible_draw"),
                      "no_attack_damage_mode", NO_ATTACK_MODES)
    convention = ctx.choice(data.get("cost_convention", "net"), "cost_convention",
                            COST_CONVENTIONS)

    impacts = data["impact_priors"]
    if not isinstance(impacts, list) or not impacts:
        raise ctx.error("expected a non-empty list", "impact_priors")
    names, priors = [], []
    for i, entry in enumerate(impacts):
        path = f"impact_priors[{i}]"
        if not isinstance(entry, dict) or "name" not in entry:
            raise ctx.error("missing required field 'name'", _join(path, "name"))
        name = str(entry["name"])
        if name in names:
            raise ctx.error(f"duplicate impact name {name!r}", _join(path, "name"))
        prior = parse_prior({k: v for k, v in entry.items() if k != "name"}, path, ctx)
        if prior.kind is Kind.DIRICHLET or prior.kind is Kind.BETA or not _nonnegative_support(prior):
            raise ctx.error("damage priors must be half_normal or truncated_normal with lower >= 0",
                            path)
        names.append(name)
        priors.append(prior)

    neg_name = data.get("negligible_impact", names[-1])
    if neg_name not in names:
        raise ctx.error(f"unknown impact {neg_name!r}; expected one of {names}", "negligible_impact")

    eta = parse_prior(data["attacker_cost_prior"], "attacker_cost_prior", ctx)
    if not _nonnegative_support(eta):
        raise ctx.error("cost priors must be half_normal or truncated_normal with lower >= 0",
                        "attacker_cost_prior")

    measures_raw = data["measures"]
    if not isinstance(measures_raw, list) or not measures_raw:
        raise ctx.error("expected a non-empty list", "measures")
    measures = []
    for i, entry in enumerate(measures_raw):
        path = f"measures[{i}]"
        ctx.mapping(entry, path, _MEASURE_KEYS,
                    {"id", "deterrence_prior", "deterrence_semantics", "mitigation_prior"})
        no_op = entry.get("no_op", False)
        if not isinstance(no_op, bool):
            raise ctx.error("expected true or false", _join(path, "no_op"))
        cost = entry.get("cost_prior")
        if cost is None:
            if not no_op:
                raise ctx.error("missing required field 'cost_prior'", _join(path, "cost_prior"))
        else:
            cost = parse_prior(cost, _join(path, "cost_prior"), ctx)
            if not _nonnegative_support(cost):
                raise ctx.error("cost priors must be half_normal or truncated_normal with lower >= 0",
                                _join(path, "cost_prior"))
            if no_op:
                raise ctx.error("a no_op measure has no cost; drop cost_prior",
                                _join(path, "cost_prior"))
        deter = parse_prior(entry["deterrence_prior"], _join(path, "deterrence_prior"), ctx)
        if deter.kind is not Kind.BETA:
            raise ctx.error("deterrence prior must be a beta", _join(path, "deterrence_prior"))
        mitig = parse_prior(entry["mitigation_prior"], _join(path, "mitigation_prior"), ctx)
        if mitig.kind is not Kind.DIRICHLET:
            raise ctx.error("mitigation prior must be a dirichlet", _join(path, "mitigation_prior"))
        if mitig.dim != len(names):
            raise ctx.error(f"dirichlet has {mitig.dim} entries but there are {len(names)} "
                            f"impact categories", _join(path, "mitigation_prior.alpha"))
        semantics = ctx.choice(entry["deterrence_semantics"], _join(path, "deterrence_semantics"),
                               SEMANTICS)
        measures.append(MeasureSpec(
            id=str(entry["id"]), name=str(entry.get("name", entry["id"])), cost_prior=cost,
            deterrence_prior=deter, deterrence_semantics=semantics, mitigation_prior=mitig,
            no_op=no_op))

    spec = ScenarioSpec(
        measures=tuple(measures),
        impact_names=tuple(names),
        impact_priors=tuple(priors),
        attacker_cost_prior=eta,
        negligible_index=names.index(neg_name),
        no_attack_damage_mode=mode,
        cost_convention=convention,
        schema_version=version,
        config_hash=hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
    )
    try:
        _check_scenario(spec)
    except ConfigError as exc:
        raise ctx.error(exc.message, exc.path or "measures") from None
    return spec


def _check_scenario(spec: ScenarioSpec) -> None:
    ids = [m.id for m in spec.measures]
    for i, mid in enumerate(ids):
        if ids.index(mid) != i:
            raise ConfigError(f"duplicate measure id {mid!r}", f"measures[{i}].id")
    no_ops = [i for i, m in enumerate(spec.measures) if m.no_op]
    if len(no_ops) > 1:
        raise ConfigError("at most one measure may be flagged no_op", f"measures[{no_ops[1]}].no_op")
    if spec.no_attack_damage_mode not in NO_ATTACK_MODES:
        raise ConfigError(f"must be one of {list(NO_ATTACK_MODES)}", "no_attack_damage_mode")
    if spec.cost_convention not in COST_CONVENTIONS:
        raise ConfigError(f"must be one of {list(COST_CONVENTIONS)}", "cost_convention")
    if not _nonnegative_support(spec.attacker_cost_prior):
        raise ConfigError("cost priors must have nonnegative support", "attacker_cost_prior")


def load_scenario_file(path) -> ScenarioSpec:
    """Read and validate a scenario file (raises ``OSError`` if unreadable)."""
    text = Path(path).read_text(encoding="utf-8")
    return load_scenario(text)


def default_scenario_path() -> Path:
    """The bundled copy of ``scenarios/appendix_b.cfg``."""
    return Path(str(resources.files("dissuade") / "data" / "appendix_b.cfg"))


# --------------------------------------------------------------------------
# draws


@dataclass(frozen=True)
class ExperimentDraw:
    """One sampled world. Monetary values in US$ millions.

    ``w[i]`` is the impact distribution given an attack after measure ``i``;
    given no attack the impact is the negligible category (or zero damage in
    ``zero`` mode). ``deterrence_draw`` keeps the raw Beta draws before the
    attack/dissuade normalisation.
    """

    theta: np.ndarray
    gamma: np.ndarray
    eta_attack: float
    q_attack: np.ndarray
    w: np.ndarray
    experiment_index: int = 0
    measure_ids: tuple = ()
    impact_names: tuple = ()
    negligible_index: int = -1
    no_attack_damage_mode: str = "negligible_draw"
    deterrence_draw: np.ndarray | None = None

    def __post_init__(self):
        for name in ("theta", "gamma", "q_attack", "w"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        n, k = self.gamma.size, self.theta.size
        if not self.measure_ids:
            object.__setattr__(self, "measure_ids", tuple(f"d{i + 1}" for i in range(n)))
        if not self.impact_names:
            object.__setattr__(self, "impact_names", tuple(f"theta{h + 1}" for h in range(k)))
        if self.negligible_index < 0:
            object.__setattr__(self, "negligible_index", k + self.negligible_index)
        object.__setattr__(self, "eta_attack", float(self.eta_attack))

    @property
    def no_attack_damage(self) -> float:
        if self.no_attack_damage_mode == "zero":
            return 0.0
        return float(self.theta[self.negligible_index])

    def validate(self) -> None:
        """Raise :class:`ValidationError` naming the first inconsistent entry."""
        n, k = len(self.measure_ids), self.theta.size
        if self.theta.ndim != 1 or k < 1:
            raise ValidationError("theta must be a non-empty vector")
        if len(self.impact_names) != k:
            raise ValidationError(f"impact_names has {len(self.impact_names)} entries, theta has {k}")
        if self.gamma.shape != (n,):
            raise ValidationError(f"gamma: expected {n} entries, got {self.gamma.size}")
        if self.q_attack.shape != (n,):
            raise ValidationError(f"q_attack: expected {n} entries, got {self.q_attack.size}")
        if self.w.shape != (n, k):
            raise ValidationError(f"w: expected shape {(n, k)}, got {self.w.shape}")
        if not 0 <= self.negligible_index < k:
            raise ValidationError(f"negligible_index {self.negligible_index} out of range")
        if self.no_attack_damage_mode not in NO_ATTACK_MODES:
            raise ValidationError(f"no_attack_damage_mode must be one of {NO_ATTACK_MODES}")
        for h, name in enumerate(self.impact_names):
            if not (math.isfinite(self.theta[h]) and self.theta[h] >= 0):
                raise ValidationError(f"theta[{name}]: damage must be >= 0, got {self.theta[h]}")
        if not (math.isfinite(self.eta_attack) and self.eta_attack >= 0):
            raise ValidationError(f"eta_attack: cost must be >= 0, got {self.eta_attack}")
        for i, mid in enumerate(self.measure_ids):
            if not (math.isfinite(self.gamma[i]) and self.gamma[i] >= 0):
                raise ValidationError(f"gamma[{mid}]: cost must be >= 0, got {self.gamma[i]}")
            if not 0.0 <= self.q_attack[i] <= 1.0:
                raise ValidationError(f"q_attack[{mid}]: probability outside [0, 1]: {self.q_attack[i]}")
            row = self.w[i]
            if not np.all(np.isfinite(row)) or row.min() < 0 or row.max() > 1:
                raise ValidationError(f"w[{mid}]: entries must lie in [0, 1], got {row.tolist()}")
            total = math.fsum(row)
            if abs(total - 1.0) > 1e-9:
                raise ValidationError(f"w[{mid}]: row sums to {total!r}, not 1")


def draw_experiment(spec: ScenarioSpec, stream: RandomStream) -> ExperimentDraw:
    """Sample every prior once, in a fixed order.

    Order: impact damages, then per measure (cost, deterrence, mitigation),
    then the attacker cost. Deterrence draws under ``dissuade_prob`` are
    complemented so that ``q_attack`` is always the attack probability.
    """
    theta = np.array([samplers.sample(p, stream) for p in spec.impact_priors])
    n = len(spec.measures)
    gamma = np.zeros(n)
    raw = np.zeros(n)
    w = np.zeros((n, theta.size))
    for i, m in enumerate(spec.measures):
        gamma[i] = 0.0 if m.cost_prior is None else samplers.sample(m.cost_prior, stream)
        raw[i] = samplers.sample_beta(m.deterrence_prior, stream)
        w[i] = samplers.sample_dirichlet(m.mitigation_prior, stream)
    eta = samplers.sample(spec.attacker_cost_prior, stream)
    q = np.array([attack_probability(r, m.deterrence_semantics)
                  for r, m in zip(raw, spec.measures)])
    return ExperimentDraw(
        theta=theta, gamma=gamma, eta_attack=eta, q_attack=q, w=w,
        experiment_index=stream.stream_index, measure_ids=spec.measure_ids,
        impact_names=spec.impact_names, negligible_index=spec.negligible_index,
        no_attack_damage_mode=spec.no_attack_damage_mode, deterrence_draw=raw,
    )


def attack_probability(deterrence_draw: float, semantics: str) -> float:
    """Map a raw deterrence draw to the probability that the adversary attacks."""
    if semantics == "attack_prob":
        return float(deterrence_draw)
    if semantics == "dissuade_prob":
        return 1.0 - float(deterrence_draw)
    raise ConfigError(f"unknown deterrence semantics {semantics!r}")


def defender_damage(draw: ExperimentDraw, d, c) -> float:
    """Expected damage to the defender after measure ``d`` and conduct ``c``."""
    i = d if isinstance(d, (int, np.integer)) else draw.measure_ids.index(d)
    conduct = CONDUCTS[c] if isinstance(c, (int, np.integer)) else c
    if conduct == "no_attack":
        return draw.no_attack_damage
    if conduct != "attack":
        raise ValueError(f"unknown conduct {c!r}")
    total = 0.0
    for h in range(draw.theta.size):
        total += float(draw.w[i, h]) * float(draw.theta[h])
    return total
