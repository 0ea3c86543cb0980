"""Seeded sampling from the four prior families used by the scenarios.

Every sampled quantity in an experiment (damages, measure costs, deterrence
probabilities and mitigation vectors) comes from one of:

    TruncatedNormal(mu, sigma, lower, upper)
    HalfNormal(sigma)                         |z|, z ~ N(0, sigma^2)
    Beta(alpha, beta)
    Dirichlet(alpha_1, ..., alpha_k)

Randomness is drawn from :class:`RandomStream`, a Philox (counter-based)
generator keyed by ``(seed, stream_index, lane)``. Substream ``k`` is
reachable directly, so experiment ``k`` of a batch draws the same numbers no
matter how many workers run the batch or in which order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ConfigError

__all__ = [
    "Kind",
    "DistributionSpec",
    "RandomStream",
    "truncated_normal",
    "half_normal",
    "beta",
    "dirichlet",
    "sample",
    "sample_truncated_normal",
    "sample_half_normal",
    "sample_beta",
    "sample_dirichlet",
]

# Below this acceptance rate the rejection sampler hands over to inverse-CDF.
MIN_ACCEPTANCE = 0.01

_UINT64 = (1 << 64) - 1


class Kind(str, enum.Enum):
    TRUNCATED_NORMAL = "truncated_normal"
    HALF_NORMAL = "half_normal"
    BETA = "beta"
    DIRICHLET = "dirichlet"


_PARAMS = {
    Kind.TRUNCATED_NORMAL: ("mu", "sigma", "lower", "upper"),
    Kind.HALF_NORMAL: ("sigma",),
    Kind.BETA: ("alpha", "beta"),
    Kind.DIRICHLET: ("alpha",),
}


@dataclass(frozen=True)
class DistributionSpec:
    """A validated, immutable prior.

    Use the module-level constructors (:func:`truncated_normal`,
    :func:`half_normal`, :func:`beta`, :func:`dirichlet`) rather than building
    ``params`` by hand. ``params`` maps parameter names to floats, except for
    the Dirichlet concentration which is a tuple of floats.
    """

    kind: Kind
    params: dict = field(hash=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        _validate(self.kind, self.params)

    def __getitem__(self, name):
        return self.params[name]

    @property
    def dim(self) -> int:
        """Length of a sample: 1 for scalars, k for a Dirichlet."""
        if self.kind is Kind.DIRICHLET:
            return len(self.params["alpha"])
        return 1

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        for name in _PARAMS[self.kind]:
            value = self.params[name]
            if isinstance(value, tuple):
                out[name] = list(value)
            elif math.isinf(value):
                continue  # an omitted bound means unbounded
            else:
                out[name] = value
        return out

    def describe(self) -> str:
        """Compact human-readable form, e.g. ``TN(mu=50, sigma=20, a=0, b=inf)``."""
        p = self.params
        if self.kind is Kind.TRUNCATED_NORMAL:
            return (f"TN(mu={p['mu']:g}, sigma={p['sigma']:g}, "
                    f"a={p['lower']:g}, b={p['upper']:g})")
        if self.kind is Kind.HALF_NORMAL:
            return f"HalfNormal(sigma={p['sigma']:g})"
        if self.kind is Kind.BETA:
            return f"Be({p['alpha']:g}, {p['beta']:g})"
        return "Dir(" + ", ".join(f"{a:g}" for a in p["alpha"]) + ")"


def _validate(kind: Kind, params: dict) -> None:
    expected = set(_PARAMS[kind])
    unknown = set(params) - expected
    if unknown:
        raise ConfigError(f"unknown parameter(s) {sorted(unknown)} for {kind.value}")
    missing = expected - set(params)
    if missing:
        raise ConfigError(f"missing parameter(s) {sorted(missing)} for {kind.value}")

    if kind is Kind.DIRICHLET:
        alpha = params["alpha"]
        if len(alpha) < 2:
            raise ConfigError("Dirichlet needs at least 2 concentrations", "alpha")
        for i, a in enumerate(alpha):
            if not (math.isfinite(a) and a > 0):
                raise ConfigError(f"concentration must be > 0, got {a}", f"alpha[{i}]")
        return

    for name in _PARAMS[kind]:
        if math.isnan(params[name]):
            raise ConfigError("must be a number, got nan", name)
    if kind is Kind.BETA:
        for name in ("alpha", "beta"):
            v = params[name]
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"concentration must be > 0, got {v}", name)
        return

    sigma = params["sigma"]
    if not (math.isfinite(sigma) and sigma > 0):
        raise ConfigError(f"sigma must be > 0, got {sigma}", "sigma")
    if kind is Kind.TRUNCATED_NORMAL:
        if not math.isfinite(params["mu"]):
            raise ConfigError("mu must be finite", "mu")
        if not params["lower"] < params["upper"]:
            raise ConfigError(
                f"lower bound must be below upper bound, got "
                f"[{params['lower']}, {params['upper']}]", "lower")


def truncated_normal(mu: float, sigma: float, lower: float = -math.inf,
                     upper: float = math.inf) -> DistributionSpec:
    return DistributionSpec(Kind.TRUNCATED_NORMAL, {
        "mu": float(mu), "sigma": float(sigma),
        "lower": float(lower), "upper": float(upper)})


def half_normal(sigma: float) -> DistributionSpec:
    return DistributionSpec(Kind.HALF_NORMAL, {"sigma": float(sigma)})


def beta(alpha: float, b: float) -> DistributionSpec:
    return DistributionSpec(Kind.BETA, {"alpha": float(alpha), "beta": float(b)})


def dirichlet(alpha) -> DistributionSpec:
    return DistributionSpec(Kind.DIRICHLET, {"alpha": tuple(float(a) for a in alpha)})


class RandomStream:
    """One reproducible substream of a seeded Philox generator.

    ``RandomStream(seed, k)`` yields the same sequence every time and does
    not depend on streams ``0..k-1`` having been created. ``lane``
    separates unrelated consumers that share a seed and index (draws use
    lane 0, Shapley permutations lane 1).

    A stream is stateful: do not share one between concurrent consumers.
    """

    def __init__(self, seed: int, stream_index: int = 0, lane: int = 0):
        for name, value in (("seed", seed), ("stream_index", stream_index), ("lane", lane)):
            if not 0 <= int(value) <= _UINT64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")
        self.seed = int(seed)
        self.stream_index = int(stream_index)
        self.lane = int(lane)
        key = np.random.SeedSequence([self.seed, self.stream_index, self.lane])
        self.generator = np.random.Generator(np.random.Philox(key))

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_index={self.stream_index}, lane={self.lane})"


def _expect(spec: DistributionSpec, kind: Kind) -> None:
    if spec.kind is not kind:
        raise ConfigError(f"expected a {kind.value} prior, got {spec.kind.value}")


def sample_truncated_normal(spec: DistributionSpec, stream: RandomStream) -> float:
    """Draw from N(mu, sigma^2) restricted to [lower, upper].

    Rejection from the parent normal while the acceptance rate is at least
    1%; inverse-CDF otherwise.
    """
    _expect(spec, Kind.TRUNCATED_NORMAL)
    mu, sigma = spec["mu"], spec["sigma"]
    lo, hi = spec["lower"], spec["upper"]
    a, b = (lo - mu) / sigma, (hi - mu) / sigma
    rng = stream.generator

    # Mass of the window; computed on the side of zero where it is accurate.
    if a > 0:
        accept = special.ndtr(-a) - special.ndtr(-b)
    else:
        accept = special.ndtr(b) - special.ndtr(a)

    if accept >= MIN_ACCEPTANCE:
        while True:
            x = mu + sigma * rng.standard_normal()
            if lo <= x <= hi:
                return float(x)

    # Inverse CDF, mirrored into the lower tail where ndtr/ndtri keep precision.
    flip = a > 0
    if flip:
        a, b = -b, -a
    pa, pb = special.ndtr(a), special.ndtr(b)
    u = pa + (pb - pa) * rng.random()
    z = float(special.ndtri(u))
    z = min(max(z, a), b)
    if flip:
        z = -z
    return float(min(max(mu + sigma * z, lo), hi))


def sample_half_normal(spec: DistributionSpec, stream: RandomStream) -> float:
    _expect(spec, Kind.HALF_NORMAL)
    return float(abs(spec["sigma"] * stream.generator.standard_normal()))


def sample_beta(spec: DistributionSpec, stream: RandomStream) -> float:
    _expect(spec, Kind.BETA)
    return float(stream.generator.beta(spec["alpha"], spec["beta"]))


def sample_dirichlet(spec: DistributionSpec, stream: RandomStream) -> np.ndarray:
    """Normalised independent Gamma(alpha_i, 1) draws."""
    _expect(spec, Kind.DIRICHLET)
    alpha = np.asarray(spec["alpha"])
    rng = stream.generator
    g = rng.standard_gamma(alpha)
    total = g.sum()
    if total > 0:
        return g / total
    # All gammas underflowed (tiny concentrations): redo in log space using
    # Gamma(a) = Gamma(a + 1) * U**(1/a).
    log_g = np.log(rng.standard_gamma(alpha + 1.0)) + np.log(rng.random(alpha.size)) / alpha
    log_g -= log_g.max()
    g = np.exp(log_g)
    return g / g.sum()


_DISPATCH = {
    Kind.TRUNCATED_NORMAL: sample_truncated_normal,
    Kind.HALF_NORMAL: sample_half_normal,
    Kind.BETA: sample_beta,
    Kind.DIRICHLET: sample_dirichlet,
}


def sample(spec: DistributionSpec, stream: RandomStream):
    """Draw once from any supported prior."""
    return _DISPATCH[spec.kind](spec, stream)
