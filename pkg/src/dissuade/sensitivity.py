"""Permutation-sampling Shapley attribution of a measure's expected payoff.

The explained model is the analytic expected payoff of one measure as a
function of the sampled inputs that enter it::

    q[d][attack], gamma[d], theta[1..k], w[d][attack][1..k]

Attribution is interventional: a coalition ``S`` is valued at the mean model
output when the features in ``S`` take the explained row's values and the
rest take each background row's values, averaged over the whole background
(all experiments of the batch). For every sampled feature ordering the
features are switched from background to explained values one at a time and
the marginal changes are recorded; ``phi`` is their mean over orderings.

Because each ordering's marginals telescope to ``v(all) - v(none)``, the
efficiency identity holds per ordering (up to rounding), features the model
ignores get exactly zero, and additive models are recovered exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, UsageError
from .experiments import BatchResult, ordered_map
from .samplers import RandomStream

__all__ = [
    "FeatureFrame",
    "Attribution",
    "MeasureSensitivity",
    "build_feature_frame",
    "payoff_model",
    "shapley_attribution",
    "attribute_measure",
    "top_features",
    "DEFAULT_PERMUTATIONS",
]

DEFAULT_PERMUTATIONS = 64
SHAPLEY_LANE = 1


@dataclass(frozen=True)
class FeatureFrame:
    """Feature matrix and target for one measure, one row per experiment."""

    measure_id: str
    feature_names: tuple
    X: np.ndarray
    target: np.ndarray
    experiment_index: np.ndarray
    model: Callable

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class Attribution:
    feature_names: tuple
    phi: np.ndarray
    phi_se: np.ndarray
    baseline: float
    prediction: float
    n_permutations: int
    seed: int
    efficiency_se: float

    @property
    def efficiency_gap(self) -> float:
        """``baseline + sum(phi) - prediction``."""
        return self.baseline + math.fsum(self.phi) - self.prediction

    @property
    def efficiency_tolerance(self) -> float:
        """Three Monte Carlo standard errors plus a floating-point floor."""
        return 3.0 * self.efficiency_se + 1e-9 * max(1.0, abs(self.prediction))


def payoff_model(n_impacts: int, negligible_index: int, no_attack_damage_mode: str,
                 cost_sign: float) -> Callable:
    """Vectorised expected payoff of a measure over feature columns.

    Columns: ``q, gamma, theta_1..theta_k, w_1..w_k``. Same summation order as
    :func:`dissuade.diagram.expected_payoff`.
    """
    k = n_impacts

    def model(X):
        X = np.asarray(X, dtype=float)
        q, gamma = X[..., 0], X[..., 1]
        theta, w = X[..., 2:2 + k], X[..., 2 + k:2 + 2 * k]
        hit = w[..., 0] * -theta[..., 0]
        for h in range(1, k):
            hit = hit + w[..., h] * -theta[..., h]
        if no_attack_damage_mode == "zero":
            quiet = np.zeros_like(q)
        else:
            quiet = -theta[..., negligible_index]
        return q * hit + (1.0 - q) * quiet + cost_sign * gamma

    return model


def build_feature_frame(batch: BatchResult, measure) -> FeatureFrame:
    """Features of ``measure`` for every experiment of ``batch``.

    The target is recomputed from the features and checked against the
    stored expected payoff (within 1e-9).
    """
    spec = batch.scenario
    try:
        i = spec.measure_index(measure)
    except ConfigError:
        raise UsageError(f"unknown measure {measure!r}; expected one of {list(spec.measure_ids)}") from None
    mid = spec.measure_ids[i]
    k = len(spec.impact_names)
    names = (f"q[{mid}][attack]", f"gamma[{mid}]",
             *(f"theta[{h + 1}]" for h in range(k)),
             *(f"w[{mid}][attack][{h + 1}]" for h in range(k)))
    rows = []
    stored = []
    for res in batch.per_experiment:
        d = res.draw
        rows.append([d.q_attack[i], d.gamma[i], *d.theta, *d.w[i]])
        stored.append(res.expected_payoffs[i])
    X = np.array(rows, dtype=float)
    X.setflags(write=False)
    sign = -1.0 if spec.cost_convention == "net" else 1.0
    model = payoff_model(k, spec.negligible_index, spec.no_attack_damage_mode, sign)
    target = model(X)
    stored = np.array(stored)
    worst = float(np.max(np.abs(target - stored))) if stored.size else 0.0
    if worst > 1e-9:
        raise AssertionError(f"feature model disagrees with stored payoffs by {worst:g}")
    return FeatureFrame(mid, names, X, target,
                        np.array([r.experiment_index for r in batch.per_experiment]), model)


def shapley_attribution(frame: FeatureFrame, row_index: int, n_permutations: int,
                        stream: RandomStream, background: np.ndarray | None = None) -> Attribution:
    """Monte Carlo permutation Shapley values for one row of ``frame``."""
    if n_permutations < 1:
        raise UsageError("n_permutations must be >= 1")
    B = frame.X if background is None else np.asarray(background, dtype=float)
    if B.shape[0] == 0:
        raise UsageError("background set is empty")
    x = frame.X[row_index]
    k = x.size
    rng = stream.generator
    orders = np.array([rng.permutation(k) for _ in range(n_permutations)])

    # Coalition after the first j switches of each ordering, as a bitmask.
    bits = (1 << orders).astype(np.int64)
    prefix = np.zeros((n_permutations, k + 1), dtype=np.int64)
    prefix[:, 1:] = np.cumsum(bits, axis=1)
    unique, inverse = np.unique(prefix, return_inverse=True)
    masks = (unique[:, None] >> np.arange(k)) & 1
    Z = np.where(masks[:, None, :].astype(bool), x[None, None, :], B[None, :, :])
    value = frame.model(Z).mean(axis=1)
    v = value[inverse.reshape(prefix.shape)]

    marginals = np.empty((n_permutations, k))
    steps = v[:, 1:] - v[:, :-1]
    np.put_along_axis(marginals, orders, steps, axis=1)
    phi = marginals.mean(axis=0)
    totals = marginals.sum(axis=1)
    if n_permutations > 1:
        phi_se = marginals.std(axis=0, ddof=1) / math.sqrt(n_permutations)
        eff_se = float(totals.std(ddof=1) / math.sqrt(n_permutations))
    else:
        phi_se = np.full(k, np.nan)
        eff_se = 0.0
    baseline = float(value[unique == 0][0])
    prediction = float(value[unique == (1 << k) - 1][0])
    return Attribution(frame.feature_names, phi, phi_se, baseline, prediction,
                       n_permutations, stream.seed, eff_se)


@dataclass(frozen=True)
class MeasureSensitivity:
    """Attributions of every row of a measure's feature frame."""

    frame: FeatureFrame
    attributions: tuple
    seed: int
    n_permutations: int

    @property
    def phi(self) -> np.ndarray:
        return np.array([a.phi for a in self.attributions])

    @property
    def mean_abs_phi(self) -> np.ndarray:
        return np.abs(self.phi).mean(axis=0)

    def ranking(self) -> list:
        """Features by decreasing mean |phi| (ties keep column order); zero-importance last."""
        imp = self.mean_abs_phi
        order = sorted(range(imp.size), key=lambda j: (-imp[j], j))
        return [(self.frame.feature_names[j], float(imp[j])) for j in order]

    def top(self, k: int) -> list:
        """The ``k`` most important features with nonzero importance."""
        if k < 1:
            raise UsageError("k must be >= 1")
        return [name for name, imp in self.ranking() if imp > 0][:k]


def attribute_measure(batch: BatchResult, measure, n_permutations: int = DEFAULT_PERMUTATIONS,
                      seed: int | None = None, threads: int | None = None) -> MeasureSensitivity:
    """Explain every experiment's payoff for ``measure`` against the full batch.

    Row ``r`` uses substream ``(seed, experiment_index[r])`` on a lane
    separate from the batch draws; ``seed`` defaults to the batch seed.
    """
    frame = build_feature_frame(batch, measure)
    seed = batch.seed if seed is None else seed

    def explain(r):
        stream = RandomStream(seed, int(frame.experiment_index[r]), lane=SHAPLEY_LANE)
        return shapley_attribution(frame, r, n_permutations, stream)

    attributions = ordered_map(explain, range(frame.n_rows), threads)
    return MeasureSensitivity(frame, tuple(attributions), seed, n_permutations)


def top_features(batch: BatchResult, measure, k: int, n_permutations: int = DEFAULT_PERMUTATIONS,
                 seed: int | None = None) -> list:
    """Names of the ``k`` features with the largest mean |phi| for ``measure``."""
    if k < 1:
        raise UsageError("k must be >= 1")
    return attribute_measure(batch, measure, n_permutations, seed).top(k)
