"""Monte Carlo harness: draw worlds, rank measures, solve equilibria, tally.

Experiment ``i`` of a batch always uses substream ``i`` of the batch seed, so
results do not depend on the number of worker threads. Tallies are merged in
experiment order.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .diagram import build_diagram, expected_payoff, rank_decisions
from .game import EquilibriumProfile, game_form, solve_spe
from .scenario import CONDUCTS, ExperimentDraw, ScenarioSpec, draw_experiment
from .samplers import RandomStream

__all__ = [
    "ExperimentResult",
    "BatchResult",
    "run_experiment",
    "rank_measures",
    "run_batch",
    "export_batch",
    "read_tallies",
    "thread_count",
]

THREADS_ENV = "DISSUADE_THREADS"


@dataclass(frozen=True)
class ExperimentResult:
    experiment_index: int
    draw: ExperimentDraw
    expected_payoffs: tuple
    ranking: tuple
    spe: EquilibriumProfile


@dataclass(frozen=True)
class BatchResult:
    """Per-experiment results plus the two tallies.

    ``rank_counts[i, r]`` counts experiments where measure ``i`` attained rank
    ``r + 1`` (rank 1 is best). ``spe_counts[i, j]`` counts experiments whose
    equilibrium has the defender choose ``i`` and the attacker play conduct
    ``j`` (``attack``, ``no_attack``).
    """

    scenario: ScenarioSpec
    n_experiments: int
    seed: int
    rank_counts: np.ndarray
    spe_counts: np.ndarray
    per_experiment: tuple

    @property
    def config_hash(self) -> str:
        return self.scenario.config_hash

    @property
    def measure_ids(self) -> tuple:
        return self.scenario.measure_ids

    def header(self) -> dict:
        return {
            "tool": "dissuade",
            "version": __version__,
            "schema_version": self.scenario.schema_version,
            "seed": self.seed,
            "n_experiments": self.n_experiments,
            "config_hash": self.config_hash,
            **self.scenario.defaults_in_force(),
        }


def _rank_indices(draw: ExperimentDraw, cost_convention: str):
    diagram = build_diagram(draw, cost_convention)
    values = tuple(expected_payoff(diagram, i) for i in range(len(draw.measure_ids)))
    return values, tuple(rank_decisions(diagram, values))


def rank_measures(draw: ExperimentDraw, cost_convention: str = "net") -> list:
    """Measure ids from most to least optimal by interventional expected payoff."""
    _, order = _rank_indices(draw, cost_convention)
    return [draw.measure_ids[i] for i in order]


def run_experiment(spec: ScenarioSpec, index: int, seed: int) -> ExperimentResult:
    draw = draw_experiment(spec, RandomStream(seed, index))
    values, order = _rank_indices(draw, spec.cost_convention)
    return ExperimentResult(index, draw, values, order, solve_spe(game_form(draw)))


def thread_count(threads: int | None = None) -> int:
    """Worker count: explicit argument, else ``DISSUADE_THREADS``, else 1."""
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(threads))


def ordered_map(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool; order preserved."""
    threads = thread_count(threads)
    if threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_batch(spec: ScenarioSpec, n: int, seed: int, threads: int | None = None) -> BatchResult:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    results = ordered_map(lambda i: run_experiment(spec, i, seed), range(n), threads)
    k = len(spec.measures)
    rank_counts = np.zeros((k, k), dtype=np.int64)
    spe_counts = np.zeros((k, len(CONDUCTS)), dtype=np.int64)
    for res in results:
        for rank, i in enumerate(res.ranking):
            rank_counts[i, rank] += 1
        spe_counts[res.spe.defender_choice, res.spe.outcome_conduct] += 1
    return BatchResult(spec, n, seed, rank_counts, spe_counts, tuple(results))


# --------------------------------------------------------------------------
# export


def _f(x: float) -> str:
    return format(float(x), ".17g")


def _csv_text(header: dict, columns: list, rows: list) -> str:
    buf = io.StringIO()
    for key, value in header.items():
        if isinstance(value, dict):
            value = json.dumps(value, sort_keys=True)
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def _experiment_rows(result: BatchResult) -> list:
    ids = result.measure_ids
    rows = []
    for res in result.per_experiment:
        rows.append([res.experiment_index, *(_f(v) for v in res.expected_payoffs),
                     ids[res.ranking[0]], ids[res.spe.defender_choice],
                     CONDUCTS[res.spe.outcome_conduct]])
    return rows


def export_batch(result: BatchResult, fmt: str, path, extra_header: dict | None = None) -> list:
    """Write the batch under directory ``path``; returns the files written.

    ``csv`` writes ``rank_counts.csv``, ``spe_counts.csv`` and
    ``experiments.csv``, each starting with ``# key: value`` provenance lines.
    ``text`` writes the same content as a single ``batch.json``.
    """
    if fmt not in ("csv", "text"):
        raise ValueError(f"unknown export format {fmt!r}")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    header = {**result.header(), **(extra_header or {})}
    ids = result.measure_ids
    rank_rows = [[ids[i], r + 1, int(result.rank_counts[i, r])]
                 for i in range(len(ids)) for r in range(len(ids))]
    spe_rows = [[ids[i], CONDUCTS[j], int(result.spe_counts[i, j])]
                for i in range(len(ids)) for j in range(len(CONDUCTS))]
    exp_columns = ["experiment_index", *(f"payoff_{m}" for m in ids),
                   "rank1_measure", "spe_measure", "spe_conduct"]

    if fmt == "csv":
        files = {
            "rank_counts.csv": _csv_text(header, ["measure_id", "rank", "count"], rank_rows),
            "spe_counts.csv": _csv_text(header, ["measure_id", "conduct", "count"], spe_rows),
            "experiments.csv": _csv_text(header, exp_columns, _experiment_rows(result)),
        }
    else:
        doc = {
            "header": header,
            "rank_counts": [dict(zip(["measure_id", "rank", "count"], r)) for r in rank_rows],
            "spe_counts": [dict(zip(["measure_id", "conduct", "count"], r)) for r in spe_rows],
            "experiments": [dict(zip(exp_columns, r)) for r in _experiment_rows(result)],
        }
        files = {"batch.json": json.dumps(doc, indent=2, sort_keys=False) + "\n"}

    written = []
    for name, text in files.items():
        target = out / name
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        written.append(target)
    return written


def _read_csv(path: Path):
    header, lines = {}, []
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition(": ")
                header[key] = value
            else:
                lines.append(line)
    return header, list(csv.DictReader(lines))


def read_tallies(path) -> dict:
    """Re-import exported tallies from a ``csv`` or ``text`` export directory.

    Returns ``{"header", "measure_ids", "rank_counts", "spe_counts"}`` with
    the count matrices shaped like :class:`BatchResult`'s.
    """
    path = Path(path)
    if (path / "batch.json").exists():
        doc = json.loads((path / "batch.json").read_text(encoding="utf-8"))
        header, rank_rows, spe_rows = doc["header"], doc["rank_counts"], doc["spe_counts"]
    else:
        header, rank_rows = _read_csv(path / "rank_counts.csv")
        _, spe_rows = _read_csv(path / "spe_counts.csv")
    ids = list(dict.fromkeys(r["measure_id"] for r in rank_rows))
    rank_counts = np.zeros((len(ids), len(ids)), dtype=np.int64)
    for r in rank_rows:
        rank_counts[ids.index(r["measure_id"]), int(r["rank"]) - 1] = int(r["count"])
    spe_counts = np.zeros((len(ids), len(CONDUCTS)), dtype=np.int64)
    for r in spe_rows:
        spe_counts[ids.index(r["measure_id"]), CONDUCTS.index(r["conduct"])] = int(r["count"])
    return {"header": header, "measure_ids": tuple(ids),
            "rank_counts": rank_counts, "spe_counts": spe_counts}
