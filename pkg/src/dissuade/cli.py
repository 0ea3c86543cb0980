"""Command-line entry point.

    dissuade validate [SCENARIO]
    dissuade sample    [--scenario F] [--seed S] [--index I]
    dissuade optimize  [--scenario F] [--seed S] [--index I]
    dissuade solve     [--scenario F] [--seed S] [--index I]
    dissuade run       [--scenario F] --n N --seed S --out DIR [--format csv|text]
    dissuade sensitivity [--scenario F] --n N --seed S --measure ID --out DIR

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 usage error.
Outputs depend only on the inputs, flags and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from . import __version__
from .diagram import build_diagram, expected_payoff, optimal_decision
from .errors import ConfigError, UsageError, ValidationError
from .experiments import _csv_text, _f, export_batch, run_batch, thread_count
from .game import enumerate_pure_nash, game_form, solve_spe
from .samplers import RandomStream
from .scenario import (CONDUCTS, default_scenario_path, draw_experiment, load_scenario_file,
                       parse_prior)
from .sensitivity import DEFAULT_PERMUTATIONS, attribute_measure

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_USAGE = 0, 2, 3, 4
NO_ATTACK_FLAG = {"draw": "negligible_draw", "zero": "zero"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_eta_prior(text: str):
    """``kind:key=value,...`` (e.g. ``truncated_normal:mu=50,sigma=20,lower=0``) or an inline YAML mapping."""
    text = text.strip()
    if text.startswith("{"):
        obj = yaml.safe_load(text)
    else:
        kind, _, rest = text.partition(":")
        obj = {"kind": kind.strip()}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, value = item.partition("=")
            if not eq:
                raise ConfigError(f"expected key=value, got {item!r}", "--eta-prior")
            obj[key.strip()] = yaml.safe_load(value)
    return parse_prior(obj, "--eta-prior")


def _load(args):
    path = args.scenario or str(default_scenario_path())
    spec = load_scenario_file(path)
    changes = {}
    if getattr(args, "no_attack_damage", None):
        changes["no_attack_damage_mode"] = NO_ATTACK_FLAG[args.no_attack_damage]
    if getattr(args, "eta_prior", None):
        changes["attacker_cost_prior"] = parse_eta_prior(args.eta_prior)
    if getattr(args, "cost_convention", None):
        changes["cost_convention"] = args.cost_convention
    if changes:
        spec = spec.replace(**changes)
    return path, spec


def _manifest(args, path, spec, **extra) -> dict:
    return {
        "command": args.command,
        "scenario": path,
        "config_hash": spec.config_hash,
        "seed": getattr(args, "seed", None),
        "n": getattr(args, "n", None),
        "tool_version": __version__,
        "defaults": spec.defaults_in_force(),
        **extra,
    }


def _write_manifest(out: Path, manifest: dict) -> None:
    with open(out / "manifest.json", "w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _do_validate(args) -> int:
    path = args.path or args.scenario or str(default_scenario_path())
    spec = load_scenario_file(path)
    print(f"{path}: OK")
    print(f"measures: {len(spec.measures)}")
    print(f"impact categories: {len(spec.impact_names)} ({', '.join(spec.impact_names)})")
    print(f"config_hash: {spec.config_hash}")
    print()
    for name, prior in zip(spec.impact_names, spec.impact_priors):
        print(f"  impact {name:<12} {prior.describe()}")
    print(f"  attacker cost       {spec.attacker_cost_prior.describe()}")
    for m in spec.measures:
        cost = "0 (no-op)" if m.cost_prior is None else m.cost_prior.describe()
        print(f"  {m.id:<4} {m.name}")
        print(f"       cost {cost}; deterrence {m.deterrence_prior.describe()} "
              f"[{m.deterrence_semantics}]; mitigation {m.mitigation_prior.describe()}")
    return EXIT_OK


def _draw(args):
    path, spec = _load(args)
    return path, spec, draw_experiment(spec, RandomStream(args.seed, args.index))


def _do_sample(args) -> int:
    path, spec, draw = _draw(args)
    doc = {
        "manifest": _manifest(args, path, spec, index=args.index),
        "theta": dict(zip(spec.impact_names, map(float, draw.theta))),
        "eta_attack": draw.eta_attack,
        "measures": {
            mid: {"gamma": float(draw.gamma[i]), "q_attack": float(draw.q_attack[i]),
                  "w_attack": [float(x) for x in draw.w[i]]}
            for i, mid in enumerate(spec.measure_ids)
        },
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _do_optimize(args) -> int:
    path, spec, draw = _draw(args)
    diagram = build_diagram(draw, spec.cost_convention)
    best = optimal_decision(diagram)
    print(f"# cost_convention: {spec.cost_convention}")
    print("measure,expected_payoff")
    for i, mid in enumerate(spec.measure_ids):
        print(f"{mid},{_f(expected_payoff(diagram, i))}")
    print(f"# optimal: {best.label} ({_f(best.value)})")
    return EXIT_OK


def _do_solve(args) -> int:
    path, spec, draw = _draw(args)
    form = game_form(draw)
    spe = solve_spe(form)
    ids = spec.measure_ids
    print(f"# attacker_cost_prior: {spec.attacker_cost_prior.describe()}")
    print("measure,defender_attack,defender_no_attack,attacker_attack,attacker_no_attack,response")
    for i, mid in enumerate(ids):
        print(",".join([mid, *(_f(x) for x in form.defender[i]), *(_f(x) for x in form.attacker[i]),
                        CONDUCTS[spe.attacker_strategy[i]]]))
    print(f"# SPE: {ids[spe.defender_choice]}, {CONDUCTS[spe.outcome_conduct]} "
          f"(defender {_f(spe.defender_value)}, attacker {_f(spe.attacker_value)})")
    if args.nash:
        for ne in enumerate_pure_nash(form):
            strategy = " ".join(f"{ids[i]}:{CONDUCTS[c]}" for i, c in enumerate(ne.attacker_strategy))
            tag = " (SPE)" if (ne.defender_choice, ne.attacker_strategy) == (
                spe.defender_choice, spe.attacker_strategy) else ""
            print(f"# NE: {ids[ne.defender_choice]} | {strategy}{tag}")
    return EXIT_OK


def _do_run(args) -> int:
    path, spec = _load(args)
    result = run_batch(spec, args.n, args.seed, thread_count(args.threads))
    out = Path(args.out)
    export_batch(result, args.format, out, extra_header={"scenario": path})
    _write_manifest(out, _manifest(args, path, spec, format=args.format))
    print(f"wrote {args.n} experiments to {out}")
    print(f"attacker_cost_prior: {spec.attacker_cost_prior.describe()}")
    return EXIT_OK


def _do_sensitivity(args) -> int:
    path, spec = _load(args)
    if args.measure not in spec.measure_ids:
        raise UsageError(f"unknown measure {args.measure!r}; expected one of {list(spec.measure_ids)}")
    threads = thread_count(args.threads)
    batch = run_batch(spec, args.n, args.seed, threads)
    sens = attribute_measure(batch, args.measure, args.permutations, args.seed, threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = {**batch.header(), "scenario": path, "measure": args.measure,
              "n_permutations": args.permutations}
    table = [[args.measure, name, _f(imp), rank + 1]
             for rank, (name, imp) in enumerate(sens.ranking())]
    long_rows = []
    names = sens.frame.feature_names
    for r, attr in enumerate(sens.attributions):
        for j, name in enumerate(names):
            long_rows.append([int(sens.frame.experiment_index[r]), name,
                              _f(attr.phi[j]), _f(sens.frame.X[r, j])])
    files = {
        "sensitivity.csv": _csv_text(header, ["measure_id", "feature", "mean_abs_phi", "rank"], table),
        f"attributions_{args.measure}.csv": _csv_text(
            header, ["experiment_index", "feature", "phi", "feature_value"], long_rows),
    }
    for name, text in files.items():
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    _write_manifest(out, _manifest(args, path, spec, measure=args.measure,
                                   n_permutations=args.permutations))
    for rank, (name, imp) in enumerate(sens.ranking()[:3]):
        print(f"{rank + 1}. {name}  mean|phi| = {imp:.4g}")
    return EXIT_OK


def _flags(options: dict) -> list:
    argv = []
    for key, value in options.items():
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        argv += [flag] if value is True else [flag, str(value)]
    return argv


def cmd_validate(scenario_path) -> int:
    """Check a scenario file; prints a summary and returns the exit status."""
    return main(["validate", str(scenario_path)])


def cmd_run(scenario_path, n: int, seed: int, out_dir, **options) -> int:
    """Run a batch and export it under ``out_dir``; returns the exit status.

    ``options`` map to the remaining flags, e.g. ``format="text"``, ``threads=4``,
    ``eta_prior="half_normal:sigma=40"``.
    """
    return main(["run", "--scenario", str(scenario_path), "--n", str(n), "--seed", str(seed),
                 "--out", str(out_dir), *_flags(options)])


def cmd_sensitivity(scenario_path, n: int, seed: int, measure: str, out_dir, **options) -> int:
    """Shapley attribution of one measure over a batch; returns the exit status."""
    return main(["sensitivity", "--scenario", str(scenario_path), "--n", str(n),
                 "--seed", str(seed), "--measure", str(measure), "--out", str(out_dir),
                 *_flags(options)])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dissuade", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--scenario", help="scenario file (default: bundled appendix_b.cfg)")
        p.add_argument("--no-attack-damage", choices=sorted(NO_ATTACK_FLAG),
                       help="damage when no attack happens: negligible draw or zero")
        p.add_argument("--eta-prior", metavar="SPEC",
                       help="attacker cost prior, e.g. truncated_normal:mu=50,sigma=20,lower=0")
        p.add_argument("--cost-convention", choices=["net", "cost_added"],
                       help="how measure costs enter the ranking objective")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate", help="check a scenario file and print its priors")
    p.add_argument("path", nargs="?")
    p.add_argument("--scenario")
    p.set_defaults(func=_do_validate)

    for name, func, text in (("sample", _do_sample, "draw one experiment"),
                             ("optimize", _do_optimize, "rank measures for one experiment"),
                             ("solve", _do_solve, "solve the equilibrium for one experiment")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--index", type=int, default=0, help="experiment index (substream)")
        if name == "solve":
            p.add_argument("--nash", action="store_true", help="also list every pure Nash equilibrium")
        p.set_defaults(func=func)

    p = sub.add_parser("run", help="run a batch and export tallies")
    common(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "text"], default="csv")
    p.add_argument("--threads", type=int, help="worker threads (default: $DISSUADE_THREADS or 1)")
    p.set_defaults(func=_do_run)

    p = sub.add_parser("sensitivity", help="Shapley attribution for one measure")
    common(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--measure", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--permutations", type=int, default=DEFAULT_PERMUTATIONS)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=_do_sensitivity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for flag in ("n", "permutations", "index", "seed"):
        value = getattr(args, flag, None)
        if value is not None and (value < (1 if flag in ("n", "permutations") else 0)):
            parser.error(f"--{flag} out of range: {value}")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValidationError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"I/O error: no such file: {exc.filename}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
