"""Command-line interface.

Subcommands:
    simulate   run a program file forward, one JSON trace per line
    intervene  rewrite a program file with an intervention descriptor
    score      log density of a trace under a program file
    replicate  run the full data-generation + evidence-ladder experiment
    oracle     brute-force importance-sampling posterior on a tiny dataset

Domain errors exit 1 with a JSON error object on stderr; usage errors
exit 2.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ministan.errors import MiniStanError
from ministan.harness import (
    conditions_from_json,
    default_plan,
    plan_from_dict,
    replicate,
)
from ministan.inference import is_oracle
from ministan.interpreter import log_density, simulate
from ministan.interventions import apply_intervention, intervention_from_dict
from ministan.dsl import parse_program, print_program


def _read_program(path: str, *, check_scope: bool = True):
    return parse_program(Path(path).read_text(), check_scope=check_scope)


def _cmd_simulate(args) -> int:
    program = _read_program(args.program)
    import numpy as np

    rng = np.random.default_rng(args.seed)
    for _ in range(args.n):
        trace = simulate(program, rng)
        print(json.dumps(trace.bindings, sort_keys=True))
    return 0


def _cmd_intervene(args) -> int:
    program = _read_program(args.program, check_scope=False)
    descriptor = intervention_from_dict(json.loads(args.spec))
    print(print_program(apply_intervention(program, descriptor)))
    return 0


def _cmd_score(args) -> int:
    program = _read_program(args.program)
    trace = {k: float(v) for k, v in json.loads(args.trace).items()}
    print(log_density(program, trace))
    return 0


def _cmd_replicate(args) -> int:
    if args.config:
        plan = plan_from_dict(json.loads(Path(args.config).read_text()))
    else:
        plan = default_plan(observe_skill=args.observe_s)
    report = replicate(plan, args.out, seed=args.seed)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_oracle(args) -> int:
    conds = conditions_from_json(Path(args.data).read_text())
    total = sum(len(c.records) for c in conds)
    if total > 5:
        raise MiniStanError(
            f"oracle is a brute-force check for tiny datasets; got {total} records (max 5)"
        )
    out = is_oracle(conds, args.samples, seed=args.seed)
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ministan",
        description="Causal structure/parameter inference over MiniStan programs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample traces from a program file")
    p.add_argument("program", help="path to a .ms program file")
    p.add_argument("--n", type=int, default=1, help="number of traces")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("intervene", help="rewrite a program with an intervention")
    p.add_argument("program")
    p.add_argument(
        "--spec",
        required=True,
        help='intervention JSON, e.g. {"kind":"do","var":"b","value":5}',
    )
    p.set_defaults(func=_cmd_intervene)

    p = sub.add_parser("score", help="log density of a trace under a program")
    p.add_argument("program")
    p.add_argument("--trace", required=True, help="JSON object of variable -> value")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("replicate", help="run the full ladder experiment")
    p.add_argument("--config", help="plan JSON (partial configs merge over defaults)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument(
        "--observe-s",
        action="store_true",
        help="treat skill as observed instead of latent",
    )
    p.set_defaults(func=_cmd_replicate)

    p = sub.add_parser("oracle", help="importance-sampling posterior on a tiny dataset")
    p.add_argument("--data", required=True, help="dataset JSON path")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MiniStanError as e:
        print(
            json.dumps({"error": type(e).__name__, "message": str(e)}),
            file=sys.stderr,
        )
        return 1
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(
            json.dumps({"error": type(e).__name__, "message": str(e)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
