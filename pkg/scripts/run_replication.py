#!/usr/bin/env python3
"""Run the four-condition experiment end to end and print the summary.

Equivalent to `ministan replicate`, kept as a standalone script for quick
iteration on plan settings.
"""
import argparse
import json
from pathlib import Path

from ministan.harness import default_plan, plan_from_dict, replicate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--config", help="plan JSON; partial configs merge over defaults")
    ap.add_argument("--observe-s", action="store_true", help="observe skill too")
    args = ap.parse_args()

    if args.config:
        plan = plan_from_dict(json.loads(Path(args.config).read_text()))
    else:
        plan = default_plan(observe_skill=args.observe_s)
    report = replicate(plan, args.out, seed=args.seed)
    print(json.dumps(report, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
