"""End-to-end experiment driver.

Synthesizes ground-truth data for a set of observational/experimental
conditions, runs posterior inference under nested evidence subsets (the
"ladder"), and writes plot-ready posterior tables.  Everything written
under the output directory is a pure function of (plan, seed).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ministan.inference import (
    ConditionSpec,
    DegenerateWeights,
    SMCConfig,
    condition_program,
    particles_to_csv,
    posterior_summary,
    smc_infer,
)
from ministan.interpreter import as_rng, simulate
from ministan.interventions import (
    Compose,
    Do,
    Intervention,
    Shift,
    VarianceScale,
    intervention_from_dict,
    intervention_to_dict,
)
from ministan.prior import GlobalTheta, theta_from_dict, theta_to_dict


@dataclass(frozen=True)
class PlanCondition:
    name: str
    intervention: Intervention | None
    n: int


@dataclass(frozen=True)
class ExperimentPlan:
    theta_true: GlobalTheta
    conditions: tuple[PlanCondition, ...]
    observed_vars: frozenset[str]
    evidence_ladder: tuple[tuple[str, ...], ...]
    smc: SMCConfig

    def validate(self) -> None:
        names = [c.name for c in self.conditions]
        if len(set(names)) != len(names):
            raise ValueError(f"condition names must be unique: {names}")
        known = set(names)
        previous: set[str] = set()
        for entry in self.evidence_ladder:
            entry_set = set(entry)
            if not entry_set <= known:
                raise ValueError(f"ladder entry {entry} names unknown conditions")
            if not entry_set >= previous:
                raise ValueError(
                    "evidence ladder must be monotone nondecreasing by inclusion"
                )
            previous = entry_set
        if any(c.n < 1 for c in self.conditions):
            raise ValueError("every condition needs at least one record")
        self.smc.validate()


def default_plan(observe_skill: bool = False) -> ExperimentPlan:
    """The four-condition experiment at its ground-truth parameters:
    10 records per condition, skill latent unless ``observe_skill``."""
    observed = frozenset({"s", "b", "o"}) if observe_skill else frozenset({"b", "o"})
    conditions = (
        PlanCondition("observational", None, 10),
        PlanCondition("belief_pill", Do("b", 5.0), 10),
        PlanCondition("encouragement", Shift("b", 3.0), 10),
        PlanCondition(
            "assessment", Compose(Shift("s", 2.0), VarianceScale("b", 1.0 / 100.0)), 10
        ),
    )
    ladder = (
        ("observational",),
        ("observational", "belief_pill"),
        ("observational", "belief_pill", "encouragement"),
        ("observational", "belief_pill", "encouragement", "assessment"),
    )
    return ExperimentPlan(
        theta_true=GlobalTheta(-0.013, 0.776, 0.646, 0.734, 0.717, True),
        conditions=conditions,
        observed_vars=observed,
        evidence_ladder=ladder,
        smc=SMCConfig(
            n_particles=2_000, ess_threshold=0.5, rejuvenation_sweeps=5, seed=0
        ),
    )


def generate_data(plan: ExperimentPlan, seed) -> list[ConditionSpec]:
    """Simulate each condition's intervened program N times and project the
    traces onto the observed variables.  Deterministic given the seed."""
    plan.validate()
    rng = as_rng(seed)
    out = []
    for pc in plan.conditions:
        spec = ConditionSpec(pc.name, pc.intervention, plan.observed_vars, ())
        prog = condition_program(plan.theta_true, spec)
        records = []
        for _ in range(pc.n):
            tr = simulate(prog, rng)
            records.append({v: tr.bindings[v] for v in plan.observed_vars})
        out.append(ConditionSpec(pc.name, pc.intervention, plan.observed_vars, tuple(records)))
    return out


def _entry_label(entry: Sequence[str]) -> str:
    return "+".join(entry) if entry else "prior"


def _child_seed(base, index: int) -> list[int]:
    if isinstance(base, (int, np.integer)):
        return [int(base), index]
    return [*map(int, base), index]


def _weighted_mean_std(samples: list[tuple[float, float]]) -> tuple[float, float]:
    values = np.array([v for v, _ in samples])
    weights = np.array([w for _, w in samples])
    mean = float(np.sum(weights * values))
    var = float(np.sum(weights * (values - mean) ** 2))
    return mean, math.sqrt(var)


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_ladder(plan: ExperimentPlan, data: Sequence[ConditionSpec], out_dir) -> dict:
    """Run inference once per ladder entry and write, per entry, a posterior
    particle CSV and a long-format CSV of weighted belief-effect samples,
    plus a single summary.json."""
    plan.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_name = {c.name: c for c in data}
    missing = {pc.name for pc in plan.conditions} - set(by_name)
    if missing:
        raise ValueError(f"data does not cover plan conditions: {sorted(missing)}")

    entries = []
    for idx, entry in enumerate(plan.evidence_ladder):
        label = _entry_label(entry)
        conds = [by_name[c.name] for c in plan.conditions if c.name in entry]
        cfg = replace(plan.smc, seed=_child_seed(plan.smc.seed, idx + 1))
        try:
            particles = smc_infer(conds, cfg)
        except DegenerateWeights as e:
            raise DegenerateWeights(f"ladder entry {label!r}: {e}") from e
        summary = posterior_summary(particles)
        particles_to_csv(particles, out_dir / f"posterior_{label}.csv")
        with open(out_dir / f"lambda_bo_{label}.csv", "w", newline="") as fh:
            fh.write("entry,lambda_bo,weight\n")
            for value, weight in summary["lambda_bo_samples"]:
                fh.write(f"{label},{value!r},{weight!r}\n")
        if summary["lambda_bo_samples"]:
            lam_mean, lam_std = _weighted_mean_std(summary["lambda_bo_samples"])
        else:
            lam_mean = lam_std = None
        entries.append(
            {
                "entry": label,
                "conditions": list(entry),
                "p_edge": summary["p_edge"],
                "lambda_bo_mean": lam_mean,
                "lambda_bo_std": lam_std,
                "lambda_bo_degenerate": summary["lambda_bo_degenerate"],
                "n_particles": plan.smc.n_particles,
            }
        )
    report = {"theta_true": theta_to_dict(plan.theta_true), "entries": entries}
    _dump_json(report, out_dir / "summary.json")
    return report


def replicate(plan: ExperimentPlan, out_dir, seed: int | None = None) -> dict:
    """Generate data and run the full ladder; with an explicit seed the
    whole output directory is reproducible byte for byte."""
    if seed is not None:
        plan = replace(plan, smc=replace(plan.smc, seed=seed))
    data = generate_data(plan, _child_seed(plan.smc.seed, 0))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "dataset.json").write_text(conditions_to_json(data))
    return run_ladder(plan, data, out_dir)


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def conditions_to_json(conds: Sequence[ConditionSpec]) -> str:
    payload = [
        {
            "condition": c.name,
            "intervention": (
                intervention_to_dict(c.intervention) if c.intervention else None
            ),
            "observed": sorted(c.observed_vars),
            "records": [
                {v: rec.values[v] for v in sorted(rec.values)} for rec in c.records
            ],
        }
        for c in conds
    ]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def conditions_from_json(text: str) -> list[ConditionSpec]:
    payload = json.loads(text)
    out = []
    for item in payload:
        iv = item.get("intervention")
        out.append(
            ConditionSpec(
                item["condition"],
                intervention_from_dict(iv) if iv else None,
                frozenset(item["observed"]),
                tuple({k: float(v) for k, v in rec.items()} for rec in item["records"]),
            )
        )
    return out


def plan_to_dict(plan: ExperimentPlan) -> dict:
    return {
        "theta_true": theta_to_dict(plan.theta_true),
        "conditions": [
            {
                "name": pc.name,
                "intervention": (
                    intervention_to_dict(pc.intervention) if pc.intervention else None
                ),
                "n": pc.n,
            }
            for pc in plan.conditions
        ],
        "observed_vars": sorted(plan.observed_vars),
        "evidence_ladder": [list(entry) for entry in plan.evidence_ladder],
        "smc": {
            "n_particles": plan.smc.n_particles,
            "ess_threshold": plan.smc.ess_threshold,
            "rejuvenation_sweeps": plan.smc.rejuvenation_sweeps,
            "rw_step_sizes": dict(plan.smc.rw_step_sizes),
            "seed": plan.smc.seed
            if isinstance(plan.smc.seed, int)
            else list(plan.smc.seed),
        },
    }


def plan_from_dict(d: dict, base: ExperimentPlan | None = None) -> ExperimentPlan:
    """Build a plan from a (possibly partial) dict, filling gaps from
    ``base`` (the default plan unless given)."""
    plan = base if base is not None else default_plan()
    if "theta_true" in d:
        plan = replace(plan, theta_true=theta_from_dict(d["theta_true"]))
    if "conditions" in d:
        conditions = tuple(
            PlanCondition(
                c["name"],
                intervention_from_dict(c["intervention"]) if c.get("intervention") else None,
                int(c["n"]),
            )
            for c in d["conditions"]
        )
        plan = replace(plan, conditions=conditions)
    if "observed_vars" in d:
        plan = replace(plan, observed_vars=frozenset(d["observed_vars"]))
    if "evidence_ladder" in d:
        plan = replace(
            plan, evidence_ladder=tuple(tuple(e) for e in d["evidence_ladder"])
        )
    if "smc" in d:
        s = d["smc"]
        smc = plan.smc
        smc = replace(
            smc,
            n_particles=int(s.get("n_particles", smc.n_particles)),
            ess_threshold=float(s.get("ess_threshold", smc.ess_threshold)),
            rejuvenation_sweeps=int(
                s.get("rejuvenation_sweeps", smc.rejuvenation_sweeps)
            ),
            rw_step_sizes=dict(s.get("rw_step_sizes", smc.rw_step_sizes)),
            seed=s.get("seed", smc.seed),
        )
        plan = replace(plan, smc=smc)
    plan.validate()
    return plan
