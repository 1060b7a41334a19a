"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`.  The later criteria are
Monte Carlo experiments and take minutes to tens of minutes.
"""
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from ministan.cli import main as cli_main
from ministan.dsl import parse_program, print_program
from ministan.harness import default_plan, generate_data
from ministan.inference import (
    SMCConfig,
    is_oracle,
    posterior_summary,
    smc_infer,
)
from ministan.interpreter import log_density, sample_vars, simulate
from ministan.interventions import (
    Compose,
    Do,
    Shift,
    VarianceScale,
    apply_intervention,
)
from ministan.prior import render_program, sample_theta

EDGE_TEMPLATE = (
    "s ~ normal(mu_s, sigma_s)\n"
    "b ~ normal(s, sigma_b)\n"
    "logit_o = s * lambda_so + b * lambda_bo\n"
    "o ~ bernoulli(1 / (1 + exp(-logit_o)))"
)
NO_EDGE_TEMPLATE = EDGE_TEMPLATE.replace(
    "logit_o = s * lambda_so + b * lambda_bo", "logit_o = s * lambda_so"
)


def report(number: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {number} ({name}): {status}  {detail}")
    assert ok, f"criterion {number} ({name}) failed: {detail}"


def test_criterion_1_golden_intervention_suite():
    interventions = {
        "belief_pill": Do("b", 5.0),
        "encouragement": Shift("b", 3.0),
        "assessment": Compose(Shift("s", 2.0), VarianceScale("b", 1.0 / 100.0)),
    }
    goldens = {
        ("belief_pill", True): EDGE_TEMPLATE.replace("b ~ normal(s, sigma_b)", "b = 5"),
        ("belief_pill", False): NO_EDGE_TEMPLATE.replace(
            "b ~ normal(s, sigma_b)", "b = 5"
        ),
        ("encouragement", True): EDGE_TEMPLATE.replace(
            "b ~ normal(s, sigma_b)", "b ~ normal(s + 3, sigma_b)"
        ),
        ("encouragement", False): NO_EDGE_TEMPLATE.replace(
            "b ~ normal(s, sigma_b)", "b ~ normal(s + 3, sigma_b)"
        ),
        ("assessment", True): EDGE_TEMPLATE.replace(
            "s ~ normal(mu_s, sigma_s)", "s ~ normal(mu_s + 2, sigma_s)"
        ).replace("b ~ normal(s, sigma_b)", "b ~ normal(s, sigma_b / 100)"),
        ("assessment", False): NO_EDGE_TEMPLATE.replace(
            "s ~ normal(mu_s, sigma_s)", "s ~ normal(mu_s + 2, sigma_s)"
        ).replace("b ~ normal(s, sigma_b)", "b ~ normal(s, sigma_b / 100)"),
    }
    failures = []
    for (name, edge), want in goldens.items():
        template = parse_program(
            EDGE_TEMPLATE if edge else NO_EDGE_TEMPLATE, check_scope=False
        )
        got = print_program(apply_intervention(template, interventions[name]))
        if got != want:
            failures.append((name, edge, got))
    report(
        1,
        "golden intervention suite",
        not failures,
        f"6/6 rewritten programs match canonical text" if not failures else str(failures),
    )


def test_criterion_2_interpreter_correctness():
    # closed-form table
    def ref_normal(x, mu, sd):
        return -0.5 * math.log(2 * math.pi) - math.log(sd) - (x - mu) ** 2 / (2 * sd**2)

    cases = []
    for mu in (-2.0, 0.0, 0.7, 3.5):
        for sd in (0.1, 1.0, 2.5):
            for x in (-1.0, 0.0, 2.0):
                cases.append((f"v ~ normal({mu}, {sd})", x, ref_normal(x, mu, sd)))
    for lo, hi in ((0.0, 1.0), (-2.0, 3.0)):
        for x in (lo - 1, lo, (lo + hi) / 2, hi, hi + 1):
            inside = lo <= x <= hi
            cases.append(
                (f"v ~ uniform({lo}, {hi})", x, -math.log(hi - lo) if inside else -math.inf)
            )
    for pr in (0.0, 0.25, 0.5, 1.0):
        for x in (0.0, 1.0):
            if x == 1.0:
                want = math.log(pr) if pr > 0 else -math.inf
            else:
                want = math.log(1 - pr) if pr < 1 else -math.inf
            cases.append((f"v ~ bernoulli({pr})", x, want))
    assert len(cases) >= 50
    table_ok = True
    worst = 0.0
    for text, x, want in cases:
        got = log_density(parse_program(text), {"v": x})
        if math.isinf(want):
            table_ok &= got == want
        else:
            err = abs(got - want)
            worst = max(worst, err)
            table_ok &= err < 1e-10

    # simulate/score consistency over prior draws
    rng = np.random.default_rng(20_2024)
    consistency_ok = True
    worst_gap = 0.0
    for _ in range(1_000):
        p = render_program(sample_theta(rng))
        tr = simulate(p, rng)
        full = {v: tr.bindings[v] for v in sample_vars(p)}
        gap = abs(log_density(p, full) - tr.total_log_density())
        worst_gap = max(worst_gap, gap)
        consistency_ok &= gap < 1e-12
    report(
        2,
        "interpreter correctness",
        table_ok and consistency_ok,
        f"{len(cases)}-case table max err {worst:.2e}; "
        f"1000-program simulate/score max gap {worst_gap:.2e}",
    )


def test_criterion_5_prior_recovery():
    smc = smc_infer([], SMCConfig(n_particles=10_000, seed=55))
    p_smc = posterior_summary(smc)["p_edge"]
    p_is = is_oracle([], 10_000, seed=56)["p_edge"]
    ok = abs(p_smc - 0.5) < 0.02 and abs(p_is - 0.5) < 0.02
    report(
        5,
        "prior recovery",
        ok,
        f"smc P(edge)={p_smc:.4f}, oracle P(edge)={p_is:.4f} (target 0.5 +/- 0.02)",
    )


def test_criterion_3_oracle_equivalence():
    plan = default_plan()
    data = generate_data(plan, seed=[33, 0])
    obs = data[0]
    tiny = replace(obs, records=obs.records[:2])
    diffs = []
    for seed in range(20):
        cfg = SMCConfig(
            n_particles=10_000,
            ess_threshold=0.8,
            rejuvenation_sweeps=2,
            seed=[33, seed, 1],
        )
        p_smc = posterior_summary(smc_infer([tiny], cfg))["p_edge"]
        p_is = is_oracle([tiny], 100_000, seed=[33, seed, 2])["p_edge"]
        diffs.append(p_smc - p_is)
    mean_diff = float(np.mean(diffs))
    report(
        3,
        "oracle equivalence",
        abs(mean_diff) < 0.05,
        f"mean(P_SMC - P_IS) over 20 seeds = {mean_diff:+.4f} "
        f"(mean |diff| {float(np.mean(np.abs(diffs))):.4f}, tolerance 0.05)",
    )


def _edge_true_lambda_mean(summary: dict) -> float | None:
    samples = summary["lambda_bo_samples"]
    if not samples:
        return None
    return float(sum(v * w for v, w in samples))


def test_criterion_4_qualitative_replication():
    plan = default_plan()  # N=10 per condition, skill latent
    reps = 50
    edge_wins = 0
    lambda_wins = 0
    details = []
    for rep in range(reps):
        data = generate_data(plan, seed=[44, rep, 0])
        by_name = {c.name: c for c in data}
        cfg = SMCConfig(
            n_particles=400,
            ess_threshold=0.5,
            rejuvenation_sweeps=2,
            seed=[44, rep, 1],
        )
        obs_summary = posterior_summary(smc_infer([by_name["observational"]], cfg))
        full_conds = [by_name[c.name] for c in plan.conditions]
        full_summary = posterior_summary(
            smc_infer(full_conds, replace(cfg, seed=[44, rep, 2]))
        )
        p_obs, p_full = obs_summary["p_edge"], full_summary["p_edge"]
        edge_wins += p_full > p_obs
        lam_obs = _edge_true_lambda_mean(obs_summary)
        lam_full = _edge_true_lambda_mean(full_summary)
        err_obs = math.inf if lam_obs is None else abs(lam_obs - 0.717)
        err_full = math.inf if lam_full is None else abs(lam_full - 0.717)
        lambda_wins += err_full < err_obs
        details.append((p_obs, p_full))
    edge_rate = edge_wins / reps
    lambda_rate = lambda_wins / reps
    mean_obs = float(np.mean([d[0] for d in details]))
    mean_full = float(np.mean([d[1] for d in details]))
    report(
        4,
        "qualitative evidence-ladder replication",
        edge_rate >= 0.8 and lambda_rate >= 0.7,
        f"P(edge) rises obs->full in {edge_wins}/{reps} reps "
        f"(mean {mean_obs:.3f} -> {mean_full:.3f}); "
        f"lambda_bo closer to 0.717 under full evidence in {lambda_wins}/{reps} reps",
    )


def test_criterion_6_reproducibility(tmp_path, capsys):
    config = {
        "conditions": [
            {"name": "observational", "intervention": None, "n": 6},
            {
                "name": "belief_pill",
                "intervention": {"kind": "do", "var": "b", "value": 5},
                "n": 6,
            },
            {
                "name": "encouragement",
                "intervention": {"kind": "shift", "var": "b", "delta": 3},
                "n": 6,
            },
            {
                "name": "assessment",
                "intervention": {
                    "kind": "compose",
                    "first": {"kind": "shift", "var": "s", "delta": 2},
                    "then": {"kind": "variance_scale", "var": "b", "factor": 0.01},
                },
                "n": 6,
            },
        ],
        "evidence_ladder": [
            ["observational"],
            ["observational", "belief_pill", "encouragement", "assessment"],
        ],
        "smc": {"n_particles": 300, "rejuvenation_sweeps": 2},
    }
    cfg_path = tmp_path / "plan.json"
    cfg_path.write_text(json.dumps(config))
    dirs = [tmp_path / "run1", tmp_path / "run2"]
    for d in dirs:
        rc = cli_main(
            ["replicate", "--config", str(cfg_path), "--out", str(d), "--seed", "7"]
        )
        capsys.readouterr()
        assert rc == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    same_listing = names == sorted(p.name for p in dirs[1].iterdir())
    identical = same_listing and all(
        (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names
    )
    report(
        6,
        "reproducibility",
        identical,
        f"two `replicate --seed 7` runs produced byte-identical directories "
        f"({len(names)} files)",
    )
