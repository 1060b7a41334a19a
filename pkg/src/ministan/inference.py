"""Posterior inference over (GlobalTheta, per-individual latents).

``smc_infer`` incorporates records one at a time in condition order: each
particle extends itself by ancestral simulation of the unobserved variables
(observed ones clamped), picking up the observed variables' log densities
as the incremental weight (likelihood weighting).  When the effective
sample size degrades past the configured fraction the particles are
systematically resampled and refreshed with Metropolis-Hastings sweeps:
component-wise Gaussian random walks on the global parameters (reflected
at the unit-interval boundaries), a deterministic edge flip accepted by
the likelihood ratio alone (the prior is symmetric in the indicator), and
per-record random walks on the latent variables.

``is_oracle`` is a brute-force validation route for tiny datasets:
importance sampling from the prior with self-normalized estimates.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from ministan.dsl import Bernoulli, Program, Sample
from ministan.errors import MiniStanError
from ministan.interpreter import (
    Observation,
    as_rng,
    log_density,
    log_density_cols,
    log_joint_with_latents,
    sample_vars,
    simulate_conditioned,
)
from ministan.interventions import Intervention, apply_intervention
from ministan.prior import (
    THETA_COMPONENTS,
    GlobalTheta,
    log_prior,
    render_program,
    sample_theta,
)


class DegenerateWeights(MiniStanError):
    """Every particle weight is zero: the data are impossible under the
    model's support."""


@dataclass(frozen=True)
class ConditionSpec:
    """One experimental condition: an optional rewrite of the observational
    program plus the records collected under it."""

    name: str
    intervention: Intervention | None
    observed_vars: frozenset[str]
    records: tuple[Observation, ...]

    def __post_init__(self):
        object.__setattr__(self, "observed_vars", frozenset(self.observed_vars))
        recs = tuple(
            r if isinstance(r, Observation) else Observation(dict(r))
            for r in self.records
        )
        object.__setattr__(self, "records", recs)


def _default_steps() -> dict[str, float]:
    steps = {name: 0.1 for name in THETA_COMPONENTS}
    steps["latent"] = 0.1
    return steps


@dataclass(frozen=True)
class SMCConfig:
    n_particles: int
    ess_threshold: float = 0.5
    rejuvenation_sweeps: int = 5
    rw_step_sizes: Mapping[str, float] = field(default_factory=_default_steps)
    seed: int | Sequence[int] = 0

    def validate(self) -> None:
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not 0.0 < self.ess_threshold <= 1.0:
            raise ValueError("ess_threshold must be in (0, 1]")
        if self.rejuvenation_sweeps < 0:
            raise ValueError("rejuvenation_sweeps must be >= 0")
        if any(v <= 0 for v in self.rw_step_sizes.values()):
            raise ValueError("rw_step_sizes must be positive")

    def step(self, name: str) -> float:
        return float(self.rw_step_sizes.get(name, 0.1))


@dataclass
class ParticleState:
    """One hypothesis: global parameters, per-record latent values keyed by
    (condition name, record index), and a normalized log weight."""

    theta: GlobalTheta
    latents: dict[tuple[str, int], dict[str, float]]
    log_weight: float


def condition_program(theta: GlobalTheta, cond: ConditionSpec) -> Program:
    """Render theta's observational program, then rewrite it for the
    condition's intervention (if any)."""
    p = render_program(theta)
    if cond.intervention is not None:
        p = apply_intervention(p, cond.intervention)
    return p


def particle_log_joint(p: ParticleState, conds: Sequence[ConditionSpec]) -> float:
    """log prior of theta plus the joint log density of every record given
    the particle's latents."""
    total = log_prior(p.theta)
    for cond in conds:
        prog = condition_program(p.theta, cond)
        for ri, rec in enumerate(cond.records):
            total += log_joint_with_latents(prog, rec, p.latents[(cond.name, ri)])
    return total


# ---------------------------------------------------------------------------
# Internal preparation
# ---------------------------------------------------------------------------

_STRUCT_THETA = GlobalTheta(0.0, 0.5, 0.5, 0.5, 0.5, True)


@dataclass
class _CondPrep:
    spec: ConditionSpec
    sampled: list[str]  # sampled vars of the intervened program, program order
    latent_vars: list[str]
    obs_sampled: list[str]  # observed vars that the program samples
    binary_latents: frozenset[str]
    obs_cols: dict[str, np.ndarray]  # full-length observed columns
    progs: dict[GlobalTheta, Program] = field(default_factory=dict)

    def program(self, theta: GlobalTheta) -> Program:
        # Rendering dominates the MH inner loop; resampled clones share
        # theta, so memoize per condition.
        p = self.progs.get(theta)
        if p is None:
            p = condition_program(theta, self.spec)
            if len(self.progs) > 50_000:
                self.progs.clear()
            self.progs[theta] = p
        return p


def _prepare(cond: ConditionSpec) -> _CondPrep:
    # Interventions fix which variables are sampled independently of theta,
    # so any valid theta exposes the structure.
    prog = condition_program(_STRUCT_THETA, cond)
    defined = set(prog.defined_vars())
    unknown = cond.observed_vars - defined
    if unknown:
        raise ValueError(
            f"condition {cond.name!r} observes {sorted(unknown)} "
            "which the intervened program does not define"
        )
    for ri, rec in enumerate(cond.records):
        if set(rec.values) != cond.observed_vars:
            raise ValueError(
                f"condition {cond.name!r} record {ri} does not bind exactly "
                f"the observed variables {sorted(cond.observed_vars)}"
            )
    sampled = sample_vars(prog)
    latent_vars = [v for v in sampled if v not in cond.observed_vars]
    obs_sampled = [v for v in sampled if v in cond.observed_vars]
    binary = frozenset(
        st.var
        for st in prog.stmts
        if isinstance(st, Sample) and isinstance(st.dist, Bernoulli)
    )
    obs_cols = {
        v: np.array([rec.values[v] for rec in cond.records], dtype=float)
        for v in obs_sampled
    }
    return _CondPrep(cond, sampled, latent_vars, obs_sampled, binary & set(latent_vars), obs_cols)


def _latent_cols(
    pt: ParticleState, prep: _CondPrep, k: int
) -> dict[str, np.ndarray]:
    name = prep.spec.name
    return {
        v: np.array([pt.latents[(name, ri)][v] for ri in range(k)])
        for v in prep.latent_vars
    }


# Below this many records a plain per-record loop beats numpy's call overhead.
_BATCH_MIN_RECORDS = 8


def _incorporated_loglik(
    theta: GlobalTheta,
    pt: ParticleState,
    preps: Sequence[_CondPrep],
    counts: Sequence[int],
) -> float:
    """Joint log density of all incorporated records under theta, using the
    particle's current latents.  Excludes the theta prior."""
    total = 0.0
    for prep, k in zip(preps, counts):
        if k == 0 or not prep.sampled:
            continue
        prog = prep.program(theta)
        name = prep.spec.name
        if k < _BATCH_MIN_RECORDS:
            for ri in range(k):
                merged = dict(prep.spec.records[ri].values)
                merged.update(pt.latents[(name, ri)])
                total += log_density(prog, merged)
                if total == -math.inf:
                    return total
        else:
            cols = {v: prep.obs_cols[v][:k] for v in prep.obs_sampled}
            cols.update(_latent_cols(pt, prep, k))
            total += float(np.sum(log_density_cols(prog, cols)))
    return total


# ---------------------------------------------------------------------------
# Metropolis-Hastings rejuvenation
# ---------------------------------------------------------------------------

def _reflect01(x: float) -> float:
    """Fold into [0, 1] by reflection; keeps a random-walk proposal symmetric."""
    x = math.fmod(x, 2.0)
    if x < 0.0:
        x += 2.0
    return 2.0 - x if x > 1.0 else x


def _edge_flip_log_acceptance(
    pt: ParticleState, preps: Sequence[_CondPrep], counts: Sequence[int]
) -> float:
    """The edge indicator's prior is symmetric, so the MH log acceptance is
    exactly the incorporated log-likelihood difference."""
    flipped = replace(pt.theta, edge=not pt.theta.edge)
    return _incorporated_loglik(flipped, pt, preps, counts) - _incorporated_loglik(
        pt.theta, pt, preps, counts
    )


def _mh_sweep(
    pt: ParticleState,
    preps: Sequence[_CondPrep],
    counts: Sequence[int],
    cfg: SMCConfig,
    rng: np.random.Generator,
) -> None:
    theta = pt.theta
    lp = log_prior(theta)
    lik = _incorporated_loglik(theta, pt, preps, counts)

    # (a) component-wise Gaussian random walks, reflected on (0, 1) supports
    for name in THETA_COMPONENTS:
        prop = getattr(theta, name) + rng.normal(0.0, cfg.step(name))
        if name != "mu_s":
            prop = _reflect01(prop)
        theta_p = replace(theta, **{name: prop})
        lp_p = log_prior(theta_p)
        if lp_p == -math.inf:
            continue
        lik_p = _incorporated_loglik(theta_p, pt, preps, counts)
        if math.log(rng.random()) < (lp_p + lik_p) - (lp + lik):
            theta, lp, lik = theta_p, lp_p, lik_p

    # (b) deterministic edge flip, accepted on the likelihood ratio alone
    theta_p = replace(theta, edge=not theta.edge)
    lik_p = _incorporated_loglik(theta_p, pt, preps, counts)
    if math.log(rng.random()) < lik_p - lik:
        theta, lik = theta_p, lik_p
    pt.theta = theta

    # (c) per-latent random walks, vectorized across a condition's records;
    # binary latents get a symmetric 0/1 flip instead (a Gaussian step off
    # the support would never be accepted)
    step_lat = cfg.step("latent")
    for prep, k in zip(preps, counts):
        if k == 0 or not prep.latent_vars:
            continue
        prog = prep.program(theta)
        name = prep.spec.name
        if k < _BATCH_MIN_RECORDS:
            for ri in range(k):
                lat = pt.latents[(name, ri)]
                merged = dict(prep.spec.records[ri].values)
                merged.update(lat)
                for v in prep.latent_vars:
                    cur = lat[v]
                    if v in prep.binary_latents:
                        prop = 1.0 - cur
                    else:
                        prop = cur + rng.normal(0.0, step_lat)
                    ll_cur = log_density(prog, merged)
                    merged[v] = prop
                    ll_prop = log_density(prog, merged)
                    if math.log(rng.random()) < ll_prop - ll_cur:
                        lat[v] = prop
                    else:
                        merged[v] = cur
            continue
        cols = {v: prep.obs_cols[v][:k] for v in prep.obs_sampled}
        lat_cols = _latent_cols(pt, prep, k)
        cols.update(lat_cols)
        for v in prep.latent_vars:
            cur = lat_cols[v]
            if v in prep.binary_latents:
                prop = 1.0 - cur
            else:
                prop = cur + rng.normal(0.0, step_lat, size=k)
            cols_prop = dict(cols)
            cols_prop[v] = prop
            ll_cur = log_density_cols(prog, cols)
            ll_prop = log_density_cols(prog, cols_prop)
            with np.errstate(invalid="ignore"):
                accept = np.log(rng.random(size=k)) < (ll_prop - ll_cur)
            new = np.where(accept, prop, cur)
            cols[v] = new
            lat_cols[v] = new
            for ri in range(k):
                pt.latents[(name, ri)][v] = float(new[ri])


def mh_rejuvenate(
    particles: Sequence[ParticleState],
    conds: Sequence[ConditionSpec],
    cfg: SMCConfig,
    seed,
    sweeps: int | None = None,
) -> None:
    """Run MH sweeps targeting prior x likelihood of the given records,
    mutating the particles in place.  With no records the target is the
    prior itself."""
    rng = as_rng(seed)
    preps = [_prepare(c) for c in conds]
    counts = [len(c.records) for c in conds]
    n = cfg.rejuvenation_sweeps if sweeps is None else sweeps
    for _ in range(n):
        for pt in particles:
            _mh_sweep(pt, preps, counts, cfg, rng)


# ---------------------------------------------------------------------------
# Sequential Monte Carlo
# ---------------------------------------------------------------------------

def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if m == -math.inf:
        return -math.inf
    return float(m + np.log(np.sum(np.exp(a - m))))


def _normalized(logw: np.ndarray) -> np.ndarray:
    return np.exp(logw - _logsumexp(logw))


def ess_of(logw: np.ndarray) -> float:
    """Effective sample size (sum w)^2 / sum w^2 of unnormalized log weights."""
    w = _normalized(logw)
    return float(1.0 / np.sum(w * w))


def _systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions)


def _clone(pt: ParticleState) -> ParticleState:
    return ParticleState(
        pt.theta, {k: dict(v) for k, v in pt.latents.items()}, pt.log_weight
    )


def _check_unique_names(conds: Sequence[ConditionSpec]) -> None:
    names = [c.name for c in conds]
    if len(set(names)) != len(names):
        raise ValueError(f"condition names must be unique, got {names}")


def smc_infer(
    conds: Sequence[ConditionSpec],
    cfg: SMCConfig,
    *,
    trace_hook: Callable[[dict], None] | None = None,
) -> list[ParticleState]:
    """Sequential Monte Carlo over (theta, latents); returns particles whose
    log weights are normalized (weights sum to 1).

    With no conditions or no records the particles are prior draws with
    uniform weights.  ``trace_hook`` receives a diagnostic dict after every
    reweighting and resampling step.
    """
    cfg.validate()
    _check_unique_names(conds)
    rng = as_rng(cfg.seed)
    preps = [_prepare(c) for c in conds]
    n = cfg.n_particles
    particles = [ParticleState(sample_theta(rng), {}, 0.0) for _ in range(n)]
    logw = np.zeros(n)
    counts = [0] * len(conds)

    for ci, cond in enumerate(conds):
        prep = preps[ci]
        for ri, rec in enumerate(cond.records):
            for i, pt in enumerate(particles):
                prog = prep.program(pt.theta)
                trace, delta = simulate_conditioned(prog, rec.values, rng)
                pt.latents[(cond.name, ri)] = {
                    v: trace.bindings[v] for v in prep.latent_vars
                }
                logw[i] += delta
            counts[ci] = ri + 1
            if np.all(logw == -math.inf):
                raise DegenerateWeights(
                    f"all particle weights vanished at condition "
                    f"{cond.name!r}, record {ri}"
                )
            ess = ess_of(logw)
            if trace_hook is not None:
                trace_hook(
                    {
                        "stage": "reweight",
                        "condition": cond.name,
                        "record": ri,
                        "ess": ess,
                        "weight_sum": float(np.sum(_normalized(logw))),
                    }
                )
            if ess < cfg.ess_threshold * n:
                idx = _systematic_resample(_normalized(logw), rng)
                particles = [_clone(particles[j]) for j in idx]
                logw = np.zeros(n)
                for _ in range(cfg.rejuvenation_sweeps):
                    for pt in particles:
                        _mh_sweep(pt, preps, counts, cfg, rng)
                if trace_hook is not None:
                    trace_hook(
                        {
                            "stage": "resample",
                            "condition": cond.name,
                            "record": ri,
                            "ess": ess_of(logw),
                        }
                    )

    log_norm = _logsumexp(logw)
    for i, pt in enumerate(particles):
        pt.log_weight = float(logw[i] - log_norm)
    return particles


# ---------------------------------------------------------------------------
# Importance-sampling oracle
# ---------------------------------------------------------------------------

def is_oracle(
    conds: Sequence[ConditionSpec], n_samples: int, seed
) -> dict[str, float]:
    """Brute-force validation: importance sampling from the prior.

    Feasible only for small record counts; returns self-normalized
    estimates of P(edge) and E[lambda_bo | data] plus the marginal
    log-likelihood estimate.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    _check_unique_names(conds)
    rng = as_rng(seed)
    progs_needed = [(c, [r.values for r in c.records]) for c in conds]
    logws = np.empty(n_samples)
    edges = np.empty(n_samples, dtype=bool)
    lambdas = np.empty(n_samples)
    for i in range(n_samples):
        theta = sample_theta(rng)
        total = 0.0
        for cond, recs in progs_needed:
            prog = condition_program(theta, cond)
            for rec in recs:
                _, delta = simulate_conditioned(prog, rec, rng)
                total += delta
        logws[i] = total
        edges[i] = theta.edge
        lambdas[i] = theta.lambda_bo
    log_norm = _logsumexp(logws)
    if log_norm == -math.inf:
        raise DegenerateWeights("every importance weight underflowed to zero")
    w = np.exp(logws - log_norm)
    return {
        "p_edge": float(np.sum(w[edges])),
        "lambda_bo_mean": float(np.sum(w * lambdas)),
        "log_marginal_likelihood": log_norm - math.log(n_samples),
    }


# ---------------------------------------------------------------------------
# Posterior summaries
# ---------------------------------------------------------------------------

def posterior_summary(particles: Sequence[ParticleState]) -> dict:
    """Weighted posterior summary of a normalized particle set.

    ``lambda_bo_samples`` holds (value, weight) pairs restricted to
    edge-true particles with weights renormalized among them; it is empty
    (and flagged degenerate) when no mass lands on the edge.
    """
    if not particles:
        raise ValueError("empty particle list")
    w = np.array([math.exp(pt.log_weight) for pt in particles])
    total = float(np.sum(w))
    if not math.isclose(total, 1.0, abs_tol=1e-6):
        raise ValueError(f"particle weights must be normalized, sum is {total}")
    edge_mask = np.array([pt.theta.edge for pt in particles])
    p_edge = float(np.sum(w[edge_mask]))
    if p_edge > 0.0:
        samples = [
            (pt.theta.lambda_bo, float(wi / p_edge))
            for pt, wi, m in zip(particles, w, edge_mask)
            if m
        ]
    else:
        samples = []
    theta_means = {
        name: float(np.sum(w * np.array([getattr(pt.theta, name) for pt in particles])))
        for name in THETA_COMPONENTS
    }
    theta_means["edge"] = p_edge
    return {
        "p_edge": p_edge,
        "lambda_bo_samples": samples,
        "lambda_bo_degenerate": p_edge == 0.0,
        "theta_means": theta_means,
    }


PARTICLE_CSV_COLUMNS = (
    "particle_id",
    "weight",
    "mu_s",
    "sigma_s",
    "sigma_b",
    "lambda_so",
    "lambda_bo",
    "edge",
)


def particles_to_csv(particles: Sequence[ParticleState], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PARTICLE_CSV_COLUMNS)
        for i, pt in enumerate(particles):
            t = pt.theta
            writer.writerow(
                [
                    i,
                    repr(math.exp(pt.log_weight)),
                    repr(t.mu_s),
                    repr(t.sigma_s),
                    repr(t.sigma_b),
                    repr(t.lambda_so),
                    repr(t.lambda_bo),
                    int(t.edge),
                ]
            )
