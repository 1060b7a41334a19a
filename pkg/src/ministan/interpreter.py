"""Two semantics for MiniStan programs: forward simulation and trace scoring.

``simulate`` runs a program top to bottom, drawing each ``~`` statement and
recording its log density at the drawn value.  ``log_density`` scores a full
variable assignment under the program, recomputing deterministic assignments
rather than trusting supplied values, so a program doubles as a likelihood
function over (possibly intervened) data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ministan.dsl import (
    Assign,
    Bernoulli,
    BinOp,
    Dist,
    Exp,
    Expr,
    Neg,
    Normal,
    NumLit,
    Program,
    Sample,
    Uniform,
    VarRef,
)
from ministan.errors import MiniStanError

_LOG_2PI = math.log(2.0 * math.pi)


class UnboundVariable(MiniStanError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable {name!r}")
        self.name = name


class InvalidParameter(MiniStanError):
    """A distribution parameter evaluated outside its domain (or non-finite)."""

    def __init__(self, stmt_index: int, reason: str):
        super().__init__(f"statement {stmt_index}: {reason}")
        self.stmt_index = stmt_index
        self.reason = reason


class MissingVariable(MiniStanError):
    def __init__(self, name: str):
        super().__init__(f"no value supplied for sampled variable {name!r}")
        self.name = name


class OverlappingAssignment(MiniStanError):
    def __init__(self, name: str):
        super().__init__(f"variable {name!r} bound by both observations and latents")
        self.name = name


@dataclass
class Trace:
    """Result of one forward run: every variable's value in program order,
    plus the log-density contribution of each sampled variable."""

    bindings: dict[str, float]
    logp_by_var: dict[str, float]

    def total_log_density(self) -> float:
        return sum(self.logp_by_var.values())


@dataclass(frozen=True)
class Observation:
    """The observed subset of a trace: variable name -> recorded value."""

    values: Mapping[str, float]


def as_rng(seed) -> np.random.Generator:
    """Accept a Generator, SeedSequence, int, or sequence of ints."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# Expression evaluation (scalar)
# ---------------------------------------------------------------------------

def eval_expr(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate with IEEE semantics: x/0 is +-inf, 0/0 is nan, exp overflow
    saturates to inf."""
    if isinstance(e, NumLit):
        return e.value
    if isinstance(e, VarRef):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, BinOp):
        a = eval_expr(e.lhs, env)
        b = eval_expr(e.rhs, env)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if b == 0.0:
            if a == 0.0 or math.isnan(a):
                return math.nan
            sign = math.copysign(1.0, a) * math.copysign(1.0, b)
            return math.copysign(math.inf, sign)
        return a / b
    if isinstance(e, Neg):
        return -eval_expr(e.operand, env)
    # Exp
    try:
        return math.exp(eval_expr(e.operand, env))
    except OverflowError:
        return math.inf


# ---------------------------------------------------------------------------
# Closed-form log densities
# ---------------------------------------------------------------------------

def normal_logpdf(x: float, mean: float, std: float) -> float:
    z = (x - mean) / std
    return -0.5 * _LOG_2PI - math.log(std) - 0.5 * z * z


def uniform_logpdf(x: float, lo: float, hi: float) -> float:
    if lo <= x <= hi:
        return -math.log(hi - lo)
    return -math.inf


def bernoulli_logpmf(x: float, prob: float) -> float:
    if x == 1.0:
        return math.log(prob) if prob > 0.0 else -math.inf
    if x == 0.0:
        return math.log1p(-prob) if prob < 1.0 else -math.inf
    return -math.inf


def _check_params(dist: Dist, params: tuple[float, ...], idx: int) -> None:
    if not all(math.isfinite(v) for v in params):
        raise InvalidParameter(idx, f"non-finite parameter {params}")
    if isinstance(dist, Normal) and params[1] <= 0.0:
        raise InvalidParameter(idx, f"normal std must be > 0, got {params[1]}")
    if isinstance(dist, Uniform) and params[1] <= params[0]:
        raise InvalidParameter(idx, f"uniform needs hi > lo, got {params}")
    if isinstance(dist, Bernoulli) and not 0.0 <= params[0] <= 1.0:
        raise InvalidParameter(idx, f"bernoulli prob must be in [0, 1], got {params[0]}")


def _eval_params(dist: Dist, env: Mapping[str, float], idx: int) -> tuple[float, ...]:
    if isinstance(dist, Normal):
        params = (eval_expr(dist.mean, env), eval_expr(dist.std, env))
    elif isinstance(dist, Uniform):
        params = (eval_expr(dist.lo, env), eval_expr(dist.hi, env))
    else:
        params = (eval_expr(dist.prob, env),)
    _check_params(dist, params, idx)
    return params


def _dist_logpdf(dist: Dist, x: float, params: tuple[float, ...]) -> float:
    if isinstance(dist, Normal):
        return normal_logpdf(x, *params)
    if isinstance(dist, Uniform):
        return uniform_logpdf(x, *params)
    return bernoulli_logpmf(x, params[0])


# ---------------------------------------------------------------------------
# Forward simulation
# ---------------------------------------------------------------------------

def simulate(p: Program, seed) -> Trace:
    """Run the program once.  Deterministic given the seed/generator state."""
    rng = as_rng(seed)
    env: dict[str, float] = {}
    logp: dict[str, float] = {}
    for idx, st in enumerate(p.stmts):
        if isinstance(st, Assign):
            env[st.var] = eval_expr(st.value, env)
            continue
        dist = st.dist
        params = _eval_params(dist, env, idx)
        if isinstance(dist, Normal):
            value = rng.normal(params[0], params[1])
        elif isinstance(dist, Uniform):
            value = float(rng.uniform(params[0], params[1]))
        else:
            value = 1.0 if rng.random() < params[0] else 0.0
        env[st.var] = value
        logp[st.var] = _dist_logpdf(dist, value, params)
    return Trace(env, logp)


def simulate_conditioned(
    p: Program, given: Mapping[str, float], seed
) -> tuple[Trace, float]:
    """Ancestral simulation with some sampled variables clamped.

    Statements run in order; a sampled variable present in ``given`` is
    bound to its supplied value and scored instead of drawn (values given
    for assigned variables are ignored and recomputed).  Returns the trace
    and the summed log density of the clamped variables only, i.e. the
    likelihood-weighting importance weight for the draw of the rest.

    A clamped value out of support makes the weight -inf; the remaining
    unclamped variables are then left as nan rather than drawn, since no
    draw can rescue a dead record.
    """
    rng = as_rng(seed)
    env: dict[str, float] = {}
    logp: dict[str, float] = {}
    weight = 0.0
    for idx, st in enumerate(p.stmts):
        if isinstance(st, Assign):
            env[st.var] = eval_expr(st.value, env)
            continue
        dist = st.dist
        if weight == -math.inf:
            env[st.var] = given[st.var] if st.var in given else math.nan
            logp[st.var] = -math.inf
            continue
        params = _eval_params(dist, env, idx)
        if st.var in given:
            value = given[st.var]
            lp = _dist_logpdf(dist, value, params)
            weight += lp
        elif isinstance(dist, Normal):
            value = rng.normal(params[0], params[1])
            lp = _dist_logpdf(dist, value, params)
        elif isinstance(dist, Uniform):
            value = float(rng.uniform(params[0], params[1]))
            lp = _dist_logpdf(dist, value, params)
        else:
            value = 1.0 if rng.random() < params[0] else 0.0
            lp = _dist_logpdf(dist, value, params)
        env[st.var] = value
        logp[st.var] = lp
    return Trace(env, logp), weight


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def sample_vars(p: Program) -> list[str]:
    """Names defined by ``~`` statements, in program order."""
    return [st.var for st in p.stmts if isinstance(st, Sample)]


def log_density(p: Program, full: Mapping[str, float]) -> float:
    """Joint log density of a full assignment to the program's sampled
    variables.

    Deterministic assignments are recomputed from the sampled ancestors;
    values supplied for them (or for names the program does not sample) are
    ignored.  Out-of-support values contribute -inf; parameters evaluating
    outside their domain raise InvalidParameter.
    """
    total = 0.0
    env: dict[str, float] = {}
    for idx, st in enumerate(p.stmts):
        if isinstance(st, Assign):
            env[st.var] = eval_expr(st.value, env)
            continue
        if st.var not in full:
            raise MissingVariable(st.var)
        value = full[st.var]
        # Once the joint is already zero the record is impossible; later
        # conditionals are moot, so skip their parameter checks.
        if total > -math.inf:
            params = _eval_params(st.dist, env, idx)
            total += _dist_logpdf(st.dist, value, params)
        env[st.var] = value
    return total


def log_joint_with_latents(
    p: Program,
    obs: Observation | Mapping[str, float],
    latents: Mapping[str, float],
) -> float:
    """Score a record whose sampled variables are split between an observed
    part and a latent part.  The two maps must not share keys."""
    obs_values = obs.values if isinstance(obs, Observation) else obs
    overlap = set(obs_values) & set(latents)
    if overlap:
        raise OverlappingAssignment(min(overlap))
    merged = dict(obs_values)
    merged.update(latents)
    return log_density(p, merged)


# ---------------------------------------------------------------------------
# Batch scoring (one program, many records)
# ---------------------------------------------------------------------------

def log_density_cols(p: Program, cols: Mapping[str, np.ndarray]) -> np.ndarray:
    """Vectorized ``log_density``: score many records at once.

    ``cols`` supplies one equal-length array per sampled variable; the
    return value is the per-record total log density.  Agrees with the
    scalar path row by row (up to last-ulp libm differences).
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        env: dict[str, np.ndarray | float] = {}
        total: np.ndarray | None = None
        alive: np.ndarray | None = None  # rows whose joint is still nonzero
        for idx, st in enumerate(p.stmts):
            if isinstance(st, Assign):
                env[st.var] = _eval_cols(st.value, env)
                continue
            if st.var not in cols:
                raise MissingVariable(st.var)
            x = np.asarray(cols[st.var], dtype=float)
            if total is None:
                total = np.zeros(x.shape)
                alive = np.ones(x.shape, dtype=bool)
            dist = st.dist
            if isinstance(dist, Normal):
                mean = _eval_cols(dist.mean, env)
                std = _eval_cols(dist.std, env)
                _check_params_cols(dist, (mean, std), idx, alive)
                z = (x - mean) / std
                term = -0.5 * _LOG_2PI - np.log(std) - 0.5 * z * z
            elif isinstance(dist, Uniform):
                lo = _eval_cols(dist.lo, env)
                hi = _eval_cols(dist.hi, env)
                _check_params_cols(dist, (lo, hi), idx, alive)
                term = np.where((x >= lo) & (x <= hi), -np.log(hi - lo), -np.inf)
            else:
                prob = _eval_cols(dist.prob, env)
                _check_params_cols(dist, (prob,), idx, alive)
                term = np.where(
                    x == 1.0,
                    np.log(prob),
                    np.where(x == 0.0, np.log1p(-prob), -np.inf),
                )
            total = np.where(alive, total + term, -np.inf)
            alive = alive & (term > -np.inf)
            env[st.var] = x
        if total is None:
            raise ValueError("program has no sampled variables to score")
        return np.asarray(total, dtype=float)


def _eval_cols(e: Expr, env: Mapping[str, np.ndarray | float]):
    if isinstance(e, NumLit):
        return e.value
    if isinstance(e, VarRef):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, BinOp):
        a = _eval_cols(e.lhs, env)
        b = _eval_cols(e.rhs, env)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        return np.divide(a, b)
    if isinstance(e, Neg):
        return -_eval_cols(e.operand, env)
    return np.exp(_eval_cols(e.operand, env))


def _check_params_cols(dist: Dist, params: tuple, idx: int, alive: np.ndarray) -> None:
    """Raise InvalidParameter if any still-possible row sees a bad parameter."""

    def bad(mask) -> bool:
        if isinstance(mask, (bool, np.bool_)):
            return bool(mask) and bool(alive.any())
        return bool(np.any(mask & alive))

    for v in params:
        if isinstance(v, float):
            if not math.isfinite(v) and alive.any():
                raise InvalidParameter(idx, "non-finite parameter")
        elif bad(~np.isfinite(v)):
            raise InvalidParameter(idx, "non-finite parameter")
    if isinstance(dist, Normal) and bad(params[1] <= 0.0):
        raise InvalidParameter(idx, "normal std must be > 0")
    if isinstance(dist, Uniform) and bad(params[1] <= params[0]):
        raise InvalidParameter(idx, "uniform needs hi > lo")
    if isinstance(dist, Bernoulli):
        prob = params[0]
        if bad((prob < 0.0) | (prob > 1.0)):
            raise InvalidParameter(idx, "bernoulli prob must be in [0, 1]")
