"""Program-generating prior over the skill/belief/outcome model family.

A draw of global parameters picks a location and spread for skill, a spread
for belief, edge weights, and a coin flip for whether belief influences
outcome; rendering bakes those numbers into a four-statement MiniStan
program.  The belief->outcome weight is always instantiated, even when the
edge indicator is off, so the parameter space stays fixed-dimensional and
edge flips are ordinary within-model moves (the weight simply has no effect
on the likelihood, and the factorized prior leaves the marginal posterior
unchanged).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ministan.dsl import (
    Assign,
    Bernoulli,
    BinOp,
    Exp,
    Neg,
    Normal,
    NumLit,
    Program,
    Sample,
    VarRef,
)
from ministan.interpreter import as_rng

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_HALF = math.log(0.5)

THETA_COMPONENTS = ("mu_s", "sigma_s", "sigma_b", "lambda_so", "lambda_bo")


@dataclass(frozen=True, slots=True)
class GlobalTheta:
    """Latent structure/parameter vector behind one causal hypothesis."""

    mu_s: float
    sigma_s: float
    sigma_b: float
    lambda_so: float
    lambda_bo: float
    edge: bool


def sample_theta(seed) -> GlobalTheta:
    """mu_s ~ Normal(0,1); the two sigmas and two weights ~ Uniform(0,1);
    edge ~ Bernoulli(0.5).  Deterministic given the seed/generator."""
    rng = as_rng(seed)

    def positive_uniform() -> float:
        v = float(rng.uniform(0.0, 1.0))
        while v == 0.0:  # measure-zero guard: sigma must stay strictly positive
            v = float(rng.uniform(0.0, 1.0))
        return v

    mu_s = float(rng.normal(0.0, 1.0))
    sigma_s = positive_uniform()
    sigma_b = positive_uniform()
    lambda_so = float(rng.uniform(0.0, 1.0))
    lambda_bo = float(rng.uniform(0.0, 1.0))
    edge = bool(rng.random() < 0.5)
    return GlobalTheta(mu_s, sigma_s, sigma_b, lambda_so, lambda_bo, edge)


def log_prior(theta: GlobalTheta) -> float:
    """Log density of the factorized prior; -inf outside support.

    The sigmas must lie strictly inside (0, 1); the weights may touch the
    endpoints of [0, 1].
    """
    if not (0.0 < theta.sigma_s < 1.0 and 0.0 < theta.sigma_b < 1.0):
        return -math.inf
    if not (0.0 <= theta.lambda_so <= 1.0 and 0.0 <= theta.lambda_bo <= 1.0):
        return -math.inf
    return -0.5 * _LOG_2PI - 0.5 * theta.mu_s * theta.mu_s + _LOG_HALF


# constant subtrees shared across renders (ASTs are immutable)
_S = VarRef("s")
_B = VarRef("b")
_SIGMOID = BinOp("/", NumLit(1.0), BinOp("+", NumLit(1.0), Exp(Neg(VarRef("logit_o")))))
_OUTCOME = Sample("o", Bernoulli(_SIGMOID))


def render_program(theta: GlobalTheta) -> Program:
    """Emit the four-statement observational program with theta's values
    as numeric literals."""
    if theta.edge:
        logit = BinOp(
            "+",
            BinOp("*", _S, NumLit(theta.lambda_so)),
            BinOp("*", _B, NumLit(theta.lambda_bo)),
        )
    else:
        logit = BinOp("*", _S, NumLit(theta.lambda_so))
    return Program(
        (
            Sample("s", Normal(NumLit(theta.mu_s), NumLit(theta.sigma_s))),
            Sample("b", Normal(_S, NumLit(theta.sigma_b))),
            Assign("logit_o", logit),
            _OUTCOME,
        )
    )


def theta_to_dict(theta: GlobalTheta) -> dict:
    return {
        "mu_s": theta.mu_s,
        "sigma_s": theta.sigma_s,
        "sigma_b": theta.sigma_b,
        "lambda_so": theta.lambda_so,
        "lambda_bo": theta.lambda_bo,
        "edge": theta.edge,
    }


def theta_from_dict(d: dict) -> GlobalTheta:
    return GlobalTheta(
        mu_s=float(d["mu_s"]),
        sigma_s=float(d["sigma_s"]),
        sigma_b=float(d["sigma_b"]),
        lambda_so=float(d["lambda_so"]),
        lambda_bo=float(d["lambda_bo"]),
        edge=bool(d["edge"]),
    )
