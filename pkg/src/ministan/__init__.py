"""Causal structure and parameter inference over MiniStan programs.

Priors are program generators, interventions are source-to-source rewrites,
likelihoods come from interpreting (possibly rewritten) programs, and
posterior inference is sequential Monte Carlo with Metropolis-Hastings
rejuvenation.
"""
from ministan.errors import MiniStanError
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
    Uniform,
    VarRef,
    free_check,
    parse_program,
    print_program,
)

__all__ = [
    "MiniStanError",
    "Assign",
    "Bernoulli",
    "BinOp",
    "Exp",
    "Neg",
    "Normal",
    "NumLit",
    "Program",
    "Sample",
    "Uniform",
    "VarRef",
    "free_check",
    "parse_program",
    "print_program",
]
