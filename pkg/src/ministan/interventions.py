"""Structure-preserving rewrites of program ASTs representing experiments.

Three primitives plus composition:

* ``Do(var, value)`` clamps a variable, replacing its defining statement
  (sampled or assigned) with ``var = value`` and severing dependence on its
  causes.
* ``Shift(var, delta)`` translates a location: the mean of a normal, both
  endpoints of a uniform, or the value of a deterministic assignment.
* ``VarianceScale(var, factor)`` rescales a normal's spread, expressed
  textually as a divisor on the std argument (``factor=1/100`` rewrites
  ``sigma`` to ``sigma / 100``).

Each rewrite touches only the statement defining its target variable;
statement count and order never change, and inputs are never mutated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ministan.dsl import (
    Assign,
    Bernoulli,
    BinOp,
    Normal,
    NumLit,
    Program,
    Sample,
    Stmt,
    Uniform,
)
from ministan.errors import MiniStanError


class NoSuchVariable(MiniStanError):
    def __init__(self, var: str):
        super().__init__(f"no statement defines variable {var!r}")
        self.var = var


class UnsupportedIntervention(MiniStanError):
    def __init__(self, var: str, reason: str):
        super().__init__(f"cannot intervene on {var!r}: {reason}")
        self.var = var
        self.reason = reason


class InvalidFactor(MiniStanError):
    def __init__(self, factor: float):
        super().__init__(f"variance factor must be positive and finite, got {factor}")
        self.factor = factor


@dataclass(frozen=True, slots=True)
class Do:
    var: str
    value: float


@dataclass(frozen=True, slots=True)
class Shift:
    var: str
    delta: float


@dataclass(frozen=True, slots=True)
class VarianceScale:
    var: str
    factor: float


@dataclass(frozen=True, slots=True)
class Compose:
    first: "Intervention"
    then: "Intervention"


Intervention = Do | Shift | VarianceScale | Compose


def _defining_index(p: Program, var: str, strict: bool) -> int | None:
    for i, st in enumerate(p.stmts):
        if st.var == var:
            return i
    if strict:
        raise NoSuchVariable(var)
    return None


def _replace(p: Program, i: int, st: Stmt) -> Program:
    stmts = list(p.stmts)
    stmts[i] = st
    return Program(tuple(stmts))


def apply_do(p: Program, var: str, value: float, *, strict: bool = True) -> Program:
    """Clamp ``var`` to a constant; with ``strict=False`` a missing target
    is a no-op instead of an error."""
    i = _defining_index(p, var, strict)
    if i is None:
        return p
    return _replace(p, i, Assign(var, NumLit(float(value))))


def apply_shift(p: Program, var: str, delta: float, *, strict: bool = True) -> Program:
    """Add ``delta`` to the location of ``var``'s defining statement."""
    i = _defining_index(p, var, strict)
    if i is None:
        return p
    st = p.stmts[i]
    d = NumLit(float(delta))
    if isinstance(st, Assign):
        return _replace(p, i, Assign(var, BinOp("+", st.value, d)))
    dist = st.dist
    if isinstance(dist, Normal):
        return _replace(p, i, Sample(var, Normal(BinOp("+", dist.mean, d), dist.std)))
    if isinstance(dist, Uniform):
        shifted = Uniform(BinOp("+", dist.lo, d), BinOp("+", dist.hi, d))
        return _replace(p, i, Sample(var, shifted))
    raise UnsupportedIntervention(var, "shift on bernoulli")


def apply_variance_scale(
    p: Program, var: str, factor: float, *, strict: bool = True
) -> Program:
    """Scale the variance of a normally distributed variable by ``factor``,
    emitted as a std divisor: the std argument becomes ``std / (1/factor)``."""
    if not (factor > 0.0 and math.isfinite(factor)):
        raise InvalidFactor(factor)
    i = _defining_index(p, var, strict)
    if i is None:
        return p
    st = p.stmts[i]
    if not (isinstance(st, Sample) and isinstance(st.dist, Normal)):
        raise UnsupportedIntervention(var, "variance scaling on a non-normal target")
    dist = st.dist
    divisor = NumLit(1.0 / factor)
    return _replace(p, i, Sample(var, Normal(dist.mean, BinOp("/", dist.std, divisor))))


def apply_intervention(p: Program, i: Intervention, *, strict: bool = True) -> Program:
    """Dispatch to the primitives; Compose applies ``first`` then ``then``."""
    if isinstance(i, Do):
        return apply_do(p, i.var, i.value, strict=strict)
    if isinstance(i, Shift):
        return apply_shift(p, i.var, i.delta, strict=strict)
    if isinstance(i, VarianceScale):
        return apply_variance_scale(p, i.var, i.factor, strict=strict)
    return apply_intervention(
        apply_intervention(p, i.first, strict=strict), i.then, strict=strict
    )


# ---------------------------------------------------------------------------
# JSON descriptors (used in dataset condition tags)
# ---------------------------------------------------------------------------

def intervention_to_dict(i: Intervention) -> dict:
    if isinstance(i, Do):
        return {"kind": "do", "var": i.var, "value": i.value}
    if isinstance(i, Shift):
        return {"kind": "shift", "var": i.var, "delta": i.delta}
    if isinstance(i, VarianceScale):
        return {"kind": "variance_scale", "var": i.var, "factor": i.factor}
    return {
        "kind": "compose",
        "first": intervention_to_dict(i.first),
        "then": intervention_to_dict(i.then),
    }


def intervention_from_dict(d: dict) -> Intervention:
    kind = d.get("kind")
    if kind == "do":
        return Do(d["var"], float(d["value"]))
    if kind == "shift":
        return Shift(d["var"], float(d["delta"]))
    if kind == "variance_scale":
        return VarianceScale(d["var"], float(d["factor"]))
    if kind == "compose":
        return Compose(intervention_from_dict(d["first"]), intervention_from_dict(d["then"]))
    raise ValueError(f"unknown intervention kind: {kind!r}")
