"""Shared hypothesis strategies for MiniStan ASTs."""
import hypothesis.strategies as st

from ministan import dsl

finite_floats = st.floats(allow_nan=False, allow_infinity=False)

_VAR_POOL = ["a", "b", "c", "d", "e", "f", "g", "h"]


def exprs(var_names: list[str]):
    """Expression trees over the given in-scope variables.

    Never produces Neg(NumLit): the parser folds a negated literal into a
    negative literal, so that shape is not canonical.
    """
    leaves = [st.builds(dsl.NumLit, finite_floats)]
    if var_names:
        leaves.append(st.builds(dsl.VarRef, st.sampled_from(var_names)))

    def extend(children):
        non_literal = children.filter(lambda e: not isinstance(e, dsl.NumLit))
        return st.one_of(
            st.builds(dsl.BinOp, st.sampled_from("+-*/"), children, children),
            st.builds(dsl.Neg, non_literal),
            st.builds(dsl.Exp, children),
        )

    return st.recursive(st.one_of(*leaves), extend, max_leaves=8)


@st.composite
def programs(draw) -> dsl.Program:
    """Well-scoped programs: each statement defines a fresh variable and
    only references earlier ones."""
    n = draw(st.integers(min_value=1, max_value=6))
    stmts = []
    defined: list[str] = []
    for i in range(n):
        var = _VAR_POOL[i]
        es = exprs(defined)
        if draw(st.booleans()):
            stmts.append(dsl.Assign(var, draw(es)))
        else:
            kind = draw(st.sampled_from(["normal", "uniform", "bernoulli"]))
            if kind == "normal":
                dist = dsl.Normal(draw(es), draw(es))
            elif kind == "uniform":
                dist = dsl.Uniform(draw(es), draw(es))
            else:
                dist = dsl.Bernoulli(draw(es))
            stmts.append(dsl.Sample(var, dist))
        defined.append(var)
    return dsl.Program(tuple(stmts))
