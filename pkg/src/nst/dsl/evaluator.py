"""Expression evaluation against an environment.

The environment maps names to values: the state variables, ``t``, and
every parameter.  Values may be floats, numpy arrays (vectorized over
paths), or :class:`~nst.dual.Dual` numbers; the arithmetic helpers in
:mod:`nst.dual` dispatch appropriately, so the same tree drives plain
simulation and derivative propagation.

Totality: with the sqrt/log clamps and division-by-zero mapped to
+/-inf, finite inputs never evaluate to NaN.  Infinities are legitimate
outputs here; the simulation's divergence guard deals with them.
"""

from __future__ import annotations

from typing import Any, Callable, Mapping

from .. import dual as dn
from .nodes import Binary, Call, Const, Expr, Param, StateVar, TimeVar, Unary


class UnboundSymbolError(KeyError):
    """An expression referenced a name missing from the environment.

    This is a programming error at the call site, not a model defect:
    validation catches undeclared symbols before evaluation is attempted.
    """

    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"no value bound for symbol {self.name!r}"


_BINARY_OPS: dict[str, Callable[[Any, Any], Any]] = {
    "+": dn.add,
    "-": dn.subtract,
    "*": dn.multiply,
    "/": dn.divide,
    "^": dn.power,
}

_FUNCTIONS: dict[str, Callable[..., Any]] = {
    "sqrt": dn.sqrt,
    "exp": dn.exp,
    "log": dn.log,
    "sin": dn.sin,
    "cos": dn.cos,
    "tanh": dn.tanh,
    "abs": dn.absolute,
    "max": dn.maximum,
    "min": dn.minimum,
}


def eval_expr(expr: Expr, env: Mapping[str, Any]) -> Any:
    """Evaluate ``expr`` pointwise in ``env``.

    Scalars in, scalar out; arrays or Duals in, arrays or Duals out.
    """
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, (Param, StateVar)):
        try:
            return env[expr.name]
        except KeyError:
            raise UnboundSymbolError(expr.name) from None
    if isinstance(expr, TimeVar):
        try:
            return env["t"]
        except KeyError:
            raise UnboundSymbolError("t") from None
    if isinstance(expr, Unary):
        return dn.negative(eval_expr(expr.operand, env))
    if isinstance(expr, Binary):
        return _BINARY_OPS[expr.op](
            eval_expr(expr.left, env), eval_expr(expr.right, env)
        )
    if isinstance(expr, Call):
        args = [eval_expr(a, env) for a in expr.args]
        return _FUNCTIONS[expr.func](*args)
    raise TypeError(f"not an expression node: {expr!r}")
