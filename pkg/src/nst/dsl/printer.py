"""Canonical text form for parsed models.

``parse_model(print_model(m))`` returns a model structurally equal to
``m``: declarations come first in parameter order, every binary or unary
subexpression is parenthesized so associativity is explicit, and floats
are printed with ``repr`` so they re-parse to the same bits.
"""

from __future__ import annotations

from .nodes import (
    Binary,
    Call,
    Const,
    Equation,
    Expr,
    Param,
    SdeModel,
    StateVar,
    TimeVar,
    Unary,
)


def format_expr(expr: Expr) -> str:
    if isinstance(expr, Const):
        return repr(expr.value)
    if isinstance(expr, Param) or isinstance(expr, StateVar):
        return expr.name
    if isinstance(expr, TimeVar):
        return "t"
    if isinstance(expr, Unary):
        return f"(-{format_expr(expr.operand)})"
    if isinstance(expr, Binary):
        return f"({format_expr(expr.left)}{expr.op}{format_expr(expr.right)})"
    if isinstance(expr, Call):
        args = ", ".join(format_expr(a) for a in expr.args)
        return f"{expr.func}({args})"
    raise TypeError(f"not an expression node: {expr!r}")


def _format_equation(eq: Equation, single_equation_model: bool) -> str:
    parts = [f"d{eq.state} = {format_expr(eq.drift)} dt"]
    if eq.diffusion is not None:
        # A lone driver-1 equation prints the idiomatic bare "dW".
        suffix = "dW" if (single_equation_model and eq.driver == 1) else f"dW{eq.driver}"
        parts.append(f"+ {format_expr(eq.diffusion)} {suffix}")
    if eq.jump is not None:
        jump = eq.jump
        args = ", ".join(
            format_expr(e) for e in (jump.intensity, jump.mean, jump.std)
        )
        parts.append(f"+ jump({args})")
    return " ".join(parts)


def print_model(model: SdeModel) -> str:
    """Render a model to canonical text (trailing newline included)."""
    lines = [f"param {p.name} = {p.value!r}" for p in model.params]
    single = len(model.equations) == 1
    lines.extend(_format_equation(eq, single) for eq in model.equations)
    return "\n".join(lines) + "\n"
