"""Textual language for one- and two-equation SDE models."""

from .evaluator import UnboundSymbolError, eval_expr
from .nodes import (
    ALLOWED_FUNCTIONS,
    DEFAULT_PARAM_VALUE,
    PARAM_BUDGET,
    RESERVED_WORDS,
    Binary,
    Call,
    Const,
    Equation,
    Expr,
    JumpSpec,
    Param,
    ParamDecl,
    SdeModel,
    StateVar,
    TimeVar,
    Unary,
)
from .parser import ParseError, parse_model
from .printer import format_expr, print_model
from .validator import (
    Issue,
    ModelValidationError,
    ValidationReport,
    require_valid,
    validate_model,
)

__all__ = [
    "ALLOWED_FUNCTIONS",
    "DEFAULT_PARAM_VALUE",
    "PARAM_BUDGET",
    "RESERVED_WORDS",
    "Binary",
    "Call",
    "Const",
    "Equation",
    "Expr",
    "Issue",
    "JumpSpec",
    "ModelValidationError",
    "Param",
    "ParamDecl",
    "ParseError",
    "SdeModel",
    "StateVar",
    "TimeVar",
    "Unary",
    "UnboundSymbolError",
    "ValidationReport",
    "eval_expr",
    "format_expr",
    "parse_model",
    "print_model",
    "require_valid",
    "validate_model",
]
