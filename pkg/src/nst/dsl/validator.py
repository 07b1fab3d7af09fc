"""Structural validation of parsed or programmatically built models.

The parser already rejects most malformed text; this layer enforces the
semantic budget rules and catches defects that can only arise in ASTs
assembled in code (unknown state variables, driver indices out of range,
three equations, ...).  Errors make a model unusable; warnings do not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .nodes import (
    PARAM_BUDGET,
    Const,
    Equation,
    Expr,
    Param,
    SdeModel,
    StateVar,
    Unary,
    iter_subexprs,
    referenced_params,
)

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Issue:
    code: str
    severity: str
    message: str


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(i.severity == ERROR for i in self.issues)

    @property
    def errors(self) -> list[Issue]:
        return [i for i in self.issues if i.severity == ERROR]

    @property
    def warnings(self) -> list[Issue]:
        return [i for i in self.issues if i.severity == WARNING]

    def codes(self) -> set[str]:
        return {i.code for i in self.issues}

    def add(self, code: str, severity: str, message: str) -> None:
        self.issues.append(Issue(code, severity, message))


class ModelValidationError(ValueError):
    """Raised by callers that require a clean report before proceeding."""

    def __init__(self, report: ValidationReport) -> None:
        details = "; ".join(i.message for i in report.errors)
        super().__init__(f"model failed validation: {details}")
        self.report = report


def _is_negative_constant(expr: Expr) -> bool:
    if isinstance(expr, Const):
        return expr.value < 0.0
    if isinstance(expr, Unary) and expr.op == "-" and isinstance(expr.operand, Const):
        return expr.operand.value > 0.0
    return False


def validate_model(model: SdeModel) -> ValidationReport:
    report = ValidationReport()
    n_eq = len(model.equations)

    if n_eq == 0:
        report.add("NO_EQUATIONS", ERROR, "model has no equations")
        return report
    if n_eq > 2:
        report.add(
            "EQUATION_COUNT", ERROR, f"model has {n_eq} equations; the maximum is 2"
        )

    if model.equations[0].state != "V":
        report.add(
            "FIRST_STATE",
            ERROR,
            f"first equation must define V, got {model.equations[0].state!r}",
        )

    if len(model.params) > PARAM_BUDGET:
        report.add(
            "PARAM_BUDGET",
            ERROR,
            f"model declares {len(model.params)} parameters; the budget is {PARAM_BUDGET}",
        )

    seen: set[str] = set()
    for decl in model.params:
        if decl.name in seen:
            report.add("DUPLICATE_PARAM", ERROR, f"parameter {decl.name!r} declared twice")
        seen.add(decl.name)

    known_states = {eq.state for eq in model.equations[:2]}
    param_names = set(model.param_names)
    for eq in model.equations:
        for expr in _equation_exprs(eq):
            for node in iter_subexprs(expr):
                if isinstance(node, StateVar) and node.name not in known_states:
                    report.add(
                        "UNDEFINED_STATE",
                        ERROR,
                        f"equation for {eq.state!r} references undefined variable {node.name!r}",
                    )
                elif isinstance(node, Param) and node.name not in param_names:
                    report.add(
                        "UNDEFINED_STATE",
                        ERROR,
                        f"equation for {eq.state!r} references undeclared symbol {node.name!r}",
                    )

    for eq in model.equations:
        if eq.driver not in (1, 2):
            report.add(
                "DRIVER_RANGE", ERROR, f"Brownian driver index {eq.driver} is not 1 or 2"
            )
        if eq.diffusion is not None and _is_negative_constant(eq.diffusion):
            report.add(
                "NEGATIVE_DIFFUSION",
                ERROR,
                f"diffusion of {eq.state!r} is a negative constant",
            )
        if eq.jump is not None and _is_negative_constant(eq.jump.std):
            report.add(
                "NEGATIVE_JUMP_STD",
                ERROR,
                f"jump std of {eq.state!r} is a negative constant",
            )

    if sum(1 for eq in model.equations if eq.jump is not None) > 1:
        report.add(
            "JUMP_COUNT", ERROR, "jump terms may appear on at most one equation"
        )

    used = referenced_params(model)
    for decl in model.params:
        if decl.name not in used:
            report.add(
                "UNUSED_PARAM", WARNING, f"parameter {decl.name!r} is never referenced"
            )

    return report


def require_valid(model: SdeModel) -> None:
    """Raise :class:`ModelValidationError` unless the model validates cleanly."""
    report = validate_model(model)
    if not report.ok:
        raise ModelValidationError(report)


def _equation_exprs(eq: Equation):
    yield eq.drift
    if eq.diffusion is not None:
        yield eq.diffusion
    if eq.jump is not None:
        yield eq.jump.intensity
        yield eq.jump.mean
        yield eq.jump.std
