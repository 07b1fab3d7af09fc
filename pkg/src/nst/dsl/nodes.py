"""AST node types for the SDE model language.

Every node is a frozen dataclass, so expression trees are immutable and
compare structurally.  ``SdeModel.source`` keeps the original text for
audit trails but is excluded from equality: two models are the same model
when their declarations and equations match, however they were written.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

ALLOWED_FUNCTIONS: dict[str, int] = {
    "sqrt": 1,
    "exp": 1,
    "log": 1,
    "sin": 1,
    "cos": 1,
    "tanh": 1,
    "abs": 1,
    "max": 2,
    "min": 2,
}

#: Words that can never be used as parameter or state-variable names.
RESERVED_WORDS = frozenset(
    {"param", "dt", "dW", "dW1", "dW2", "jump", "t"} | set(ALLOWED_FUNCTIONS)
)

PARAM_BUDGET = 12
DEFAULT_PARAM_VALUE = 0.1


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class StateVar:
    name: str


@dataclass(frozen=True)
class TimeVar:
    pass


@dataclass(frozen=True)
class Unary:
    op: str  # "-"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Const, Param, StateVar, TimeVar, Unary, Binary, Call]


@dataclass(frozen=True)
class JumpSpec:
    """Compound-jump suffix: intensity (events per unit time), mean, std."""

    intensity: Expr
    mean: Expr
    std: Expr


@dataclass(frozen=True)
class ParamDecl:
    name: str
    value: float


@dataclass(frozen=True)
class Equation:
    """One ``d<state> = drift dt [+ diffusion dW<i>] [+ jump(...)]`` line."""

    state: str
    drift: Expr
    diffusion: Expr | None
    driver: int  # Brownian driver index, 1 or 2
    jump: JumpSpec | None


@dataclass(frozen=True)
class SdeModel:
    """A parsed model: up to two equations plus ordered parameter declarations.

    Parameters are kept in first-use order (declared-but-unused ones last),
    which is also the order calibration vectors follow.
    """

    equations: tuple[Equation, ...]
    params: tuple[ParamDecl, ...]
    source: str = field(default="", compare=False)

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    @property
    def param_values(self) -> tuple[float, ...]:
        return tuple(p.value for p in self.params)

    @property
    def aux_name(self) -> str | None:
        """State variable of the second equation, if there is one."""
        if len(self.equations) > 1:
            return self.equations[1].state
        return None

    @property
    def n_drivers(self) -> int:
        return max((eq.driver for eq in self.equations), default=1)

    def with_param_values(self, values: Sequence[float]) -> "SdeModel":
        """Copy of the model with parameter initial values replaced."""
        if len(values) != len(self.params):
            raise ValueError(
                f"expected {len(self.params)} parameter values, got {len(values)}"
            )
        decls = tuple(
            ParamDecl(p.name, float(v)) for p, v in zip(self.params, values)
        )
        return SdeModel(self.equations, decls, self.source)


def iter_subexprs(expr: Expr) -> Iterator[Expr]:
    """Depth-first walk over an expression tree, including the root."""
    yield expr
    if isinstance(expr, Unary):
        yield from iter_subexprs(expr.operand)
    elif isinstance(expr, Binary):
        yield from iter_subexprs(expr.left)
        yield from iter_subexprs(expr.right)
    elif isinstance(expr, Call):
        for arg in expr.args:
            yield from iter_subexprs(arg)


def model_exprs(model: SdeModel) -> Iterator[Expr]:
    """All top-level expressions of a model in reading order."""
    for eq in model.equations:
        yield eq.drift
        if eq.diffusion is not None:
            yield eq.diffusion
        if eq.jump is not None:
            yield eq.jump.intensity
            yield eq.jump.mean
            yield eq.jump.std


def referenced_params(model: SdeModel) -> set[str]:
    names: set[str] = set()
    for expr in model_exprs(model):
        for node in iter_subexprs(expr):
            if isinstance(node, Param):
                names.add(node.name)
    return names


def expr_references_param(expr: Expr, name: str) -> bool:
    return any(
        isinstance(node, Param) and node.name == name
        for node in iter_subexprs(expr)
    )
