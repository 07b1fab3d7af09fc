"""Term catalogue: canonical sources, structural detectors, and editors.

The ten single-equation term families, the jump extension, and the
two-equation stochastic-volatility form all have a canonical text
representation here (used by round-trip tests and documentation).  The
detector and editor functions operate on ASTs and back the scripted
proposer: detection is structural, matching the shapes this module
itself builds plus the catalogue forms, not arbitrary algebraic
rewrites of them.
"""

from __future__ import annotations

from .nodes import (
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
    expr_references_param,
    iter_subexprs,
    referenced_params,
)

TWO_PI = 6.283185307179586

#: Canonical single-equation sources, one per term family.
FAMILY_SOURCES: dict[str, str] = {
    "constant_drift": "dV = a dt + s dW\n",
    "linear_drift": "dV = a*V dt + s dW\n",
    "mean_reversion": "dV = theta*(m - V) dt + s dW\n",
    "sqrt_drift": "dV = a*sqrt(V) dt + s dW\n",
    "sinusoidal": f"dV = A*sin({TWO_PI!r}*f*t + phi) dt + s dW\n",
    "logistic": "dV = r*V*(1 - V/K) dt + s dW\n",
    "constant_diffusion": "dV = mu*V dt + s dW\n",
    "proportional_diffusion": "dV = mu*V dt + s*V dW\n",
    "sqrt_diffusion": "dV = mu*V dt + s*sqrt(V) dW\n",
    "time_scaled_diffusion": "dV = mu*V dt + s*(1 + b*t) dW\n",
}

JUMP_SOURCE = "dV = mu*V dt + s*V dW + jump(lam, jm, js)\n"

STOCHASTIC_VOLATILITY_SOURCE = (
    "dV = mu*V dt + sqrt(S)*V dW1\n"
    "dS = kappa*(vbar - S) dt + xi*sqrt(S) dW2\n"
)

#: The discovery loop's starting point: plain geometric Brownian motion.
GBM_SOURCE = "dV = mu*V dt + sigma*V dW\n"


def fresh_name(base: str, taken: set[str]) -> str:
    if base not in taken:
        return base
    i = 2
    while f"{base}{i}" in taken:
        i += 1
    return f"{base}{i}"


def _additive_terms(expr: Expr) -> list[Expr]:
    if isinstance(expr, Binary) and expr.op == "+":
        return _additive_terms(expr.left) + _additive_terms(expr.right)
    return [expr]


def _sum_of(terms: list[Expr]) -> Expr | None:
    if not terms:
        return None
    node = terms[0]
    for term in terms[1:]:
        node = Binary("+", node, term)
    return node


def _is_state_v(expr: Expr) -> bool:
    return isinstance(expr, StateVar) and expr.name == "V"


# -- detectors -------------------------------------------------------------


def has_mean_reversion(model: SdeModel) -> bool:
    """A drift addend of the shape ``coeff*(x - V)`` or ``coeff*(V - x)``."""
    for term in _additive_terms(model.equations[0].drift):
        if not (isinstance(term, Binary) and term.op == "*"):
            continue
        for side in (term.left, term.right):
            if isinstance(side, Binary) and side.op == "-":
                if _is_state_v(side.left) != _is_state_v(side.right):
                    return True
    return False


def has_sinusoid(model: SdeModel) -> bool:
    return any(
        isinstance(node, Call) and node.func in ("sin", "cos")
        for node in iter_subexprs(model.equations[0].drift)
    )


def has_jump(model: SdeModel) -> bool:
    return any(eq.jump is not None for eq in model.equations)


def diffusion_is_state_free(model: SdeModel) -> bool:
    """True when the first equation's diffusion has no V/aux/t dependence."""
    diffusion = model.equations[0].diffusion
    if diffusion is None:
        return False
    return not any(
        isinstance(node, (StateVar, TimeVar)) for node in iter_subexprs(diffusion)
    )


def _is_time_scale_factor(expr: Expr) -> bool:
    if not (isinstance(expr, Binary) and expr.op == "+"):
        return False
    sides = (expr.left, expr.right)
    const_side = next(
        (s for s in sides if isinstance(s, Const) and s.value == 1.0), None
    )
    other = expr.right if const_side is expr.left else expr.left
    if const_side is None:
        return False
    return isinstance(other, Binary) and other.op == "*" and any(
        isinstance(n, TimeVar) for n in iter_subexprs(other)
    )


def has_time_scaled_diffusion(model: SdeModel) -> bool:
    diffusion = model.equations[0].diffusion
    if diffusion is None:
        return False
    return any(_is_time_scale_factor(node) for node in iter_subexprs(diffusion))


def has_sqrt_diffusion(model: SdeModel) -> bool:
    diffusion = model.equations[0].diffusion
    if diffusion is None:
        return False
    return any(
        isinstance(node, Call) and node.func == "sqrt" and node.args == (StateVar("V"),)
        for node in iter_subexprs(diffusion)
    )


# -- editors ---------------------------------------------------------------


def _rebuild(model: SdeModel, eq0: Equation, decls: tuple[ParamDecl, ...]) -> SdeModel:
    equations = (eq0,) + model.equations[1:]
    return SdeModel(equations, decls)


def add_mean_reversion(model: SdeModel, theta: float, level: float) -> SdeModel:
    taken = set(model.param_names)
    th = fresh_name("theta", taken)
    taken.add(th)
    m = fresh_name("m", taken)
    eq0 = model.equations[0]
    term = Binary("*", Param(th), Binary("-", Param(m), StateVar("V")))
    drift = Binary("+", eq0.drift, term)
    decls = model.params + (ParamDecl(th, theta), ParamDecl(m, level))
    eq = Equation(eq0.state, drift, eq0.diffusion, eq0.driver, eq0.jump)
    return _rebuild(model, eq, decls)


def add_sinusoid(model: SdeModel, amplitude: float, frequency: float, phase: float) -> SdeModel:
    taken = set(model.param_names)
    a = fresh_name("A", taken)
    taken.add(a)
    f = fresh_name("f", taken)
    taken.add(f)
    ph = fresh_name("phi", taken)
    eq0 = model.equations[0]
    angle = Binary(
        "+", Binary("*", Binary("*", Const(TWO_PI), Param(f)), TimeVar()), Param(ph)
    )
    term = Binary("*", Param(a), Call("sin", (angle,)))
    drift = Binary("+", eq0.drift, term)
    decls = model.params + (
        ParamDecl(a, amplitude),
        ParamDecl(f, frequency),
        ParamDecl(ph, phase),
    )
    eq = Equation(eq0.state, drift, eq0.diffusion, eq0.driver, eq0.jump)
    return _rebuild(model, eq, decls)


def sqrt_scale_diffusion(model: SdeModel) -> SdeModel:
    """Turn a state-free diffusion ``g`` into ``g*sqrt(V)``."""
    eq0 = model.equations[0]
    if eq0.diffusion is None:
        raise ValueError("model has no diffusion term to rescale")
    diffusion = Binary("*", eq0.diffusion, Call("sqrt", (StateVar("V"),)))
    eq = Equation(eq0.state, eq0.drift, diffusion, eq0.driver, eq0.jump)
    return _rebuild(model, eq, model.params)


def add_jump(model: SdeModel, intensity: float, mean: float, std: float) -> SdeModel:
    taken = set(model.param_names)
    lam = fresh_name("lam", taken)
    taken.add(lam)
    jm = fresh_name("jm", taken)
    taken.add(jm)
    js = fresh_name("js", taken)
    eq0 = model.equations[0]
    jump = JumpSpec(Param(lam), Param(jm), Param(js))
    decls = model.params + (
        ParamDecl(lam, intensity),
        ParamDecl(jm, mean),
        ParamDecl(js, std),
    )
    eq = Equation(eq0.state, eq0.drift, eq0.diffusion, eq0.driver, jump)
    return _rebuild(model, eq, decls)


def time_scale_diffusion(model: SdeModel, slope: float) -> SdeModel:
    """Multiply the diffusion by ``(1 + b*t)``; creates one if absent."""
    taken = set(model.param_names)
    b = fresh_name("b", taken)
    factor = Binary("+", Const(1.0), Binary("*", Param(b), TimeVar()))
    eq0 = model.equations[0]
    if eq0.diffusion is None:
        taken.add(b)
        s = fresh_name("s", taken)
        diffusion: Expr = Binary("*", Param(s), factor)
        decls = model.params + (ParamDecl(b, slope), ParamDecl(s, 0.1))
    else:
        diffusion = Binary("*", eq0.diffusion, factor)
        decls = model.params + (ParamDecl(b, slope),)
    eq = Equation(eq0.state, eq0.drift, diffusion, eq0.driver, eq0.jump)
    return _rebuild(model, eq, decls)


def remove_param_term(model: SdeModel, name: str) -> SdeModel | None:
    """Remove the structural term that references parameter ``name``.

    Handles drift/diffusion addends, a ``(1 + b*t)`` diffusion factor, and
    the jump suffix.  Returns None when no removable term is found (for
    instance when the parameter sits in a shape this editor does not
    understand).  Parameters orphaned by the removal are dropped from the
    declarations.
    """
    eq0 = model.equations[0]
    drift, diffusion, jump = eq0.drift, eq0.diffusion, eq0.jump
    changed = False

    if jump is not None and any(
        expr_references_param(e, name) for e in (jump.intensity, jump.mean, jump.std)
    ):
        jump = None
        changed = True
    if not changed:
        terms = _additive_terms(drift)
        kept = [t for t in terms if not expr_references_param(t, name)]
        if len(kept) < len(terms):
            drift = _sum_of(kept) or Const(0.0)
            changed = True
    if not changed and diffusion is not None:
        if isinstance(diffusion, Binary) and diffusion.op == "*":
            for factor, other in (
                (diffusion.left, diffusion.right),
                (diffusion.right, diffusion.left),
            ):
                if _is_time_scale_factor(factor) and expr_references_param(factor, name):
                    diffusion = other
                    changed = True
                    break
        if not changed:
            terms = _additive_terms(diffusion)
            kept = [t for t in terms if not expr_references_param(t, name)]
            if len(kept) < len(terms):
                diffusion = _sum_of(kept)
                changed = True

    if not changed:
        return None

    eq = Equation(eq0.state, drift, diffusion, eq0.driver, jump)
    trimmed = _rebuild(model, eq, model.params)
    used = referenced_params(trimmed)
    decls = tuple(d for d in trimmed.params if d.name in used)
    return SdeModel(trimmed.equations, decls)
