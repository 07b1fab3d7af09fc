"""Forward-mode dual numbers over numpy arrays.

A :class:`Dual` carries a primal value together with a block of tangent
(directional derivative) components, one per differentiation direction.
Tangents live on a leading axis, so ``tan.shape == (n_dirs,) + shape(val)``
holds for every Dual in a computation.  Arithmetic on Duals propagates
tangents by the chain rule; mixing Duals with plain floats or ndarrays
works transparently, which lets the same simulation code run either on
raw numbers or with derivatives attached.

The module-level helpers (:func:`sqrt`, :func:`log`, :func:`where`, ...)
dispatch on type so callers never branch on Dual-ness themselves.  The
clamping conventions (sqrt on negatives, log below 1e-12, division by
zero mapped to +/-inf rather than NaN) are part of the evaluation
contract for model expressions and are applied on both primal and
tangent sides.
"""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

LOG_FLOOR = 1e-12

Numeric = Any  # float | np.ndarray | Dual


def _align(tan: np.ndarray, val_ndim: int, out_ndim: int) -> np.ndarray:
    """Insert singleton axes after the direction axis so a tangent of a
    lower-dimensional value broadcasts against a higher-dimensional one."""
    extra = out_ndim - val_ndim
    if extra <= 0:
        return tan
    return tan.reshape(tan.shape[:1] + (1,) * extra + tan.shape[1:])


class Dual:
    """Primal value plus a leading-axis block of tangent components."""

    __slots__ = ("val", "tan")

    def __init__(self, val: Numeric, tan: np.ndarray) -> None:
        self.val = val
        self.tan = np.asarray(tan, dtype=float)

    @classmethod
    def seed(cls, values: Sequence[float]) -> list["Dual"]:
        """Lift a parameter vector into Duals with identity tangents."""
        n = len(values)
        eye = np.eye(n)
        return [cls(float(v), eye[i]) for i, v in enumerate(values)]

    @property
    def n_dirs(self) -> int:
        return self.tan.shape[0]

    def __repr__(self) -> str:
        return f"Dual(val={self.val!r}, tan={self.tan!r})"

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other: Numeric) -> "Dual":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Numeric) -> "Dual":
        return subtract(self, other)

    def __rsub__(self, other: Numeric) -> "Dual":
        return subtract(other, self)

    def __mul__(self, other: Numeric) -> "Dual":
        return multiply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Numeric) -> "Dual":
        return divide(self, other)

    def __rtruediv__(self, other: Numeric) -> "Dual":
        return divide(other, self)

    def __pow__(self, other: Numeric) -> "Dual":
        return power(self, other)

    def __rpow__(self, other: Numeric) -> "Dual":
        return power(other, self)

    def __neg__(self) -> "Dual":
        return Dual(-self.val, -self.tan)

    def __pos__(self) -> "Dual":
        return self


def value_of(x: Numeric) -> Any:
    """Primal part of ``x`` (identity for non-Duals)."""
    return x.val if isinstance(x, Dual) else x


def is_dual(x: Numeric) -> bool:
    return isinstance(x, Dual)


def _combine(v: Any, a: Numeric, da: Any, b: Numeric, db: Any) -> Dual:
    """Assemble a Dual result from partial-derivative factors.

    ``da``/``db`` multiply the aligned tangents of ``a``/``b``; pass None
    for the factor of a non-Dual operand.
    """
    nd = np.ndim(v)
    tan = None
    if isinstance(a, Dual) and da is not None:
        tan = da * _align(a.tan, np.ndim(a.val), nd)
    if isinstance(b, Dual) and db is not None:
        part = db * _align(b.tan, np.ndim(b.val), nd)
        tan = part if tan is None else tan + part
    return Dual(v, tan)


def add(a: Numeric, b: Numeric) -> Numeric:
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return np.add(a, b)
    v = np.add(value_of(a), value_of(b))
    return _combine(v, a, 1.0, b, 1.0)


def subtract(a: Numeric, b: Numeric) -> Numeric:
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return np.subtract(a, b)
    v = np.subtract(value_of(a), value_of(b))
    return _combine(v, a, 1.0, b, -1.0)


def multiply(a: Numeric, b: Numeric) -> Numeric:
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return np.multiply(a, b)
    av, bv = value_of(a), value_of(b)
    return _combine(np.multiply(av, bv), a, bv, b, av)


def divide(a: Numeric, b: Numeric) -> Numeric:
    """Division with 0/0 and x/0 mapped to +/-inf instead of NaN.

    The simulation's divergence guard treats non-finite values as blown-up
    paths, so division never manufactures NaNs that could leak into
    otherwise healthy paths.
    """
    av, bv = value_of(a), value_of(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.true_divide(av, bv)
        v = np.where(np.isnan(v), np.inf, v)
        if not (isinstance(a, Dual) or isinstance(b, Dual)):
            return v
        return _combine(v, a, np.true_divide(1.0, bv), b,
                        np.true_divide(-av, np.multiply(bv, bv)))


def power(a: Numeric, b: Numeric) -> Numeric:
    """``a ** b`` with NaN-free conventions.

    Integer exponents keep the sign of a negative base; fractional
    exponents clamp the base at zero (the same spirit as the sqrt clamp).
    """
    av, bv = value_of(a), value_of(b)
    if not isinstance(b, Dual):
        integral = bool(np.all(np.mod(np.asarray(bv, dtype=float), 1.0) == 0.0))
        base = av if integral else np.maximum(av, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.power(base, bv)
            v = np.where(np.isnan(v), np.inf, v)
        if not isinstance(a, Dual):
            return v
        with np.errstate(divide="ignore", invalid="ignore"):
            da = np.multiply(bv, np.power(base, np.subtract(bv, 1.0)))
            da = np.where(np.isnan(da), 0.0, da)
        return _combine(v, a, da, b, None)
    # Dual exponent: route through exp(b * log(base)) with the log clamp.
    return exp(multiply(b, log(a)))


def negative(a: Numeric) -> Numeric:
    return -a if isinstance(a, Dual) else np.negative(a)


def sqrt(x: Numeric) -> Numeric:
    """Square root clamped at zero; derivative is zero on the clamped side."""
    v = value_of(x)
    root = np.sqrt(np.maximum(v, 0.0))
    if not isinstance(x, Dual):
        return root
    with np.errstate(divide="ignore"):
        d = np.where(v > 0.0, 0.5 / np.where(root > 0.0, root, 1.0), 0.0)
    return _combine(root, x, d, None, None)


def exp(x: Numeric) -> Numeric:
    v = value_of(x)
    with np.errstate(over="ignore"):
        e = np.exp(v)
    if not isinstance(x, Dual):
        return e
    return _combine(e, x, e, None, None)


def log(x: Numeric) -> Numeric:
    """Natural log clamped below at 1e-12."""
    v = value_of(x)
    clamped = np.maximum(v, LOG_FLOOR)
    out = np.log(clamped)
    if not isinstance(x, Dual):
        return out
    d = np.where(v > LOG_FLOOR, 1.0 / clamped, 0.0)
    return _combine(out, x, d, None, None)


def sin(x: Numeric) -> Numeric:
    v = value_of(x)
    if not isinstance(x, Dual):
        return np.sin(v)
    return _combine(np.sin(v), x, np.cos(v), None, None)


def cos(x: Numeric) -> Numeric:
    v = value_of(x)
    if not isinstance(x, Dual):
        return np.cos(v)
    return _combine(np.cos(v), x, -np.sin(v), None, None)


def tanh(x: Numeric) -> Numeric:
    v = value_of(x)
    t = np.tanh(v)
    if not isinstance(x, Dual):
        return t
    return _combine(t, x, 1.0 - t * t, None, None)


def absolute(x: Numeric) -> Numeric:
    """|x| with derivative sign(x); the subgradient at 0 is taken as 0."""
    v = value_of(x)
    if not isinstance(x, Dual):
        return np.abs(v)
    return _combine(np.abs(v), x, np.sign(v), None, None)


def where(cond: np.ndarray, a: Numeric, b: Numeric) -> Numeric:
    """Elementwise select; tangents follow the selected branch."""
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return np.where(cond, a, b)
    av, bv = value_of(a), value_of(b)
    v = np.where(cond, av, bv)
    nd = np.ndim(v)
    ta = _align(a.tan, np.ndim(av), nd) if isinstance(a, Dual) else 0.0
    tb = _align(b.tan, np.ndim(bv), nd) if isinstance(b, Dual) else 0.0
    return Dual(v, np.where(cond, ta, tb))


def maximum(a: Numeric, b: Numeric) -> Numeric:
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return np.maximum(a, b)
    return where(np.greater_equal(value_of(a), value_of(b)), _as_dual_like(a, b), _as_dual_like(b, a))


def minimum(a: Numeric, b: Numeric) -> Numeric:
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return np.minimum(a, b)
    return where(np.less_equal(value_of(a), value_of(b)), _as_dual_like(a, b), _as_dual_like(b, a))


def _as_dual_like(x: Numeric, template: Numeric) -> Numeric:
    """Lift a plain operand to a zero-tangent Dual when the other side is Dual."""
    if isinstance(x, Dual) or not isinstance(template, Dual):
        return x
    n = template.tan.shape[0]
    return Dual(x, np.zeros((n,) + np.shape(x)))


def stack_last(items: Sequence[Numeric]) -> Numeric:
    """Stack a sequence of same-shape values along a new trailing axis."""
    duals = [x for x in items if isinstance(x, Dual)]
    if not duals:
        return np.stack([np.asarray(x, dtype=float) for x in items], axis=-1)
    n = duals[0].tan.shape[0]
    vals = []
    tans = []
    for x in items:
        v = np.asarray(value_of(x), dtype=float)
        vals.append(v)
        if isinstance(x, Dual):
            tans.append(_align(x.tan, np.ndim(x.val), v.ndim))
        else:
            tans.append(np.zeros((n,) + v.shape))
    shape = np.broadcast_shapes(*(v.shape for v in vals))
    vals = [np.broadcast_to(v, shape) for v in vals]
    tans = [np.broadcast_to(t, (n,) + shape) for t in tans]
    return Dual(np.stack(vals, axis=-1), np.stack(tans, axis=-1))


def expand_last(x: Numeric) -> Numeric:
    """Append a trailing singleton axis (for broadcasting against stacks)."""
    if not isinstance(x, Dual):
        return np.expand_dims(x, -1)
    return Dual(np.expand_dims(x.val, -1), np.expand_dims(x.tan, -1))


def mean_last(x: Numeric) -> Numeric:
    """Mean over the trailing (value) axis."""
    if not isinstance(x, Dual):
        return np.mean(x, axis=-1)
    return Dual(np.mean(x.val, axis=-1), np.mean(x.tan, axis=-1))


def sum_last(x: Numeric) -> Numeric:
    if not isinstance(x, Dual):
        return np.sum(x, axis=-1)
    return Dual(np.sum(x.val, axis=-1), np.sum(x.tan, axis=-1))


def tangent_of(x: Numeric, n_dirs: int) -> np.ndarray:
    """Tangent block of ``x``, materializing zeros for plain values."""
    if isinstance(x, Dual):
        return x.tan
    return np.zeros((n_dirs,) + np.shape(x))
