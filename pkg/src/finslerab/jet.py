"""Truncated multivariate Taylor arithmetic ("jets") over (x1, x2, y1, y2).

A jet stores Taylor coefficients ``c[a1, a2, b1, b2]`` of a function about a
point, truncated anisotropically: ``a1 + a2 <= x_order`` and
``b1 + b2 <= y_order``.  Partial derivatives are recovered as
``alpha! * c[alpha]``.

Coefficients live on the *last* axis of ``Jet.c``; all leading axes are batch
axes and broadcast like ordinary numpy arrays.  A batch axis can equally be a
tensor index, which is how the Riemannian layer stores ``a_ij`` as a single
jet of batch shape ``(2, 2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, OrderExceeded, SpaceMismatch

N_VARS = 4
X1, X2, Y1, Y2 = range(4)


@dataclass(frozen=True)
class JetSpace:
    x_order: int = 2
    y_order: int = 4

    def __post_init__(self):
        if self.x_order < 0 or self.y_order < 0:
            raise ValueError("truncation orders must be non-negative")

    @property
    def n_vars(self) -> int:
        return N_VARS

    @property
    def total_order(self) -> int:
        return self.x_order + self.y_order

    @cached_property
    def indices(self) -> tuple[tuple[int, int, int, int], ...]:
        idx = [
            (a1, a2, b1, b2)
            for a1, a2, b1, b2 in product(
                range(self.x_order + 1),
                range(self.x_order + 1),
                range(self.y_order + 1),
                range(self.y_order + 1),
            )
            if a1 + a2 <= self.x_order and b1 + b2 <= self.y_order
        ]
        idx.sort(key=lambda m: (sum(m), m))
        return tuple(idx)

    @cached_property
    def position(self) -> dict[tuple[int, int, int, int], int]:
        return {m: i for i, m in enumerate(self.indices)}

    @property
    def size(self) -> int:
        return len(self.indices)

    @cached_property
    def factorials(self) -> np.ndarray:
        return np.array([math.prod(math.factorial(k) for k in m) for m in self.indices], float)

    def contains(self, other: "JetSpace") -> bool:
        return other.x_order <= self.x_order and other.y_order <= self.y_order

    def meet(self, other: "JetSpace") -> "JetSpace":
        return JetSpace(min(self.x_order, other.x_order), min(self.y_order, other.y_order))

    def lowered(self, var: int) -> "JetSpace":
        if var in (X1, X2):
            if self.x_order == 0:
                raise OrderExceeded(f"cannot differentiate in x{var + 1}: x_order is 0")
            return JetSpace(self.x_order - 1, self.y_order)
        if self.y_order == 0:
            raise OrderExceeded(f"cannot differentiate in y{var - 1}: y_order is 0")
        return JetSpace(self.x_order, self.y_order - 1)


@lru_cache(maxsize=None)
def _mul_table(space: JetSpace):
    pos = space.position
    ii, jj, kk = [], [], []
    for i, p in enumerate(space.indices):
        for j, q in enumerate(space.indices):
            k = pos.get((p[0] + q[0], p[1] + q[1], p[2] + q[2], p[3] + q[3]))
            if k is not None:
                ii.append(i)
                jj.append(j)
                kk.append(k)
    order = np.argsort(kk, kind="stable")
    ii = np.asarray(ii)[order]
    jj = np.asarray(jj)[order]
    kk = np.asarray(kk)[order]
    starts = np.searchsorted(kk, np.arange(space.size))
    return ii, jj, starts


@lru_cache(maxsize=None)
def _diff_table(space: JetSpace, var: int):
    target = space.lowered(var)
    src, mult = [], []
    for m in target.indices:
        up = list(m)
        up[var] += 1
        src.append(space.position[tuple(up)])
        mult.append(m[var] + 1)
    return target, np.asarray(src), np.asarray(mult, float)


@lru_cache(maxsize=None)
def _truncate_table(space: JetSpace, target: JetSpace):
    return np.asarray([space.position[m] for m in target.indices])


def _batch_shape(x) -> tuple[int, ...]:
    return x.shape if isinstance(x, Jet) else np.shape(x)


class Jet:
    """Immutable truncated Taylor expansion; see module docstring."""

    __slots__ = ("space", "c")
    __array_priority__ = 100  # make ndarray <op> Jet defer to Jet

    def __init__(self, space: JetSpace, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim == 0 or coeffs.shape[-1] != space.size:
            raise SpaceMismatch(
                f"coefficient axis has length {coeffs.shape[-1] if coeffs.ndim else 0}, "
                f"space {space} needs {space.size}"
            )
        self.space = space
        self.c = coeffs

    # -- construction -------------------------------------------------------
    @classmethod
    def constant(cls, space: JetSpace, value) -> "Jet":
        value = np.asarray(value, float)
        c = np.zeros(value.shape + (space.size,))
        c[..., 0] = value
        return cls(space, c)

    @classmethod
    def stack(cls, jets: Sequence["Jet"], axis: int = 0) -> "Jet":
        space = jets[0].space
        for j in jets[1:]:
            space = space.meet(j.space)
        cs = [j.truncate(space).c for j in jets]
        shape = np.broadcast_shapes(*(c.shape for c in cs))
        cs = [np.broadcast_to(c, shape) for c in cs]
        ndim = len(shape) - 1
        if axis < 0:
            axis += ndim + 1
        return cls(space, np.stack(cs, axis=axis))

    # -- inspection ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.c.shape[:-1]

    @property
    def value(self):
        v = self.c[..., 0]
        return float(v) if v.ndim == 0 else v

    def coeff(self, index) -> np.ndarray | float:
        index = tuple(index)
        if index not in self.space.position:
            raise OrderExceeded(f"multi-index {index} outside {self.space}")
        v = self.c[..., self.space.position[index]]
        return float(v) if v.ndim == 0 else v

    def partial(self, index) -> np.ndarray | float:
        """Mixed partial derivative ``d^alpha f`` for multi-index ``alpha``."""
        index = tuple(index)
        return self.coeff(index) * math.prod(math.factorial(k) for k in index)

    def __getitem__(self, key) -> "Jet":
        if key is Ellipsis or (isinstance(key, tuple) and Ellipsis in key):
            raise IndexError("ellipsis indexing would reach the coefficient axis")
        if not isinstance(key, tuple):
            key = (key,)
        if len(key) > len(self.shape):
            raise IndexError("too many indices for jet batch shape")
        return Jet(self.space, self.c[key])

    def __len__(self):
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __repr__(self):
        return f"Jet({self.space}, shape={self.shape}, value={self.c[..., 0]!r})"

    # -- structural ops -----------------------------------------------------
    def truncate(self, space: JetSpace) -> "Jet":
        if space == self.space:
            return self
        if not self.space.contains(space):
            raise SpaceMismatch(f"cannot raise {self.space} to {space}")
        return Jet(space, self.c[..., _truncate_table(self.space, space)])

    def diff(self, var: int) -> "Jet":
        target, src, mult = _diff_table(self.space, var)
        return Jet(target, self.c[..., src] * mult)

    def grad_x(self) -> "Jet":
        """Stack of x-derivatives as a new trailing batch axis of length 2."""
        return Jet.stack([self.diff(X1), self.diff(X2)], axis=-1)

    def sum(self, axis=None) -> "Jet":
        nb = len(self.shape)
        if axis is None:
            axes = tuple(range(nb))
        else:
            axes = tuple(a % nb for a in np.atleast_1d(axis))
        return Jet(self.space, self.c.sum(axis=axes))

    def transpose(self, *axes) -> "Jet":
        nb = len(self.shape)
        if not axes:
            axes = tuple(reversed(range(nb)))
        return Jet(self.space, self.c.transpose(*axes, nb))

    def expand_dims(self, axis: int) -> "Jet":
        nb = len(self.shape)
        if axis < 0:
            axis += nb + 1
        return Jet(self.space, np.expand_dims(self.c, axis))

    # -- arithmetic ---------------------------------------------------------
    def _scalar(self, other) -> np.ndarray:
        return np.asarray(other, dtype=float)

    def _add_value(self, other, sign=1.0) -> "Jet":
        other = self._scalar(other)
        shape = np.broadcast_shapes(self.shape, other.shape)
        c = np.broadcast_to(self.c, shape + (self.space.size,)).copy()
        c[..., 0] += sign * other
        return Jet(self.space, c)

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = _coerce(self, other)
            return Jet(a.space, a.c + b.c)
        return self._add_value(other)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.c)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, Jet):
            a, b = _coerce(self, other)
            return Jet(a.space, a.c - b.c)
        return self._add_value(other, -1.0)

    def __rsub__(self, other):
        return (-self)._add_value(other)

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = _coerce(self, other)
            ii, jj, starts = _mul_table(a.space)
            prod = a.c[..., ii] * b.c[..., jj]
            return Jet(a.space, np.add.reduceat(prod, starts, axis=-1))
        other = self._scalar(other)
        return Jet(self.space, self.c * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        other = self._scalar(other)
        if np.any(other == 0):
            raise DomainError("division by zero")
        return Jet(self.space, self.c / other[..., None])

    def __rtruediv__(self, other):
        return reciprocal(self) * self._scalar(other)

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        if isinstance(p, (int, np.integer)) or (np.ndim(p) == 0 and float(p).is_integer()):
            return _int_pow(self, int(p))
        return pow_real(self, p)

    def __rpow__(self, base):
        base = self._scalar(base)
        if np.any(base <= 0):
            raise DomainError("real power of a non-positive base")
        return exp(self * np.log(base))


def _coerce(a: Jet, b: Jet) -> tuple[Jet, Jet]:
    if a.space == b.space:
        return a, b
    space = a.space.meet(b.space)
    return a.truncate(space), b.truncate(space)


def _int_pow(a: Jet, n: int) -> Jet:
    if n < 0:
        return reciprocal(_int_pow(a, -n))
    result = Jet.constant(a.space, np.ones(a.shape))
    base = a
    while n:
        if n & 1:
            result = result * base
        n >>= 1
        if n:
            base = base * base
    return result


# -- seeding ----------------------------------------------------------------
def seed_point(space: JetSpace, values, active=(X1, X2, Y1, Y2)) -> list[Jet]:
    """One jet per coordinate function; inactive coordinates are constants."""
    values = [np.asarray(v, float) for v in values]
    if len(values) != N_VARS:
        raise ValueError("seed_point needs exactly four coordinate values")
    if not all(np.all(np.isfinite(v)) for v in values):
        raise DomainError("seed values must be finite")
    jets = []
    for var, v in enumerate(values):
        c = np.zeros(v.shape + (space.size,))
        c[..., 0] = v
        unit = [0, 0, 0, 0]
        unit[var] = 1
        unit = tuple(unit)
        if var in active and unit in space.position:
            c[..., space.position[unit]] = 1.0
        jets.append(Jet(space, c))
    return jets


# -- univariate series helpers (coefficient arrays, last axis = order) ------
def _series_recip(q: np.ndarray) -> np.ndarray:
    r = np.zeros_like(q)
    r[..., 0] = 1.0 / q[..., 0]
    for n in range(1, q.shape[-1]):
        r[..., n] = -np.sum(q[..., 1 : n + 1] * r[..., n - 1 :: -1][..., :n], axis=-1) * r[..., 0]
    return r


def _series_pow(q: np.ndarray, p: float) -> np.ndarray:
    # Miller's recurrence; requires q0 != 0.
    r = np.zeros_like(q)
    q0 = q[..., 0]
    r[..., 0] = q0**p
    for n in range(1, q.shape[-1]):
        k = np.arange(1, n + 1)
        w = (p + 1.0) * k - n
        r[..., n] = np.sum(w * q[..., 1 : n + 1] * r[..., n - k], axis=-1) / (n * q0)
    return r


def _shifted_quadratic(a0: np.ndarray, order: int) -> np.ndarray:
    """Coefficients of 1 + (a0 + h)^2 in powers of h."""
    q = np.zeros(np.shape(a0) + (order + 1,))
    q[..., 0] = 1.0 + a0 * a0
    if order >= 1:
        q[..., 1] = 2.0 * a0
    if order >= 2:
        q[..., 2] = 1.0
    return q


def _integrate_series(value: np.ndarray, d: np.ndarray) -> np.ndarray:
    order = d.shape[-1]
    out = np.empty(np.shape(value) + (order + 1,))
    out[..., 0] = value
    out[..., 1:] = d / np.arange(1, order + 1)
    return out


def compose(a: Jet, coeffs: np.ndarray) -> Jet:
    """Evaluate ``sum_k coeffs[k] (a - a0)^k`` (univariate Taylor composition).

    ``coeffs`` has shape ``a.shape + (K + 1,)`` with ``K = a.space.total_order``;
    extra trailing coefficients are ignored because ``(a - a0)`` is nilpotent.
    """
    K = a.space.total_order
    coeffs = np.asarray(coeffs, float)
    h = Jet(a.space, a.c.copy())
    h.c[..., 0] = 0.0
    result = Jet.constant(a.space, coeffs[..., K])
    for k in range(K - 1, -1, -1):
        result = result * h + coeffs[..., k]
    return result


def primitive(a: Jet, value, derivative: Callable[[Jet], Jet]) -> Jet:
    """Jet of ``P(a)`` where ``P' = derivative`` and ``P(a0) = value``.

    Only the value comes from the caller; every higher coefficient is taken
    exactly from the Taylor expansion of ``derivative`` about ``a0``.
    """
    K = a.space.total_order
    value = np.broadcast_to(np.asarray(value, float), a.shape)
    if K == 0:
        return Jet.constant(a.space, value)
    inner = JetSpace(K - 1, 0)
    s = seed_point(inner, (a.c[..., 0], 0.0, 0.0, 0.0), active=(X1,))[0]
    d = derivative(s)
    dc = np.stack([np.broadcast_to(d.coeff((k, 0, 0, 0)), a.shape) for k in range(K)], axis=-1)
    return compose(a, _integrate_series(value, dc))


def _check(cond, message):
    if not np.all(cond):
        raise DomainError(message)


def reciprocal(a: Jet) -> Jet:
    a0 = a.c[..., 0]
    _check(a0 != 0, "division by a jet with zero value")
    K = a.space.total_order
    k = np.arange(K + 1)
    coeffs = (-1.0) ** k / a0[..., None] ** (k + 1)
    return compose(a, coeffs)


def exp(a: Jet) -> Jet:
    K = a.space.total_order
    fact = np.array([math.factorial(k) for k in range(K + 1)], float)
    return compose(a, np.exp(a.c[..., 0])[..., None] / fact)


def log(a: Jet) -> Jet:
    a0 = a.c[..., 0]
    _check(a0 > 0, "log of a non-positive value")
    K = a.space.total_order
    coeffs = np.empty(a0.shape + (K + 1,))
    coeffs[..., 0] = np.log(a0)
    for k in range(1, K + 1):
        coeffs[..., k] = (-1.0) ** (k + 1) / (k * a0**k)
    return compose(a, coeffs)


def pow_real(a: Jet, p: float) -> Jet:
    a0 = a.c[..., 0]
    _check(a0 > 0, f"real power {p} of a non-positive value")
    K = a.space.total_order
    coeffs = np.empty(a0.shape + (K + 1,))
    binom = 1.0
    for k in range(K + 1):
        coeffs[..., k] = binom * a0 ** (p - k)
        binom *= (p - k) / (k + 1)
    return compose(a, coeffs)


def sqrt(a: Jet) -> Jet:
    _check(a.c[..., 0] > 0, "sqrt of a non-positive value")
    return pow_real(a, 0.5)


def sin(a: Jet) -> Jet:
    return _sincos(a, 0)


def cos(a: Jet) -> Jet:
    return _sincos(a, 1)


def _sincos(a: Jet, shift: int) -> Jet:
    a0 = a.c[..., 0]
    K = a.space.total_order
    cycle = [np.sin(a0), np.cos(a0), -np.sin(a0), -np.cos(a0)]
    coeffs = np.stack(
        [cycle[(k + shift) % 4] / math.factorial(k) for k in range(K + 1)], axis=-1
    )
    return compose(a, coeffs)


def atan(a: Jet) -> Jet:
    a0 = a.c[..., 0]
    K = a.space.total_order
    if K == 0:
        return Jet.constant(a.space, np.arctan(a0))
    d = _series_recip(_shifted_quadratic(a0, K - 1))
    return compose(a, _integrate_series(np.arctan(a0), d))


def asinh(a: Jet) -> Jet:
    a0 = a.c[..., 0]
    K = a.space.total_order
    if K == 0:
        return Jet.constant(a.space, np.arcsinh(a0))
    d = _series_pow(_shifted_quadratic(a0, K - 1), -0.5)
    return compose(a, _integrate_series(np.arcsinh(a0), d))


def neg(a: Jet) -> Jet:
    return -a


FUNCTIONS: dict[str, Callable[[Jet], Jet]] = {
    "neg": neg,
    "sqrt": sqrt,
    "exp": exp,
    "log": log,
    "sin": sin,
    "cos": cos,
    "atan": atan,
    "asinh": asinh,
}


def jet_arith(a, b, op: str):
    return {"add": lambda: a + b, "sub": lambda: a - b, "mul": lambda: a * b, "div": lambda: a / b}[op]()


def jet_func(name: str, a: Jet, p: float | None = None) -> Jet:
    if name == "pow_real":
        return pow_real(a, p)
    return FUNCTIONS[name](a)


def partial(a: Jet, index) -> float | np.ndarray:
    return a.partial(index)


def jeinsum(subscripts: str, *operands: Jet) -> Jet:
    """``np.einsum`` over the trailing batch axes of jets (no repeated output).

    Leading batch axes not named in the subscripts broadcast.  Example:
    ``jeinsum("ij,j->i", a_inv, b)`` raises the index of a covector.
    """
    lhs, out = subscripts.replace(" ", "").split("->")
    subs = lhs.split(",")
    if len(subs) != len(operands):
        raise ValueError("subscript count does not match operand count")
    letters = []
    for s in subs:
        for ch in s:
            if ch not in letters:
                letters.append(ch)
    sizes = {}
    aligned = []
    for s, op in zip(subs, operands):
        nt = len(s)
        shape = op.shape
        lead = shape[: len(shape) - nt]
        tshape = shape[len(shape) - nt :]
        for ch, n in zip(s, tshape):
            if sizes.setdefault(ch, n) != n:
                raise ValueError(f"index {ch} has inconsistent sizes")
        perm = list(range(len(lead))) + [len(lead) + s.index(ch) for ch in letters if ch in s]
        c = op.c.transpose(*perm, len(shape))
        new_shape = lead + tuple(sizes[ch] if ch in s else 1 for ch in letters)
        aligned.append(Jet(op.space, c.reshape(new_shape + (op.space.size,))))
    result = aligned[0]
    for op in aligned[1:]:
        result = result * op
    nl = len(letters)
    summed = [i - nl for i, ch in enumerate(letters) if ch not in out]
    if summed:
        result = result.sum(axis=summed)
    remaining = [ch for ch in letters if ch in out]
    nb = len(result.shape)
    lead = list(range(nb - len(remaining)))
    perm = lead + [nb - len(remaining) + remaining.index(ch) for ch in out]
    return result.transpose(*perm)
