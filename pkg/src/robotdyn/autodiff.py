"""Automatic differentiation over plain floats and numpy arrays.

Two scalar flavours are provided:

* ``Dual`` -- forward mode with a fixed-width tuple of partials, used for
  Jacobians of vector functions with few inputs.
* ``Var`` -- reverse mode; every operation appends a node to a ``Tape`` and
  a single backward sweep yields the gradient of a scalar output.

All kinematics/dynamics code in this package is written against ordinary
arithmetic operators plus the module-level functions ``sin``, ``cos``,
``sqrt`` etc., so it runs unchanged on floats, numpy arrays (elementwise
batches), ``Dual`` and ``Var``.  The value channel of a ``Dual``/``Var``
always equals the plain-float evaluation: derivative bookkeeping never
changes the primal arithmetic.

Comparisons read the value channel only; at kinks (abs, min/max) the
derivative is that of the branch taken.
"""

from __future__ import annotations

import math

import numpy as np


class NonFiniteError(ArithmeticError):
    """A non-finite value appeared during an AD evaluation."""


# ---------------------------------------------------------------------------
# value-channel primitives (float -> math.*, ndarray -> np.*), non-throwing
# ---------------------------------------------------------------------------

def _is_num(x):
    return isinstance(x, (int, float, np.floating))


def _sin(x):
    return math.sin(x) if _is_num(x) else np.sin(x)


def _cos(x):
    return math.cos(x) if _is_num(x) else np.cos(x)


def _exp(x):
    if _is_num(x):
        try:
            return math.exp(x)
        except OverflowError:
            return math.inf
    with np.errstate(over="ignore"):
        return np.exp(x)


def _log(x):
    if _is_num(x):
        if x > 0.0:
            return math.log(x)
        return -math.inf if x == 0.0 else math.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(x)


def _sqrt(x):
    if _is_num(x):
        return math.sqrt(x) if x >= 0.0 else math.nan
    with np.errstate(invalid="ignore"):
        return np.sqrt(x)


def _acos(x):
    if _is_num(x):
        return math.acos(x) if -1.0 <= x <= 1.0 else math.nan
    with np.errstate(invalid="ignore"):
        return np.arccos(x)


def _div(a, b):
    # division by zero propagates inf/nan instead of raising
    if _is_num(a) and _is_num(b):
        if b != 0.0:
            return a / b
        if a == 0.0:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.divide(a, b)


def _where(c, a, b):
    if isinstance(c, np.ndarray) or isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.where(c, a, b)
    return a if c else b


def value(x):
    """Value channel of any supported scalar."""
    if isinstance(x, (Var, Dual)):
        return x.value
    return x


def _all_finite(v):
    return bool(np.all(np.isfinite(v)))


# ---------------------------------------------------------------------------
# reverse mode
# ---------------------------------------------------------------------------

class Tape:
    """Append-only record of elementary operations, in evaluation order."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def var(self, val, op="input", parents=()):
        v = Var(self, val, op, parents)
        self.nodes.append(v)
        return v


class Var:
    """Reverse-mode scalar: a node on a ``Tape``.

    ``value`` may be a float or a numpy array (an elementwise batch);
    broadcasting a scalar ``Var`` against array operands is supported and
    the backward sweep sums over the broadcast dimension.
    """

    __slots__ = ("tape", "value", "op", "parents", "adj")
    __array_ufunc__ = None  # force numpy to defer to our reflected operators

    def __init__(self, tape, val, op, parents):
        self.tape = tape
        self.value = val
        self.op = op
        self.parents = parents
        self.adj = None

    def _new(self, val, op, parents):
        return self.tape.var(val, op, parents)

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Var):
            return self._new(self.value + other.value, "add", ((self, 1.0), (other, 1.0)))
        return self._new(self.value + other, "add", ((self, 1.0),))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self._new(self.value - other.value, "sub", ((self, 1.0), (other, -1.0)))
        return self._new(self.value - other, "sub", ((self, 1.0),))

    def __rsub__(self, other):
        return self._new(other - self.value, "rsub", ((self, -1.0),))

    def __mul__(self, other):
        if isinstance(other, Var):
            return self._new(self.value * other.value, "mul",
                             ((self, other.value), (other, self.value)))
        return self._new(self.value * other, "mul", ((self, other),))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            inv = _div(1.0, other.value)
            q = self.value * inv
            return self._new(q, "div", ((self, inv), (other, -q * inv)))
        inv = _div(1.0, other)
        return self._new(self.value * inv, "div", ((self, inv),))

    def __rtruediv__(self, other):
        inv = _div(1.0, self.value)
        q = other * inv
        return self._new(q, "rdiv", ((self, -q * inv),))

    def __neg__(self):
        return self._new(-self.value, "neg", ((self, -1.0),))

    def __pow__(self, p):
        if not _is_num(p):
            raise TypeError("Var ** exponent must be a plain number")
        v = self.value ** p
        return self._new(v, "pow", ((self, p * self.value ** (p - 1.0)),))

    def __abs__(self):
        s = np.sign(self.value) if isinstance(self.value, np.ndarray) else float(np.sign(self.value))
        return self._new(abs(self.value), "abs", ((self, s),))

    # -- comparisons read the value channel only ----------------------------
    def __lt__(self, other):
        return self.value < value(other)

    def __le__(self, other):
        return self.value <= value(other)

    def __gt__(self, other):
        return self.value > value(other)

    def __ge__(self, other):
        return self.value >= value(other)

    def __repr__(self):
        return f"Var({self.value!r}, op={self.op})"


def backward(y):
    """Backward sweep from scalar output ``y``; fills ``adj`` on its tape."""
    tape = y.tape
    for n in tape.nodes:
        n.adj = None
    y.adj = 1.0
    for node in reversed(tape.nodes):
        a = node.adj
        if a is None:
            continue
        for parent, partial in node.parents:
            g = partial * a
            if isinstance(g, np.ndarray) and not isinstance(parent.value, np.ndarray):
                g = float(g.sum())  # un-broadcast onto a scalar parent
            parent.adj = g if parent.adj is None else parent.adj + g


def _raise_first_nonfinite(tape):
    for node in tape.nodes:
        if not _all_finite(node.value):
            raise NonFiniteError(f"non-finite value produced by operation '{node.op}'")
    raise NonFiniteError("non-finite value with no offending tape node (constant input?)")


def gradient(f, x):
    """Gradient of scalar-valued ``f`` at ``x`` via one reverse sweep.

    ``f`` receives a list of ``Var`` and must return a ``Var`` (or a plain
    constant, in which case the gradient is zero).
    """
    tape = Tape()
    xs = [tape.var(float(xi)) for xi in x]
    y = f(xs)
    if not isinstance(y, Var):
        return np.zeros(len(xs))
    if not _all_finite(y.value):
        _raise_first_nonfinite(tape)
    backward(y)
    return np.array([0.0 if v.adj is None else float(np.sum(v.adj)) for v in xs])


# ---------------------------------------------------------------------------
# forward mode
# ---------------------------------------------------------------------------

class Dual:
    """Forward-mode scalar with a fixed-width tuple of partial derivatives."""

    __slots__ = ("value", "partials")
    __array_ufunc__ = None

    def __init__(self, val, partials):
        self.value = val
        self.partials = partials

    @staticmethod
    def seed(values):
        """Lift ``values`` into duals carrying the identity seed matrix."""
        n = len(values)
        return [Dual(float(v), tuple(1.0 if j == i else 0.0 for j in range(n)))
                for i, v in enumerate(values)]

    def _lift(self, other):
        if isinstance(other, Dual):
            return other
        return Dual(other, (0.0,) * len(self.partials))

    def __add__(self, other):
        o = self._lift(other)
        return Dual(self.value + o.value, tuple(a + b for a, b in zip(self.partials, o.partials)))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Dual(self.value - o.value, tuple(a - b for a, b in zip(self.partials, o.partials)))

    def __rsub__(self, other):
        o = self._lift(other)
        return o.__sub__(self)

    def __mul__(self, other):
        o = self._lift(other)
        return Dual(self.value * o.value,
                    tuple(a * o.value + self.value * b for a, b in zip(self.partials, o.partials)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        inv = _div(1.0, o.value)
        q = self.value * inv
        return Dual(q, tuple((a - q * b) * inv for a, b in zip(self.partials, o.partials)))

    def __rtruediv__(self, other):
        o = self._lift(other)
        return o.__truediv__(self)

    def __neg__(self):
        return Dual(-self.value, tuple(-a for a in self.partials))

    def __pow__(self, p):
        if not _is_num(p):
            raise TypeError("Dual ** exponent must be a plain number")
        d = p * self.value ** (p - 1.0)
        return Dual(self.value ** p, tuple(d * a for a in self.partials))

    def __abs__(self):
        s = float(np.sign(self.value))
        return Dual(abs(self.value), tuple(s * a for a in self.partials))

    def __lt__(self, other):
        return self.value < value(other)

    def __le__(self, other):
        return self.value <= value(other)

    def __gt__(self, other):
        return self.value > value(other)

    def __ge__(self, other):
        return self.value >= value(other)

    def __repr__(self):
        return f"Dual({self.value!r}, {self.partials!r})"


# ---------------------------------------------------------------------------
# elementary functions, dispatched on scalar flavour
# ---------------------------------------------------------------------------

def sin(x):
    if isinstance(x, Var):
        return x._new(_sin(x.value), "sin", ((x, _cos(x.value)),))
    if isinstance(x, Dual):
        d = _cos(x.value)
        return Dual(_sin(x.value), tuple(d * a for a in x.partials))
    return _sin(x)


def cos(x):
    if isinstance(x, Var):
        return x._new(_cos(x.value), "cos", ((x, -_sin(x.value)),))
    if isinstance(x, Dual):
        d = -_sin(x.value)
        return Dual(_cos(x.value), tuple(d * a for a in x.partials))
    return _cos(x)


def exp(x):
    if isinstance(x, Var):
        e = _exp(x.value)
        return x._new(e, "exp", ((x, e),))
    if isinstance(x, Dual):
        e = _exp(x.value)
        return Dual(e, tuple(e * a for a in x.partials))
    return _exp(x)


def log(x):
    if isinstance(x, Var):
        return x._new(_log(x.value), "log", ((x, _div(1.0, x.value)),))
    if isinstance(x, Dual):
        d = _div(1.0, x.value)
        return Dual(_log(x.value), tuple(d * a for a in x.partials))
    return _log(x)


def sqrt(x):
    if isinstance(x, Var):
        r = _sqrt(x.value)
        return x._new(r, "sqrt", ((x, _div(0.5, r)),))
    if isinstance(x, Dual):
        r = _sqrt(x.value)
        d = _div(0.5, r)
        return Dual(r, tuple(d * a for a in x.partials))
    return _sqrt(x)


def acos(x):
    if isinstance(x, Var):
        d = -_div(1.0, _sqrt(1.0 - x.value * x.value))
        return x._new(_acos(x.value), "acos", ((x, d),))
    if isinstance(x, Dual):
        d = -_div(1.0, _sqrt(1.0 - x.value * x.value))
        return Dual(_acos(x.value), tuple(d * a for a in x.partials))
    return _acos(x)


def where(cond, a, b):
    """Branch on a plain boolean (or boolean array) value; differentiable in a, b."""
    if isinstance(a, Var) or isinstance(b, Var):
        v = a if isinstance(a, Var) else b
        va, vb = value(a), value(b)
        parents = []
        if isinstance(a, Var):
            parents.append((a, _where(cond, 1.0, 0.0)))
        if isinstance(b, Var):
            parents.append((b, _where(cond, 0.0, 1.0)))
        return v._new(_where(cond, va, vb), "where", tuple(parents))
    if isinstance(a, Dual) or isinstance(b, Dual):
        d = a if isinstance(a, Dual) else b
        da = a.partials if isinstance(a, Dual) else (0.0,) * len(d.partials)
        db = b.partials if isinstance(b, Dual) else (0.0,) * len(d.partials)
        return Dual(_where(cond, value(a), value(b)),
                    tuple(_where(cond, pa, pb) for pa, pb in zip(da, db)))
    return _where(cond, a, b)


def maximum(a, b):
    return where(value(a) >= value(b), a, b)


def minimum(a, b):
    return where(value(a) <= value(b), a, b)


def asum(x):
    """Sum of an elementwise batch; reduces an array-valued node to a scalar."""
    if isinstance(x, Var):
        return x._new(float(np.sum(x.value)), "sum", ((x, 1.0),))
    if isinstance(x, Dual):
        return Dual(float(np.sum(x.value)), tuple(np.sum(p) for p in x.partials))
    return float(np.sum(x))


def amean(x):
    v = value(x)
    n = v.size if isinstance(v, np.ndarray) else 1
    return asum(x) / n


# ---------------------------------------------------------------------------
# driver-level helpers
# ---------------------------------------------------------------------------

def jacobian_fwd(f, x):
    """Full Jacobian of vector-valued ``f`` at ``x`` using n-wide duals."""
    n = len(x)
    ys = f(Dual.seed(x))
    rows = []
    for y in ys:
        if isinstance(y, Dual):
            rows.append(list(y.partials))
        else:
            rows.append([0.0] * n)
    return np.array(rows, dtype=float)


def check_gradient(f, x, step=1e-6):
    """Max relative error between the reverse-mode gradient and central FD."""
    if step <= 0.0:
        raise ValueError("step must be positive")
    x = [float(v) for v in x]
    g = gradient(f, x)
    err = 0.0
    for i in range(len(x)):
        xp = list(x)
        xm = list(x)
        xp[i] += step
        xm[i] -= step
        fd = (float(value(f(xp))) - float(value(f(xm)))) / (2.0 * step)
        err = max(err, abs(g[i] - fd) / max(1.0, abs(g[i])))
    return err
