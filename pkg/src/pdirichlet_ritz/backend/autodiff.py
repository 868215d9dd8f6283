"""Reverse-mode differentiation over a scalar tape, with forward-mode spatial jets on top.

Every tape node is one scalar operation. A node's value is either a float64 scalar or a 1-D float64
array holding the same scalar operation evaluated at every quadrature point ("lanes"); parameters are
always scalar leaves, so adjoints flowing into them are reduced over the lanes.

用法::

    value, gradient = grad(lambda theta: theta[0] * theta[1], [3.0, 4.0])   # 12.0, [4., 3.]

The same program runs without a tape when it is handed plain floats or a numpy array, which is what
:func:`check_gradient` relies on.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from pdirichlet_ritz.backend.exceptions import NonFiniteError


logger = logging.getLogger(__name__)

Value = Union[float, np.ndarray]

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715
TWO_PI = 2.0 * math.pi

_VAR = 0
_CONST = 1


def lane_sum(x: Value, reproducible: bool = True) -> Value:
    """Reduce the lanes of ``x`` to one scalar, strictly left to right when ``reproducible``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return np.float64(arr)
    if arr.size == 0:
        return np.float64(0.0)
    if reproducible:
        return np.add.accumulate(arr.ravel())[-1]
    return np.sum(arr)


def _scalarize(x: Any) -> Value:
    if isinstance(x, np.ndarray) and x.ndim == 0:
        return x[()]
    return x


# ---------------------------------------------------------------------------
# activations: value, first and second derivative
# ---------------------------------------------------------------------------
def _relu2(x):
    r = np.maximum(x, 0.0)
    return r * r


def _relu2_d1(x):
    return 2.0 * np.maximum(x, 0.0)


def _relu2_d2(x):
    return _scalarize(np.where(np.asarray(x) > 0.0, 2.0, 0.0))


def _gelu_parts(x):
    u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)
    t = np.tanh(u)
    du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
    return t, du


def _gelu(x):
    t, _ = _gelu_parts(x)
    return 0.5 * x * (1.0 + t)


def _gelu_d1(x):
    t, du = _gelu_parts(x)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du


def _gelu_d2(x):
    t, du = _gelu_parts(x)
    ddu = 6.0 * GELU_CUBIC * SQRT_2_OVER_PI * x
    sech2 = 1.0 - t * t
    return sech2 * du + 0.5 * x * sech2 * (ddu - 2.0 * t * du * du)


def _s2relu(x):
    return np.sin(TWO_PI * x) * np.maximum(x, 0.0) * np.maximum(1.0 - x, 0.0)


def _s2relu_d1(x):
    x = np.asarray(x, dtype=np.float64)
    inside = (x > 0.0) & (x < 1.0)
    s, c = np.sin(TWO_PI * x), np.cos(TWO_PI * x)
    q, dq = x * (1.0 - x), 1.0 - 2.0 * x
    return _scalarize(np.where(inside, TWO_PI * c * q + s * dq, 0.0))


def _s2relu_d2(x):
    x = np.asarray(x, dtype=np.float64)
    inside = (x > 0.0) & (x < 1.0)
    s, c = np.sin(TWO_PI * x), np.cos(TWO_PI * x)
    q, dq = x * (1.0 - x), 1.0 - 2.0 * x
    return _scalarize(np.where(inside, -TWO_PI * TWO_PI * s * q + 2.0 * TWO_PI * c * dq - 2.0 * s, 0.0))


ACTIVATIONS: Dict[str, Tuple[Callable, Callable, Callable]] = {
    "relu2": (_relu2, _relu2_d1, _relu2_d2),
    "gelu": (_gelu, _gelu_d1, _gelu_d2),
    "s2relu": (_s2relu, _s2relu_d1, _s2relu_d2),
}


def activation_triple(name: str) -> Tuple[Callable, Callable, Callable]:
    """(g, g', g'') for one of ``relu2``, ``gelu``, ``s2relu``."""
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"Unknown activation '{name}', expected one of {sorted(ACTIVATIONS)}") from None


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------
def _pow_value(a, q):
    a = np.asarray(a, dtype=np.float64)
    zero = a == 0.0
    safe = np.where(zero, 1.0, a)
    return _scalarize(np.where(zero, 0.0, safe ** q))


def _pow_partial(a, q):
    a = np.asarray(a, dtype=np.float64)
    zero = a == 0.0
    safe = np.where(zero, 1.0, a)
    at_zero = np.where(np.equal(q, 1.0), 1.0, 0.0)
    return _scalarize(np.where(zero, at_zero, q * safe ** (np.asarray(q) - 1.0)))


def _resolve(ref, args):
    kind, payload = ref
    return args[payload] if kind == _VAR else payload


def _dot_value(args, aux):
    offset, pairs = aux
    acc = _resolve(offset, args)
    for w, x in pairs:
        acc = acc + _resolve(w, args) * _resolve(x, args)
    return acc


def _dot_partials(args, out, aux):
    offset, pairs = aux
    partials: List[Any] = [0.0] * len(args)
    if offset[0] == _VAR:
        partials[offset[1]] = partials[offset[1]] + 1.0
    for w, x in pairs:
        if w[0] == _VAR:
            partials[w[1]] = partials[w[1]] + _resolve(x, args)
        if x[0] == _VAR:
            partials[x[1]] = partials[x[1]] + _resolve(w, args)
    return tuple(partials)


@dataclass(frozen=True)
class Primitive:
    forward: Callable[[Sequence[Value], Any], Value]
    partials: Callable[[Sequence[Value], Value, Any], Tuple[Value, ...]]


PRIMITIVES: Dict[str, Primitive] = {
    "add": Primitive(lambda a, aux: a[0] + a[1], lambda a, out, aux: (1.0, 1.0)),
    "sub": Primitive(lambda a, aux: a[0] - a[1], lambda a, out, aux: (1.0, -1.0)),
    "mul": Primitive(lambda a, aux: a[0] * a[1], lambda a, out, aux: (a[1], a[0])),
    "div": Primitive(lambda a, aux: a[0] / a[1], lambda a, out, aux: (1.0 / a[1], -out / a[1])),
    "neg": Primitive(lambda a, aux: -a[0], lambda a, out, aux: (-1.0,)),
    "add_const": Primitive(lambda a, aux: a[0] + aux, lambda a, out, aux: (1.0,)),
    "sub_const": Primitive(lambda a, aux: a[0] - aux, lambda a, out, aux: (1.0,)),
    "rsub_const": Primitive(lambda a, aux: aux - a[0], lambda a, out, aux: (-1.0,)),
    "mul_const": Primitive(lambda a, aux: a[0] * aux, lambda a, out, aux: (aux,)),
    "div_const": Primitive(lambda a, aux: a[0] / aux, lambda a, out, aux: (1.0 / aux,)),
    "rdiv_const": Primitive(lambda a, aux: aux / a[0], lambda a, out, aux: (-out / a[0],)),
    "pow_const": Primitive(lambda a, aux: _pow_value(a[0], aux), lambda a, out, aux: (_pow_partial(a[0], aux),)),
    "abs": Primitive(lambda a, aux: np.abs(a[0]), lambda a, out, aux: (np.sign(a[0]),)),
    "max_const": Primitive(
        lambda a, aux: np.maximum(a[0], aux),
        lambda a, out, aux: (_scalarize(np.where(np.asarray(a[0]) > aux, 1.0, 0.0)),),
    ),
    "sin": Primitive(lambda a, aux: np.sin(a[0]), lambda a, out, aux: (np.cos(a[0]),)),
    "cos": Primitive(lambda a, aux: np.cos(a[0]), lambda a, out, aux: (-np.sin(a[0]),)),
    "tanh": Primitive(lambda a, aux: np.tanh(a[0]), lambda a, out, aux: (1.0 - out * out,)),
    "exp": Primitive(lambda a, aux: np.exp(a[0]), lambda a, out, aux: (out,)),
    "sum": Primitive(lambda a, aux: lane_sum(a[0], aux), lambda a, out, aux: (1.0,)),
    "dot": Primitive(_dot_value, _dot_partials),
}
for _name, (_g, _g1, _g2) in ACTIVATIONS.items():
    PRIMITIVES[f"act:{_name}"] = Primitive(
        lambda a, aux, g=_g: g(a[0]), lambda a, out, aux, g1=_g1: (g1(a[0]),)
    )
    PRIMITIVES[f"dact:{_name}"] = Primitive(
        lambda a, aux, g1=_g1: g1(a[0]), lambda a, out, aux, g2=_g2: (g2(a[0]),)
    )


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------
class Tape:
    """Append-only record of scalar operations, single threaded."""

    __slots__ = ("reproducible", "kinds", "operands", "partials", "values", "aux")

    def __init__(self, reproducible: bool = True):
        self.reproducible = reproducible
        self.kinds: List[str] = []
        self.operands: List[Tuple[int, ...]] = []
        self.partials: List[Tuple[Value, ...]] = []
        self.values: List[Value] = []
        self.aux: List[Any] = []

    def __len__(self) -> int:
        return len(self.values)

    def _push(self, kind: str, value: Value, operands: Tuple[int, ...], partials: Tuple[Value, ...], aux: Any) -> "Var":
        self.kinds.append(kind)
        self.operands.append(operands)
        self.partials.append(partials)
        self.values.append(value)
        self.aux.append(aux)
        return Var(self, len(self.values) - 1)

    def leaf(self, value: Value) -> "Var":
        return self._push("leaf", _scalarize(np.asarray(value, dtype=np.float64)), (), (), None)

    def variables(self, theta: Sequence[float]) -> List["Var"]:
        return [self.leaf(t) for t in np.asarray(theta, dtype=np.float64).ravel()]

    def apply(self, kind: str, operands: Sequence["Var"], aux: Any = None) -> "Var":
        for op in operands:
            if op.tape is not self:
                raise ValueError("Cannot combine variables recorded on different tapes")
        primitive = PRIMITIVES[kind]
        args = [self.values[op.index] for op in operands]
        with np.errstate(all="ignore"):
            value = _scalarize(primitive.forward(args, aux))
            partials = tuple(_scalarize(p) for p in primitive.partials(args, value, aux))
        return self._push(kind, value, tuple(op.index for op in operands), partials, aux)

    def replay(self) -> List[Value]:
        """Recompute every value from the leaves using the recorded operations."""
        values: List[Value] = []
        with np.errstate(all="ignore"):
            for kind, ops, aux, stored in zip(self.kinds, self.operands, self.aux, self.values):
                if kind == "leaf":
                    values.append(stored)
                else:
                    values.append(_scalarize(PRIMITIVES[kind].forward([values[i] for i in ops], aux)))
        return values

    def _fit(self, contrib: Value, index: int) -> Value:
        target = np.shape(self.values[index])
        if np.shape(contrib) == target:
            return contrib
        if target == ():
            return lane_sum(contrib, self.reproducible)
        return np.broadcast_to(contrib, target)

    def backward(self, output: "Var", wrt: Sequence["Var"]) -> np.ndarray:
        adjoints: List[Optional[Value]] = [None] * len(self.values)
        adjoints[output.index] = np.float64(1.0)
        with np.errstate(all="ignore"):
            for k in range(output.index, -1, -1):
                adj = adjoints[k]
                if adj is None:
                    continue
                for i, partial in zip(self.operands[k], self.partials[k]):
                    if type(partial) is float and partial == 1.0:
                        contrib = adj
                    else:
                        contrib = adj * partial
                    contrib = self._fit(contrib, i)
                    adjoints[i] = contrib if adjoints[i] is None else adjoints[i] + contrib
        return np.array([0.0 if adjoints[v.index] is None else float(adjoints[v.index]) for v in wrt])

    def first_non_finite(self) -> Optional[Tuple[int, str, Optional[int]]]:
        """(node index, kind, lane) of the first node holding a non-finite value or partial."""
        for k, value in enumerate(self.values):
            bad = ~np.isfinite(value)
            if np.any(bad):
                lane = int(np.flatnonzero(bad)[0]) if np.ndim(value) else None
                return k, self.kinds[k], lane
        for k, partials in enumerate(self.partials):
            for partial in partials:
                bad = ~np.isfinite(partial)
                if np.any(bad):
                    lane = int(np.flatnonzero(bad)[0]) if np.ndim(partial) else None
                    return k, self.kinds[k], lane
        return None

    def raise_non_finite(self) -> None:
        found = self.first_non_finite()
        if found is None:
            raise NonFiniteError("adjoint")
        index, kind, lane = found
        logger.error(f"Non-finite value at tape node #{index} ({kind}), lane {lane}")
        raise NonFiniteError(kind, point_index=lane)


class Var:
    """Handle on one tape node."""

    __slots__ = ("tape", "index")
    # numpy must hand ``ndarray (op) Var`` back to Var's reflected operators
    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> Value:
        return self.tape.values[self.index]

    @property
    def kind(self) -> str:
        return self.tape.kinds[self.index]

    def __repr__(self) -> str:
        return f"Var(#{self.index} {self.kind}, value={self.value!r})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return self.tape.apply("neg", (self,))

    def __pow__(self, exponent):
        return power(self, exponent)

    def __abs__(self):
        return absolute(self)


# ---------------------------------------------------------------------------
# operations that accept both Vars and constants
# ---------------------------------------------------------------------------
def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating)) or (isinstance(x, np.ndarray) and x.ndim == 0)


def is_zero(x) -> bool:
    """True only for exact scalar zeros, these are skipped when building jets."""
    return _is_scalar(x) and x == 0.0


def _is_one(x) -> bool:
    return _is_scalar(x) and x == 1.0


def add(a, b):
    if isinstance(a, Var):
        if isinstance(b, Var):
            return a.tape.apply("add", (a, b))
        return a if is_zero(b) else a.tape.apply("add_const", (a,), b)
    if isinstance(b, Var):
        return b if is_zero(a) else b.tape.apply("add_const", (b,), a)
    if is_zero(a):
        return b
    if is_zero(b):
        return a
    return a + b


def sub(a, b):
    if isinstance(a, Var):
        if isinstance(b, Var):
            return a.tape.apply("sub", (a, b))
        return a if is_zero(b) else a.tape.apply("sub_const", (a,), b)
    if isinstance(b, Var):
        return b.tape.apply("neg", (b,)) if is_zero(a) else b.tape.apply("rsub_const", (b,), a)
    if is_zero(b):
        return a
    return a - b


def mul(a, b):
    if isinstance(a, Var):
        if isinstance(b, Var):
            return a.tape.apply("mul", (a, b))
        if is_zero(b):
            return 0.0
        return a if _is_one(b) else a.tape.apply("mul_const", (a,), b)
    if isinstance(b, Var):
        if is_zero(a):
            return 0.0
        return b if _is_one(a) else b.tape.apply("mul_const", (b,), a)
    if is_zero(a) or is_zero(b):
        return 0.0
    return a * b


def div(a, b):
    if isinstance(a, Var):
        if isinstance(b, Var):
            return a.tape.apply("div", (a, b))
        return a.tape.apply("div_const", (a,), b)
    if isinstance(b, Var):
        return b.tape.apply("rdiv_const", (b,), a)
    with np.errstate(all="ignore"):
        return a / b


def power(a, exponent):
    """``a ** exponent`` for a constant exponent > 0, defined as 0 (with slope 0) at ``a == 0``."""
    if isinstance(exponent, Var):
        raise TypeError("power() needs a constant exponent")
    if np.any(np.asarray(exponent) <= 0.0):
        raise ValueError("power() is only defined for positive exponents")
    if isinstance(a, Var):
        return a.tape.apply("pow_const", (a,), exponent)
    with np.errstate(all="ignore"):
        return _pow_value(a, exponent)


def _unary(kind: str, x, aux=None):
    if isinstance(x, Var):
        return x.tape.apply(kind, (x,), aux)
    with np.errstate(all="ignore"):
        return _scalarize(PRIMITIVES[kind].forward((x,), aux))


def absolute(x):
    return _unary("abs", x)


def sin(x):
    return _unary("sin", x)


def cos(x):
    return _unary("cos", x)


def tanh(x):
    return _unary("tanh", x)


def exp(x):
    return _unary("exp", x)


def maximum(x, c: float):
    return _unary("max_const", x, c)


def activation(x, name: str):
    activation_triple(name)
    return _unary(f"act:{name}", x)


def activation_prime(x, name: str):
    activation_triple(name)
    return _unary(f"dact:{name}", x)


def total(x, reproducible: bool = True):
    """Sum over lanes; on a tape the tape's own reproducible flag wins."""
    if isinstance(x, Var):
        return x.tape.apply("sum", (x,), x.tape.reproducible)
    return lane_sum(x, reproducible)


def dot(weights: Sequence, inputs: Sequence, offset=0.0):
    """offset + Σ weights[i] * inputs[i], accumulated left to right as a single tape node."""
    if len(weights) != len(inputs):
        raise ValueError(f"dot() got {len(weights)} weights for {len(inputs)} inputs")
    tape: Optional[Tape] = None
    operands: List[Var] = []
    positions: Dict[int, int] = {}

    def ref(x):
        nonlocal tape
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            if x.index not in positions:
                positions[x.index] = len(operands)
                operands.append(x)
            return (_VAR, positions[x.index])
        return (_CONST, x)

    offset_ref = ref(offset)
    pairs = tuple((ref(w), ref(x)) for w, x in zip(weights, inputs) if not (is_zero(w) or is_zero(x)))
    if tape is None:
        with np.errstate(all="ignore"):
            return _scalarize(_dot_value((), (offset_ref, pairs)))
    if not pairs and offset_ref[0] == _VAR:
        return offset
    return tape.apply("dot", operands, (offset_ref, pairs))


def value_of(x) -> Value:
    """Numeric value of a Var or constant."""
    return x.value if isinstance(x, Var) else x


# ---------------------------------------------------------------------------
# spatial jets
# ---------------------------------------------------------------------------
class Jet:
    """A value together with its derivatives along the tracked spatial coordinates."""

    __slots__ = ("value", "directional")

    def __init__(self, value, directional: Sequence = ()):
        self.value = value
        self.directional = list(directional)

    @classmethod
    def constant(cls, value, k: int) -> "Jet":
        return cls(value, [0.0] * k)

    @property
    def order(self) -> int:
        return len(self.directional)

    def _coerce(self, other) -> "Jet":
        return other if isinstance(other, Jet) else Jet.constant(other, self.order)

    def __add__(self, other) -> "Jet":
        o = self._coerce(other)
        return Jet(add(self.value, o.value), [add(d, e) for d, e in zip(self.directional, o.directional)])

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        o = self._coerce(other)
        return Jet(sub(self.value, o.value), [sub(d, e) for d, e in zip(self.directional, o.directional)])

    def __rsub__(self, other) -> "Jet":
        return self._coerce(other).__sub__(self)

    def __neg__(self) -> "Jet":
        return Jet(mul(self.value, -1.0), [mul(d, -1.0) for d in self.directional])

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return Jet(mul(self.value, other), [mul(d, other) for d in self.directional])
        return Jet(
            mul(self.value, other.value),
            [add(mul(d, other.value), mul(self.value, e)) for d, e in zip(self.directional, other.directional)],
        )

    __rmul__ = __mul__

    def _chain(self, outer, outer_prime) -> "Jet":
        value = outer(self.value)
        if all(is_zero(d) for d in self.directional):
            return Jet.constant(value, self.order)
        slope = outer_prime(self.value)
        return Jet(value, [mul(slope, d) for d in self.directional])

    def activate(self, name: str) -> "Jet":
        """g(jet): records g and g' on the tape, so the reverse pass runs through g''."""
        return self._chain(lambda v: activation(v, name), lambda v: activation_prime(v, name))

    def sin(self) -> "Jet":
        return self._chain(sin, cos)

    def cos(self) -> "Jet":
        return self._chain(cos, lambda v: mul(sin(v), -1.0))


def coordinate_jets(x: Sequence, tracked: Sequence[int]) -> List[Jet]:
    """Seed jets for the inputs ``x``; input ``tracked[k]`` gets a unit k-th direction."""
    tracked = list(tracked)
    if len(set(tracked)) != len(tracked):
        raise ValueError(f"Tracked indices must be unique, got {tracked}")
    for i in tracked:
        if not 0 <= i < len(x):
            raise ValueError(f"Tracked index {i} is out of range for an input of length {len(x)}")
    return [Jet(xi, [1.0 if t == i else 0.0 for t in tracked]) for i, xi in enumerate(x)]


def jet_eval(program: Callable[[List[Jet]], Any], x: Sequence, tracked: Sequence[int]) -> Jet:
    """Evaluate ``program`` on seeded jets of ``x`` and return its jet."""
    result = program(coordinate_jets(x, tracked))
    return result if isinstance(result, Jet) else Jet.constant(result, len(list(tracked)))


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------
def grad(program: Callable[[Sequence], Any], theta: Sequence[float], reproducible: bool = True) -> Tuple[float, np.ndarray]:
    """Value and gradient of a scalar ``program`` at ``theta``."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    tape = Tape(reproducible)
    params = tape.variables(theta)
    out = program(params)
    if not isinstance(out, Var):
        value = float(out)
        if not math.isfinite(value):
            raise NonFiniteError("constant")
        return value, np.zeros_like(theta)
    if np.ndim(out.value) != 0:
        raise ValueError(f"grad() needs a scalar program, got lanes of shape {np.shape(out.value)}")
    value = float(out.value)
    if not math.isfinite(value):
        tape.raise_non_finite()
    gradient = tape.backward(out, params)
    if not np.all(np.isfinite(gradient)):
        tape.raise_non_finite()
    return value, gradient


def check_gradient(
    program: Callable[[Sequence], Any],
    theta: Sequence[float],
    h: float = 1e-5,
    coordinates: Optional[Sequence[int]] = None,
    floor: float = 1e-12,
) -> float:
    """Max over coordinates of |AD − FD| / max(|AD|, |FD|, floor) with central differences of step ``h``."""
    if h <= 0:
        raise ValueError(f"Finite-difference step must be positive, got {h}")
    theta = np.asarray(theta, dtype=np.float64).ravel()
    _, gradient = grad(program, theta)
    indices = range(theta.size) if coordinates is None else coordinates
    worst = 0.0
    for i in indices:
        plus, minus = theta.copy(), theta.copy()
        plus[i] += h
        minus[i] -= h
        fd = (float(program(plus)) - float(program(minus))) / (2.0 * h)
        ad = float(gradient[i])
        worst = max(worst, abs(ad - fd) / max(abs(ad), abs(fd), floor))
    return worst
