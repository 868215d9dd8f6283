"""Config-expressible formulas: right-hand sides f(𝓹,x), exponents p(𝓹), domain maps and lifts.

Formulas are plain strings over named input coordinates, parsed with sympy and compiled to numpy::

    f = compile_expression("A/(2*pi*sigma)*exp(-((x-x0)**2+(y-y0)**2)/(2*sigma**2))",
                           ("A", "sigma", "x0", "y0", "p", "x", "y"))
    values = f(points)            # points: (N, 7)
"""
import logging
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np
import sympy


logger = logging.getLogger(__name__)


class Expression:
    """A sympy expression over ``names``, evaluated column-wise on point arrays."""

    def __init__(self, expr: sympy.Expr, names: Sequence[str]):
        self.names: Tuple[str, ...] = tuple(names)
        self.symbols = tuple(sympy.Symbol(n, real=True) for n in self.names)
        self.expr = expr
        unknown = {str(s) for s in expr.free_symbols} - set(self.names)
        if unknown:
            raise ValueError(f"Expression '{expr}' uses unknown coordinates {sorted(unknown)}, known: {list(self.names)}")
        self._fn = sympy.lambdify(self.symbols, expr, modules="numpy")

    @classmethod
    def parse(cls, text: str, names: Sequence[str]) -> "Expression":
        local = {n: sympy.Symbol(n, real=True) for n in names}
        try:
            expr = sympy.sympify(text, locals=local)
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ValueError(f"Cannot parse expression '{text}': {exc}") from exc
        return cls(expr, names)

    @property
    def text(self) -> str:
        return str(self.expr)

    @property
    def is_constant(self) -> bool:
        return not self.expr.free_symbols

    def derivative(self, name: str) -> "Expression":
        if name not in self.names:
            raise ValueError(f"Unknown coordinate '{name}', known: {list(self.names)}")
        return Expression(sympy.diff(self.expr, self.symbols[self.names.index(name)]), self.names)

    def __call__(self, points) -> np.ndarray:
        """Evaluate at ``points`` of shape (N, len(names)); a single point (len(names),) gives a scalar."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != len(self.names):
            raise ValueError(f"Expected points with {len(self.names)} coordinates {list(self.names)}, got {pts.shape[1]}")
        with np.errstate(all="ignore"):
            out = self._fn(*(pts[:, i] for i in range(pts.shape[1])))
        out = np.broadcast_to(np.asarray(out, dtype=np.float64), (pts.shape[0],)).copy()
        return out[0] if single else out

    def __repr__(self) -> str:
        return f"Expression({self.text!r}, names={list(self.names)})"


@lru_cache(maxsize=256)
def compile_expression(text: str, names: Tuple[str, ...]) -> Expression:
    """Cached :meth:`Expression.parse`."""
    logger.debug(f"Compiling expression '{text}' over {names}")
    return Expression.parse(text, names)


@lru_cache(maxsize=256)
def compile_derivative(text: str, names: Tuple[str, ...], wrt: str) -> Expression:
    return compile_expression(text, names).derivative(wrt)
