"""Closed-form minimizers of the 1D benchmark families and a finite-difference Newton oracle.

Families (𝓹 is the parameter, x the spatial coordinate)::

    vrhs  p = 2,  f = 𝓹² sin(𝓹πx),  Ω = (−1, 1)    u* = (sin(𝓹πx) − sin(𝓹π) x) / π²
    vexp  p = 𝓹,  f = 1,            Ω = (−1, 1)    u* = (1 − |x|^{p'}) / p',  p' = 𝓹/(𝓹 − 1)
    vdom  p = 2,  f = 1,            Ω = (−𝓹, 𝓹)    u* = (𝓹² − x²) / 2

The oracle minimizes the discrete energy Σ h (1/p)(Du² + ε²)^{p/2} − Σ w f u on a uniform mesh by
damped Newton with Armijo backtracking.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pdirichlet_ritz.backend.constants import (
    ARMIJO_C,
    CSV_FLOAT_FORMAT,
    CSV_LINE_TERMINATOR,
    FD_GRADIENT_EPSILON,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
)
from pdirichlet_ritz.backend.exceptions import NewtonConvergenceError
from pdirichlet_ritz.backend.metrics.metrics_distance import natural_distance_sq
from pdirichlet_ritz.backend.metrics.metrics_training import NEWTON_ITERATIONS
from pdirichlet_ritz.backend.quadrature import QuadratureSet


logger = logging.getLogger(__name__)

FAMILIES = ("vrhs", "vexp", "vdom")
MAX_HALVINGS = 40
# a gradient entry is resolved once it is within this many ulps of u_i times H_ii
GRADIENT_ROUNDOFF_ULPS = 4.0
# energy comparisons are meaningful only above this many machine epsilons of the energy's magnitude
ENERGY_ROUNDOFF_ULPS = 64.0
INVERSE_BISECTIONS = 160
FLUX_BISECTIONS = 200


def _check_family(family: str) -> None:
    if family not in FAMILIES:
        raise ValueError(f"Unknown family '{family}', expected one of {list(FAMILIES)}")


def family_exponent(family: str, param: float) -> float:
    _check_family(family)
    return float(param) if family == "vexp" else 2.0


def family_rhs(family: str, param: float, x) -> np.ndarray:
    _check_family(family)
    x = np.asarray(x, dtype=np.float64)
    if family == "vrhs":
        return param * param * np.sin(param * math.pi * x)
    return np.ones_like(x)


def family_domain(family: str, param: float) -> Tuple[float, float]:
    _check_family(family)
    return (-float(param), float(param)) if family == "vdom" else (-1.0, 1.0)


def exact(family: str, param: float, x) -> Tuple[np.ndarray, np.ndarray]:
    """u*(𝓹, x) of shape (N,) and ∇ₓu* of shape (N, 1)."""
    _check_family(family)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    param = float(param)
    if family == "vrhs":
        pi2 = math.pi * math.pi
        u = (np.sin(param * math.pi * x) - math.sin(param * math.pi) * x) / pi2
        du = (param * math.pi * np.cos(param * math.pi * x) - math.sin(param * math.pi)) / pi2
    elif family == "vexp":
        if param == 1.0:
            raise ValueError("vexp needs 𝓹 != 1, the conjugate exponent is undefined at 1")
        conj = param / (param - 1.0)
        ax = np.abs(x)
        u = (1.0 - ax ** conj) / conj
        du = -np.sign(x) * ax ** (conj - 1.0)
    else:
        u = (param * param - x * x) / 2.0
        du = -x
    return u, du.reshape(-1, 1)


def exact_on_points(
    family: str, points, parameter_dim: int, fixed_parameter: Optional[float] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """u*, ∇ₓu* at network inputs (N, parameter_dim + 1): the parameter comes from the first column or
    from ``fixed_parameter`` when the problem has no parameter coordinate."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != parameter_dim + 1:
        raise ValueError(f"The {family} family is one-dimensional in x, got {points.shape[1]} input columns")
    x = points[:, parameter_dim]
    if parameter_dim == 0:
        if fixed_parameter is None:
            raise ValueError(f"The {family} reference needs a fixed parameter when the problem has none")
        return exact(family, fixed_parameter, x)
    params = points[:, 0]
    u, du = np.empty(x.size), np.empty((x.size, 1))
    for value in np.unique(params):
        mask = params == value
        u[mask], du[mask] = exact(family, value, x[mask])
    return u, du


def residual_check(family: str, param: float, n_points: int = 200, h: float = 1e-4) -> float:
    """max |−(A(D₊u*) − A(D₋u*))/h − f| with A(s) = |s|^{p−2}s, sampled away from x = 0 and ∂Ω."""
    if h <= 0:
        raise ValueError(f"Finite-difference step must be positive, got {h}")
    p = family_exponent(family, param)
    scale = float(param) if family == "vdom" else 1.0
    x = np.linspace(-0.99, 0.99, n_points) * scale
    x = x[np.abs(x) > 1e-3]

    def value(z):
        return exact(family, param, z)[0]

    def flux(s):
        return np.abs(s) ** (p - 2.0) * s

    forward = (value(x + h) - value(x)) / h
    backward = (value(x) - value(x - h)) / h
    residual = -(flux(forward) - flux(backward)) / h - family_rhs(family, param, x)
    worst = float(np.max(np.abs(residual)))
    logger.debug(f"Residual of {family} at 𝓹={param}: {worst:.3e} over {x.size} points")
    return worst


# ---------------------------------------------------------------------------
# finite-difference Newton oracle
# ---------------------------------------------------------------------------
@dataclass
class FDSolution:
    nodes: np.ndarray
    values: np.ndarray
    h: float
    newton_log: List[Dict[str, float]] = field(default_factory=list)
    p: float = 2.0
    bc: str = "dirichlet0"
    penalty: Optional[float] = None

    @property
    def iterations(self) -> int:
        return len(self.newton_log)

    def interpolate(self, x) -> np.ndarray:
        """Piecewise-linear reconstruction."""
        return np.interp(np.asarray(x, dtype=np.float64), self.nodes, self.values)

    def max_error(self, exact_fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """Max-norm error of the piecewise-linear reconstruction on nodes and cell midpoints."""
        mids = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        x = np.concatenate([self.nodes, mids])
        return float(np.max(np.abs(self.interpolate(x) - exact_fn(x))))

    def cell_gradients(self) -> np.ndarray:
        return np.diff(self.values) / self.h

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.nodes, "u": self.values})

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator=CSV_LINE_TERMINATOR)


class _DiscreteEnergy:
    """Discrete p-energy on n cells; unknowns are the free nodal values."""

    def __init__(self, p: float, load: np.ndarray, h: float, penalty: Optional[float], eps: float):
        self.p, self.load, self.h, self.penalty, self.eps = p, load, h, penalty, eps
        self.free = slice(None) if penalty is not None else slice(1, -1)

    def full(self, u_free: np.ndarray) -> np.ndarray:
        if self.penalty is not None:
            return u_free
        return np.concatenate([[0.0], u_free, [0.0]])

    def _reg(self, s):
        return s * s + self.eps * self.eps

    def value(self, u_free: np.ndarray) -> float:
        u = self.full(u_free)
        du = np.diff(u) / self.h
        total = self.h * np.sum(self._reg(du) ** (self.p / 2.0)) / self.p - np.dot(self.load, u)
        if self.penalty is not None:
            ends = u[[0, -1]]
            total += self.penalty / self.p * np.sum(self._reg(ends) ** (self.p / 2.0))
        return float(total)

    def magnitude(self, u_free: np.ndarray) -> float:
        """Sum of the absolute energy terms, the scale that roundoff in ``value`` is relative to."""
        u = self.full(u_free)
        du = np.diff(u) / self.h
        total = self.h * np.sum(self._reg(du) ** (self.p / 2.0)) / self.p + np.sum(np.abs(self.load * u))
        if self.penalty is not None:
            total += self.penalty / self.p * np.sum(self._reg(u[[0, -1]]) ** (self.p / 2.0))
        return float(total)

    def gradient(self, u_free: np.ndarray) -> np.ndarray:
        u = self.full(u_free)
        du = np.diff(u) / self.h
        flux = du * self._reg(du) ** (self.p / 2.0 - 1.0)
        g = np.zeros_like(u)
        g[1:] += flux
        g[:-1] -= flux
        g -= self.load
        if self.penalty is not None:
            for i in (0, -1):
                g[i] += self.penalty * u[i] * self._reg(u[i]) ** (self.p / 2.0 - 1.0)
        return g[self.free]

    def hessian(self, u_free: np.ndarray) -> np.ndarray:
        u = self.full(u_free)
        du = np.diff(u) / self.h
        r = self._reg(du)
        stiff = r ** (self.p / 2.0 - 2.0) * ((self.p - 1.0) * du * du + self.eps * self.eps) / self.h
        n = u.size
        H = np.zeros((n, n))
        idx = np.arange(n - 1)
        H[idx, idx] += stiff
        H[idx + 1, idx + 1] += stiff
        H[idx, idx + 1] -= stiff
        H[idx + 1, idx] -= stiff
        if self.penalty is not None:
            for i in (0, n - 1):
                ri = self._reg(u[i])
                H[i, i] += self.penalty * ri ** (self.p / 2.0 - 2.0) * ((self.p - 1.0) * u[i] * u[i] + self.eps * self.eps)
        return H[self.free, self.free]


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    try:
        d = np.linalg.solve(H, -g)
    except np.linalg.LinAlgError:
        return -g
    if not np.all(np.isfinite(d)) or float(np.dot(g, d)) >= 0.0:
        return -g
    return d


def _inverse_flux(t, p: float, eps: float) -> np.ndarray:
    """s with s (s² + ε²)^{(p−2)/2} = t, elementwise, for 1 < p < 2."""
    t = np.asarray(t, dtype=np.float64)
    a = np.abs(t)
    lo = np.zeros_like(a)
    # φ_ε(s) >= 2^{(p−2)/2} s^{p−1} for s >= ε, so this brackets the root
    hi = np.maximum(eps, 2.0 ** ((2.0 - p) / (2.0 * (p - 1.0))) * a ** (1.0 / (p - 1.0)))
    for _ in range(INVERSE_BISECTIONS):
        mid = 0.5 * (lo + hi)
        below = mid * (mid * mid + eps * eps) ** (p / 2.0 - 1.0) < a
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.sign(t) * 0.5 * (lo + hi)


def _flux_start(p: float, load: np.ndarray, h: float, penalty: Optional[float], eps: float) -> np.ndarray:
    """Regularized discrete minimizer for 1 < p < 2, built from the cell fluxes.

    Interior stationarity fixes the fluxes up to one constant, flux_j = c − Σ_{1≤k≤j} load_k. The
    boundary conditions leave one equation in c whose residual is nondecreasing, solved by bisection."""
    n = load.size - 1
    shift = np.concatenate([[0.0], np.cumsum(load[1:n])])

    def slopes(c: float) -> np.ndarray:
        return _inverse_flux(c - shift, p, eps)

    def ends(c: float) -> Tuple[float, float]:
        first = float(_inverse_flux((c + load[0]) / penalty, p, eps))
        last = float(_inverse_flux((load[-1] - c + shift[-1]) / penalty, p, eps))
        return first, last

    if penalty is None:
        def residual(c: float) -> float:
            return h * float(np.sum(slopes(c)))
        candidates = [shift.min(), shift.max()]
    else:
        def residual(c: float) -> float:
            first, last = ends(c)
            return first + h * float(np.sum(slopes(c))) - last
        candidates = [shift.min(), shift.max(), -load[0], load[-1] + shift[-1]]
    lo, hi = float(min(candidates)), float(max(candidates))
    for _ in range(FLUX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if residual(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    first = 0.0 if penalty is None else ends(c)[0]
    u = np.concatenate([[first], first + h * np.cumsum(slopes(c))])
    return u if penalty is not None else u[1:-1]


def _at_roundoff_floor(g: np.ndarray, H: np.ndarray, u_free: np.ndarray, tol: float) -> bool:
    """Every gradient entry is below tol or below what a few ulps of its own unknown can move it."""
    floor = GRADIENT_ROUNDOFF_ULPS * np.abs(np.diag(H)) * np.spacing(np.abs(u_free))
    return bool(np.all(np.abs(g) <= np.maximum(tol, floor)))


def fd_solve_1d(
    p: float,
    f: Callable[[np.ndarray], np.ndarray],
    domain: Tuple[float, float] = (-1.0, 1.0),
    n: int = 200,
    bc: str = "dirichlet0",
    penalty: Optional[float] = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    eps: float = FD_GRADIENT_EPSILON,
) -> FDSolution:
    """Minimize the discrete p-energy on ``n`` uniform cells, trapezoid load, zero Dirichlet or penalty ends."""
    if n < 3:
        raise ValueError(f"Need at least 3 cells, got n={n}")
    if not p > 1.0:
        raise ValueError(f"p must be > 1, got {p}")
    if bc not in ("dirichlet0", "penalty"):
        raise ValueError(f"Unknown boundary condition '{bc}'")
    if bc == "penalty" and (penalty is None or penalty < 0):
        raise ValueError(f"Penalty boundary condition needs λ >= 0, got {penalty}")
    a, b = domain
    if not a < b:
        raise ValueError(f"Domain needs a < b, got ({a}, {b})")
    nodes = np.linspace(a, b, n + 1)
    h = (b - a) / n
    weights = np.full(n + 1, h)
    weights[[0, -1]] = h / 2.0
    load = weights * np.broadcast_to(np.asarray(f(nodes), dtype=np.float64), nodes.shape)
    lam = penalty if bc == "penalty" else None

    if p < 2.0 and lam != 0.0:
        u = _flux_start(p, load, h, lam, eps)
    else:
        # the p = 2 energy is quadratic, one Newton step from zero is its exact minimizer
        linear = _DiscreteEnergy(2.0, load, h, lam, eps)
        start = np.zeros(n + 1 if lam is not None else n - 1)
        u = start + np.linalg.solve(linear.hessian(start), -linear.gradient(start))

    problem = _DiscreteEnergy(p, load, h, lam, eps)
    log: List[Dict[str, float]] = []
    energy = problem.value(u)
    g = problem.gradient(u)
    for iteration in range(max_iter + 1):
        g_norm = float(np.max(np.abs(g))) if g.size else 0.0
        if g_norm <= tol:
            break
        H = problem.hessian(u)
        if _at_roundoff_floor(g, H, u, tol):
            logger.debug(f"Newton stopped at the roundoff floor, |g| = {g_norm:.3e}")
            break
        if iteration == max_iter:
            raise NewtonConvergenceError(f"Newton did not reach |g| <= {tol} in {max_iter} iterations (|g| = {g_norm:.3e})", log)
        d = _newton_direction(H, g)
        slope = float(np.dot(g, d))
        resolution = ENERGY_ROUNDOFF_ULPS * np.finfo(np.float64).eps * problem.magnitude(u)
        step, accepted = 1.0, False
        if -slope > resolution:
            for _ in range(MAX_HALVINGS):
                trial = u + step * d
                trial_energy = problem.value(trial)
                if np.isfinite(trial_energy) and trial_energy <= energy + ARMIJO_C * step * slope:
                    accepted = True
                    break
                step *= 0.5
        if not accepted:
            # predicted decrease is below the energy's roundoff: take the full step only if the gradient
            # shrinks and the energy does not rise beyond that roundoff
            step, trial = 1.0, u + d
            trial_energy = problem.value(trial)
            trial_norm = float(np.max(np.abs(problem.gradient(trial))))
            if not (trial_energy <= energy + resolution and trial_norm < g_norm):
                raise NewtonConvergenceError(
                    f"Line search failed at iteration {iteration} (|g| = {g_norm:.3e}, "
                    f"ΔE = {trial_energy - energy:.3e}, |g_trial| = {trial_norm:.3e})", log)
        u, energy = trial, trial_energy
        g = problem.gradient(u)
        log.append({"iteration": iteration, "energy": energy, "gradient_norm": g_norm, "step": step})
        logger.debug(f"Newton #{iteration}: E={energy:.15e} |g|={g_norm:.3e} step={step:g}")
    NEWTON_ITERATIONS.labels(bc=bc).inc(len(log))
    return FDSolution(nodes=nodes, values=problem.full(u), h=h, newton_log=log, p=p, bc=bc, penalty=lam)


# ---------------------------------------------------------------------------
# boundary penalty rates
# ---------------------------------------------------------------------------
def cell_quadrature(solution: FDSolution) -> QuadratureSet:
    mids = 0.5 * (solution.nodes[:-1] + solution.nodes[1:])
    length = float(solution.nodes[-1] - solution.nodes[0])
    return QuadratureSet.uniform(mids.reshape(-1, 1), length, description=f"fd cells n={mids.size}")


def penalty_rate_study(
    p: float,
    f: Callable[[np.ndarray], np.ndarray],
    lambdas: Sequence[float],
    n: int = 400,
    domain: Tuple[float, float] = (-1.0, 1.0),
    **newton,
) -> pd.DataFrame:
    """Per λ: ‖u_λ‖^p on ∂Ω and ρ_F²(u_D, u_λ) against the zero-Dirichlet solution u_D."""
    if any(lam < 1.0 for lam in lambdas):
        raise ValueError(f"Penalty rates are defined for λ >= 1, got {list(lambdas)}")
    dirichlet = fd_solve_1d(p, f, domain, n, bc="dirichlet0", **newton)
    quad = cell_quadrature(dirichlet)
    rows = []
    for lam in lambdas:
        sol = fd_solve_1d(p, f, domain, n, bc="penalty", penalty=lam, **newton)
        ends = sol.values[[0, -1]]
        rows.append({
            "lambda": float(lam),
            "boundary_norm": float(np.sum(np.abs(ends) ** p)),
            "natural_sq": natural_distance_sq(p, quad, dirichlet.cell_gradients(), sol.cell_gradients()),
            "newton_iterations": sol.iterations,
        })
        logger.info(f"Penalty λ={lam:g}: boundary norm {rows[-1]['boundary_norm']:.6e}")
    return pd.DataFrame(rows)


def fit_rate(table: pd.DataFrame, x: str = "lambda", y: str = "boundary_norm") -> Dict[str, float]:
    """Least-squares fit y ≈ C · x^slope in log-log coordinates."""
    slope, intercept = np.polyfit(np.log(table[x].to_numpy()), np.log(table[y].to_numpy()), 1)
    return {"slope": float(slope), "constant": float(np.exp(intercept))}
