"""Dirichlet-type energies as quadrature sums over network evaluations.

For a problem with exponent p(𝓹) and right-hand side f(𝓹, x) the density is::

    (1/p) (|∇u|²)^{p/2} − f·u            (+ ½ u² for the mixed-mass variant)

and the energy is ``weight · Σ density`` over the interior set. The penalty variant adds
``(λ/p) · weight_b · Σ |u|^p`` over the boundary set. The same code runs on tape variables (for
training gradients) and on plain numpy arrays (for evaluation).
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from pdirichlet_ritz.backend.autodiff import Var, add, div, dot, mul, power, sub, total, value_of
from pdirichlet_ritz.backend.exceptions import NonFiniteError
from pdirichlet_ritz.backend.expression import Expression, compile_expression
from pdirichlet_ritz.backend.models import ArchSpec, RunConfig
from pdirichlet_ritz.backend.network import forward, forward_jet
from pdirichlet_ritz.backend.quadrature import QuadratureSet, boundary_grid_1d, grid_from_config, slice_grid


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FixedP:
    p: float


@dataclass(frozen=True)
class Penalty:
    p: float
    penalty: float


@dataclass(frozen=True)
class VariableRHS:
    p: float


@dataclass(frozen=True, eq=False)
class VariableExponent:
    p_of: Expression
    bounds: Tuple[float, float]


@dataclass(frozen=True, eq=False)
class VariableDomain:
    p: float
    half_width: Expression


@dataclass(frozen=True, eq=False)
class MixedMass:
    p_of: Expression


Variant = Union[FixedP, Penalty, VariableRHS, VariableExponent, VariableDomain, MixedMass]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One energy variant with its data and quadrature; the network input is params ++ spatial."""

    variant: Variant
    rhs: Expression
    interior_quad: QuadratureSet
    parameter_names: Tuple[str, ...] = ()
    spatial_names: Tuple[str, ...] = ("x",)
    boundary_quad: Optional[QuadratureSet] = None
    resample: Optional[Callable[[int], QuadratureSet]] = None

    def __post_init__(self):
        if isinstance(self.variant, Penalty):
            if self.boundary_quad is None:
                raise ValueError("The penalty variant needs a boundary quadrature")
            if self.variant.penalty < 0:
                raise ValueError(f"Penalty λ must be >= 0, got {self.variant.penalty}")
        elif self.boundary_quad is not None:
            raise ValueError(f"{type(self.variant).__name__} does not take a boundary quadrature")
        if self.interior_quad.dim != len(self.names):
            raise ValueError(f"Interior points have {self.interior_quad.dim} coordinates, inputs are {list(self.names)}")
        if self.boundary_quad is not None and self.boundary_quad.dim != len(self.names):
            raise ValueError(f"Boundary points have {self.boundary_quad.dim} coordinates, inputs are {list(self.names)}")
        if tuple(self.rhs.names) != self.names:
            raise ValueError(f"rhs is written over {list(self.rhs.names)}, inputs are {list(self.names)}")
        if not isinstance(self.variant, (VariableExponent, MixedMass)) and not self.variant.p > 1.0:
            raise ValueError(f"p must be > 1, got {self.variant.p}")
        if isinstance(self.variant, VariableExponent):
            self._check_exponent_bounds(self.interior_quad)

    def _check_exponent_bounds(self, quad: QuadratureSet) -> None:
        lo, hi = self.variant.bounds
        if not 1.0 < lo <= hi < np.inf:
            raise ValueError(f"Exponent bounds must satisfy 1 < p- <= p+ < inf, got ({lo}, {hi})")
        sampled = self.exponent(quad.points)
        if np.any(~np.isfinite(sampled)) or sampled.min() < lo or sampled.max() > hi:
            raise ValueError(
                f"p(𝓹) = {self.variant.p_of.text} leaves [{lo}, {hi}] on the parameter grid: "
                f"range [{np.nanmin(sampled)}, {np.nanmax(sampled)}]"
            )

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(self.parameter_names) + tuple(self.spatial_names)

    @property
    def parameter_dim(self) -> int:
        return len(self.parameter_names)

    @property
    def spatial_dim(self) -> int:
        return len(self.spatial_names)

    @property
    def spatial_indices(self) -> Tuple[int, ...]:
        return tuple(range(self.parameter_dim, self.parameter_dim + self.spatial_dim))

    def exponent(self, points) -> np.ndarray:
        """p at every point, shape (N,)."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if isinstance(self.variant, (VariableExponent, MixedMass)):
            return self.variant.p_of(points)
        return np.full(points.shape[0], float(self.variant.p))

    def with_quadrature(self, quad: QuadratureSet) -> "ProblemSpec":
        if isinstance(self.variant, VariableExponent):
            self._check_exponent_bounds(quad)
        return replace(self, interior_quad=quad)

    def slice_domain(self, params: Sequence[float]) -> Optional[Tuple[float, float]]:
        """Ω(𝓹) for the variable-domain variant, ``None`` when the domain does not move."""
        if not isinstance(self.variant, VariableDomain):
            return None
        width = float(self.variant.half_width(np.asarray(params, dtype=np.float64)))
        return -width, width


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------
def _points(params: Sequence, x: Sequence) -> np.ndarray:
    cols = [np.asarray(value_of(c), dtype=np.float64) for c in (*params, *x)]
    cols = np.broadcast_arrays(*cols)
    return np.column_stack([np.atleast_1d(c).ravel() for c in cols])


def _collapse(values: np.ndarray, lanes: bool):
    return values if lanes else values[0]


def integrand(spec: ProblemSpec, params: Sequence, x: Sequence, u, gradu: Sequence):
    """(1/p)(|∇u|²)^{p/2} − f·u, plus ½u² for mixed mass; ``params``/``x`` are scalars or lanes."""
    if len(gradu) != spec.spatial_dim:
        raise ValueError(f"Got {len(gradu)} gradient components for {spec.spatial_dim} spatial coordinates")
    points = _points(params, x)
    lanes = any(np.ndim(value_of(c)) > 0 for c in (*params, *x))
    p = _collapse(spec.exponent(points), lanes)
    f = _collapse(spec.rhs(points), lanes)
    grad_sq = dot(list(gradu), list(gradu))
    density = sub(div(power(grad_sq, p / 2.0), p), mul(f, u))
    if isinstance(spec.variant, MixedMass):
        density = add(density, mul(0.5, mul(u, u)))
    return density


def _lane_total(values, n_points: int, reproducible: bool = True):
    """Σ over the points; a value without lanes (u constant in x) counts once per point."""
    summed = total(values, reproducible)
    if np.ndim(value_of(values)) == 0 and n_points > 1:
        summed = mul(summed, float(n_points))
    return summed


def penalty_term(p, penalty: float, boundary_quad: QuadratureSet, u_boundary):
    """(λ/p) · weight_b · Σ (u²)^{p/2} over the boundary points."""
    if penalty < 0:
        raise ValueError(f"Penalty λ must be >= 0, got {penalty}")
    boundary_sum = _lane_total(power(mul(u_boundary, u_boundary), p / 2.0), boundary_quad.size)
    return mul(boundary_sum, penalty / p * boundary_quad.weight)


def _check_finite(result, density, quad: QuadratureSet, what: str) -> None:
    if np.isfinite(value_of(result)):
        return
    values = np.atleast_1d(np.asarray(value_of(density), dtype=np.float64))
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        index = int(bad[0])
        logger.error(f"Non-finite {what} density at point #{index} {quad.points[index].tolist()}")
        raise NonFiniteError(what, point_index=index, point=quad.points[index])
    logger.error(f"Non-finite {what} without a non-finite density")
    raise NonFiniteError(what)


def energy(spec: ProblemSpec, arch: ArchSpec, theta: Sequence, quad: Optional[QuadratureSet] = None, reproducible: bool = True):
    """weight · Σ integrand(u_θ) over ``quad`` (the spec's interior set by default), plus the penalty term."""
    quad = spec.interior_quad if quad is None else quad
    if arch.input_dim != len(spec.names):
        raise ValueError(f"Network takes {arch.input_dim} inputs, the problem has {list(spec.names)}")
    cols = quad.columns()
    P = spec.parameter_dim
    jet = forward_jet(arch, theta, cols, spec.spatial_indices)
    density = integrand(spec, cols[:P], cols[P:], jet.value, jet.directional)
    result = mul(_lane_total(density, quad.size, reproducible), quad.weight)
    _check_finite(result, density, quad, "energy")
    if isinstance(spec.variant, Penalty):
        bq = spec.boundary_quad
        u_b = forward(arch, theta, bq.columns())
        term = penalty_term(spec.variant.p, spec.variant.penalty, bq, u_b)
        _check_finite(term, u_b, bq, "penalty")
        result = add(result, term)
    return result


def energy_slice(spec: ProblemSpec, arch: ArchSpec, theta: Sequence[float], params: Sequence[float], spatial_quad: QuadratureSet) -> float:
    """E_𝓹(u_θ(𝓹, ·)) on a spatial-only set."""
    if spatial_quad.dim != spec.spatial_dim:
        raise ValueError(f"Spatial set has {spatial_quad.dim} coordinates, the problem has {spec.spatial_dim}")
    if len(params) != spec.parameter_dim:
        raise ValueError(f"Got {len(params)} parameter values for {list(spec.parameter_names)}")
    theta = np.asarray(theta, dtype=np.float64)
    return float(value_of(energy(spec, arch, theta, quad=slice_grid(params, spatial_quad))))


def energy_from_samples(
    spec: ProblemSpec, quad: QuadratureSet, u, gradu, u_boundary=None, reproducible: bool = True
) -> float:
    """Energy of a directly sampled function: ``u`` (N,), ``gradu`` (N, spatial_dim) on ``quad``'s points."""
    u = np.asarray(u, dtype=np.float64)
    gradu = np.atleast_2d(np.asarray(gradu, dtype=np.float64).reshape(quad.size, -1))
    cols = quad.columns()
    P = spec.parameter_dim
    density = integrand(spec, cols[:P], cols[P:], u, [gradu[:, k] for k in range(gradu.shape[1])])
    result = float(quad.weight * _lane_total(density, quad.size, reproducible))
    _check_finite(result, density, quad, "energy")
    if isinstance(spec.variant, Penalty):
        if u_boundary is None:
            raise ValueError("The penalty variant needs boundary values")
        result += float(penalty_term(spec.variant.p, spec.variant.penalty, spec.boundary_quad, np.asarray(u_boundary, dtype=np.float64)))
    return result


# ---------------------------------------------------------------------------
# construction from run configs
# ---------------------------------------------------------------------------
def variant_from_config(run: RunConfig) -> Variant:
    problem = run.problem
    names = tuple(problem.parameter_names) + tuple(problem.spatial_names)
    if problem.variant == "fixed_p":
        return FixedP(problem.p)
    if problem.variant == "penalty":
        return Penalty(problem.p, problem.penalty)
    if problem.variant == "variable_rhs":
        return VariableRHS(problem.p)
    if problem.variant == "variable_exponent":
        return VariableExponent(compile_expression(problem.p_of, names), tuple(problem.p_bounds))
    if problem.variant == "variable_domain":
        return VariableDomain(problem.p, compile_expression(problem.domain_half_width, tuple(problem.parameter_names)))
    return MixedMass(compile_expression(problem.p_of, names))


def problem_from_config(run: RunConfig) -> ProblemSpec:
    problem = run.problem
    names = tuple(problem.parameter_names) + tuple(problem.spatial_names)
    interior, resample = grid_from_config(
        run.quadrature.interior,
        seed=run.seeds.quadrature,
        parameter_names=problem.parameter_names,
        half_width=problem.domain_half_width,
    )
    boundary = boundary_grid_1d(run.quadrature.boundary) if run.quadrature.boundary is not None else None
    logger.info(f"Interior quadrature: {interior.description}, {interior.size} points")
    return ProblemSpec(
        variant=variant_from_config(run),
        rhs=compile_expression(problem.rhs, names),
        interior_quad=interior,
        parameter_names=tuple(problem.parameter_names),
        spatial_names=tuple(problem.spatial_names),
        boundary_quad=boundary,
        resample=resample,
    )
