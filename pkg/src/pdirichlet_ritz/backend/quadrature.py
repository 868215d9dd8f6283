"""Point sets over parameter × space with one common weight per set.

Every interior generator places points at cell midpoints, so no training point sits on a Dirichlet
boundary. The weight is ``total_measure / point_count``, an energy is ``weight · Σ integrand``.

用法::

    quad = tensor_grid([(1.0, 3.0, 50), (-1.0, 1.0, 500)])     # 25000 points, weight 4/25000
    quad.integrate(np.ones(quad.size))                           # 4.0
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from pdirichlet_ritz.backend.autodiff import lane_sum
from pdirichlet_ritz.backend.expression import compile_expression
from pdirichlet_ritz.backend.models import (
    DiskGridConfig,
    RandomParameterGridConfig,
    TensorGridConfig,
    VariableDomainGridConfig,
)
from pdirichlet_ritz.backend.utils import classic_round


logger = logging.getLogger(__name__)

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True, eq=False)
class QuadratureSet:
    points: np.ndarray
    weight: float
    total_measure: float
    boundary: bool = False
    description: str = ""
    slice_sizes: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64, ndmin=2)
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @classmethod
    def uniform(cls, points, total_measure: float, **kwargs) -> "QuadratureSet":
        points = np.array(points, dtype=np.float64, ndmin=2)
        if points.shape[0] == 0:
            raise ValueError("A quadrature set needs at least one point")
        return cls(points, total_measure / points.shape[0], total_measure, **kwargs)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def columns(self) -> List[np.ndarray]:
        return [self.points[:, i] for i in range(self.dim)]

    def integrate(self, values, reproducible: bool = True) -> float:
        values = np.broadcast_to(np.asarray(values, dtype=np.float64), (self.size,))
        return float(self.weight * lane_sum(values, reproducible))

    def summary(self) -> Dict[str, object]:
        return {
            "description": self.description,
            "points": self.size,
            "dim": self.dim,
            "weight": self.weight,
            "total_measure": self.total_measure,
            "boundary": self.boundary,
        }


def midpoints(lo: float, hi: float, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"Need at least one point per axis, got n={n}")
    if not lo < hi:
        raise ValueError(f"Axis needs lo < hi, got ({lo}, {hi})")
    return lo + (np.arange(n) + 0.5) * ((hi - lo) / n)


def tensor_grid(axes: Sequence[Tuple[float, float, int]]) -> QuadratureSet:
    """Cartesian product of per-axis midpoints, first axis varying slowest."""
    if not axes:
        raise ValueError("tensor_grid needs at least one axis")
    grids = [midpoints(lo, hi, int(n)) for lo, hi, n in axes]
    mesh = np.meshgrid(*grids, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    measure = float(np.prod([hi - lo for lo, hi, _ in axes]))
    desc = "tensor " + "×".join(f"({lo:g},{hi:g},{int(n)})" for lo, hi, n in axes)
    return QuadratureSet.uniform(points, measure, description=desc)


def variable_domain_grid(
    p_axis: Tuple[float, float, int],
    n_x_of_p: Callable[[float], float],
    domain: Callable[[float], Tuple[float, float]],
) -> QuadratureSet:
    """Union over parameter midpoints p_i of {p_i} × midpoints of domain(p_i), round(n_x(p_i)) of them."""
    lo, hi, n_p = p_axis
    params = midpoints(lo, hi, int(n_p))
    dp = (hi - lo) / int(n_p)
    blocks, sizes = [], []
    measure = 0.0
    for p in params:
        n_x = classic_round(float(n_x_of_p(p)))
        if n_x < 1:
            raise ValueError(f"n_x({p}) rounds to {n_x}, every slice needs at least one point")
        a, b = domain(p)
        xs = midpoints(a, b, n_x)
        blocks.append(np.column_stack([np.full(n_x, p), xs]))
        sizes.append(n_x)
        measure += dp * (b - a)
    points = np.concatenate(blocks, axis=0)
    logger.debug(f"Variable domain grid: {len(params)} slices, {points.shape[0]} points")
    desc = f"variable_domain p=({lo:g},{hi:g},{int(n_p)})"
    return QuadratureSet.uniform(points, measure, description=desc, slice_sizes=tuple(sizes))


def sample_parameters(box: Sequence[Tuple[float, float]], n: int, seed: Seed) -> np.ndarray:
    """n i.i.d. uniform draws from the box, shape (n, len(box))."""
    rng = np.random.default_rng(seed)
    lows = np.array([b[0] for b in box], dtype=np.float64)
    highs = np.array([b[1] for b in box], dtype=np.float64)
    return rng.uniform(lows, highs, size=(n, len(box)))


def random_parameter_grid(
    box: Sequence[Tuple[float, float]], n_p: int, spatial: QuadratureSet, seed: Seed
) -> QuadratureSet:
    if spatial.boundary:
        raise ValueError("random_parameter_grid needs an interior spatial set")
    if n_p < 1:
        raise ValueError(f"n_p must be >= 1, got {n_p}")
    params = sample_parameters(box, n_p, seed)
    points = np.hstack([np.repeat(params, spatial.size, axis=0), np.tile(spatial.points, (n_p, 1))])
    measure = float(np.prod([hi - lo for lo, hi in box])) * spatial.total_measure
    desc = f"random_parameter n_p={n_p} × {spatial.description}"
    return QuadratureSet.uniform(points, measure, description=desc, slice_sizes=(spatial.size,) * n_p)


def disk_grid(radius: float, n_per_axis: int) -> QuadratureSet:
    """Midpoints of the bounding square kept where |x| < radius; measure π r²."""
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    axis = midpoints(-radius, radius, n_per_axis)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    inside = xx * xx + yy * yy < radius * radius
    points = np.column_stack([xx[inside], yy[inside]])
    logger.debug(f"Disk grid r={radius} n={n_per_axis}: kept {points.shape[0]} of {n_per_axis ** 2}")
    return QuadratureSet.uniform(points, math.pi * radius * radius, description=f"disk r={radius:g} n={n_per_axis}")


def boundary_grid_1d(domain: Tuple[float, float]) -> QuadratureSet:
    """{a, b} with counting measure."""
    a, b = domain
    if not a < b:
        raise ValueError(f"Boundary grid needs a < b, got ({a}, {b})")
    return QuadratureSet([[a], [b]], 1.0, 2.0, boundary=True, description=f"boundary {{{a:g}, {b:g}}}")


def slice_grid(params: Sequence[float], spatial: QuadratureSet) -> QuadratureSet:
    """{params} × spatial, keeping the spatial weight so sums are per-parameter energies."""
    params = np.asarray(params, dtype=np.float64).ravel()
    points = np.hstack([np.tile(params, (spatial.size, 1)), spatial.points])
    return QuadratureSet(
        points,
        spatial.weight,
        spatial.total_measure,
        boundary=spatial.boundary,
        description=f"slice {params.tolist()} × {spatial.description}",
    )


# ---------------------------------------------------------------------------
# construction from run configs
# ---------------------------------------------------------------------------
def spatial_from_config(cfg) -> QuadratureSet:
    if isinstance(cfg, DiskGridConfig):
        return disk_grid(cfg.radius, cfg.n_per_axis)
    if isinstance(cfg, TensorGridConfig):
        return tensor_grid(cfg.axes)
    raise ValueError(f"Unsupported spatial grid {type(cfg).__name__}")


def half_width_domain(half_width: str, parameter_names: Sequence[str]) -> Callable[[float], Tuple[float, float]]:
    """Ω(𝓹) = (−w(𝓹), w(𝓹)) for a one-parameter family."""
    w = compile_expression(half_width, tuple(parameter_names))

    def domain(p: float) -> Tuple[float, float]:
        width = float(w(np.array([p])))
        if not width > 0:
            raise ValueError(f"Domain half width at {p} is {width}, must be positive")
        return -width, width

    return domain


def grid_from_config(
    cfg, seed: int = 0, parameter_names: Sequence[str] = (), half_width: Optional[str] = None
) -> Tuple[QuadratureSet, Optional[Callable[[int], QuadratureSet]]]:
    """Interior set described by ``cfg`` and, for random parameter grids, a resampler k ↦ k-th redraw."""
    if isinstance(cfg, TensorGridConfig):
        return tensor_grid(cfg.axes), None
    if isinstance(cfg, VariableDomainGridConfig):
        if half_width is None:
            raise ValueError("variable_domain grids need the problem's domain_half_width")
        n_x = compile_expression(cfg.points_per_slice, tuple(parameter_names))
        domain = half_width_domain(half_width, parameter_names)
        return variable_domain_grid(cfg.parameter_axis, lambda p: float(n_x(np.array([p]))), domain), None
    if isinstance(cfg, RandomParameterGridConfig):
        spatial = spatial_from_config(cfg.spatial)
        box, n_p = list(cfg.parameter_box), cfg.n_parameters

        def resample(k: int) -> QuadratureSet:
            return random_parameter_grid(box, n_p, spatial, seed if k == 0 else [seed, k])

        return resample(0), resample
    raise ValueError(f"Unsupported interior grid {type(cfg).__name__}")
