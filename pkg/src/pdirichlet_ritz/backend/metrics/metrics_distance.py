"""Natural distances and discrete norm errors.

F(a) = |a|^{(p−2)/2} a, so that |F(a)|² = |a|^p. The natural distance between two sampled gradient
fields is ``weight · Σ |F(∇v) − F(∇w)|²`` on the same points the energies are summed over.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from pdirichlet_ritz.backend.autodiff import lane_sum
from pdirichlet_ritz.backend.models import ErrorReport, SliceError
from pdirichlet_ritz.backend.network import evaluate
from pdirichlet_ritz.backend.quadrature import QuadratureSet, slice_grid


logger = logging.getLogger(__name__)

Reference = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def _field(values, n: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1 and n is not None:
        arr = arr.reshape(n, -1)
    return np.atleast_2d(arr)


def f_map(p, a) -> np.ndarray:
    """|a|^{(p−2)/2} a along the last axis, 0 at a = 0; ``p`` is a scalar or one value per row."""
    a = np.asarray(a, dtype=np.float64)
    norm_sq = np.sum(a * a, axis=-1, keepdims=True)
    q = (np.asarray(p, dtype=np.float64) - 2.0) / 4.0
    if np.ndim(q) > 0:
        q = q.reshape(*q.shape, 1)
    zero = norm_sq == 0.0
    with np.errstate(all="ignore"):
        factor = np.where(zero, 0.0, np.where(zero, 1.0, norm_sq) ** q)
    return factor * a


def _pointwise_sq(p, v, w) -> np.ndarray:
    diff = f_map(p, v) - f_map(p, w)
    return np.sum(diff * diff, axis=-1)


def natural_distance_sq(p, quad: QuadratureSet, gradv, gradw, reproducible: bool = True) -> float:
    """weight · Σ |F_p(∇v) − F_p(∇w)|², ``p`` constant or sampled per point."""
    gradv, gradw = _field(gradv, quad.size), _field(gradw, quad.size)
    if gradv.shape != gradw.shape or gradv.shape[0] != quad.size:
        raise ValueError(f"Fields of shape {gradv.shape} and {gradw.shape} do not match {quad.size} points")
    return float(quad.weight * lane_sum(_pointwise_sq(p, gradv, gradw), reproducible))


def penalized_distance_sq(
    p,
    penalty: float,
    interior_quad: QuadratureSet,
    boundary_quad: QuadratureSet,
    gradv,
    gradw,
    v_boundary,
    w_boundary,
) -> float:
    """Natural distance plus λ · weight_b · Σ |F(v) − F(w)|² over the boundary (scalar F)."""
    if penalty < 0:
        raise ValueError(f"Penalty λ must be >= 0, got {penalty}")
    interior = natural_distance_sq(p, interior_quad, gradv, gradw)
    v_b = np.asarray(v_boundary, dtype=np.float64).reshape(-1, 1)
    w_b = np.asarray(w_boundary, dtype=np.float64).reshape(-1, 1)
    return interior + penalty * boundary_quad.weight * float(lane_sum(_pointwise_sq(p, v_b, w_b)))


def lp_norm(p: float, quad: QuadratureSet, values) -> float:
    """(weight · Σ |v|^p)^{1/p} with |v| the Euclidean length of each row."""
    values = _field(values, quad.size)
    magnitude = np.sqrt(np.sum(values * values, axis=-1))
    return float((quad.weight * lane_sum(magnitude ** p)) ** (1.0 / p))


def slice_errors(
    p: float,
    quad: QuadratureSet,
    u,
    gradu,
    u_ref=None,
    gradu_ref=None,
    parameters: Sequence[float] = (),
) -> SliceError:
    """L^p, W^{1,p}-semi and natural-distance errors of (u, ∇u) against a reference on one slice.

    Without a reference the absolute entries are the norms of u itself and the relative ones stay unset.
    """
    u = np.asarray(u, dtype=np.float64)
    gradu = _field(gradu, quad.size)
    has_ref = u_ref is not None
    u_ref = np.zeros_like(u) if u_ref is None else np.asarray(u_ref, dtype=np.float64)
    gradu_ref = np.zeros_like(gradu) if gradu_ref is None else _field(gradu_ref, quad.size)
    lp_abs = lp_norm(p, quad, u - u_ref)
    w1p_abs = lp_norm(p, quad, gradu - gradu_ref)
    lp_rel = w1p_rel = None
    if has_ref:
        lp_ref, w1p_ref = lp_norm(p, quad, u_ref), lp_norm(p, quad, gradu_ref)
        lp_rel = lp_abs / lp_ref if lp_ref > 0 else None
        w1p_rel = w1p_abs / w1p_ref if w1p_ref > 0 else None
        if lp_rel is None or w1p_rel is None:
            logger.warning(f"Reference norm vanishes on slice {list(parameters)}, relative error undefined")
    return SliceError(
        parameters=[float(c) for c in parameters],
        p=float(p),
        lp_abs=lp_abs,
        lp_rel=lp_rel,
        w1p_abs=w1p_abs,
        w1p_rel=w1p_rel,
        natural_sq=natural_distance_sq(p, quad, gradu, gradu_ref),
    )


def norm_errors(
    spec,
    arch,
    theta: Sequence[float],
    reference: Optional[Reference],
    slices: Sequence[Sequence[float]],
    spatial_quads: Sequence[QuadratureSet],
) -> ErrorReport:
    """Per-slice errors of u_θ(𝓹, ·) on ``spatial_quads[i]`` at parameter ``slices[i]``."""
    if len(slices) != len(spatial_quads):
        raise ValueError(f"Got {len(slices)} slices but {len(spatial_quads)} spatial sets")
    rows: List[SliceError] = []
    for params, spatial in zip(slices, spatial_quads):
        quad = slice_grid(params, spatial)
        u, gradu = evaluate(arch, theta, quad.points, spec.spatial_indices)
        p = float(spec.exponent(quad.points[:1])[0])
        u_ref = gradu_ref = None
        if reference is not None:
            u_ref, gradu_ref = reference(np.asarray(params, dtype=np.float64), spatial.points)
        rows.append(slice_errors(p, spatial, u, gradu, u_ref, gradu_ref, parameters=params))
    return ErrorReport(parameter_names=list(spec.parameter_names), slices=rows)
