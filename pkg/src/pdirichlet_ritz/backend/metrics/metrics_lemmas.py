"""Numerical certificates for the pointwise and integral equivalences behind the error estimates.

Every check returns measured ratios or constants; the envelopes they are compared against live in
``config/presets/baselines.yaml`` as regression values.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from pdirichlet_ritz.backend.constants import GAUSS_LEGENDRE_ORDER
from pdirichlet_ritz.backend.energy import FixedP, ProblemSpec, energy_from_samples
from pdirichlet_ritz.backend.expression import compile_expression
from pdirichlet_ritz.backend.metrics.metrics_distance import f_map, lp_norm, natural_distance_sq
from pdirichlet_ritz.backend.quadrature import QuadratureSet, tensor_grid
from pdirichlet_ritz.backend.reference import exact


logger = logging.getLogger(__name__)

Sampler = Callable[[np.random.Generator, int, int], Tuple[np.ndarray, np.ndarray]]
BATCH = 8192


def _gauss_legendre_01(n_tau: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n_tau)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def eta_sq_batch(p: float, a: np.ndarray, b: np.ndarray, n_tau: int = GAUSS_LEGENDRE_ORDER) -> np.ndarray:
    """∫₀¹ D²φ(τa + (1−τ)b) : (a−b)⊗(a−b) (1−τ) dτ per row of ``a``/``b`` (N, d).

    D²φ(c) = |c|^{p−2} (I + (p−2) ĉ⊗ĉ). At c = 0 the integrand is |h|² for p = 2 and 0 otherwise.
    The τ-interval is split where the segment comes closest to the origin and each half is mapped
    by τ = τ* ± s², so the |τ − τ*|^{p−2} singularity of p < 2 sits at a node-free endpoint.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError(f"a and b must have the same shape, got {a.shape} and {b.shape}")
    both_zero = ~np.any(a != 0.0, axis=1) & ~np.any(b != 0.0, axis=1)
    if np.any(both_zero):
        raise ValueError(f"η² is undefined for a = b = 0 (row {int(np.flatnonzero(both_zero)[0])})")
    s, w = _gauss_legendre_01(n_tau)
    out = np.empty(a.shape[0])
    for start in range(0, a.shape[0], BATCH):
        A, B = a[start:start + BATCH], b[start:start + BATCH]
        h = A - B
        h_sq = np.sum(h * h, axis=-1)
        closest = np.clip(-np.sum(B * h, axis=-1) / np.where(h_sq == 0.0, 1.0, h_sq), 0.0, 1.0)
        total = np.zeros(A.shape[0])
        for length, sign in ((1.0 - closest, 1.0), (closest, -1.0)):
            tau = closest[None] + sign * length[None] * (s * s)[:, None]
            jac = 2.0 * length[None] * s[:, None]
            c = tau[..., None] * A[None] + (1.0 - tau)[..., None] * B[None]
            c_sq = np.sum(c * c, axis=-1)
            ch = np.sum(c * h[None], axis=-1)
            zero = c_sq == 0.0
            safe = np.where(zero, 1.0, c_sq)
            form = safe ** ((p - 2.0) / 2.0) * (h_sq[None] + (p - 2.0) * ch * ch / safe)
            form = np.where(zero, h_sq[None] if p == 2.0 else 0.0, form)
            total += np.einsum("t,tn->n", w, jac * (1.0 - tau) * form)
        out[start:start + BATCH] = total
    return out


def eta_sq(p: float, a, b, n_tau: int = GAUSS_LEGENDRE_ORDER) -> float:
    return float(eta_sq_batch(p, np.atleast_1d(a)[None], np.atleast_1d(b)[None], n_tau)[0])


def default_sampler(rng: np.random.Generator, n: int, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gaussian directions with log-uniform lengths in [1e-2, 1e2]."""
    a = rng.standard_normal((n, dim)) * 10.0 ** rng.uniform(-2.0, 2.0, (n, 1))
    b = rng.standard_normal((n, dim)) * 10.0 ** rng.uniform(-2.0, 2.0, (n, 1))
    return a, b


def _monotone_operator(p: float, a: np.ndarray) -> np.ndarray:
    """|a|^{p−2} a, zero at a = 0."""
    norm_sq = np.sum(a * a, axis=-1, keepdims=True)
    zero = norm_sq == 0.0
    return np.where(zero, 0.0, np.where(zero, 1.0, norm_sq) ** ((p - 2.0) / 2.0)) * a


def pointwise_forms(p: float, a: np.ndarray, b: np.ndarray, n_tau: int = GAUSS_LEGENDRE_ORDER) -> pd.DataFrame:
    """The three forms that are equivalent to |F(a) − F(b)|², each divided by it."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    diff = f_map(p, a) - f_map(p, b)
    denom = np.sum(diff * diff, axis=-1)
    keep = denom > 0.0
    a, b, denom = a[keep], b[keep], denom[keep]
    h = a - b
    monotone = np.sum((_monotone_operator(p, a) - _monotone_operator(p, b)) * h, axis=-1)
    shifted = (np.linalg.norm(a, axis=-1) + np.linalg.norm(b, axis=-1)) ** (p - 2.0) * np.sum(h * h, axis=-1)
    return pd.DataFrame({
        "monotone": monotone / denom,
        "shifted": shifted / denom,
        "eta": eta_sq_batch(p, a, b, n_tau) / denom,
    })


def equivalence_ratios(
    p: float,
    sampler: Optional[Sampler] = None,
    n_samples: int = 100000,
    seed: int = 0,
    dim: int = 2,
) -> Dict[str, Dict[str, float]]:
    """{form: {min_ratio, max_ratio}} over ``n_samples`` sampled pairs (a, b)."""
    if not p > 1.0:
        raise ValueError(f"p must be > 1, got {p}")
    rng = np.random.default_rng(seed)
    a, b = (sampler or default_sampler)(rng, n_samples, dim)
    ratios = pointwise_forms(p, a, b)
    result = {
        form: {"min_ratio": float(ratios[form].min()), "max_ratio": float(ratios[form].max())}
        for form in ratios.columns
    }
    logger.info(f"Equivalence ratios p={p} d={dim}: {result}")
    return result


@dataclass
class RelationCheck:
    p: float
    lhs: float
    mid: float
    rhs: float
    constant: float
    holds: bool


def _ratio(x: float, y: float) -> float:
    if y == 0.0:
        return 1.0 if x == 0.0 else np.inf
    return x / y


def relation_check(p: float, quad: QuadratureSet, gradv, gradw, constant: Optional[float] = None) -> RelationCheck:
    """Both sides of the natural distance ↔ W^{1,p}-seminorm relation.

    p ≥ 2:  ‖∇v−∇w‖^p ≲ ρ_F² ≲ (‖∇v‖+‖∇w‖)^{p−2} ‖∇v−∇w‖²
    p < 2:  ρ_F² ≲ ‖∇v−∇w‖^p ≲ (‖∇v‖+‖∇w‖)^{p(2−p)/2} (ρ_F²)^{p/2}

    Without ``constant`` the smallest C making both inequalities hold is returned.
    """
    gradv = np.asarray(gradv, dtype=np.float64).reshape(quad.size, -1)
    gradw = np.asarray(gradw, dtype=np.float64).reshape(quad.size, -1)
    rho = natural_distance_sq(p, quad, gradv, gradw)
    diff = lp_norm(p, quad, gradv - gradw)
    scale = lp_norm(p, quad, gradv) + lp_norm(p, quad, gradw)
    if p >= 2.0:
        lhs, mid, rhs = diff ** p, rho, scale ** (p - 2.0) * diff ** 2
    else:
        lhs, mid, rhs = rho, diff ** p, scale ** (p * (2.0 - p) / 2.0) * rho ** (p / 2.0)
    measured = max(_ratio(lhs, mid), _ratio(mid, rhs))
    c = measured if constant is None else constant
    tol = 1.0 + 1e-12
    holds = lhs <= c * mid * tol and mid <= c * rhs * tol
    return RelationCheck(p=p, lhs=lhs, mid=mid, rhs=rhs, constant=measured, holds=bool(holds))


def within_envelope(ratio, constant: float, rtol: float = 1e-4) -> bool:
    """1/C ≤ ratio ≤ C up to ``rtol``."""
    ratio = np.asarray(ratio, dtype=np.float64)
    return bool(np.all((ratio >= (1.0 - rtol) / constant) & (ratio <= constant * (1.0 + rtol))))


def sandwich_ratios(
    p: float,
    n_points: int = 4000,
    n_perturbations: int = 200,
    seed: int = 0,
    modes: int = 5,
    delta_range: Tuple[float, float] = (0.5, 1.0),
) -> pd.DataFrame:
    """(E(v) − E(u*)) / ρ_F²(v, u*) for v = u* + δw on the fixed-exponent problem with f = 1 on (−1, 1).

    w = Σ c_k sin(kπ(x+1)/2) with unit-norm random c, δ uniform in ``delta_range``.
    """
    quad = tensor_grid([(-1.0, 1.0, n_points)])
    x = quad.points[:, 0]
    spec = ProblemSpec(FixedP(p), compile_expression("1", ("x",)), quad)
    u_star, grad_star = exact("vexp", p, x)
    base = energy_from_samples(spec, quad, u_star, grad_star)
    k = np.arange(1, modes + 1)
    phase = np.outer(x + 1.0, k * np.pi / 2.0)
    basis, dbasis = np.sin(phase), np.cos(phase) * (k * np.pi / 2.0)
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_perturbations):
        coeffs = rng.standard_normal(modes)
        coeffs /= np.linalg.norm(coeffs)
        delta = rng.uniform(*delta_range)
        v = u_star + delta * basis @ coeffs
        dv = grad_star[:, 0] + delta * dbasis @ coeffs
        gap = energy_from_samples(spec, quad, v, dv) - base
        rho = natural_distance_sq(p, quad, dv, grad_star)
        rows.append({"p": p, "delta": delta, "energy_gap": gap, "natural_sq": rho, "ratio": gap / rho})
    frame = pd.DataFrame(rows)
    logger.info(f"Sandwich p={p}: ratio in [{frame['ratio'].min():.6g}, {frame['ratio'].max():.6g}]")
    return frame
