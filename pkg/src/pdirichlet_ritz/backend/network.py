"""Fully connected networks over flat parameter vectors.

Parameter layout (row-major everywhere)::

    [B (m × input_dim)]  if a Fourier embedding is configured
    [A_1 (w_1 × fan_in), b_1 (w_1)] ... [A_L (1 × w_{L-1}), b_L (1)]

The embedding maps z to [cos(2πBz), sin(2πBz)], all cosines first. The boundary lift η is applied to
the network output after the last affine layer, u = η·v, so the lift enters the spatial derivatives.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from pdirichlet_ritz.backend.autodiff import TWO_PI, Jet, coordinate_jets, dot, mul, value_of
from pdirichlet_ritz.backend.expression import compile_derivative, compile_expression
from pdirichlet_ritz.backend.models import ArchSpec, LiftSpec, RunConfig


logger = logging.getLogger(__name__)

Block = Tuple[str, Tuple[int, ...], int]


def layout(arch: ArchSpec) -> List[Block]:
    """(name, shape, offset) of every parameter block in θ."""
    blocks: List[Block] = []
    offset = 0
    if arch.fourier is not None:
        shape = (arch.fourier.num_features, arch.input_dim)
        blocks.append(("B", shape, offset))
        offset += shape[0] * shape[1]
    widths = arch.layer_widths
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]), start=1):
        blocks.append((f"A{layer}", (fan_out, fan_in), offset))
        offset += fan_out * fan_in
        blocks.append((f"b{layer}", (fan_out,), offset))
        offset += fan_out
    return blocks


def param_count(arch: ArchSpec) -> int:
    name, shape, offset = layout(arch)[-1]
    return offset + int(np.prod(shape))


def unflatten(arch: ArchSpec, theta: Sequence[float]) -> Dict[str, np.ndarray]:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size != param_count(arch):
        raise ValueError(f"θ has {theta.size} entries, the architecture needs {param_count(arch)}")
    return {name: theta[offset:offset + int(np.prod(shape))].reshape(shape).copy() for name, shape, offset in layout(arch)}


def flatten(arch: ArchSpec, blocks: Dict[str, np.ndarray]) -> np.ndarray:
    parts = []
    for name, shape, _ in layout(arch):
        block = np.asarray(blocks[name], dtype=np.float64)
        if block.shape != shape:
            raise ValueError(f"Block {name} has shape {block.shape}, expected {shape}")
        parts.append(block.ravel())
    return np.concatenate(parts)


def init_params(arch: ArchSpec, seed: int) -> np.ndarray:
    """Fourier B ~ N(0, σ²) first, then Glorot-uniform weights and zero biases, from one generator."""
    rng = np.random.default_rng(seed)
    blocks: Dict[str, np.ndarray] = {}
    for name, shape, _ in layout(arch):
        if name == "B":
            blocks[name] = rng.normal(0.0, arch.fourier.sigma, size=shape)
        elif name.startswith("A"):
            fan_out, fan_in = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            blocks[name] = rng.uniform(-limit, limit, size=shape)
        else:
            blocks[name] = np.zeros(shape)
    return flatten(arch, blocks)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------
def _rows(theta: Sequence, offset: int, fan_out: int, fan_in: int) -> List[Sequence]:
    return [theta[offset + r * fan_in:offset + (r + 1) * fan_in] for r in range(fan_out)]


def _affine(row: Sequence, bias, inputs: List[Jet]) -> Jet:
    order = inputs[0].order
    value = dot(row, [h.value for h in inputs], bias)
    return Jet(value, [dot(row, [h.directional[k] for h in inputs]) for k in range(order)])


def _raw_jet(arch: ArchSpec, theta: Sequence, z: Sequence, tracked: Sequence[int]) -> Jet:
    if len(z) != arch.input_dim:
        raise ValueError(f"Input has {len(z)} coordinates, the architecture expects {arch.input_dim}")
    if len(theta) != param_count(arch):
        raise ValueError(f"θ has {len(theta)} entries, the architecture needs {param_count(arch)}")
    hidden = coordinate_jets(z, tracked)
    blocks = {name: (shape, offset) for name, shape, offset in layout(arch)}
    if arch.fourier is not None:
        (m, d), offset = blocks["B"]
        phases = [_affine(row, 0.0, hidden) * TWO_PI for row in _rows(theta, offset, m, d)]
        hidden = [t.cos() for t in phases] + [t.sin() for t in phases]
    n_layers = len(arch.layer_widths) - 1
    for layer in range(1, n_layers + 1):
        (fan_out, fan_in), a_offset = blocks[f"A{layer}"]
        _, b_offset = blocks[f"b{layer}"]
        rows = _rows(theta, a_offset, fan_out, fan_in)
        out = [_affine(rows[r], theta[b_offset + r], hidden) for r in range(fan_out)]
        hidden = out if layer == n_layers else [h.activate(arch.activation) for h in out]
    return hidden[0]


def forward_jet(arch: ArchSpec, theta: Sequence, z: Sequence, tracked: Sequence[int]) -> Jet:
    """u_θ(z) with its derivatives along the inputs ``tracked``, lift included.

    ``theta`` may be a list of tape variables or a plain array, and every entry of ``z`` a scalar or
    an array of quadrature lanes.
    """
    tracked = list(tracked)
    raw = _raw_jet(arch, theta, z, tracked)
    return apply_lift(arch.lift, arch.names, z, raw, tracked)


def forward(arch: ArchSpec, theta: Sequence, z: Sequence):
    return forward_jet(arch, theta, z, ()).value


def evaluate(arch: ArchSpec, theta: Sequence[float], points, tracked: Sequence[int] = ()) -> Tuple[np.ndarray, np.ndarray]:
    """Tape-free u_θ and ∂u_θ/∂z_tracked at ``points`` (N, input_dim) → ((N,), (N, len(tracked)))."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    theta = np.asarray(theta, dtype=np.float64)
    jet = forward_jet(arch, theta, [points[:, i] for i in range(points.shape[1])], tracked)
    n = points.shape[0]
    u = np.broadcast_to(np.asarray(jet.value, dtype=np.float64), (n,)).copy()
    grads = [np.broadcast_to(np.asarray(value_of(d), dtype=np.float64), (n,)) for d in jet.directional]
    gradu = np.column_stack(grads) if grads else np.zeros((n, 0))
    return u, gradu


# ---------------------------------------------------------------------------
# boundary lift
# ---------------------------------------------------------------------------
def _as_points(z: Sequence) -> np.ndarray:
    cols = [np.asarray(value_of(zi), dtype=np.float64) for zi in z]
    if all(c.ndim == 0 for c in cols):
        return np.array([float(c) for c in cols])
    cols = np.broadcast_arrays(*cols)
    return np.column_stack([c.ravel() for c in cols])


def lift_factors(
    lift: LiftSpec, names: Sequence[str], z: Sequence, tracked: Sequence[int] = ()
) -> Tuple[Optional[np.ndarray], List[np.ndarray]]:
    """η(z) and ∂η/∂z_i for the tracked inputs; (None, []) for the identity lift."""
    text = lift.formula_text()
    if text is None:
        return None, []
    names = tuple(names)
    points = _as_points(z)
    eta = compile_expression(text, names)(points)
    deta = [compile_derivative(text, names, names[i])(points) for i in tracked]
    return eta, deta


def apply_lift(lift: LiftSpec, names: Sequence[str], z: Sequence, u, tracked: Sequence[int] = ()):
    """η(z)·u; ``u`` may be a Jet (product rule on its directions), a Var or a number."""
    tracked = list(tracked)
    eta, deta = lift_factors(lift, names, z, tracked)
    if eta is None:
        return u
    if isinstance(u, Jet):
        return Jet(eta, deta) * u
    return mul(u, eta)


def arch_from_config(run: RunConfig) -> ArchSpec:
    """Network for a training run: inputs are the parameter names followed by the spatial names."""
    names = tuple(run.problem.parameter_names) + tuple(run.problem.spatial_names)
    return ArchSpec(
        input_dim=len(names),
        hidden_widths=tuple(run.arch.hidden_widths),
        activation=run.arch.activation,
        fourier=run.arch.fourier,
        lift=run.problem.lift,
        input_names=names,
    )
