"""Optimization loop: Adam, an optional L-BFGS refinement phase and checkpointing.

用法::

    report = train(spec, arch, ScheduleConfig(steps=5000, checkpoint_every=500), seed=0)
    report.history[-1], report.theta
"""
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import orjson
import pandas as pd

from pdirichlet_ritz.backend.autodiff import grad
from pdirichlet_ritz.backend.constants import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPSILON,
    ADAM_LEARNING_RATE,
    ARMIJO_C,
    CHECKPOINT_LAYOUT_VERSION,
    CSV_FLOAT_FORMAT,
    CSV_LINE_TERMINATOR,
)
from pdirichlet_ritz.backend.energy import ProblemSpec, energy
from pdirichlet_ritz.backend.exceptions import NonFiniteError, TrainingDivergedError
from pdirichlet_ritz.backend.logger import METRICS_LOGGER
from pdirichlet_ritz.backend.metrics.metrics_training import QUADRATURE_POINTS, TRAIN_LOSS, timed_step
from pdirichlet_ritz.backend.models import ArchSpec, ScheduleConfig
from pdirichlet_ritz.backend.network import init_params, param_count


logger = logging.getLogger(__name__)
metrics_logger = logging.getLogger(METRICS_LOGGER)

DEFAULT_LOG_EVERY = 100
LBFGS_MAX_HALVINGS = 30


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float = ADAM_LEARNING_RATE
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPSILON

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(0, np.zeros(n), np.zeros(n), **hyper)


def adam_step(state: AdamState, theta, g) -> Tuple[AdamState, np.ndarray]:
    theta = np.asarray(theta, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if theta.shape != g.shape or theta.shape != state.m.shape:
        raise ValueError(f"Shape mismatch: θ {theta.shape}, g {g.shape}, state {state.m.shape}")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    theta = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, step=t, m=m, v=v), theta


# ---------------------------------------------------------------------------
# L-BFGS
# ---------------------------------------------------------------------------
def lbfgs_step(history: Sequence[Tuple[np.ndarray, np.ndarray]], g) -> np.ndarray:
    """Two-loop recursion direction; pairs with sᵀy <= 0 are skipped, −g when it is not a descent direction."""
    g = np.asarray(g, dtype=np.float64)
    pairs = [(s, y) for s, y in history if float(np.dot(s, y)) > 0.0]
    q = g.copy()
    stack = []
    for s, y in reversed(pairs):
        rho = 1.0 / float(np.dot(y, s))
        alpha = rho * float(np.dot(s, q))
        q -= alpha * y
        stack.append((rho, alpha, s, y))
    if pairs:
        s, y = pairs[-1]
        q *= float(np.dot(s, y)) / float(np.dot(y, y))
    for rho, alpha, s, y in reversed(stack):
        beta = rho * float(np.dot(y, q))
        q += s * (alpha - beta)
    direction = -q
    if not np.all(np.isfinite(direction)) or float(np.dot(g, direction)) >= 0.0:
        return -g
    return direction


def lbfgs_minimize(
    fun_and_grad: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    theta,
    iterations: int,
    memory: int = 10,
    tol: float = 1e-12,
    on_iteration: Optional[Callable[[int, float, np.ndarray], None]] = None,
) -> Tuple[np.ndarray, List[float]]:
    """L-BFGS with Armijo backtracking; returns the final θ and the loss before every accepted step."""
    theta = np.asarray(theta, dtype=np.float64).copy()
    value, g = fun_and_grad(theta)
    history: List[Tuple[np.ndarray, np.ndarray]] = []
    losses: List[float] = []
    for it in range(iterations):
        if float(np.max(np.abs(g))) <= tol:
            break
        d = lbfgs_step(history, g)
        slope = float(np.dot(g, d))
        step, accepted = 1.0, False
        for _ in range(LBFGS_MAX_HALVINGS):
            trial = theta + step * d
            try:
                trial_value, trial_g = fun_and_grad(trial)
            except NonFiniteError:
                step *= 0.5
                continue
            if trial_value <= value + ARMIJO_C * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            logger.warning(f"L-BFGS line search failed at iteration {it}, stopping refinement")
            break
        losses.append(value)
        history.append((trial - theta, trial_g - g))
        if len(history) > memory:
            history.pop(0)
        theta, value, g = trial, trial_value, trial_g
        if on_iteration is not None:
            on_iteration(it, value, g)
    return theta, losses


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------
@dataclass
class Checkpoint:
    step: int
    theta: np.ndarray


@dataclass
class TrainReport:
    history: List[float] = field(default_factory=list)
    checkpoints: List[Checkpoint] = field(default_factory=list)
    theta: Optional[np.ndarray] = None
    wall_clock: float = 0.0
    seed: int = 0
    quadrature: Dict[str, object] = field(default_factory=dict)
    aborted: bool = False
    adam_steps: int = 0

    def to_frame(self) -> pd.DataFrame:
        phases = ["adam"] * self.adam_steps + ["lbfgs"] * (len(self.history) - self.adam_steps)
        return pd.DataFrame({"step": np.arange(len(self.history)), "phase": phases, "loss": self.history})

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator=CSV_LINE_TERMINATOR)


def loss_and_gradient(spec: ProblemSpec, arch: ArchSpec, theta, reproducible: bool = True) -> Tuple[float, np.ndarray]:
    return grad(lambda params: energy(spec, arch, params, reproducible=reproducible), theta, reproducible)


def train(
    spec: ProblemSpec,
    arch: ArchSpec,
    schedule: ScheduleConfig,
    seed: int,
    reproducible: bool = True,
    on_checkpoint: Optional[Callable[[Checkpoint, ProblemSpec], None]] = None,
    experiment: str = "",
    theta0: Optional[np.ndarray] = None,
) -> TrainReport:
    """Adam on the spec's energy, then optional L-BFGS; the loss history holds the value before each update.

    Random parameter grids are redrawn every ``resample_every`` steps through ``spec.resample``.
    """
    theta = init_params(arch, seed) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    state = AdamState.zeros(theta.size, lr=schedule.learning_rate)
    log_every = schedule.log_every or DEFAULT_LOG_EVERY
    report = TrainReport(theta=theta.copy(), seed=seed, quadrature=spec.interior_quad.summary())
    current = spec
    QUADRATURE_POINTS.labels(experiment=experiment).set(current.interior_quad.size)
    started = time.perf_counter()

    def checkpoint(step: int, params: np.ndarray) -> None:
        cp = Checkpoint(step, params.copy())
        report.checkpoints.append(cp)
        logger.info(f"[{experiment}] checkpoint at step {step}")
        if on_checkpoint is not None:
            on_checkpoint(cp, current)

    def diverged(step: int, exc: Exception) -> TrainingDivergedError:
        report.aborted = True
        report.wall_clock = time.perf_counter() - started
        last = report.checkpoints[-1].step if report.checkpoints else 0
        logger.error(f"[{experiment}] non-finite loss at step {step}: {exc}; last checkpoint at step {last}")
        return TrainingDivergedError(f"Training diverged at step {step}: {exc}", report)

    logger.info(f"[{experiment}] training {param_count(arch)} parameters for {schedule.steps} steps, seed={seed}")
    for step in range(schedule.steps):
        if schedule.resample_every and spec.resample is not None and step > 0 and step % schedule.resample_every == 0:
            current = spec.with_quadrature(spec.resample(step // schedule.resample_every))
            logger.debug(f"[{experiment}] resampled quadrature at step {step}: {current.interior_quad.description}")
        try:
            with timed_step(experiment, "adam"):
                loss, g = loss_and_gradient(current, arch, theta, reproducible)
                state, updated = adam_step(state, theta, g)
        except NonFiniteError as exc:
            raise diverged(step, exc) from exc
        if not math.isfinite(loss):
            raise diverged(step, NonFiniteError("loss"))
        report.history.append(loss)
        theta = updated
        report.theta = theta.copy()
        TRAIN_LOSS.labels(experiment=experiment).set(loss)
        g_norm = float(np.linalg.norm(g))
        metrics_logger.info(f"{experiment},adam,{step},{loss!r},{g_norm!r}")
        if step % log_every == 0 or step == schedule.steps - 1:
            logger.info(f"[{experiment}] step {step}: loss={loss:.10e} |g|={g_norm:.3e}")
        if schedule.checkpoint_every and (step + 1) % schedule.checkpoint_every == 0:
            checkpoint(step + 1, theta)
    report.adam_steps = len(report.history)

    if schedule.optimizer == "adam+lbfgs" and schedule.lbfgs_iterations > 0:
        def fun_and_grad(params):
            with timed_step(experiment, "lbfgs"):
                return loss_and_gradient(current, arch, params, reproducible)

        def on_iteration(it, value, g):
            TRAIN_LOSS.labels(experiment=experiment).set(value)
            metrics_logger.info(f"{experiment},lbfgs,{it},{value!r},{float(np.linalg.norm(g))!r}")

        try:
            theta, losses = lbfgs_minimize(
                fun_and_grad, theta, schedule.lbfgs_iterations, schedule.lbfgs_memory, on_iteration=on_iteration
            )
        except NonFiniteError as exc:
            raise diverged(report.adam_steps, exc) from exc
        report.history.extend(losses)
        report.theta = theta.copy()
        logger.info(f"[{experiment}] L-BFGS refinement: {len(losses)} accepted steps")

    total_steps = len(report.history)
    if not report.checkpoints or report.checkpoints[-1].step != total_steps:
        checkpoint(total_steps, theta)
    report.wall_clock = time.perf_counter() - started
    logger.info(f"[{experiment}] training finished in {report.wall_clock:.2f}s")
    return report


# ---------------------------------------------------------------------------
# checkpoint files
# ---------------------------------------------------------------------------
def save_checkpoint(base: Union[str, Path], arch: ArchSpec, theta, step: int) -> Tuple[Path, Path]:
    """``<base>.bin`` holds θ as little-endian float64, ``<base>.json`` describes the layout."""
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size != param_count(arch):
        raise ValueError(f"θ has {theta.size} entries, the architecture needs {param_count(arch)}")
    bin_path, json_path = base.with_suffix(".bin"), base.with_suffix(".json")
    bin_path.write_bytes(theta.astype("<f8").tobytes())
    sidecar = {
        "arch": arch.model_dump(mode="json"),
        "layout_version": CHECKPOINT_LAYOUT_VERSION,
        "param_count": int(theta.size),
        "step": int(step),
    }
    json_path.write_bytes(orjson.dumps(sidecar, option=orjson.OPT_INDENT_2))
    return bin_path, json_path


def load_checkpoint(base: Union[str, Path]) -> Tuple[ArchSpec, np.ndarray, int]:
    base = Path(base)
    sidecar = orjson.loads(base.with_suffix(".json").read_bytes())
    if sidecar.get("layout_version") != CHECKPOINT_LAYOUT_VERSION:
        raise ValueError(f"Unsupported checkpoint layout version {sidecar.get('layout_version')}")
    arch = ArchSpec.model_validate(sidecar["arch"])
    theta = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f8").astype(np.float64)
    if theta.size != sidecar["param_count"] or theta.size != param_count(arch):
        raise ValueError(f"Checkpoint holds {theta.size} values, sidecar says {sidecar['param_count']}")
    return arch, theta, int(sidecar["step"])
