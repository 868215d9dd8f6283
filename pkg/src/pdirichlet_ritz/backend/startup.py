"""Command line entry: ``pdritz run <config>`` and ``pdritz report <dirs…>``.

用法::

    pdritz run src/pdirichlet_ritz/config/presets/vexp_p2_desk.yaml --out /tmp/vexp --seed 3
    pdritz report /tmp/vexp /tmp/vexp_again --out /tmp/compare.csv

A run directory holds ``manifest.json`` plus the CSV artifacts of its experiment kind. Exit codes:
0 ok, 2 config error, 3 numeric failure.
"""
import argparse
import logging
import os
import platform
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import orjson
import pandas as pd
import psutil

from pdirichlet_ritz import __version__
from pdirichlet_ritz.backend.autodiff import check_gradient, value_of
from pdirichlet_ritz.backend.config import (
    ConfigManager,
    baseline_constant,
    load_baselines,
    load_run_config,
)
from pdirichlet_ritz.backend.constants import (
    APP_ENVS,
    CHECKPOINT_AUDIT_FILE,
    CHECKPOINT_DIR,
    CSV_FLOAT_FORMAT,
    CSV_LINE_TERMINATOR,
    ERRORS_AGGREGATE_FILE,
    ERRORS_FILE,
    EXIT_CODE_CONFIG_ERROR,
    EXIT_CODE_NUMERIC_FAILURE,
    EXIT_CODE_OK,
    LOG_LEVEL_INFO,
    LOG_PATH,
    LOSS_FILE,
    MANIFEST_FILE,
    METRICS_TEXTFILE,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
    RUNS_PATH,
    SLICES_FILE,
)
from pdirichlet_ritz.backend.energy import Penalty, ProblemSpec, energy, energy_from_samples, problem_from_config
from pdirichlet_ritz.backend.exceptions import (
    ConfigError,
    NewtonConvergenceError,
    NonFiniteError,
    TrainingDivergedError,
)
from pdirichlet_ritz.backend.expression import compile_expression
from pdirichlet_ritz.backend.logger import setup_logging
from pdirichlet_ritz.backend.metrics import write_metrics
from pdirichlet_ritz.backend.metrics.metrics_distance import natural_distance_sq, norm_errors
from pdirichlet_ritz.backend.metrics.metrics_lemmas import (
    equivalence_ratios,
    relation_check,
    sandwich_ratios,
    within_envelope,
)
from pdirichlet_ritz.backend.models import (
    ArchSpec,
    RandomParameterGridConfig,
    RunConfig,
    TensorGridConfig,
    VariableDomainGridConfig,
)
from pdirichlet_ritz.backend.network import arch_from_config, evaluate, param_count
from pdirichlet_ritz.backend.quadrature import (
    QuadratureSet,
    sample_parameters,
    slice_grid,
    spatial_from_config,
    tensor_grid,
)
from pdirichlet_ritz.backend.reference import exact, exact_on_points, fd_solve_1d, fit_rate, penalty_rate_study
from pdirichlet_ritz.backend.trainer import Checkpoint, TrainReport, save_checkpoint, train
from pdirichlet_ritz.backend.utils import config_digest


logger = logging.getLogger(__name__)

Reference = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]

EVALUATION_SEED_STREAM = 7919
CEA_TOLERANCE = 1e-6
DEFAULT_CEA_CONSTANT = 20.0
DEFAULT_ENVELOPE = 10.0


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator=CSV_LINE_TERMINATOR)
    return path


def _dump_json(payload: Any, path: Path) -> Path:
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY))
    return path


def host_info() -> Dict[str, Any]:
    process = psutil.Process(os.getpid())
    return {
        "hostname": platform.node(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "cpu_count": psutil.cpu_count(logical=True),
        "memory_total": psutil.virtual_memory().total,
        "rss_bytes": process.memory_info().rss,
    }


def library_versions() -> Dict[str, str]:
    import pydantic
    import sympy

    return {
        "pdirichlet_ritz": __version__,
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "sympy": sympy.__version__,
    }


# ---------------------------------------------------------------------------
# reference solutions and evaluation slices
# ---------------------------------------------------------------------------
def reference_from_config(run: RunConfig, spec: ProblemSpec) -> Optional[Reference]:
    """(𝓹, spatial points) ↦ (u*, ∇u*) for problems that name a closed-form family."""
    ref = run.problem.reference
    if ref is None:
        return None
    if spec.spatial_dim != 1 or spec.parameter_dim > 1:
        raise ConfigError(f"Reference family {ref.family} needs one spatial and at most one parameter coordinate")
    if spec.parameter_dim == 0 and ref.parameter is None:
        raise ConfigError(f"Reference family {ref.family} needs reference.parameter when the problem has no parameter")

    def reference(params: np.ndarray, spatial_points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        params = np.atleast_1d(np.asarray(params, dtype=np.float64))
        value = float(params[0]) if params.size else ref.parameter
        return exact(ref.family, value, np.asarray(spatial_points)[:, 0])

    return reference


def parameter_box(run: RunConfig) -> List[Tuple[float, float]]:
    grid = run.quadrature.interior
    n_param = len(run.problem.parameter_names)
    if isinstance(grid, RandomParameterGridConfig):
        return [tuple(b) for b in grid.parameter_box]
    if isinstance(grid, VariableDomainGridConfig):
        return [tuple(grid.parameter_axis[:2])]
    return [(lo, hi) for lo, hi, _ in grid.axes[:n_param]]


def evaluation_slices(run: RunConfig) -> List[List[float]]:
    """Configured 𝓹 values followed by ``random_slices`` draws from the parameter box."""
    slices = [list(map(float, s)) for s in run.evaluation.slices]
    n_param = len(run.problem.parameter_names)
    if run.evaluation.random_slices and n_param:
        drawn = sample_parameters(
            parameter_box(run), run.evaluation.random_slices, [run.seeds.quadrature, EVALUATION_SEED_STREAM]
        )
        slices.extend(row.tolist() for row in drawn)
    if not slices and n_param == 0:
        slices = [[]]
    return slices


def evaluation_spatial(run: RunConfig, spec: ProblemSpec, params: Sequence[float]) -> QuadratureSet:
    domain = spec.slice_domain(params)
    if domain is not None:
        return tensor_grid([(domain[0], domain[1], run.evaluation.domain_points)])
    if run.evaluation.spatial is not None:
        return spatial_from_config(run.evaluation.spatial)
    grid = run.quadrature.interior
    if isinstance(grid, RandomParameterGridConfig):
        return spatial_from_config(grid.spatial)
    if isinstance(grid, TensorGridConfig):
        return tensor_grid(grid.axes[spec.parameter_dim:])
    raise ConfigError(f"No evaluation grid for {type(grid).__name__}, set evaluation.spatial")


def slice_columns(
    spec: ProblemSpec,
    arch: ArchSpec,
    theta: np.ndarray,
    params: Sequence[float],
    spatial: QuadratureSet,
    reference: Optional[Reference],
) -> Dict[str, np.ndarray]:
    """Pointwise columns of one slice: x, u_θ, u*, ∂u_θ, ∂u* and the pointwise errors (NaN without u*)."""
    quad = slice_grid(params, spatial)
    u, gradu = evaluate(arch, theta, quad.points, spec.spatial_indices)
    if reference is not None:
        u_ref, grad_ref = reference(np.asarray(params, dtype=np.float64), spatial.points)
        grad_ref = np.asarray(grad_ref, dtype=np.float64).reshape(spatial.size, -1)
    else:
        u_ref = np.full(spatial.size, np.nan)
        grad_ref = np.full(gradu.shape, np.nan)
    frame = {name: np.full(spatial.size, float(c)) for name, c in zip(spec.parameter_names, params)}
    for k, name in enumerate(spec.spatial_names):
        frame[name] = spatial.points[:, k]
    frame["u_theta"] = u
    frame["u_ref"] = u_ref
    for k, name in enumerate(spec.spatial_names):
        frame[f"du_theta_{name}"] = gradu[:, k]
        frame[f"du_ref_{name}"] = grad_ref[:, k]
    frame["abs_error"] = np.abs(u_ref - u)
    frame["grad_error"] = np.sqrt(np.sum((grad_ref - gradu) ** 2, axis=1))
    return frame


# ---------------------------------------------------------------------------
# training experiments
# ---------------------------------------------------------------------------
class CeaAudit:
    """Per checkpoint: E(u_θ), E(u*) on the same points, ρ_F²(u_θ, u*) and ρ_F² ≤ C·(E(u_θ) − E(u*)) + tol."""

    def __init__(self, run: RunConfig, arch: ArchSpec, constant: float):
        self.ref = run.problem.reference
        self.arch = arch
        self.constant = constant
        self.rows: List[Dict[str, Any]] = []

    def __call__(self, checkpoint: Checkpoint, spec: ProblemSpec) -> Dict[str, Any]:
        quad = spec.interior_quad
        u_star, grad_star = exact_on_points(self.ref.family, quad.points, spec.parameter_dim, self.ref.parameter)
        _, grad_theta = evaluate(self.arch, checkpoint.theta, quad.points, spec.spatial_indices)
        e_theta = float(value_of(energy(spec, self.arch, checkpoint.theta)))
        e_star = energy_from_samples(spec, quad, u_star, grad_star)
        rho = natural_distance_sq(spec.exponent(quad.points), quad, grad_theta, grad_star)
        row = {
            "step": checkpoint.step,
            "energy": e_theta,
            "energy_ref": e_star,
            "energy_gap": e_theta - e_star,
            "natural_sq": rho,
            "constant": self.constant,
            "holds": bool(rho <= self.constant * (e_theta - e_star) + CEA_TOLERANCE),
        }
        self.rows.append(row)
        logger.info(f"Céa audit step {checkpoint.step}: gap={row['energy_gap']:.6e} ρ²={rho:.6e} holds={row['holds']}")
        return row


def _cea_constant(spec: ProblemSpec, baselines: Dict[str, Any]) -> float:
    exponents = spec.exponent(spec.interior_quad.points)
    p = float(exponents[0]) if np.all(exponents == exponents[0]) else float("nan")
    return baseline_constant(baselines, "cea", p, DEFAULT_CEA_CONSTANT)


def _training_artifacts(out_dir: Path, report: TrainReport, audit: Optional[CeaAudit]) -> List[str]:
    artifacts = [_write_csv(report.to_frame(), out_dir / LOSS_FILE).name]
    if audit is not None and audit.rows:
        artifacts.append(_write_csv(pd.DataFrame(audit.rows), out_dir / CHECKPOINT_AUDIT_FILE).name)
    return artifacts


def run_training(run: RunConfig, out_dir: Path, manifest: Dict[str, Any]) -> Dict[str, Any]:
    """Train, evaluate per slice and write loss/errors/slices/checkpoints; returns the manifest summary."""
    try:
        spec = problem_from_config(run)
        arch = arch_from_config(run)
        reference = reference_from_config(run, spec)
        slices = evaluation_slices(run)
        spatial_sets = [evaluation_spatial(run, spec, params) for params in slices]
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"Run config {run.experiment} is inconsistent: {e}") from e

    manifest["quadrature"] = {
        "interior": spec.interior_quad.summary(),
        "boundary": spec.boundary_quad.summary() if spec.boundary_quad is not None else None,
        "evaluation_points": [s.size for s in spatial_sets],
    }
    manifest["param_count"] = param_count(arch)
    checkpoint_dir = out_dir / CHECKPOINT_DIR
    audit = None
    if reference is not None and not isinstance(spec.variant, Penalty):
        audit = CeaAudit(run, arch, _cea_constant(spec, load_baselines()))

    def on_checkpoint(checkpoint: Checkpoint, current: ProblemSpec) -> None:
        save_checkpoint(checkpoint_dir / f"step_{checkpoint.step:07d}", arch, checkpoint.theta, checkpoint.step)
        if audit is not None:
            audit(checkpoint, current)

    schedule = run.schedule
    if schedule.log_every is None:
        schedule = schedule.model_copy(update={"log_every": ConfigManager.get_instance().get("training.log_every")})
    try:
        report = train(
            spec, arch, schedule, run.seeds.init,
            reproducible=run.reproducible, on_checkpoint=on_checkpoint, experiment=run.experiment,
        )
    except TrainingDivergedError as e:
        manifest["artifacts"].extend(_training_artifacts(out_dir, e.report, audit))
        manifest["training"] = {"steps": len(e.report.history), "wall_clock": e.report.wall_clock, "aborted": True}
        raise

    artifacts = manifest["artifacts"]
    artifacts.extend(_training_artifacts(out_dir, report, audit))
    if report.checkpoints:
        artifacts.append(CHECKPOINT_DIR)
    errors = norm_errors(spec, arch, report.theta, reference, slices, spatial_sets)
    errors.to_csv(out_dir / ERRORS_FILE)
    (out_dir / ERRORS_AGGREGATE_FILE).write_bytes(errors.to_json())
    artifacts.extend([ERRORS_FILE, ERRORS_AGGREGATE_FILE])
    columns = [slice_columns(spec, arch, report.theta, params, spatial, reference) for params, spatial in zip(slices, spatial_sets)]
    slices_table = pd.DataFrame({k: np.concatenate([c[k] for c in columns]) for k in columns[0]} if columns else {})
    artifacts.append(_write_csv(slices_table, out_dir / SLICES_FILE).name)

    final_energy = float(value_of(energy(spec, arch, report.theta)))
    summary: Dict[str, Any] = {
        "final_loss": report.history[-1] if report.history else final_energy,
        "initial_loss": report.history[0] if report.history else final_energy,
        "final_energy": final_energy,
        "steps": len(report.history),
        **errors.aggregates(),
    }
    if run.evaluation.gradient_check_coordinates:
        coordinates = np.unique(
            np.linspace(0, report.theta.size - 1, run.evaluation.gradient_check_coordinates).astype(int)
        ).tolist()
        summary["gradient_check_max_rel"] = check_gradient(
            lambda t: energy(spec, arch, t, reproducible=run.reproducible), report.theta, coordinates=coordinates
        )
        logger.info(f"Gradient check on {len(coordinates)} coordinates: {summary['gradient_check_max_rel']:.3e}")
    if audit is not None and audit.rows:
        summary["cea_holds"] = all(row["holds"] for row in audit.rows)
    manifest["training"] = {"steps": len(report.history), "wall_clock": report.wall_clock, "aborted": False}
    return summary


# ---------------------------------------------------------------------------
# verification studies
# ---------------------------------------------------------------------------
def run_sandwich(run: RunConfig, out_dir: Path, manifest: Dict[str, Any]) -> Dict[str, Any]:
    study, baselines = run.study, load_baselines()
    frames, rows = [], []
    for p in study.p_values:
        frame = sandwich_ratios(
            p, study.n_points, study.n_perturbations, seed=run.seeds.quadrature,
            modes=study.modes, delta_range=tuple(study.delta_range),
        )
        frames.append(frame)
        envelope = baseline_constant(baselines, "sandwich", p, DEFAULT_ENVELOPE)
        rows.append({
            "p": p,
            "min_ratio": float(frame["ratio"].min()),
            "max_ratio": float(frame["ratio"].max()),
            "envelope": envelope,
            "within_envelope": within_envelope(frame["ratio"], envelope),
        })
    summary_frame = pd.DataFrame(rows)
    manifest["artifacts"].extend([
        _write_csv(pd.concat(frames, ignore_index=True), out_dir / "sandwich.csv").name,
        _write_csv(summary_frame, out_dir / "sandwich_summary.csv").name,
    ])
    manifest["quadrature"] = {"interior": tensor_grid([(-1.0, 1.0, study.n_points)]).summary()}
    return {
        "min_ratio": float(summary_frame["min_ratio"].min()),
        "max_ratio": float(summary_frame["max_ratio"].max()),
        "within_envelope": bool(summary_frame["within_envelope"].all()),
    }


def _random_fields(rng: np.random.Generator, n: int, modes: int) -> Tuple[np.ndarray, np.ndarray]:
    x = tensor_grid([(-1.0, 1.0, n)]).points[:, 0]
    k = np.arange(1, modes + 1)
    dbasis = np.cos(np.outer(x + 1.0, k * np.pi / 2.0)) * (k * np.pi / 2.0)
    return dbasis @ rng.standard_normal(modes), dbasis @ rng.standard_normal(modes)


def run_lemmas(run: RunConfig, out_dir: Path, manifest: Dict[str, Any]) -> Dict[str, Any]:
    study, baselines = run.study, load_baselines()
    rows, relations = [], []
    quad = tensor_grid([(-1.0, 1.0, study.n_points)])
    rng = np.random.default_rng(run.seeds.quadrature)
    for p in study.p_values:
        envelope = baseline_constant(baselines, "lemmas", p, DEFAULT_ENVELOPE)
        for dim in study.dimensions:
            for form, ratio in equivalence_ratios(p, n_samples=study.n_samples, seed=run.seeds.quadrature, dim=dim).items():
                rows.append({
                    "p": p, "dim": dim, "form": form, **ratio, "envelope": envelope,
                    "within_envelope": within_envelope([ratio["min_ratio"], ratio["max_ratio"]], envelope),
                })
        for trial in range(study.n_perturbations):
            gradv, gradw = _random_fields(rng, study.n_points, study.modes)
            check = relation_check(p, quad, gradv, gradw)
            relations.append({"p": p, "trial": trial, "lhs": check.lhs, "mid": check.mid, "rhs": check.rhs,
                              "constant": check.constant, "holds": check.holds})
    lemmas, relation_frame = pd.DataFrame(rows), pd.DataFrame(relations)
    manifest["artifacts"].extend([
        _write_csv(lemmas, out_dir / "lemmas.csv").name,
        _write_csv(relation_frame, out_dir / "relations.csv").name,
    ])
    manifest["quadrature"] = {"interior": quad.summary()}
    return {
        "min_ratio": float(lemmas["min_ratio"].min()),
        "max_ratio": float(lemmas["max_ratio"].max()),
        "within_envelope": bool(lemmas["within_envelope"].all()),
        "max_relation_constant": float(relation_frame["constant"].max()),
    }


def _study_rhs(run: RunConfig):
    return compile_expression(run.study.rhs, ("x",))


def _newton_options() -> Dict[str, Any]:
    config = ConfigManager.get_instance()
    return {"tol": float(config.get("newton.tol", NEWTON_TOL)), "max_iter": int(config.get("newton.max_iter", NEWTON_MAX_ITER))}


def run_penalty_rate(run: RunConfig, out_dir: Path, manifest: Dict[str, Any]) -> Dict[str, Any]:
    study, f = run.study, _study_rhs(run)
    n = max(study.mesh_sizes)
    tables, fits = [], []
    for p in study.p_values:
        table = penalty_rate_study(p, lambda x: f(x.reshape(-1, 1)), study.lambdas, n=n, domain=tuple(study.domain), **_newton_options())
        table.insert(0, "p", p)
        tables.append(table)
        fit = fit_rate(table)
        bound = -1.0 / p - 0.5
        fits.append({"p": p, **fit, "bound": bound, "faster_than_bound": fit["slope"] <= bound,
                     "monotone": bool(table["boundary_norm"].is_monotonic_decreasing)})
    fit_frame = pd.DataFrame(fits)
    manifest["artifacts"].extend([
        _write_csv(pd.concat(tables, ignore_index=True), out_dir / "penalty_rate.csv").name,
        _write_csv(fit_frame, out_dir / "penalty_rate_fit.csv").name,
    ])
    manifest["quadrature"] = {"fd_cells": n}
    return {"max_slope": float(fit_frame["slope"].max()), "monotone": bool(fit_frame["monotone"].all())}


def run_fd_oracle(run: RunConfig, out_dir: Path, manifest: Dict[str, Any]) -> Dict[str, Any]:
    study, f = run.study, _study_rhs(run)
    ref = study.reference
    rows, finest = [], None
    for p in study.p_values:
        previous = None
        for n in sorted(study.mesh_sizes):
            sol = fd_solve_1d(
                p, lambda x: f(x.reshape(-1, 1)), tuple(study.domain), n,
                bc=study.bc, penalty=study.penalty, **_newton_options(),
            )
            row = {"p": p, "n": n, "h": sol.h, "newton_iterations": sol.iterations, "max_error": np.nan, "order": np.nan}
            if ref is not None:
                param = p if ref.parameter is None else ref.parameter
                row["max_error"] = sol.max_error(lambda x: exact(ref.family, param, x)[0])
                if previous is not None and previous["max_error"] > 0 and row["max_error"] > 0:
                    row["order"] = float(np.log(previous["max_error"] / row["max_error"]) / np.log(previous["h"] / sol.h))
            rows.append(row)
            previous = row
            finest = sol
    table = pd.DataFrame(rows)
    manifest["artifacts"].append(_write_csv(table, out_dir / "fd_oracle.csv").name)
    if finest is not None:
        finest.to_csv(out_dir / "fd_solution.csv")
        manifest["artifacts"].append("fd_solution.csv")
    manifest["quadrature"] = {"fd_cells": list(map(int, sorted(study.mesh_sizes)))}
    return {
        "min_order": float(table["order"].min()) if table["order"].notna().any() else None,
        "finest_max_error": float(table["max_error"].iloc[-1]) if table["max_error"].notna().any() else None,
    }


STUDIES = {
    "sandwich": run_sandwich,
    "lemmas": run_lemmas,
    "penalty_rate": run_penalty_rate,
    "fd_oracle": run_fd_oracle,
}


# ---------------------------------------------------------------------------
# run / report
# ---------------------------------------------------------------------------
def default_run_dir(run: RunConfig, digest: str) -> Path:
    root = ConfigManager.get_instance().get("runs.output_root") or RUNS_PATH
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    return Path(os.path.expanduser(root)) / f"{run.experiment}-{digest[:10]}-{stamp}"


def run_experiment(run: RunConfig, out_dir: Optional[os.PathLike] = None) -> Dict[str, Any]:
    """Execute one experiment and write its directory; the manifest is written even when the run fails."""
    echo = run.model_dump(mode="json")
    digest = config_digest(echo)
    out_dir = Path(out_dir or run.output_dir or default_run_dir(run, digest))
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: Dict[str, Any] = {
        "config": echo,
        "config_digest": digest,
        "experiment": run.experiment,
        "seeds": run.seeds.model_dump(),
        "reproducible": run.reproducible,
        "versions": library_versions(),
        "started_at": datetime.now().isoformat(timespec="seconds"),
        "status": "running",
        "artifacts": [],
        "summary": {},
    }
    logger.info(f"Run {run.experiment} digest={digest[:12]} → {out_dir}")
    started = time.perf_counter()
    try:
        if run.experiment in STUDIES:
            manifest["summary"] = STUDIES[run.experiment](run, out_dir, manifest)
        else:
            manifest["summary"] = run_training(run, out_dir, manifest)
        manifest["status"] = "ok"
    except ConfigError:
        manifest["status"] = "config_error"
        raise
    except ValueError as e:
        # arguments only rejected once the run reaches them, e.g. a reference outside its family
        manifest["status"] = "config_error"
        manifest["error"] = str(e)
        raise
    except (NonFiniteError, TrainingDivergedError, NewtonConvergenceError) as e:
        manifest["status"] = "numeric_failure"
        manifest["error"] = str(e)
        raise
    finally:
        manifest["wall_clock"] = time.perf_counter() - started
        manifest["host"] = host_info()
        if ConfigManager.get_instance().get("metrics.textfile", True):
            manifest["artifacts"].append(Path(write_metrics(str(out_dir / METRICS_TEXTFILE))).name)
        _dump_json(manifest, out_dir / MANIFEST_FILE)
        logger.info(f"Run {run.experiment} {manifest['status']} in {manifest['wall_clock']:.2f}s, digest={digest[:12]}")
    return manifest


def report_runs(run_dirs: Sequence[os.PathLike], out: Optional[os.PathLike] = None) -> pd.DataFrame:
    """One row per run directory: identity, wall clock, final loss and the summary numbers."""
    rows = []
    for run_dir in map(Path, run_dirs):
        manifest_path = run_dir / MANIFEST_FILE
        if not manifest_path.is_file():
            logger.warning(f"No {MANIFEST_FILE} in {run_dir}, skipped")
            continue
        manifest = orjson.loads(manifest_path.read_bytes())
        row = {
            "run_dir": str(run_dir),
            "experiment": manifest.get("experiment"),
            "config_digest": manifest.get("config_digest"),
            "seed_init": manifest.get("seeds", {}).get("init"),
            "seed_quadrature": manifest.get("seeds", {}).get("quadrature"),
            "status": manifest.get("status"),
            "wall_clock": manifest.get("wall_clock"),
        }
        row.update(manifest.get("summary") or {})
        rows.append(row)
    frame = pd.DataFrame(rows)
    if out is not None:
        _write_csv(frame, Path(out))
        logger.info(f"Report of {len(rows)} run(s) written to {out}")
    return frame


# ---------------------------------------------------------------------------
# argparse
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdritz", description="Deep Ritz experiments for p-Dirichlet energies.")
    parser.add_argument("--env", type=str, default=None, choices=APP_ENVS, help="application config environment")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config (YAML/JSON or a manifest.json)")
    run.add_argument("config", type=str)
    run.add_argument("--out", type=str, default=None, help="run directory")
    run.add_argument("--seed", type=int, default=None, help="overrides both the init and the quadrature seed")
    run.add_argument("--reproducible", action=argparse.BooleanOptionalAction, default=None,
                     help="sequential left-to-right reductions")

    report = sub.add_parser("report", help="merge the manifests of several run directories")
    report.add_argument("run_dirs", nargs="+")
    report.add_argument("--out", type=str, default=None, help="CSV path, printed to stdout when omitted")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    config = ConfigManager.init_config(env=args.env)
    setup_logging(
        config.get("logging.level", LOG_LEVEL_INFO),
        log_dir=os.path.expanduser(config.get("logging.dir") or LOG_PATH),
    )

    if args.command == "report":
        frame = report_runs(args.run_dirs, args.out)
        if args.out is None:
            sys.stdout.write(frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator=CSV_LINE_TERMINATOR))
        return EXIT_CODE_OK

    overrides: Dict[str, Any] = {"output_dir": args.out, "reproducible": args.reproducible}
    if args.seed is not None:
        overrides.update({"seeds.init": args.seed, "seeds.quadrature": args.seed})
    try:
        run = load_run_config(args.config, overrides)
        run_experiment(run)
    except (NonFiniteError, TrainingDivergedError, NewtonConvergenceError) as e:
        logger.error(f"Numeric failure: {e}")
        return EXIT_CODE_NUMERIC_FAILURE
    except ValueError as e:
        logger.error(f"Config error: {e}")
        return EXIT_CODE_CONFIG_ERROR
    return EXIT_CODE_OK


if __name__ == "__main__":
    sys.exit(main())
