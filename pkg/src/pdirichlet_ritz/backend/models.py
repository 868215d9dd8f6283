from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import orjson
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing_extensions import Annotated

from pdirichlet_ritz.backend.constants import CSV_FLOAT_FORMAT, CSV_LINE_TERMINATOR


ActivationName = Literal["relu2", "gelu", "s2relu"]
ExperimentKind = Literal["vrhs", "vexp", "vdom", "mixed7d", "sandwich", "lemmas", "penalty_rate", "fd_oracle"]
VariantName = Literal["fixed_p", "penalty", "variable_rhs", "variable_exponent", "variable_domain", "mixed_mass"]
FamilyName = Literal["vrhs", "vexp", "vdom"]

TRAINING_EXPERIMENTS = ("vrhs", "vexp", "vdom", "mixed7d")
STUDY_EXPERIMENTS = ("sandwich", "lemmas", "penalty_rate", "fd_oracle")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class _Frozen(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _check_interval(value: Tuple[float, float], what: str) -> Tuple[float, float]:
    lo, hi = value
    if not lo < hi:
        raise ValueError(f"{what} needs lo < hi, got ({lo}, {hi})")
    return value


# ---------------------------------------------------------------------------
# network description
# ---------------------------------------------------------------------------
class LiftSpec(_Frozen):
    """Multiplicative boundary weight η applied to the raw network output."""

    kind: Literal["none", "product1d", "interval_family", "formula"] = Field("none", description="lift 类型")
    variable: str = Field("x", description="spatial coordinate the lift acts on")
    bounds: Optional[Tuple[float, float]] = Field(None, description="product1d: Dirichlet endpoints (a, b)")
    parameter: str = Field("p", description="interval_family: parameter giving Ω(p) = (−p, p)")
    formula: Optional[str] = Field(None, description="formula: sympy expression in the input names")

    @model_validator(mode="after")
    def _check_kind(self) -> "LiftSpec":
        if self.kind == "product1d":
            if self.bounds is None:
                raise ValueError("product1d lift needs bounds (a, b)")
            _check_interval(self.bounds, "product1d bounds")
        if self.kind == "formula" and not self.formula:
            raise ValueError("formula lift needs a formula")
        return self

    def formula_text(self) -> Optional[str]:
        """η as a sympy-parsable string, ``None`` for the identity lift."""
        if self.kind == "none":
            return None
        if self.kind == "product1d":
            a, b = self.bounds
            scale = ((b - a) / 2.0) ** 2
            return f"(({b!r}) - {self.variable})*({self.variable} - ({a!r}))/({scale!r})"
        if self.kind == "interval_family":
            p, x = self.parameter, self.variable
            return f"({p} - {x})*({p} + {x})/{p}**2"
        return self.formula

    def coordinates(self) -> List[str]:
        if self.kind == "product1d":
            return [self.variable]
        if self.kind == "interval_family":
            return [self.parameter, self.variable]
        return []


class FourierSpec(_Frozen):
    num_features: int = Field(..., ge=1, description="m, the embedding has 2m outputs")
    sigma: float = Field(..., gt=0.0, description="std of the trainable B entries at init")


class ArchSpec(_Frozen):
    """Fully connected network: [Fourier embedding] → hidden layers → scalar output → lift."""

    input_dim: int = Field(..., ge=1)
    hidden_widths: Tuple[int, ...] = Field(..., min_length=1)
    output_dim: Literal[1] = 1
    activation: ActivationName = "relu2"
    fourier: Optional[FourierSpec] = None
    lift: LiftSpec = LiftSpec()
    input_names: Optional[Tuple[str, ...]] = None

    @field_validator("hidden_widths")
    @classmethod
    def _positive_widths(cls, widths: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(w < 1 for w in widths):
            raise ValueError(f"hidden widths must be >= 1, got {list(widths)}")
        return widths

    @model_validator(mode="after")
    def _check_names(self) -> "ArchSpec":
        if self.input_names is not None:
            if len(self.input_names) != self.input_dim:
                raise ValueError(f"input_names has {len(self.input_names)} entries for input_dim={self.input_dim}")
            if len(set(self.input_names)) != len(self.input_names):
                raise ValueError(f"input_names must be unique, got {list(self.input_names)}")
        missing = [c for c in self.lift.coordinates() if c not in self.names]
        if missing:
            raise ValueError(f"lift refers to unknown inputs {missing}, inputs are {list(self.names)}")
        return self

    @property
    def names(self) -> Tuple[str, ...]:
        if self.input_names is not None:
            return self.input_names
        if self.input_dim == 1:
            return ("x",)
        return tuple(f"z{i}" for i in range(self.input_dim))

    @property
    def embedded_dim(self) -> int:
        return 2 * self.fourier.num_features if self.fourier else self.input_dim

    @property
    def layer_widths(self) -> List[int]:
        return [self.embedded_dim, *self.hidden_widths, self.output_dim]


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------
Axis = Tuple[float, float, int]


def _check_axes(axes: List[Axis]) -> List[Axis]:
    for lo, hi, n in axes:
        _check_interval((lo, hi), "axis")
        if n < 1:
            raise ValueError(f"axis ({lo}, {hi}, {n}) needs at least one point")
    return axes


class TensorGridConfig(_Strict):
    kind: Literal["tensor"] = "tensor"
    axes: List[Axis] = Field(..., min_length=1, description="(lo, hi, n) per coordinate, parameters first")

    _axes = field_validator("axes")(classmethod(lambda cls, v: _check_axes(v)))


class DiskGridConfig(_Strict):
    kind: Literal["disk"] = "disk"
    radius: float = Field(1.0, gt=0.0)
    n_per_axis: int = Field(..., ge=1)


SpatialGridConfig = Annotated[Union[TensorGridConfig, DiskGridConfig], Field(discriminator="kind")]


class VariableDomainGridConfig(_Strict):
    kind: Literal["variable_domain"] = "variable_domain"
    parameter_axis: Axis
    points_per_slice: str = Field(..., description="n_x(p), e.g. '2000*p'")

    _axis = field_validator("parameter_axis")(classmethod(lambda cls, v: _check_axes([v])[0]))


class RandomParameterGridConfig(_Strict):
    kind: Literal["random_parameter"] = "random_parameter"
    parameter_box: List[Tuple[float, float]] = Field(..., min_length=1)
    n_parameters: int = Field(..., ge=1)
    spatial: SpatialGridConfig

    @field_validator("parameter_box")
    @classmethod
    def _box(cls, box: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        return [_check_interval(b, "parameter_box") for b in box]


InteriorGridConfig = Annotated[
    Union[TensorGridConfig, VariableDomainGridConfig, RandomParameterGridConfig], Field(discriminator="kind")
]


class QuadratureConfig(_Strict):
    interior: InteriorGridConfig
    boundary: Optional[Tuple[float, float]] = Field(None, description="1D domain (a, b) for the penalty term")


class ReferenceConfig(_Strict):
    family: FamilyName
    parameter: Optional[float] = Field(None, description="fixed 𝓹 when the problem has no parameter coordinates")


class ProblemConfig(_Strict):
    variant: VariantName
    p: Optional[float] = Field(None, gt=1.0)
    p_of: Optional[str] = None
    p_bounds: Optional[Tuple[float, float]] = None
    penalty: Optional[float] = Field(None, ge=0.0, description="λ of the boundary penalty")
    rhs: str = "1"
    domain_half_width: Optional[str] = Field(None, description="Ω(𝓹) = (−w(𝓹), w(𝓹))")
    parameter_names: List[str] = []
    spatial_names: List[str] = ["x"]
    lift: LiftSpec = LiftSpec()
    reference: Optional[ReferenceConfig] = None

    @model_validator(mode="after")
    def _check_variant(self) -> "ProblemConfig":
        names = self.parameter_names + self.spatial_names
        if len(set(names)) != len(names):
            raise ValueError(f"parameter and spatial names must be unique, got {names}")
        if not self.spatial_names:
            raise ValueError("at least one spatial coordinate is needed")
        if self.variant in ("fixed_p", "penalty", "variable_rhs", "variable_domain") and self.p is None:
            raise ValueError(f"variant {self.variant} needs p")
        if self.variant in ("variable_exponent", "mixed_mass") and not self.p_of:
            raise ValueError(f"variant {self.variant} needs p_of")
        if self.variant == "variable_exponent":
            if self.p_bounds is None:
                raise ValueError("variable_exponent needs p_bounds (p-, p+)")
            lo, hi = self.p_bounds
            if not 1.0 < lo <= hi < float("inf"):
                raise ValueError(f"p_bounds must satisfy 1 < p- <= p+ < inf, got ({lo}, {hi})")
        if self.variant == "penalty" and self.penalty is None:
            raise ValueError("penalty variant needs penalty (λ)")
        if self.variant == "variable_domain" and not self.domain_half_width:
            raise ValueError("variable_domain needs domain_half_width")
        return self


class ArchConfig(_Strict):
    hidden_widths: List[int] = Field(..., min_length=1)
    activation: ActivationName = "relu2"
    fourier: Optional[FourierSpec] = None


class ScheduleConfig(_Strict):
    steps: int = Field(0, ge=0)
    learning_rate: float = Field(1e-3, gt=0.0)
    resample_every: int = Field(0, ge=0, description="0 keeps the quadrature fixed")
    checkpoint_every: int = Field(0, ge=0)
    optimizer: Literal["adam", "adam+lbfgs"] = "adam"
    lbfgs_iterations: int = Field(0, ge=0)
    lbfgs_memory: int = Field(10, ge=1)
    log_every: Optional[int] = Field(None, ge=1)


class SeedConfig(_Strict):
    init: int = Field(0, ge=0)
    quadrature: int = Field(0, ge=0)


class EvaluationConfig(_Strict):
    slices: List[List[float]] = []
    random_slices: int = Field(0, ge=0)
    spatial: Optional[SpatialGridConfig] = None
    domain_points: int = Field(1000, ge=1, description="points per slice on variable domains")
    gradient_check_coordinates: int = Field(0, ge=0)


class StudyConfig(_Strict):
    p_values: List[float] = Field([2.0], min_length=1)
    lambdas: List[float] = [1.0, 10.0, 100.0, 1000.0]
    mesh_sizes: List[int] = [50, 100, 200, 400]
    n_points: int = Field(4000, ge=1)
    n_perturbations: int = Field(200, ge=1)
    delta_range: Tuple[float, float] = (0.5, 1.0)
    modes: int = Field(5, ge=1)
    n_samples: int = Field(100000, ge=1)
    dimensions: List[int] = [1, 2, 3]
    domain: Tuple[float, float] = (-1.0, 1.0)
    rhs: str = "1"
    bc: Literal["dirichlet0", "penalty"] = "dirichlet0"
    penalty: Optional[float] = Field(None, ge=0.0)
    reference: Optional[ReferenceConfig] = None

    @field_validator("p_values")
    @classmethod
    def _exponents(cls, values: List[float]) -> List[float]:
        if any(p <= 1.0 for p in values):
            raise ValueError(f"every p must be > 1, got {values}")
        return values

    @field_validator("lambdas")
    @classmethod
    def _lambdas(cls, values: List[float]) -> List[float]:
        if any(lam < 1.0 for lam in values):
            raise ValueError(f"penalty rates are studied for λ >= 1, got {values}")
        return values

    @field_validator("mesh_sizes")
    @classmethod
    def _meshes(cls, values: List[int]) -> List[int]:
        if any(n < 3 for n in values):
            raise ValueError(f"mesh sizes must be >= 3, got {values}")
        return values

    @model_validator(mode="after")
    def _check(self) -> "StudyConfig":
        _check_interval(self.domain, "domain")
        lo, hi = self.delta_range
        if not 0.0 < lo <= hi:
            raise ValueError(f"delta_range needs 0 < lo <= hi, got {self.delta_range}")
        if self.bc == "penalty" and self.penalty is None:
            raise ValueError("penalty boundary condition needs penalty (λ)")
        return self


class RunConfig(_Strict):
    """One experiment: a training study (vrhs/vexp/vdom/mixed7d) or a verification study."""

    experiment: ExperimentKind
    description: str = ""
    problem: Optional[ProblemConfig] = None
    arch: Optional[ArchConfig] = None
    quadrature: Optional[QuadratureConfig] = None
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    seeds: SeedConfig = Field(default_factory=SeedConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    study: Optional[StudyConfig] = None
    reproducible: bool = True
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_sections(self) -> "RunConfig":
        if self.experiment in STUDY_EXPERIMENTS:
            if self.study is None:
                self.study = StudyConfig()
            return self
        for section in ("problem", "arch", "quadrature"):
            if getattr(self, section) is None:
                raise ValueError(f"experiment {self.experiment} needs a '{section}' section")
        problem, grid = self.problem, self.quadrature.interior
        n_param, n_space = len(problem.parameter_names), len(problem.spatial_names)
        if grid.kind == "tensor" and len(grid.axes) != n_param + n_space:
            raise ValueError(f"tensor grid has {len(grid.axes)} axes for {n_param + n_space} input coordinates")
        if grid.kind == "variable_domain":
            if problem.variant != "variable_domain" or (n_param, n_space) != (1, 1):
                raise ValueError("variable_domain grids need a variable_domain problem with one parameter and x")
        if grid.kind == "random_parameter":
            if len(grid.parameter_box) != n_param:
                raise ValueError(f"parameter_box has {len(grid.parameter_box)} entries for {n_param} parameters")
            spatial_dim = 2 if grid.spatial.kind == "disk" else len(grid.spatial.axes)
            if spatial_dim != n_space:
                raise ValueError(f"spatial grid is {spatial_dim}-dimensional, problem has {n_space} spatial names")
        if problem.variant == "penalty" and self.quadrature.boundary is None:
            raise ValueError("penalty problems need quadrature.boundary")
        if problem.variant != "penalty" and self.quadrature.boundary is not None:
            raise ValueError("only penalty problems take a boundary quadrature")
        for params in self.evaluation.slices:
            if len(params) != n_param:
                raise ValueError(f"evaluation slice {params} needs {n_param} parameter values")
        return self


# ---------------------------------------------------------------------------
# error reports
# ---------------------------------------------------------------------------
ERROR_COLUMNS = ("lp_abs", "lp_rel", "w1p_abs", "w1p_rel", "natural_sq")


class SliceError(BaseModel):
    parameters: List[float] = []
    p: float
    lp_abs: float
    lp_rel: Optional[float] = None
    w1p_abs: float
    w1p_rel: Optional[float] = None
    natural_sq: float


class ErrorReport(BaseModel):
    """Per-slice discrete errors and their arithmetic means."""

    parameter_names: List[str] = []
    slices: List[SliceError] = []

    def aggregates(self) -> Dict[str, Optional[float]]:
        result: Dict[str, Optional[float]] = {}
        for column in ERROR_COLUMNS:
            values = [getattr(s, column) for s in self.slices if getattr(s, column) is not None]
            result[column] = float(np.mean(values)) if values else None
        return result

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for s in self.slices:
            row = dict(zip(self.parameter_names, s.parameters))
            row.update({c: (np.nan if getattr(s, c) is None else getattr(s, c)) for c in ERROR_COLUMNS})
            rows.append(row)
        return pd.DataFrame(rows, columns=[*self.parameter_names, *ERROR_COLUMNS])

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator=CSV_LINE_TERMINATOR)

    def to_json(self) -> bytes:
        return orjson.dumps(
            {"parameter_names": self.parameter_names, "slices": len(self.slices), "aggregates": self.aggregates()},
            option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY,
        )
