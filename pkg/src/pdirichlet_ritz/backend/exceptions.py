from typing import Any, Dict, List, Optional, Sequence


class RitzError(Exception):
    """Base class of every error raised by pdirichlet_ritz."""


class NonFiniteError(RitzError, ArithmeticError):
    """A NaN or infinity showed up while evaluating a program.

    ``node_kind`` names the first tape operation that produced it, ``point_index`` the quadrature lane
    (when the failure can be attributed to one point).
    """

    def __init__(self, node_kind: str, point_index: Optional[int] = None, point: Optional[Sequence[float]] = None):
        self.node_kind = node_kind
        self.point_index = point_index
        self.point = None if point is None else [float(c) for c in point]
        message = f"non-finite value produced by '{node_kind}'"
        if point_index is not None:
            message += f" at quadrature point #{point_index}"
        if self.point is not None:
            message += f" {self.point}"
        super().__init__(message)


class NewtonConvergenceError(RitzError):
    """Damped Newton did not reach the gradient tolerance, ``log`` holds one dict per iteration."""

    def __init__(self, message: str, log: List[Dict[str, float]]):
        super().__init__(message)
        self.log = log


class TrainingDivergedError(RitzError):
    """Training hit a non-finite loss; ``report`` keeps the history and the last good parameters."""

    def __init__(self, message: str, report: Any):
        super().__init__(message)
        self.report = report


class ConfigError(RitzError, ValueError):
    """Run configuration failed validation, ``errors`` are the formatted field errors."""

    def __init__(self, message: str, errors: Optional[List[Dict[str, str]]] = None):
        super().__init__(message)
        self.errors = errors or []
