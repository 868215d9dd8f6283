import logging
import os
from typing import TYPE_CHECKING

from pdirichlet_ritz import _attach


logger = logging.getLogger(__name__)

_SUBMOD_ATTRS = {
    "startup": [
        "main",
        "report_runs",
        "run_experiment",
    ],
}

__getattr__, __dir__, __all__ = _attach(__name__, submodules=[], submod_attrs=_SUBMOD_ATTRS)

if os.environ.get("EAGER_IMPORT", ""):
    for attr in __all__:
        __getattr__(attr)

# 静态导入，与 _SUBMOD_ATTRS 保持一致，只给类型检查器看
if TYPE_CHECKING:  # pragma: no cover
    from .startup import (
        main,  # noqa: F401
        report_runs,  # noqa: F401
        run_experiment,  # noqa: F401
    )
