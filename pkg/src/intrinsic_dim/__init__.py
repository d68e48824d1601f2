"""Intrinsic dimension of objective landscapes via random subspace training."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .projection import ProjectionKind, make_projection
from .subspace import SubspaceModel, effective_params, init_subspace_model
from .estimator import SweepReport, run_sweep
from .codec import load_compressed, save_compressed

__all__ = ["ProjectionKind", "make_projection", "SubspaceModel", "effective_params",
           "init_subspace_model", "SweepReport", "run_sweep", "load_compressed",
           "save_compressed", "__version__"]
