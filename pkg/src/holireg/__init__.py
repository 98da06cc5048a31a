"""Holistic linear regression: best-subset selection with significance,
sparsity, pairwise-correlation and multicollinearity constraints."""

from .detection import (
    MulticollinearityDetector,
    MulticollinearRelation,
    PlantedSpec,
    SmallEigenSpace,
    emit_cut,
    iterative_mc,
    min_support_relation,
    small_eigenvectors,
    synth_generate,
)
from .exceptions import (
    DegreesOfFreedomError,
    HoliregError,
    ParameterError,
    ParseError,
    ProtocolError,
    SingularMatrixError,
    StructuralError,
    UndefinedCorrelationError,
)
from .holistic import FitResult, HolisticProblem, HolisticRegressor, fit, ma_metric, tune
from .mio import Cut, GatedSignificance, Incumbent, MioProblem, PatternCut, SolveResult, solve
from .significance import (
    SignificanceCallback,
    SignificanceParams,
    bootstrap_significance,
    n_stat,
)

__version__ = "0.1.0"

__all__ = [
    "Cut", "DegreesOfFreedomError", "FitResult", "GatedSignificance", "HoliregError",
    "HolisticProblem", "HolisticRegressor", "Incumbent", "MioProblem",
    "MulticollinearRelation", "MulticollinearityDetector", "ParameterError", "ParseError",
    "PatternCut", "PlantedSpec", "ProtocolError", "SignificanceCallback",
    "SignificanceParams", "SingularMatrixError", "SmallEigenSpace", "SolveResult",
    "StructuralError", "UndefinedCorrelationError", "bootstrap_significance", "emit_cut",
    "fit", "iterative_mc", "ma_metric", "min_support_relation", "n_stat",
    "small_eigenvectors", "solve", "synth_generate", "tune",
]
