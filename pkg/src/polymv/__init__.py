"""Moment equations, Magnus transition matrices, dual coefficient fields and
particle simulation for polynomial McKean-Vlasov SDEs."""

__version__ = "0.1.0"

from .coeffmaps import (ValidationReport, Verdict, check_assumptions, check_pmp,  # noqa: E402
                        check_pmp_common, check_pmp_joint)
from .errors import (ComponentIndexError, ConfigError, ExprSyntaxError,  # noqa: E402
                     NonFiniteStateError, NumericalError, PolyMVError, SpanError,
                     TemplateMismatchError, ToleranceUnachievableError)
from .expr import evaluate, parse, render  # noqa: E402
from .model import ModelSpec, StateSpace, load_model, make_model, parse_model  # noqa: E402
from .momentode import build_L, gronwall_bound, integrate_moments  # noqa: E402

__all__ = [
    "__version__", "ValidationReport", "Verdict", "check_assumptions", "check_pmp",
    "check_pmp_common", "check_pmp_joint", "ComponentIndexError", "ConfigError",
    "ExprSyntaxError", "NonFiniteStateError", "NumericalError", "PolyMVError", "SpanError",
    "TemplateMismatchError", "ToleranceUnachievableError", "evaluate", "parse", "render",
    "ModelSpec", "StateSpace", "load_model", "make_model", "parse_model", "build_L",
    "gronwall_bound", "integrate_moments",
]
