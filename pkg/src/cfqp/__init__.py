"""cfqp: exact closed-form piecewise-linear solution functions for
multiparametric QPs, with a DC optimal power flow front end."""

from . import cases, core, dcopf, discovery, errors, model, oracle, problem
from .errors import CfqpError
from .problem import ActiveSet, MpQpProblem, ParameterPoint, PrimalDualSolution

__version__ = "0.1.0"

__all__ = [
    "cases",
    "core",
    "dcopf",
    "discovery",
    "errors",
    "model",
    "oracle",
    "problem",
    "CfqpError",
    "ActiveSet",
    "MpQpProblem",
    "ParameterPoint",
    "PrimalDualSolution",
    "__version__",
]
