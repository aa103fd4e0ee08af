"""Online selective conformal inference.

A threshold recursion that controls the false coverage proportion over the
times at which an inference is reported, together with selection rules,
prediction sets, plug-in estimators, synthetic streams and diagnostics.
"""

from .core import ContractError, SciState, StepSchedule, gamma, react, step, threshold_bounds
from .metrics import Trace, TraceRecord, fcp, fcp_bound, fcp_bound_general, summarize
from .runner import ExperimentConfig, run_adversarial_suite, run_experiment

__all__ = [
    "ContractError",
    "ExperimentConfig",
    "SciState",
    "StepSchedule",
    "Trace",
    "TraceRecord",
    "fcp",
    "fcp_bound",
    "fcp_bound_general",
    "gamma",
    "react",
    "run_adversarial_suite",
    "run_experiment",
    "step",
    "summarize",
    "threshold_bounds",
]

__version__ = "0.1.0"
