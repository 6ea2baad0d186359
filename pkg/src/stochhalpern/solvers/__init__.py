from .baselines import BASELINES, BaselineConfig, default_step, run_baseline
from .cocoercive import (CocoerciveConfig, gradient_mapping, halpern_cocoercive,
                         halpern_cocoercive_constrained, halpern_cocoercive_minibatch)
from .monotone import (MonotoneConfig, MonotoneConstants, SharpConfig, e_halpern,
                       eta_schedule, eta_upper_bound, monotone_constants,
                       restarted_e_halpern)
from .trace import (TRACE_COLUMNS, DivergenceError, RunTrace, ScheduleCollapse, TraceRecord,
                    UnsupportedProblem)

__all__ = [
    "BASELINES", "BaselineConfig", "default_step", "run_baseline",
    "CocoerciveConfig", "gradient_mapping", "halpern_cocoercive",
    "halpern_cocoercive_constrained", "halpern_cocoercive_minibatch",
    "MonotoneConfig", "MonotoneConstants", "SharpConfig", "e_halpern", "eta_schedule",
    "eta_upper_bound", "monotone_constants", "restarted_e_halpern",
    "TRACE_COLUMNS", "DivergenceError", "RunTrace", "ScheduleCollapse", "TraceRecord",
    "UnsupportedProblem",
]
