from .auglag import AugmentedLagrangian, Infeasible, SolveError, SolverOptions, Stalled
from .problem import (
    BicopterModel,
    DoubleIntegratorModel,
    Layout,
    NlpInstance,
    TrajOptProblem,
    double_integrator_problem,
    flip_problem,
    objective,
    transcribe,
)
from .solve import FeasibilityReport, OptimalTrajectory, feasibility_report, solve

__all__ = [
    "AugmentedLagrangian", "BicopterModel", "DoubleIntegratorModel", "FeasibilityReport",
    "Infeasible", "Layout", "NlpInstance", "OptimalTrajectory", "SolveError", "SolverOptions",
    "Stalled", "TrajOptProblem", "double_integrator_problem", "feasibility_report",
    "flip_problem", "objective", "solve", "transcribe",
]
