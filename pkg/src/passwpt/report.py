"""Common result container for all iterative solvers."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class SolveReport:
    """Per-solve trace: objective values, auxiliary history, residuals, timing."""

    objective_trace: list = field(default_factory=list)
    aux_trace: list = field(default_factory=list)        # dict rows per iteration
    kkt_residuals: dict = field(default_factory=dict)    # final residual summary
    feasible: bool = True
    converged: bool = False
    iterations: int = 0
    runtime_s: float = 0.0
    notes: list = field(default_factory=list)

    def final_objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else float("nan")
