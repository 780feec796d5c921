"""Minimal conic-solver interface: linear objective over PSD block constraints.

Callers build cvxpy variables and a list of matrix expressions that must be
negative semidefinite; this wrapper runs an interior-point conic solver with
a fallback chain and maps solver statuses onto three clean outcomes:
'optimal', 'infeasible' or an SdpSolverError.
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp

from .errors import SdpSolverError

__all__ = ["SdpOutcome", "solve_sdp"]

_SOLVER_ARGS = {
    "CLARABEL": {},
    "SCS": {"eps": 1e-8, "max_iters": 200_000},
    "CVXOPT": {},
}


@dataclass
class SdpOutcome:
    status: str            # 'optimal' | 'infeasible' | 'unbounded'
    objective: float | None
    solver: str
    accurate: bool = True


def solve_sdp(constraints, objective=None,
              solvers=("CLARABEL", "SCS")) -> SdpOutcome:
    """Solve min(objective) subject to the given cvxpy constraints.

    objective None means pure feasibility.  Variable values are available on
    the caller's cvxpy variables after an 'optimal' outcome.
    """
    obj = cp.Minimize(0 if objective is None else objective)
    prob = cp.Problem(obj, list(constraints))
    last_exc = None
    for name in solvers:
        try:
            prob.solve(solver=name, **_SOLVER_ARGS.get(name, {}))
        except (cp.SolverError, ValueError, ZeroDivisionError) as exc:
            last_exc = exc
            continue
        status = prob.status
        if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return SdpOutcome(
                status="optimal",
                objective=None if objective is None else float(prob.value),
                solver=name,
                accurate=status == cp.OPTIMAL,
            )
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SdpOutcome(
                status="infeasible", objective=None, solver=name,
                accurate=status == cp.INFEASIBLE,
            )
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return SdpOutcome(
                status="unbounded", objective=None, solver=name,
                accurate=status == cp.UNBOUNDED,
            )
        last_exc = RuntimeError(f"solver {name} returned status {status}")
    raise SdpSolverError(f"no conic solver converged: {last_exc}")
