"""Finite-horizon output-feedback synthesis with non-zero initial conditions.

Given a generalized plant with inputs (w, d, u) and outputs (v, e, y), the
uncertainty channel frozen at its bound acts as an extra disturbance and the
pseudo-state output as an extra performance row.  A gamma-suboptimal
controller exists iff
  (a) the control Riccati equation has a bounded solution X on the horizon
      with X(T) = 0 and X(t0) < gamma^2 Q,
  (b) the filter Riccati equation started at Y(t0) = Q^{-1} stays bounded,
  (c) rho(X(t) Y(t)) < gamma^2 pointwise,
and the central controller built from (X, Y) then achieves the bound
  ||e||^2 <= gamma^2 (||dist||^2 + x(t0)' Q x(t0)).

The plant is normalized first: control/measurement feedthroughs are scaled to
unit weight and the remaining cross terms are absorbed into shifted Riccati
coefficients, so the equations above keep their textbook form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    AssumptionError,
    MonotonicityError,
    NumericalError,
    SynthesisInfeasibleError,
)
from .iqc import ScaledPlant
from .ltvcore import LtvSystem, MatrixFunction, TimeGrid
from .odeutil import freeze_on_escape, quiet_fortran_io

__all__ = [
    "SynthPlantData",
    "RdeConfig",
    "RdeSolution",
    "FeasibilityReport",
    "default_ic_weight",
    "assemble_synthesis_data",
    "solve_X_rde",
    "solve_Y_rde",
    "check_conditions",
    "central_controller",
    "hinf_bisect",
]


def default_ic_weight(n: int, pseudo_index: int | None, pseudo: float = 1.0,
                      others: float = 1e6) -> np.ndarray:
    """Initial-condition weight: 1 on the pseudo-state, 1e6 on physical states.

    Large entries pin the corresponding initial states near zero; the unit
    pseudo-state entry admits offsets in [-1, 1].
    """
    q = np.full(n, others)
    if pseudo_index is not None:
        q[pseudo_index] = pseudo
    return np.diag(q)


@dataclass
class RdeConfig:
    rtol: float = 1e-9
    atol: float = 1e-12
    method: str = "LSODA"
    escape_norm: float = 1e12


@dataclass
class RdeSolution:
    """Solved Riccati trajectory: symmetric values on the covered grid points."""

    times: np.ndarray
    values: np.ndarray              # (len(times), n, n)
    direction: str                  # 'backward' | 'forward'
    escaped: float | None = None    # escape time if the solution blew up

    @property
    def at_t0(self) -> np.ndarray:
        k = int(np.argmin(self.times))
        return self.values[k]

    def mf(self, grid: TimeGrid) -> MatrixFunction:
        if self.escaped is not None:
            raise NumericalError("escaped Riccati solution has no interpolant")
        return MatrixFunction(grid, self.values)


@dataclass
class SynthPlantData:
    """Normalized synthesis data sampled on the coefficient grid.

    All blocks are stored as (n_grid, ., .) stacks; composite stacks for the
    two Riccati right-hand sides are interpolated as single splines.
    """

    grid: TimeGrid
    n: int
    m1: int
    m2: int
    p1: int
    p2: int
    Q: np.ndarray
    A: np.ndarray
    B1: np.ndarray
    B2s: np.ndarray
    C1: np.ndarray
    C2s: np.ndarray
    D21s: np.ndarray
    F0: np.ndarray          # residual e/u cross term after scaling
    L0: np.ndarray          # residual y/d cross term after scaling
    Su: np.ndarray          # u = Su u_normalized
    Sy: np.ndarray          # y_normalized = Sy y
    pseudo_index: int | None = None
    _x_interp: MatrixFunction | None = field(default=None, repr=False)
    _y_interp: MatrixFunction | None = field(default=None, repr=False)

    def x_coeffs(self):
        """Stacked (AX | HX | G1 | G2) interpolant for the control RDE."""
        if self._x_interp is None:
            AX = self.A - self.B2s @ self.F0
            HX = _t(self.C1) @ self.C1 - _t(self.F0) @ self.F0
            G1 = self.B1 @ _t(self.B1)
            G2 = self.B2s @ _t(self.B2s)
            self._x_interp = MatrixFunction(
                self.grid, np.concatenate([AX, HX, G1, G2], axis=2)
            )
        return self._x_interp

    def y_coeffs(self):
        """Stacked (AY | HY | J1 | J2) interpolant for the filter RDE."""
        if self._y_interp is None:
            AY = self.A - self.L0 @ self.C2s
            HY = self.B1 @ _t(self.B1) - self.L0 @ _t(self.L0)
            J1 = _t(self.C1) @ self.C1
            J2 = _t(self.C2s) @ self.C2s
            self._y_interp = MatrixFunction(
                self.grid, np.concatenate([AY, HY, J1, J2], axis=2)
            )
        return self._y_interp


def _t(stack):
    return np.swapaxes(stack, 1, 2)


def _sqrt_stack(R, label):
    """Pointwise inverse square roots of a PD block stack."""
    w, V = np.linalg.eigh(0.5 * (R + _t(R)))
    if np.min(w, initial=np.inf) <= 1e-10:
        raise AssumptionError(
            f"{label} feedthrough is rank deficient along the horizon "
            f"(min eigenvalue {np.min(w):.3g}); the synthesis needs a full-rank"
            " feedthrough on that channel"
        )
    return (V * (w[..., None, :] ** -0.5)) @ _t(V)


def assemble_synthesis_data(plant, b_rho=None, Q=None,
                            pseudo_index: int | None = None,
                            d11_tol: float = 1e-8) -> SynthPlantData:
    """Flatten plant channels, freeze the uncertainty at its bound, normalize.

    plant: LtvSystem or ScaledPlant with channels (w, d, u) -> (v, e, y).
    b_rho: per-channel uncertainty bounds; the w input columns are multiplied
    by diag(b_rho), so a unit w drive corresponds to the worst frozen offset.
    """
    if isinstance(plant, ScaledPlant):
        plant = plant.sys
    N, n = plant.grid.n, plant.nx
    nw, nd, nu, nv, ne, ny = (plant.nw, plant.nd, plant.nu,
                              plant.nv, plant.ne, plant.ny)
    if nw:
        b = np.atleast_1d(np.asarray(
            1.0 if b_rho is None else b_rho, dtype=float))
        if b.size == 1:
            b = np.full(nw, b[0])
        if b.size != nw:
            raise ValueError("b_rho length must match the w channel")
        Bf = np.diag(b)[None]
    else:
        Bf = np.zeros((1, 0, 0))

    B1 = np.concatenate([plant.block("Bw") @ Bf, plant.block("Bd")], axis=2)
    B2 = plant.block("Bu")
    C1 = np.concatenate([plant.block("Cv"), plant.block("Ce")], axis=1)
    C2 = plant.block("Cy")
    D11 = np.concatenate(
        [np.concatenate([plant.block("Dvw") @ Bf, plant.block("Dvd")], axis=2),
         np.concatenate([plant.block("Dew") @ Bf, plant.block("Ded")], axis=2)],
        axis=1,
    )
    D12 = np.concatenate([plant.block("Dvu"), plant.block("Deu")], axis=1)
    D21 = np.concatenate([plant.block("Dyw") @ Bf, plant.block("Dyd")], axis=2)
    D22 = plant.block("Dyu")

    scale = max(
        1.0,
        max(np.max(np.abs(s), initial=0.0) for s in (B1, C1, D12, D21)),
    )
    if D11.size and np.max(np.abs(D11)) > d11_tol * scale:
        raise AssumptionError(
            "direct feedthrough from (w, d) to (v, e) is not supported by the"
            f" Riccati synthesis (max |D11| = {np.max(np.abs(D11)):.3g});"
            " rearrange the weighting interconnection"
        )
    if D22.size and np.max(np.abs(D22)) > d11_tol * scale:
        raise AssumptionError(
            "direct feedthrough from u to y must be zero"
            f" (max |D22| = {np.max(np.abs(D22)):.3g})"
        )

    if nu:
        Su = _sqrt_stack(_t(D12) @ D12, "control (u to e)")
        B2s = B2 @ Su
        D12s = D12 @ Su
        F0 = _t(D12s) @ C1
    else:
        Su = np.zeros((N, 0, 0))
        B2s, F0 = B2, np.zeros((N, 0, n))
    if ny:
        Sy = _sqrt_stack(D21 @ _t(D21), "measurement (d to y)")
        C2s = Sy @ C2
        D21s = Sy @ D21
        L0 = B1 @ _t(D21s)
    else:
        Sy = np.zeros((N, 0, 0))
        C2s, D21s, L0 = C2, D21, np.zeros((N, n, 0))

    m1 = nw + nd
    Q = np.eye(n) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape == (1, n) or Q.shape == (n, 1):
        Q = np.diag(Q.ravel())
    if Q.shape != (n, n):
        raise ValueError("Q must be n x n (or a length-n diagonal)")
    if np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() <= 0:
        raise ValueError("Q must be positive definite")

    return SynthPlantData(
        grid=plant.grid, n=n, m1=m1, m2=nu, p1=nv + ne, p2=ny, Q=Q,
        A=plant.block("A"), B1=B1, B2s=B2s, C1=C1, C2s=C2s, D21s=D21s,
        F0=F0, L0=L0, Su=Su, Sy=Sy, pseudo_index=pseudo_index,
    )


def _pack_indices(n):
    return np.triu_indices(n)


def _unpack(vec, n, iu):
    M = np.zeros((n, n))
    M[iu] = vec
    M.T[iu] = vec
    return M


def _integrate_rde(rhs, t0, t1, z0, n, cfg, grid_times, direction):
    """Integrate a packed-symmetric Riccati RHS with blow-up detection."""
    iu = _pack_indices(n)
    guarded, esc = freeze_on_escape(rhs, cfg.escape_norm)
    with quiet_fortran_io():
        sol = solve_ivp(
            guarded, (t0, t1), z0, method=cfg.method, rtol=cfg.rtol,
            atol=cfg.atol, dense_output=True,
        )
    blew_up = (not sol.success) or esc["t"] is not None
    if esc["t"] is not None:
        t_reach = esc["t"]
    else:
        t_reach = sol.t[-1] if sol.t.size else t0
    # the integration variable always runs t0 -> t1 here; on blow-up only
    # grid points reached before the escape carry values
    if blew_up:
        covered = grid_times[grid_times <= t_reach + 1e-12]
        if sol.t.size:
            covered = covered[covered <= sol.t[-1] + 1e-12]
        else:
            covered = covered[:0]
    else:
        covered = grid_times
    vals = np.array([_unpack(sol.sol(t), n, iu) for t in covered]).reshape(
        covered.size, n, n
    )
    return RdeSolution(
        times=covered, values=vals, direction=direction,
        escaped=float(t_reach) if blew_up else None,
    )


def solve_X_rde(data: SynthPlantData, gamma: float,
                cfg: RdeConfig | None = None) -> RdeSolution:
    """Backward control Riccati solve from X(t1) = 0.

    Escape (norm above the threshold or step-size underflow) is reported in
    the solution, not raised: it signals infeasibility of this gamma.
    """
    cfg = cfg or RdeConfig()
    n, g2 = data.n, gamma * gamma
    iu = _pack_indices(n)
    coeff = data.x_coeffs()
    t1 = data.grid.t1

    def rhs(tau, z):  # tau = t1 - t
        X = _unpack(z, n, iu)
        C = coeff.eval(t1 - tau)
        AX, HX = C[:, :n], C[:, n:2 * n]
        G1, G2 = C[:, 2 * n:3 * n], C[:, 3 * n:]
        dX = AX.T @ X + X @ AX + HX + X @ (G1 / g2 - G2) @ X
        return (0.5 * (dX + dX.T))[iu]

    sol = _integrate_rde(
        rhs, 0.0, t1 - data.grid.t0, np.zeros(iu[0].size), n, cfg,
        grid_times=t1 - data.grid.points[::-1], direction="backward",
    )
    # convert tau back to t and order ascending in t
    times = (t1 - sol.times)[::-1]
    values = sol.values[::-1]
    esc = None if sol.escaped is None else float(t1 - sol.escaped)
    return RdeSolution(times=times, values=values, direction="backward",
                       escaped=esc)


def solve_Y_rde(data: SynthPlantData, gamma: float, Q=None,
                cfg: RdeConfig | None = None) -> RdeSolution:
    """Forward filter Riccati solve from Y(t0) = Q^{-1}."""
    cfg = cfg or RdeConfig()
    n, g2 = data.n, gamma * gamma
    Q = data.Q if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
    iu = _pack_indices(n)
    coeff = data.y_coeffs()

    def rhs(t, z):
        Y = _unpack(z, n, iu)
        C = coeff.eval(t)
        AY, HY = C[:, :n], C[:, n:2 * n]
        J1, J2 = C[:, 2 * n:3 * n], C[:, 3 * n:]
        dY = AY @ Y + Y @ AY.T + HY + Y @ (J1 / g2 - J2) @ Y
        return (0.5 * (dY + dY.T))[iu]

    Y0 = np.linalg.inv(Q)
    return _integrate_rde(
        rhs, data.grid.t0, data.grid.t1, (0.5 * (Y0 + Y0.T))[iu], n, cfg,
        grid_times=data.grid.points, direction="forward",
    )


@dataclass
class FeasibilityReport:
    feasible: bool
    reason: str
    ic_margin: float = np.nan        # min eig of gamma^2 Q - X(t0)
    coupling_margin: float = np.nan  # min over grid of gamma^2 - rho(XY)

    def __bool__(self):
        return self.feasible


def check_conditions(X: RdeSolution, Y: RdeSolution, gamma: float,
                     Q: np.ndarray) -> FeasibilityReport:
    """Evaluate the three existence conditions for a solved (X, Y) pair."""
    if X.escaped is not None:
        return FeasibilityReport(False, f"X escaped at t={X.escaped:.6g}")
    if Y.escaped is not None:
        return FeasibilityReport(False, f"Y escaped at t={Y.escaped:.6g}")
    if X.times.size != Y.times.size or not np.allclose(X.times, Y.times):
        raise ValueError("X and Y must be solved on the same grid")
    g2 = gamma * gamma
    ymin = min(float(np.linalg.eigvalsh(Yk).min()) for Yk in Y.values)
    if ymin < -1e-9:
        raise NumericalError(
            f"filter Riccati solution lost positivity (min eig {ymin:.3g})"
        )
    ic_margin = float(np.linalg.eigvalsh(g2 * Q - X.at_t0).min())
    rho = max(
        float(np.max(np.abs(np.linalg.eigvals(Xk @ Yk))))
        for Xk, Yk in zip(X.values, Y.values)
    )
    coupling_margin = g2 - rho
    if ic_margin <= 1e-9:
        return FeasibilityReport(
            False, f"initial-condition bound violated (margin {ic_margin:.3g})",
            ic_margin, coupling_margin,
        )
    if rho >= g2 * (1.0 - 1e-9):
        return FeasibilityReport(
            False, f"spectral coupling rho(XY) = {rho:.6g} >= gamma^2",
            ic_margin, coupling_margin,
        )
    return FeasibilityReport(True, "feasible", ic_margin, coupling_margin)


def central_controller(X: RdeSolution, Y: RdeSolution, data: SynthPlantData,
                       gamma: float) -> LtvSystem:
    """Build the central controller on the coefficient grid.

    Observer form with worst-case disturbance estimate:
        xh' = A xh + G1 X xh / g^2 + B2 u + Z L (C2 xh + D21 w_worst - y)
        u   = -(B2' X + F0) xh
    returned in measurement/control coordinates of the original plant.
    """
    if X.escaped is not None or Y.escaped is not None:
        raise NumericalError("cannot build a controller from escaped solutions")
    N, n, g2 = data.grid.n, data.n, gamma * gamma
    Xs = _resample_sym(X, data.grid)
    Ys = _resample_sym(Y, data.grid)
    I = np.eye(n)
    AK = np.zeros((N, n, n))
    BK = np.zeros((N, n, data.p2))
    CK = np.zeros((N, data.m2, n))
    for k in range(N):
        Xk, Yk = Xs[k], Ys[k]
        coupling = I - (Yk @ Xk) / g2
        cond = np.linalg.cond(coupling)
        if not np.isfinite(cond) or cond > 1e10:
            raise NumericalError(
                f"controller coupling matrix ill conditioned at grid index {k}"
                f" (cond {cond:.3g}); gamma is too close to the feasibility"
                " boundary"
            )
        F = -(data.B2s[k].T @ Xk + data.F0[k])
        L = -(Yk @ data.C2s[k].T + data.L0[k])
        ZL = np.linalg.solve(coupling, L)
        G1X = (data.B1[k] @ data.B1[k].T @ Xk) / g2
        AK[k] = (data.A[k] + G1X + data.B2s[k] @ F
                 + ZL @ (data.C2s[k] + (data.D21s[k] @ data.B1[k].T @ Xk) / g2))
        BK[k] = -ZL @ data.Sy[k]
        CK[k] = data.Su[k] @ F
    return LtvSystem(
        data.grid,
        dims={"x": n, "d": data.p2, "e": data.m2,
              "w": 0, "v": 0, "u": 0, "y": 0},
        A=AK, Bd=BK, Ce=CK,
    )


def _resample_sym(sol: RdeSolution, grid: TimeGrid) -> np.ndarray:
    if sol.times.size == grid.n and np.allclose(sol.times, grid.points):
        return sol.values
    return MatrixFunction(TimeGrid(sol.times), sol.values).eval(grid.points)


@dataclass
class SynthesisResult:
    gamma: float
    controller: LtvSystem
    X: RdeSolution
    Y: RdeSolution
    report: FeasibilityReport
    history: list


def hinf_bisect(data: SynthPlantData, gamma_range=(1e-2, 1e4),
                tol: float = 1e-3, cfg: RdeConfig | None = None,
                ) -> SynthesisResult:
    """Smallest feasible gamma by bisection, plus the controller at that level.

    The returned controller is built at gamma * (1 + tol) for margin.  Raises
    SynthesisInfeasibleError when the top of the range is infeasible, and
    MonotonicityError if the probe history ever contradicts monotone
    feasibility in gamma.
    """
    cfg = cfg or RdeConfig()
    lo, hi = float(gamma_range[0]), float(gamma_range[1])
    if not 0 < lo < hi:
        raise ValueError("need 0 < gamma_lo < gamma_hi")
    history = []
    best_feasible = np.inf
    worst_infeasible = 0.0

    def probe(g):
        nonlocal best_feasible, worst_infeasible
        Xs = solve_X_rde(data, g, cfg)
        Ys = solve_Y_rde(data, g, cfg=cfg)
        rep = check_conditions(Xs, Ys, g, data.Q)
        history.append((g, rep.feasible, rep.reason))
        if rep.feasible:
            best_feasible = min(best_feasible, g)
        else:
            worst_infeasible = max(worst_infeasible, g)
        if worst_infeasible > best_feasible:
            raise MonotonicityError(
                f"feasible at gamma={best_feasible:.6g} but infeasible at"
                f" gamma={worst_infeasible:.6g}"
            )
        return rep

    if not probe(hi):
        raise SynthesisInfeasibleError(
            f"no admissible controller at gamma = {hi:.6g}: {history[-1][2]}"
        )
    if probe(lo):
        hi = lo
    else:
        while (hi - lo) > tol * hi:
            mid = np.sqrt(lo * hi)
            if probe(mid):
                hi = mid
            else:
                lo = mid

    g_ctrl = hi * (1.0 + tol)
    Xs = solve_X_rde(data, g_ctrl, cfg)
    Ys = solve_Y_rde(data, g_ctrl, cfg=cfg)
    rep = check_conditions(Xs, Ys, g_ctrl, data.Q)
    if not rep:
        raise NumericalError(
            f"controller-level solve at gamma = {g_ctrl:.6g} unexpectedly"
            f" infeasible: {rep.reason}"
        )
    K = central_controller(Xs, Ys, data, g_ctrl)
    return SynthesisResult(gamma=float(hi), controller=K, X=Xs, Y=Ys,
                           report=rep, history=history)
