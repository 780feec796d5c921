"""Worst-case L2-gain upper bounds for uncertain closed loops.

The closed loop N has channels (w, d) -> (v, e) with w = Delta(v),
|Delta_i| <= b_i, plus a weighted uncertain initial state.  A storage
function P(t) certifies ||e||^2 < gamma^2 (||d||^2 + x0' Q x0) whenever the
pointwise matrix inequality

    [P' + A'P + PA + Qh   PB + S ]
    [ (PB + S)'           R      ]  +  (multiplier terms)  <=  -eps I

holds along the horizon together with P(t1) >= 0 and P(t0) < gamma^2 Q.
P is parameterized as a clamped cubic matrix spline on a coarse knot grid
(plus an optional dense offset from an earlier round) and the inequality is
imposed on a finer grid; with multipliers frozen the inequality collapses
through a Schur complement to a Riccati equation that removes the gridding
optimism.  Certificates are re-verified on a finer grid before being
reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import MonotonicityError, NumericalError, UnboundedGainError
from .ltvcore import LtvSystem, MatrixFunction, TimeGrid
from .odeutil import freeze_on_escape, quiet_fortran_io
from .sdp import solve_sdp

__all__ = [
    "DlmiProblem",
    "WcGainResult",
    "WcGainSettings",
    "assemble_dlmi",
    "solve_feasibility",
    "rde_refine",
    "verify_certificate",
    "wc_gain",
    "as_performance_only",
    "strip_uncertainty",
]


@dataclass
class WcGainSettings:
    tol: float = 5e-5              # relative bisection tolerance
    alternations: int = 5          # LMI <-> RDE rounds
    lmi_points: int = 25
    spline_points: int = 10
    eps: float = 1e-7              # strictness of the pointwise inequality
    gamma_cap: float = 1e6
    verify_factor: int = 4
    slack_tol: float = 1e-6        # accepted re-verification slack deficit
    lam_floor: float = 1e-9
    dense_samples: int = 400       # storage sampling density for export


@dataclass
class DlmiProblem:
    """Assembled pointwise data of the storage-function inequality."""

    sys: LtvSystem
    b: np.ndarray
    Q: np.ndarray
    eps: float
    lmi_grid: TimeGrid
    spline_grid: TimeGrid
    A: np.ndarray                 # stacks sampled on the lmi grid
    B: np.ndarray
    Qh: np.ndarray
    S: np.ndarray
    R0: np.ndarray                # De'De (gamma-independent part of R)
    Dsel: np.ndarray              # diag(0_w, I_d): the -gamma^2 selector
    Mterm: np.ndarray             # (n_rho, n_lmi, nm, nm) per unit multiplier
    basis: np.ndarray             # (n_lmi, n_knots) spline cardinal basis
    dbasis: np.ndarray            # its derivative

    @property
    def n(self):
        return self.sys.nx

    @property
    def nm(self):
        return self.sys.nx + self.sys.nw + self.sys.nd


def _spline_basis(knots, times):
    """Cardinal clamped-cubic basis values and derivatives.

    Columns 0..nk-1 respond to unit knot values (zero end slopes); the last
    two columns respond to unit end slopes (zero knot values), so the end
    slopes are free parameters of the family rather than pinned at zero.
    """
    nk = knots.size
    W = np.zeros((times.size, nk + 2))
    Wd = np.zeros_like(W)
    zero = np.zeros(nk)
    for k in range(nk):
        e = np.zeros(nk)
        e[k] = 1.0
        spl = CubicSpline(knots, e, bc_type="clamped")
        W[:, k] = spl(times)
        Wd[:, k] = spl(times, 1)
    for j, bc in enumerate((((1, 1.0), (1, 0.0)), ((1, 0.0), (1, 1.0)))):
        spl = CubicSpline(knots, zero, bc_type=bc)
        W[:, nk + j] = spl(times)
        Wd[:, nk + j] = spl(times, 1)
    return W, Wd


def _sample_blocks(sys, ts, names):
    return [MatrixFunction(sys.grid, sys.block(n), sys.interp).eval(ts)
            for n in names]


def assemble_dlmi(sys: LtvSystem, b, Q, lmi_points=25, spline_points=10,
                  eps=1e-7, lmi_grid: TimeGrid | None = None,
                  spline_grid: TimeGrid | None = None) -> DlmiProblem:
    """Sample the inequality data on the evaluation grid.

    The multiplier term per channel i with unit weight is
        b_i^2 z_i z_i' - s_i s_i'
    with z_i the map (x, w, d) -> v_i and s_i the selector of w_i.
    """
    if sys.nu or sys.ny:
        raise ValueError("close the control loop before the gain analysis")
    n, nw, nd = sys.nx, sys.nw, sys.nd
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if b.size == 1 and nw != 1:
        b = np.full(nw, b[0] if nw else 0.0)
    if b.size != nw:
        raise ValueError("bound vector must match the w channel")
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape != (n, n):
        raise ValueError("Q must match the closed-loop state dimension")

    lmi_grid = lmi_grid or TimeGrid.uniform(sys.grid.t0, sys.grid.t1, lmi_points)
    spline_grid = spline_grid or TimeGrid.uniform(
        sys.grid.t0, sys.grid.t1, spline_points
    )
    if lmi_grid.n < spline_grid.n:
        raise ValueError("evaluation grid must be at least as fine as the knots")
    ts = lmi_grid.points
    A, Bw, Bd, Cv, Dvw, Dvd, Ce, Dew, Ded = _sample_blocks(
        sys, ts, ("A", "Bw", "Bd", "Cv", "Dvw", "Dvd", "Ce", "Dew", "Ded")
    )
    B = np.concatenate([Bw, Bd], axis=2)
    De = np.concatenate([Dew, Ded], axis=2)
    Qh = np.swapaxes(Ce, 1, 2) @ Ce
    S = np.swapaxes(Ce, 1, 2) @ De
    R0 = np.swapaxes(De, 1, 2) @ De
    Dsel = np.zeros((nw + nd, nw + nd))
    Dsel[nw:, nw:] = np.eye(nd)

    nm = n + nw + nd
    Z = np.concatenate([Cv, Dvw, Dvd], axis=2)          # v rows in (x, w, d)
    Mterm = np.zeros((nw, ts.size, nm, nm))
    for i in range(nw):
        zi = Z[:, i:i + 1, :]
        Mterm[i] = b[i] ** 2 * np.swapaxes(zi, 1, 2) @ zi
        Mterm[i, :, n + i, n + i] -= 1.0
    W, Wd = _spline_basis(spline_grid.points, ts)
    return DlmiProblem(
        sys=sys, b=b, Q=Q, eps=eps, lmi_grid=lmi_grid, spline_grid=spline_grid,
        A=A, B=B, Qh=Qh, S=S, R0=R0, Dsel=Dsel, Mterm=Mterm,
        basis=W, dbasis=Wd,
    )


@dataclass
class FeasiblePoint:
    """Candidate certificate: gain level, multipliers and storage samples.

    `evalfn`, when set, evaluates (P, P') exactly (Riccati candidates carry
    their integrator's dense output); otherwise a Hermite interpolant through
    the stored samples, whose derivatives are exact, is used.
    """

    gamma: float
    lam: np.ndarray
    times: np.ndarray
    dense: np.ndarray            # (len(times), n, n) storage samples
    dderiv: np.ndarray           # (len(times), n, n) exact d/dt samples
    source: str = "lmi"
    evalfn: object = None        # optional t -> (P, Pd)

    def interpolant(self):
        return CubicHermiteSpline(self.times, self.dense, self.dderiv, axis=0)

    def evaluate(self, ts):
        """(P, Pd) stacks at the given times."""
        ts = np.atleast_1d(ts)
        if self.evalfn is not None:
            pairs = [self.evalfn(t) for t in ts]
            return (np.array([p for p, _ in pairs]),
                    np.array([d for _, d in pairs]))
        spl = self.interpolant()
        return spl(ts), spl(ts, 1)

    def storage(self, problem: "DlmiProblem") -> MatrixFunction:
        grid = problem.sys.grid
        return MatrixFunction(grid, self.evaluate(grid.points)[0])


def _offset_samples(problem, offset, ts):
    if offset is None:
        z = np.zeros((ts.size, problem.n, problem.n))
        return z, z
    return offset.evaluate(ts)


def solve_feasibility(problem: DlmiProblem, gamma: float | None = None,
                      lam_fixed=None, offset=None,
                      settings: WcGainSettings | None = None,
                      ) -> FeasiblePoint | None:
    """One semidefinite solve over (storage knots, multipliers [, gamma^2]).

    gamma None minimizes gamma^2 directly (it enters affinely); a fixed gamma
    turns the solve into pure feasibility.  `offset` adds dense storage
    samples from a previous round underneath the spline correction.  Returns
    None when infeasible.
    """
    st = settings or WcGainSettings()
    n, nm = problem.n, problem.nm
    nk = problem.spline_grid.n
    nbasis = problem.basis.shape[1]      # knot values plus two end slopes
    nw = problem.sys.nw
    m = nm - n
    Pk = [cp.Variable((n, n), symmetric=True) for _ in range(nbasis)]
    constraints = []
    if nw:
        if lam_fixed is None:
            lam = cp.Variable(nw)
            constraints.append(lam >= st.lam_floor)
        else:
            lam = np.atleast_1d(np.asarray(lam_fixed, dtype=float))
    else:
        lam = None
    if gamma is None:
        gsq = cp.Variable(nonneg=True)
        objective = gsq
    else:
        gsq = float(gamma) ** 2
        objective = None

    Poff, Pdoff = _offset_samples(problem, offset, problem.lmi_grid.points)
    eyem = np.eye(nm)
    for j in range(problem.lmi_grid.n):
        P = Poff[j] + sum(problem.basis[j, k] * Pk[k] for k in range(nbasis))
        Pd = Pdoff[j] + sum(problem.dbasis[j, k] * Pk[k] for k in range(nbasis))
        Aj, Bj = problem.A[j], problem.B[j]
        top = Pd + Aj.T @ P + P @ Aj + problem.Qh[j]
        if m:
            off = P @ Bj + problem.S[j]
            Rj = problem.R0[j] - problem.Dsel * gsq
            blk = cp.bmat([[top, off], [off.T, Rj]])
        else:
            blk = top
        for i in range(nw):
            blk = blk + lam[i] * problem.Mterm[i, j]
        constraints.append(blk << -problem.eps * eyem)

    # end slopes vanish at the knots, so knot constraints see values only
    constraints.append(Poff[-1] + Pk[nk - 1] >> 0)
    constraints.append(
        Poff[0] + Pk[0] << gsq * problem.Q - problem.eps * np.eye(n)
    )

    outcome = solve_sdp(constraints, objective=objective)
    if outcome.status != "optimal":
        return None
    g = float(np.sqrt(max(float(gsq.value), 0.0))) if gamma is None else float(gamma)
    lam_val = (np.zeros(0) if lam is None else
               (np.atleast_1d(lam) if lam_fixed is not None
                else np.maximum(lam.value, st.lam_floor)))
    coeffs = np.array([0.5 * (P.value + P.value.T) for P in Pk])
    spl = CubicSpline(
        problem.spline_grid.points, coeffs[:nk], axis=0,
        bc_type=((1, coeffs[nk]), (1, coeffs[nk + 1])),
    )
    ts = problem.sys.grid.points
    dense, dderiv = spl(ts), spl(ts, 1)
    off_v, off_d = _offset_samples(problem, offset, ts)

    def evalfn(t):
        P, Pd = spl(t), spl(t, 1)
        if offset is not None:
            Po, Pdo = offset.evaluate(np.array([t]))
            P, Pd = P + Po[0], Pd + Pdo[0]
        return P, Pd

    return FeasiblePoint(gamma=g, lam=np.atleast_1d(lam_val), times=ts,
                         dense=dense + off_v, dderiv=dderiv + off_d,
                         source="lmi", evalfn=evalfn)


def _refine_coeffs(problem: DlmiProblem, lam, ts):
    """Completed-square data Qm, Sm, Rm0 sampled at the given times."""
    sys = problem.sys
    A, Bw, Bd, Cv, Dvw, Dvd, Ce, Dew, Ded = _sample_blocks(
        sys, ts, ("A", "Bw", "Bd", "Cv", "Dvw", "Dvd", "Ce", "Dew", "Ded")
    )
    B = np.concatenate([Bw, Bd], axis=2)
    De = np.concatenate([Dew, Ded], axis=2)
    Dv = np.concatenate([Dvw, Dvd], axis=2)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    Mv = np.diag(problem.b ** 2 * lam) if lam.size else np.zeros((0, 0))
    Mw = np.diag(lam) if lam.size else np.zeros((0, 0))
    Qm = np.swapaxes(Ce, 1, 2) @ Ce + np.swapaxes(Cv, 1, 2) @ Mv[None] @ Cv
    Sm = np.swapaxes(Ce, 1, 2) @ De + np.swapaxes(Cv, 1, 2) @ Mv[None] @ Dv
    Rm0 = (np.swapaxes(De, 1, 2) @ De
           + np.swapaxes(Dv, 1, 2) @ Mv[None] @ Dv)
    nw = sys.nw
    if nw:
        Rm0[:, :nw, :nw] -= Mw[None]
    return A, B, Qm, Sm, Rm0


def rde_refine(problem: DlmiProblem, lam, gamma: float,
               settings: WcGainSettings | None = None,
               samples: int | None = None) -> FeasiblePoint | None:
    """Exact-in-time check at fixed multipliers via backward Riccati integration.

    Requires the completed-square input block to stay negative definite;
    when it does not, the gridded inequality is the only available route and
    None is returned (as it is on escape or a violated initial-condition
    bound).
    """
    st = settings or WcGainSettings()
    sys = problem.sys
    n = problem.n
    grid = sys.grid
    g2 = gamma * gamma
    nw, nd = sys.nw, sys.nd
    m = nw + nd
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    Mv = np.diag(problem.b ** 2 * lam) if lam.size else np.zeros((0, 0))
    Mw = np.diag(lam) if lam.size else np.zeros((0, 0))

    # products are formed pointwise from the interpolated raw blocks so the
    # integrated coefficients match what re-verification reconstructs
    raw = sys._full_matrix()

    def coeffs(t):
        M = raw.eval(t)
        Aj = M[:n, :n]
        Bj = M[:n, n:n + m]
        Cvj, Dvj = M[n:n + nw, :n], M[n:n + nw, n:n + m]
        Cej, Dej = M[n + nw:, :n], M[n + nw:, n:n + m]
        Qj = Cej.T @ Cej + Cvj.T @ Mv @ Cvj
        Sj = Cej.T @ Dej + Cvj.T @ Mv @ Dvj
        Rj = (Dej.T @ Dej + Dvj.T @ Mv @ Dvj - g2 * problem.Dsel
              + st.eps * np.eye(m))
        if nw:
            Rj[:nw, :nw] -= Mw
        return Aj, Bj, Qj, Sj, Rj

    if m:
        worst = max(
            np.linalg.eigvalsh(coeffs(t)[4]).max() for t in grid.points
        )
        if worst > -st.eps:
            return None

    iu = np.triu_indices(n)

    def unpack(z):
        P = np.zeros((n, n))
        P[iu] = z
        P.T[iu] = z
        return P

    t0, t1 = grid.t0, grid.t1

    def rhs(tau, z):
        P = unpack(z)
        Aj, Bj, Qj, Sj, Rj = coeffs(t1 - tau)
        dP = Aj.T @ P + P @ Aj + Qj + st.eps * np.eye(n)
        if m:
            U = P @ Bj + Sj
            dP = dP - U @ np.linalg.solve(Rj, U.T)
        dP = 0.5 * (dP + dP.T)
        return dP[iu]

    guarded, esc = freeze_on_escape(rhs, 1e12)
    with quiet_fortran_io():
        sol = solve_ivp(guarded, (0.0, t1 - t0), np.zeros(iu[0].size),
                        method="LSODA", rtol=1e-9, atol=1e-12,
                        dense_output=True)
    if (not sol.success) or esc["t"] is not None:
        return None
    P0 = unpack(sol.sol(t1 - t0))
    if np.linalg.eigvalsh(g2 * problem.Q - P0).min() <= 0.0:
        return None
    target = samples if samples is not None else st.dense_samples
    factor = max(1, int(np.ceil(target / max(grid.n - 1, 1))))
    tdense = grid.refine(factor).points
    dense = np.zeros((tdense.size, n, n))
    dderiv = np.zeros_like(dense)
    for k, t in enumerate(tdense):
        z = sol.sol(t1 - t)
        dense[k] = unpack(z)
        dderiv[k] = -unpack(rhs(t1 - t, z))

    def evalfn(t):
        z = sol.sol(t1 - t)
        return unpack(z), -unpack(rhs(t1 - t, z))

    return FeasiblePoint(gamma=float(gamma), lam=lam.copy(),
                         times=tdense, dense=dense, dderiv=dderiv,
                         source="rde", evalfn=evalfn)


def verify_certificate(problem: DlmiProblem, point: FeasiblePoint,
                       settings: WcGainSettings | None = None):
    """Re-substitute (P, lam, gamma) on a finer grid; slacks must be >= 0.

    Returns margins: min eigen-slack of the pointwise inequality, terminal
    positivity of P(t1), and the gap gamma^2 Q - P(t0).
    """
    st = settings or WcGainSettings()
    fine = TimeGrid.uniform(
        problem.lmi_grid.t0, problem.lmi_grid.t1,
        st.verify_factor * (problem.lmi_grid.n - 1) + 1,
    )
    ts = fine.points
    A, B, Qm, Sm, Rm0 = _refine_coeffs(problem, point.lam, ts)
    g2 = point.gamma ** 2
    m = B.shape[2]
    Rm = Rm0 - g2 * problem.Dsel[None]
    P, Pd = point.evaluate(ts)
    n = problem.n
    slack = np.inf
    for j in range(ts.size):
        top = Pd[j] + A[j].T @ P[j] + P[j] @ A[j] + Qm[j]
        if m:
            off = P[j] @ B[j] + Sm[j]
            M = np.block([[top, off], [off.T, Rm[j]]])
        else:
            M = top
        M = M + problem.eps * np.eye(n + m)
        slack = min(slack, -float(np.linalg.eigvalsh(M).max()))
    term = float(np.linalg.eigvalsh(point.dense[-1]).min())
    ic = float(np.linalg.eigvalsh(g2 * problem.Q - point.dense[0]).min())
    return {"lmi_slack": slack, "terminal": term, "ic_gap": ic}


def _margins_ok(margins, st):
    return (margins["lmi_slack"] >= -st.slack_tol
            and margins["terminal"] >= -st.slack_tol
            and margins["ic_gap"] >= -st.slack_tol)


@dataclass
class WcGainResult:
    gamma: float
    lam: np.ndarray
    M_v: np.ndarray
    M_w: np.ndarray
    storage: MatrixFunction
    margins: dict
    b_vec: np.ndarray = field(default_factory=lambda: np.zeros(0))
    history: list = field(default_factory=list)


def strip_uncertainty(sys: LtvSystem) -> LtvSystem:
    """Drop the (w, v) channels: the loop with a vanished uncertainty."""
    return LtvSystem(
        sys.grid, sys.interp,
        dims={"x": sys.nx, "w": 0, "v": 0, "d": sys.nd, "e": sys.ne,
              "u": sys.nu, "y": sys.ny},
        A=sys.block("A"), Bd=sys.block("Bd"), Bu=sys.block("Bu"),
        Ce=sys.block("Ce"), Ded=sys.block("Ded"), Deu=sys.block("Deu"),
        Cy=sys.block("Cy"), Dyd=sys.block("Dyd"), Dyu=sys.block("Dyu"),
    )


def as_performance_only(sys: LtvSystem) -> LtvSystem:
    """Fold the uncertainty channels into (d, e): all-channel nominal view."""
    B = np.concatenate([sys.block("Bw"), sys.block("Bd")], axis=2)
    C = np.concatenate([sys.block("Cv"), sys.block("Ce")], axis=1)
    D = np.concatenate(
        [np.concatenate([sys.block("Dvw"), sys.block("Dvd")], axis=2),
         np.concatenate([sys.block("Dew"), sys.block("Ded")], axis=2)],
        axis=1,
    )
    return LtvSystem(
        sys.grid, sys.interp,
        dims={"x": sys.nx, "w": 0, "v": 0, "d": sys.nw + sys.nd,
              "e": sys.nv + sys.ne, "u": 0, "y": 0},
        A=sys.block("A"), Bd=B, Ce=C, Ded=D,
    )


def _rde_bisect(problem, lam, gamma_hint, st):
    """Smallest gamma accepted by the Riccati refinement at fixed multipliers."""
    feas_min, infeas_max = np.inf, 0.0
    cache = {}

    def feasible(g):
        nonlocal feas_min, infeas_max
        pt = rde_refine(problem, lam, g, st, samples=16)
        cache[g] = pt
        if pt is not None:
            feas_min = min(feas_min, g)
        else:
            infeas_max = max(infeas_max, g)
        if infeas_max > feas_min:
            raise MonotonicityError(
                f"gain feasibility not an interval: ok at {feas_min:.6g},"
                f" not at {infeas_max:.6g}"
            )
        return pt is not None

    hi = gamma_hint
    tries = 0
    while not feasible(hi):
        hi *= 2.0
        tries += 1
        if hi > st.gamma_cap or tries > 60:
            return None
    lo = hi
    while lo > 1e-12 and feasible(lo * 0.8):
        lo *= 0.8
        hi = lo
    lo *= 0.8
    while (hi - lo) > st.tol * hi:
        mid = np.sqrt(lo * hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return rde_refine(problem, lam, hi, st)


def wc_gain(sys: LtvSystem, b, Q, settings: WcGainSettings | None = None,
            lmi_grid: TimeGrid | None = None,
            spline_grid: TimeGrid | None = None) -> WcGainResult:
    """Certified worst-case gain bound of the uncertain closed loop.

    Alternates the joint semidefinite solve (storage knots, multipliers,
    gamma^2 minimized directly) with the Riccati refinement at frozen
    multipliers; later rounds re-solve the inequality around the best storage
    found so far.  Every candidate is re-verified on a finer grid and the
    best certified bound is returned.
    """
    st = settings or WcGainSettings()
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if sys.nw and b.size == 1:
        b = np.full(sys.nw, b[0])
    nominal = sys.nw == 0 or not np.any(b > 0)
    if nominal and sys.nw:
        sys = strip_uncertainty(sys)
        b = np.zeros(0)

    problem = assemble_dlmi(
        sys, b, Q, lmi_points=st.lmi_points, spline_points=st.spline_points,
        eps=st.eps, lmi_grid=lmi_grid, spline_grid=spline_grid,
    )
    best = None
    history = []
    offset = None
    for it in range(max(1, st.alternations)):
        lp = solve_feasibility(problem, offset=offset, settings=st)
        entry = {"iteration": it + 1}
        if lp is not None:
            entry["gamma_lmi"] = lp.gamma
            entry["lam"] = lp.lam.tolist()
            if _margins_ok(verify_certificate(problem, lp, st), st) and (
                best is None or lp.gamma < best.gamma
            ):
                best = lp
            rp = _rde_bisect(problem, lp.lam, max(lp.gamma, 1e-9), st)
            if rp is not None:
                entry["gamma_rde"] = rp.gamma
                if _margins_ok(verify_certificate(problem, rp, st), st) and (
                    best is None or rp.gamma < best.gamma
                ):
                    best = rp
        history.append(entry)
        if best is not None:
            offset = best
        if nominal or lp is None:
            break  # no multipliers to re-optimize / nothing to iterate on
    if best is None:
        raise UnboundedGainError(
            f"no certified gain bound below the cap {st.gamma_cap:.3g}"
        )
    margins = verify_certificate(problem, best, st)
    if not _margins_ok(margins, st):
        raise NumericalError("best candidate failed final re-verification")
    lam = best.lam
    Mv = np.diag(b ** 2 * lam) if lam.size else np.zeros((0, 0))
    Mw = np.diag(lam) if lam.size else np.zeros((0, 0))
    return WcGainResult(
        gamma=float(best.gamma), lam=lam, M_v=Mv, M_w=Mw,
        storage=best.storage(problem), margins=margins, b_vec=b.copy(),
        history=history,
    )
