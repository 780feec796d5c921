"""Finite-horizon time-varying matrices, signals and LTV state-space systems.

All coefficient matrices are stored as samples on a time grid together with
an interpolation rule; systems are immutable after construction and every
operation here is a pure function of its inputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import make_interp_spline

from .errors import DivergenceError, DomainError, WellPosednessError

__all__ = [
    "TimeGrid",
    "MatrixFunction",
    "Signal",
    "LtvSystem",
    "SimConfig",
    "SimResult",
    "simulate",
    "l2norm",
    "lft_lower",
    "lft_upper",
    "save_system",
    "load_system",
]

_INTERP_MODES = ("linear", "spline", "zoh")


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing sample instants spanning a finite horizon."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least two sample instants")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def t0(self) -> float:
        return float(self.points[0])

    @property
    def t1(self) -> float:
        return float(self.points[-1])

    @property
    def n(self) -> int:
        return self.points.size

    @property
    def span(self) -> float:
        return self.t1 - self.t0

    @staticmethod
    def uniform(t0: float, t1: float, n: int) -> "TimeGrid":
        if not t0 < t1:
            raise ValueError("need t0 < t1")
        return TimeGrid(np.linspace(t0, t1, n))

    def refine(self, factor: int) -> "TimeGrid":
        """Insert `factor - 1` evenly spaced points into every interval."""
        if factor <= 1:
            return self
        segs = [
            np.linspace(a, b, factor, endpoint=False)
            for a, b in zip(self.points[:-1], self.points[1:])
        ]
        return TimeGrid(np.concatenate(segs + [self.points[-1:]]))

    def clip(self, t):
        """Clamp rounding noise at the horizon ends; reject genuine violations."""
        t = np.asarray(t, dtype=float)
        tol = 1e-9 * max(1.0, self.span)
        if np.any(t < self.t0 - tol) or np.any(t > self.t1 + tol):
            raise DomainError(
                f"time {t} outside horizon [{self.t0}, {self.t1}]"
            )
        return np.clip(t, self.t0, self.t1)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.points, other.points)


class MatrixFunction:
    """Matrix-valued function of time: gridded samples plus an interpolation rule.

    samples has shape (n_grid, rows, cols).  Evaluation is only defined inside
    the stored horizon.
    """

    def __init__(self, grid: TimeGrid, samples, interp: str = "spline"):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 2:  # constant matrix broadcast over the grid
            samples = np.broadcast_to(samples, (grid.n,) + samples.shape).copy()
        if samples.ndim != 3 or samples.shape[0] != grid.n:
            raise ValueError("need one matrix sample per grid point")
        if interp not in _INTERP_MODES:
            raise ValueError(f"interp must be one of {_INTERP_MODES}")
        self.grid = grid
        self.samples = samples
        self.interp = interp
        self._spl = None

    @property
    def shape(self):
        return self.samples.shape[1:]

    @staticmethod
    def constant(grid: TimeGrid, value, interp: str = "linear") -> "MatrixFunction":
        return MatrixFunction(grid, np.atleast_2d(np.asarray(value, float)), interp)

    def _interpolator(self):
        if self._spl is None:
            k = 3 if self.interp == "spline" else 1
            k = min(k, self.grid.n - 1)
            self._spl = make_interp_spline(self.grid.points, self.samples, k=k, axis=0)
        return self._spl

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        """Interpolated matrix at time t (scalar) or stack of matrices (vector t)."""
        t = self.grid.clip(t)
        scalar = t.ndim == 0
        tv = np.atleast_1d(t)
        if self.shape[0] == 0 or self.shape[1] == 0:
            out = np.zeros((tv.size,) + self.shape)
        elif self.interp == "zoh":
            idx = np.searchsorted(self.grid.points, tv, side="right") - 1
            idx = np.clip(idx, 0, self.grid.n - 1)
            out = self.samples[idx]
        else:
            out = self._interpolator()(tv)
        return out[0] if scalar else out

    def derivative(self) -> "MatrixFunction":
        """Time derivative, sampled on the same grid (zero for zoh)."""
        if self.interp == "zoh" or self.shape[0] == 0 or self.shape[1] == 0:
            return MatrixFunction(self.grid, np.zeros_like(self.samples), self.interp)
        dspl = self._interpolator().derivative()
        return MatrixFunction(self.grid, dspl(self.grid.points), self.interp)

    def resample(self, grid: TimeGrid) -> "MatrixFunction":
        if grid == self.grid:
            return self
        return MatrixFunction(grid, self.eval(grid.points), self.interp)


@dataclass(frozen=True)
class Signal:
    """Vector-valued trajectory sampled on a grid; values shape (n_grid, dim)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n:
            raise ValueError("need one value per grid point")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @staticmethod
    def constant(grid: TimeGrid, value) -> "Signal":
        value = np.atleast_1d(np.asarray(value, float))
        return Signal(grid, np.tile(value, (grid.n, 1)))

    @staticmethod
    def from_callable(grid: TimeGrid, fn, dim=None) -> "Signal":
        vals = np.array([np.atleast_1d(fn(t)) for t in grid.points], dtype=float)
        if dim is not None and vals.shape[1] != dim:
            raise ValueError("callable returned wrong dimension")
        return Signal(grid, vals)

    def interpolator(self, kind: str = "linear"):
        """Callable t -> value vector, defined on the signal's horizon."""
        if self.dim == 0:
            return lambda t: np.zeros(0)
        k = {"linear": 1, "spline": 3, "zoh": 1}[kind]
        k = min(k, self.grid.n - 1)
        if kind == "zoh":
            pts, vals = self.grid.points, self.values

            def f(t):
                idx = min(int(np.searchsorted(pts, t, side="right")) - 1, len(pts) - 1)
                return vals[max(idx, 0)]

            return f
        spl = make_interp_spline(self.grid.points, self.values, k=k, axis=0)
        lo, hi = self.grid.t0, self.grid.t1
        return lambda t: spl(min(max(t, lo), hi))


def l2norm(sig: Signal) -> float:
    """Finite-horizon L2 norm, composite Simpson quadrature on the signal grid."""
    if sig.dim == 0:
        return 0.0
    sq = np.einsum("ij,ij->i", sig.values, sig.values)
    return float(np.sqrt(max(simpson(sq, x=sig.grid.points), 0.0)))


_BLOCKS = [
    ("A", "x", "x"), ("Bw", "x", "w"), ("Bd", "x", "d"), ("Bu", "x", "u"),
    ("Cv", "v", "x"), ("Dvw", "v", "w"), ("Dvd", "v", "d"), ("Dvu", "v", "u"),
    ("Ce", "e", "x"), ("Dew", "e", "w"), ("Ded", "e", "d"), ("Deu", "e", "u"),
    ("Cy", "y", "x"), ("Dyw", "y", "w"), ("Dyd", "y", "d"), ("Dyu", "y", "u"),
]
_DIM_KEYS = ("x", "w", "d", "u", "v", "e", "y")


class LtvSystem:
    """Finite-horizon LTV state-space system with partitioned channels.

        xdot = A x + Bw w + Bd d + Bu u
        v    = Cv x + Dvw w + Dvd d + Dvu u
        e    = Ce x + Dew w + Ded d + Deu u
        y    = Cy x + Dyw w + Dyd d + Dyu u

    (w, v) are the uncertainty channels, (d, e) disturbance/performance,
    (u, y) control/measurement.  Any channel may be empty; one type therefore
    serves plants, scaled plants, controllers and closed loops alike.
    Blocks may be passed as (n_grid, r, c) sample stacks or constant (r, c)
    matrices; omitted blocks are zero.
    """

    def __init__(self, grid: TimeGrid, interp: str = "spline", dims=None, **blocks):
        self.grid = grid
        self.interp = interp
        unknown = set(blocks) - {b[0] for b in _BLOCKS}
        if unknown:
            raise ValueError(f"unknown blocks {sorted(unknown)}")

        dims = dict(dims or {})
        for name, rkey, ckey in _BLOCKS:
            blk = blocks.get(name)
            if blk is None:
                continue
            blk = np.asarray(blk, dtype=float)
            if blk.ndim == 2:
                blk = np.broadcast_to(blk, (grid.n,) + blk.shape)
            if blk.ndim != 3 or blk.shape[0] != grid.n:
                raise ValueError(f"block {name}: need (n_grid, r, c) samples")
            for key, size in ((rkey, blk.shape[1]), (ckey, blk.shape[2])):
                if dims.setdefault(key, size) != size:
                    raise ValueError(f"block {name} inconsistent with n_{key}")
            blocks[name] = np.ascontiguousarray(blk, dtype=float)
        for key in _DIM_KEYS:
            dims.setdefault(key, 0)
        self.dims = dims
        self._blocks = {}
        for name, rkey, ckey in _BLOCKS:
            shape = (grid.n, dims[rkey], dims[ckey])
            blk = blocks.get(name)
            self._blocks[name] = np.zeros(shape) if blk is None else blk.reshape(shape)
        self._sysmat = None

    # dimension shorthands
    @property
    def nx(self): return self.dims["x"]
    @property
    def nw(self): return self.dims["w"]
    @property
    def nd(self): return self.dims["d"]
    @property
    def nu(self): return self.dims["u"]
    @property
    def nv(self): return self.dims["v"]
    @property
    def ne(self): return self.dims["e"]
    @property
    def ny(self): return self.dims["y"]

    def block(self, name: str) -> np.ndarray:
        """Raw sample stack (n_grid, r, c) of one state-space block."""
        return self._blocks[name]

    def mf(self, name: str) -> MatrixFunction:
        return MatrixFunction(self.grid, self._blocks[name], self.interp)

    def __getattr__(self, name):
        if name in {b[0] for b in _BLOCKS}:
            return self.mf(name)
        raise AttributeError(name)

    def replace_blocks(self, **blocks) -> "LtvSystem":
        new = dict(self._blocks)
        new.update(blocks)
        return LtvSystem(self.grid, self.interp, dims=dict(self.dims), **new)

    def _full_matrix(self) -> MatrixFunction:
        """Stacked [A B; C D] over all channels as one interpolant."""
        if self._sysmat is None:
            rows = []
            for r in ("x", "v", "e", "y"):
                prefix = {"x": ("A", "Bw", "Bd", "Bu"),
                          "v": ("Cv", "Dvw", "Dvd", "Dvu"),
                          "e": ("Ce", "Dew", "Ded", "Deu"),
                          "y": ("Cy", "Dyw", "Dyd", "Dyu")}[r]
                rows.append(np.concatenate([self._blocks[n] for n in prefix], axis=2))
            self._sysmat = MatrixFunction(
                self.grid, np.concatenate(rows, axis=1), self.interp
            )
        return self._sysmat

    def resample(self, grid: TimeGrid) -> "LtvSystem":
        if grid == self.grid:
            return self
        full = self._full_matrix().eval(grid.points)
        nx, nw, nd, nu = self.nx, self.nw, self.nd, self.nu
        nv, ne, ny = self.nv, self.ne, self.ny
        r = np.cumsum([0, nx, nv, ne, ny])
        c = np.cumsum([0, nx, nw, nd, nu])
        blocks = {}
        for i, rnames in enumerate(
            [("A", "Bw", "Bd", "Bu"), ("Cv", "Dvw", "Dvd", "Dvu"),
             ("Ce", "Dew", "Ded", "Deu"), ("Cy", "Dyw", "Dyd", "Dyu")]
        ):
            for j, name in enumerate(rnames):
                blocks[name] = full[:, r[i]:r[i + 1], c[j]:c[j + 1]]
        return LtvSystem(grid, self.interp, dims=dict(self.dims), **blocks)


@dataclass
class SimConfig:
    """Integrator settings: adaptive Runge-Kutta (Dormand-Prince by default)."""

    rtol: float = 1e-8
    atol: float = 1e-10
    method: str = "RK45"
    output_refine: int = 10          # output grid density vs coefficient grid
    input_interp: str = "linear"
    max_step: float = np.inf
    escape_norm: float = 1e12


@dataclass
class SimResult:
    state: Signal
    v: Signal
    e: Signal
    y: Signal


def _input_fn(sig, dim, cfg, grid):
    if sig is None:
        return (lambda t: np.zeros(dim)), None
    if callable(sig):
        return (lambda t: np.atleast_1d(np.asarray(sig(t), float))), None
    if not isinstance(sig, Signal):
        raise TypeError("inputs must be Signal, callable or None")
    if sig.dim != dim:
        raise ValueError(f"input dimension {sig.dim} != expected {dim}")
    if sig.grid.t0 > grid.t0 + 1e-12 or sig.grid.t1 < grid.t1 - 1e-12:
        raise ValueError("input signal does not span the horizon")
    return sig.interpolator(cfg.input_interp), sig


def simulate(sys: LtvSystem, x0=None, w=None, d=None, u=None,
             cfg: SimConfig | None = None, output_grid: TimeGrid | None = None,
             ) -> SimResult:
    """Integrate the system response to the given channel inputs.

    Returns state and output trajectories sampled on `output_grid`
    (default: the coefficient grid refined by cfg.output_refine).
    Raises DivergenceError with the escape time if the integrator
    underflows its step size or the state norm passes cfg.escape_norm.
    """
    cfg = cfg or SimConfig()
    grid = sys.grid
    out_grid = output_grid or grid.refine(cfg.output_refine)
    nx = sys.nx
    x0 = np.zeros(nx) if x0 is None else np.asarray(x0, float).ravel()
    if x0.size != nx:
        raise ValueError(f"x0 has length {x0.size}, expected {nx}")

    fw, _ = _input_fn(w, sys.nw, cfg, grid)
    fd, _ = _input_fn(d, sys.nd, cfg, grid)
    fu, _ = _input_fn(u, sys.nu, cfg, grid)

    ts = out_grid.points
    if nx == 0:
        xs = np.zeros((ts.size, 0))
    else:
        full = sys._full_matrix()
        nin = np.cumsum([nx, sys.nw, sys.nd, sys.nu])

        def rhs(t, x):
            m = full.eval(t)[:nx]
            return (m[:, :nx] @ x + m[:, nx:nin[1]] @ fw(t)
                    + m[:, nin[1]:nin[2]] @ fd(t) + m[:, nin[2]:] @ fu(t))

        def escape(t, x):
            return cfg.escape_norm - float(np.max(np.abs(x), initial=0.0))

        escape.terminal = True

        # zero-order-hold coefficients may jump at grid points: restart there
        segments = (
            list(zip(grid.points[:-1], grid.points[1:]))
            if sys.interp == "zoh"
            else [(grid.t0, grid.t1)]
        )
        xs, x_cur = np.zeros((ts.size, nx)), x0.copy()
        tol = 1e-12 * max(1.0, grid.span)
        for si, (a, b) in enumerate(segments):
            sol = solve_ivp(
                rhs, (a, b), x_cur, method=cfg.method, rtol=cfg.rtol,
                atol=cfg.atol, events=escape, max_step=cfg.max_step,
                dense_output=True,
            )
            if not sol.success or sol.status == 1:
                t_esc = (
                    sol.t_events[0][0]
                    if sol.t_events and len(sol.t_events[0])
                    else (sol.t[-1] if sol.t.size else a)
                )
                raise DivergenceError(
                    f"integration diverged near t={t_esc:.6g}", escape_time=float(t_esc)
                )
            last = si == len(segments) - 1
            hi = b + tol if last else b - tol
            sel = (ts >= a - tol) & (ts <= hi)
            if np.any(sel):
                xs[sel] = sol.sol(ts[sel]).T
            x_cur = sol.y[:, -1]

    win = np.array([fw(t) for t in ts]).reshape(ts.size, sys.nw)
    din = np.array([fd(t) for t in ts]).reshape(ts.size, sys.nd)
    uin = np.array([fu(t) for t in ts]).reshape(ts.size, sys.nu)

    def out_rows(cname, dnames):
        c = MatrixFunction(grid, sys.block(cname), sys.interp).eval(ts)
        val = np.einsum("tij,tj->ti", c, xs)
        for dn, sig in zip(dnames, (win, din, uin)):
            dm = MatrixFunction(grid, sys.block(dn), sys.interp).eval(ts)
            val = val + np.einsum("tij,tj->ti", dm, sig)
        return val

    v = out_rows("Cv", ("Dvw", "Dvd", "Dvu"))
    e = out_rows("Ce", ("Dew", "Ded", "Deu"))
    y = out_rows("Cy", ("Dyw", "Dyd", "Dyu"))
    return SimResult(
        state=Signal(out_grid, xs),
        v=Signal(out_grid, v),
        e=Signal(out_grid, e),
        y=Signal(out_grid, y),
    )


def _batch_solve(mats, rhs):
    """Solve mats[k] @ x[k] = rhs[k] for every grid point, with a singularity check."""
    n = mats.shape[1]
    if n == 0:
        return np.zeros_like(rhs)
    conds = np.linalg.cond(mats)
    if not np.all(np.isfinite(conds)) or np.any(conds > 1e12):
        k = int(np.argmax(np.where(np.isfinite(conds), conds, np.inf)))
        raise WellPosednessError(f"algebraic loop matrix singular at grid index {k}")
    return np.linalg.solve(mats, rhs)


def lft_lower(g: LtvSystem, k: LtvSystem) -> LtvSystem:
    """Close the control loop: u = K(y).

    The controller is an LtvSystem using its d-channel as input (y) and its
    e-channel as output (u).  The result keeps the (w, d) -> (v, e) channels
    of g with concatenated state [x_g; x_k].
    """
    if k.nd != g.ny or k.ne != g.nu:
        raise ValueError("controller dimensions do not match plant (y, u) channels")
    k = k.resample(g.grid)
    N = g.grid.n
    nxg, nxk = g.nx, k.nx
    nw, nd, nv, ne = g.nw, g.nd, g.nv, g.ne

    A, Bw, Bd, Bu = (g.block(n) for n in ("A", "Bw", "Bd", "Bu"))
    Cv, Dvw, Dvd, Dvu = (g.block(n) for n in ("Cv", "Dvw", "Dvd", "Dvu"))
    Ce, Dew, Ded, Deu = (g.block(n) for n in ("Ce", "Dew", "Ded", "Deu"))
    Cy, Dyw, Dyd, Dyu = (g.block(n) for n in ("Cy", "Dyw", "Dyd", "Dyu"))
    Ak, Bk = k.block("A"), k.block("Bd")
    Ck, Dk = k.block("Ce"), k.block("Ded")

    # u = (I - Dk Dyu)^{-1} (Ck xk + Dk Cy xg + Dk Dyw w + Dk Dyd d)
    I_u = np.broadcast_to(np.eye(g.nu), (N, g.nu, g.nu))
    loop = I_u - Dk @ Dyu
    ux = _batch_solve(loop, Dk @ Cy)
    uk = _batch_solve(loop, Ck)
    uw = _batch_solve(loop, Dk @ Dyw)
    ud = _batch_solve(loop, Dk @ Dyd)

    # y = Cy xg + Dyu u + Dyw w + Dyd d
    yx = Cy + Dyu @ ux
    yk = Dyu @ uk
    yw = Dyw + Dyu @ uw
    yd = Dyd + Dyu @ ud

    Acl = np.zeros((N, nxg + nxk, nxg + nxk))
    Acl[:, :nxg, :nxg] = A + Bu @ ux
    Acl[:, :nxg, nxg:] = Bu @ uk
    Acl[:, nxg:, :nxg] = Bk @ yx
    Acl[:, nxg:, nxg:] = Ak + Bk @ yk
    Bwcl = np.concatenate([Bw + Bu @ uw, Bk @ yw], axis=1)
    Bdcl = np.concatenate([Bd + Bu @ ud, Bk @ yd], axis=1)

    def out(C, Dw, Dd, Du):
        Cc = np.concatenate([C + Du @ ux, Du @ uk], axis=2)
        return Cc, Dw + Du @ uw, Dd + Du @ ud

    Cvc, Dvwc, Dvdc = out(Cv, Dvw, Dvd, Dvu)
    Cec, Dewc, Dedc = out(Ce, Dew, Ded, Deu)
    return LtvSystem(
        g.grid, g.interp,
        dims={"x": nxg + nxk, "w": nw, "d": nd, "v": nv, "e": ne, "u": 0, "y": 0},
        A=Acl, Bw=Bwcl, Bd=Bdcl, Cv=Cvc, Dvw=Dvwc, Dvd=Dvdc,
        Ce=Cec, Dew=Dewc, Ded=Dedc,
    )


def _delta_samples(n: LtvSystem, delta):
    """Normalize an uncertainty description to (n_grid, nw, nv) gain samples."""
    N, nw, nv = n.grid.n, n.nw, n.nv
    if isinstance(delta, Signal):
        if delta.dim != nw or nw != nv:
            raise ValueError("diagonal delta signal needs one gain per channel")
        out = np.zeros((N, nw, nv))
        vals = delta.values if delta.grid == n.grid else Signal(
            n.grid, np.array([delta.interpolator()(t) for t in n.grid.points])
        ).values
        for i in range(nw):
            out[:, i, i] = vals[:, i]
        return out
    if isinstance(delta, MatrixFunction):
        return delta.resample(n.grid).samples
    delta = np.asarray(delta, dtype=float)
    if delta.ndim == 0:
        if nw != nv:
            raise ValueError("scalar delta needs nw == nv")
        return np.broadcast_to(float(delta) * np.eye(nw), (N, nw, nv)).copy()
    if delta.ndim == 1:
        out = np.zeros((N, nw, nv))
        for i in range(nw):
            out[:, i, i] = delta[i]
        return out
    if delta.ndim == 2:
        return np.broadcast_to(delta, (N, nw, nv)).copy()
    return delta


def lft_upper(n: LtvSystem, delta) -> LtvSystem:
    """Close the uncertainty loop with a (possibly time-varying) static gain.

    delta maps v to w: w = Delta(t) v.  Accepts a scalar, a per-channel gain
    vector, a constant matrix, a Signal of diagonal gains sampled on the grid,
    or a MatrixFunction.  Returns the simulatable system on the remaining
    (d, u) -> (e, y) channels.
    """
    Dm = _delta_samples(n, delta)
    N = n.grid.n
    A, Bw, Bd, Bu = (n.block(s) for s in ("A", "Bw", "Bd", "Bu"))
    Cv, Dvw, Dvd, Dvu = (n.block(s) for s in ("Cv", "Dvw", "Dvd", "Dvu"))
    I_w = np.broadcast_to(np.eye(n.nw), (N, n.nw, n.nw))
    loop = I_w - Dm @ Dvw
    wx = _batch_solve(loop, Dm @ Cv)
    wd = _batch_solve(loop, Dm @ Dvd)
    wu = _batch_solve(loop, Dm @ Dvu)

    def close(Mx, Mw, Md, Mu):
        return Mx + Mw @ wx, Md + Mw @ wd, Mu + Mw @ wu

    Acl, Bdcl, Bucl = close(A, Bw, Bd, Bu)
    Cecl, Dedcl, Deucl = close(n.block("Ce"), n.block("Dew"), n.block("Ded"), n.block("Deu"))
    Cycl, Dydcl, Dyucl = close(n.block("Cy"), n.block("Dyw"), n.block("Dyd"), n.block("Dyu"))
    return LtvSystem(
        n.grid, n.interp,
        dims={"x": n.nx, "w": 0, "v": 0, "d": n.nd, "e": n.ne, "u": n.nu, "y": n.ny},
        A=Acl, Bd=Bdcl, Bu=Bucl, Ce=Cecl, Ded=Dedcl, Deu=Deucl,
        Cy=Cycl, Dyd=Dydcl, Dyu=Dyucl,
    )


def save_system(sys: LtvSystem, path: str) -> None:
    """Write the system as one CSV per block plus a manifest."""
    os.makedirs(path, exist_ok=True)
    manifest = {
        "kind": "ltv-system",
        "interp": sys.interp,
        "dims": {k: int(v) for k, v in sys.dims.items()},
        "grid": {"t0": sys.grid.t0, "t1": sys.grid.t1, "n": sys.grid.n},
        "blocks": {},
    }
    for name, rkey, ckey in _BLOCKS:
        r, c = sys.dims[rkey], sys.dims[ckey]
        if r == 0 or c == 0:
            continue
        fname = f"{name}.csv"
        manifest["blocks"][name] = {"file": fname, "rows": r, "cols": c}
        flat = sys.block(name).reshape(sys.grid.n, r * c)
        header = "t," + ",".join(
            f"{name}_{i + 1}{j + 1}" for i in range(r) for j in range(c)
        )
        np.savetxt(
            os.path.join(path, fname),
            np.column_stack([sys.grid.points, flat]),
            delimiter=",", header=header, comments="",
        )
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_system(path: str) -> LtvSystem:
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    blocks, grid = {}, None
    for name, info in manifest["blocks"].items():
        data = np.loadtxt(os.path.join(path, info["file"]), delimiter=",", skiprows=1)
        data = np.atleast_2d(data)
        if grid is None:
            grid = TimeGrid(data[:, 0])
        blocks[name] = data[:, 1:].reshape(grid.n, info["rows"], info["cols"])
    if grid is None:
        g = manifest["grid"]
        grid = TimeGrid.uniform(g["t0"], g["t1"], g["n"])
    return LtvSystem(
        grid, manifest["interp"],
        dims={k: int(v) for k, v in manifest["dims"].items()}, **blocks,
    )
