"""Linearization of nonlinear models about a reference trajectory.

Produces (a) the standard LTV approximation and (b) the extended uncertain
plant in which a pseudo-state with unit initial condition routes constant
parameter offsets into the dynamics through a diagonal uncertainty channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LinearizationError, TrajectoryError
from .ltvcore import LtvSystem, MatrixFunction, Signal, TimeGrid

__all__ = [
    "NonlinearModel",
    "Trajectory",
    "PerturbationSet",
    "ExtendedPlant",
    "FdConfig",
    "Jacobians",
    "trajectory_residual",
    "jacobians_along",
    "nominal_ltv",
    "extend_with_pseudostate",
]


@dataclass(frozen=True)
class NonlinearModel:
    """Nonlinear plant description.

    f(x, d, u, rho, t) -> state derivative
    h(x, d, u, rho, t) -> performance output e
    g(x, d, u, rho, t) -> measured output y
    """

    f: callable
    h: callable
    g: callable
    n_x: int
    n_d: int
    n_u: int
    n_rho: int
    n_e: int
    n_y: int


@dataclass(frozen=True)
class Trajectory:
    """Reference solution of the model: sampled states, inputs and parameters."""

    grid: TimeGrid
    x: Signal
    d: Signal
    u: Signal
    rho: Signal
    e: Signal | None = None
    y: Signal | None = None

    def __post_init__(self):
        for name in ("x", "d", "u", "rho", "e", "y"):
            sig = getattr(self, name)
            if sig is not None and sig.grid != self.grid:
                raise ValueError(f"trajectory signal {name} on a different grid")


@dataclass(frozen=True)
class PerturbationSet:
    """Box of admissible parameter offsets: |rho_i - rho_T,i| <= bounds[i]."""

    bounds: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.bounds, dtype=float))
        if b.ndim != 1 or np.any(~np.isfinite(b)) or np.any(b < 0):
            raise ValueError("bounds must be finite and nonnegative")
        object.__setattr__(self, "bounds", b)

    @property
    def n(self) -> int:
        return self.bounds.size


@dataclass
class FdConfig:
    """Central finite-difference settings for the Jacobian sweep."""

    rel_step: float = 1e-6
    abs_step: float = 1e-7
    residual_tol: float = 1e-3
    check_residual: bool = True


# jacobian name -> (of which map, wrt which argument)
_JAC_NAMES = {
    "A": ("f", 0), "Bd": ("f", 1), "Bu": ("f", 2), "E": ("f", 3),
    "Ce": ("h", 0), "Ded": ("h", 1), "Deu": ("h", 2), "Fe": ("h", 3),
    "Cy": ("g", 0), "Dyd": ("g", 1), "Dyu": ("g", 2), "Fy": ("g", 3),
}


@dataclass
class Jacobians:
    """Model Jacobians along the trajectory, one sample stack per block."""

    grid: TimeGrid
    blocks: dict = field(default_factory=dict)
    dims: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.blocks[name]

    def mf(self, name: str) -> MatrixFunction:
        return MatrixFunction(self.grid, self.blocks[name])


def trajectory_residual(model: NonlinearModel, traj: Trajectory) -> float:
    """Scaled max norm of d/dt x_T - f(x_T, ...) along the trajectory.

    The derivative is a second-order finite difference of the samples; each
    component is scaled by its typical magnitude max(1, max_t |f_i|), so the
    tolerance applies uniformly across slow and fast states.
    """
    ts = traj.grid.points
    xdot_fd = np.gradient(traj.x.values, ts, axis=0, edge_order=2)
    fs = np.array([
        np.atleast_1d(model.f(traj.x.values[k], traj.d.values[k],
                              traj.u.values[k], traj.rho.values[k], t))
        for k, t in enumerate(ts)
    ])
    scale = np.maximum(1.0, np.max(np.abs(fs), axis=0))
    return float(np.max(np.abs(xdot_fd - fs) / scale, initial=0.0))


def _central_diff(fun, args, which, t, out_dim, cfg):
    base = np.asarray(args[which], dtype=float)
    jac = np.zeros((out_dim, base.size))
    for i in range(base.size):
        h = max(cfg.rel_step * abs(base[i]), cfg.abs_step)
        hi, lo = base.copy(), base.copy()
        hi[i] += h
        lo[i] -= h
        a_hi = list(args); a_hi[which] = hi
        a_lo = list(args); a_lo[which] = lo
        f_hi = np.atleast_1d(fun(*a_hi, t))
        f_lo = np.atleast_1d(fun(*a_lo, t))
        if not (np.all(np.isfinite(f_hi)) and np.all(np.isfinite(f_lo))):
            raise LinearizationError(
                f"model returned non-finite output at t={t:.6g}",
                time=t, argument=("x", "d", "u", "rho")[which],
            )
        jac[:, i] = (f_hi - f_lo) / (2.0 * h)
    return jac


def jacobians_along(model: NonlinearModel, traj: Trajectory,
                    cfg: FdConfig | None = None) -> Jacobians:
    """Central-difference Jacobians of f, h, g at every trajectory grid point."""
    cfg = cfg or FdConfig()
    if cfg.check_residual:
        res = trajectory_residual(model, traj)
        if res > cfg.residual_tol:
            raise TrajectoryError(
                f"trajectory residual {res:.3g} exceeds tolerance {cfg.residual_tol:.3g}"
            )
    maps = {"f": (model.f, model.n_x), "h": (model.h, model.n_e),
            "g": (model.g, model.n_y)}
    arg_dims = (model.n_x, model.n_d, model.n_u, model.n_rho)
    N = traj.grid.n
    out = Jacobians(grid=traj.grid)
    out.dims = {"x": model.n_x, "d": model.n_d, "u": model.n_u,
                "rho": model.n_rho, "e": model.n_e, "y": model.n_y}
    for name, (mkey, which) in _JAC_NAMES.items():
        fun, odim = maps[mkey]
        out.blocks[name] = np.zeros((N, odim, arg_dims[which]))
    for k, t in enumerate(traj.grid.points):
        args = (traj.x.values[k], traj.d.values[k], traj.u.values[k],
                traj.rho.values[k])
        for name, (mkey, which) in _JAC_NAMES.items():
            fun, odim = maps[mkey]
            out.blocks[name][k] = _central_diff(fun, args, which, t, odim, cfg)
    return out


def nominal_ltv(jacs: Jacobians) -> LtvSystem:
    """LTV approximation at nominal parameters: no uncertainty channels."""
    d = jacs.dims
    return LtvSystem(
        jacs.grid,
        dims={"x": d["x"], "w": 0, "v": 0, "d": d["d"], "u": d["u"],
              "e": d["e"], "y": d["y"]},
        A=jacs["A"], Bd=jacs["Bd"], Bu=jacs["Bu"],
        Ce=jacs["Ce"], Ded=jacs["Ded"], Deu=jacs["Deu"],
        Cy=jacs["Cy"], Dyd=jacs["Dyd"], Dyu=jacs["Dyu"],
    )


@dataclass(frozen=True)
class ExtendedPlant:
    """Uncertain LTV plant with state (x_delta, x_rho).

    The pseudo-state x_rho has zero derivative; the uncertainty contract is
    w = diag(rho_delta) v with v = x_rho replicated per parameter channel and
    |rho_delta,i(t)| <= bounds[i].  Parameter influence enters only through
    the w channel (E, Fe, Fy columns).
    """

    sys: LtvSystem
    bounds: PerturbationSet

    @property
    def pseudo_index(self) -> int:
        return self.sys.nx - 1

    @property
    def n_rho(self) -> int:
        return self.bounds.n


def extend_with_pseudostate(jacs: Jacobians, bounds: PerturbationSet) -> ExtendedPlant:
    """Append the pseudo-state and expose parameter offsets as an uncertainty."""
    d = jacs.dims
    if bounds.n != d["rho"]:
        raise ValueError("bounds dimension must match the parameter count")
    nx, nr = d["x"], d["rho"]
    N = jacs.grid.n

    A = np.zeros((N, nx + 1, nx + 1))
    A[:, :nx, :nx] = jacs["A"]
    Bw = np.concatenate([jacs["E"], np.zeros((N, 1, nr))], axis=1)
    Bd = np.concatenate([jacs["Bd"], np.zeros((N, 1, d["d"]))], axis=1)
    Bu = np.concatenate([jacs["Bu"], np.zeros((N, 1, d["u"]))], axis=1)
    Cv = np.zeros((N, nr, nx + 1))
    Cv[:, :, nx] = 1.0
    Ce = np.concatenate([jacs["Ce"], np.zeros((N, d["e"], 1))], axis=2)
    Cy = np.concatenate([jacs["Cy"], np.zeros((N, d["y"], 1))], axis=2)

    sys = LtvSystem(
        jacs.grid,
        dims={"x": nx + 1, "w": nr, "v": nr, "d": d["d"], "u": d["u"],
              "e": d["e"], "y": d["y"]},
        A=A, Bw=Bw, Bd=Bd, Bu=Bu, Cv=Cv,
        Ce=Ce, Dew=jacs["Fe"], Ded=jacs["Ded"], Deu=jacs["Deu"],
        Cy=Cy, Dyw=jacs["Fy"], Dyd=jacs["Dyd"], Dyu=jacs["Dyu"],
    )
    return ExtendedPlant(sys=sys, bounds=bounds)
