"""Pitch-plane launch-vehicle example and Monte-Carlo validation harness.

The vehicle dataset here is SYNTHETIC: magnitudes are chosen to resemble a
light European launcher during first-stage ascent, but no real flight data
enters.  All derived artifacts are labeled accordingly.

Conventions: pitch angle theta measured from horizontal, body x forward,
body z normal; the wind speed w acts along body z and is the uncertain
parameter.  Angles are radians internally; degree values appear only at the
configuration surface.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import expm

from .errors import DomainError, TrajectoryError
from .linearize import (
    Jacobians,
    NonlinearModel,
    PerturbationSet,
    Trajectory,
    extend_with_pseudostate,
    jacobians_along,
)
from .ltvcore import LtvSystem, Signal, TimeGrid

__all__ = [
    "VehicleData",
    "WeightingScheme",
    "DrydenConfig",
    "McReport",
    "launcher_model",
    "gravity_turn",
    "truncate_states",
    "build_pitch_ltv",
    "build_weights",
    "build_generalized_plant",
    "dryden_turbulence",
    "base_wind_profile",
    "monte_carlo",
    "pitch_ltv_symbolic",
]

DEG = np.pi / 180.0


@dataclass
class VehicleData:
    """Time-tabulated vehicle properties (synthetic, first-stage ascent).

    cn(t) scales the normal force N = cn * xd * (zd - w); ca(t) the axial
    force A = ca * xd^2.  Lever arms are gimbal-to-CoG (lever_cg) and
    CoG-to-aero-reference (lever_gp).
    """

    times: np.ndarray
    thrust: np.ndarray        # N
    mass: np.ndarray          # kg
    inertia: np.ndarray       # kg m^2
    inertia_rate: np.ndarray  # kg m^2 / s
    lever_gp: np.ndarray      # m
    lever_cg: np.ndarray      # m
    cn: np.ndarray            # N / (m/s)^2
    ca: np.ndarray            # N / (m/s)^2
    g0: float = 9.80665
    label: str = "synthetic"

    def __post_init__(self):
        if np.any(self.mass <= 0) or np.any(self.inertia <= 0):
            raise ValueError("mass and inertia must stay positive")
        self._spl = {}

    def _f(self, name):
        if name not in self._spl:
            self._spl[name] = CubicSpline(self.times, getattr(self, name))
        return self._spl[name]

    def at(self, t):
        t = float(t)
        if t < self.times[0] - 1e-9 or t > self.times[-1] + 1e-9:
            raise DomainError(
                f"t={t:.3f} outside vehicle tables "
                f"[{self.times[0]:.1f}, {self.times[-1]:.1f}]"
            )
        return {k: float(self._f(k)(t)) for k in
                ("thrust", "mass", "inertia", "inertia_rate",
                 "lever_gp", "lever_cg", "cn", "ca")}

    @staticmethod
    def synthetic(t0=20.0, t1=85.0, n=131) -> "VehicleData":
        """Light-launcher magnitudes: 2.2 MN class, 137 t at lift-off."""
        ts = np.linspace(t0, t1, n)
        mdot = 820.0
        mass = 137000.0 - mdot * ts
        thrust = 2.30e6 - 3.0e3 * ts
        inertia = 66.0 * mass      # slender-body pitch inertia ~ m L^2 / 12
        inertia_rate = -66.0 * mdot * np.ones_like(ts)
        lever_cg = 11.5 + 0.020 * ts
        lever_gp = 3.5 + 0.030 * ts
        # air density along a nominal climb; the force model multiplies by
        # velocity, so the dynamic-pressure peak emerges mid-segment
        alt = 2500.0 + 220.0 * (ts - 25.0) + 2.6 * (ts - 25.0) ** 2
        rho = 1.225 * np.exp(-alt / 7200.0)
        s_ref = 7.07
        cn_alpha = 5.0
        cn = 0.5 * rho * s_ref * cn_alpha
        ca = 0.5 * rho * s_ref * 0.55
        return VehicleData(
            times=ts, thrust=thrust, mass=mass, inertia=inertia,
            inertia_rate=inertia_rate, lever_gp=lever_gp, lever_cg=lever_cg,
            cn=cn, ca=ca,
        )

    def save(self, path: str) -> None:
        header = ("t,thrust,mass,inertia,inertia_rate,lever_gp,lever_cg,"
                  "cn,ca")
        data = np.column_stack([
            self.times, self.thrust, self.mass, self.inertia,
            self.inertia_rate, self.lever_gp, self.lever_cg, self.cn, self.ca,
        ])
        np.savetxt(path, data, delimiter=",", header=header,
                   comments=f"# vehicle dataset ({self.label})\n# g0={self.g0}\n")

    @staticmethod
    def load(path: str) -> "VehicleData":
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=1)
        cols = data.T
        return VehicleData(
            times=cols[0], thrust=cols[1], mass=cols[2], inertia=cols[3],
            inertia_rate=cols[4], lever_gp=cols[5], lever_cg=cols[6],
            cn=cols[7], ca=cols[8],
        )


def _forces(vd_at, w, xd, zd):
    normal = vd_at["cn"] * xd * (zd - w)
    axial = vd_at["ca"] * xd * xd
    return normal, axial


def launcher_model(vd: VehicleData) -> NonlinearModel:
    """Rigid pitch-plane dynamics with state (theta, theta_dot, xd, zd).

    Input is the engine deflection delta; the single parameter is the wind
    speed; both regulated outputs and measurements are (theta, theta_dot).
    """

    def f(x, d, u, rho, t):
        th, thd, xd, zd = x
        delta = u[0] if len(u) else 0.0
        w = rho[0] if len(rho) else 0.0
        p = vd.at(t)
        normal, axial = _forces(p, w, xd, zd)
        tj = p["thrust"]
        sind, cosd = np.sin(delta), np.cos(delta)
        thdd = (normal * p["lever_gp"] / p["inertia"]
                - thd * p["inertia_rate"] / p["inertia"]
                - tj * p["lever_cg"] / p["inertia"] * sind)
        xdd = ((tj * cosd - axial) / p["mass"]
               - vd.g0 * np.sin(th) - thd * zd)
        zdd = (-normal / p["mass"] - tj / p["mass"] * sind
               + vd.g0 * np.cos(th) - thd * xd)
        return np.array([thd, thdd, xdd, zdd])

    def h(x, d, u, rho, t):
        return np.array([x[0], x[1]])

    return NonlinearModel(f=f, h=h, g=h, n_x=4, n_d=0, n_u=1, n_rho=1,
                          n_e=2, n_y=2)


def gravity_turn(vd: VehicleData, t_span=(25.0, 80.0), dt=0.25,
                 theta0=75.0 * DEG, xd0=220.0, zd0=0.0,
                 delta_max=10.0 * DEG) -> Trajectory:
    """Zero-wind reference trajectory with a moment-trimmed engine.

    The pitch rate follows the zero-normal-velocity turn condition
    theta_dot = g0 cos(theta) / xd; the deflection that trims the pitch
    moment is recovered algebraically along the way and checked against the
    actuator limit.
    """
    model = launcher_model(vd)
    g0 = vd.g0

    def trim_delta(t, th, thd, xd, zd, xdd):
        p = vd.at(t)
        normal, _ = _forces(p, 0.0, xd, zd)
        # required angular acceleration of the turn law
        thdd = g0 * (-np.sin(th) * thd * xd - np.cos(th) * xdd) / xd ** 2
        s = (normal * p["lever_gp"] - thd * p["inertia_rate"]
             - p["inertia"] * thdd) / (p["thrust"] * p["lever_cg"])
        if abs(s) > np.sin(delta_max):
            raise TrajectoryError(
                f"trim deflection exceeds {delta_max / DEG:.1f} deg at t={t:.2f}"
            )
        return np.arcsin(s)

    def rhs(t, z):
        th, xd, zd = z
        thd = g0 * np.cos(th) / xd
        p = vd.at(t)
        normal, axial = _forces(p, 0.0, xd, zd)
        xdd = (p["thrust"] - axial) / p["mass"] - g0 * np.sin(th) - thd * zd
        delta = trim_delta(t, th, thd, xd, zd, xdd)
        sind, cosd = np.sin(delta), np.cos(delta)
        xdd = ((p["thrust"] * cosd - axial) / p["mass"]
               - g0 * np.sin(th) - thd * zd)
        zdd = (-normal / p["mass"] - p["thrust"] / p["mass"] * sind
               + g0 * np.cos(th) - thd * xd)
        return [thd, xdd, zdd]

    sol = solve_ivp(rhs, t_span, [theta0, xd0, zd0], method="RK45",
                    rtol=1e-10, atol=1e-12, dense_output=True)
    if not sol.success:
        raise TrajectoryError(f"reference integration failed: {sol.message}")

    n = int(round((t_span[1] - t_span[0]) / dt)) + 1
    grid = TimeGrid(np.linspace(t_span[0], t_span[1], n))
    xs = np.zeros((grid.n, 4))
    us = np.zeros((grid.n, 1))
    for k, t in enumerate(grid.points):
        th, xd, zd = sol.sol(t)
        thd = g0 * np.cos(th) / xd
        p = vd.at(t)
        normal, axial = _forces(p, 0.0, xd, zd)
        xdd = (p["thrust"] - axial) / p["mass"] - g0 * np.sin(th) - thd * zd
        delta = trim_delta(t, th, thd, xd, zd, xdd)
        xs[k] = (th, thd, xd, zd)
        us[k] = delta
    es = xs[:, :2]
    return Trajectory(
        grid=grid,
        x=Signal(grid, xs),
        d=Signal(grid, np.zeros((grid.n, 0))),
        u=Signal(grid, us),
        rho=Signal(grid, np.zeros((grid.n, 1))),
        e=Signal(grid, es),
        y=Signal(grid, es),
    )


def truncate_states(jacs: Jacobians, keep) -> Jacobians:
    """Drop states from a Jacobian set (e.g. the forward-speed state)."""
    keep = np.asarray(keep, dtype=int)
    out = Jacobians(grid=jacs.grid)
    out.dims = dict(jacs.dims)
    out.dims["x"] = keep.size
    for name, blk in jacs.blocks.items():
        if name == "A":
            out.blocks[name] = blk[:, keep][:, :, keep]
        elif name in ("Bd", "Bu", "E"):
            out.blocks[name] = blk[:, keep, :]
        elif name in ("Ce", "Cy"):
            out.blocks[name] = blk[:, :, keep]
        else:
            out.blocks[name] = blk.copy()
    return out


def build_pitch_ltv(vd: VehicleData, traj: Trajectory, b_rho=20.0):
    """Extended uncertain pitch model with states (theta, theta_dot, zd, x_rho).

    The forward-speed state is truncated, matching common launcher pitch
    design practice; the wind offset is bounded by +-b_rho m/s.
    """
    model = launcher_model(vd)
    jacs = jacobians_along(model, traj)
    jacs3 = truncate_states(jacs, [0, 1, 3])
    return extend_with_pseudostate(jacs3, PerturbationSet([b_rho]))


def pitch_ltv_symbolic(vd: VehicleData, traj: Trajectory):
    """Closed-form entries of the truncated pitch model along the trajectory.

    Returns (A, B, E) stacks for states (theta, theta_dot, zd): the
    independent cross-check for the numerical linearization.
    """
    n = traj.grid.n
    A = np.zeros((n, 3, 3))
    B = np.zeros((n, 3, 1))
    E = np.zeros((n, 3, 1))
    for k, t in enumerate(traj.grid.points):
        th, thd, xd, zd = traj.x.values[k]
        delta = traj.u.values[k, 0]
        p = vd.at(t)
        J, m = p["inertia"], p["mass"]
        n_zd = p["cn"] * xd              # dN/dzd = cn * xd
        A[k] = [
            [0.0, 1.0, 0.0],
            [0.0, -p["inertia_rate"] / J, p["lever_gp"] / J * n_zd],
            [-vd.g0 * np.sin(th), -xd, -n_zd / m],
        ]
        B[k, :, 0] = [
            0.0,
            -p["thrust"] * p["lever_cg"] / J * np.cos(delta),
            -p["thrust"] / m * np.cos(delta),
        ]
        E[k, :, 0] = [0.0, -p["lever_gp"] / J * n_zd, n_zd / m]
    return A, B, E


def _first_order_ss(dc_pole, hf_gain, zero):
    """Balanced state-space of g(s) = hf_gain (s + zero) / (s + dc_pole)."""
    residue = hf_gain * (zero - dc_pole)
    root = np.sqrt(abs(residue))
    return (-dc_pole, root, np.sign(residue) * root, hf_gain)


@dataclass
class WeightingScheme:
    """Mixed-sensitivity weights of the pitch tracking design.

    we_theta: integral-like tracking weight on the pitch channel (flat 0.5
    above 0.75 rad/s, regularized pole well below the bandwidth);
    we_rate: static 0.5 on the pitch-rate channel; wu: unit control weight up
    to 25 rad/s, rising 20 dB/decade, rolled off at 2500 rad/s.  v_err scales
    the two measured errors (rad, rad/s), v_ctl the available deflection
    (rad).
    """

    we_theta: tuple = field(
        default_factory=lambda: _first_order_ss(7.5e-4, 0.5, 0.75)
    )
    we_rate: float = 0.5
    wu: tuple = field(
        default_factory=lambda: _first_order_ss(2500.0, 100.0, 25.0)
    )
    v_err: np.ndarray = field(
        default_factory=lambda: np.array([1.0 * DEG, 2.5 * DEG])
    )
    v_ctl: float = 5.0 * DEG

    def response(self, which, omega):
        """Magnitude of a first-order weight at the given frequency."""
        a, b, c, d = getattr(self, which)
        return abs(d + b * c / (1j * omega - a))


def build_weights() -> WeightingScheme:
    return WeightingScheme()


def build_generalized_plant(ext_plant, weights: WeightingScheme):
    """Mixed-sensitivity interconnection around the extended pitch plant.

    Channels: w uncertainty, d = normalized measurement injections (2),
    u = normalized deflection; v pseudo-state output,
    e = (W_e theta-err, W_e rate-err, W_u u), y = d - V_e^{-1} y_plant.
    Returns (plant, pseudo_index).
    """
    sys = ext_plant.sys
    if sys.ne != 2 or sys.ny != 2 or sys.nu != 1:
        raise ValueError("expected the two-output pitch plant")
    grid = sys.grid
    N = grid.n
    np_, nr = sys.nx, sys.nw
    a_we, b_we, c_we, d_we = weights.we_theta
    a_wu, b_wu, c_wu, d_wu = weights.wu
    ve1, ve2 = weights.v_err
    n = np_ + 2

    Ce_p = sys.block("Ce")
    A = np.zeros((N, n, n))
    A[:, :np_, :np_] = sys.block("A")
    A[:, np_, :np_] = b_we / ve1 * Ce_p[:, 0, :]
    A[:, np_, np_] = a_we
    A[:, np_ + 1, np_ + 1] = a_wu

    Bw = np.concatenate([sys.block("Bw"), np.zeros((N, 2, nr))], axis=1)
    Bd = np.zeros((N, n, 2))
    Bu = np.zeros((N, n, 1))
    Bu[:, :np_] = sys.block("Bu") * weights.v_ctl
    Bu[:, np_ + 1, 0] = b_wu

    Cv = np.concatenate([sys.block("Cv"), np.zeros((N, nr, 2))], axis=2)

    Ce = np.zeros((N, 3, n))
    Ce[:, 0, :np_] = d_we / ve1 * Ce_p[:, 0, :]
    Ce[:, 0, np_] = c_we
    Ce[:, 1, :np_] = weights.we_rate / ve2 * Ce_p[:, 1, :]
    Ce[:, 2, np_ + 1] = c_wu
    Deu = np.zeros((N, 3, 1))
    Deu[:, 2, 0] = d_wu

    Cy = np.zeros((N, 2, n))
    Cy[:, :, :np_] = -Ce_p / np.array([ve1, ve2])[None, :, None]
    Dyd = np.broadcast_to(np.eye(2), (N, 2, 2)).copy()

    gp = LtvSystem(
        grid, sys.interp,
        dims={"x": n, "w": nr, "v": nr, "d": 2, "u": 1, "e": 3, "y": 2},
        A=A, Bw=Bw, Bd=Bd, Bu=Bu, Cv=Cv, Ce=Ce, Deu=Deu, Cy=Cy, Dyd=Dyd,
    )
    return gp, ext_plant.pseudo_index


@dataclass
class DrydenConfig:
    """Longitudinal turbulence shaping-filter parameters.

    Severe-intensity defaults; the first-order longitudinal form is used with
    a representative airspeed over the ascent segment.
    """

    length_scale: float = 533.0    # m
    sigma: float = 7.6             # m/s, severe intensity
    airspeed: float = 600.0        # m/s


def dryden_turbulence(seed, dt: float, duration: float,
                      cfg: DrydenConfig | None = None,
                      intensity: float = 1.0) -> Signal:
    """One gust realization: exact sampling of the shaping filter state.

    The first-order longitudinal filter driven by white noise is sampled
    exactly (the discrete state is a stationary AR(1) process whose variance
    equals sigma^2), so realizations are grid-independent in distribution.
    Identical seeds give identical realizations.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cfg = cfg or DrydenConfig()
    rng = np.random.default_rng(seed)
    n = int(np.floor(duration / dt)) + 1
    grid = TimeGrid(np.arange(n) * dt)
    sigma = cfg.sigma * intensity
    if sigma == 0.0:
        return Signal(grid, np.zeros((n, 1)))
    a = np.exp(-cfg.airspeed / cfg.length_scale * dt)
    drive = sigma * np.sqrt(1.0 - a * a)
    x = np.zeros(n)
    x[0] = sigma * rng.standard_normal()
    noise = rng.standard_normal(n - 1)
    for k in range(n - 1):
        x[k + 1] = a * x[k] + drive * noise[k]
    return Signal(grid, x[:, None])


def base_wind_profile(grid: TimeGrid, peak=32.0, t_peak=57.0,
                      width=13.0) -> Signal:
    """Synthetic stand-in for a measured ascent wind profile.

    A jet-stream-like bump with mild shear oscillations; replace with real
    tabulated data via CSV for actual studies.
    """
    t = grid.points
    core = peak * np.exp(-(((t - t_peak) / width) ** 2))
    shear = 4.0 * np.sin(0.35 * t) * np.exp(-(((t - t_peak) / (2 * width)) ** 2))
    return Signal(grid, (core + shear)[:, None])


def _discretize_controller(K: LtvSystem, ts):
    """Exact zero-order-hold transition/input matrices per step."""
    n, p = K.nx, K.nd
    A = K.A
    B = K.Bd
    C = K.Ce
    phis = np.zeros((ts.size - 1, n, n))
    gams = np.zeros((ts.size - 1, n, p))
    for k in range(ts.size - 1):
        dt = ts[k + 1] - ts[k]
        M = np.zeros((n + p, n + p))
        M[:n, :n] = A.eval(ts[k])
        M[:n, n:] = B.eval(ts[k])
        E = expm(M * dt)
        phis[k] = E[:n, :n]
        gams[k] = E[:n, n:]
    cks = C.eval(ts)
    return phis, gams, cks


@dataclass
class McCase:
    index: int
    verdicts: dict
    peak_error: dict
    trace: dict | None = None


@dataclass
class McReport:
    scaling: float
    n_cases: int
    failure_fraction: dict
    cases: list
    criterion_deg: float

    def summary(self) -> str:
        lines = [f"turbulence scaling {self.scaling:g}, {self.n_cases} cases,"
                 f" instability = |pitch error| > {self.criterion_deg:g} deg"]
        for name, frac in self.failure_fraction.items():
            lines.append(f"  {name}: failed {frac * 100:.1f}%")
        return "\n".join(lines)


def monte_carlo(vd: VehicleData, traj: Trajectory, weights: WeightingScheme,
                controllers: dict, n_cases: int, scaling: float,
                seed: int = 0, dt: float = 0.01,
                dryden: DrydenConfig | None = None,
                base_wind: Signal | None = None,
                criterion_deg: float = 20.0,
                keep_traces: int = 0) -> McReport:
    """Paired closed-loop campaign on the nonlinear vehicle.

    Wind case i (base profile plus scaled turbulence) is identical for every
    controller, so failure fractions compare like for like.  Instability
    means the pitch error exceeding the criterion or a non-finite state.
    """
    dryden = dryden or DrydenConfig()
    grid = traj.grid
    t0, t1 = grid.t0, grid.t1
    nsteps = int(np.ceil((t1 - t0) / dt))
    ts = t0 + np.arange(nsteps + 1) * (t1 - t0) / nsteps
    step = ts[1] - ts[0]

    base = base_wind if base_wind is not None else base_wind_profile(grid)
    base_vals = CubicSpline(base.grid.points, base.values[:, 0])(ts)

    # reference signals and vehicle tables sampled once on the fine grid
    ref = CubicSpline(grid.points, traj.x.values, axis=0)
    ref_x = ref(ts)
    ref_u = CubicSpline(grid.points, traj.u.values[:, 0])(ts)
    tables = {k: CubicSpline(vd.times, getattr(vd, k))(ts)
              for k in ("thrust", "mass", "inertia", "inertia_rate",
                        "lever_gp", "lever_cg", "cn", "ca")}

    disc = {name: _discretize_controller(K, ts)
            for name, K in controllers.items()}
    ve = weights.v_err
    crit = criterion_deg * DEG
    g0 = vd.g0

    def plant_f(k, x, w, delta):
        th, thd, xd, zd = x
        normal = tables["cn"][k] * xd * (zd - w)
        axial = tables["ca"][k] * xd * xd
        tj, m, J = tables["thrust"][k], tables["mass"][k], tables["inertia"][k]
        sind, cosd = np.sin(delta), np.cos(delta)
        return np.array([
            thd,
            (normal * tables["lever_gp"][k] - thd * tables["inertia_rate"][k]
             - tj * tables["lever_cg"][k] * sind) / J,
            (tj * cosd - axial) / m - g0 * np.sin(th) - thd * zd,
            -normal / m - tj / m * sind + g0 * np.cos(th) - thd * xd,
        ])

    root = np.random.SeedSequence(seed)
    case_seeds = root.spawn(n_cases)
    cases = []
    fails = {name: 0 for name in controllers}
    for i in range(n_cases):
        turb = dryden_turbulence(case_seeds[i], step, t1 - t0, dryden)
        wind = base_vals + scaling * turb.values[: ts.size, 0]
        verdicts, peaks, trace = {}, {}, {}
        for name in controllers:
            phis, gams, cks = disc[name]
            nK = controllers[name].nx
            x = ref_x[0].copy()
            xk = np.zeros(nK)
            failed = False
            peak = 0.0
            rec = np.zeros((ts.size, 2)) if i < keep_traces else None
            for k in range(ts.size):
                err = x[:2] - ref_x[k, :2]
                peak = max(peak, abs(err[0]))
                if rec is not None:
                    rec[k] = (ts[k], err[0] / DEG)
                if not np.all(np.isfinite(x)) or abs(err[0]) > crit:
                    failed = True
                    break
                if k == ts.size - 1:
                    break
                y = -err / ve
                u = cks[k] @ xk
                delta = ref_u[k] + weights.v_ctl * float(u[0])
                # one RK4 step of the vehicle with held deflection and wind
                w = wind[k]
                f1 = plant_f(k, x, w, delta)
                f2 = plant_f(k, x + 0.5 * step * f1, w, delta)
                f3 = plant_f(k, x + 0.5 * step * f2, w, delta)
                f4 = plant_f(k + 1, x + step * f3, wind[k + 1], delta)
                x = x + step / 6.0 * (f1 + 2 * f2 + 2 * f3 + f4)
                xk = phis[k] @ xk + gams[k] @ y
            verdicts[name] = "unstable" if failed else "stable"
            peaks[name] = peak / DEG
            if failed:
                fails[name] += 1
            if rec is not None:
                trace[name] = rec
        cases.append(McCase(index=i, verdicts=verdicts, peak_error=peaks,
                            trace=trace or None))
    frac = {name: fails[name] / n_cases for name in controllers}
    return McReport(scaling=scaling, n_cases=n_cases, failure_fraction=frac,
                    cases=cases, criterion_deg=criterion_deg)


def save_trajectory(traj: Trajectory, path: str) -> None:
    cols = [traj.grid.points, traj.x.values, traj.d.values, traj.u.values,
            traj.rho.values]
    names = (["t"]
             + [f"x{i+1}" for i in range(traj.x.dim)]
             + [f"d{i+1}" for i in range(traj.d.dim)]
             + [f"u{i+1}" for i in range(traj.u.dim)]
             + [f"rho{i+1}" for i in range(traj.rho.dim)])
    np.savetxt(path, np.column_stack(cols), delimiter=",",
               header=",".join(names), comments="")


def load_trajectory(path: str, n_x: int, n_d: int, n_u: int,
                    n_rho: int) -> Trajectory:
    data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    grid = TimeGrid(data[:, 0])
    c = 1
    parts = []
    for size in (n_x, n_d, n_u, n_rho):
        parts.append(Signal(grid, data[:, c:c + size]))
        c += size
    return Trajectory(grid=grid, x=parts[0], d=parts[1], u=parts[2],
                      rho=parts[3])
