import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ltvsyn import (
    LtvSystem,
    MatrixFunction,
    Signal,
    SimConfig,
    TimeGrid,
    l2norm,
    lft_lower,
    lft_upper,
    load_system,
    save_system,
    simulate,
)
from ltvsyn.errors import DivergenceError, DomainError, WellPosednessError

from conftest import random_ltv


class TestTimeGrid:
    def test_basic(self):
        g = TimeGrid.uniform(0.0, 2.0, 5)
        assert g.t0 == 0.0 and g.t1 == 2.0 and g.n == 5

    def test_rejects_bad_grids(self):
        with pytest.raises(ValueError):
            TimeGrid(np.array([0.0]))
        with pytest.raises(ValueError):
            TimeGrid(np.array([0.0, 1.0, 1.0]))
        with pytest.raises(ValueError):
            TimeGrid.uniform(1.0, 0.0, 4)

    def test_refine_keeps_endpoints(self):
        g = TimeGrid.uniform(0.0, 1.0, 3).refine(4)
        assert g.n == 9
        assert g.t0 == 0.0 and g.t1 == 1.0
        assert set(np.round(TimeGrid.uniform(0, 1, 3).points, 12)) <= set(
            np.round(g.points, 12)
        )


class TestMatrixFunction:
    @pytest.mark.parametrize("interp", ["linear", "spline", "zoh"])
    def test_constant_function(self, interp):
        g = TimeGrid.uniform(0, 1, 6)
        M = np.array([[1.0, 2.0], [3.0, 4.0]])
        mf = MatrixFunction(g, M, interp)
        for t in [0.0, 0.31, 0.77, 1.0]:
            np.testing.assert_allclose(mf.eval(t), M, atol=1e-12)

    def test_linear_interpolation_identity(self):
        g = TimeGrid(np.array([0.0, 1.0]))
        mf = MatrixFunction(g, np.array([[[0.0]], [[1.0]]]), "linear")
        assert mf.eval(0.5)[0, 0] == pytest.approx(0.5, abs=1e-14)

    def test_spline_tracks_sin(self):
        g = TimeGrid.uniform(0, 1, 10)
        mf = MatrixFunction(g, np.sin(g.points)[:, None, None], "spline")
        assert abs(mf.eval(0.37)[0, 0] - np.sin(0.37)) < 1e-4

    @pytest.mark.parametrize("interp", ["linear", "spline", "zoh"])
    def test_exact_at_grid_points(self, rng, interp):
        g = TimeGrid.uniform(0, 2, 7)
        samples = rng.standard_normal((7, 2, 3))
        mf = MatrixFunction(g, samples, interp)
        np.testing.assert_allclose(mf.eval(g.points), samples, atol=1e-12)

    def test_out_of_horizon_raises(self):
        g = TimeGrid.uniform(0, 1, 4)
        mf = MatrixFunction(g, np.eye(2))
        with pytest.raises(DomainError):
            mf.eval(1.5)
        with pytest.raises(DomainError):
            mf.eval(-0.2)

    def test_derivative_of_spline(self):
        g = TimeGrid.uniform(0, 1, 30)
        mf = MatrixFunction(g, (g.points ** 3)[:, None, None], "spline")
        d = mf.derivative()
        assert abs(d.eval(0.5)[0, 0] - 3 * 0.25) < 1e-6


class TestSignalAndNorm:
    def test_unit_constant(self):
        g = TimeGrid.uniform(0, 1, 21)
        assert l2norm(Signal.constant(g, 1.0)) == pytest.approx(1.0, abs=1e-12)

    def test_zero_signal(self):
        g = TimeGrid.uniform(0, 1, 21)
        assert l2norm(Signal.constant(g, [0.0, 0.0])) == 0.0

    def test_ramp(self):
        g = TimeGrid.uniform(0, 1, 21)
        assert l2norm(Signal(g, g.points[:, None])) == pytest.approx(
            np.sqrt(1.0 / 3.0), abs=1e-8
        )

    def test_homogeneity(self, rng):
        g = TimeGrid.uniform(0, 2, 31)
        s = Signal(g, rng.standard_normal((31, 2)))
        a = -2.7
        assert l2norm(Signal(g, a * s.values)) == pytest.approx(
            abs(a) * l2norm(s), rel=1e-13
        )


class TestSimulate:
    def test_integrator_ramp(self):
        g = TimeGrid.uniform(0, 1, 11)
        sys = LtvSystem(g, A=np.zeros((1, 1)), Bd=np.eye(1), Ce=np.eye(1))
        res = simulate(sys, d=Signal.constant(g, 1.0))
        ts = res.e.grid.points
        np.testing.assert_allclose(res.e.values[:, 0], ts, atol=1e-8)

    def test_zero_everything(self, rng):
        g = TimeGrid.uniform(0, 1, 6)
        sys = random_ltv(rng, g, nx=2, nd=2, ne=2, ny=1, nu=1)
        res = simulate(sys)
        assert np.all(res.e.values == 0) and np.all(res.y.values == 0)

    def test_exponential_decay(self):
        g = TimeGrid.uniform(0, 1, 11)
        sys = LtvSystem(g, A=-np.eye(1), Ce=np.eye(1))
        res = simulate(sys, x0=[1.0])
        np.testing.assert_allclose(
            res.e.values[:, 0], np.exp(-res.e.grid.points), atol=1e-8
        )

    def test_linearity(self, rng):
        g = TimeGrid.uniform(0, 1, 9)
        sys = random_ltv(rng, g, nx=3, nd=2, ne=2)
        d1 = Signal(g, rng.standard_normal((9, 2)))
        d2 = Signal(g, rng.standard_normal((9, 2)))
        x1 = rng.standard_normal(3)
        x2 = rng.standard_normal(3)
        a, b = 1.7, -0.6
        r1 = simulate(sys, x0=x1, d=d1)
        r2 = simulate(sys, x0=x2, d=d2)
        r = simulate(sys, x0=a * x1 + b * x2, d=Signal(g, a * d1.values + b * d2.values))
        np.testing.assert_allclose(
            r.e.values, a * r1.e.values + b * r2.e.values, atol=1e-6
        )

    def test_divergence_reports_escape_time(self):
        g = TimeGrid.uniform(0, 1, 5)
        sys = LtvSystem(g, A=40.0 * np.eye(1), Ce=np.eye(1))
        with pytest.raises(DivergenceError) as exc:
            simulate(sys, x0=[1.0])
        assert exc.value.escape_time is not None
        assert 0 < exc.value.escape_time <= 1.0

    def test_zoh_coefficients_integrate_piecewise(self):
        # A jumps from 0 to -1 at t=1; x0=1, no inputs
        g = TimeGrid(np.array([0.0, 1.0, 2.0]))
        A = np.array([[[0.0]], [[-1.0]], [[-1.0]]])
        sys = LtvSystem(g, interp="zoh", A=A, Ce=np.eye(1))
        res = simulate(sys, x0=[1.0])
        ts = res.e.grid.points
        expected = np.where(ts <= 1.0, 1.0, np.exp(-(ts - 1.0)))
        np.testing.assert_allclose(res.e.values[:, 0], expected, atol=1e-7)

    def test_static_system(self):
        g = TimeGrid.uniform(0, 1, 5)
        sys = LtvSystem(
            g, dims={"x": 0, "d": 1, "e": 1}, Ded=2.0 * np.ones((1, 1))
        )
        res = simulate(sys, d=Signal.constant(g, 3.0))
        np.testing.assert_allclose(res.e.values, 6.0)


class TestLftLower:
    def test_zero_gain_controller_is_open_loop(self, rng):
        g = TimeGrid.uniform(0, 1, 7)
        sys = random_ltv(rng, g, nx=2, nd=1, ne=1, nu=1, ny=1)
        k = LtvSystem(g, dims={"x": 0, "d": 1, "e": 1})
        cl = lft_lower(sys, k)
        d = Signal(g, rng.standard_normal((7, 1)))
        r_open = simulate(sys, d=d)   # u defaults to zero
        r_cl = simulate(cl, d=d)
        np.testing.assert_allclose(r_cl.e.values, r_open.e.values, atol=1e-9)

    def test_static_algebraic_loop(self):
        # G: y = u + d, e = y;  K: u = -0.5 y  =>  e = (2/3) d
        g = TimeGrid.uniform(0, 1, 5)
        G = LtvSystem(
            g, dims={"x": 0, "d": 1, "u": 1, "e": 1, "y": 1},
            Ded=np.ones((1, 1)), Deu=np.ones((1, 1)),
            Dyd=np.ones((1, 1)), Dyu=np.ones((1, 1)),
        )
        K = LtvSystem(g, dims={"x": 0, "d": 1, "e": 1}, Ded=-0.5 * np.ones((1, 1)))
        cl = lft_lower(G, K)
        res = simulate(cl, d=Signal.constant(g, 1.0))
        np.testing.assert_allclose(res.e.values, 2.0 / 3.0, atol=1e-12)

    def test_state_concatenation(self, rng):
        g = TimeGrid.uniform(0, 1, 5)
        sys = random_ltv(rng, g, nx=3, nd=1, ne=1, nu=1, ny=1)
        k = random_ltv(rng, g, nx=2, nd=1, ne=1)
        assert lft_lower(sys, k).nx == 5

    def test_singular_loop_raises(self):
        g = TimeGrid.uniform(0, 1, 3)
        G = LtvSystem(
            g, dims={"x": 0, "d": 1, "u": 1, "e": 1, "y": 1},
            Ded=np.ones((1, 1)), Deu=np.ones((1, 1)),
            Dyd=np.ones((1, 1)), Dyu=np.ones((1, 1)),
        )
        K = LtvSystem(g, dims={"x": 0, "d": 1, "e": 1}, Ded=np.ones((1, 1)))
        with pytest.raises(WellPosednessError):
            lft_lower(G, K)

    def test_matches_coupled_ode(self, rng):
        g = TimeGrid.uniform(0, 1.5, 31)
        G = random_ltv(rng, g, nx=3, nd=2, ne=2, nu=1, ny=2, scale=0.8)
        K = random_ltv(rng, g, nx=2, nd=2, ne=1, scale=0.5)
        cl = lft_lower(G, K)

        def dfun(t):
            return np.array([np.sin(3 * t), np.cos(2 * t)])

        res = simulate(cl, d=dfun, cfg=SimConfig(rtol=1e-10, atol=1e-12))

        # independent coupled integration of plant + controller
        names_g = ["A", "Bd", "Bu", "Ce", "Ded", "Deu", "Cy", "Dyd", "Dyu"]
        bg = {n: G.mf(n) for n in names_g}
        bk = {n: K.mf(n) for n in ("A", "Bd", "Ce", "Ded")}

        def rhs(t, z):
            xg, xk = z[:3], z[3:]
            dt = dfun(t)
            num = bk["Ce"](t) @ xk + bk["Ded"](t) @ (
                bg["Cy"](t) @ xg + bg["Dyd"](t) @ dt
            )
            u = np.linalg.solve(np.eye(1) - bk["Ded"](t) @ bg["Dyu"](t), num)
            y = bg["Cy"](t) @ xg + bg["Dyd"](t) @ dt + bg["Dyu"](t) @ u
            dxg = bg["A"](t) @ xg + bg["Bd"](t) @ dt + bg["Bu"](t) @ u
            dxk = bk["A"](t) @ xk + bk["Bd"](t) @ y
            return np.concatenate([dxg, dxk])

        sol = solve_ivp(rhs, (0, 1.5), np.zeros(5), rtol=1e-10, atol=1e-12,
                        t_eval=res.state.grid.points)
        err = np.max(np.abs(sol.y.T - res.state.values))
        ref = max(np.max(np.abs(sol.y)), 1e-9)
        assert err / ref < 1e-6


class TestLftUpper:
    def test_zero_delta_is_nominal(self, rng):
        g = TimeGrid.uniform(0, 1, 9)
        sys = random_ltv(rng, g, nx=2, nw=1, nv=1, nd=1, ne=1)
        cl = lft_upper(sys, 0.0)
        d = Signal(g, rng.standard_normal((9, 1)))
        r_nom = simulate(sys, d=d)  # w defaults to zero
        r_cl = simulate(cl, d=d)
        np.testing.assert_allclose(r_cl.e.values, r_nom.e.values, atol=1e-9)

    def test_constant_delta_shifts_pole(self):
        # xdot = a x + w, v = x, w = c v  ->  xdot = (a + c) x
        g = TimeGrid.uniform(0, 1, 11)
        a, c = -1.0, 0.4
        sys = LtvSystem(
            g, A=a * np.eye(1), Bw=np.eye(1), Cv=np.eye(1), Ce=np.eye(1)
        )
        cl = lft_upper(sys, c)
        res = simulate(cl, x0=[1.0])
        np.testing.assert_allclose(
            res.e.values[:, 0], np.exp((a + c) * res.e.grid.points), atol=1e-8
        )

    def test_unexcited_loop_stays_zero(self, rng):
        g = TimeGrid.uniform(0, 1, 9)
        sys = random_ltv(rng, g, nx=2, nw=2, nv=2, nd=1, ne=1)
        delta = Signal(g, rng.uniform(-1, 1, size=(9, 2)))
        cl = lft_upper(sys, delta)
        res = simulate(cl)
        assert np.allclose(res.e.values, 0.0)


class TestSerialization:
    def test_roundtrip(self, rng, tmp_path):
        g = TimeGrid.uniform(0, 2, 9)
        sys = random_ltv(rng, g, nx=2, nw=1, nv=1, nd=2, ne=1, nu=1, ny=1)
        save_system(sys, str(tmp_path / "sys"))
        back = load_system(str(tmp_path / "sys"))
        assert back.dims == sys.dims
        for name in ("A", "Bw", "Bd", "Bu", "Cv", "Ce", "Cy"):
            np.testing.assert_allclose(back.block(name), sys.block(name), atol=1e-12)
        np.testing.assert_allclose(back.grid.points, sys.grid.points)
