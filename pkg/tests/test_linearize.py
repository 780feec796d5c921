import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ltvsyn import LtvSystem, Signal, SimConfig, TimeGrid, l2norm, lft_upper, simulate
from ltvsyn.errors import LinearizationError, TrajectoryError
from ltvsyn.linearize import (
    FdConfig,
    NonlinearModel,
    PerturbationSet,
    Trajectory,
    extend_with_pseudostate,
    jacobians_along,
    nominal_ltv,
    trajectory_residual,
)


def _traj(grid, model, x, d=None, u=None, rho=None):
    z = lambda n: Signal.constant(grid, np.zeros(n))
    return Trajectory(
        grid=grid,
        x=x,
        d=d or z(model.n_d),
        u=u or z(model.n_u),
        rho=rho or z(model.n_rho),
    )


def linear_model(A0, B0):
    n, m = A0.shape[0], B0.shape[1]
    return NonlinearModel(
        f=lambda x, d, u, r, t: A0 @ x + B0 @ d,
        h=lambda x, d, u, r, t: x,
        g=lambda x, d, u, r, t: x,
        n_x=n, n_d=m, n_u=0, n_rho=0, n_e=n, n_y=n,
    )


class TestJacobians:
    def test_linear_model_recovers_matrices(self, rng):
        A0 = rng.standard_normal((3, 3))
        B0 = rng.standard_normal((3, 2))
        model = linear_model(A0, B0)
        grid = TimeGrid.uniform(0, 1, 9)
        # x_T = 0, d_T = 0 solves the model exactly
        traj = _traj(grid, model, Signal.constant(grid, np.zeros(3)))
        jacs = jacobians_along(model, traj)
        np.testing.assert_allclose(jacs["A"], np.tile(A0, (9, 1, 1)), atol=1e-6)
        np.testing.assert_allclose(jacs["Bd"], np.tile(B0, (9, 1, 1)), atol=1e-6)

    def test_quadratic_state_dependence(self):
        # f = x^2 + d along x_T(t) = t (d_T = 1 - t^2 makes it a solution)
        model = NonlinearModel(
            f=lambda x, d, u, r, t: x ** 2 + d,
            h=lambda x, d, u, r, t: x,
            g=lambda x, d, u, r, t: x,
            n_x=1, n_d=1, n_u=0, n_rho=0, n_e=1, n_y=1,
        )
        grid = TimeGrid.uniform(0, 1, 21)
        traj = _traj(
            grid, model,
            x=Signal(grid, grid.points[:, None]),
            d=Signal(grid, (1.0 - grid.points ** 2)[:, None]),
        )
        jacs = jacobians_along(model, traj)
        np.testing.assert_allclose(
            jacs["A"][:, 0, 0], 2.0 * grid.points, atol=1e-6
        )

    def test_exact_on_quadratic_models(self, rng):
        # central differences are exact for polynomials of degree <= 2
        n = 2
        Q = rng.standard_normal((n, n, n)) * 0.3
        A0 = rng.standard_normal((n, n))

        def f(x, d, u, r, t):
            return A0 @ x + np.einsum("ijk,j,k->i", Q, x, x)

        model = NonlinearModel(
            f=f, h=lambda x, d, u, r, t: x, g=lambda x, d, u, r, t: x,
            n_x=n, n_d=0, n_u=0, n_rho=0, n_e=n, n_y=n,
        )
        grid = TimeGrid.uniform(0, 0.5, 5)
        x_T = Signal.constant(grid, np.array([0.3, -0.2]))
        traj = _traj(grid, model, x_T)
        jacs = jacobians_along(
            model, traj, FdConfig(check_residual=False)
        )
        xa = x_T.values[0]
        expected = A0 + np.einsum("ijk,k->ij", Q, xa) + np.einsum("ijk,j->ik", Q, xa)
        np.testing.assert_allclose(jacs["A"][0], expected, atol=1e-7)

    def test_residual_gate(self):
        model = NonlinearModel(
            f=lambda x, d, u, r, t: -x,
            h=lambda x, d, u, r, t: x,
            g=lambda x, d, u, r, t: x,
            n_x=1, n_d=0, n_u=0, n_rho=0, n_e=1, n_y=1,
        )
        grid = TimeGrid.uniform(0, 1, 11)
        bad = _traj(grid, model, Signal(grid, grid.points[:, None]))  # not a solution
        assert trajectory_residual(model, bad) > 0.5
        with pytest.raises(TrajectoryError):
            jacobians_along(model, bad)

    def test_nonfinite_model_output(self):
        model = NonlinearModel(
            f=lambda x, d, u, r, t: np.sqrt(x),  # NaN for perturbed x < 0
            h=lambda x, d, u, r, t: x,
            g=lambda x, d, u, r, t: x,
            n_x=1, n_d=0, n_u=0, n_rho=0, n_e=1, n_y=1,
        )
        grid = TimeGrid.uniform(0, 1, 5)
        traj = _traj(grid, model, Signal.constant(grid, [0.0]))
        with pytest.raises(LinearizationError) as exc:
            jacobians_along(model, traj, FdConfig(check_residual=False))
        assert exc.value.argument == "x"


def _pert_model():
    # xdot = -x + rho (1 + x) + d : trajectory x_T = 0, rho_T = 0, d_T = 0
    return NonlinearModel(
        f=lambda x, d, u, r, t: -x + r * (1.0 + x) + d,
        h=lambda x, d, u, r, t: x,
        g=lambda x, d, u, r, t: x,
        n_x=1, n_d=1, n_u=0, n_rho=1, n_e=1, n_y=1,
    )


def _simulate_nonlinear(model, traj, d_fun, rho_fun, t_span, x0):
    def rhs(t, x):
        return np.atleast_1d(
            model.f(x, np.atleast_1d(d_fun(t)), np.zeros(model.n_u),
                    np.atleast_1d(rho_fun(t)), t)
        )

    return solve_ivp(rhs, t_span, x0, rtol=1e-10, atol=1e-12, dense_output=True)


class TestNominalLtv:
    def test_structure(self, rng):
        model = _pert_model()
        grid = TimeGrid.uniform(0, 2, 11)
        traj = _traj(grid, model, Signal.constant(grid, [0.0]))
        sys = nominal_ltv(jacobians_along(model, traj))
        assert sys.nw == 0 and sys.nv == 0
        assert sys.nx == 1

    def test_first_order_accuracy_sweep(self):
        model = NonlinearModel(
            f=lambda x, d, u, r, t: -x + 0.4 * x ** 2 + d,
            h=lambda x, d, u, r, t: x,
            g=lambda x, d, u, r, t: x,
            n_x=1, n_d=1, n_u=0, n_rho=0, n_e=1, n_y=1,
        )
        grid = TimeGrid.uniform(0, 2, 21)
        traj = _traj(grid, model, Signal.constant(grid, [0.0]))
        sys = nominal_ltv(jacobians_along(model, traj))

        def mismatch(amp):
            d_fun = lambda t: amp * np.sin(2 * t)
            lin = simulate(sys, d=lambda t: np.atleast_1d(d_fun(t)),
                           cfg=SimConfig(rtol=1e-10, atol=1e-12))
            nl = _simulate_nonlinear(model, traj, d_fun, lambda t: 0.0,
                                     (0, 2), [0.0])
            diff = nl.sol(lin.state.grid.points)[0] - lin.state.values[:, 0]
            return l2norm(Signal(lin.state.grid, diff[:, None]))

        m1, m2 = mismatch(0.2), mismatch(0.1)
        assert m1 / m2 == pytest.approx(4.0, rel=0.25)


class TestExtendWithPseudostate:
    def test_dimensions_and_structure(self, rng):
        model = _pert_model()
        grid = TimeGrid.uniform(0, 2, 11)
        traj = _traj(grid, model, Signal.constant(grid, [0.0]))
        plant = extend_with_pseudostate(
            jacobians_along(model, traj), PerturbationSet([0.5])
        )
        sys = plant.sys
        assert sys.nx == 2 and sys.nv == 1 and sys.nw == 1
        # pseudo-state row and column of A are exactly zero
        assert np.all(sys.block("A")[:, 1, :] == 0)
        assert np.all(sys.block("A")[:, :, 1] == 0)
        # v selects the pseudo-state
        np.testing.assert_allclose(sys.block("Cv")[:, :, 1], 1.0)
        assert np.all(sys.block("Cv")[:, :, 0] == 0)

    def test_constant_drive_integrates(self):
        model = _pert_model()
        grid = TimeGrid.uniform(0, 2, 11)
        traj = _traj(grid, model, Signal.constant(grid, [0.0]))
        jacs = jacobians_along(model, traj)
        jacs.blocks["A"][:] = 0.0  # isolate the drive: xdot = E w
        plant = extend_with_pseudostate(jacs, PerturbationSet([0.5]))
        c = 0.3
        cl = lft_upper(plant.sys, c)
        res = simulate(cl, x0=[0.0, 1.0])
        np.testing.assert_allclose(
            res.e.values[:, 0], c * res.e.grid.points, atol=1e-8
        )

    def test_zero_influence_reduces_to_nominal(self, rng):
        model = _pert_model()
        grid = TimeGrid.uniform(0, 2, 11)
        traj = _traj(grid, model, Signal.constant(grid, [0.0]))
        jacs = jacobians_along(model, traj)
        jacs.blocks["E"][:] = 0.0
        jacs.blocks["Fe"][:] = 0.0
        jacs.blocks["Fy"][:] = 0.0
        plant = extend_with_pseudostate(jacs, PerturbationSet([0.5]))
        nom = nominal_ltv(jacs)
        d = lambda t: [np.sin(t)]
        cfg = SimConfig(rtol=1e-11, atol=1e-13)
        r_ext = simulate(lft_upper(plant.sys, 0.4), d=d, x0=[0.0, 1.0], cfg=cfg)
        r_nom = simulate(nom, d=d, cfg=cfg)
        np.testing.assert_allclose(r_ext.e.values, r_nom.e.values, atol=1e-9)

    def test_zero_pseudo_state_matches_nominal_for_any_delta(self, rng):
        model = _pert_model()
        grid = TimeGrid.uniform(0, 2, 11)
        traj = _traj(grid, model, Signal.constant(grid, [0.0]))
        jacs = jacobians_along(model, traj)
        plant = extend_with_pseudostate(jacs, PerturbationSet([0.5]))
        nom = nominal_ltv(jacs)
        d = lambda t: [np.cos(t)]
        delta = Signal(grid, 0.5 * np.sin(3 * grid.points)[:, None])
        cfg = SimConfig(rtol=1e-11, atol=1e-13)
        r_ext = simulate(lft_upper(plant.sys, delta), d=d, x0=[0.0, 0.0], cfg=cfg)
        r_nom = simulate(nom, d=d, cfg=cfg)
        np.testing.assert_allclose(r_ext.e.values, r_nom.e.values, atol=1e-9)

    def test_first_order_match_of_parameter_response(self):
        model = _pert_model()
        grid = TimeGrid.uniform(0, 2, 21)
        traj = _traj(grid, model, Signal.constant(grid, [0.0]))
        plant = extend_with_pseudostate(
            jacobians_along(model, traj), PerturbationSet([0.5])
        )

        def mismatch(amp):
            rho_fun = lambda t: amp * (0.6 + 0.4 * np.sin(t))
            delta = Signal.from_callable(grid, rho_fun)
            lin = simulate(lft_upper(plant.sys, delta), x0=[0.0, 1.0],
                           cfg=SimConfig(rtol=1e-10, atol=1e-12))
            nl = _simulate_nonlinear(model, traj, lambda t: 0.0, rho_fun,
                                     (0, 2), [0.0])
            diff = nl.sol(lin.state.grid.points)[0] - lin.e.values[:, 0]
            return l2norm(Signal(lin.state.grid, diff[:, None]))

        m1, m2 = mismatch(0.2), mismatch(0.1)
        assert m1 / m2 == pytest.approx(4.0, rel=0.3)

    def test_bounds_validation(self):
        with pytest.raises(ValueError):
            PerturbationSet([-1.0])
        with pytest.raises(ValueError):
            PerturbationSet([np.inf])
