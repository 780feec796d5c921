import numpy as np
import pytest

from ltvsyn import LtvSystem, Signal, TimeGrid, l2norm, lft_upper, simulate
from ltvsyn.wcgain import (
    WcGainSettings,
    as_performance_only,
    assemble_dlmi,
    rde_refine,
    solve_feasibility,
    verify_certificate,
    wc_gain,
)

from conftest import random_ltv
from oracles import rde_gain_bound


def scalar_benchmark(T=5.0, n=51, a=-1.0):
    """Bundled uncertain analysis loop (x plus pseudo-state)."""
    from ltvsyn.benchmarks import scalar_uncertain_loop

    return scalar_uncertain_loop(horizon=(0.0, T), n=n, a=a)[0]


BENCH_Q = np.diag([1e6, 1.0])


class TestAssembleDlmi:
    def test_zero_output_blocks(self):
        grid = TimeGrid.uniform(0, 1, 11)
        sys = LtvSystem(
            grid, A=-np.eye(1), Bw=np.eye(1), Bd=np.eye(1), Cv=np.eye(1),
            dims={"x": 1, "w": 1, "v": 1, "d": 1, "e": 0, "u": 0, "y": 0},
        )
        p = assemble_dlmi(sys, [1.0], np.eye(1))
        assert np.all(p.Qh == 0) and np.all(p.S == 0) and np.all(p.R0 == 0)
        np.testing.assert_allclose(p.Dsel, np.diag([0.0, 1.0]))

    def test_multiplier_term_block_algebra(self):
        # v = x exactly: unit-weight term is diag(b^2, -1, 0) on (x, w, d)
        grid = TimeGrid.uniform(0, 1, 5)
        sys = LtvSystem(
            grid, A=-np.eye(1), Bw=np.eye(1), Bd=np.eye(1), Cv=np.eye(1),
            Ce=np.eye(1),
        )
        b = 0.7
        p = assemble_dlmi(sys, [b], np.eye(1))
        lam = 1.3
        expected = np.diag([b * b * lam, -lam, 0.0])
        np.testing.assert_allclose(lam * p.Mterm[0, 0], expected, atol=1e-12)

    def test_qhat_psd(self, rng):
        grid = TimeGrid.uniform(0, 2, 9)
        sys = random_ltv(rng, grid, nx=3, nw=1, nv=1, nd=2, ne=2)
        p = assemble_dlmi(sys, [0.5], np.eye(3))
        for Qk in p.Qh:
            assert np.linalg.eigvalsh(Qk).min() >= -1e-12

    def test_rejects_open_loop(self, rng):
        grid = TimeGrid.uniform(0, 1, 5)
        sys = random_ltv(rng, grid, nx=1, nd=1, ne=1, nu=1, ny=1)
        with pytest.raises(ValueError):
            assemble_dlmi(sys, [], np.eye(1))


class TestSolveFeasibility:
    def test_zero_system_feasible_with_tiny_storage(self):
        grid = TimeGrid.uniform(0, 1, 11)
        sys = LtvSystem(
            grid, A=np.zeros((1, 1)), Bw=np.zeros((1, 1)),
            Bd=np.zeros((1, 1)), Cv=np.zeros((1, 1)), Ce=np.zeros((1, 1)),
        )
        p = assemble_dlmi(sys, [1.0], np.eye(1))
        pt = solve_feasibility(p, gamma=0.5)
        assert pt is not None
        margins = verify_certificate(p, pt)
        assert margins["lmi_slack"] >= -1e-6
        assert margins["terminal"] >= -1e-9
        assert margins["ic_gap"] >= -1e-9

    def test_uncertainty_free_boundary_matches_rde_oracle(self, rng):
        grid = TimeGrid.uniform(0, 2, 21)
        sys = random_ltv(rng, grid, nx=2, nw=0, nv=0, nd=1, ne=1)
        Q = 1e6 * np.eye(2)
        res = wc_gain(sys, [], Q)
        oracle = rde_gain_bound(sys, Q)
        assert res.gamma == pytest.approx(oracle, rel=0.02)

    def test_frozen_uncertainty_lower_bounds(self):
        sys = scalar_benchmark()
        res = wc_gain(sys, [0.5], BENCH_Q)
        frozen = lft_upper(sys, 0.5)
        lower = rde_gain_bound(frozen, BENCH_Q)
        assert res.gamma >= lower * (1 - 1e-3)


class TestRdeRefine:
    def test_reproduces_tangent_solution(self):
        # integrator with unit disturbance: the storage equation is the
        # tangent Riccati equation (up to the eps regularization)
        grid = TimeGrid.uniform(0, 1, 41)
        sys = LtvSystem(
            grid, A=np.zeros((1, 1)), Bd=np.eye(1), Ce=np.eye(1),
            dims={"x": 1, "w": 0, "v": 0, "d": 1, "e": 1, "u": 0, "y": 0},
        )
        p = assemble_dlmi(sys, [], 1e6 * np.eye(1))
        gamma = 1.0
        pt = rde_refine(p, [], gamma)
        assert pt is not None
        expected = np.tan(1.0 - pt.times)
        assert np.max(np.abs(pt.dense[:, 0, 0] - expected)) < 1e-5
        margins = verify_certificate(p, pt)
        assert margins["terminal"] == pytest.approx(0.0, abs=1e-12)
        assert margins["lmi_slack"] >= -1e-6

    def test_unavailable_when_input_block_indefinite(self):
        # gamma too small makes R + Dv'Mv Dv - Mw indefinite
        sys = scalar_benchmark()
        p = assemble_dlmi(sys, [0.5], BENCH_Q)
        assert rde_refine(p, [1e-6], 1e-6) is None

    def test_refined_level_not_above_grid_level(self):
        sys = scalar_benchmark()
        res = wc_gain(sys, [0.5], BENCH_Q)
        for entry in res.history:
            if "gamma_rde" in entry and "gamma_lmi" in entry:
                assert entry["gamma_rde"] <= entry["gamma_lmi"] * 1.05


class TestWcGain:
    def test_zero_bound_reduces_to_nominal(self):
        sys = scalar_benchmark()
        res = wc_gain(sys, [0.0], BENCH_Q)
        from ltvsyn.wcgain import strip_uncertainty

        oracle = rde_gain_bound(strip_uncertainty(sys), BENCH_Q)
        assert res.gamma == pytest.approx(oracle, rel=0.02)

    def test_monotone_in_uncertainty_bound(self):
        sys = scalar_benchmark()
        gams = [wc_gain(sys, [b], BENCH_Q).gamma for b in (0.0, 0.25, 0.5)]
        assert gams[0] <= gams[1] * (1 + 1e-6)
        assert gams[1] <= gams[2] * (1 + 1e-6)

    def test_certificate_margins_nonnegative(self):
        sys = scalar_benchmark()
        res = wc_gain(sys, [0.5], BENCH_Q)
        assert res.margins["lmi_slack"] >= -1e-6
        assert res.margins["terminal"] >= -1e-6
        assert res.margins["ic_gap"] >= -1e-6

    def test_sampled_uncertainties_never_exceed_bound(self, rng):
        sys = scalar_benchmark()
        res = wc_gain(sys, [0.5], BENCH_Q)
        grid = sys.grid
        worst = 0.0
        for k in range(50):
            if k % 2 == 0:
                delta = Signal.constant(grid, rng.uniform(-0.5, 0.5))
            else:
                steps = rng.uniform(-0.5, 0.5, size=5)
                idx = np.minimum((grid.points // 1.0).astype(int), 4)
                delta = Signal(grid, steps[idx][:, None])
            cl = lft_upper(sys, delta)
            d = Signal(grid, rng.standard_normal((grid.n, 1)))
            x0 = np.array([0.0, rng.choice([-1.0, 1.0])])
            r = simulate(cl, x0=x0, d=d)
            ratio = l2norm(r.e) / np.sqrt(
                l2norm(d) ** 2 + x0 @ BENCH_Q @ x0
            )
            worst = max(worst, ratio)
        assert worst <= res.gamma * (1 + 1e-6)


class TestPerformanceView:
    def test_all_channel_gain_view(self, rng):
        grid = TimeGrid.uniform(0, 1, 9)
        sys = random_ltv(rng, grid, nx=2, nw=1, nv=1, nd=1, ne=1)
        merged = as_performance_only(sys)
        assert merged.nd == 2 and merged.ne == 2 and merged.nw == 0
        from ltvsyn import SimConfig

        d = Signal(grid, rng.standard_normal((grid.n, 2)))
        cfg = SimConfig(rtol=1e-11, atol=1e-13)
        r1 = simulate(sys, w=Signal(grid, d.values[:, :1]),
                      d=Signal(grid, d.values[:, 1:]), cfg=cfg)
        r2 = simulate(merged, d=d, cfg=cfg)
        np.testing.assert_allclose(
            np.hstack([r1.v.values, r1.e.values]), r2.e.values, atol=1e-8
        )
