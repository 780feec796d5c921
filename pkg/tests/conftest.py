import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260811)


def toy_uncertain_gp(a=-1.0, b_rho=0.5):
    """Bundled two-state benchmark plant: (plant, b_rho, pseudo_index)."""
    from ltvsyn.benchmarks import toy_uncertain_plant

    return toy_uncertain_plant(a=a, b_rho=b_rho)


def freeze_uncertainty(plant, b_rho):
    """Scale the w input columns by diag(b): unit w = worst frozen offset."""
    b = np.atleast_1d(np.asarray(b_rho, float))
    if b.size == 1:
        b = np.full(plant.nw, b[0])
    Bf = np.diag(b)[None]
    return plant.replace_blocks(
        Bw=plant.block("Bw") @ Bf,
        Dew=plant.block("Dew") @ Bf,
        Dyw=plant.block("Dyw") @ Bf,
        Dvw=plant.block("Dvw") @ Bf,
    )


def random_ltv(rng, grid, nx=3, nw=0, nd=1, nu=0, nv=0, ne=1, ny=0, scale=1.0):
    """Random smooth time-varying system, mildly stable A."""
    from ltvsyn import LtvSystem

    def smooth(r, c):
        if r == 0 or c == 0:
            return np.zeros((grid.n, r, c))
        base = rng.standard_normal((r, c))
        wob = rng.standard_normal((r, c))
        freq = rng.uniform(0.5, 2.0)
        t = grid.points[:, None, None]
        return scale * (base + 0.4 * wob * np.sin(freq * t))

    A = smooth(nx, nx) - 2.0 * np.eye(nx)
    return LtvSystem(
        grid, A=A, Bw=smooth(nx, nw), Bd=smooth(nx, nd), Bu=smooth(nx, nu),
        Cv=smooth(nv, nx), Dvw=smooth(nv, nw), Dvd=smooth(nv, nd), Dvu=smooth(nv, nu),
        Ce=smooth(ne, nx), Dew=smooth(ne, nw), Ded=smooth(ne, nd), Deu=smooth(ne, nu),
        Cy=smooth(ny, nx), Dyw=smooth(ny, nw), Dyd=smooth(ny, nd), Dyu=smooth(ny, nu),
    )
