"""Small bundled benchmark plants used by the command-line demos and tests."""

import numpy as np

from .ltvcore import LtvSystem, TimeGrid

__all__ = ["toy_uncertain_plant", "scalar_uncertain_loop"]


def toy_uncertain_plant(horizon=(0.0, 4.0), n=41, a=-1.0, b_rho=0.5):
    """Generalized plant with one physical state plus the pseudo-state.

    Channels: w (1) uncertainty drive, d = (process, measurement noise),
    u (1) control; v = pseudo-state output, e = (state error, 0.3 u),
    y = state + 0.05 noise.  Returns (plant, b_rho, pseudo_index).
    """
    grid = TimeGrid.uniform(horizon[0], horizon[1], n)
    plant = LtvSystem(
        grid,
        A=np.array([[a, 0.0], [0.0, 0.0]]),
        Bw=np.array([[1.0], [0.0]]),
        Bd=np.array([[1.0, 0.0], [0.0, 0.0]]),
        Bu=np.array([[1.0], [0.0]]),
        Cv=np.array([[0.0, 1.0]]),
        Ce=np.array([[1.0, 0.0], [0.0, 0.0]]),
        Deu=np.array([[0.0], [0.3]]),
        Cy=np.array([[1.0, 0.0]]),
        Dyd=np.array([[0.0, 0.05]]),
    )
    return plant, b_rho, 1


def scalar_uncertain_loop(horizon=(0.0, 5.0), n=51, a=-1.0, b_rho=0.5):
    """Analysis benchmark: uncertain loop with both state and drive coupling.

    w = delta v, v = x + x_rho, |delta| <= b_rho: the offset excites the
    state through the pseudo-state and perturbs the pole.  Returns
    (system, b_rho, ic_weight).
    """
    grid = TimeGrid.uniform(horizon[0], horizon[1], n)
    sys = LtvSystem(
        grid,
        A=np.array([[a, 0.0], [0.0, 0.0]]),
        Bw=np.array([[1.0], [0.0]]),
        Bd=np.array([[1.0], [0.0]]),
        Cv=np.array([[1.0, 1.0]]),
        Ce=np.array([[1.0, 0.0]]),
    )
    return sys, b_rho, np.diag([1e6, 1.0])
