"""Finite-horizon robust LTV control synthesis along uncertain trajectories."""

from .ltvcore import (
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

__version__ = "0.1.0"
