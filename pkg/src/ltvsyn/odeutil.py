"""Shared helpers for Riccati/ODE integration runs."""

import contextlib
import os

import numpy as np

__all__ = ["freeze_on_escape", "quiet_fortran_io"]


def freeze_on_escape(rhs, threshold):
    """Wrap an ODE RHS so the flow freezes once the norm threshold trips.

    Event root-finding is unreliable when a Riccati solution overflows within
    a single internal step, so the blow-up test lives in the RHS itself; the
    first trip time is reported through the returned state dict.
    """
    state = {"t": None}

    def guarded(t, z):
        if state["t"] is not None:
            return np.zeros_like(z)
        if not np.all(np.isfinite(z)) or (
            z.size and np.max(np.abs(z)) > threshold
        ):
            state["t"] = t
            return np.zeros_like(z)
        return rhs(t, z)

    return guarded, state


@contextlib.contextmanager
def quiet_fortran_io():
    """Silence fd-level stdout/stderr for the duration of a solver call.

    The Fortran core of LSODA prints step-size warnings straight to the
    process file descriptors while grinding into a blow-up; such runs are
    expected during bisection probes and their outcome is checked through
    the solver status instead.
    """
    import sys

    for stream in (sys.stdout, sys.stderr):
        try:
            stream.flush()
        except (OSError, ValueError):
            pass
    try:
        saved = [os.dup(fd) for fd in (1, 2)]
    except OSError:
        yield
        return
    try:
        devnull = os.open(os.devnull, os.O_WRONLY)
        for fd in (1, 2):
            os.dup2(devnull, fd)
        os.close(devnull)
        yield
    finally:
        for fd, s in zip((1, 2), saved):
            os.dup2(s, fd)
            os.close(s)
