"""Integral-quadratic-constraint multipliers and scaled-plant construction.

Only static (identity-filter), constant-in-time multipliers are instantiated:
the norm-bounded factory produces M = diag(M_v, -M_w) with M_v = diag(b^2 l),
M_w = diag(l).  For a gain-bounded operator w = Delta(v), ||Delta|| <= b, the
filtered signal z = (v, w) then satisfies  integral z' M z dt >= 0.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import FactorizationError, ParameterError
from .ltvcore import LtvSystem

__all__ = ["IqcSpec", "ScaledPlant", "norm_bounded_iqc", "scale_plant", "psd_sqrt"]

_EIG_FLOOR = 1e-12


def psd_sqrt(M, inverse=False):
    """Symmetric square root via eigendecomposition, with an eigenvalue floor.

    Multiplier matrices come out of an SDP and may be nearly singular; the
    floor keeps the (inverse) root finite and symmetric.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("need a square matrix")
    if M.shape[0] == 0:
        return M.copy()
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    if np.any(w <= 0.0):
        raise FactorizationError(
            f"matrix not positive definite (min eigenvalue {w.min():.3g})"
        )
    w = np.maximum(w, _EIG_FLOOR)
    root = np.power(w, -0.5 if inverse else 0.5)
    return (V * root) @ V.T


@dataclass(frozen=True)
class IqcSpec:
    """Static multiplier: identity filter plus M = diag(M_v, -M_w), M_v, M_w > 0."""

    M_v: np.ndarray
    M_w: np.ndarray
    b: np.ndarray   # certified per-channel norm bound

    def __post_init__(self):
        Mv = np.atleast_2d(np.asarray(self.M_v, dtype=float))
        Mw = np.atleast_2d(np.asarray(self.M_w, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        for name, M in (("M_v", Mv), ("M_w", Mw)):
            if M.shape[0] != M.shape[1]:
                raise ParameterError(f"{name} must be square")
            if M.shape[0] and np.linalg.eigvalsh(0.5 * (M + M.T)).min() <= 0:
                raise ParameterError(f"{name} must be positive definite")
        object.__setattr__(self, "M_v", Mv)
        object.__setattr__(self, "M_w", Mw)
        object.__setattr__(self, "b", b)

    @property
    def n_v(self) -> int:
        return self.M_v.shape[0]

    @property
    def n_w(self) -> int:
        return self.M_w.shape[0]

    @property
    def M(self) -> np.ndarray:
        """Combined filter-output matrix diag(M_v, -M_w)."""
        n = self.n_v + self.n_w
        out = np.zeros((n, n))
        out[: self.n_v, : self.n_v] = self.M_v
        out[self.n_v:, self.n_v:] = -self.M_w
        return out

    @staticmethod
    def identity(n: int) -> "IqcSpec":
        return IqcSpec(M_v=np.eye(n), M_w=np.eye(n), b=np.ones(n))

    def save(self, path: str) -> None:
        os.makedirs(path, exist_ok=True)
        np.savetxt(os.path.join(path, "M_v.csv"), np.atleast_2d(self.M_v),
                   delimiter=",")
        np.savetxt(os.path.join(path, "M_w.csv"), np.atleast_2d(self.M_w),
                   delimiter=",")
        with open(os.path.join(path, "manifest.json"), "w") as fh:
            json.dump(
                {"kind": "iqc-multiplier", "filter": "identity",
                 "n_v": self.n_v, "n_w": self.n_w, "b": self.b.tolist()},
                fh, indent=2, sort_keys=True,
            )


def norm_bounded_iqc(b, lam, n: int | None = None) -> IqcSpec:
    """Multiplier for norm-bounded uncertainties: M_v = diag(b^2 l), M_w = diag(l).

    b and lam may be scalars (replicated over n channels) or per-channel
    vectors.  Requires b > 0 and lam > 0; b = 0 would make M_v singular.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if n is not None:
        if b.size == 1:
            b = np.full(n, b[0])
        if lam.size == 1:
            lam = np.full(n, lam[0])
    if b.size != lam.size:
        raise ParameterError("b and lam must have matching lengths")
    if np.any(lam <= 0):
        raise ParameterError("multiplier weights must be positive")
    if np.any(b <= 0):
        raise ParameterError("norm bound must be positive (b = 0 degenerates M_v)")
    return IqcSpec(M_v=np.diag(b ** 2 * lam), M_w=np.diag(lam), b=b)


@dataclass(frozen=True)
class ScaledPlant:
    """Plant with normalized uncertainty/performance channels.

    v is post-multiplied by M_v^{1/2}, w pre-multiplied by M_w^{-1/2} and the
    disturbance input divided by the previous worst-case bound; control and
    measurement channels are untouched.
    """

    sys: LtvSystem
    M_v: np.ndarray
    M_w: np.ndarray
    gamma_iqc: float


def scale_plant(plant: LtvSystem, iqc: IqcSpec, gamma_iqc: float) -> ScaledPlant:
    if gamma_iqc <= 0:
        raise ParameterError("gamma_iqc must be positive")
    if iqc.n_v != plant.nv or iqc.n_w != plant.nw:
        raise ValueError("multiplier dimensions do not match plant channels")
    sv = psd_sqrt(iqc.M_v)               # scales the v rows
    sw = psd_sqrt(iqc.M_w, inverse=True)  # scales the w columns
    gd = 1.0 / gamma_iqc

    blocks = {}
    for name in ("Cv", "Dvw", "Dvd", "Dvu"):
        blocks[name] = sv[None] @ plant.block(name)
    for name in ("Bw", "Dew", "Dyw"):
        blocks[name] = blocks.get(name, plant.block(name)) @ sw[None]
    blocks["Dvw"] = sv[None] @ plant.block("Dvw") @ sw[None]
    for name in ("Bd", "Ded", "Dyd"):
        blocks[name] = plant.block(name) * gd
    blocks["Dvd"] = sv[None] @ plant.block("Dvd") * gd
    scaled = plant.replace_blocks(**blocks)
    return ScaledPlant(sys=scaled, M_v=iqc.M_v.copy(), M_w=iqc.M_w.copy(),
                       gamma_iqc=float(gamma_iqc))


def unscale_plant(scaled: ScaledPlant) -> LtvSystem:
    """Inverse of scale_plant with the stored multipliers (round-trip check)."""
    inv_iqc_v = psd_sqrt(scaled.M_v, inverse=True)
    sw = psd_sqrt(scaled.M_w)
    plant = scaled.sys
    blocks = {}
    for name in ("Cv", "Dvw", "Dvd", "Dvu"):
        blocks[name] = inv_iqc_v[None] @ plant.block(name)
    for name in ("Bw", "Dew", "Dyw"):
        blocks[name] = blocks.get(name, plant.block(name)) @ sw[None]
    blocks["Dvw"] = inv_iqc_v[None] @ plant.block("Dvw") @ sw[None]
    for name in ("Bd", "Ded", "Dyd"):
        blocks[name] = plant.block(name) * scaled.gamma_iqc
    blocks["Dvd"] = inv_iqc_v[None] @ plant.block("Dvd") * scaled.gamma_iqc
    return plant.replace_blocks(**blocks)
