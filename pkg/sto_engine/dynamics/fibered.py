"""
Gridded disintegration φ(z, x): nz fibers at z-midpoints (k + ½)/nz, each a
CircleDensity on nx nodes, together with the base-direction norms that
define the strong space and the admissible set.
"""
import logging
from dataclasses import dataclass

import numpy as np

from sto_engine.dynamics.densities import (
    CircleDensity,
    SignedCircleFunction,
    bv1_seminorm,
    bv2_seminorm,
    c2_sup,
    normalize,
    w1_rows,
    NORMALIZATION_TOL,
)
from sto_engine.dynamics.graphon import DEFAULT_RADII, integrated_oscillation, ball_cells
from sto_engine.errors import DomainError, ParameterError
from sto_engine.utils.io import read_binary, read_csv, write_binary, write_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FiberedDensity:
    """nz × nx table of fiber densities; row k lives at z_k = (k + ½)/nz."""

    rows: np.ndarray

    def __post_init__(self):
        arr = np.array(self.rows, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
            raise ParameterError(f"fibered density needs nz, nx >= 2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("fibered density values must be finite")
        if np.any(arr < 0):
            raise DomainError("fibered density values must be nonnegative")
        masses = arr.mean(axis=1)
        worst = float(np.max(np.abs(masses - 1.0)))
        if worst > NORMALIZATION_TOL:
            raise DomainError(f"row mass deviates from 1 by {worst:.3g}")
        arr.setflags(write=False)
        object.__setattr__(self, "rows", arr)

    @property
    def nz(self):
        return self.rows.shape[0]

    @property
    def nx(self):
        return self.rows.shape[1]

    @property
    def shape(self):
        return self.rows.shape

    @property
    def z_midpoints(self):
        return (np.arange(self.nz) + 0.5) / self.nz

    @property
    def x_nodes(self):
        return np.arange(self.nx) / self.nx

    def row(self, k):
        return CircleDensity(self.rows[k])

    def row_masses(self):
        return self.rows.mean(axis=1)


def from_rows(rows):
    """Build from raw nonnegative rows, normalizing each one."""
    rows = np.asarray(rows, dtype=float)
    return FiberedDensity(np.stack([normalize(r).values for r in rows]))


def uniform_fibered(nz, nx):
    if nz < 2 or nx < 2:
        raise ParameterError(f"nz and nx must be >= 2, got {nz}, {nx}")
    return FiberedDensity(np.ones((nz, nx)))


def _profile_row(source, nx):
    if isinstance(source, SignedCircleFunction):
        values = source.values
        if values.size != nx:
            raise ParameterError(f"profile row has {values.size} nodes, expected {nx}")
        return values
    if callable(source):
        return source(np.arange(nx) / nx)
    return np.asarray(source, dtype=float)


def make_profile(nz, nx, profile):
    """
    Sample a z-dependent profile at the z-midpoints. `profile(z)` returns a
    density, a callable of x, or an array of node values; each row is
    normalized.
    """
    if nz < 2 or nx < 2:
        raise ParameterError(f"nz and nx must be >= 2, got {nz}, {nx}")
    z = (np.arange(nz) + 0.5) / nz
    rows = [normalize(SignedCircleFunction(_profile_row(profile(zk), nx))).values for zk in z]
    return FiberedDensity(np.stack(rows))


def sinusoid(amplitude=0.5, phase=0.0, mode=1):
    """x -> 1 + a·sin(2π(m·x + phase))."""
    return lambda x: 1.0 + amplitude * np.sin(2.0 * np.pi * (mode * x + phase))


def two_cluster(nz, nx, nu1, nu2, cut=0.5):
    """ν₁ on fibers with z ≤ cut, ν₂ on the rest."""
    return make_profile(nz, nx, lambda z: nu1 if z <= cut else nu2)


# ─── Operations ───────────────────────────────────────────────────────

def _check_same_grid(phi, psi):
    if phi.shape != psi.shape:
        raise ParameterError(f"grid mismatch: {phi.shape} vs {psi.shape}")


def row_w1(phi, psi):
    """Per-fiber W1 distances."""
    _check_same_grid(phi, psi)
    return w1_rows(phi.rows - psi.rows)


def weak_norm_distance(phi, psi):
    """(1/nz)·Σ_k W1(φ_k, ψ_k)."""
    return float(np.mean(row_w1(phi, psi)))


def _bv1_pairwise(phi):
    rows = phi.rows
    nz = rows.shape[0]
    out = np.zeros((nz, nz))
    for k in range(nz):
        diff = rows[k] - rows
        out[k] = np.sum(np.abs(np.roll(diff, -1, axis=1) - diff), axis=1)
    return out


def osc_bv1(phi, omega, r):
    """max over fibers meeting B(ω, r) of |φ_z − φ_z̄|_{BV¹}."""
    if r <= 0:
        raise ParameterError(f"radius must be positive, got {r}")
    lo, hi = ball_cells(omega, r, phi.nz)
    best = 0.0
    for k in range(lo, hi + 1):
        for m in range(k + 1, hi + 1):
            best = max(best, bv1_seminorm(phi.rows[k] - phi.rows[m]))
    return best


def var_p_bv1(phi, p_exp=1.0, radii=DEFAULT_RADII):
    if len(radii) == 0:
        raise ParameterError("at least one radius is required")
    return integrated_oscillation(_bv1_pairwise(phi), tuple(radii), p_exp)


@dataclass(frozen=True)
class AdmissibleDiagnostics:
    m1: float
    m2: float
    var_p: float
    weak_norm: float
    c2_sup: float
    weak_to_uniform: float = 0.0

    @property
    def strong_norm(self):
        return self.var_p + self.weak_norm

    @property
    def strong_to_uniform(self):
        """Strong norm of φ − 1; var_p does not see the constant rows."""
        return self.var_p + self.weak_to_uniform

    def to_dict(self):
        return {
            "m1": self.m1,
            "m2": self.m2,
            "var_p": self.var_p,
            "weak_norm": self.weak_norm,
            "c2_sup": self.c2_sup,
            "strong_norm": self.strong_norm,
            "weak_to_uniform": self.weak_to_uniform,
            "strong_to_uniform": self.strong_to_uniform,
        }


def admissible_diagnostics(phi, p_exp=1.0, radii=DEFAULT_RADII):
    rows = phi.rows
    return AdmissibleDiagnostics(
        m1=max(bv1_seminorm(r) for r in rows),
        m2=max(bv2_seminorm(r) for r in rows),
        var_p=var_p_bv1(phi, p_exp, radii),
        weak_norm=float(np.mean(np.abs(rows).mean(axis=1))),
        c2_sup=max(c2_sup(r) for r in rows),
        weak_to_uniform=weak_norm_distance(phi, uniform_fibered(phi.nz, phi.nx)),
    )


# ─── Serialization ────────────────────────────────────────────────────

def dump_csv(phi, path):
    """Long format (z, x, value), one line per grid point."""
    z, x = phi.z_midpoints, phi.x_nodes
    rows = ((z[k], x[j], phi.rows[k, j]) for k in range(phi.nz) for j in range(phi.nx))
    return write_csv(path, ["z", "x", "value"], rows)


def load_csv(path):
    header, records = read_csv(path)
    if header != ["z", "x", "value"]:
        raise ParameterError(f"{path}: unexpected header {header}")
    values = np.array([float(r[2]) for r in records])
    nz = len({r[0] for r in records})
    return FiberedDensity(values.reshape(nz, -1))


def dump_binary(phi, path):
    return write_binary(path, phi.shape, phi.rows)


def load_binary(path):
    _, rows = read_binary(path, 2)
    return FiberedDensity(rows)
