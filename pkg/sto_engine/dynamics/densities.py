"""
Probability densities on the circle T = [0, 1) and the single-fiber norms
and metrics used by the operator and its probes.

A density is a periodic piecewise-linear function given by its values at the
nodes x_j = j/nx.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sto_engine.errors import DomainError, ParameterError
from sto_engine.utils.io import dumps, read_csv, write_csv, write_json

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-10
EMPIRICAL_GRID = 2 ** 16


@dataclass(frozen=True, eq=False)
class SignedCircleFunction:
    """Periodic piecewise-linear function on the node grid."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if arr.size < 2:
            raise ParameterError(f"need at least 2 grid nodes, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("function values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def nx(self):
        return self.values.size

    @property
    def nodes(self):
        return np.arange(self.nx) / self.nx

    def mass(self):
        return float(np.mean(self.values))

    def __sub__(self, other):
        return SignedCircleFunction(self.values - _values_of(other, self.nx))

    def __add__(self, other):
        return SignedCircleFunction(self.values + _values_of(other, self.nx))


@dataclass(frozen=True, eq=False)
class CircleDensity(SignedCircleFunction):
    """Nonnegative function with unit Riemann mass."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.values < 0):
            raise DomainError("density values must be nonnegative")
        mass = self.mass()
        if abs(mass - 1.0) > NORMALIZATION_TOL:
            raise DomainError(f"density mass {mass:.12g} differs from 1")


def _values_of(f, nx=None):
    values = f.values if isinstance(f, SignedCircleFunction) else np.asarray(f, dtype=float)
    if nx is not None and values.size != nx:
        raise ParameterError(f"grid mismatch: {values.size} vs {nx}")
    return values


def sample_function(func, nx):
    """Sample a vectorized callable on the node grid."""
    nodes = np.arange(nx) / nx
    return SignedCircleFunction(func(nodes))


def density_from_function(func, nx):
    """Sample and normalize a nonnegative callable."""
    return normalize(sample_function(func, nx))


def uniform_density(nx):
    return CircleDensity(np.ones(nx))


def resample(f, nx):
    """Periodic linear interpolation of f onto a grid of size nx."""
    if f.nx == nx:
        return f
    values = periodic_interp(f.values, np.arange(nx) / nx)
    if isinstance(f, CircleDensity):
        return normalize(SignedCircleFunction(values))
    return SignedCircleFunction(values)


def periodic_interp(values, points):
    """Evaluate the periodic piecewise-linear interpolant of node values at points."""
    nx = values.shape[-1]
    grid = np.arange(nx + 1) / nx
    closed = np.append(values, values[0])
    return np.interp(np.mod(points, 1.0), grid, closed)


# ─── Operations ───────────────────────────────────────────────────────

def normalize(raw):
    """Scale a nonnegative function to unit Riemann mass."""
    values = _values_of(raw)
    if np.any(values < 0):
        raise DomainError("cannot normalize a function with negative values")
    mass = float(np.mean(values))
    if not mass > 0:
        raise DomainError("cannot normalize a function with zero mass")
    scaled = values / mass
    # exact unit mass up to rounding of the final division
    scaled = scaled / np.mean(scaled)
    return CircleDensity(scaled)


def l1_norm(f):
    return float(np.mean(np.abs(_values_of(f))))


def bv1_seminorm(f):
    """Total variation of the periodic piecewise-linear interpolant."""
    values = _values_of(f)
    return float(np.sum(np.abs(np.roll(values, -1) - values)))


def bv2_seminorm(f):
    """Total variation of the derivative (second differences times nx)."""
    values = _values_of(f)
    if values.size < 3:
        raise ParameterError("bv2 needs at least 3 grid nodes")
    second = np.roll(values, -1) - 2.0 * values + np.roll(values, 1)
    return float(np.sum(np.abs(second)) * values.size)


def c2_sup(f):
    """Grid sup of |f''| from second differences."""
    values = _values_of(f)
    second = np.roll(values, -1) - 2.0 * values + np.roll(values, 1)
    return float(np.max(np.abs(second)) * values.size ** 2)


def primitive_rows(diff):
    """
    Cumulative integrals Φ(x_j) = ∫_0^{x_j} diff of piecewise-linear rows,
    evaluated at the nodes. Works on 1-D or 2-D (row-wise) arrays.
    """
    diff = np.atleast_2d(diff)
    nx = diff.shape[-1]
    trapezoids = 0.5 * (diff + np.roll(diff, -1, axis=-1)) / nx
    prim = np.zeros_like(diff)
    prim[:, 1:] = np.cumsum(trapezoids[:, :-1], axis=-1)
    return prim


def w1_rows(diff):
    """
    Circle W1 of zero-mass rows: min over c of ∫|Φ - c|, c the median of Φ.
    Returns one value per row.
    """
    prim = primitive_rows(diff)
    centre = np.median(prim, axis=-1, keepdims=True)
    return np.mean(np.abs(prim - centre), axis=-1)


def w1_distance(f, g):
    """Wasserstein-1 distance on the circle between two densities."""
    if f.nx != g.nx:
        g = resample(g, f.nx)
    return float(w1_rows(f.values - g.values)[0])


def density_cdf(g, points):
    """CDF of a piecewise-linear density evaluated at points in [0, 1]."""
    values = _values_of(g)
    nx = values.size
    nodes_cdf = np.concatenate(([0.0], np.cumsum(0.5 * (values + np.roll(values, -1)) / nx)))
    points = np.clip(np.asarray(points, dtype=float), 0.0, 1.0)
    cell = np.minimum((points * nx).astype(int), nx - 1)
    t = points - cell / nx
    left = values[cell]
    right = values[(cell + 1) % nx]
    slope = (right - left) * nx
    return nodes_cdf[cell] + left * t + 0.5 * slope * t * t


def w1_empirical(samples, g, grid=EMPIRICAL_GRID):
    """W1 on the circle between the empirical measure of samples and density g."""
    samples = np.sort(np.mod(np.asarray(samples, dtype=float).reshape(-1), 1.0))
    if samples.size == 0:
        raise ParameterError("w1_empirical needs at least one sample")
    points = (np.arange(grid) + 0.5) / grid
    empirical = np.searchsorted(samples, points, side="right") / samples.size
    gap = empirical - density_cdf(g, points)
    return float(np.mean(np.abs(gap - np.median(gap))))


def hilbert_metric_positive(f, g):
    """
    Hilbert projective metric of the positivity cone:
    log(max f/g · max g/f). Used as a surrogate for the log-Lipschitz cone metric.
    """
    fv = _values_of(f)
    gv = _values_of(g, fv.size)
    if np.any(fv <= 0) or np.any(gv <= 0):
        raise DomainError("Hilbert metric needs strictly positive functions")
    return float(np.log(np.max(fv / gv) * np.max(gv / fv)))


def sup_distance(f, g):
    fv = _values_of(f)
    return float(np.max(np.abs(fv - _values_of(g, fv.size))))


# ─── Serialization ────────────────────────────────────────────────────

def _restore(values, signed):
    return SignedCircleFunction(values) if signed else CircleDensity(values)


def dump_csv(f, path):
    """Two columns (x, value), one line per node."""
    return write_csv(path, ["x", "value"], zip(f.nodes, f.values))


def load_csv(path, signed=False):
    header, records = read_csv(path)
    if header != ["x", "value"]:
        raise ParameterError(f"{path}: unexpected header {header}")
    return _restore([float(r[1]) for r in records], signed)


def to_json(f):
    """Node values as a JSON array."""
    return dumps(f.values)


def from_json(text, signed=False):
    values = json.loads(text)
    if not isinstance(values, list):
        raise ParameterError("a circle function is stored as a JSON array of node values")
    return _restore(values, signed)


def dump_json(f, path):
    return write_json(path, f.values)


def load_json(path, signed=False):
    return from_json(Path(path).read_text(), signed)
