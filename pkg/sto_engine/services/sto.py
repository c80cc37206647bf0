"""
Self-consistent transfer operator.

One step: assemble the graphon mean field from the current state, realize
the fiber map F_z = f + α·M_z on every fiber, and push each fiber density
forward by collocation on its inverse branches. `fixed_point` iterates the
step and records residuals, slopes and distortion along the way.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from sto_engine.dynamics.circle_maps import ck_norm
from sto_engine.dynamics.densities import CircleDensity, normalize, periodic_interp
from sto_engine.dynamics.fibered import (
    FiberedDensity,
    admissible_diagnostics,
    weak_norm_distance,
)
from sto_engine.dynamics.graphon import DEFAULT_RADII
from sto_engine.errors import DomainError, NonExpandingFiberError, NumericError, ParameterError
from sto_engine.services.reporter import fit_exponential_rate
from sto_engine.utils.parallel import ordered_map

logger = logging.getLogger(__name__)

MASS_ERROR_WARN = 1e-6
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100
SLOPE_OVERSAMPLE = 4
ULAM_SUBDIVISIONS = 64
RATE_BURN_IN = 2
RATE_FLOOR = 1e-13


def alpha_hat(f, h):
    """(min_slope − 1)/||h||_{C¹}; +inf for a vanishing coupling."""
    norm = ck_norm(h, 1)
    if norm == 0:
        return math.inf
    return (f.min_slope - 1.0) / norm


def coupling_load(W, alpha):
    """|α|·||W||_{L∞L¹}, the quantity compared against alpha_hat."""
    return abs(alpha) * W.linf_l1_bound


def in_certified_regime(f, h, W, alpha):
    return coupling_load(W, alpha) < alpha_hat(f, h)


@dataclass(frozen=True)
class ExpansionBounds:
    alpha_hat: float
    coupling_load: float
    certified: bool
    xi_lower: float
    K: float
    K_prime: float

    def to_dict(self):
        return dict(self.__dict__)


def expansion_bounds(f, h, W, alpha):
    """
    A-priori constants for the fiber maps: slope lower bound ξ_lower,
    C³ bound K and distortion bound K′ = (sup|f″| + |α|·||h||_{C²}·||W||)/ξ_lower².
    """
    load_w = abs(alpha) * W.linf_l1_bound
    xi_lower = f.min_slope - load_w * ck_norm(h, 1)
    K = f.c3_bound + load_w * ck_norm(h, 3)
    if xi_lower > 0:
        K_prime = (f.derivative_sups[1] + load_w * ck_norm(h, 2)) / xi_lower ** 2
    else:
        K_prime = math.inf
    a_hat = alpha_hat(f, h)
    return ExpansionBounds(
        alpha_hat=a_hat,
        coupling_load=load_w,
        certified=load_w < a_hat,
        xi_lower=xi_lower,
        K=K,
        K_prime=K_prime,
    )


# ─── Mean field ───────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class MeanFieldTable:
    """M, M_x, M_xx on the (z-midpoint, x-node) grid."""

    M: np.ndarray
    M_x: np.ndarray
    M_xx: np.ndarray

    @property
    def nz(self):
        return self.M.shape[0]

    @property
    def nx(self):
        return self.M.shape[1]

    def row(self, k):
        if not 0 <= k < self.nz:
            raise ParameterError(f"fiber index {k} out of range 0..{self.nz - 1}")
        return self.M[k], self.M_x[k], self.M_xx[k]


@lru_cache(maxsize=16)
def _coupling_tables(h, nx):
    nodes = np.arange(nx) / nx
    X, Y = nodes[:, None], nodes[None, :]
    tables = tuple(np.broadcast_to(h.partial(X, Y, a, 0), (nx, nx)).copy() for a in range(3))
    for t in tables:
        t.setflags(write=False)
    return tables


@lru_cache(maxsize=16)
def _graphon_matrix(W, nz):
    z = (np.arange(nz) + 0.5) / nz
    mat = np.asarray(W.evaluate(z[:, None], z[None, :]), dtype=float)
    mat = np.broadcast_to(mat, (nz, nz)).copy()
    mat.setflags(write=False)
    return mat


def mean_field(W, h, phi):
    """
    Two-stage contraction: H_a = φ·h_aᵀ/nx over y, then M_a = W·H_a/nz over z′,
    for a = 0, 1, 2 derivatives of h in its first argument.
    """
    if not isinstance(phi, FiberedDensity):
        raise ParameterError("mean_field expects a FiberedDensity")
    nz, nx = phi.shape
    wmat = _graphon_matrix(W, nz)
    out = []
    for table in _coupling_tables(h, nx):
        H = phi.rows @ table.T / nx
        out.append(wmat @ H / nz)
    return MeanFieldTable(*out)


# ─── Fiber maps ───────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class FiberMapRealization:
    """F(x) = f(x) + α·M_k(x), mean-field row interpolated by periodic cubic Hermite."""

    fmap: object
    alpha: float
    fiber: int
    m_values: np.ndarray
    m_x: np.ndarray
    m_xx: np.ndarray
    spline: CubicHermiteSpline = field(repr=False)
    min_slope: float
    distortion: float

    @property
    def degree(self):
        return self.fmap.degree

    @property
    def nx(self):
        return self.m_values.size

    @property
    def expanding(self):
        return self.min_slope > 1.0

    def lift(self, y):
        y = np.asarray(y, dtype=float)
        return self.fmap.lift(y) + self.alpha * self.spline(np.mod(y, 1.0))

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        return self.fmap.derivative_eval(y, 1) + self.alpha * self.spline(np.mod(y, 1.0), 1)

    def node_derivatives(self, order):
        """F^(order) at the grid nodes from the mean-field tables."""
        nodes = np.arange(self.nx) / self.nx
        if order == 0:
            return self.fmap.lift(nodes) + self.alpha * self.m_values
        if order == 1:
            return self.fmap.derivative_eval(nodes, 1) + self.alpha * self.m_x
        if order == 2:
            return self.fmap.derivative_eval(nodes, 2) + self.alpha * self.m_xx
        raise ParameterError(f"node derivative order must be 0..2, got {order}")


def _periodic_hermite(values, slopes):
    nx = values.size
    knots = np.arange(nx + 1) / nx
    return CubicHermiteSpline(knots, np.append(values, values[0]), np.append(slopes, slopes[0]))


def realize_fiber_map(f, alpha, M, k):
    """Fiber map on fiber k with its certified grid slope and distortion."""
    m, m_x, m_xx = M.row(k)
    spline = _periodic_hermite(m, m_x)
    nx = m.size
    fine = np.arange(SLOPE_OVERSAMPLE * nx) / (SLOPE_OVERSAMPLE * nx)
    slope_fine = f.derivative_eval(fine, 1) + alpha * spline(fine, 1)
    nodes = np.arange(nx) / nx
    slope_nodes = f.derivative_eval(nodes, 1) + alpha * m_x
    xi = float(min(np.min(slope_fine), np.min(slope_nodes)))
    second = f.derivative_eval(nodes, 2) + alpha * m_xx
    if np.min(slope_nodes) > 0:
        distortion = float(np.max(np.abs(second) / slope_nodes ** 2))
    else:
        distortion = math.inf
    return FiberMapRealization(
        fmap=f,
        alpha=float(alpha),
        fiber=int(k),
        m_values=m,
        m_x=m_x,
        m_xx=m_xx,
        spline=spline,
        min_slope=xi,
        distortion=distortion,
    )


def inverse_branches(F, x, require_expanding=True):
    """
    The d preimages of x under F, sorted, shape x.shape + (d,).

    Safeguarded Newton on the monotone lift: a Newton step leaving the
    current bracket is replaced by bisection.
    """
    if require_expanding and not F.expanding:
        raise DomainError(f"fiber {F.fiber} is not expanding (min slope {F.min_slope:.6g})")
    if F.min_slope <= 0:
        raise DomainError(f"fiber {F.fiber} lift is not monotone")
    x = np.asarray(x, dtype=float)
    d = F.degree
    c0 = float(F.lift(0.0))
    base = x + np.ceil(c0 - x)
    targets = base[..., None] + np.arange(d)

    lo = np.zeros_like(targets)
    hi = np.ones_like(targets)
    y = np.clip((targets - c0) / d, 0.0, 1.0)
    for _ in range(NEWTON_MAX_ITER):
        g = F.lift(y) - targets
        done = (np.abs(g) < NEWTON_TOL) | (hi - lo <= 4 * np.finfo(float).eps)
        if np.all(done):
            return np.mod(y, 1.0)
        lo = np.where(g < 0, y, lo)
        hi = np.where(g > 0, y, hi)
        newton = y - g / F.derivative(y)
        outside = (newton <= lo) | (newton >= hi) | ~np.isfinite(newton)
        y = np.where(done, y, np.where(outside, 0.5 * (lo + hi), newton))
    raise NumericError(f"inverse branches of fiber {F.fiber} did not converge in {NEWTON_MAX_ITER} iterations")


def transfer_values(F, values, require_expanding=True):
    """Collocation transfer Σ_b φ(y_b)/F′(y_b) at the nodes, no renormalization."""
    values = np.asarray(values, dtype=float)
    nodes = np.arange(values.size) / values.size
    pre = inverse_branches(F, nodes, require_expanding)
    return np.sum(periodic_interp(values, pre) / F.derivative(pre), axis=-1)


def _push_density(F, values, require_expanding=True):
    raw = transfer_values(F, values, require_expanding)
    mass_error = abs(float(np.mean(raw)) - 1.0)
    return normalize(raw).values, mass_error


def fiber_pushforward(F, phi_z):
    """Push a fiber density forward and renormalize."""
    values, mass_error = _push_density(F, phi_z.values)
    if mass_error > MASS_ERROR_WARN:
        logger.warning(f"[Transfer] fiber {F.fiber} lost mass {mass_error:.3g} before renormalization")
    return CircleDensity(values)


# ─── One step ─────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class StepResult:
    state: FiberedDensity
    mean_field: MeanFieldTable
    mass_error_max: float
    min_slope: float
    max_distortion: float
    flagged: tuple = ()


def warn_if_uncertified(f, h, W, alpha):
    load_w = coupling_load(W, alpha)
    a_hat = alpha_hat(f, h)
    if load_w >= a_hat:
        logger.warning(
            f"[STO] |alpha|*||W|| = {load_w:.4g} >= alpha_hat = {a_hat:.4g}; "
            f"expansion is not certified"
        )
        return True
    return False


def sto_step_detailed(phi, W, h, f, alpha, strict=True, threads=None):
    M = mean_field(W, h, phi)

    def push(k):
        F = realize_fiber_map(f, alpha, M, k)
        if not F.expanding and (strict or F.min_slope <= 0):
            raise NonExpandingFiberError(k, F.min_slope)
        values, mass_error = _push_density(F, phi.rows[k], require_expanding=False)
        return values, mass_error, F.min_slope, F.distortion

    results = ordered_map(push, range(phi.nz), threads)
    rows = np.stack([r[0] for r in results])
    slopes = np.array([r[2] for r in results])
    flagged = tuple(int(k) for k in np.flatnonzero(slopes <= 1.0))
    if flagged:
        logger.warning(f"[STO] non-expanding fibers flagged: {list(flagged)}")
    mass_error_max = max(r[1] for r in results)
    if mass_error_max > MASS_ERROR_WARN:
        logger.warning(f"[STO] collocation mass error {mass_error_max:.3g} above {MASS_ERROR_WARN}")
    return StepResult(
        state=FiberedDensity(rows),
        mean_field=M,
        mass_error_max=float(mass_error_max),
        min_slope=float(np.min(slopes)),
        max_distortion=float(max(r[3] for r in results)),
        flagged=flagged,
    )


def sto_step(phi, W, h, f, alpha, strict=True, threads=None):
    """Apply the operator once; the input is never modified."""
    return sto_step_detailed(phi, W, h, f, alpha, strict, threads).state


# ─── Solver ───────────────────────────────────────────────────────────

@dataclass
class SolveReport:
    iterations: int = 0
    weak_residuals: list = field(default_factory=list)
    sup_residuals: list = field(default_factory=list)
    mass_errors: list = field(default_factory=list)
    min_slopes: list = field(default_factory=list)
    distortions: list = field(default_factory=list)
    converged: bool = False
    rate: Optional[object] = None
    certificate_residual: Optional[float] = None
    diagnostics: Optional[object] = None
    flagged_fibers: list = field(default_factory=list)
    alpha_warning: bool = False
    wall_seconds: float = 0.0

    @property
    def rate_estimate(self):
        return None if self.rate is None else self.rate.rate

    def residual_rows(self):
        return [
            (i + 1, self.weak_residuals[i], self.sup_residuals[i], self.mass_errors[i])
            for i in range(self.iterations)
        ]

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "rate": None if self.rate is None else self.rate.to_dict(),
            "certificate_residual": self.certificate_residual,
            "alpha_warning": self.alpha_warning,
            "flagged_fibers": list(self.flagged_fibers),
            "min_slope": min(self.min_slopes) if self.min_slopes else None,
            "max_distortion": max(self.distortions) if self.distortions else None,
            "diagnostics": None if self.diagnostics is None else self.diagnostics.to_dict(),
            "residual_history": {
                "weak": list(self.weak_residuals),
                "sup": list(self.sup_residuals),
                "mass_error_max": list(self.mass_errors),
            },
        }


def residual_remainders(window):
    """
    Σ_{k≥n} r_k over the window, closed with the geometric tail the raw
    residuals suggest. Bounds the distance from iterate n to the limit.
    """
    window = np.asarray(window, dtype=float)
    remainders = np.cumsum(window[::-1])[::-1]
    raw = fit_exponential_rate(window, 1.0)
    if raw.rate > 0:
        ratio = math.exp(-raw.rate)
        remainders = remainders + window[-1] * ratio / (1.0 - ratio)
    return remainders


def _tail_rate(history):
    """
    Geometric rate of the residual history after the burn-in steps, cut at
    the roundoff floor; None when fewer than four usable points remain.
    """
    values = np.asarray(history, dtype=float)[RATE_BURN_IN:]
    below = np.flatnonzero(~(values > RATE_FLOOR))
    window = values[:below[0]] if below.size else values
    if window.size < 4:
        return None
    return fit_exponential_rate(residual_remainders(window), 1.0)


def fixed_point(phi0, W, h, f, alpha, tol=1e-10, max_iter=500, strict=True,
                threads=None, p_exp=1.0, radii=DEFAULT_RADII):
    """
    Plain fixed-point iteration of the operator until the weak-norm residual
    drops below tol. Non-convergence is reported, not raised.
    """
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be >= 1, got {max_iter}")
    report = SolveReport(alpha_warning=warn_if_uncertified(f, h, W, alpha))
    started = time.perf_counter()
    phi = phi0
    flagged = set()
    for it in range(1, max_iter + 1):
        step = sto_step_detailed(phi, W, h, f, alpha, strict, threads)
        weak = weak_norm_distance(step.state, phi)
        sup = float(np.max(np.abs(step.state.rows - phi.rows)))
        report.weak_residuals.append(weak)
        report.sup_residuals.append(sup)
        report.mass_errors.append(step.mass_error_max)
        report.min_slopes.append(step.min_slope)
        report.distortions.append(step.max_distortion)
        flagged.update(step.flagged)
        report.iterations = it
        phi = step.state
        logger.debug(f"[Solver] iter {it}: weak={weak:.3e} sup={sup:.3e} xi={step.min_slope:.4f}")
        if weak < tol:
            report.converged = True
            break

    report.flagged_fibers = sorted(flagged)
    report.rate = _tail_rate(report.weak_residuals)
    report.certificate_residual = weak_norm_distance(sto_step(phi, W, h, f, alpha, strict, threads), phi)
    report.diagnostics = admissible_diagnostics(phi, p_exp, radii)
    report.wall_seconds = time.perf_counter() - started
    status = "converged" if report.converged else "did not converge"
    logger.info(
        f"[Solver] {status} after {report.iterations} iterations "
        f"(residual {report.weak_residuals[-1]:.3e}, rate {report.rate_estimate})"
    )
    return phi, report


# ─── Oracles and distances ────────────────────────────────────────────

def _subcell_overlaps(F, subdivisions):
    """
    Split [0, 1) into nx·s subcells, take each image under F as a straight
    segment and return (subcell, target cell, share of the image) triples.
    """
    nx = F.nx
    edges = np.arange(nx * subdivisions + 1) / (nx * subdivisions)
    images = F.lift(edges) * nx
    u, v = images[:-1], images[1:]
    if np.any(v <= u):
        raise DomainError(f"fiber {F.fiber} lift is not increasing")
    first = np.floor(u).astype(int)
    span = int(np.max(np.floor(v).astype(int) - first)) + 1
    width = v - u
    subcells = np.arange(u.size)
    sources, targets, shares = [], [], []
    for offset in range(span):
        cell = first + offset
        overlap = np.clip(np.minimum(v, cell + 1) - np.maximum(u, cell), 0.0, None)
        hit = overlap > 0
        sources.append(subcells[hit])
        targets.append(np.mod(cell[hit], nx))
        shares.append(overlap[hit] / width[hit])
    return np.concatenate(sources), np.concatenate(targets), np.concatenate(shares)


def ulam_matrix(F, subdivisions=ULAM_SUBDIVISIONS):
    """
    Row-stochastic nx×nx matrix: P[i, j] is the share of cell i that F maps
    into cell j, each cell split into `subdivisions` pieces of equal weight.
    """
    sources, targets, shares = _subcell_overlaps(F, subdivisions)
    P = np.zeros((F.nx, F.nx))
    np.add.at(P, (sources // subdivisions, targets), shares / subdivisions)
    return P


def cell_masses(values):
    """Trapezoid mass of each cell [j/nx, (j+1)/nx] of a periodic piecewise-linear function."""
    values = np.asarray(values, dtype=float)
    return 0.5 * (values + np.roll(values, -1)) / values.size


def subcell_masses(values, subdivisions=ULAM_SUBDIVISIONS):
    """Masses of the piecewise-linear interpolant on each of the nx·s subcells."""
    values = np.asarray(values, dtype=float)
    edges = np.arange(values.size * subdivisions + 1) / (values.size * subdivisions)
    at_edges = periodic_interp(values, edges)
    return 0.5 * (at_edges[:-1] + at_edges[1:]) / (values.size * subdivisions)


def ulam_transfer(F, phi_z, subdivisions=ULAM_SUBDIVISIONS):
    """
    Cell masses of the push-forward: every subcell carries its mass under the
    interpolant of phi_z and spreads it over the cells its image covers.
    """
    values = phi_z.values if hasattr(phi_z, "values") else np.asarray(phi_z, dtype=float)
    if values.size != F.nx:
        raise ParameterError(f"grid mismatch: density has {values.size} nodes, map has {F.nx}")
    sources, targets, shares = _subcell_overlaps(F, subdivisions)
    masses = subcell_masses(values, subdivisions)
    return np.bincount(targets, weights=masses[sources] * shares, minlength=F.nx)


def fiber_map_ck_distance(F1, F2, k_order):
    """Σ_{i ≤ k} grid sup |F1^(i) − F2^(i)|."""
    if k_order not in (0, 1, 2):
        raise ParameterError(f"k_order must be 0, 1 or 2, got {k_order}")
    if F1.nx != F2.nx:
        raise ParameterError(f"grid mismatch: {F1.nx} vs {F2.nx}")
    return float(sum(
        np.max(np.abs(F1.node_derivatives(i) - F2.node_derivatives(i)))
        for i in range(k_order + 1)
    ))
