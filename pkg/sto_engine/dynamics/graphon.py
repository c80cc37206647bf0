"""
Interaction kernels W(z, z') on [0,1]², their construction from finite graphs,
sampling of finite graphs, and the norms and p-variation the theorems need.

Cell convention for block and step kernels: the first cell is closed, every
later cell is left-open / right-closed, i.e. [0, c1], (c1, c2], ..., (c_{B-1}, 1].
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from sto_engine.errors import ParameterError
from sto_engine.utils.rng import child_generator

logger = logging.getLogger(__name__)

DEFAULT_RADII = tuple(2.0 ** -i for i in range(1, 9))
DEFAULT_QUAD = 1024
BOUND_GRID = 1025


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    """N×N interaction weights; 0/1 entries are stored as booleans."""

    entries: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        arr = np.asarray(self.entries)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ParameterError(f"adjacency must be square, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            arr = np.array(arr, dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ParameterError("adjacency entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def N(self):
        return self.entries.shape[0]

    @property
    def is_binary(self):
        return self.entries.dtype == np.bool_

    @cached_property
    def weights(self):
        """Float64 view used in matrix products."""
        w = self.entries.astype(float)
        w.setflags(write=False)
        return w

    def degrees(self):
        return self.weights.sum(axis=1)


class Graphon:
    """Base kernel. Subclasses implement `_evaluate` on broadcast arrays."""

    kind = "abstract"

    def evaluate(self, z, zp):
        return self._evaluate(np.asarray(z, dtype=float), np.asarray(zp, dtype=float))

    def _evaluate(self, z, zp):
        raise NotImplementedError

    @property
    def sup_bound(self):
        raise NotImplementedError

    @cached_property
    def linf_l1_bound(self):
        """ess-sup over z of ||W(z, ·)||_{L¹}."""
        z = np.linspace(0.0, 1.0, BOUND_GRID)
        return float(np.max(row_l1_norms(self, z, DEFAULT_QUAD)))

    def describe(self):
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class ConstantGraphon(Graphon):
    p: float
    kind = "constant"

    def _evaluate(self, z, zp):
        return np.full(np.broadcast(z, zp).shape, float(self.p))

    @property
    def sup_bound(self):
        return abs(float(self.p))

    @cached_property
    def linf_l1_bound(self):
        return abs(float(self.p))

    def describe(self):
        return {"kind": self.kind, "p": float(self.p)}


def _cell_index(cuts, z):
    # searchsorted(side="left") puts a point equal to a cut into the left cell
    return np.searchsorted(cuts, z, side="left")


@dataclass(frozen=True, eq=False)
class BlockGraphon(Graphon):
    cuts: tuple
    values: np.ndarray
    kind = "block"

    def __post_init__(self):
        cuts = np.asarray(self.cuts, dtype=float)
        values = np.array(self.values, dtype=float)
        if cuts.ndim != 1 or np.any(np.diff(cuts) <= 0) or np.any((cuts <= 0) | (cuts >= 1)):
            raise ParameterError("block cuts must be sorted and strictly inside (0, 1)")
        size = cuts.size + 1
        if values.shape != (size, size):
            raise ParameterError(f"block values must be {size}x{size}, got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "cuts", tuple(float(c) for c in cuts))
        object.__setattr__(self, "values", values)

    @property
    def edges(self):
        return np.concatenate(([0.0], self.cuts, [1.0]))

    def _evaluate(self, z, zp):
        cuts = np.asarray(self.cuts)
        return self.values[_cell_index(cuts, z), _cell_index(cuts, zp)]

    @property
    def sup_bound(self):
        return float(np.max(np.abs(self.values)))

    @cached_property
    def linf_l1_bound(self):
        lengths = np.diff(self.edges)
        return float(np.max(np.abs(self.values) @ lengths))

    def describe(self):
        return {"kind": self.kind, "cuts": list(self.cuts), "values": self.values.tolist()}


XI_PROFILES = {
    "linear": (lambda rate: (lambda u: 1.0 - u), lambda rate: 1.0),
    "exp": (lambda rate: (lambda u: np.exp(-rate * u)), lambda rate: float(rate)),
}


@dataclass(frozen=True, eq=False)
class TranslationGraphon(Graphon):
    """W(z, z') = ξ(|z - z'|) with ξ Lipschitz on [0, 1]."""

    xi: Callable[[np.ndarray], np.ndarray]
    lip_bound: float
    profile: str = "custom"
    rate: float = 0.0
    kind = "translation"

    def _evaluate(self, z, zp):
        return self.xi(np.abs(z - zp))

    @cached_property
    def sup_bound(self):
        return float(np.max(np.abs(self.xi(np.linspace(0.0, 1.0, BOUND_GRID)))))

    def describe(self):
        return {"kind": self.kind, "xi": self.profile, "rate": self.rate, "lip_bound": self.lip_bound}


def translation_graphon(profile="linear", rate=5.0):
    if profile not in XI_PROFILES:
        raise ParameterError(f"unknown xi profile: {profile}")
    make_xi, make_lip = XI_PROFILES[profile]
    return TranslationGraphon(xi=make_xi(rate), lip_bound=make_lip(rate), profile=profile, rate=float(rate))


@dataclass(frozen=True, eq=False)
class StepGraphon(Graphon):
    """W^{(N)}: constant A_ij on I_i × I_j, I_1 = [0, 1/N], I_i = ((i-1)/N, i/N]."""

    adjacency: AdjacencyMatrix
    kind = "step"

    @property
    def N(self):
        return self.adjacency.N

    def _cell(self, z):
        return np.clip(np.ceil(z * self.N).astype(int) - 1, 0, self.N - 1)

    def _evaluate(self, z, zp):
        return self.adjacency.weights[self._cell(z), self._cell(zp)]

    @property
    def sup_bound(self):
        return float(np.max(np.abs(self.adjacency.weights)))

    @cached_property
    def linf_l1_bound(self):
        return float(np.max(np.mean(np.abs(self.adjacency.weights), axis=1)))

    def describe(self):
        return {"kind": self.kind, "N": self.N, "seed": self.adjacency.seed}


# ─── Operations ───────────────────────────────────────────────────────

def _check_unit(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must lie in [0, 1]")
    return arr


def graphon_eval(W, z, zp):
    """Kernel value W(z, z')."""
    z = _check_unit("z", z)
    zp = _check_unit("z'", zp)
    out = W.evaluate(z, zp)
    return float(out) if np.ndim(out) == 0 else out


def step_graphon_from_matrix(A):
    if not isinstance(A, AdjacencyMatrix):
        A = AdjacencyMatrix(np.asarray(A))
    if A.N < 1:
        raise ParameterError("step graphon needs N >= 1")
    return StepGraphon(adjacency=A)


def sample_er(N, p, seed):
    """Erdős–Rényi adjacency with i.i.d. Bernoulli(p) entries."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"edge probability must be in [0, 1], got {p}")
    if N < 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    rng = child_generator(seed, "er", N)
    entries = rng.random((N, N)) < p
    return AdjacencyMatrix(entries, seed=seed)


def node_right_endpoints(N):
    return np.arange(1, N + 1) / N


def quantize_kernel(W, N):
    """
    Finite-N weights from a kernel: ξ(|i-j|/N) for translation kernels, the
    cell value at the node right endpoints i/N for block and constant kernels.
    """
    if N < 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    idx = np.arange(1, N + 1)
    if isinstance(W, TranslationGraphon):
        entries = W.xi(np.abs(idx[:, None] - idx[None, :]) / N)
    elif isinstance(W, (BlockGraphon, ConstantGraphon)):
        z = node_right_endpoints(N)
        entries = W.evaluate(z[:, None], z[None, :])
    else:
        raise ParameterError(f"cannot quantize a {W.kind} graphon")
    return AdjacencyMatrix(np.asarray(entries, dtype=float))


def _quad_nodes(quad_points):
    if quad_points < 2:
        raise ParameterError(f"quad_points must be >= 2, got {quad_points}")
    return (np.arange(quad_points) + 0.5) / quad_points


def row_l1_norms(W, z, quad_points=DEFAULT_QUAD):
    """Midpoint-rule ||W(z, ·)||_{L¹} for each z."""
    q = _quad_nodes(quad_points)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return np.mean(np.abs(W.evaluate(z[:, None], q[None, :])), axis=1)


def row_l1_norm(W, z, quad_points=DEFAULT_QUAD):
    _check_unit("z", z)
    return float(row_l1_norms(W, [z], quad_points)[0])


def row_l1_deviation(W_N, W, z, quad_points=DEFAULT_QUAD):
    """||W_N(z, ·) - W(z, ·)||_{L¹}, the row-convergence condition for (H2)."""
    _check_unit("z", z)
    q = _quad_nodes(quad_points)
    return float(np.mean(np.abs(W_N.evaluate(z, q) - W.evaluate(z, q))))


def graphon_l1_distance(W, W_tilde, grid=512):
    """Midpoint 2-D quadrature of ∫∫|W - W̃|."""
    q = _quad_nodes(grid)
    Z, Zp = q[:, None], q[None, :]
    return float(np.mean(np.abs(W.evaluate(Z, Zp) - W_tilde.evaluate(Z, Zp))))


def ball_cells(omega, r, n):
    """Index range [lo, hi] of the n uniform cells meeting the open ball B(ω, r)."""
    lo = int(np.clip(math.floor((omega - r) * n), 0, n - 1))
    hi = int(np.clip(math.ceil((omega + r) * n) - 1, 0, n - 1))
    return lo, hi


def integrated_oscillation(pairwise, radii, p_exp):
    """
    max over r of r^{-p}·(1/n)·Σ_k max_{i,j in ball(ω_k, r)} pairwise[i, j]
    for a symmetric matrix of distances between n cell representatives.
    """
    if len(radii) == 0:
        raise ParameterError("at least one radius is required")
    if not 0.0 < p_exp <= 1.0:
        raise ParameterError(f"p_exp must be in (0, 1], got {p_exp}")
    n = pairwise.shape[0]
    omegas = (np.arange(n) + 0.5) / n
    best = 0.0
    for r in radii:
        if r <= 0:
            raise ParameterError(f"radii must be positive, got {r}")
        total = 0.0
        for omega in omegas:
            lo, hi = ball_cells(omega, r, n)
            total += float(np.max(pairwise[lo:hi + 1, lo:hi + 1]))
        best = max(best, total / n / r ** p_exp)
    return best


def var_p_l1(W, p_exp=1.0, z_grid=256, r_grid=DEFAULT_RADII):
    """p-variation in L¹ of the rows z -> W(z, ·), sup over the supplied radii."""
    if len(r_grid) == 0:
        raise ParameterError("at least one radius is required")
    z = (np.arange(z_grid) + 0.5) / z_grid
    rows = W.evaluate(z[:, None], z[None, :])
    pairwise = np.stack([np.mean(np.abs(rows - row), axis=1) for row in rows])
    return integrated_oscillation(pairwise, tuple(r_grid), p_exp)


@dataclass(frozen=True, eq=False)
class ScaledGraphon(Graphon):
    """factor · W, used to build nearby kernels for continuity checks."""

    base: Graphon
    factor: float
    kind = "scaled"

    def _evaluate(self, z, zp):
        return self.factor * self.base.evaluate(z, zp)

    @property
    def sup_bound(self):
        return abs(self.factor) * self.base.sup_bound

    @cached_property
    def linf_l1_bound(self):
        return abs(self.factor) * self.base.linf_l1_bound

    def describe(self):
        return {"kind": self.kind, "factor": self.factor, "base": self.base.describe()}


def scaled_graphon(W, factor):
    return ScaledGraphon(base=W, factor=float(factor))
