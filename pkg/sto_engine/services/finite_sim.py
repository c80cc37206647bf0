"""
Direct simulation of the N-node coupled map network

    x_i(t+1) = f(x_i(t)) + α/N · Σ_j A_ij h(x_i(t), x_j(t))   (mod 1)

over an ensemble of independent realizations, plus the finite-N versus
mean-field comparison sweep and the concentration check of the empirical
mean field.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats
from tqdm import tqdm

from sto_engine.dynamics.circle_maps import ck_norm
from sto_engine.dynamics.densities import CircleDensity, w1_empirical
from sto_engine.dynamics.graphon import (
    AdjacencyMatrix,
    ConstantGraphon,
    quantize_kernel,
    row_l1_deviation,
    sample_er,
    step_graphon_from_matrix,
)
from sto_engine.errors import ParameterError
from sto_engine.services import sto
from sto_engine.utils.io import read_binary, write_binary, write_csv
from sto_engine.utils.parallel import ordered_map
from sto_engine.utils.rng import child_generator, realization_streams

logger = logging.getLogger(__name__)

BLOCK_SIZE = 256
DENSE_LIMIT = 4096
BOOTSTRAP_RESAMPLES = 200
MIN_TAIL_HITS = 10

SWEEP_HEADER = ["scenario", "N", "t", "z_star", "node", "w1_error", "bootstrap_se", "seed"]
CONCENTRATION_HEADER = ["eps", "tail", "fit"]


@dataclass(frozen=True, eq=False)
class NetworkSystem:
    adjacency: AdjacencyMatrix
    f: object
    h: object
    alpha: float

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ParameterError(f"alpha must be finite, got {self.alpha}")
        if self.adjacency.N > DENSE_LIMIT:
            logger.warning(f"[Sim] N={self.adjacency.N} exceeds the dense limit {DENSE_LIMIT}")

    @property
    def N(self):
        return self.adjacency.N


@dataclass(frozen=True, eq=False)
class EnsembleState:
    """R realizations × N node coordinates in [0, 1)."""

    coords: np.ndarray
    t: int = 0
    seed: Optional[int] = None
    streams: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        arr = np.array(self.coords, dtype=float, copy=True)
        if arr.ndim != 2:
            raise ParameterError(f"coords must be R×N, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)

    @property
    def R(self):
        return self.coords.shape[0]

    @property
    def N(self):
        return self.coords.shape[1]


def node_index(z_star, N):
    """0-based node ⌈z*·N⌉ − 1."""
    return int(np.clip(math.ceil(z_star * N) - 1, 0, N - 1))


def reference_row(z_star, nz):
    return int(min(math.floor(z_star * nz), nz - 1))


# ─── Sampling ─────────────────────────────────────────────────────────

def _row_cdfs(nu):
    """Node CDFs of every fiber, scaled to end exactly at 1, and the matching densities."""
    rows = nu.rows
    cell = 0.5 * (rows + np.roll(rows, -1, axis=1)) / nu.nx
    cdf = np.zeros((nu.nz, nu.nx + 1))
    cdf[:, 1:] = np.cumsum(cell, axis=1)
    total = cdf[:, -1:].copy()
    return cdf / total, rows / total


def inverse_cdf(nu, row_idx, u):
    """Invert the piecewise-linear fiber CDFs of rows `row_idx` at levels u."""
    nz, nx = nu.shape
    cdf, rows = _row_cdfs(nu)
    # shift every row by 2·row so one searchsorted covers all rows
    flat = (cdf + 2.0 * np.arange(nz)[:, None]).ravel()
    pos = np.searchsorted(flat, u + 2.0 * row_idx, side="right") - 1
    cell = np.clip(pos - row_idx * (nx + 1), 0, nx - 1)
    left = rows[row_idx, cell]
    slope = (rows[row_idx, (cell + 1) % nx] - left) * nx
    residual = np.maximum(u - cdf[row_idx, cell], 0.0)
    root = np.sqrt(np.maximum(left ** 2 + 2.0 * slope * residual, 0.0))
    denom = left + root
    with np.errstate(divide="ignore", invalid="ignore"):
        offset = np.where(denom > 0, 2.0 * residual / denom, 0.0)
    offset = np.clip(offset, 0.0, 1.0 / nx)
    return np.mod(cell / nx + offset, 1.0)


def sample_initial(nu, N, R, seed, threads=None):
    """
    Node i of every realization: z uniform on its cell, then x from the fiber
    density of the grid row nearest to z.
    """
    if N < 1 or R < 1:
        raise ParameterError(f"N and R must be >= 1, got N={N}, R={R}")
    streams = realization_streams(seed, R)
    draws = np.stack([g.random((2, N)) for g in streams])
    z = (np.arange(N) + draws[:, 0, :]) / N
    rows = np.minimum(np.floor(z * nu.nz).astype(int), nu.nz - 1)
    coords = inverse_cdf(nu, rows.ravel(), draws[:, 1, :].ravel()).reshape(R, N)
    return EnsembleState(coords=coords, t=0, seed=seed, streams=streams)


# ─── Dynamics ─────────────────────────────────────────────────────────

def _coupling_block(system, X):
    h = system.h
    A = system.adjacency.weights
    terms = h.separable_terms
    if terms is not None:
        total = np.zeros_like(X)
        for a_m, b_m in terms:
            total += a_m(X) * (b_m(X) @ A.T)
        return total
    out = np.empty_like(X)
    for r in range(X.shape[0]):
        x = X[r]
        out[r] = np.sum(A * h.eval(x[:, None], x[None, :]), axis=1)
    return out


def step(system, state, threads=None):
    """Advance every realization one step; partitions are fixed-size blocks."""
    if state.N != system.N:
        raise ParameterError(f"state has {state.N} nodes, system has {system.N}")
    X = state.coords
    blocks = [X[s:s + BLOCK_SIZE] for s in range(0, state.R, BLOCK_SIZE)]

    def advance(block):
        local = system.f.lift(block)
        if system.alpha != 0:
            local = local + system.alpha / system.N * _coupling_block(system, block)
        return np.mod(local, 1.0)

    coords = np.concatenate(ordered_map(advance, blocks, threads), axis=0)
    return EnsembleState(coords=coords, t=state.t + 1, seed=state.seed, streams=state.streams)


def run(system, state, steps, threads=None, frames=None):
    for _ in range(steps):
        state = step(system, state, threads)
        if frames is not None:
            frames.append(state.coords)
    return state


def node_marginal(state, i):
    if not 0 <= i < state.N:
        raise IndexError(f"node {i} out of range 0..{state.N - 1}")
    return state.coords[:, i].copy()


def marginal_error(state, i, reference, expected_nx=None):
    """W1 between the ensemble law of node i and a reference fiber density."""
    if not isinstance(reference, CircleDensity):
        raise ParameterError("reference must be a CircleDensity")
    if expected_nx is not None and reference.nx != expected_nx:
        raise ParameterError(f"grid mismatch: reference has {reference.nx} nodes, expected {expected_nx}")
    return w1_empirical(node_marginal(state, i), reference)


def bootstrap_se(samples, reference, seed, resamples=BOOTSTRAP_RESAMPLES, grid=2 ** 12):
    """Standard error of the W1 estimate by resampling realizations."""
    rng = child_generator(seed, "bootstrap", samples.size)
    picks = rng.integers(samples.size, size=(resamples, samples.size))
    values = [w1_empirical(samples[idx], reference, grid) for idx in picks]
    return float(np.std(values, ddof=1))


# ─── Scenarios and sweep ──────────────────────────────────────────────

@dataclass(frozen=True)
class Scenario:
    """Limit kernel plus the finite-N graph family converging to it."""

    name: str
    limit: object
    build: Callable[[int, int], AdjacencyMatrix]


def quantized_scenario(name, W):
    return Scenario(name=name, limit=W, build=lambda N, seed: quantize_kernel(W, N))


def er_scenario(p, name="er"):
    return Scenario(name=name, limit=ConstantGraphon(p), build=lambda N, seed: sample_er(N, p, seed))


@dataclass(frozen=True)
class SweepRow:
    scenario: str
    N: int
    t: int
    z_star: float
    node: int
    w1_error: float
    bootstrap_se: float
    seed: int
    row_l1_deviation: float = 0.0

    def csv_row(self):
        return (self.scenario, self.N, self.t, self.z_star, self.node, self.w1_error, self.bootstrap_se, self.seed)

    def to_dict(self):
        return dict(self.__dict__)


def evolve_reference(nu, W, h, f, alpha, t, threads=None):
    state = nu
    for _ in range(t):
        state = sto.sto_step(state, W, h, f, alpha, strict=False, threads=threads)
    return state


def convergence_sweep(nu, scenario, h, f, alpha, N_list, t, R, z_stars, seed,
                      resamples=BOOTSTRAP_RESAMPLES, threads=None, progress=None):
    """
    For each N: build the finite graph, simulate t steps from the sampled
    initial law and compare node ⌈z*N⌉ with the operator's fiber at z*.
    """
    if t < 1:
        raise ParameterError(f"t must be >= 1, got {t}")
    N_list = list(N_list)
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ParameterError(f"N_list must be increasing, got {N_list}")
    reference = evolve_reference(nu, scenario.limit, h, f, alpha, t, threads)
    rows = []
    for N in tqdm(N_list, desc=f"sweep {scenario.name}", disable=None if progress is None else not progress):
        graph_seed = int(child_generator(seed, "graph", N).integers(2 ** 31))
        adjacency = scenario.build(N, graph_seed)
        system = NetworkSystem(adjacency=adjacency, f=f, h=h, alpha=alpha)
        state = run(system, sample_initial(nu, N, R, int(seed) + N, threads), t, threads)
        W_N = step_graphon_from_matrix(adjacency)
        for z_star in z_stars:
            node = node_index(z_star, N)
            ref = reference.row(reference_row(z_star, reference.nz))
            samples = node_marginal(state, node)
            rows.append(SweepRow(
                scenario=scenario.name,
                N=N,
                t=t,
                z_star=float(z_star),
                node=node,
                w1_error=w1_empirical(samples, ref),
                bootstrap_se=bootstrap_se(samples, ref, seed + N, resamples),
                seed=int(seed),
                row_l1_deviation=row_l1_deviation(W_N, scenario.limit, z_star),
            ))
        logger.info(f"[Sweep] {scenario.name} N={N}: done ({len(z_stars)} probe points)")
    rows.sort(key=lambda r: (r.scenario, r.N, r.z_star))
    return rows


def sweep_decreasing(rows, factor=2.0):
    """Per z*, errors must drop by more than factor × bootstrap error between consecutive N."""
    by_point = {}
    for row in rows:
        by_point.setdefault((row.scenario, row.z_star), []).append(row)
    verdicts = {}
    for key, series in by_point.items():
        series.sort(key=lambda r: r.N)
        verdicts[key] = all(
            a.w1_error - b.w1_error > factor * max(a.bootstrap_se, b.bootstrap_se)
            for a, b in zip(series, series[1:])
        )
    return verdicts


def write_sweep_csv(rows, path):
    return write_csv(path, SWEEP_HEADER, (r.csv_row() for r in rows))


# ─── Concentration ────────────────────────────────────────────────────

def pushforward_lipschitz_constant(f, h, alpha, C):
    """C·(||f||_{C¹} + 2|α|·||h||_{C¹}), the constant after one step of the dynamics."""
    f_c1 = 1.0 + f.derivative_sups[0]
    return C * (f_c1 + 2.0 * abs(alpha) * ck_norm(h, 1))


@dataclass
class ConcentrationResult:
    eps: list
    tails: list
    hits: list
    censored: list
    fit: list
    envelope: list
    slope: Optional[float] = None
    intercept: Optional[float] = None
    r_squared: Optional[float] = None
    C1: Optional[float] = None
    C2: Optional[float] = None
    degenerate: bool = False
    fit_ok: bool = False
    N: int = 0
    R: int = 0
    t: int = 0
    pushforward_constant: Optional[float] = None

    def csv_rows(self):
        return [(e, tail, fit) for e, tail, fit in zip(self.eps, self.tails, self.fit)]

    def to_dict(self):
        return dict(self.__dict__)


def empirical_mean_field(system, state, x, node=0):
    """ψ_r = N⁻¹ Σ_j A_ij h(x, x_j^(r)) for each realization r."""
    if not 0 <= node < system.N:
        raise IndexError(f"node {node} out of range")
    H = system.h.eval(x, state.coords)
    return H @ system.adjacency.weights[node] / system.N


def concentration_probe(system, state, x, eps_list, node=0):
    """
    Empirical tails P(|ψ − mean ψ| > ε) and a least-squares fit of log(tail)
    against ε²N; tails with fewer than MIN_TAIL_HITS hits are censored.
    """
    psi = empirical_mean_field(system, state, x, node)
    dev = np.abs(psi - psi.mean())
    N = system.N
    eps = [float(e) for e in eps_list]
    hits = [int(np.sum(dev > e)) for e in eps]
    tails = [h / state.R for h in hits]
    censored = [h < MIN_TAIL_HITS for h in hits]
    result = ConcentrationResult(
        eps=eps, tails=tails, hits=hits, censored=censored,
        fit=[None] * len(eps), envelope=[None] * len(eps),
        N=N, R=state.R, t=state.t,
    )
    if np.ptp(psi) == 0:
        result.degenerate = True
        logger.warning("[Concentration] empirical mean field is constant; no fit")
        return result
    usable = [i for i, c in enumerate(censored) if not c]
    if len(usable) < 3:
        logger.warning(f"[Concentration] only {len(usable)} uncensored tail points; no fit")
        return result
    u = np.array([eps[i] ** 2 * N for i in usable])
    logs = np.log([tails[i] for i in usable])
    fit = stats.linregress(u, logs)
    result.slope = float(fit.slope)
    result.intercept = float(fit.intercept)
    result.r_squared = float(fit.rvalue ** 2)
    result.fit_ok = result.slope < 0
    if result.fit_ok:
        result.C2 = -result.slope
        result.C1 = float(max(tails[i] * math.exp(result.C2 * eps[i] ** 2 * N) for i in usable))
        for i, e in enumerate(eps):
            arg = e ** 2 * N
            result.fit[i] = math.exp(result.intercept + result.slope * arg)
            result.envelope[i] = result.C1 * math.exp(-result.C2 * arg)
    return result


def write_concentration_csv(result, path):
    rows = [(e, t, "" if f is None else f) for e, t, f in zip(result.eps, result.tails, result.fit)]
    return write_csv(path, CONCENTRATION_HEADER, rows)


# ─── Trajectory dumps ─────────────────────────────────────────────────

def dump_trajectory(frames, path):
    """Header (R, N, T) then coords as an R×N×T float64 array."""
    stacked = np.stack(frames, axis=-1)
    return write_binary(path, stacked.shape, stacked)


def load_trajectory(path):
    _, data = read_binary(path, 3)
    return data
