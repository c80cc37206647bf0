"""
Local dynamics f and pairwise coupling h.

Maps and couplings are closed-form lifts with exact derivative closures, so
fiber maps can be Newton-solved and bounded without interpolation error.
"""
import logging
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from sto_engine.errors import ParameterError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

# C^k norm grid: start size and refinement policy
CK_GRID_START = 512
CK_GRID_MAX = 4096
CK_STABLE_TOL = 1e-6


@dataclass(frozen=True)
class ExpandingMap:
    """Orientation-preserving expanding circle map given by its lift."""

    name: str
    lift_eval: Callable[[np.ndarray], np.ndarray]
    derivatives: tuple  # (f', f'', f''') as vectorized closures
    degree: int
    min_slope: float
    c3_bound: float
    derivative_sups: tuple  # certified sup|f^(i)|, i = 1..3

    def lift(self, x):
        return self.lift_eval(np.asarray(x, dtype=float))

    def derivative_eval(self, x, order):
        if order not in (1, 2, 3):
            raise ParameterError(f"derivative order must be 1, 2 or 3, got {order}")
        return self.derivatives[order - 1](np.asarray(x, dtype=float))


@dataclass(frozen=True)
class CouplingFunction:
    """Biperiodic coupling h(x, y) with all mixed partials ∂₁ᵃ∂₂ᵇh."""

    name: str
    partial: Callable[[np.ndarray, np.ndarray, int, int], np.ndarray]
    ck_bounds: tuple  # certified upper bounds on ||h||_{C^k}, k = 0..3
    # h(x, y) = sum_m a_m(x) * b_m(y) when available
    separable_terms: Optional[tuple] = field(default=None, compare=False)

    def eval(self, x, y):
        return self.partial(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 0, 0)

    def d1_eval(self, x, y, order):
        if order not in (1, 2, 3):
            raise ParameterError(f"d1 order must be 1, 2 or 3, got {order}")
        return self.partial(np.asarray(x, dtype=float), np.asarray(y, dtype=float), order, 0)

    @property
    def sup_abs(self):
        return self.ck_bounds[0]


# ─── Operations ───────────────────────────────────────────────────────

def eval_map(fmap, x):
    """Return f(x) on the circle, i.e. the lift reduced mod 1."""
    return np.mod(fmap.lift(x), 1.0)


def map_derivative(fmap, x, order):
    """Return f^(order)(x)."""
    return fmap.derivative_eval(x, order)


def coupling_eval(h, x, y, d1_order=0):
    """Return ∂₁^{d1_order} h(x, y)."""
    if d1_order not in (0, 1, 2, 3):
        raise ParameterError(f"d1_order must be in 0..3, got {d1_order}")
    if d1_order == 0:
        return h.eval(x, y)
    return h.d1_eval(x, y, d1_order)


def _gridded_ck(h, k, n):
    grid = np.arange(n) / n
    X, Y = np.meshgrid(grid, grid, indexing="ij")
    total = 0.0
    for order in range(k + 1):
        for a in range(order + 1):
            total += float(np.max(np.abs(h.partial(X, Y, a, order - a))))
    return total


@lru_cache(maxsize=64)
def _ck_norm_cached(h, k):
    n = CK_GRID_START
    value = _gridded_ck(h, k, n)
    while n < CK_GRID_MAX:
        n *= 2
        refined = _gridded_ck(h, k, n)
        if abs(refined - value) < CK_STABLE_TOL:
            return refined
        value = refined
    logger.warning(f"C^{k} norm of {h.name} not stable to {CK_STABLE_TOL} at grid {n}")
    return value


def ck_norm(h, k):
    """
    C^k norm of h: sum over all partials of total order <= k of their gridded
    sup modulus, refined x2 until stable.
    """
    if k not in (0, 1, 2, 3):
        raise ParameterError(f"C^k norm supports k in 0..3, got {k}")
    return _ck_norm_cached(h, k)


# ─── Catalog ──────────────────────────────────────────────────────────

def linear_map(degree):
    """x -> d·x."""
    d = int(degree)
    if d < 2:
        raise ParameterError(f"degree must be >= 2, got {d}")
    names = {2: "doubling", 3: "tripling"}
    return ExpandingMap(
        name=names.get(d, f"linear({d})"),
        lift_eval=lambda x: d * x,
        derivatives=(
            lambda x: np.full_like(x, float(d)),
            lambda x: np.zeros_like(x),
            lambda x: np.zeros_like(x),
        ),
        degree=d,
        min_slope=float(d),
        c3_bound=2.0 * d,
        derivative_sups=(float(d), 0.0, 0.0),
    )


def perturbed_linear_map(degree, eps):
    """x -> d·x + ε·sin(2πx)/(2π), expanding for ε < d - 1."""
    d = int(degree)
    eps = float(eps)
    if not 0.0 <= abs(eps) < d - 1:
        raise ParameterError(f"perturbation must satisfy |eps| < {d - 1}, got {eps}")
    base = {2: "perturbed_doubling", 3: "perturbed_tripling"}.get(d, f"perturbed_linear_{d}")
    sups = (d + abs(eps), TWO_PI * abs(eps), TWO_PI ** 2 * abs(eps))
    return ExpandingMap(
        name=f"{base}({eps:g})",
        lift_eval=lambda x: d * x + eps * np.sin(TWO_PI * x) / TWO_PI,
        derivatives=(
            lambda x: d + eps * np.cos(TWO_PI * x),
            lambda x: -TWO_PI * eps * np.sin(TWO_PI * x),
            lambda x: -TWO_PI ** 2 * eps * np.cos(TWO_PI * x),
        ),
        degree=d,
        min_slope=d - abs(eps),
        c3_bound=(d + abs(eps) / TWO_PI) + sum(sups),
        derivative_sups=sups,
    )


def _shifted_sin(theta, n):
    """n-th derivative of sin evaluated at theta."""
    return np.sin(theta + n * math.pi / 2.0)


def _shifted_cos(theta, n):
    return np.cos(theta + n * math.pi / 2.0)


def _ck_series(sups_by_order):
    """Cumulative C^k bounds from per-order sums of partial sups."""
    return tuple(float(sum(sups_by_order[: k + 1])) for k in range(4))


def _h1_partial(x, y, a, b):
    # h1 = sin(2π(y−x))/(2π); each ∂₁ brings a factor −2π, each ∂₂ a factor 2π
    theta = TWO_PI * (y - x)
    return (TWO_PI ** (a + b - 1)) * ((-1.0) ** a) * _shifted_sin(theta, a + b)


def _h2_partial(x, y, a, b):
    # h2 = sin(2πy)·cos(2πx)/(2π)
    return (TWO_PI ** (a + b - 1)) * _shifted_cos(TWO_PI * x, a) * _shifted_sin(TWO_PI * y, b)


def _zero_partial(x, y, a, b):
    return np.zeros(np.broadcast(x, y).shape)


def coupling_h1():
    """h1(x, y) = sin(2π(y−x))/(2π)."""
    # order j has j+1 partials, each of sup (2π)^{j-1}
    per_order = [(j + 1) * TWO_PI ** (j - 1) for j in range(4)]
    return CouplingFunction(
        name="h1",
        partial=_h1_partial,
        ck_bounds=_ck_series(per_order),
        separable_terms=(
            (lambda x: np.cos(TWO_PI * x) / TWO_PI, lambda y: np.sin(TWO_PI * y)),
            (lambda x: -np.sin(TWO_PI * x) / TWO_PI, lambda y: np.cos(TWO_PI * y)),
        ),
    )


def coupling_h2():
    """h2(x, y) = sin(2πy)·cos(2πx)/(2π)."""
    per_order = [(j + 1) * TWO_PI ** (j - 1) for j in range(4)]
    return CouplingFunction(
        name="h2",
        partial=_h2_partial,
        ck_bounds=_ck_series(per_order),
        separable_terms=(
            (lambda x: np.cos(TWO_PI * x) / TWO_PI, lambda y: np.sin(TWO_PI * y)),
        ),
    )


def coupling_zero():
    return CouplingFunction(
        name="zero",
        partial=_zero_partial,
        ck_bounds=(0.0, 0.0, 0.0, 0.0),
        separable_terms=(),
    )


MAP_FACTORIES = {
    "doubling": lambda eps=None: linear_map(2),
    "tripling": lambda eps=None: linear_map(3),
    "perturbed_doubling": lambda eps=0.3: perturbed_linear_map(2, 0.3 if eps is None else eps),
    "perturbed_tripling": lambda eps=0.3: perturbed_linear_map(3, 0.3 if eps is None else eps),
}

COUPLING_FACTORIES = {
    "h1": coupling_h1,
    "h2": coupling_h2,
    "zero": coupling_zero,
}

_NAME_WITH_PARAM = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([-+0-9.eE]+)\s*\))?\s*$")


def builtin_library():
    """Catalog of default maps and couplings keyed by name."""
    catalog = {name: factory() for name, factory in MAP_FACTORIES.items()}
    catalog.update({name: factory() for name, factory in COUPLING_FACTORIES.items()})
    return catalog


def lookup_map(name, eps=None):
    """Resolve 'doubling', 'perturbed_doubling' or 'perturbed_doubling(0.3)'."""
    match = _NAME_WITH_PARAM.match(str(name))
    if not match or match.group(1) not in MAP_FACTORIES:
        raise KeyError(f"unknown map: {name}")
    inline = match.group(2)
    if inline is not None:
        eps = float(inline)
    return MAP_FACTORIES[match.group(1)](eps)


def lookup_coupling(name):
    key = str(name).strip()
    if key not in COUPLING_FACTORIES:
        raise KeyError(f"unknown coupling: {name}")
    return COUPLING_FACTORIES[key]()


def lookup(name):
    """Resolve a catalog entry, map or coupling."""
    try:
        return lookup_map(name)
    except KeyError:
        return lookup_coupling(name)
