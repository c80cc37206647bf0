import math

import numpy as np
import pytest

from sto_engine.dynamics.densities import (
    CircleDensity,
    SignedCircleFunction,
    bv1_seminorm,
    bv2_seminorm,
    density_cdf,
    density_from_function,
    dump_csv,
    dump_json,
    from_json,
    hilbert_metric_positive,
    l1_norm,
    load_csv,
    load_json,
    normalize,
    resample,
    sample_function,
    sup_distance,
    to_json,
    uniform_density,
    w1_distance,
    w1_empirical,
)
from sto_engine.dynamics.fibered import sinusoid
from sto_engine.errors import DomainError, ParameterError


def _hat(nx):
    """Triangle of height 1 supported on [0, 1/2]."""
    x = np.arange(nx) / nx
    return SignedCircleFunction(np.clip(1.0 - np.abs(x - 0.25) * 4.0, 0.0, None))


def test_normalize_examples():
    assert np.allclose(normalize(SignedCircleFunction(np.full(64, 2.0))).values, 1.0)
    wavy = density_from_function(sinusoid(0.5), 128)
    again = normalize(wavy)
    assert np.max(np.abs(again.values - wavy.values)) < 1e-12
    with pytest.raises(DomainError):
        normalize(SignedCircleFunction(np.zeros(8)))
    with pytest.raises(DomainError):
        normalize(SignedCircleFunction([1.0, -0.5, 1.0, 1.0]))


def test_density_rejects_bad_mass():
    with pytest.raises(DomainError):
        CircleDensity(np.full(8, 1.1))
    with pytest.raises(ParameterError):
        SignedCircleFunction([1.0])


def test_l1_norm():
    assert l1_norm(uniform_density(32)) == pytest.approx(1.0)
    assert l1_norm(SignedCircleFunction(np.zeros(16))) == 0.0
    f = sample_function(lambda x: 0.5 * np.sin(2 * np.pi * x), 256)
    assert l1_norm(f) == pytest.approx(1 / math.pi, abs=1e-3)


def test_bv1_seminorm():
    assert bv1_seminorm(uniform_density(64)) == 0.0
    assert bv1_seminorm(sample_function(sinusoid(0.5), 512)) == pytest.approx(2.0, abs=1e-3)
    assert bv1_seminorm(_hat(64)) == pytest.approx(2.0)


def test_bv2_seminorm():
    assert bv2_seminorm(uniform_density(64)) == 0.0
    # slope jumps 0 -> 4 -> -4 -> 0
    assert bv2_seminorm(_hat(64)) == pytest.approx(16.0)
    assert bv2_seminorm(sample_function(sinusoid(0.5), 1024)) == pytest.approx(4 * math.pi, rel=1e-3)


def test_w1_distance():
    u = uniform_density(256)
    g = density_from_function(sinusoid(0.5), 256)
    assert w1_distance(u, u) == 0.0
    assert w1_distance(u, g) == pytest.approx(1 / (2 * math.pi ** 2), abs=1e-4)
    assert w1_distance(u, g) == pytest.approx(w1_distance(g, u))


def test_w1_distance_is_shift_invariant_on_the_circle():
    """Moving mass across 0 costs the short way round."""
    left = density_from_function(lambda t: np.exp(-200 * np.minimum(np.abs(t - 0.05), 1 - np.abs(t - 0.05)) ** 2), 200)
    right = density_from_function(lambda t: np.exp(-200 * np.minimum(np.abs(t - 0.95), 1 - np.abs(t - 0.95)) ** 2), 200)
    assert w1_distance(left, right) == pytest.approx(0.1, abs=2e-3)


def test_density_cdf_endpoints():
    g = density_from_function(sinusoid(0.5), 64)
    assert density_cdf(g, 0.0) == pytest.approx(0.0)
    assert density_cdf(g, 1.0) == pytest.approx(1.0)
    assert density_cdf(uniform_density(16), 0.3) == pytest.approx(0.3)


def test_w1_empirical():
    u = uniform_density(64)
    assert w1_empirical([0.5], u) == pytest.approx(0.25, abs=1e-4)
    quantiles = (np.arange(4096) + 0.5) / 4096
    assert w1_empirical(quantiles, u) < 1e-3
    rng = np.random.default_rng(0)
    assert w1_empirical(rng.random(10_000), u) < 0.03
    with pytest.raises(ParameterError):
        w1_empirical([], u)


def test_hilbert_metric():
    u = uniform_density(64)
    g = density_from_function(sinusoid(0.5), 64)
    assert hilbert_metric_positive(u, u) == 0.0
    assert hilbert_metric_positive(u, g) == pytest.approx(math.log(3.0), abs=1e-9)
    with pytest.raises(DomainError):
        hilbert_metric_positive(u, SignedCircleFunction(np.r_[0.0, np.ones(63)]))


def test_sup_distance_metric():
    u = uniform_density(64)
    g = density_from_function(sinusoid(0.5), 64)
    assert sup_distance(u, g) == pytest.approx(0.5)
    rng = np.random.default_rng(5)
    a, b, c = (SignedCircleFunction(rng.normal(size=32)) for _ in range(3))
    assert sup_distance(a, c) <= sup_distance(a, b) + sup_distance(b, c) + 1e-15


def test_resample_keeps_density():
    g = density_from_function(sinusoid(0.5), 64)
    fine = resample(g, 256)
    assert isinstance(fine, CircleDensity)
    assert fine.nx == 256
    assert w1_distance(g, fine) < 1e-3


def test_density_files_reload(tmp_path):
    g = density_from_function(sinusoid(0.5, 0.1), 64)
    path = dump_csv(g, tmp_path / "density.csv")
    assert path.read_text().splitlines()[0] == "x,value"
    assert path.read_text().splitlines()[1].startswith("0.0,")
    again = load_csv(path)
    assert isinstance(again, CircleDensity)
    assert np.array_equal(again.values, g.values)
    dump_json(g, tmp_path / "density.json")
    assert np.array_equal(load_json(tmp_path / "density.json").values, g.values)


def test_density_json_text():
    f = SignedCircleFunction([0.5, -0.25, 0.1, 0.0])
    text = to_json(f)
    assert text.lstrip().startswith("[")
    assert np.array_equal(from_json(text, signed=True).values, f.values)
    with pytest.raises(DomainError):
        from_json(text)
    with pytest.raises(ParameterError):
        from_json('{"values": [1.0, 1.0]}')


def test_density_csv_header_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("z,value\n0.0,1.0\n0.5,1.0\n")
    with pytest.raises(ParameterError):
        load_csv(path)
