import numpy as np
import pytest

from sto_engine.dynamics.densities import density_cdf, uniform_density
from sto_engine.dynamics.fibered import make_profile, sinusoid, uniform_fibered
from sto_engine.dynamics.graphon import AdjacencyMatrix, sample_er
from sto_engine.errors import ParameterError
from sto_engine.services import finite_sim
from sto_engine.services.finite_sim import (
    EnsembleState,
    NetworkSystem,
    SweepRow,
    concentration_probe,
    convergence_sweep,
    dump_trajectory,
    er_scenario,
    inverse_cdf,
    load_trajectory,
    marginal_error,
    node_index,
    node_marginal,
    pushforward_lipschitz_constant,
    quantized_scenario,
    reference_row,
    run,
    sample_initial,
    step,
    sweep_decreasing,
    write_sweep_csv,
)


def _uniform_state(R, N, seed=0):
    return EnsembleState(coords=np.random.default_rng(seed).random((R, N)))


def test_node_index():
    assert node_index(0.5, 100) == 49
    assert node_index(1.0, 100) == 99
    assert node_index(0.0, 10) == 0
    assert node_index(0.25, 3) == 0
    assert reference_row(1.0, 8) == 7
    assert reference_row(0.5, 8) == 4


def test_inverse_cdf_uniform():
    nu = uniform_fibered(2, 16)
    u = np.array([0.1, 0.5, 0.93])
    x = inverse_cdf(nu, np.zeros(3, dtype=int), u)
    assert np.allclose(x, u, atol=1e-12)


def test_inverse_cdf_matches_fiber_cdf(wavy):
    u = np.linspace(0.01, 0.99, 25)
    for k in (0, 5):
        x = inverse_cdf(wavy, np.full(u.size, k), u)
        assert np.allclose(density_cdf(wavy.row(k), x), u, atol=1e-9)


def test_sample_initial_is_reproducible(wavy):
    a = sample_initial(wavy, 30, 8, seed=4)
    b = sample_initial(wavy, 30, 8, seed=4)
    assert a.coords.shape == (8, 30)
    assert np.array_equal(a.coords, b.coords)
    assert np.all((a.coords >= 0) & (a.coords < 1))
    assert not np.array_equal(a.coords, sample_initial(wavy, 30, 8, seed=5).coords)
    with pytest.raises(ParameterError):
        sample_initial(wavy, 0, 8, seed=4)


def test_sampled_marginals_follow_fiber_law():
    nu = make_profile(4, 64, lambda z: sinusoid(0.5))
    state = sample_initial(nu, 2, 4000, seed=1)
    assert marginal_error(state, 0, nu.row(0)) < 0.02


def test_ensemble_state_validation():
    with pytest.raises(ParameterError):
        EnsembleState(coords=np.zeros(5))
    state = _uniform_state(3, 4)
    with pytest.raises(IndexError):
        node_marginal(state, 4)
    with pytest.raises(ParameterError):
        marginal_error(state, 0, np.ones(16))
    with pytest.raises(ParameterError):
        marginal_error(state, 0, uniform_density(16), expected_nx=32)


def test_uncoupled_step_is_the_map(doubling, h1):
    system = NetworkSystem(adjacency=AdjacencyMatrix(np.full((5, 5), 0.5)), f=doubling, h=h1, alpha=0.0)
    state = _uniform_state(4, 5)
    after = step(system, state)
    assert after.t == 1
    assert np.allclose(after.coords, np.mod(2 * state.coords, 1.0), atol=1e-15)


def test_coupled_step_matches_direct_sum(perturbed, h1):
    N = 6
    weights = np.random.default_rng(2).random((N, N))
    system = NetworkSystem(adjacency=AdjacencyMatrix(weights), f=perturbed, h=h1, alpha=0.4)
    state = _uniform_state(3, N, seed=8)
    X = state.coords
    coupling = np.stack([
        np.sum(weights * h1.eval(x[:, None], x[None, :]), axis=1) for x in X
    ])
    expected = np.mod(perturbed.lift(X) + 0.4 / N * coupling, 1.0)
    assert np.allclose(step(system, state).coords, expected, atol=1e-13)


def _circle_gap(a, b):
    return np.max(np.abs((a - b + 0.5) % 1.0 - 0.5))


def test_step_commutes_with_node_relabelling(perturbed, h1):
    N = 7
    weights = np.random.default_rng(4).random((N, N))
    perm = np.random.default_rng(5).permutation(N)
    system = NetworkSystem(adjacency=AdjacencyMatrix(weights), f=perturbed, h=h1, alpha=0.3)
    relabelled = NetworkSystem(adjacency=AdjacencyMatrix(weights[perm][:, perm]), f=perturbed, h=h1, alpha=0.3)
    state = _uniform_state(5, N, seed=12)
    after = step(system, state)
    after_relabelled = step(relabelled, EnsembleState(coords=state.coords[:, perm]))
    assert _circle_gap(after_relabelled.coords, after.coords[:, perm]) < 1e-13


def test_complete_graph_preserves_synchrony(perturbed, h1):
    system = NetworkSystem(adjacency=AdjacencyMatrix(np.ones((6, 6))), f=perturbed, h=h1, alpha=0.3)
    start = np.random.default_rng(3).random((4, 1))
    final = run(system, EnsembleState(coords=np.repeat(start, 6, axis=1)), 5)
    for r in range(4):
        assert _circle_gap(final.coords[r], final.coords[r, 0]) < 1e-12
    assert _circle_gap(final.coords[:, 0], start[:, 0]) > 1e-3


def test_step_is_thread_independent(perturbed, h1):
    system = NetworkSystem(adjacency=sample_er(40, 0.5, seed=3), f=perturbed, h=h1, alpha=0.3)
    state = _uniform_state(finite_sim.BLOCK_SIZE * 2 + 17, 40, seed=6)
    one = run(system, state, 3, threads=1)
    many = run(system, state, 3, threads=4)
    assert np.array_equal(one.coords, many.coords)


def test_step_rejects_size_mismatch(doubling, h1):
    system = NetworkSystem(adjacency=AdjacencyMatrix(np.ones((4, 4))), f=doubling, h=h1, alpha=0.1)
    with pytest.raises(ParameterError):
        step(system, _uniform_state(2, 5))
    with pytest.raises(ParameterError):
        NetworkSystem(adjacency=AdjacencyMatrix(np.ones((4, 4))), f=doubling, h=h1, alpha=float("nan"))


def test_trajectory_dump(tmp_path, doubling, h1):
    system = NetworkSystem(adjacency=AdjacencyMatrix(np.ones((3, 3))), f=doubling, h=h1, alpha=0.1)
    frames = []
    run(system, _uniform_state(2, 3), 4, frames=frames)
    dump_trajectory(frames, tmp_path / "trajectory.bin")
    data = load_trajectory(tmp_path / "trajectory.bin")
    assert data.shape == (2, 3, 4)
    assert np.array_equal(data[..., -1], frames[-1])


def test_scenarios(decay):
    quantized = quantized_scenario("decay", decay)
    assert quantized.build(8, 0).N == 8
    er = er_scenario(0.5)
    assert er.limit.p == 0.5
    assert np.array_equal(er.build(20, 1).weights, sample_er(20, 0.5, 1).weights)


def test_convergence_sweep_rows(tmp_path, perturbed, h1):
    nu = make_profile(4, 64, lambda z: sinusoid(0.3))
    rows = convergence_sweep(nu, er_scenario(0.5), h1, perturbed, 0.2, [20, 80], 1, 200, [0.5, 0.9], seed=3)
    assert [(r.N, r.z_star) for r in rows] == [(20, 0.5), (20, 0.9), (80, 0.5), (80, 0.9)]
    assert all(r.w1_error >= 0 and r.bootstrap_se > 0 for r in rows)
    assert rows[2].node == 39
    again = convergence_sweep(nu, er_scenario(0.5), h1, perturbed, 0.2, [20, 80], 1, 200, [0.5, 0.9], seed=3)
    assert [r.w1_error for r in rows] == [r.w1_error for r in again]
    write_sweep_csv(rows, tmp_path / "sweep.csv")
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == ",".join(finite_sim.SWEEP_HEADER)
    assert len(lines) == 5


def test_convergence_sweep_arguments(perturbed, h1, wavy):
    with pytest.raises(ParameterError):
        convergence_sweep(wavy, er_scenario(0.5), h1, perturbed, 0.2, [80, 20], 1, 10, [0.5], seed=0)
    with pytest.raises(ParameterError):
        convergence_sweep(wavy, er_scenario(0.5), h1, perturbed, 0.2, [20], 0, 10, [0.5], seed=0)


def test_sweep_decreasing():
    def row(N, err, se):
        return SweepRow("er", N, 1, 0.5, 0, err, se, 0)

    assert sweep_decreasing([row(100, 0.1, 0.01), row(400, 0.05, 0.01)]) == {("er", 0.5): True}
    assert sweep_decreasing([row(100, 0.1, 0.01), row(400, 0.09, 0.01)]) == {("er", 0.5): False}


def test_concentration_fit(perturbed, h1):
    N = 200
    system = NetworkSystem(adjacency=sample_er(N, 0.5, seed=9), f=perturbed, h=h1, alpha=0.2)
    state = _uniform_state(4000, N, seed=10)
    spread = np.std(finite_sim.empirical_mean_field(system, state, 0.3))
    eps = [m * spread for m in (0.5, 1.0, 1.5, 2.0, 2.5)]
    result = concentration_probe(system, state, 0.3, eps)
    assert result.tails == sorted(result.tails, reverse=True)
    assert result.fit_ok
    assert result.C2 > 0
    assert not result.degenerate
    assert all(c is False for c in result.censored)


def test_concentration_degenerate_without_edges(perturbed, h1):
    system = NetworkSystem(adjacency=sample_er(30, 0.0, seed=1), f=perturbed, h=h1, alpha=0.2)
    result = concentration_probe(system, _uniform_state(50, 30), 0.3, [0.01, 0.02, 0.03])
    assert result.degenerate
    assert not result.fit_ok
    assert result.tails == [0.0, 0.0, 0.0]


def test_pushforward_constant(doubling, h1):
    assert pushforward_lipschitz_constant(doubling, h1, 0.0, 2.0) == pytest.approx(6.0)
