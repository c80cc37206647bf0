import numpy as np
import pytest

from sto_engine.dynamics.graphon import (
    AdjacencyMatrix,
    ConstantGraphon,
    ball_cells,
    graphon_eval,
    graphon_l1_distance,
    integrated_oscillation,
    quantize_kernel,
    row_l1_deviation,
    row_l1_norm,
    sample_er,
    scaled_graphon,
    step_graphon_from_matrix,
    translation_graphon,
    var_p_l1,
)
from sto_engine.errors import ParameterError


def test_graphon_eval_examples(block, constant_half, decay):
    assert graphon_eval(block, 0.25, 0.25) == 1.0
    assert graphon_eval(block, 0.25, 0.75) == pytest.approx(0.2)
    assert graphon_eval(constant_half, 0.1, 0.9) == 0.5
    assert graphon_eval(decay, 0.2, 0.7) == pytest.approx(0.5)


def test_block_cut_belongs_to_left_cell(block):
    assert graphon_eval(block, 0.5, 0.5) == 1.0
    assert graphon_eval(block, 0.5 + 1e-12, 0.5 + 1e-12) == 0.5


def test_graphon_eval_rejects_out_of_range(constant_half):
    with pytest.raises(ParameterError):
        graphon_eval(constant_half, -0.1, 0.5)
    with pytest.raises(ParameterError):
        graphon_eval(constant_half, 0.5, 1.5)


def test_step_graphon():
    W = step_graphon_from_matrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert graphon_eval(W, 0.25, 0.75) == 0.0
    assert graphon_eval(W, 0.25, 0.25) == 1.0
    # node cells are right-closed: 0.5 sits in the first cell
    assert graphon_eval(W, 0.5, 0.25) == 1.0
    single = step_graphon_from_matrix(np.array([[0.3]]))
    z = np.linspace(0, 1, 11)
    assert np.all(single.evaluate(z[:, None], z[None, :]) == 0.3)


def test_sample_er_extremes_and_rows():
    assert not sample_er(20, 0.0, seed=1).weights.any()
    assert sample_er(20, 1.0, seed=1).weights.all()
    for seed in range(5):
        A = sample_er(1000, 0.5, seed)
        assert A.is_binary
        assert np.max(np.abs(A.weights.mean(axis=1) - 0.5)) < 1000 ** (-1 / 3)
    with pytest.raises(ParameterError):
        sample_er(10, 1.5, seed=0)


def test_sample_er_is_reproducible():
    a = sample_er(50, 0.3, seed=7).weights
    b = sample_er(50, 0.3, seed=7).weights
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_er(50, 0.3, seed=8).weights)


def test_er_rows_converge():
    """Row means of ER samples approach p as N grows."""
    deviations = [
        np.max(np.abs(sample_er(N, 0.5, seed=3).weights.mean(axis=1) - 0.5))
        for N in (100, 400, 1600)
    ]
    assert deviations[-1] < deviations[0]


def test_quantize_kernel(decay, block):
    A = quantize_kernel(decay, 4)
    assert A.weights[0, 2] == pytest.approx(0.5)
    assert np.allclose(np.diag(A.weights), 1.0)
    assert quantize_kernel(block, 4).weights[0, 3] == pytest.approx(0.2)
    with pytest.raises(ParameterError):
        quantize_kernel(step_graphon_from_matrix(np.eye(3)), 4)


def test_row_l1_norm_examples(constant_half, block, decay):
    assert row_l1_norm(constant_half, 0.3) == pytest.approx(0.5)
    assert row_l1_norm(block, 0.25) == pytest.approx(0.6)
    assert row_l1_norm(decay, 0.0) == pytest.approx(0.5)


def test_linf_l1_bounds(constant_half, block, decay):
    assert constant_half.linf_l1_bound == 0.5
    assert block.linf_l1_bound == pytest.approx(0.6)
    assert decay.linf_l1_bound == pytest.approx(0.75, abs=1e-3)


def test_graphon_l1_distance(constant_half):
    assert graphon_l1_distance(constant_half, constant_half) == 0.0
    assert graphon_l1_distance(constant_half, ConstantGraphon(0.7)) == pytest.approx(0.2)
    W_N = step_graphon_from_matrix(sample_er(200, 0.5, seed=11))
    assert graphon_l1_distance(W_N, constant_half) == pytest.approx(0.5)


def test_row_l1_deviation_of_quantized_block(block):
    W_N = step_graphon_from_matrix(quantize_kernel(block, 64))
    assert row_l1_deviation(W_N, block, 0.25) == pytest.approx(0.0, abs=1e-12)


def test_ball_cells_clipped():
    assert ball_cells(0.5, 0.1, 10) == (4, 5)
    assert ball_cells(0.01, 0.5, 10) == (0, 5)
    assert ball_cells(0.99, 0.5, 10) == (4, 9)


def test_var_p_l1_examples(constant_half, block, decay):
    assert var_p_l1(constant_half) == 0.0
    assert var_p_l1(block, p_exp=1.0) == pytest.approx(1.1, rel=1e-9)
    assert np.isfinite(var_p_l1(decay, p_exp=1.0))
    with pytest.raises(ParameterError):
        var_p_l1(block, r_grid=())


def test_integrated_oscillation_rejects_bad_exponent():
    with pytest.raises(ParameterError):
        integrated_oscillation(np.zeros((4, 4)), (0.5,), 1.5)


def test_scaled_graphon(block):
    W = scaled_graphon(block, 1.1)
    assert graphon_eval(W, 0.25, 0.25) == pytest.approx(1.1)
    assert W.linf_l1_bound == pytest.approx(0.66)


def test_adjacency_validation():
    with pytest.raises(ParameterError):
        AdjacencyMatrix(np.zeros((2, 3)))
    assert translation_graphon("exp", rate=5.0).lip_bound == 5.0
    with pytest.raises(ParameterError):
        translation_graphon("cubic")
