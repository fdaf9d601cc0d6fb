import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorjd.analysis import align_factors
from tensorjd.baselines import als, tensor_power_method
from tensorjd.synthetic import random_model
from tensorjd.tensor import CPModel, cp_to_tensor, make_rng


def indicator(d, *idx):
    return np.einsum("i,j,k->ijk", *(np.eye(d)[i] for i in idx))


# --- tensor power method ------------------------------------------------------------

def test_tpm_rank_one():
    est = tensor_power_method(3.0 * indicator(4, 0, 0, 0), 1)
    assert abs(est.weights[0] - 3.0) < 1e-10
    assert np.max(np.abs(est.A[:, 0] - np.eye(4)[0])) < 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_tpm_noiseless_orthogonal(seed):
    truth = random_model(8, 8, "ortho", seed=seed)
    T = cp_to_tensor(truth)
    est = tensor_power_method(T, 8, restarts=10, iters=100, seed=seed)
    assert align_factors(truth.A, est.A).mean_error < 1e-6
    # deflation telescopes back to the input
    assert np.linalg.norm(cp_to_tensor(est) - T) < 1e-8
    # each recovered pair is a fixed point of the power map
    for m in range(8):
        u = est.A[:, m]
        assert np.linalg.norm(np.einsum("ijk,j,k->i", T, u, u) - est.weights[m] * u) < 1e-8


def test_tpm_reports_hyperparameters_and_zero_tensor():
    est = tensor_power_method(np.zeros((3, 3, 3)), 2, restarts=2, iters=5)
    assert est.flags["restarts"] == 2 and est.flags["iters"] == 5
    assert est.flags.get("zero_tensor")
    assert not np.any(est.weights)
    assert np.allclose(np.linalg.norm(est.A, axis=0), 1.0)


def test_tpm_deterministic():
    T = cp_to_tensor(random_model(5, 3, seed=4))
    a, b = tensor_power_method(T, 3, seed=9), tensor_power_method(T, 3, seed=9)
    assert a == b


def test_tpm_rejects_rank():
    with pytest.raises(ValueError):
        tensor_power_method(np.zeros((2, 2, 2)), 3)


# --- ALS ------------------------------------------------------------------------------

def test_als_rank_one():
    est = als(2.0 * indicator(3, 0, 1, 2), 1)
    assert abs(est.weights[0] - 2.0) < 1e-8
    for F, i in zip(est.factors, range(3)):
        assert np.max(np.abs(F[:, 0] - np.eye(3)[i])) < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32))
def test_als_objective_non_increasing(d, k, seed):
    k = min(k, d)
    T = make_rng(seed).standard_normal((d, d, d))
    trace = als(T, k, iters=15, seed=seed).flags["trace"]
    assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_als_recovers_from_some_seed():
    truth = random_model(6, 3, "ortho", seed=0)
    T = cp_to_tensor(truth)
    errors = []
    for seed in range(20):
        est = als(T, 3, iters=100, seed=seed)
        errors.append(align_factors(truth.A, est.A).mean_error)
    assert min(errors) < 1e-6


def test_als_ridge_on_rank_deficient_system():
    # the zero tensor sends the first factor to zero, so later Gram matrices vanish
    est = als(np.zeros((3, 3, 3)), 2, iters=3, seed=1)
    assert est.flags["ridge"] >= 1
    assert np.all(np.isfinite(est.weights)) and est.flags["trace"][-1] == 0.0


def test_als_deterministic():
    T = cp_to_tensor(random_model(4, 2, "asym", seed=3))
    assert als(T, 2, seed=5) == als(T, 2, seed=5)


def test_als_rejects_non_cube():
    with pytest.raises(ValueError):
        als(np.zeros((2, 3, 2)), 1)
