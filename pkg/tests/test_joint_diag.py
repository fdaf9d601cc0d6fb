import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorjd.analysis import align_factors
from tensorjd.joint_diag import (
    DiagOptions,
    as_matrix_set,
    diagonalize,
    jacobi_diagonalize,
    off_objective,
    qrj1d_diagonalize,
)
from tensorjd.tensor import make_rng


def random_orthogonal(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def well_conditioned(rng, d, cond_max=10.0):
    while True:
        U = rng.standard_normal((d, d))
        U /= np.linalg.norm(U, axis=0)
        if np.linalg.cond(U) < cond_max:
            return U


def synth(U, rng, L):
    lam = rng.standard_normal((L, U.shape[1]))
    return np.einsum("ik,lk,jk->lij", U, lam, U)


def check_result(ms, res, orthogonal):
    d = ms.shape[1]
    assert np.max(np.abs(res.mixing @ res.inverse - np.eye(d))) < 1e-10
    if orthogonal:
        assert np.max(np.abs(res.mixing.T @ res.mixing - np.eye(d))) < 1e-10
    diag = np.einsum("lii->il", res.inverse @ ms @ res.inverse.T)
    assert np.max(np.abs(diag - res.diagonals)) < 1e-10 * max(1.0, np.max(np.abs(diag)))
    assert abs(off_objective(ms, res.inverse) - res.objective) < 1e-10 * max(1.0, res.objective)
    if res.trace is not None:
        assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))


# --- off_objective ----------------------------------------------------------------

def test_off_objective_examples():
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert off_objective([np.diag([1.0, 2.0])], np.eye(2)) == 0.0
    assert off_objective([swap], np.eye(2)) == 2.0
    c = s = math.sqrt(0.5)
    rot = np.array([[c, s], [-s, c]])
    assert off_objective([swap], rot) < 1e-30


def test_off_objective_dimension_mismatch():
    with pytest.raises(ValueError):
        off_objective([np.eye(2)], np.eye(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32))
def test_off_objective_nonnegative(d, L, seed):
    rng = make_rng(seed)
    ms = rng.standard_normal((L, d, d))
    assert off_objective(ms, rng.standard_normal((d, d))) >= 0.0


def test_matrix_set_validation():
    with pytest.raises(ValueError):
        as_matrix_set(np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        as_matrix_set(np.zeros((0, 2, 2)))
    with pytest.raises(ValueError):
        as_matrix_set([[[np.nan]]])


def test_options_validation():
    with pytest.raises(ValueError):
        DiagOptions(tol=0.0)
    with pytest.raises(ValueError):
        DiagOptions(max_sweeps=0)
    with pytest.raises(ValueError):
        DiagOptions(mode="unitary")


# --- Jacobi -------------------------------------------------------------------------

def test_jacobi_diagonal_input():
    ms = np.array([np.diag([3.0, 1.0]), np.diag([5.0, 2.0])])
    res = jacobi_diagonalize(ms)
    assert res.objective == 0.0 and res.converged
    assert np.allclose(np.abs(res.mixing), np.eye(2))


def test_jacobi_two_by_two_closed_form():
    # eigenpairs of [[2, 1], [1, 2]]: 3 on (1, 1)/sqrt2 and 1 on (1, -1)/sqrt2
    res = jacobi_diagonalize([[[2.0, 1.0], [1.0, 2.0]]])
    check_result(as_matrix_set([[[2.0, 1.0], [1.0, 2.0]]]), res, True)
    expected = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2)
    al = align_factors(expected, res.mixing)
    assert al.mean_error < 1e-12
    assert np.allclose(res.diagonals[al.permutation, 0], [3.0, 1.0], atol=1e-12)


def test_jacobi_zero_input():
    res = jacobi_diagonalize(np.zeros((3, 4, 4)))
    assert res.converged and res.sweeps == 0
    assert np.array_equal(res.mixing, np.eye(4))


def test_jacobi_rejects_non_square():
    with pytest.raises(ValueError):
        jacobi_diagonalize(np.zeros((1, 2, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_jacobi_recovers_orthogonal_factors(seed):
    rng = make_rng(seed)
    U = random_orthogonal(rng, 8)
    ms = synth(U, rng, 5)
    res = jacobi_diagonalize(ms)
    check_result(ms, res, True)
    assert np.max(align_factors(U, res.mixing).per_factor_error) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_jacobi_exact_input_completeness(seed):
    rng = make_rng(100 + seed)
    ms = synth(random_orthogonal(rng, 7), rng, 4)
    res = jacobi_diagonalize(ms, DiagOptions(max_sweeps=100))
    assert res.objective <= 1e-18 * (res.trace[0] + 1)


@pytest.mark.parametrize("seed", range(5))
def test_jacobi_single_matrix_matches_eigh(seed):
    rng = make_rng(200 + seed)
    A = rng.standard_normal((9, 9))
    A = A + A.T
    res = jacobi_diagonalize(A[None])
    check_result(A[None], res, True)
    w, Q = np.linalg.eigh(A)
    radius = np.max(np.abs(w))
    assert np.max(np.abs(np.sort(res.diagonals[:, 0]) - w)) < 1e-8 * radius
    order = np.argsort(res.diagonals[:, 0])
    gaps = np.diff(w)
    if gaps.min() > 1e-6:
        cols = res.mixing[:, order]
        signs = np.sign(np.sum(cols * Q, axis=0))
        assert np.max(np.abs(cols * signs - Q)) < 1e-6


def test_jacobi_pair_visits_per_sweep():
    rng = make_rng(7)
    d = 6
    ms = synth(random_orthogonal(rng, d), rng, 3)
    res = jacobi_diagonalize(ms)
    assert res.pair_visits == res.sweeps * d * (d - 1) // 2


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(1, 5), st.integers(0, 2**32))
def test_jacobi_trace_monotone_on_arbitrary_input(d, L, seed):
    rng = make_rng(seed)
    ms = rng.standard_normal((L, d, d))
    ms = ms + ms.transpose(0, 2, 1)
    res = jacobi_diagonalize(ms, DiagOptions(max_sweeps=20))
    check_result(ms, res, True)


# --- QRJ1D --------------------------------------------------------------------------

def test_qrj1d_diagonal_input():
    ms = np.array([np.diag([1.0, 2.0]), np.diag([3.0, 4.0])])
    res = qrj1d_diagonalize(ms)
    assert res.objective == 0.0
    assert np.allclose(np.abs(res.inverse) / np.max(np.abs(res.inverse), axis=1, keepdims=True), np.eye(2))


@pytest.mark.parametrize("seed", range(5))
def test_qrj1d_recovers_nonorthogonal_factors(seed):
    rng = make_rng(300 + seed)
    U = well_conditioned(rng, 6)
    ms = synth(U, rng, 8)
    res = qrj1d_diagonalize(ms)
    check_result(ms, res, False)
    assert res.objective < 1e-12 * np.sum(ms**2)
    assert np.max(align_factors(U, res.mixing).per_factor_error) < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_qrj1d_exact_input_completeness(seed):
    rng = make_rng(400 + seed)
    ms = synth(well_conditioned(rng, 5), rng, 6)
    res = qrj1d_diagonalize(ms, DiagOptions(mode="nonorthogonal", max_sweeps=100))
    assert res.objective <= 1e-18 * (res.trace[0] + 1)


@pytest.mark.parametrize("seed", range(3))
def test_qrj1d_agrees_with_jacobi_on_orthogonal_input(seed):
    rng = make_rng(500 + seed)
    U = random_orthogonal(rng, 6)
    ms = synth(U, rng, 5)
    a = jacobi_diagonalize(ms)
    b = qrj1d_diagonalize(ms)
    assert np.max(align_factors(a.mixing, b.mixing).per_factor_error) < 1e-6


def test_qrj1d_rows_unit_norm():
    rng = make_rng(9)
    ms = synth(well_conditioned(rng, 5), rng, 4)
    res = qrj1d_diagonalize(ms)
    assert np.allclose(np.linalg.norm(res.inverse, axis=1), 1.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(1, 4), st.integers(0, 2**32))
def test_qrj1d_trace_monotone_on_arbitrary_input(d, L, seed):
    rng = make_rng(seed)
    ms = rng.standard_normal((L, d, d))
    ms = ms + ms.transpose(0, 2, 1)
    res = qrj1d_diagonalize(ms, DiagOptions(mode="nonorthogonal", max_sweeps=30))
    check_result(ms, res, False)


def test_dispatch():
    rng = make_rng(3)
    ms = synth(random_orthogonal(rng, 4), rng, 3)
    assert np.array_equal(diagonalize(ms, DiagOptions(mode="orthogonal")).inverse,
                          jacobi_diagonalize(ms).inverse)
    assert np.array_equal(diagonalize(ms, DiagOptions(mode="nonorthogonal")).inverse,
                          qrj1d_diagonalize(ms).inverse)
