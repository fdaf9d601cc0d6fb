"""Reference CP solvers: tensor power method with deflation, and ALS."""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .tensor import CPModel, as_tensor, cp_to_tensor, make_rng, normalize_columns

__all__ = ["tensor_power_method", "als"]

ALS_RIDGE = 1e-12


def _power_map(T, u):
    g = np.einsum("ijk,j,k->i", T, u, u)
    n = np.linalg.norm(g)
    return (g / n if n > 0 else u), n


def tensor_power_method(T, k: int, restarts: int = 10, iters: int = 100, seed=0) -> CPModel:
    """Symmetric CP by power iteration ``u <- T(I, u, u) / ||T(I, u, u)||`` and deflation.

    For each component ``restarts`` random unit starts are iterated ``iters``
    times; the one with the largest ``|T(u, u, u)|`` is refined for another
    ``iters`` steps, its weight ``T(u, u, u)`` recorded and the rank-one term
    subtracted.

    Returns
    -------
    CPModel
        Canonical symmetric model; ``flags`` records the hyperparameters and
        ``zero_tensor`` when the (deflated) tensor vanished.
    """
    T = as_tensor(T, order=3).copy()
    d = T.shape[0]
    if any(n != d for n in T.shape):
        raise ValueError(f"expected a cubical tensor, got shape {T.shape}")
    if k > d:
        raise ValueError("rank exceeds dimension")
    rng = make_rng(seed)
    U = np.zeros((d, k))
    w = np.zeros(k)
    flags = {"restarts": restarts, "iters": iters}
    for m in range(k):
        best, best_val = None, -1.0
        for _ in range(restarts):
            u = rng.standard_normal(d)
            u /= np.linalg.norm(u)
            for _ in range(iters):
                u, _ = _power_map(T, u)
            val = abs(float(np.einsum("ijk,i,j,k->", T, u, u, u)))
            if val > best_val:
                best, best_val = u, val
        u = best
        for _ in range(iters):
            u, _ = _power_map(T, u)
        lam = float(np.einsum("ijk,i,j,k->", T, u, u, u))
        if not np.any(T):
            flags["zero_tensor"] = True
        U[:, m] = u
        w[m] = lam
        T -= lam * np.einsum("i,j,k->ijk", u, u, u)
    return CPModel.symmetric_model(w, U, flags=flags).canonical()


def _solve_normal(G, rhs, flags):
    # solves X G = rhs for X (G symmetric positive semidefinite)
    try:
        c = scipy.linalg.cho_factor(G, check_finite=False)
        if np.linalg.cond(G) > 1e14:
            raise np.linalg.LinAlgError
        return scipy.linalg.cho_solve(c, rhs.T, check_finite=False).T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        flags["ridge"] = flags.get("ridge", 0) + 1
        return np.linalg.solve(G + ALS_RIDGE * np.eye(G.shape[0]), rhs.T).T


def als(T, k: int, iters: int = 100, seed=0, tol: float = 0.0) -> CPModel:
    """CP alternating least squares on a cubical third-order tensor.

    Each round solves, for every mode in turn, the normal equations
    ``A (B^T B * C^T C) = T_(1) (C kr B)`` with the Khatri-Rao product
    contracted directly from the tensor. A round that would raise the
    reconstruction error is undone and the iteration stops, so the
    recorded objective is non-increasing.

    Parameters
    ----------
    tol : float
        Stop once a round lowers the objective by less than ``tol`` relative.

    Returns
    -------
    CPModel
        Canonical (asymmetric) model with unit columns; ``flags["trace"]``
        holds the objective ``||T - cp||_F^2`` after initialization and each
        accepted round, ``flags["ridge"]`` counts regularized solves.
    """
    T = as_tensor(T, order=3)
    d = T.shape[0]
    if any(n != d for n in T.shape):
        raise ValueError(f"expected a cubical tensor, got shape {T.shape}")
    if k > d:
        raise ValueError("rank exceeds dimension")
    rng = make_rng(seed)
    A, B, C = (rng.standard_normal((d, k)) for _ in range(3))
    flags: dict = {}
    ones = np.ones(k)

    def objective(A, B, C):
        return float(np.sum((T - cp_to_tensor(CPModel(ones, (A, B, C)))) ** 2))

    F = objective(A, B, C)
    trace = [F]
    for _ in range(iters):
        prev = (A, B, C)
        A = _solve_normal((B.T @ B) * (C.T @ C), np.einsum("ijk,jr,kr->ir", T, B, C), flags)
        B = _solve_normal((A.T @ A) * (C.T @ C), np.einsum("ijk,ir,kr->jr", T, A, C), flags)
        C = _solve_normal((A.T @ A) * (B.T @ B), np.einsum("ijk,ir,jr->kr", T, A, B), flags)
        # balance column scales across modes; the tensor is unchanged
        na, nb, nc = (np.linalg.norm(F_, axis=0) for F_ in (A, B, C))
        if np.all(na > 0) and np.all(nb > 0) and np.all(nc > 0):
            g = np.cbrt(na * nb * nc)
            A, B, C = A * (g / na), B * (g / nb), C * (g / nc)
        F_new = objective(A, B, C)
        if not F_new <= F:
            A, B, C = prev
            break
        trace.append(F_new)
        decrease = F - F_new
        F = F_new
        if F == 0.0 or decrease <= tol * (F + decrease):
            break
    A, na = normalize_columns(A)
    B, nb = normalize_columns(B)
    C, nc = normalize_columns(C)
    flags["trace"] = trace
    return CPModel(na * nb * nc, (A, B, C), flags=flags).canonical()
