"""Error metrics and first-order perturbation oracles.

Everything here evaluates closed-form expressions on a known ground truth:
factor alignment, incoherence, the modulus of uniqueness of a set of
diagonals, the first-order error matrices ``E`` for orthogonal and
non-orthogonal joint diagonalization, and the high-probability error bounds
for random and plug-in projections. All logarithms are natural.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tensor import CPModel, as_tensor

__all__ = [
    "Alignment",
    "PerturbationEstimate",
    "align_factors",
    "incoherence",
    "modulus_of_uniqueness",
    "full_rank_extension",
    "cardoso_error_prediction",
    "afsari_error_bound",
    "min_projection_count",
    "theorem_error_bound",
    "BOUND_CONSTANTS",
]

# which constant set theorem_error_bound evaluates
BOUND_CONSTANTS = "explicit"


@dataclass
class Alignment:
    """Permutation-and-sign matching of estimated factors to the truth.

    ``permutation[i]`` is the estimate column matched to truth column ``i``;
    ``signs`` and ``per_factor_error`` refer to the first mode, ``mode_errors``
    has one row per mode.
    """

    permutation: np.ndarray
    signs: np.ndarray
    per_factor_error: np.ndarray
    mean_error: float
    mode_errors: np.ndarray | None = None
    mode_signs: np.ndarray | None = None


def _modes(x) -> list:
    if isinstance(x, CPModel):
        return list(x.factors)
    return [np.asarray(x, dtype=float)]


def align_factors(truth, estimate) -> Alignment:
    """Match estimate columns to truth columns and measure the error.

    The matching maximizes the summed ``|cos|`` between matched columns
    (added over all modes for CP models) by optimal assignment; each matched
    column then gets the sign minimizing its Euclidean distance to the truth.
    Per-factor errors are ``||u_i - s_i u~_sigma(i)||_2`` on unit columns.

    Parameters
    ----------
    truth, estimate : CPModel or (d, k) array
        The estimate may have more columns than the truth; unmatched ones are
        ignored.
    """
    T_modes, E_modes = _modes(truth), _modes(estimate)
    if len(T_modes) != len(E_modes):
        raise ValueError("truth and estimate have different orders")
    k = T_modes[0].shape[1]
    for Tm, Em in zip(T_modes, E_modes):
        if Tm.shape[0] != Em.shape[0]:
            raise ValueError(f"dimension mismatch: {Tm.shape[0]} vs {Em.shape[0]}")
        if Em.shape[1] < k:
            raise ValueError("estimate has fewer columns than the truth")
    units_t = [Tm / np.linalg.norm(Tm, axis=0).clip(1e-300) for Tm in T_modes]
    units_e = [Em / np.linalg.norm(Em, axis=0).clip(1e-300) for Em in E_modes]
    score = sum(np.abs(Ut.T @ Ue) for Ut, Ue in zip(units_t, units_e))
    if k == 0:
        empty = np.zeros(0)
        return Alignment(np.zeros(0, dtype=int), empty, empty, 0.0,
                         np.zeros((len(T_modes), 0)), np.zeros((len(T_modes), 0)))
    rows, cols = linear_sum_assignment(-score)
    perm = np.empty(k, dtype=int)
    perm[rows] = cols
    errors, signs = [], []
    for Ut, Ue in zip(units_t, units_e):
        matched = Ue[:, perm]
        s = np.where(np.sum(Ut * matched, axis=0) >= 0, 1.0, -1.0)
        errors.append(np.linalg.norm(Ut - matched * s, axis=0))
        signs.append(s)
    errors = np.array(errors)
    return Alignment(
        permutation=perm,
        signs=signs[0],
        per_factor_error=errors[0],
        mean_error=float(np.mean(errors[0])),
        mode_errors=errors,
        mode_signs=np.array(signs),
    )


def incoherence(factors) -> float:
    """``max_{i != j} |u_i . u_j|`` over unit-norm columns (0 when k < 2)."""
    U = np.asarray(factors, dtype=float)
    if U.ndim != 2 or U.shape[1] < 2:
        return 0.0
    G = np.abs(U.T @ U)
    np.fill_diagonal(G, 0.0)
    return float(G.max())


def modulus_of_uniqueness(diagonals) -> tuple[np.ndarray, np.ndarray]:
    """Normalized inner products ``rho_ij`` between rows of ``diagonals``.

    Returns
    -------
    rho : (n, n) array
        Symmetric with unit diagonal; rows of zero norm get ``rho = 0``
        against everything (including themselves).
    degenerate : (n,) bool array
        Rows with zero norm.
    """
    D = np.atleast_2d(np.asarray(diagonals, dtype=float))
    norms = np.linalg.norm(D, axis=1)
    degenerate = norms == 0
    safe = np.where(degenerate, 1.0, norms)
    Dn = D / safe[:, None]
    rho = np.clip(Dn @ Dn.T, -1.0, 1.0)
    rho[degenerate, :] = 0.0
    rho[:, degenerate] = 0.0
    idx = np.flatnonzero(~degenerate)
    rho[idx, idx] = 1.0
    return rho, degenerate


def full_rank_extension(U) -> np.ndarray:
    """Append an orthonormal basis of ``span(U)^perp`` to the columns of ``U``."""
    U = np.asarray(U, dtype=float)
    d, k = U.shape
    if k >= d:
        return U.copy()
    Q, _ = np.linalg.qr(U, mode="complete")
    return np.hstack([U, Q[:, k:]])


@dataclass
class PerturbationEstimate:
    """First-order error model of a joint diagonalization.

    Attributes
    ----------
    E : (d, k) array
        ``E[i, j]`` is the coefficient of basis column ``i`` in the first-order
        perturbation of factor ``j`` (or an upper bound on its magnitude);
        ``E[j, j] = 0``.
    predicted_error : (k,) array
        ``eps * sqrt(sum_i E[i, j]^2)``.
    rho : (k, k) array
        Modulus of uniqueness of the noiseless diagonals.
    p_norms, r_norms : (d, k) arrays
        ``||p_ij||`` and ``||r_ij||`` (auxiliary diagnostics).
    infinite : (d, k) bool array
        Entries flagged infinite (degenerate projections or ``|rho| = 1``).
    """

    E: np.ndarray
    predicted_error: np.ndarray
    rho: np.ndarray
    p_norms: np.ndarray
    r_norms: np.ndarray
    infinite: np.ndarray


def _truth_parts(truth):
    if isinstance(truth, CPModel):
        return np.asarray(truth.weights, dtype=float), np.asarray(truth.factors[0], dtype=float)
    w, U = truth
    return np.asarray(w, dtype=float), np.asarray(U, dtype=float)


def _p_norms(pi, Ubar, k):
    """``||pi_i u_i - pi_j u_j||`` with ``pi_i = 0`` for completing columns."""
    d = Ubar.shape[1]
    scaled = Ubar * np.r_[pi, np.zeros(d - k)]
    return np.linalg.norm(scaled[:, :, None] - scaled[:, None, :k], axis=0)


def _noise_projections(R, W):
    R = as_tensor(R, order=3)
    return np.einsum("ijk,lk->lij", R, W)


def cardoso_error_prediction(truth, R, directions, eps: float = 1.0) -> PerturbationEstimate:
    """First-order factor error of orthogonal joint diagonalization.

    For ``M_l = T(I, I, w_l) + eps R(I, I, w_l)`` with ``T`` orthogonal,

        E_ij = sum_l (lam_il - lam_jl) u_j^T R_l u_i / sum_l (lam_il - lam_jl)^2

    with ``lam_il = pi_i w_l . u_i`` and ``lam_il = 0`` for the completing
    columns ``i >= k``.

    Parameters
    ----------
    truth : CPModel or (weights, U)
        Symmetric orthogonal model.
    R : (d, d, d) array
        Symmetric noise tensor.
    directions : (L, d) array
    eps : float
        Noise level multiplying ``predicted_error``.
    """
    pi, U = _truth_parts(truth)
    W = np.atleast_2d(np.asarray(directions, dtype=float))
    d, k = U.shape
    Ubar = full_rank_extension(U)
    lam = np.zeros((d, W.shape[0]))
    lam[:k] = pi[:, None] * (U.T @ W.T)
    Rl = _noise_projections(R, W)
    # S[l, i, j] = u_i^T R_l u_j
    S = np.einsum("ai,lab,bj->lij", Ubar, Rl, Ubar)
    E = np.zeros((d, k))
    infinite = np.zeros((d, k), dtype=bool)
    for j in range(k):
        for i in range(d):
            if i == j:
                continue
            gap = lam[i] - lam[j]
            den = gap @ gap
            num = gap @ S[:, j, i]
            if den < 1e-14:
                infinite[i, j] = True
                E[i, j] = np.inf
            else:
                E[i, j] = num / den
    rho, _ = modulus_of_uniqueness(lam[:k])
    p_norms = _p_norms(pi, Ubar, k)
    r_norms = np.linalg.norm(np.einsum("abc,ai,bj->ijc", as_tensor(R, 3), Ubar, U), axis=2)
    with np.errstate(invalid="ignore"):
        pred = eps * np.sqrt(np.sum(E**2, axis=0))
    return PerturbationEstimate(E, pred, rho, p_norms, r_norms, infinite)


def afsari_error_bound(truth, R, directions, eps: float = 1.0) -> PerturbationEstimate:
    """Entrywise upper bound on the first-order error matrix (non-orthogonal).

    For ``i != j`` with both rows carrying signal,

        |E_ij| <= 1/(1 - rho_ij^2) (1/|lam_i|^2 + 1/|lam_j|^2)
                  (|sum_l v_i^T R_l v_j lam_jl| + |sum_l v_i^T R_l v_j lam_il|),

    where ``v_i`` are rows of the inverse of the full-rank extension of the
    factors. For completing rows (``lam_i = 0``) the exact first-order
    coefficient ``|sum_l v_i^T R_l v_j lam_jl| / |lam_j|^2`` is used, which is
    the ``rho_ij = 0`` limit of the same two-by-two system.
    """
    pi, U = _truth_parts(truth)
    W = np.atleast_2d(np.asarray(directions, dtype=float))
    d, k = U.shape
    Ubar = full_rank_extension(U)
    Vbar = np.linalg.inv(Ubar)
    lam = np.zeros((d, W.shape[0]))
    lam[:k] = pi[:, None] * (U.T @ W.T)
    Rl = _noise_projections(R, W)
    S = np.einsum("ia,lab,jb->lij", Vbar, Rl, Vbar)  # v_i^T R_l v_j
    rho_all, _ = modulus_of_uniqueness(lam)
    norms2 = np.sum(lam**2, axis=1)
    E = np.zeros((d, k))
    infinite = np.zeros((d, k), dtype=bool)
    for j in range(k):
        for i in range(d):
            if i == j:
                continue
            t_j = abs(S[:, i, j] @ lam[j])
            t_i = abs(S[:, i, j] @ lam[i])
            if norms2[j] == 0:
                E[i, j] = np.inf
            elif i >= k or norms2[i] == 0:
                E[i, j] = t_j / norms2[j]
            elif abs(rho_all[i, j]) >= 1 - 1e-10:
                E[i, j] = np.inf
            else:
                E[i, j] = (1.0 / (1.0 - rho_all[i, j] ** 2)) * (1.0 / norms2[i] + 1.0 / norms2[j]) * (t_j + t_i)
            infinite[i, j] = np.isinf(E[i, j])
    p_norms = _p_norms(pi, Ubar, k)
    r_norms = np.linalg.norm(np.einsum("abc,ia,jb->ijc", as_tensor(R, 3), Vbar, Vbar[:k]), axis=2)
    pred = eps * np.sqrt(np.sum(E**2, axis=0))
    return PerturbationEstimate(E, pred, rho_all[:k, :k], p_norms, r_norms, infinite)


def min_projection_count(d: int, k: int, delta: float, mu: float = 0.0,
                         regime: str = "ortho-random") -> int:
    """Smallest ``L`` meeting the random-projection sample-size condition.

    ``ortho-random``:    ``L >= 16 log(2 d (k-1) / delta)^2``
    ``nonortho-random``: ``L >= L0 log(15 d (k-1) / delta)^2``,
    ``L0 = (50 / (1 - mu^2))^2``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    pairs = d * max(k - 1, 0)
    if regime == "ortho-random":
        if pairs == 0:
            return 1
        bound = 16.0 * math.log(2 * pairs / delta) ** 2
    elif regime == "nonortho-random":
        if not 0 <= mu < 1:
            raise ValueError("incoherence must lie in [0, 1)")
        if pairs == 0:
            return 1
        L0 = (50.0 / (1.0 - mu**2)) ** 2
        bound = L0 * math.log(15 * pairs / delta) ** 2
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return max(1, math.ceil(bound))


def theorem_error_bound(truth, eps: float, L: int, delta: float, regime: str) -> np.ndarray:
    """Per-factor error bound ``||u~_j - u_j||`` from the factorization theorems.

    Evaluates the forms with explicit constants and natural logs:

    * ``ortho-random``:  ``2 sqrt(2 |pi|_1 pi_max) / pi_j^2 eps
      + 20 sqrt(2) log(2 d (k-1) / delta) sqrt(d / L) / pi_j eps``
    * ``ortho-plugin``:  ``2 sqrt(|pi|_1 pi_max) / pi_j^2 eps``
    * ``nonortho-random``: ``8 eps / (1 - mu^2) sqrt(|pi|_1 pi_max) / pi_min^2
      |V^T|_2^2 (1 + C(delta) sqrt(d))`` with
      ``C(delta) = (20 + sqrt(L0)) / sqrt(L) log(15 d (k-1) / delta)``
    * ``nonortho-plugin``: ``8 eps sqrt(|pi|_1 pi_max) / pi_min^2 |V^T|_2^3``

    ``V`` is the inverse of the full-rank extension of the factors. The
    non-orthogonal bounds are uniform over factors.
    """
    pi, U = _truth_parts(truth)
    d, k = U.shape
    a = np.abs(pi)
    if k == 0:
        return np.zeros(0)
    if np.min(a) == 0:
        raise ValueError("bounds need nonzero weights")
    l1, pmax, pmin = a.sum(), a.max(), a.min()
    logterm = math.log(2 * d * (k - 1) / delta) if k > 1 else 0.0
    if regime == "ortho-random":
        return (2 * math.sqrt(2 * l1 * pmax) / a**2 + 20 * math.sqrt(2) * logterm * math.sqrt(d / L) / a) * eps
    if regime == "ortho-plugin":
        return 2 * math.sqrt(l1 * pmax) / a**2 * eps
    if regime not in ("nonortho-random", "nonortho-plugin"):
        raise ValueError(f"unknown regime {regime!r}")
    mu = incoherence(U / np.linalg.norm(U, axis=0))
    if mu >= 1:
        raise ValueError("incoherence must be below 1")
    vnorm = np.linalg.norm(np.linalg.inv(full_rank_extension(U)), 2)
    base = 8 * eps * math.sqrt(l1 * pmax) / pmin**2
    if regime == "nonortho-plugin":
        return np.full(k, base * vnorm**3)
    L0 = (50.0 / (1.0 - mu**2)) ** 2
    C = (20 + math.sqrt(L0)) / math.sqrt(L) * (math.log(15 * d * (k - 1) / delta) if k > 1 else 0.0)
    return np.full(k, base / (1 - mu**2) * vnorm**2 * (1 + C * math.sqrt(d)))
