"""Simultaneous diagonalization of sets of symmetric matrices.

Two sweep algorithms minimize the off-diagonal objective

    F(V) = sum_l off(V M_l V^T),   off(A) = sum_{i != j} A_ij^2

by building the transform ``V`` (the *inverse factors*) as a product of
elementary matrices:

* :func:`jacobi_diagonalize` uses Givens rotations (``V`` orthogonal).
* :func:`qrj1d_diagonalize` uses unit-triangular shears ``I + a E_ij``
  (``V`` merely invertible) with row renormalization after every sweep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DiagOptions",
    "DiagonalizationResult",
    "as_matrix_set",
    "off_objective",
    "diagonalize",
    "jacobi_diagonalize",
    "qrj1d_diagonalize",
]

# elementary steps whose predicted decrease falls below this are skipped
SKIP_DECREASE = 1e-30
# shear coefficients are clamped to [-MAX_SHEAR, MAX_SHEAR]
MAX_SHEAR = 10.0
# sweeps without a new best objective before giving up (shear sweeps)
STALL_SWEEPS = 20
# shears that push the accumulated transform past this condition are rejected
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class DiagOptions:
    """Sweep settings.

    ``tol`` is the relative objective decrease per sweep below which the
    iteration stops.
    """

    mode: str = "orthogonal"
    tol: float = 1e-12
    max_sweeps: int = 100
    record_trace: bool = True

    def __post_init__(self):
        if self.mode not in ("orthogonal", "nonorthogonal"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")


@dataclass
class DiagonalizationResult:
    """Outcome of a joint diagonalization run.

    Attributes
    ----------
    mixing : (d, d) array
        Estimated common factors (columns); ``mixing = inverse^{-1}``.
    inverse : (d, d) array
        Diagonalizing transform; its rows are the inverse factors.
    diagonals : (d, L) array
        ``diagonals[i, l] = (inverse @ M_l @ inverse.T)[i, i]``.
    objective : float
        Off-diagonal objective at ``inverse``.
    sweeps : int
        Number of sweeps performed.
    converged : bool
    trace : list of float or None
        Objective before the first sweep and after each accepted sweep.
    pair_visits : int
        Elementary (i, j) positions visited, skipped steps included.
    """

    mixing: np.ndarray
    inverse: np.ndarray
    diagonals: np.ndarray
    objective: float
    sweeps: int
    converged: bool
    trace: list | None = None
    pair_visits: int = 0
    rejected_steps: int = field(default=0, repr=False)


def as_matrix_set(ms) -> np.ndarray:
    """Return ``ms`` as a float array of shape ``(L, d, d)``."""
    A = np.array(ms, dtype=float)
    if A.ndim == 2:
        A = A[None]
    if A.ndim != 3 or A.shape[1] != A.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got shape {A.shape}")
    if A.shape[0] < 1:
        raise ValueError("need at least one matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix set has non-finite entries")
    return A


def _off(A: np.ndarray) -> float:
    B = A * (1.0 - np.eye(A.shape[-1]))
    return float(np.einsum("lij,lij->", B, B))


def off_objective(ms, inverse) -> float:
    """``sum_l off(inverse @ M_l @ inverse.T)``."""
    A = as_matrix_set(ms)
    V = np.asarray(inverse, dtype=float)
    if V.shape != A.shape[1:]:
        raise ValueError(f"transform shape {V.shape} does not match matrices {A.shape[1:]}")
    return _off(V @ A @ V.T)


def _finish(A0, V, U, sweeps, converged, trace, visits, rejected) -> DiagonalizationResult:
    transformed = V @ A0 @ V.T
    diagonals = np.einsum("lii->il", transformed)
    return DiagonalizationResult(
        mixing=U,
        inverse=V,
        diagonals=np.ascontiguousarray(diagonals),
        objective=_off(transformed),
        sweeps=sweeps,
        converged=converged,
        trace=trace,
        pair_visits=visits,
        rejected_steps=rejected,
    )


def jacobi_diagonalize(ms, opts: DiagOptions | None = None) -> DiagonalizationResult:
    """Orthogonal joint diagonalization by Jacobi (Givens) sweeps.

    For each pair ``i < j`` the rotation angle is the closed-form maximizer of
    the diagonal energy: with ``h_l = (M_ii - M_jj, M_ij + M_ji)`` and ``(x, y)``
    the principal eigenvector of ``G = sum_l h_l h_l^T`` (``x >= 0``),
    ``cos = sqrt((x + r) / 2r)`` and ``sin = y / sqrt(2r (x + r))``.

    Parameters
    ----------
    ms : array_like, shape (L, d, d)
        Symmetric matrices (symmetrized on entry).
    opts : DiagOptions, optional

    Returns
    -------
    DiagonalizationResult
        ``mixing`` is orthogonal and equals ``inverse.T``.
    """
    opts = opts or DiagOptions(mode="orthogonal")
    A0 = as_matrix_set(ms)
    A0 = 0.5 * (A0 + A0.transpose(0, 2, 1))
    A = A0.copy()
    d = A.shape[1]
    V = np.eye(d)
    F = _off(A)
    trace = [F] if opts.record_trace else None
    converged = False
    sweeps = visits = 0

    if F == 0.0:
        return _finish(A0, V, V.T.copy(), 0, True, trace, 0, 0)

    for _ in range(opts.max_sweeps):
        A_prev, V_prev = A.copy(), V.copy()
        sweeps += 1
        for i in range(d - 1):
            for j in range(i + 1, d):
                visits += 1
                h0 = A[:, i, i] - A[:, j, j]
                h1 = A[:, i, j] + A[:, j, i]
                g00, g01, g11 = h0 @ h0, h0 @ h1, h1 @ h1
                delta = 0.5 * (g00 - g11)
                rad = math.hypot(delta, g01)
                lam = 0.5 * (g00 + g11) + rad
                # decrease = (lam - g00) / 2, written without cancellation
                gain = 0.5 * (g01 * g01 / (rad + delta) if delta > 0 else rad - delta)
                if gain < SKIP_DECREASE:
                    continue
                # principal eigenvector of the 2x2 Gram matrix
                if delta >= 0:
                    x, y = delta + rad, g01
                else:
                    x, y = g01, rad - delta
                if x < 0 or (x == 0 and y < 0):
                    x, y = -x, -y
                r = math.hypot(x, y)
                c = math.sqrt((x + r) / (2 * r))
                s = y / math.sqrt(2 * r * (x + r))
                ri = A[:, i, :].copy()
                A[:, i, :] = c * ri + s * A[:, j, :]
                A[:, j, :] = c * A[:, j, :] - s * ri
                ci = A[:, :, i].copy()
                A[:, :, i] = c * ci + s * A[:, :, j]
                A[:, :, j] = c * A[:, :, j] - s * ci
                vi = V[i].copy()
                V[i] = c * vi + s * V[j]
                V[j] = c * V[j] - s * vi
        A = 0.5 * (A + A.transpose(0, 2, 1))
        F_new = _off(A)
        if F_new > F:
            # round-off floor reached; keep the better iterate
            A, V = A_prev, V_prev
            converged = True
            break
        if trace is not None:
            trace.append(F_new)
        decrease = F - F_new
        F = F_new
        if F == 0.0 or decrease < opts.tol * (F + decrease):
            converged = True
            break

    return _finish(A0, V, V.T.copy(), sweeps, converged, trace, visits, 0)


def _normalize_rows(A, V, U):
    s = np.linalg.norm(V, axis=1)
    s = np.where(s > 0, s, 1.0)
    V = V / s[:, None]
    U = U * s[None, :]
    A = A / s[None, :, None] / s[None, None, :]
    return A, V, U


def qrj1d_diagonalize(ms, opts: DiagOptions | None = None) -> DiagonalizationResult:
    """Non-orthogonal joint diagonalization by unit-triangular shear sweeps.

    Each sweep runs a lower half-sweep (pairs ``i > j``) and an upper
    half-sweep (``i < j``). The step ``V <- (I + a E_ij) V`` adds ``a`` times
    row ``j`` to row ``i``; restricted to ``a`` the objective is the quadratic

        F(a) = F(0) + 2 * (2 a p + a^2 q),
        p = sum_l sum_{k != i} M_ik M_jk,   q = sum_l sum_{k != i} M_jk^2,

    so ``a = -p / q`` is the exact coordinate minimizer (clamped to
    ``|a| <= 10``). After every sweep the rows of ``V`` are rescaled to unit
    norm. Rescaling can raise ``F``, so the best iterate is kept and the run
    ends after 20 sweeps without a new best (``trace`` lists the best values).

    Parameters
    ----------
    ms : array_like, shape (L, d, d)
        Symmetric matrices (symmetrized on entry).
    opts : DiagOptions, optional

    Returns
    -------
    DiagonalizationResult
    """
    opts = opts or DiagOptions(mode="nonorthogonal")
    A0 = as_matrix_set(ms)
    A0 = 0.5 * (A0 + A0.transpose(0, 2, 1))
    A = A0.copy()
    d = A.shape[1]
    V = np.eye(d)
    U = np.eye(d)
    F = _off(A)
    trace = [F] if opts.record_trace else None
    converged = False
    sweeps = visits = rejected = 0

    if F == 0.0:
        return _finish(A0, V, U, 0, True, trace, 0, 0)

    lower = [(i, j) for i in range(1, d) for j in range(i)]
    upper = [(i, j) for i in range(d - 1) for j in range(i + 1, d)]
    # row rescaling can raise F even when every shear lowered it, so sweeps
    # continue from the new iterate while the best one seen is kept
    best = (A.copy(), V.copy(), U.copy())
    stalled = 0
    for _ in range(opts.max_sweeps):
        sweeps += 1
        for i, j in lower + upper:
            visits += 1
            ri = A[:, i, :]
            rj = A[:, j, :]
            # k != i excludes the diagonal entry of row i
            p = float(np.sum(ri * rj) - np.sum(A[:, i, i] * A[:, j, i]))
            q = float(np.sum(rj * rj) - np.sum(A[:, j, i] ** 2))
            if q <= 0.0:
                continue
            a = -p / q
            a = max(-MAX_SHEAR, min(MAX_SHEAR, a))
            if -2.0 * (2.0 * a * p + a * a * q) < SKIP_DECREASE:
                continue
            Vi = V[i] + a * V[j]
            Uj = U[:, j] - a * U[:, i]
            cond = math.sqrt(
                (np.sum(V * V) - V[i] @ V[i] + Vi @ Vi) * (np.sum(U * U) - U[:, j] @ U[:, j] + Uj @ Uj)
            )
            if not cond < MAX_CONDITION:
                rejected += 1
                continue
            V[i] = Vi
            U[:, j] = Uj
            A[:, i, :] += a * A[:, j, :]
            A[:, :, i] += a * A[:, :, j]
        A, V, U = _normalize_rows(A, V, U)
        A = 0.5 * (A + A.transpose(0, 2, 1))
        F_new = _off(A)
        if F_new < F:
            decrease = F - F_new
            F = F_new
            best = (A.copy(), V.copy(), U.copy())
            stalled = 0
            if trace is not None:
                trace.append(F)
            if F == 0.0 or decrease < opts.tol * (F + decrease):
                converged = True
                break
        else:
            stalled += 1
            if stalled >= STALL_SWEEPS:
                converged = True
                break
    A, V, U = best

    # the accumulated inverse drifts from V^{-1} over many shears; re-derive it
    U = np.linalg.inv(V)
    return _finish(A0, V, U, sweeps, converged, trace, visits, rejected)


def diagonalize(ms, opts: DiagOptions | None = None) -> DiagonalizationResult:
    """Dispatch on ``opts.mode``."""
    opts = opts or DiagOptions()
    if opts.mode == "orthogonal":
        return jacobi_diagonalize(ms, opts)
    return qrj1d_diagonalize(ms, opts)
