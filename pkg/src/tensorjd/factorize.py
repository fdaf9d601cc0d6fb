"""Tensor factorization by simultaneous diagonalization of projections.

The symmetric pipeline (:func:`two_stage_factorize`) projects the tensor on
random directions, jointly diagonalizes the resulting matrices, keeps the
``k`` strongest candidate factors and optionally repeats the diagonalization
with projections along the estimated inverse factors (plug-in stage).

Asymmetric third-order and fourth-order tensors are handled by embedding
each projected matrix ``M`` into the symmetric block matrix
``[[0, M^T], [M, 0]]``, whose joint eigenvectors come in ``+/-`` pairs that
carry the first two factor matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import incoherence, modulus_of_uniqueness
from .joint_diag import DiagOptions, DiagonalizationResult, diagonalize
from .tensor import CPModel, as_tensor, make_rng, normalize_columns

__all__ = [
    "FactorizeOptions",
    "ProjectionSet",
    "FactorizationReport",
    "default_projection_count",
    "draw_directions",
    "make_projection_set",
    "recover_weights",
    "two_stage_factorize",
    "factorize_asymmetric",
    "factorize_fourth_order",
]

# |v.u| below this makes a contraction weight meaningless
DEGENERATE_OVERLAP = 1e-8
# diagonal rows of a +/- pair must have cosine below this
PAIR_COSINE = -0.99
# tolerance on index-permutation symmetry of symmetric inputs
SYMMETRY_TOL = 1e-8


def default_projection_count(k: int) -> int:
    """``max(k + 2, 10)`` capped at ``4k`` (at least 2)."""
    return max(2, min(max(k + 2, 10), 4 * k))


@dataclass(frozen=True)
class FactorizeOptions:
    """Settings for the projection-and-diagonalize pipelines.

    Attributes
    ----------
    rank : int
        Number of components ``k``.
    mode : {"orthogonal", "nonorthogonal"}
        Jacobi rotations or triangular shears for the symmetric pipeline.
        The asymmetric and fourth-order reductions always use shears.
    projections : int or None
        Stage-0 projection count ``L0``; ``None`` selects
        :func:`default_projection_count`.
    direction_law : {"unit-sphere", "gaussian"}
    plugin : bool
        Run the plug-in refinement stage.
    seed : int
    diag : DiagOptions or None
        Sweep settings; the mode field is overridden per stage.
    weight_method : {"contraction", "diagonal"}
        How weights are read off the diagonalization (see
        :func:`recover_weights`).
    """

    rank: int
    mode: str = "orthogonal"
    projections: int | None = None
    direction_law: str = "unit-sphere"
    plugin: bool = True
    seed: int = 0
    diag: DiagOptions | None = None
    weight_method: str = "contraction"

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.mode not in ("orthogonal", "nonorthogonal"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.projections is not None and self.projections < 2:
            raise ValueError("need at least 2 stage-0 projections")
        if self.direction_law not in ("unit-sphere", "gaussian"):
            raise ValueError(f"unknown direction law {self.direction_law!r}")
        if self.weight_method not in ("contraction", "diagonal"):
            raise ValueError(f"unknown weight method {self.weight_method!r}")

    @property
    def L0(self) -> int:
        return self.projections if self.projections is not None else default_projection_count(self.rank)

    def diag_options(self, mode: str) -> DiagOptions:
        base = self.diag or DiagOptions()
        return DiagOptions(mode=mode, tol=base.tol, max_sweeps=base.max_sweeps,
                           record_trace=base.record_trace)


@dataclass
class ProjectionSet:
    """Projected matrices ``matrices[l] = T(I, I, directions[l])``."""

    matrices: np.ndarray
    directions: np.ndarray

    def __len__(self) -> int:
        return self.matrices.shape[0]


@dataclass
class FactorizationReport:
    """Estimate plus the diagonalization runs that produced it.

    ``diagnostics`` holds ``rho_max`` (largest off-diagonal modulus of
    uniqueness among the selected diagonal rows of the last stage), ``mu``
    (incoherence of the estimated factors), ``objective0``/``objective1``,
    ``sweeps0``/``sweeps1``, ``converged0``/``converged1``, ``L0`` and
    ``seed``. ``flags`` collects degeneracy warnings.
    """

    estimate: CPModel
    stage0: DiagonalizationResult
    stage1: DiagonalizationResult | None = None
    diagnostics: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        ok = self.stage0.converged
        return ok and (self.stage1 is None or self.stage1.converged)


def draw_directions(rng: np.random.Generator, count: int, d: int,
                    law: str = "unit-sphere") -> np.ndarray:
    """``count`` directions in ``R^d`` as rows: standard normal or normalized."""
    W = rng.standard_normal((count, d))
    if law == "gaussian":
        return W
    if law != "unit-sphere":
        raise ValueError(f"unknown direction law {law!r}")
    return W / np.linalg.norm(W, axis=1, keepdims=True)


def make_projection_set(T, directions) -> ProjectionSet:
    """Project a third-order tensor along each direction (last mode)."""
    T = as_tensor(T, order=3)
    W = np.asarray(directions, dtype=float)
    if W.ndim == 1:
        W = W[None]
    if W.shape[0] == 0:
        raise ValueError("need at least one direction")
    if W.ndim != 2 or W.shape[1] != T.shape[2]:
        raise ValueError(f"directions must have length {T.shape[2]}")
    Ms = np.einsum("ijk,lk->lij", T, W)
    return ProjectionSet(Ms, W.copy())


def _unit_rows(V):
    n = np.linalg.norm(V, axis=1)
    return V / np.where(n > 0, n, 1.0)[:, None]


def recover_weights(T, factors, inverse_rows, mode: str = "orthogonal",
                    method: str = "contraction", projections: ProjectionSet | None = None):
    """Weights of candidate factors of a symmetric tensor.

    ``orthogonal``: ``pi_i = T(u_i, u_i, u_i)``.
    ``nonorthogonal``: ``pi_i = T(v_i, v_i, v_i) / (v_i . u_i)^3`` with ``v_i``
    the unit-normalized inverse row.

    ``method="diagonal"`` instead fits ``lam_il = (v_i^T M_l v_i)`` against
    ``a_l = (w_l . u_i)(v_i . u_i)^2`` by least squares over the projection set
    (in orthogonal mode ``v_i = u_i``).

    Parameters
    ----------
    T : (d, d, d) array
    factors : (d, m) array
        Unit-norm candidate columns ``u_i``.
    inverse_rows : (m, d) array
        Matching inverse factors (ignored in orthogonal mode).

    Returns
    -------
    weights : (m,) array
    degenerate : (m,) bool array
        Candidates with ``|v_i . u_i| < 1e-8``; their weight is set to 0.
    """
    T = as_tensor(T, order=3)
    U = np.asarray(factors, dtype=float)
    if mode == "orthogonal":
        V = U.T
    elif mode == "nonorthogonal":
        V = _unit_rows(np.asarray(inverse_rows, dtype=float))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if V.shape != U.T.shape:
        raise ValueError("inverse rows do not match factors")
    overlap = np.einsum("id,di->i", V, U)
    degenerate = np.abs(overlap) < DEGENERATE_OVERLAP
    safe = np.where(degenerate, 1.0, overlap)
    if method == "contraction":
        w = np.einsum("abc,ia,ib,ic->i", T, V, V, V) / safe**3
    elif method == "diagonal":
        if projections is None:
            raise ValueError("diagonal weight recovery needs the projection set")
        lam = np.einsum("ia,lab,ib->il", V, projections.matrices, V)
        a = (U.T @ projections.directions.T) * (safe**2)[:, None]
        den = np.sum(a * a, axis=1)
        w = np.where(den > 0, np.sum(lam * a, axis=1) / np.where(den > 0, den, 1.0), 0.0)
    else:
        raise ValueError(f"unknown weight method {method!r}")
    return np.where(degenerate, 0.0, w), degenerate


def _check_cube(T, k):
    d = T.shape[0]
    if any(n != d for n in T.shape):
        raise ValueError(f"expected a cubical tensor, got shape {T.shape}")
    if k > d:
        raise ValueError("rank exceeds dimension")
    return d


def _principal_subspace(Ms: np.ndarray, k: int) -> np.ndarray:
    """Orthonormal basis of the dominant ``k``-dimensional column space of ``[M_1 ... M_L]``."""
    stacked = np.concatenate(list(Ms), axis=1)
    Q, _, _ = np.linalg.svd(stacked, full_matrices=False)
    return Q[:, :k]


def _warm_diagonalize(Ms: np.ndarray, dopts: DiagOptions, init: np.ndarray | None):
    # sweeps on init M init^T, then fold init back into the transform
    if init is None:
        return diagonalize(Ms, dopts)
    res = diagonalize(init @ Ms @ init.T, dopts)
    res.inverse = res.inverse @ init
    res.mixing = np.linalg.inv(res.inverse)
    return res


def _shear_diagonalize(Ms: np.ndarray, k: int, dopts: DiagOptions, init=None):
    """Shear sweeps inside the rank-``k`` principal subspace.

    Rank-deficient sets admit near-singular transforms with vanishing
    objective, so when ``k < d`` the matrices are compressed to
    ``Q^T M_l Q`` first. ``init`` (``k x d`` inverse rows) seeds the sweeps.
    Returns the result plus factor columns and inverse rows lifted back to
    ``R^d``.
    """
    d = Ms.shape[1]
    if k >= d:
        res = _warm_diagonalize(Ms, dopts, init)
        return res, res.mixing, res.inverse
    Q = _principal_subspace(Ms, k)
    init_q = None
    if init is not None:
        init_q = init @ Q
        if np.linalg.cond(init_q) > 1e8:
            init_q = None
    res = _warm_diagonalize(Q.T @ Ms @ Q, dopts, init_q)
    return res, Q @ res.mixing, res.inverse @ Q.T


def _stage(Ms: np.ndarray, k: int, mode: str, dopts: DiagOptions, init=None):
    if mode == "orthogonal":
        res = diagonalize(Ms, dopts)
        U, _ = normalize_columns(res.mixing)
        return res, U, U.T
    res, X, V = _shear_diagonalize(Ms, k, dopts, init)
    U, _ = normalize_columns(X)
    return res, U, V


def _top(weights, k):
    return np.argsort(-np.abs(weights), kind="stable")[:k]


def _rho_max(diagonals) -> float:
    if diagonals.shape[0] < 2:
        return 0.0
    rho, _ = modulus_of_uniqueness(diagonals)
    off = np.abs(rho - np.diag(np.diag(rho)))
    return float(off.max())


def two_stage_factorize(T, opts: FactorizeOptions) -> FactorizationReport:
    """Symmetric CP factorization by random then plug-in projections.

    Parameters
    ----------
    T : (d, d, d) array
        Symmetric tensor (to ``1e-8``).
    opts : FactorizeOptions

    Returns
    -------
    FactorizationReport
        ``estimate`` is a canonical symmetric order-3 :class:`CPModel`.
    """
    T = as_tensor(T, order=3)
    k = opts.rank
    d = _check_cube(T, k)
    scale = max(1.0, float(np.max(np.abs(T))))
    for p in ((1, 0, 2), (0, 2, 1), (2, 1, 0)):
        if np.max(np.abs(T - T.transpose(p))) > SYMMETRY_TOL * scale:
            raise ValueError("tensor is not symmetric")

    rng = make_rng(opts.seed)
    mode = opts.mode
    dopts = opts.diag_options(mode)
    P0 = make_projection_set(T, draw_directions(rng, opts.L0, d, opts.direction_law))
    res0, U0, V0 = _stage(P0.matrices, k, mode, dopts)
    w0, deg0 = recover_weights(T, U0, V0, mode, opts.weight_method, P0)
    sel0 = _top(w0, k)

    res1 = None
    flags = {}
    U, w, deg, sel, res = U0, w0, deg0, sel0, res0
    if opts.plugin:
        P1 = make_projection_set(T, _unit_rows(V0[sel0]))
        # shear sweeps start from the stage-0 inverse factors (Jacobi ignores this)
        res1, U1, V1 = _stage(P1.matrices, k, mode, dopts, _unit_rows(V0[sel0]))
        w1, deg1 = recover_weights(T, U1, V1, mode, opts.weight_method, P1)
        sel1 = _top(w1, k)
        U, w, deg, sel, res = U1, w1, deg1, sel1, res1
    if np.any(deg[sel]):
        flags["degenerate_weights"] = [int(i) for i in np.flatnonzero(deg[sel])]
    if not res.converged or not res0.converged:
        flags["not_converged"] = True

    estimate = CPModel.symmetric_model(w[sel], U[:, sel]).canonical()
    diagnostics = {
        "rho_max": _rho_max(res.diagonals[sel]),
        "mu": incoherence(estimate.A),
        "objective0": res0.objective,
        "objective1": res1.objective if res1 is not None else None,
        "sweeps0": res0.sweeps,
        "sweeps1": res1.sweeps if res1 is not None else None,
        "converged0": res0.converged,
        "converged1": res1.converged if res1 is not None else None,
        "L0": opts.L0,
        "seed": opts.seed,
    }
    return FactorizationReport(estimate, res0, res1, diagnostics, flags)


def _pair_columns(diagonals: np.ndarray):
    """Greedy +/- pairing of diagonal rows by most negative cosine.

    Returns the accepted pairs (below :data:`PAIR_COSINE`) and the fallback
    pairs formed from the leftovers regardless of cosine.
    """
    n = diagonals.shape[0]
    rho, _ = modulus_of_uniqueness(diagonals)
    iu, ju = np.triu_indices(n, 1)
    order = np.lexsort((ju, iu, rho[iu, ju]))
    used = np.zeros(n, dtype=bool)
    good, rest = [], []
    for t in order:
        p, q = int(iu[t]), int(ju[t])
        if used[p] or used[q]:
            continue
        used[p] = used[q] = True
        (good if rho[p, q] < PAIR_COSINE else rest).append((p, q))
    return good, rest


def _block_direction(X: np.ndarray) -> np.ndarray:
    # leading left singular vector of two collinear (up to noise) columns
    u, _, _ = np.linalg.svd(X, full_matrices=False)
    return u[:, 0]


def _reduce_asymmetric(Ms: np.ndarray, k: int, dopts: DiagOptions):
    """First two factor matrices of ``M_l = A diag(lam_l) B^T`` via the block embedding.

    When ``k < d`` the matrices are first compressed to ``Qa^T M_l Qb`` with
    ``Qa``, ``Qb`` the dominant rank-``k`` column and row spaces. Returns
    ``(A, B, result, flags)`` with unit columns.
    """
    L, d, _ = Ms.shape
    if k < d:
        Qa = _principal_subspace(Ms, k)
        Qb = _principal_subspace(Ms.transpose(0, 2, 1), k)
        Ms = Qa.T @ Ms @ Qb
    else:
        Qa = Qb = np.eye(d)
    m = Ms.shape[1]
    N = np.zeros((L, 2 * m, 2 * m))
    N[:, :m, m:] = Ms.transpose(0, 2, 1)
    N[:, m:, :m] = Ms
    # the embedding has zero diagonal blocks, a stationary point of every
    # shear; sweep in the rotated basis G N G^T (blocks +/-(M + M^T)/2)
    I = np.eye(m)
    G = np.block([[I, I], [I, -I]]) / math.sqrt(2.0)
    res = diagonalize(G @ N @ G.T, DiagOptions(mode="nonorthogonal", tol=dopts.tol,
                                               max_sweeps=dopts.max_sweeps,
                                               record_trace=dopts.record_trace))
    res.inverse = res.inverse @ G
    res.mixing = G.T @ res.mixing
    good, rest = _pair_columns(res.diagonals)
    flags = {}
    pairs = good
    if len(good) < k:
        flags["unpaired"] = k - len(good)
        pairs = good + rest
    norms = np.linalg.norm(res.diagonals, axis=1)
    strength = np.array([math.sqrt(norms[p] * norms[q]) for p, q in pairs])
    keep = np.argsort(-strength, kind="stable")[:k]
    X = res.mixing
    A = np.empty((d, k))
    B = np.empty((d, k))
    for c, t in enumerate(keep):
        p, q = pairs[t]
        B[:, c] = Qb @ _block_direction(X[:m, [p, q]])
        A[:, c] = Qa @ _block_direction(X[m:, [p, q]])
    return A, B, res, flags


def _dual_rows(F: np.ndarray) -> np.ndarray:
    return np.linalg.pinv(F)


def factorize_asymmetric(T, opts: FactorizeOptions) -> FactorizationReport:
    """CP factorization of a general cubical third-order tensor.

    The first two factor matrices come from the block embedding of the
    projections ``T(I, I, w_l)``; then ``pi_i c_i = T(a*_i, b*_i, I)`` with
    ``a*_i``, ``b*_i`` the dual (pseudo-inverse) rows of the recovered
    factor matrices.
    """
    T = as_tensor(T, order=3)
    k = opts.rank
    d = _check_cube(T, k)
    rng = make_rng(opts.seed)
    P = make_projection_set(T, draw_directions(rng, opts.L0, d, opts.direction_law))
    A, B, res, flags = _reduce_asymmetric(P.matrices, k, opts.diag_options("nonorthogonal"))
    Ad, Bd = _dual_rows(A), _dual_rows(B)
    PC = np.einsum("abc,ia,ib->ci", T, Ad, Bd)
    C, w = normalize_columns(PC)
    if np.any(w == 0):
        flags["degenerate_weights"] = [int(i) for i in np.flatnonzero(w == 0)]
    estimate = CPModel(w, (A, B, C)).canonical()
    diagnostics = {
        "rho_max": None,
        "mu": max(incoherence(F) for F in estimate.factors),
        "objective0": res.objective,
        "objective1": None,
        "sweeps0": res.sweeps,
        "sweeps1": None,
        "converged0": res.converged,
        "converged1": None,
        "L0": opts.L0,
        "seed": opts.seed,
    }
    return FactorizationReport(estimate, res, None, diagnostics, flags)


def factorize_fourth_order(T4, opts: FactorizeOptions, return_report: bool = False):
    """CP factorization of a hypercubical fourth-order tensor.

    Projections ``T(I, I, w_l, u_l)`` feed the asymmetric reduction for the
    first two factor matrices. For each component the matrix
    ``P_i = T(a*_i, b*_i, I, I) = pi_i c_i d_i^T`` is split by its leading
    singular pair.

    Returns
    -------
    CPModel
        Canonical four-factor model (or the full :class:`FactorizationReport`
        when ``return_report`` is set). Components whose top two singular
        values agree to ``1e-8`` relative are listed under
        ``flags["degenerate_rank_one"]``.
    """
    T4 = as_tensor(T4, order=4)
    k = opts.rank
    d = T4.shape[0]
    if any(n != d for n in T4.shape):
        raise ValueError(f"expected a hypercubical tensor, got shape {T4.shape}")
    if k > d:
        raise ValueError("rank exceeds dimension")
    rng = make_rng(opts.seed)
    W = draw_directions(rng, opts.L0, d, opts.direction_law)
    Wu = draw_directions(rng, opts.L0, d, opts.direction_law)
    Ms = np.einsum("ijkl,tk,tl->tij", T4, W, Wu)
    A, B, res, flags = _reduce_asymmetric(Ms, k, opts.diag_options("nonorthogonal"))
    Ad, Bd = _dual_rows(A), _dual_rows(B)
    Ps = np.einsum("abcd,ia,ib->icd", T4, Ad, Bd)
    w = np.empty(k)
    C = np.empty((d, k))
    D = np.empty((d, k))
    degenerate = []
    for i in range(k):
        u, s, vt = np.linalg.svd(Ps[i])
        w[i], C[:, i], D[:, i] = s[0], u[:, 0], vt[0]
        if s[0] == 0 or (len(s) > 1 and (s[0] - s[1]) / s[0] < 1e-8):
            degenerate.append(i)
    if degenerate:
        flags["degenerate_rank_one"] = degenerate
    estimate = CPModel(w, (A, B, C, D), flags=dict(flags)).canonical()
    if not return_report:
        return estimate
    diagnostics = {
        "rho_max": None,
        "mu": max(incoherence(F) for F in estimate.factors),
        "objective0": res.objective,
        "objective1": None,
        "sweeps0": res.sweeps,
        "sweeps1": None,
        "converged0": res.converged,
        "converged1": None,
        "L0": opts.L0,
        "seed": opts.seed,
    }
    return FactorizationReport(estimate, res, None, diagnostics, flags)
