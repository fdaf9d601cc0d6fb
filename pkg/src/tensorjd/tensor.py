"""Dense third/fourth-order tensors, CP models and multilinear application.

Tensors are plain ``numpy`` arrays of shape ``(d1, d2, d3)`` or
``(d1, d2, d3, d4)`` in C (i-major) order. CP models are stored as a weight
vector plus one ``d x k`` factor matrix per mode.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "CPModel",
    "NoiseSpec",
    "make_rng",
    "as_tensor",
    "cp_to_tensor",
    "apply3",
    "project",
    "project4",
    "generate_noise",
    "operator_norm_estimate",
    "canonical_signs",
    "normalize_columns",
    "symmetrize",
]


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator seeded with a 64-bit integer (or seed sequence)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def as_tensor(T, order: int | None = None) -> np.ndarray:
    """Validate and return ``T`` as a float64 array of order 3 or 4."""
    T = np.asarray(T, dtype=float)
    if T.ndim not in (3, 4):
        raise ValueError(f"expected a third- or fourth-order tensor, got ndim={T.ndim}")
    if order is not None and T.ndim != order:
        raise ValueError(f"expected an order-{order} tensor, got ndim={T.ndim}")
    if any(n < 1 for n in T.shape):
        raise ValueError(f"tensor dims must be positive, got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValueError("tensor has non-finite entries")
    return T


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CPModel:
    """Weighted sum of rank-one terms ``sum_m w_m a_m (x) b_m (x) c_m [(x) d_m]``.

    Parameters
    ----------
    weights : (k,) array
    factors : sequence of (d, k) arrays, one per mode (3 or 4 of them).
    symmetric : bool
        All factor matrices are identical.
    """

    weights: np.ndarray
    factors: tuple
    symmetric: bool = False
    flags: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = _frozen(np.atleast_1d(self.weights))
        fs = tuple(_frozen(F) for F in self.factors)
        if len(fs) not in (3, 4):
            raise ValueError("a CP model needs 3 or 4 factor matrices")
        k = w.size
        for F in fs:
            if F.ndim != 2 or F.shape[1] != k:
                raise ValueError(f"factor matrix shape {F.shape} does not match rank {k}")
        if len({F.shape[0] for F in fs}) != 1 and self.symmetric:
            raise ValueError("symmetric model needs equal dimensions")
        if self.symmetric and any(not np.array_equal(fs[0], F) for F in fs[1:]):
            raise ValueError("symmetric flag set but factor matrices differ")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "factors", fs)

    def __eq__(self, other):
        if not isinstance(other, CPModel):
            return NotImplemented
        return (self.symmetric == other.symmetric and self.order == other.order
                and np.array_equal(self.weights, other.weights)
                and all(np.array_equal(a, b) for a, b in zip(self.factors, other.factors)))

    __hash__ = None

    @classmethod
    def symmetric_model(cls, weights, U, order: int = 3, **kw) -> "CPModel":
        U = np.asarray(U, dtype=float)
        return cls(weights, (U,) * order, symmetric=True, **kw)

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> tuple:
        return tuple(F.shape[0] for F in self.factors)

    @property
    def A(self) -> np.ndarray:
        return self.factors[0]

    @property
    def B(self) -> np.ndarray:
        return self.factors[1]

    @property
    def C(self) -> np.ndarray:
        return self.factors[2]

    @property
    def D(self) -> np.ndarray | None:
        return self.factors[3] if self.order == 4 else None

    def canonical(self) -> "CPModel":
        """Return the model in canonical sign form (see :func:`canonical_signs`)."""
        w, fs = canonical_signs(self.weights, self.factors, self.symmetric)
        return CPModel(w, fs, self.symmetric, dict(self.flags))


def normalize_columns(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(F / norms, norms)``; zero columns are left untouched."""
    F = np.asarray(F, dtype=float)
    norms = np.linalg.norm(F, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return F / safe, norms


def _leading_sign(F: np.ndarray) -> np.ndarray:
    # sign of the largest-magnitude entry of each column; first index wins ties
    if F.shape[1] == 0:
        return np.ones(0)
    idx = np.argmax(np.abs(F), axis=0)
    s = np.sign(F[idx, np.arange(F.shape[1])])
    return np.where(s == 0, 1.0, s)


def canonical_signs(weights, factors: Sequence[np.ndarray], symmetric: bool):
    """Canonicalize the sign ambiguity of a CP model.

    Symmetric models: each shared column gets its largest-magnitude entry
    positive and the flip is charged to the weight (odd order) so the tensor
    is unchanged. Asymmetric models: every mode but the last is made
    positive-leading, the leftover sign goes into the last mode, and weights
    are made nonnegative by flipping the last mode as well.
    """
    w = np.array(weights, dtype=float)
    fs = [np.array(F, dtype=float) for F in factors]
    order = len(fs)
    if symmetric:
        s = _leading_sign(fs[0])
        U = fs[0] * s
        w = w * s**order
        return w, tuple(U for _ in range(order))
    last = fs[-1] * 1.0
    for m in range(order - 1):
        s = _leading_sign(fs[m])
        fs[m] = fs[m] * s
        last = last * s
    neg = np.where(w < 0, -1.0, 1.0)
    w = w * neg
    fs[-1] = last * neg
    return w, tuple(fs)


def cp_to_tensor(model: CPModel) -> np.ndarray:
    """Dense tensor of a CP model (order 3 or 4)."""
    w = model.weights
    if model.order == 3:
        A, B, C = model.factors
        return np.einsum("m,im,jm,km->ijk", w, A, B, C)
    A, B, C, D = model.factors
    return np.einsum("m,im,jm,km,lm->ijkl", w, A, B, C, D)


def _vec(x, n: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"{name} has shape {x.shape}, expected ({n},)")
    return x


def apply3(T, x, y, z) -> float:
    """Trilinear form ``sum_ijk T[i,j,k] x_i y_j z_k``."""
    T = np.asarray(T, dtype=float)
    d1, d2, d3 = T.shape
    x, y, z = _vec(x, d1, "x"), _vec(y, d2, "y"), _vec(z, d3, "z")
    return float(np.einsum("ijk,i,j,k->", T, x, y, z))


def project(T, w) -> np.ndarray:
    """Contract the last mode with ``w``: ``M[i,j] = sum_k T[i,j,k] w_k``."""
    T = np.asarray(T, dtype=float)
    if T.ndim != 3:
        raise ValueError("project expects a third-order tensor")
    w = _vec(w, T.shape[2], "w")
    return T @ w


def project4(T, w, u) -> np.ndarray:
    """Contract the last two modes: ``M[i,j] = sum_kl T[i,j,k,l] w_k u_l``."""
    T = np.asarray(T, dtype=float)
    if T.ndim != 4:
        raise ValueError("project4 expects a fourth-order tensor")
    w = _vec(w, T.shape[2], "w")
    u = _vec(u, T.shape[3], "u")
    return np.einsum("ijkl,k,l->ij", T, w, u)


def symmetrize(T: np.ndarray) -> np.ndarray:
    """Average of a cubic third-order tensor over all six index permutations."""
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    return sum(np.transpose(T, p) for p in perms) / 6.0


def operator_norm_estimate(T, rng=None, restarts: int = 10, iters: int = 50) -> float:
    """Estimate ``max_{|w|=1} |T(w, w, w)|`` for a symmetric tensor.

    Higher-order power iteration from ``restarts`` random starts, keeping the
    largest value seen over all iterates.
    """
    T = np.asarray(T, dtype=float)
    d = T.shape[0]
    rng = make_rng(0) if rng is None else rng
    best = np.max(np.abs(np.einsum("iii->i", T)))  # coordinate directions
    for _ in range(restarts):
        w = rng.standard_normal(d)
        w /= np.linalg.norm(w)
        for _ in range(iters):
            g = np.einsum("ijk,j,k->i", T, w, w)
            best = max(best, abs(float(g @ w)))
            n = np.linalg.norm(g)
            if n == 0:
                break
            w = g / n
        best = max(best, abs(apply3(T, w, w, w)))
    return float(best)


@dataclass(frozen=True)
class NoiseSpec:
    """Settings for :func:`generate_noise`.

    ``normalization`` is ``"operator-estimate"`` (power-iteration estimate of
    the symmetric operator norm) or ``"frobenius"``.
    """

    epsilon: float = 1.0
    seed: int = 0
    normalization: str = "operator-estimate"

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        if self.normalization not in ("operator-estimate", "frobenius"):
            raise ValueError(f"unknown normalization {self.normalization!r}")


def generate_noise(d: int, spec: NoiseSpec = NoiseSpec()) -> np.ndarray:
    """Random symmetric ``d x d x d`` tensor with unit (estimated) norm.

    The returned tensor is *not* multiplied by ``spec.epsilon``; callers form
    ``T + epsilon * R`` themselves.
    """
    if d < 1:
        raise ValueError("d must be positive")
    rng = make_rng(spec.seed)
    R = symmetrize(rng.standard_normal((d, d, d)))
    if spec.normalization == "frobenius":
        scale = np.linalg.norm(R)
    else:
        scale = operator_norm_estimate(R, rng)
    if scale == 0:
        R = np.zeros((d, d, d))
        R.flat[0] = 1.0
        return R
    return R / scale
