"""Random ground-truth CP models for experiments and tests."""
from __future__ import annotations

import numpy as np

from .analysis import incoherence
from .tensor import CPModel, NoiseSpec, generate_noise, make_rng, normalize_columns

__all__ = [
    "random_weights",
    "random_orthogonal_factors",
    "random_incoherent_factors",
    "random_model",
    "random_noise",
    "derive_seed",
]

MODES = ("ortho", "nonortho", "asym", "order4")


def derive_seed(*keys: int) -> int:
    """64-bit seed derived from a tuple of nonnegative integers."""
    lo, hi = np.random.SeedSequence([int(x) for x in keys]).generate_state(2, np.uint32)
    return int(hi) << 32 | int(lo)


def random_weights(rng: np.random.Generator, k: int, low: float = 0.5, high: float = 1.5) -> np.ndarray:
    return rng.uniform(low, high, size=k)


def random_orthogonal_factors(rng: np.random.Generator, d: int, k: int) -> np.ndarray:
    """First ``k`` columns of the QR factor of a Gaussian ``d x k`` matrix."""
    Q, R = np.linalg.qr(rng.standard_normal((d, k)))
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def random_incoherent_factors(rng: np.random.Generator, d: int, k: int, mu_max: float = 0.5,
                              cond_max: float = np.inf, max_tries: int = 10000) -> np.ndarray:
    """Gaussian unit columns, redrawn until incoherence and conditioning pass."""
    for _ in range(max_tries):
        U, _ = normalize_columns(rng.standard_normal((d, k)))
        if incoherence(U) <= mu_max and np.linalg.cond(U) < cond_max:
            return U
    raise RuntimeError(f"no factors with incoherence <= {mu_max} after {max_tries} draws")


def random_model(d: int, k: int, mode: str = "ortho", seed=0, mu_max: float = 0.5,
                 cond_max: float = 10.0) -> CPModel:
    """Canonical random model for one of the ``generate`` modes.

    ``ortho``/``nonortho`` are symmetric order-3 models; ``asym`` draws three
    independent incoherent factor matrices; ``order4`` is a symmetric
    orthogonal fourth-order model. Weights are uniform in ``[0.5, 1.5]``.
    """
    if k > d:
        raise ValueError("rank exceeds dimension")
    rng = make_rng(seed)
    if mode == "ortho":
        U = random_orthogonal_factors(rng, d, k)
        return CPModel.symmetric_model(random_weights(rng, k), U).canonical()
    if mode == "nonortho":
        U = random_incoherent_factors(rng, d, k, mu_max, cond_max)
        return CPModel.symmetric_model(random_weights(rng, k), U).canonical()
    if mode == "asym":
        fs = tuple(random_incoherent_factors(rng, d, k, mu_max, cond_max) for _ in range(3))
        return CPModel(random_weights(rng, k), fs).canonical()
    if mode == "order4":
        U = random_orthogonal_factors(rng, d, k)
        return CPModel.symmetric_model(random_weights(rng, k), U, order=4).canonical()
    raise ValueError(f"unknown mode {mode!r}")


def random_noise(d: int, order: int, spec: NoiseSpec) -> np.ndarray:
    """Unit-norm noise tensor (not scaled by ``spec.epsilon``).

    Order 3 uses :func:`generate_noise`; order 4 is a Gaussian tensor with
    unit Frobenius norm.
    """
    if order == 3:
        return generate_noise(d, spec)
    if order != 4:
        raise ValueError("order must be 3 or 4")
    R = make_rng(spec.seed).standard_normal((d,) * 4)
    return R / np.linalg.norm(R)
