"""Single topic model: corpus simulation and third-moment estimation.

Each document has one latent topic ``h`` drawn from ``pi`` and three words
drawn independently from the topic's word distribution, so the expected
word-triple tensor is ``sum_i pi_i t_i (x) t_i (x) t_i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import align_factors
from .factorize import FactorizeOptions, two_stage_factorize
from .tensor import make_rng, symmetrize

__all__ = [
    "TopicModel",
    "Corpus",
    "random_topic_model",
    "generate_corpus",
    "empirical_tensor",
    "moment_tensor",
    "estimate_topic_model",
    "topic_errors",
]


@dataclass(frozen=True)
class TopicModel:
    """Topic prior ``pi`` (length k) and column-stochastic ``topics`` (d x k)."""

    pi: np.ndarray
    topics: np.ndarray
    flags: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        topics = np.array(self.topics, dtype=float)
        if topics.ndim != 2 or pi.shape != (topics.shape[1],):
            raise ValueError("pi must have one entry per topic column")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("pi must lie on the probability simplex")
        if np.any(topics < 0) or np.any(np.abs(topics.sum(axis=0) - 1.0) > 1e-12):
            raise ValueError("topic columns must be probability vectors")
        pi.setflags(write=False)
        topics.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "topics", topics)

    @property
    def d(self) -> int:
        return self.topics.shape[0]

    @property
    def k(self) -> int:
        return self.topics.shape[1]


@dataclass(frozen=True)
class Corpus:
    """``docs`` is an ``(n, 3)`` integer array of word indices in ``[0, d)``."""

    d: int
    docs: np.ndarray

    def __post_init__(self):
        docs = np.array(self.docs, dtype=np.int64).reshape(-1, 3)
        if docs.size and (docs.min() < 0 or docs.max() >= self.d):
            raise ValueError("word index out of range")
        docs.setflags(write=False)
        object.__setattr__(self, "docs", docs)

    @property
    def n(self) -> int:
        return self.docs.shape[0]


def random_topic_model(d: int, k: int, seed=0, separated: bool = True) -> TopicModel:
    """Random topic model with prior weights uniform in ``[0.5, 1.5]`` (normalized).

    ``separated`` splits the vocabulary into ``k`` contiguous blocks and gives
    each topic a flat-Dirichlet distribution on its own block; otherwise each
    topic is flat-Dirichlet on the whole vocabulary.
    """
    if k > d:
        raise ValueError("rank exceeds dimension")
    rng = make_rng(seed)
    pi = rng.uniform(0.5, 1.5, size=k)
    topics = np.zeros((d, k))
    if separated:
        edges = np.linspace(0, d, k + 1).round().astype(int)
        for i in range(k):
            lo, hi = edges[i], edges[i + 1]
            topics[lo:hi, i] = rng.dirichlet(np.ones(hi - lo))
    else:
        topics = rng.dirichlet(np.ones(d), size=k).T
    topics /= topics.sum(axis=0)
    return TopicModel(pi / pi.sum(), topics)


def generate_corpus(model: TopicModel, n: int, seed=0) -> Corpus:
    """Draw ``n`` three-word documents."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = make_rng(seed)
    h = rng.choice(model.k, size=n, p=model.pi)
    docs = np.empty((n, 3), dtype=np.int64)
    for i in range(model.k):
        idx = np.flatnonzero(h == i)
        docs[idx] = rng.choice(model.d, size=(idx.size, 3), p=model.topics[:, i])
    return Corpus(model.d, docs)


def empirical_tensor(corpus: Corpus) -> np.ndarray:
    """Normalized word-triple counts ``T[a, b, c] = #{(a, b, c)} / n``."""
    if corpus.n == 0:
        raise ValueError("empty corpus")
    d = corpus.d
    flat = (corpus.docs[:, 0] * d + corpus.docs[:, 1]) * d + corpus.docs[:, 2]
    return (np.bincount(flat, minlength=d**3) / corpus.n).reshape(d, d, d)


def moment_tensor(model: TopicModel) -> np.ndarray:
    """Population tensor ``sum_i pi_i t_i^{(x)3}``."""
    t = model.topics
    return np.einsum("m,im,jm,km->ijk", model.pi, t, t, t)


def _to_simplex(x):
    x = np.clip(x, 0.0, None)
    s = x.sum(axis=0)
    uniform = np.full_like(x, 1.0 / x.shape[0])
    return np.where(s > 0, x / np.where(s > 0, s, 1.0), uniform), s <= 0


def estimate_topic_model(corpus: Corpus, k: int, opts: FactorizeOptions | None = None) -> TopicModel:
    """Estimate ``(pi, topics)`` from the empirical third moment.

    The symmetrized empirical tensor is factorized in non-orthogonal mode.
    Unit factors are clipped at zero and rescaled to sum to one, weights are
    rescaled by the cube of that factor (``pi_i |t_i|^3`` is what the tensor
    carries) and then clipped and renormalized.
    """
    d = corpus.d
    if k > d:
        raise ValueError("rank exceeds dimension")
    if opts is None:
        opts = FactorizeOptions(rank=k, mode="nonorthogonal")
    elif opts.rank != k or opts.mode != "nonorthogonal":
        opts = FactorizeOptions(rank=k, mode="nonorthogonal", projections=opts.projections,
                                direction_law=opts.direction_law, plugin=opts.plugin,
                                seed=opts.seed, diag=opts.diag, weight_method=opts.weight_method)
    T = symmetrize(empirical_tensor(corpus))
    report = two_stage_factorize(T, opts)
    U = np.array(report.estimate.A)
    clipped = np.clip(U, 0.0, None)
    sums = clipped.sum(axis=0)
    topics, empty = _to_simplex(clipped)
    weights = report.estimate.weights * sums**3
    pi, none_left = _to_simplex(weights[:, None])
    flags = dict(report.flags)
    if np.any(empty):
        flags["empty_topics"] = [int(i) for i in np.flatnonzero(empty)]
    if none_left[0]:
        flags["empty_prior"] = True
    return TopicModel(pi[:, 0], topics, flags=flags)


def topic_errors(truth: TopicModel, estimate: TopicModel) -> tuple[float, float]:
    """Aligned errors: mean topic l1 distance and l1 distance of the priors."""
    al = align_factors(truth.topics, estimate.topics)
    matched = estimate.topics[:, al.permutation]
    topic_err = float(np.mean(np.abs(truth.topics - matched).sum(axis=0)))
    prior_err = float(np.abs(truth.pi - estimate.pi[al.permutation]).sum())
    return topic_err, prior_err
