"""Text formats for tensors, CP models and corpora.

Tensor: ``TNS3 d1 d2 d3`` (or ``TNS4 ...``) header, then the values in
C order, one line per last-mode fiber, each written with 17 significant
digits. CP model: ``CPMODEL k d order sym`` header, a line of ``k`` weights,
then ``k`` lines (one per column) for each factor matrix in mode order.
Corpus: ``CORPUS d n`` header followed by ``n`` lines of three indices.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .moments import Corpus
from .tensor import CPModel

__all__ = [
    "FormatError",
    "encode_tensor",
    "decode_tensor",
    "encode_model",
    "decode_model",
    "encode_corpus",
    "decode_corpus",
    "read_tensor",
    "write_tensor",
    "read_model",
    "write_model",
    "read_corpus",
    "write_corpus",
]


class FormatError(ValueError):
    """Malformed file contents."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _line(values) -> str:
    return " ".join(_fmt(v) for v in values)


def _text(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("stream is not UTF-8") from exc
    return data


def _floats(tokens) -> np.ndarray:
    try:
        vals = np.array([float(t) for t in tokens], dtype=float)
    except ValueError as exc:
        raise FormatError(f"bad number: {exc}") from exc
    if not np.all(np.isfinite(vals)):
        raise FormatError("non-finite value")
    return vals


def _dims(tokens, expected: int, what: str) -> tuple:
    if len(tokens) != expected:
        raise FormatError(f"{what} header needs {expected} fields")
    try:
        dims = tuple(int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"bad {what} header") from exc
    if any(n < 0 for n in dims):
        raise FormatError(f"negative size in {what} header")
    return dims


def encode_tensor(T) -> bytes:
    """Serialize an order-3 or order-4 array."""
    T = np.asarray(T, dtype=float)
    if T.ndim not in (3, 4):
        raise ValueError("only third- and fourth-order tensors can be encoded")
    if not np.all(np.isfinite(T)):
        raise ValueError("tensor has non-finite entries")
    lines = [f"TNS{T.ndim} " + " ".join(str(n) for n in T.shape)]
    lines += [_line(row) for row in T.reshape(-1, T.shape[-1])]
    return ("\n".join(lines) + "\n").encode("utf-8")


def decode_tensor(data) -> np.ndarray:
    """Parse a ``TNS3``/``TNS4`` stream."""
    lines = _text(data).split("\n", 1)
    head = lines[0].split()
    if not head or head[0] not in ("TNS3", "TNS4"):
        raise FormatError("missing TNS3/TNS4 header")
    order = int(head[0][3])
    dims = _dims(head[1:], order, head[0])
    if any(n == 0 for n in dims):
        raise FormatError("tensor dims must be positive")
    vals = _floats(lines[1].split() if len(lines) > 1 else [])
    if vals.size != math.prod(dims):
        raise FormatError(f"expected {math.prod(dims)} values, found {vals.size}")
    return vals.reshape(dims)


def encode_model(model: CPModel) -> bytes:
    """Serialize a CP model (all factor matrices must share one dimension)."""
    dims = set(model.dims)
    if len(dims) != 1:
        raise ValueError("CPMODEL format needs equal mode dimensions")
    d = dims.pop()
    lines = [f"CPMODEL {model.rank} {d} {model.order} {int(model.symmetric)}", _line(model.weights)]
    for F in model.factors:
        lines += [_line(col) for col in F.T]
    return ("\n".join(lines) + "\n").encode("utf-8")


def decode_model(data) -> CPModel:
    """Parse a ``CPMODEL`` stream."""
    lines = _text(data).split("\n")
    head = lines[0].split()
    if not head or head[0] != "CPMODEL":
        raise FormatError("missing CPMODEL header")
    k, d, order, sym = _dims(head[1:], 4, "CPMODEL")
    if order not in (3, 4) or sym not in (0, 1):
        raise FormatError("bad order or symmetry field")
    body = lines[1:]
    if len(body) < 1 + order * k:
        raise FormatError("truncated CPMODEL stream")
    weights = _floats(body[0].split())
    if weights.size != k:
        raise FormatError(f"expected {k} weights, found {weights.size}")
    factors = []
    for m in range(order):
        cols = [_floats(body[1 + m * k + i].split()) for i in range(k)]
        if any(c.size != d for c in cols):
            raise FormatError(f"factor columns must have {d} entries")
        factors.append(np.array(cols).T.reshape(d, k))
    if any(line.strip() for line in body[1 + order * k:]):
        raise FormatError("trailing data after CPMODEL factors")
    try:
        return CPModel(weights, tuple(factors), symmetric=bool(sym))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def encode_corpus(corpus: Corpus) -> bytes:
    lines = [f"CORPUS {corpus.d} {corpus.n}"]
    lines += [f"{a} {b} {c}" for a, b, c in corpus.docs.tolist()]
    return ("\n".join(lines) + "\n").encode("utf-8")


def decode_corpus(data) -> Corpus:
    lines = _text(data).split("\n", 1)
    head = lines[0].split()
    if not head or head[0] != "CORPUS":
        raise FormatError("missing CORPUS header")
    d, n = _dims(head[1:], 2, "CORPUS")
    tokens = lines[1].split() if len(lines) > 1 else []
    if len(tokens) != 3 * n:
        raise FormatError(f"expected {3 * n} indices, found {len(tokens)}")
    try:
        docs = np.array([int(t) for t in tokens], dtype=np.int64).reshape(n, 3)
        return Corpus(d, docs)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def write_tensor(path, T) -> None:
    Path(path).write_bytes(encode_tensor(T))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def write_model(path, model: CPModel) -> None:
    Path(path).write_bytes(encode_model(model))


def read_model(path) -> CPModel:
    return decode_model(Path(path).read_bytes())


def write_corpus(path, corpus: Corpus) -> None:
    Path(path).write_bytes(encode_corpus(corpus))


def read_corpus(path) -> Corpus:
    return decode_corpus(Path(path).read_bytes())
