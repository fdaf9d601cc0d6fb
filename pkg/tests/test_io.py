import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tensorjd.io import (
    FormatError,
    decode_corpus,
    decode_model,
    decode_tensor,
    encode_corpus,
    encode_model,
    encode_tensor,
)
from tensorjd.moments import Corpus
from tensorjd.tensor import CPModel, make_rng

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


def test_scalar_tensor_layout():
    assert encode_tensor(np.full((1, 1, 1), 2.5)) == b"TNS3 1 1 1\n2.5\n"


def test_fourth_order_header():
    s = encode_tensor(np.zeros((1, 2, 1, 1)))
    assert s.startswith(b"TNS4 1 2 1 1\n")
    assert decode_tensor(s).shape == (1, 2, 1, 1)


def test_wrong_value_count():
    with pytest.raises(FormatError):
        decode_tensor("TNS3 2 2 2\n" + " ".join(["1"] * 7))


@pytest.mark.parametrize("text", [
    "TNS 1 1 1\n1",
    "TNS3 1 1\n1",
    "TNS3 a 1 1\n1",
    "TNS3 0 1 1\n",
    "TNS3 1 1 1\nnan",
    "TNS3 1 1 1\ninf",
    "TNS3 1 1 1\nx",
    "",
])
def test_malformed_tensor_streams(text):
    with pytest.raises(FormatError):
        decode_tensor(text)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=3, max_dims=4, max_side=3), elements=finite))
def test_tensor_round_trip_bit_exact(T):
    s = encode_tensor(T)
    back = decode_tensor(s)
    assert back.tobytes() == T.tobytes()
    assert encode_tensor(back) == s


def test_model_round_trip():
    rng = make_rng(1)
    for m in (CPModel.symmetric_model(rng.standard_normal(3), rng.standard_normal((4, 3))),
              CPModel(rng.standard_normal(2), tuple(rng.standard_normal((4, 5, 2))))):
        s = encode_model(m)
        back = decode_model(s)
        assert back == m and back.symmetric == m.symmetric
        assert encode_model(back) == s


def test_model_header_and_layout():
    m = CPModel.symmetric_model([1.5], np.array([[1.0], [0.0]]))
    assert encode_model(m).decode().splitlines() == ["CPMODEL 1 2 3 1", "1.5", "1 0", "1 0", "1 0"]


@pytest.mark.parametrize("text", [
    "CPMODEL 1 2 3\n1\n1 0\n1 0\n1 0\n",
    "CPMODEL 1 2 5 0\n1\n1 0\n1 0\n1 0\n",
    "CPMODEL 1 2 3 0\n1 2\n1 0\n1 0\n1 0\n",
    "CPMODEL 1 2 3 0\n1\n1 0\n1 0\n",
    "CPMODEL 1 2 3 0\n1\n1 0 0\n1 0\n1 0\n",
    "CPMODEL 1 2 3 1\n1\n1 0\n0 1\n1 0\n",
    "MODEL 1 2 3 0\n1\n1 0\n1 0\n1 0\n",
])
def test_malformed_model_streams(text):
    with pytest.raises(FormatError):
        decode_model(text)


def test_corpus_round_trip():
    c = Corpus(4, np.array([[0, 1, 2], [3, 3, 0]]))
    s = encode_corpus(c)
    assert s == b"CORPUS 4 2\n0 1 2\n3 3 0\n"
    back = decode_corpus(s)
    assert back.d == 4 and np.array_equal(back.docs, c.docs)


@pytest.mark.parametrize("text", ["CORPUS 4 1\n0 1\n", "CORPUS 4 1\n0 1 4\n", "CORPUS 4\n", "CORPUS 4 1\n0 1 x\n"])
def test_malformed_corpus_streams(text):
    with pytest.raises(FormatError):
        decode_corpus(text)
