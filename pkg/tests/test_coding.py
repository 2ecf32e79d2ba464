import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ccompress.compressor import (DUMMY, code_length, decode_all, encode_index,
                                  expected_index_bits, prefix_free_decode, prefix_free_encode)
from ccompress.compressor.coding import index_length_law


def test_small_examples():
    assert len(prefix_free_encode(1)) <= 3
    assert prefix_free_decode(prefix_free_encode(5)) == (5, len(prefix_free_encode(5)))
    assert encode_index(0) == DUMMY == "0"
    with pytest.raises(ValueError):
        prefix_free_encode(0)


def test_length_sweep():
    for j in range(1, 2 ** 16 + 1):
        n = len(prefix_free_encode(j))
        assert n == code_length(j)
        assert n <= 2 * math.floor(math.log2(j)) + 3


def test_prefix_free():
    words = sorted([DUMMY] + [prefix_free_encode(j) for j in range(1, 5000)])
    for a, b in zip(words, words[1:]):
        assert not b.startswith(a)


@given(st.lists(st.integers(0, 10 ** 9), max_size=30))
def test_concatenation_round_trip(js):
    assert decode_all("".join(encode_index(j) for j in js)) == js


def test_truncated():
    w = prefix_free_encode(37)
    with pytest.raises(ValueError):
        prefix_free_decode(w[:-1])
    with pytest.raises(ValueError):
        prefix_free_decode("", 0)


@pytest.mark.parametrize("p", [0.9, 0.3, 0.01, 2 ** -12])
def test_length_law_matches_direct_sum(p):
    # direct geometric sum over R, capped where the tail is negligible
    direct = {}
    r = np.arange(1, int(60 / p) + 1)
    pr = (1 - p) ** (r - 1) * p
    for rr, m in zip(r, pr):
        n = code_length(int(rr))
        direct[n] = direct.get(n, 0.0) + m
    law = dict(index_length_law(p))
    for n, m in direct.items():
        assert law.get(n, 0.0) == pytest.approx(m, abs=1e-12)
    assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)


def test_capped_law_and_expected_bits():
    p, cap, acc = 0.2, 10, 0.7
    law = index_length_law(p, cap)
    r = np.arange(1, cap + 1)
    pr = (1 - p) ** (r - 1) * p
    assert sum(m for _, m in law) == pytest.approx(pr.sum(), abs=1e-14)
    want = acc * sum(m * code_length(int(x)) for x, m in zip(r, pr)) \
        + (1 - acc) * pr.sum() + (1 - pr.sum())
    assert expected_index_bits(p, acc, cap) == pytest.approx(want, abs=1e-12)


def test_expected_bits_bound():
    # E|code(R)| <= 2 log2 E[R] + 2 by Jensen
    for a in np.linspace(0, 40, 81):
        assert expected_index_bits(2.0 ** -a, 1.0) <= 2 * a + 2 + 1e-9
