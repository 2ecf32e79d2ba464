"""Prefix-free codes for stopping indices.

Codeword layout: the dummy/abort message is the single bit ``0``. An index
j >= 1 is ``1`` followed by the Elias-gamma code of j, i.e. a unary length
header (``len(bin(j)) - 1`` zeros) and then the binary digits of j. So
``|code(j)| = 2*floor(log2 j) + 2``.
"""
from __future__ import annotations

import math

DUMMY = "0"


def prefix_free_encode(j: int) -> str:
    if j < 1:
        raise ValueError("index must be >= 1 (0 is the dummy message)")
    b = bin(j)[2:]
    return "1" + "0" * (len(b) - 1) + b


def encode_index(j: int) -> str:
    """Like prefix_free_encode but maps 0 to the dummy codeword."""
    return DUMMY if j == 0 else prefix_free_encode(j)


def prefix_free_decode(bits: str, start: int = 0) -> tuple[int, int]:
    """Decode one codeword at ``start``; return (index, next position).

    Index 0 means the dummy message.
    """
    if start >= len(bits):
        raise ValueError("no codeword at end of input")
    if bits[start] == "0":
        return 0, start + 1
    pos = start + 1
    zeros = 0
    while pos < len(bits) and bits[pos] == "0":
        zeros += 1
        pos += 1
    end = pos + zeros + 1
    if end > len(bits):
        raise ValueError("truncated codeword")
    return int(bits[pos:end], 2), end


def decode_all(bits: str) -> list[int]:
    out, pos = [], 0
    while pos < len(bits):
        j, pos = prefix_free_decode(bits, pos)
        out.append(j)
    return out


def code_length(j: int) -> int:
    return 1 if j == 0 else 2 * (j.bit_length() - 1) + 2


def index_length_law(stop_prob: float, t_max: int | None = None) -> list[tuple[int, float]]:
    """(codeword length, Pr[R in the matching dyadic block]) for R ~ Geometric(stop_prob).

    Only R <= t_max is covered, so the masses sum to Pr[R <= t_max].
    """
    if stop_prob >= 1.0:
        return [(code_length(1), 1.0)]
    log_miss = math.log1p(-stop_prob)

    def survive(n):  # Pr[R >= n]
        return math.exp((n - 1) * log_miss)

    cap = math.inf if t_max is None else t_max
    out, b = [], 0
    while 2 ** b <= cap:
        lo, hi = 2 ** b, min(2 ** (b + 1) - 1, cap)
        mass = survive(lo) * -math.expm1((hi + 1 - lo) * log_miss)
        if mass > 0:
            out.append((2 * b + 2, mass))
        if survive(hi + 1) < 1e-300:
            break
        b += 1
    return out


def expected_index_bits(stop_prob: float, accept_prob: float,
                        t_max: int | None = None) -> float:
    """E[bits] of one Las-Vegas round whose stopping time R ~ Geometric(stop_prob).

    At the stop the index R is sent with probability ``accept_prob`` and the
    dummy otherwise; runs past ``t_max`` send the dummy.
    """
    law = index_length_law(stop_prob, t_max)
    total = sum(n * m for n, m in law)
    if t_max is None or stop_prob >= 1.0:
        p_stop = 1.0
    else:
        p_stop = -math.expm1(t_max * math.log1p(-stop_prob))
    return accept_prob * total + (1.0 - accept_prob) * p_stop + (1.0 - p_stop)
