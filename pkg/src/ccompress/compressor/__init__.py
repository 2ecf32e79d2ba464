"""Compression of simultaneous-message and multi-round protocols."""
from .coding import (DUMMY, code_length, decode_all, encode_index, expected_index_bits,
                     prefix_free_decode, prefix_free_encode)
from .multiround import (MultiCompressionReport, PublicCoinProtocol, RoundCompressionState,
                         compress_multiround, compress_round, round_state)
from .simultaneous import SimulCompressionReport, compress_simultaneous, sample_support

__all__ = [
    "DUMMY", "code_length", "decode_all", "encode_index", "expected_index_bits",
    "prefix_free_decode", "prefix_free_encode", "MultiCompressionReport",
    "PublicCoinProtocol", "RoundCompressionState", "compress_multiround", "compress_round",
    "round_state", "SimulCompressionReport", "compress_simultaneous", "sample_support",
]
