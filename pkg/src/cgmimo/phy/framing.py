"""Frame layout: one coded block per user spread over all subcarriers of one
OFDM symbol.

A block holds ``subcarriers * bits_per_symbol`` bit slots. The largest
whole number of puncturing periods is filled with coded bits; leftover
slots carry pad bits that the receiver ignores. All slots are interleaved
by one permutation before mapping, and symbol ``s`` of a block goes to
subcarrier ``s``.
"""

from dataclasses import dataclass

import numpy as np

from .coding import _OUT_PERIOD, conv_encode, info_length
from .constellation import Constellation

__all__ = [
    "FrameLayout",
    "CodedFrame",
    "make_interleaver",
    "interleave",
    "deinterleave",
    "frame_assemble",
    "frame_disassemble",
]


@dataclass(frozen=True)
class FrameLayout:
    subcarriers: int
    bits_per_symbol: int

    @property
    def capacity(self) -> int:
        return self.subcarriers * self.bits_per_symbol

    @property
    def n_coded(self) -> int:
        return self.capacity // _OUT_PERIOD * _OUT_PERIOD

    @property
    def n_info(self) -> int:
        return info_length(self.n_coded)

    @property
    def n_pad(self) -> int:
        return self.capacity - self.n_coded

    def __post_init__(self):
        if self.n_coded < _OUT_PERIOD or self.n_info < 1:
            raise ValueError("frame too short for the terminated code")


@dataclass(frozen=True)
class CodedFrame:
    info_bits: np.ndarray     # (..., n_info)
    coded_bits: np.ndarray    # (..., n_coded)
    permutation: np.ndarray   # (capacity,)
    symbol_indices: np.ndarray  # (..., subcarriers)


def make_interleaver(n: int, rng) -> np.ndarray:
    return rng.permutation(n)


def interleave(bits, perm):
    return np.asarray(bits)[..., perm]


def deinterleave(values, perm):
    values = np.asarray(values)
    out = np.empty_like(values)
    out[..., perm] = values
    return out


def frame_assemble(info_bits, pad_bits, perm, constellation: Constellation) -> CodedFrame:
    """Encode, pad, interleave and map ``(..., n_info)`` info bits."""
    coded = conv_encode(info_bits)
    slots = np.concatenate([coded, np.asarray(pad_bits, np.uint8)], axis=-1)
    if slots.shape[-1] != perm.size:
        raise ValueError(f"{slots.shape[-1]} bit slots but interleaver of size {perm.size}")
    idx = constellation.symbol_indices(interleave(slots, perm))
    return CodedFrame(np.asarray(info_bits), coded, perm, idx)


def frame_disassemble(llrs, perm, n_coded):
    """Turn per-subcarrier LLRs ``(..., subcarriers, bits_per_symbol)`` back
    into the coded LLR stream ``(..., n_coded)``."""
    llrs = np.asarray(llrs)
    flat = llrs.reshape(llrs.shape[:-2] + (-1,))
    return deinterleave(flat, perm)[..., :n_coded]

