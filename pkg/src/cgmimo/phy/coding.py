"""Rate-5/6 punctured convolutional code and a soft-input max-log Viterbi decoder.

Mother code: constraint length 7, generators 133 and 171 (octal), rate 1/2,
terminated with six zero tail bits. Puncturing keeps 6 of every 10 mother
bits; in the serialized order ``A0 B0 A1 B1 ... A4 B4`` the keep mask is
``1 1 1 0 0 1 1 0 0 1`` (the 802.11n rate-5/6 pattern). The mask is
applied cyclically, so a message whose length plus tail is not a multiple
of 5 ends in a partial puncturing period.

LLR sign convention: negative values favour bit 0.
"""

import numba
import numpy as np

__all__ = [
    "MEMORY",
    "GENERATORS",
    "PUNCTURE_MASK",
    "conv_encode",
    "viterbi_decode_soft",
    "puncture",
    "depuncture",
    "info_length",
    "coded_length",
]

MEMORY = 6
GENERATORS = (0o133, 0o171)
PUNCTURE_MASK = np.array([1, 1, 1, 0, 0, 1, 1, 0, 0, 1], dtype=bool)
_IN_PERIOD = 5
_OUT_PERIOD = int(PUNCTURE_MASK.sum())


def _taps(g):
    # bit (MEMORY - d) of the generator taps the input delayed by d
    return [d for d in range(MEMORY + 1) if (g >> (MEMORY - d)) & 1]


def _keep(n_mother):
    return np.resize(PUNCTURE_MASK, n_mother)


def coded_length(n_info: int) -> int:
    """Punctured length of a terminated ``n_info``-bit message."""
    if n_info < 0:
        raise ValueError("negative message length")
    return int(_keep(2 * (n_info + MEMORY)).sum())


def info_length(n_coded: int) -> int:
    """Message length of a coded stream made of whole puncturing periods."""
    if n_coded % _OUT_PERIOD or n_coded < _OUT_PERIOD * 2:
        raise ValueError(f"coded length must be a positive multiple of {_OUT_PERIOD} "
                         "covering the tail")
    return n_coded // _OUT_PERIOD * _IN_PERIOD - MEMORY


def puncture(mother):
    """Drop the punctured positions from a serialized ``(..., 2n)`` mother stream."""
    mother = np.asarray(mother)
    if mother.shape[-1] % 2:
        raise ValueError("mother stream must hold (A, B) pairs")
    return mother[..., _keep(mother.shape[-1])]


def depuncture(llrs, n_info):
    """Reinsert zero LLRs at punctured positions of an ``n_info``-bit message."""
    llrs = np.asarray(llrs, dtype=float)
    n_mother = 2 * (n_info + MEMORY)
    if llrs.shape[-1] != coded_length(n_info):
        raise ValueError(f"{llrs.shape[-1]} LLRs do not match a {n_info}-bit message")
    out = np.zeros(llrs.shape[:-1] + (n_mother,))
    out[..., _keep(n_mother)] = llrs
    return out


def conv_encode(info_bits):
    """Encode ``(..., n_info)`` bits with six tail bits and puncture to rate 5/6."""
    info = np.asarray(info_bits, dtype=np.uint8)
    u = np.concatenate([info, np.zeros(info.shape[:-1] + (MEMORY,), np.uint8)], axis=-1)
    n = u.shape[-1]
    padded = np.concatenate([np.zeros(u.shape[:-1] + (MEMORY,), np.uint8), u], axis=-1)
    out = np.empty(u.shape[:-1] + (n, 2), np.uint8)
    for branch, g in enumerate(GENERATORS):
        acc = np.zeros(u.shape, np.uint8)
        for d in _taps(g):
            acc ^= padded[..., MEMORY - d:MEMORY - d + n]
        out[..., branch] = acc
    return puncture(out.reshape(u.shape[:-1] + (2 * n,)))


def _branch_codes():
    # code of the branch leaving `state` on input 0: 2*A + B. Both
    # generators tap the current input, so input 1 gives the complement.
    codes = np.empty(1 << MEMORY, np.int64)
    for state in range(1 << MEMORY):
        reg = state  # input bit 0 in position MEMORY
        a = bin(reg & GENERATORS[0]).count("1") & 1
        b = bin(reg & GENERATORS[1]).count("1") & 1
        codes[state] = 2 * a + b
    return codes


_CODES = _branch_codes()


@numba.njit(cache=True, nogil=True)
def _viterbi(llr, codes, n_info):
    n_frames, n_steps, _ = llr.shape
    n_states = codes.shape[0]
    half = n_states // 2
    out = np.zeros((n_frames, n_info), np.uint8)
    # one byte per decision keeps the add-compare-select loop branch-free
    # and vectorizable
    dec = np.zeros((n_steps, n_states), np.uint8)
    pm = np.empty(n_states)
    p0 = np.empty(half)
    p1 = np.empty(half)
    # branch leaving state 2j (or 2j+1) on input 0 has metric
    # sa*la + sb*lb with signs 2c - 1 of its two output bits
    sa0 = np.empty(half)
    sb0 = np.empty(half)
    sa1 = np.empty(half)
    sb1 = np.empty(half)
    for j in range(half):
        sa0[j] = 2.0 * (codes[2 * j] >> 1) - 1.0
        sb0[j] = 2.0 * (codes[2 * j] & 1) - 1.0
        sa1[j] = 2.0 * (codes[2 * j + 1] >> 1) - 1.0
        sb1[j] = 2.0 * (codes[2 * j + 1] & 1) - 1.0
    for f in range(n_frames):
        pm[:] = -np.inf
        pm[0] = 0.0
        for t in range(n_steps):
            la = llr[f, t, 0]
            lb = llr[f, t, 1]
            for j in range(half):
                p0[j] = pm[2 * j]
                p1[j] = pm[2 * j + 1]
            # butterfly: states 2j, 2j+1 feed j (input 0) and j + half (input 1);
            # input 1 flips both output bits
            for j in range(half):
                m0 = sa0[j] * la + sb0[j] * lb
                m1 = sa1[j] * la + sb1[j] * lb
                a = p0[j] + m0
                b = p1[j] + m1
                dec[t, j] = b > a
                pm[j] = max(a, b)
                a = p0[j] - m0
                b = p1[j] - m1
                dec[t, j + half] = b > a
                pm[j + half] = max(a, b)
        s = 0
        for t in range(n_steps - 1, -1, -1):
            if t < n_info:
                out[f, t] = s // half
            s = ((2 * s) % n_states) | dec[t, s]
    return out


def viterbi_decode_soft(llrs, n_info=None):
    """Max-log Viterbi decoding of punctured ``(..., n_coded)`` LLR streams.

    Maximizes ``sum (2c - 1) * L`` over the trellis, starting and ending in
    the all-zero state. Returns ``(..., n_info)`` bits. Without ``n_info``
    the stream must consist of whole puncturing periods.
    """
    llrs = np.asarray(llrs, dtype=float)
    if n_info is None:
        n_info = info_length(llrs.shape[-1])
    mother = depuncture(llrs, n_info)
    lead = mother.shape[:-1]
    steps = mother.reshape((-1, mother.shape[-1] // 2, 2))
    bits = _viterbi(np.ascontiguousarray(steps), _CODES, n_info)
    return bits.reshape(lead + (n_info,))
