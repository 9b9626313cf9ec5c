"""Gray-labeled square QAM constellations with unit average energy.

Labeling
--------
Point ``n`` carries the bit label ``binary(n)`` (MSB first). The first half
of the label selects the in-phase PAM level and the second half the
quadrature level; each PAM axis is Gray coded, so level ``j`` (ascending
amplitude ``-(L-1) + 2j``) carries the label ``j ^ (j >> 1)``.

For 16-QAM (normalization ``1/sqrt(10)``)::

    label  I    Q        label  I    Q
    0000  -3   -3        1000  +3   -3
    0001  -3   -1        1001  +3   -1
    0011  -3   +1        1011  +3   +1
    0010  -3   +3        1010  +3   +3
    01xx  -1   (as 00xx) 11xx  +1   (as 10xx)
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["Constellation", "make_constellation", "gray_pam"]

_BITS = {"qpsk": 2, "16qam": 4, "64qam": 6}


def gray_pam(bits_per_axis: int):
    """Ascending PAM levels and the Gray label (as an int) of each level."""
    L = 1 << bits_per_axis
    levels = np.arange(-(L - 1), L, 2, dtype=float)
    j = np.arange(L)
    return levels, j ^ (j >> 1)


def _unpack(values, width):
    shifts = np.arange(width - 1, -1, -1)
    return ((np.asarray(values)[..., None] >> shifts) & 1).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class Constellation:
    name: str
    points: np.ndarray       # (M,) complex, point n has label binary(n)
    labels: np.ndarray       # (M, bits_per_symbol) uint8
    pam_levels: np.ndarray   # (L,) normalized per-axis amplitudes
    pam_labels: np.ndarray   # (L, bits_per_symbol // 2) uint8

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def Es(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    def subset(self, bit: int, value: int) -> np.ndarray:
        """Indices of the points whose label has ``value`` at position ``bit``."""
        return np.flatnonzero(self.labels[:, bit] == value)

    def symbol_indices(self, bits):
        bits = np.asarray(bits)
        m = self.bits_per_symbol
        if bits.shape[-1] % m:
            raise ValueError(f"bit count {bits.shape[-1]} is not a multiple of {m}")
        grouped = bits.reshape(bits.shape[:-1] + (-1, m)).astype(np.int64)
        return grouped @ (1 << np.arange(m - 1, -1, -1))

    def map_bits(self, bits):
        """Map ``(..., n*m)`` bits to ``(..., n)`` symbols."""
        return self.points[self.symbol_indices(bits)]

    def hard_demap(self, symbols):
        """Nearest-point decisions, returned as ``(..., n*m)`` bits."""
        symbols = np.asarray(symbols)
        idx = np.argmin(np.abs(symbols[..., None] - self.points) ** 2, axis=-1)
        bits = self.labels[idx]
        return bits.reshape(symbols.shape[:-1] + (-1,))


def make_constellation(kind: str) -> Constellation:
    """Unit-energy Gray-labeled square QAM: ``"qpsk"``, ``"16qam"`` or ``"64qam"``."""
    try:
        m = _BITS[kind]
    except KeyError:
        raise ValueError(f"unknown constellation {kind!r}; choose from {sorted(_BITS)}") from None
    half = m // 2
    levels, gray = gray_pam(half)
    L = levels.size
    # mean energy of the square grid is 2 * mean(levels**2)
    scale = 1.0 / np.sqrt(2.0 * np.mean(levels ** 2))
    level_of_label = np.empty(L, dtype=int)
    level_of_label[gray] = np.arange(L)
    n = np.arange(1 << m)
    i_lab, q_lab = n >> half, n & (L - 1)
    points = (levels[level_of_label[i_lab]] + 1j * levels[level_of_label[q_lab]]) * scale
    return Constellation(
        name=kind,
        points=points,
        labels=_unpack(n, m),
        pam_levels=levels * scale,
        pam_labels=_unpack(gray, half),
    )
