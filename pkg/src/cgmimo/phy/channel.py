"""Rayleigh channels, AWGN and the per-subcarrier transmission models."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChannelRealization",
    "complex_normal",
    "rayleigh_channel",
    "transmit_uplink",
    "transmit_downlink",
    "noise_variance",
    "trial_rng",
]


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for one work unit.

    Streams are addressed by ``(seed, *key)``; the same address always
    yields the same draws, whatever order work units are run in.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def complex_normal(rng, shape, var=1.0):
    """i.i.d. circularly-symmetric complex Gaussian samples, ``E|z|^2 = var``."""
    # consecutive (real, imag) pairs reinterpreted as complex, no copy
    z = rng.standard_normal(tuple(shape) + (2,)).view(np.complex128)[..., 0]
    z *= np.sqrt(var / 2.0)
    return z


@dataclass(frozen=True)
class ChannelRealization:
    H_u: np.ndarray   # (..., B, U)
    N0: float = 0.0

    def __post_init__(self):
        B, U = self.H_u.shape[-2:]
        if not B >= U >= 1:
            raise ValueError(f"need B >= U >= 1, got B={B}, U={U}")

    @property
    def H_d(self):
        """Downlink channel by reciprocity, ``H_u^H``."""
        return np.conj(np.swapaxes(self.H_u, -1, -2))


def rayleigh_channel(B, U, rng, size=(), N0=0.0) -> ChannelRealization:
    """i.i.d. unit-variance Rayleigh fading, one ``B x U`` matrix per ``size`` entry."""
    if B < U:
        raise ValueError("need B >= U")
    return ChannelRealization(complex_normal(rng, tuple(size) + (B, U)), N0)


def _transmit(H, x, N0, rng, noise):
    y = np.einsum("...ij,...j->...i", H, x)
    if noise is None and N0 > 0:
        noise = complex_normal(rng, y.shape)
    if noise is not None:
        y = y + np.sqrt(N0) * noise
    return y


def transmit_uplink(H_u, x, N0, rng=None, noise=None):
    """``y = H_u x + n`` with ``n ~ CN(0, N0 I)``.

    ``noise`` may carry pre-drawn unit-variance samples so one draw can be
    reused across noise levels.
    """
    return _transmit(H_u, x, N0, rng, noise)


def transmit_downlink(H_d, s, N0, rng=None, noise=None):
    """``y = H_d s + n`` at the user terminals."""
    return _transmit(H_d, s, N0, rng, noise)


def noise_variance(snr_db, users, Es=1.0):
    """Per-entry noise variance for an average uplink SNR of ``U Es / N0``."""
    return users * Es / 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
