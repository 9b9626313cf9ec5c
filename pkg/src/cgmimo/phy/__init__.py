"""Physical-layer plumbing: constellations, channels, coding and framing."""

from .channel import (
    ChannelRealization,
    complex_normal,
    noise_variance,
    rayleigh_channel,
    transmit_downlink,
    transmit_uplink,
    trial_rng,
)
from .coding import conv_encode, viterbi_decode_soft
from .constellation import Constellation, make_constellation
from .framing import (
    CodedFrame,
    FrameLayout,
    deinterleave,
    frame_assemble,
    frame_disassemble,
    interleave,
    make_interleaver,
)

__all__ = [
    "ChannelRealization",
    "CodedFrame",
    "Constellation",
    "FrameLayout",
    "complex_normal",
    "conv_encode",
    "deinterleave",
    "frame_assemble",
    "frame_disassemble",
    "interleave",
    "make_constellation",
    "make_interleaver",
    "noise_variance",
    "rayleigh_channel",
    "transmit_downlink",
    "transmit_uplink",
    "trial_rng",
    "viterbi_decode_soft",
]
