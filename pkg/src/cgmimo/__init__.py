"""CG-based soft-output MMSE detection and precoding for massive MIMO.

Subpackages and modules
-----------------------
linalg    dense complex helpers with Hermitian-aware Gram construction
solvers   CG, CGLS/CGNE, Cholesky inversion and truncated Neumann series
detect    soft-output uplink detectors with in-iteration SINR tracking
precode   downlink MMSE precoders and power normalization
opcount   real-multiplication accounting (instrumented and closed form)
phy       constellations, channels, convolutional coding and framing
sim       coded Monte-Carlo BLER sweeps and trade-off tables
cli       command-line front end (``cgmimo``)
"""

__version__ = "0.1.0"
