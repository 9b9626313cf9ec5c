"""Downlink MMSE precoding and transmit-power normalization.

The MMSE precoder is ``q = H_d^H (H_d H_d^H + rho_d^{-1} I)^{-1} t`` and the
transmitted vector is ``s = q / ||q||``. Four ways of computing ``q`` are
offered: an explicit Cholesky inverse, CG on the ``U x U`` system,
Craig's method on the augmented wide system and a truncated
Neumann series.

``H_d`` has shape ``(..., U, B)`` and ``t`` has shape ``(..., U)``; leading
axes are batch axes (one problem per subcarrier).
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .linalg import adjoint_matvec, gram_regularized, matvec
from .opcount import as_counter
from .solvers import cg_iterations, cgne_iterations, cholesky_inverse, neumann_inverse

__all__ = [
    "PrecodeResult",
    "normalize",
    "precode_explicit",
    "precode_cg",
    "precode_cgls",
    "precode_neumann",
]


@dataclass(frozen=True)
class PrecodeResult:
    """Precoded vector ``q``, unit-power transmit vector ``s`` and ``||q||``.

    Problems whose symbol vector ``t`` is all zero are flagged in
    ``zero_input``; their ``q``, ``s`` and ``gain`` are zero. Iterative
    precoders run with ``on_breakdown="flag"`` report per-problem solver
    breakdowns in ``breakdown``.
    """

    q: np.ndarray
    s: np.ndarray
    gain: np.ndarray
    zero_input: np.ndarray
    breakdown: Optional[np.ndarray] = None


def normalize(q, t, counter=None) -> PrecodeResult:
    """Scale each precoded vector to unit Euclidean norm."""
    counter = as_counter(counter)
    B = q.shape[-1]
    zero = ~np.any(np.asarray(t) != 0, axis=-1)
    q = np.where(zero[..., None], 0.0, q)
    gain = np.sqrt(np.sum(q.real ** 2 + q.imag ** 2, axis=-1))
    counter.abs2("normalize", B)
    scale = np.where(gain > 0, 1.0 / np.where(gain > 0, gain, 1.0), 0.0)
    s = q * scale[..., None]
    counter.real_complex_mults("normalize", B)
    return PrecodeResult(q, s, gain, zero)


def _check_rho(rho_d):
    rho_d = np.asarray(rho_d, dtype=float)
    if np.any(rho_d <= 0):
        raise ValueError("rho_d must be positive")
    return rho_d


def _output(H_d, v, t, counter):
    # q = H_d^H v
    U, B = H_d.shape[-2:]
    q = adjoint_matvec(H_d, v)
    counter.complex_mults("precode-output", B * U)
    return normalize(q, t, counter)


def _downlink_gram(H_d, rho_d, counter, A):
    if A is None:
        return gram_regularized(H_d, 1.0 / rho_d, "downlink", counter)
    U, B = H_d.shape[-2:]
    counter.add("gram", 2 * B * U * U)
    return A


def precode_explicit(H_d, t, rho_d, counter=None, A=None) -> PrecodeResult:
    """Exact MMSE precoding through the Cholesky-based inverse of ``A_d``."""
    counter = as_counter(counter)
    rho_d = _check_rho(rho_d)
    A = _downlink_gram(H_d, rho_d, counter, A)
    U = A.shape[-1]
    v = matvec(cholesky_inverse(A, counter), t)
    counter.complex_mults("equalize", U * U)
    return _output(H_d, v, t, counter)


def precode_cg(H_d, t, rho_d, K, counter=None, on_breakdown="raise", A=None,
               trace=False):
    """CG precoding: ``K`` CG iterations on ``A_d v = t``, then
    ``q = H_d^H v_K``.

    ``K = 1`` gives a scaled matched filter ``alpha_1 H_d^H t`` and
    ``K = U`` the exact MMSE precoder. With ``trace=True`` the list of
    per-iteration ``q_k`` (before normalization) is returned as well.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    counter = as_counter(counter)
    rho_d = _check_rho(rho_d)
    A = _downlink_gram(H_d, rho_d, counter, A)
    qs = []
    for state in cg_iterations(A, t, counter, on_breakdown):
        if trace:
            qs.append(adjoint_matvec(H_d, state.v))
        if state.k == K:
            break
    result = replace(_output(H_d, state.v, t, counter), breakdown=state.breakdown)
    return (result, qs) if trace else result


def precode_cgls(H_d, t, rho_d, K, counter=None, on_breakdown="raise", trace=False):
    """CGLS-style precoding without forming ``A_d``.

    Solves the wide system ``[H_d, rho_d^{-1/2} I] q_bar = t`` for its
    minimum-norm solution with Craig's method and keeps the first ``B``
    entries of ``q_bar``. The iterates equal those of :func:`precode_cg`.
    ``rho_d`` must be a scalar.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    counter = as_counter(counter)
    rho_d = float(_check_rho(rho_d))
    B = np.shape(H_d)[-1]
    qs = []
    for state in cgne_iterations(H_d, t, np.sqrt(1.0 / rho_d), counter, on_breakdown):
        if trace:
            qs.append(state.x[..., :B])
        if state.k == K:
            break
    result = replace(normalize(state.x[..., :B], t, counter), breakdown=state.breakdown)
    return (result, qs) if trace else result


def precode_neumann(H_d, t, rho_d, K, counter=None, A=None) -> PrecodeResult:
    """Precoding with a ``K``-term Neumann-series inverse of ``A_d``."""
    counter = as_counter(counter)
    rho_d = _check_rho(rho_d)
    A = _downlink_gram(H_d, rho_d, counter, A)
    U = A.shape[-1]
    v = matvec(neumann_inverse(A, K, counter), t)
    counter.complex_mults("equalize", U * U)
    return _output(H_d, v, t, counter)
