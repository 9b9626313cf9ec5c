"""Dense complex vector/matrix arithmetic with Hermitian-aware helpers.

Every routine broadcasts over leading batch dimensions, so a stack of
per-subcarrier matrices of shape ``(..., m, n)`` is processed in one call.
When an :class:`~cgmimo.opcount.OpCounter` is supplied the routine tallies
the real multiplications of *one* problem instance under ``stage``.

Hermitian matrices are stored densely but always built from a single
triangle (see :func:`hermitize`), so ``M == M^H`` holds bit-exactly.
"""

import numpy as np

from .opcount import as_counter

__all__ = [
    "DimensionError",
    "hermitize",
    "is_hermitian",
    "gram_regularized",
    "gram_diagonal",
    "matvec",
    "matmul",
    "hermitian_of",
    "adjoint_matvec",
    "dot_h",
    "norm2sq",
    "norm2",
]


class DimensionError(ValueError):
    """Operands do not conform."""


def _as_matrix(M, name="matrix"):
    M = np.asarray(M)
    if M.ndim < 2 or M.shape[-1] < 1 or M.shape[-2] < 1:
        raise DimensionError(f"{name} must have shape (..., rows>=1, cols>=1), got {M.shape}")
    return M


def hermitize(M):
    """Return the Hermitian matrix defined by the upper triangle of ``M``.

    The strict lower triangle is replaced by the conjugate of the upper one
    and the imaginary part of the diagonal is dropped.
    """
    M = _as_matrix(M)
    n = M.shape[-1]
    if M.shape[-2] != n:
        raise DimensionError("hermitize needs a square matrix")
    upper = np.triu(M, 1)
    out = upper + np.conj(np.swapaxes(upper, -1, -2))
    idx = np.arange(n)
    out[..., idx, idx] = M[..., idx, idx].real
    return out


def is_hermitian(M) -> bool:
    M = np.asarray(M)
    return M.shape[-1] == M.shape[-2] and np.array_equal(M, np.conj(np.swapaxes(M, -1, -2)))


def gram_regularized(H, rho_inv, side="uplink", counter=None):
    """Regularized Gram matrix ``H^H H + rho_inv I`` (uplink) or
    ``H H^H + rho_inv I`` (downlink, ``H`` is ``U x B``).

    Only the upper triangle is evaluated; the result is exactly Hermitian.
    Passing ``rho_inv = 0`` returns the plain Gram matrix.
    """
    H = _as_matrix(H, "H")
    rho_inv = np.asarray(rho_inv, dtype=float)
    if np.any(rho_inv < 0):
        raise ValueError("rho_inv must be nonnegative")
    if side == "uplink":
        B, U = H.shape[-2:]
        G = np.conj(np.swapaxes(H, -1, -2)) @ H
    elif side == "downlink":
        U, B = H.shape[-2:]
        G = H @ np.conj(np.swapaxes(H, -1, -2))
    else:
        raise ValueError(f"side must be 'uplink' or 'downlink', not {side!r}")
    A = hermitize(G)
    idx = np.arange(U)
    A[..., idx, idx] += rho_inv[..., None]
    as_counter(counter).add("gram", 2 * B * U * U)
    return A


def gram_diagonal(H, counter=None):
    """Column energies ``||h_i||^2``, the diagonal of ``H^H H``."""
    H = _as_matrix(H, "H")
    B, U = H.shape[-2:]
    as_counter(counter).abs2("gram", B * U)
    return np.sum(H.real ** 2 + H.imag ** 2, axis=-2)


def matvec(M, v, counter=None, stage="equalize"):
    """Batched ``M v``; leading axes of ``M`` and ``v`` broadcast."""
    M = _as_matrix(M)
    v = np.asarray(v)
    if v.shape[-1] != M.shape[-1]:
        raise DimensionError(f"matvec: {M.shape} @ {v.shape}")
    as_counter(counter).complex_mults(stage, M.shape[-2] * M.shape[-1])
    return np.matmul(M, v[..., None])[..., 0]


def matmul(M1, M2, counter=None, stage="equalize"):
    M1 = _as_matrix(M1)
    M2 = _as_matrix(M2)
    if M1.shape[-1] != M2.shape[-2]:
        raise DimensionError(f"matmul: {M1.shape} @ {M2.shape}")
    as_counter(counter).complex_mults(stage, M1.shape[-2] * M1.shape[-1] * M2.shape[-1])
    return M1 @ M2


def hermitian_of(M):
    return np.conj(np.swapaxes(_as_matrix(M), -1, -2))


def adjoint_matvec(M, v, counter=None, stage="matched-filter"):
    """``M^H v`` without materializing the conjugate transpose of ``M``."""
    M = _as_matrix(M)
    v = np.asarray(v)
    if v.shape[-1] != M.shape[-2]:
        raise DimensionError(f"adjoint_matvec: {M.shape}^H @ {v.shape}")
    as_counter(counter).complex_mults(stage, M.shape[-2] * M.shape[-1])
    return np.conj(np.matmul(np.conj(v)[..., None, :], M))[..., 0, :]


def dot_h(u, v, counter=None, stage="equalize"):
    """``u^H v`` along the last axis (first argument conjugated)."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape[-1] != v.shape[-1]:
        raise DimensionError(f"dot_h: {u.shape} vs {v.shape}")
    as_counter(counter).complex_mults(stage, u.shape[-1])
    return np.sum(np.conj(u) * v, axis=-1)


def norm2sq(v, counter=None, stage="equalize"):
    v = np.asarray(v)
    as_counter(counter).abs2(stage, v.shape[-1])
    return np.sum(v.real ** 2 + v.imag ** 2, axis=-1)


def norm2(v, counter=None, stage="equalize"):
    return np.sqrt(norm2sq(v, counter, stage))
