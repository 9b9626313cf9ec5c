"""System solvers: conjugate gradient, CGLS / CGNE, Cholesky inversion and the
truncated Neumann series.

The iterative solvers run a fixed number of iterations ``K`` (no residual
stopping rule) so that operation counts are deterministic. A guard on the
curvature ``p^H A p`` freezes problems whose residual has vanished; a
vanishing curvature with a live residual means ``A`` is not positive
definite and raises :class:`CgBreakdown` (or is flagged, on request).

All solvers accept stacks of problems along leading axes.
"""

from dataclasses import dataclass
from typing import Iterator, Optional

import numba
import numpy as np

from .linalg import DimensionError, hermitize, matvec, norm2sq
from .opcount import as_counter

__all__ = [
    "CgBreakdown",
    "NotPositiveDefinite",
    "CgState",
    "CglsState",
    "ScalarHistory",
    "SolveResult",
    "cg_iterations",
    "cg_solve",
    "cgls_iterations",
    "cgls_solve",
    "cgne_iterations",
    "cgne_solve",
    "cholesky_factor",
    "cholesky_inverse",
    "neumann_inverse",
]

BREAKDOWN_GUARD = 1e-30
HERMITIAN_TOL = 1e-9


class CgBreakdown(ArithmeticError):
    """Curvature ``p^H A p`` vanished while the residual did not."""

    def __init__(self, message, mask=None):
        super().__init__(message)
        self.mask = mask


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CgState:
    """Vectors and scalars after CG iteration ``k``."""

    k: int
    v: np.ndarray
    r: np.ndarray
    p: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    rnorm2: np.ndarray
    breakdown: np.ndarray


@dataclass(frozen=True)
class CglsState:
    """CGLS/CGNE iterate ``k``; ``s`` is the residual of the normal equations."""

    k: int
    x: np.ndarray
    s: np.ndarray
    p: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    snorm2: np.ndarray
    breakdown: np.ndarray


@dataclass(frozen=True)
class ScalarHistory:
    """CG step sizes; ``alphas[k-1]`` and ``betas[k-1]`` belong to iteration k.

    :meth:`alpha` and :meth:`beta` apply the boundary convention
    ``alpha_k = 1``, ``beta_k = 0`` for ``k < 1``.
    """

    alphas: list
    betas: list

    def __len__(self):
        return len(self.alphas)

    def alpha(self, k):
        return 1.0 if k < 1 else self.alphas[k - 1]

    def beta(self, k):
        return 0.0 if k < 1 else self.betas[k - 1]


@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    history: ScalarHistory
    trace: Optional[list]
    breakdown: np.ndarray


def _curvature(p, e, counter, stage):
    # Re(p^H e); the imaginary part is rounding noise for Hermitian A
    c = np.sum(np.conj(p) * e, axis=-1)
    counter.real_mults(stage, 2 * p.shape[-1])
    scale = np.abs(c.real) + np.sum(np.abs(p) ** 2, axis=-1) * BREAKDOWN_GUARD
    if np.any(np.abs(c.imag) > HERMITIAN_TOL * np.maximum(scale, BREAKDOWN_GUARD)):
        raise ValueError("p^H A p has a non-negligible imaginary part; A is not Hermitian")
    return c.real


def _step_sizes(rnorm2, curvature, frozen, broken, on_breakdown):
    stalled = curvature <= BREAKDOWN_GUARD
    bad = stalled & (rnorm2 > BREAKDOWN_GUARD) & ~frozen
    if np.any(bad):
        if on_breakdown == "raise":
            raise CgBreakdown("p^H A p <= guard with nonzero residual", mask=bad)
        broken = broken | bad
    frozen = frozen | stalled
    alpha = np.where(frozen, 0.0, rnorm2 / np.where(frozen, 1.0, curvature))
    return alpha, frozen, broken


def _beta(new, old, frozen):
    return np.where(frozen | (old <= 0), 0.0, new / np.where(old > 0, old, 1.0))


def cg_iterations(A, b, counter=None, on_breakdown="raise") -> Iterator[CgState]:
    """Yield the CG state after each iteration ``k = 1, 2, ...`` (unbounded).

    Parameters
    ----------
    A : (..., U, U) complex array
        Hermitian positive definite system matrix.
    b : (..., U) complex array
        Right-hand side.
    counter : OpCounter, optional
        Receives ``cg-iteration`` tallies.
    on_breakdown : {"raise", "flag"}
        With ``"flag"``, broken-down problems are frozen and reported in
        :attr:`CgState.breakdown` instead of raising.
    """
    A = np.asarray(A)
    b = np.asarray(b, dtype=complex)
    U = A.shape[-1]
    if A.shape[-2] != U or b.shape[-1] != U:
        raise DimensionError(f"cg: A {A.shape} and b {b.shape} do not conform")
    counter = as_counter(counter)
    stage = "cg-iteration"

    batch = np.broadcast_shapes(A.shape[:-2], b.shape[:-1])
    v = np.zeros(batch + (U,), dtype=complex)
    r = np.broadcast_to(b, batch + (U,)).copy()
    p = r.copy()
    rn = norm2sq(r, counter, stage)
    frozen = np.zeros(batch, dtype=bool)
    broken = np.zeros(batch, dtype=bool)
    k = 0
    while True:
        k += 1
        e = matvec(A, p)
        counter.complex_mults(stage, U * U)
        alpha, frozen, broken = _step_sizes(
            rn, _curvature(p, e, counter, stage), frozen, broken, on_breakdown)
        v = v + alpha[..., None] * p
        r = r - alpha[..., None] * e
        counter.real_complex_mults(stage, 2 * U)
        rn_new = norm2sq(r, counter, stage)
        beta = _beta(rn_new, rn, frozen)
        p = r + beta[..., None] * p
        counter.real_complex_mults(stage, U)
        rn = rn_new
        yield CgState(k, v, r, p, alpha, beta, rn, broken.copy())


def _run(iterations, K, trace):
    if K < 1:
        raise ValueError("K must be >= 1")
    alphas, betas, states = [], [], []
    state = None
    for state in iterations:
        alphas.append(state.alpha)
        betas.append(state.beta)
        if trace:
            states.append(state)
        if state.k == K:
            break
    x = state.v if isinstance(state, CgState) else state.x
    return SolveResult(x, ScalarHistory(alphas, betas), states if trace else None,
                       state.breakdown)


def cg_solve(A, b, K, counter=None, trace=False, on_breakdown="raise") -> SolveResult:
    """Run exactly ``K`` CG iterations on ``A v = b`` from ``v_0 = 0``.

    With ``K = dim(A)`` the result is ``A^{-1} b`` up to rounding.
    ``trace=True`` keeps every :class:`CgState` (for ``k = 1..K``).
    """
    return _run(cg_iterations(A, b, counter, on_breakdown), K, trace)


def cgls_iterations(H, b, damp=0.0, counter=None,
                    on_breakdown="raise") -> Iterator[CglsState]:
    """CGLS for ``min ||b - H x||^2 + damp^2 ||x||^2``.

    This is the least-squares problem of the augmented pair
    ``[b; 0]``, ``[H; damp I]``; the identity block is applied implicitly,
    so its zero entries cost nothing. In exact arithmetic the iterates and
    step sizes coincide with CG on ``(H^H H + damp^2 I) x = H^H b``.
    """
    H = np.asarray(H)
    b = np.asarray(b, dtype=complex)
    m, n = H.shape[-2:]
    if b.shape[-1] != m:
        raise DimensionError(f"cgls: H {H.shape} and b {b.shape} do not conform")
    counter = as_counter(counter)
    stage = "cgls-iteration"
    damped = damp != 0
    Hh = np.conj(np.swapaxes(H, -1, -2))

    batch = np.broadcast_shapes(H.shape[:-2], b.shape[:-1])
    x = np.zeros(batch + (n,), dtype=complex)
    r = np.broadcast_to(b, batch + (m,)).copy()
    r_tail = np.zeros(batch + (n,), dtype=complex)
    s = matvec(Hh, r)
    counter.complex_mults("matched-filter", m * n)
    p = s.copy()
    gamma = norm2sq(s, counter, stage)
    frozen = np.zeros(batch, dtype=bool)
    broken = np.zeros(batch, dtype=bool)
    k = 0
    while True:
        k += 1
        q = matvec(H, p)
        counter.complex_mults(stage, m * n)
        delta = norm2sq(q, counter, stage)
        if damped:
            q_tail = damp * p
            counter.real_complex_mults(stage, n)
            delta = delta + norm2sq(q_tail, counter, stage)
        alpha, frozen, broken = _step_sizes(gamma, delta, frozen, broken, on_breakdown)
        a = alpha[..., None]
        x = x + a * p
        r = r - a * q
        counter.real_complex_mults(stage, n + m)
        s = matvec(Hh, r)
        counter.complex_mults(stage, m * n)
        if damped:
            r_tail = r_tail - a * q_tail
            s = s + damp * r_tail
            counter.real_complex_mults(stage, 2 * n)
        gamma_new = norm2sq(s, counter, stage)
        beta = _beta(gamma_new, gamma, frozen)
        p = s + beta[..., None] * p
        counter.real_complex_mults(stage, n)
        gamma = gamma_new
        yield CglsState(k, x, s, p, alpha, beta, gamma, broken.copy())


def cgls_solve(H, b, K, damp=0.0, counter=None, trace=False,
               on_breakdown="raise") -> SolveResult:
    """Run ``K`` CGLS iterations; see :func:`cgls_iterations`."""
    return _run(cgls_iterations(H, b, damp, counter, on_breakdown), K, trace)


def cgne_iterations(H, b, damp=0.0, counter=None,
                    on_breakdown="raise") -> Iterator[CglsState]:
    """Craig's method (CGNE) for the wide system ``[H, damp I] x = b``.

    ``H`` is ``m x n`` with ``m <= n``. The iterate ``x`` has ``n + m``
    entries and converges to the minimum-norm solution. Iterates equal
    ``[H, damp I]^H w_k`` where ``w_k`` are the CG iterates for
    ``(H H^H + damp^2 I) w = b``, without forming that Gram matrix.
    :attr:`CglsState.s` holds the residual ``b - [H, damp I] x``.
    """
    H = np.asarray(H)
    b = np.asarray(b, dtype=complex)
    m, n = H.shape[-2:]
    if b.shape[-1] != m:
        raise DimensionError(f"cgne: H {H.shape} and b {b.shape} do not conform")
    counter = as_counter(counter)
    stage = "cgls-iteration"
    Hh = np.conj(np.swapaxes(H, -1, -2))

    batch = np.broadcast_shapes(H.shape[:-2], b.shape[:-1])
    r = np.broadcast_to(b, batch + (m,)).copy()
    u = matvec(Hh, r)
    counter.complex_mults("matched-filter", m * n)
    u_tail = damp * r
    counter.real_complex_mults("matched-filter", m)
    rn = norm2sq(r, counter, stage)
    x = np.zeros(batch + (n,), dtype=complex)
    x_tail = np.zeros(batch + (m,), dtype=complex)
    frozen = np.zeros(batch, dtype=bool)
    broken = np.zeros(batch, dtype=bool)
    k = 0
    while True:
        k += 1
        delta = norm2sq(u, counter, stage) + norm2sq(u_tail, counter, stage)
        alpha, frozen, broken = _step_sizes(rn, delta, frozen, broken, on_breakdown)
        a = alpha[..., None]
        x = x + a * u
        x_tail = x_tail + a * u_tail
        counter.real_complex_mults(stage, n + m)
        w = matvec(H, u) + damp * u_tail
        counter.complex_mults(stage, m * n)
        counter.real_complex_mults(stage, m)
        r = r - a * w
        counter.real_complex_mults(stage, m)
        rn_new = norm2sq(r, counter, stage)
        beta = _beta(rn_new, rn, frozen)
        bb = beta[..., None]
        u = matvec(Hh, r) + bb * u
        u_tail = damp * r + bb * u_tail
        counter.complex_mults(stage, m * n)
        counter.real_complex_mults(stage, 2 * m + n)
        rn = rn_new
        yield CglsState(k, np.concatenate([x, x_tail], axis=-1), r,
                        np.concatenate([u, u_tail], axis=-1), alpha, beta, rn,
                        broken.copy())


def cgne_solve(H, b, K, damp=0.0, counter=None, trace=False,
               on_breakdown="raise") -> SolveResult:
    """Run ``K`` iterations of :func:`cgne_iterations`."""
    return _run(cgne_iterations(H, b, damp, counter, on_breakdown), K, trace)


@numba.njit(cache=True, nogil=True)
def _cholesky_kernel(A, want_inverse):
    """Factor every ``A[n] = M M^H`` and optionally invert it.

    Returns ``(M, inv_diag, X, bad)``; ``bad[n]`` is the first column with a
    non-positive pivot plus one, or 0.
    """
    N, U, _ = A.shape
    M = np.zeros((N, U, U), np.complex128)
    inv = np.zeros((N, U))
    X = np.zeros((N, U, U) if want_inverse else (0, U, U), np.complex128)
    Z = np.zeros((U, U), np.complex128)
    bad = np.zeros(N, np.int64)
    for n in range(N):
        for j in range(U):
            d = A[n, j, j].real
            for k in range(j):
                d -= M[n, j, k].real ** 2 + M[n, j, k].imag ** 2
            if not d > 0:
                bad[n] = j + 1
                break
            mjj = np.sqrt(d)
            M[n, j, j] = mjj
            inv[n, j] = 1.0 / mjj
            for i in range(j + 1, U):
                acc = A[n, i, j]
                for k in range(j):
                    acc -= M[n, i, k] * np.conj(M[n, j, k])
                M[n, i, j] = acc * inv[n, j]
        if bad[n] or not want_inverse:
            continue
        # forward substitution Z = M^{-1}, lower triangular
        Z[:, :] = 0
        for i in range(U):
            for c in range(i):
                acc = 0j
                for k in range(c, i):
                    acc += M[n, i, k] * Z[k, c]
                Z[i, c] = -acc * inv[n, i]
            Z[i, i] = inv[n, i]
        # backward substitution M^H X = Z
        for i in range(U - 1, -1, -1):
            for c in range(U):
                acc = Z[i, c]
                for k in range(i + 1, U):
                    acc -= np.conj(M[n, k, i]) * X[n, k, c]
                X[n, i, c] = acc * inv[n, i]
    return M, inv, X, bad


def _cholesky(A, want_inverse):
    A = np.asarray(A)
    U = A.shape[-1]
    if A.ndim < 2 or A.shape[-2] != U:
        raise DimensionError("cholesky needs a square matrix")
    batch = A.shape[:-2]
    flat = np.ascontiguousarray(A.reshape((-1, U, U)), dtype=np.complex128)
    M, inv, X, bad = _cholesky_kernel(flat, want_inverse)
    if np.any(bad):
        j = int(bad[np.flatnonzero(bad)[0]]) - 1
        raise NotPositiveDefinite(f"non-positive pivot in column {j}")
    M = M.reshape(batch + (U, U))
    inv = inv.reshape(batch + (U,))
    return M, inv, (X.reshape(batch + (U, U)) if want_inverse else None)


def _count_factor(counter, U):
    # pivot j: |row|^2 over j entries, (U-1-j) dot products of length j and
    # (U-1-j) real scalings
    for j in range(U):
        counter.abs2("cholesky", j)
        counter.complex_mults("cholesky", (U - 1 - j) * j)
        counter.real_complex_mults("cholesky", U - 1 - j)


def cholesky_factor(A, counter=None):
    """Lower-triangular ``M`` with ``A = M M^H`` and a positive real diagonal.

    Only the lower triangle of ``A`` is read. Returns ``M`` and the
    reciprocals of its diagonal.
    """
    M, inv, _ = _cholesky(A, want_inverse=False)
    _count_factor(as_counter(counter), M.shape[-1])
    return M, inv


def cholesky_inverse(A, counter=None):
    """Explicit inverse of a Hermitian positive definite matrix.

    Factor ``A = M M^H``, obtain ``Z = M^{-1}`` by forward substitution
    (skipping the zeros of the identity right-hand side), then solve
    ``M^H X = Z`` column-wise by backward substitution.
    """
    _, _, X = _cholesky(A, want_inverse=True)
    counter = as_counter(counter)
    U = X.shape[-1]
    _count_factor(counter, U)
    for i in range(U):
        # row i of Z: entry c < i is a length-(i - c) dot product scaled by a real
        counter.complex_mults("substitution", i * (i + 1) // 2)
        counter.real_complex_mults("substitution", i)
    for i in range(U - 1, -1, -1):
        counter.complex_mults("substitution", U * (U - 1 - i))
        counter.real_complex_mults("substitution", U)
    return X


def neumann_inverse(A, K, counter=None):
    """Truncated Neumann series ``sum_{k<K} (-D^{-1} E)^k D^{-1}``.

    ``D`` is the diagonal of ``A`` and ``E = A - D``. Every term is
    Hermitian, so each product is evaluated on the upper triangle only.
    No convergence check is made: the series diverges unless ``A`` is
    sufficiently diagonally dominant.
    """
    A = np.asarray(A)
    U = A.shape[-1]
    if K < 1:
        raise ValueError("K must be >= 1")
    counter = as_counter(counter)
    stage = "neumann-term"
    idx = np.arange(U)
    d = A[..., idx, idx].real
    if np.any(d == 0):
        raise ZeroDivisionError("zero diagonal entry")
    dinv = 1.0 / d
    S = np.zeros(A.shape, dtype=complex)
    S[..., idx, idx] = dinv
    if K == 1:
        return S
    E = A.copy()
    E[..., idx, idx] = 0
    # T_1 = -D^{-1} E D^{-1}, entry (i, j) = -E_ij / (d_i d_j)
    T = hermitize(-E * (dinv[..., :, None] * dinv[..., None, :]))
    counter.add(stage, 3 * U * (U - 1) // 2)
    S = S + T
    if K > 2:
        F = -E * dinv[..., :, None]
        counter.real_complex_mults(stage, U * (U - 1))
        for _ in range(K - 2):
            T = hermitize(F @ T)
            counter.complex_mults(stage, (U - 1) * U * (U + 1) // 2)
            S = S + T
    return S
