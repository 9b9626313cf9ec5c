"""Uplink soft-output MMSE detection.

Detectors
---------
* :func:`detect_explicit` forms the MMSE matrix ``W`` and evaluates the
  gains and SINRs from their definitions. It is the reference the others
  are validated against.
* :func:`detect_cholesky` is the counted exact detector: it never forms
  ``W`` and reads the gains off the diagonal of ``A^{-1}``.
* :func:`detect_cg` interleaves CG with an SINR tracker (exact or
  approximate) so that no inverse is needed.
* :func:`detect_cgls` runs CGLS on the augmented system with the
  approximate tracker.
* :func:`detect_neumann` uses a truncated Neumann-series inverse.

All detectors broadcast over leading batch axes of ``H`` (``(..., B, U)``)
and ``y`` (``(..., B)``).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import adjoint_matvec, gram_diagonal, gram_regularized, hermitian_of, matvec
from .opcount import as_counter
from .phy.constellation import Constellation
from .solvers import cg_iterations, cgls_iterations, cholesky_inverse, neumann_inverse

__all__ = [
    "LLR_MAX",
    "SoftOutput",
    "SinrTrackerExactState",
    "SinrTrackerApproxState",
    "compute_llrs",
    "mmse_matrix_explicit",
    "detect_explicit",
    "detect_cholesky",
    "detect_cg",
    "detect_cgls",
    "detect_neumann",
    "tracker_exact_init",
    "tracker_exact_step",
    "tracker_exact_extract",
    "tracker_approx_init",
    "tracker_approx_step",
    "tracker_approx_extract",
]

LLR_MAX = 64.0
MU_EPS = 1e-12
REAL_TOL = 1e-9


@dataclass(frozen=True)
class SoftOutput:
    xhat: np.ndarray                 # (..., U) equalized symbols
    mu: np.ndarray                   # (..., U) equalized channel gains
    rho: np.ndarray                  # (..., U) post-equalization SINRs
    llrs: Optional[np.ndarray]       # (..., U, bits_per_symbol)
    nu2: Optional[np.ndarray] = None
    breakdown: Optional[np.ndarray] = None


def _real_gain(z, what="gain"):
    z = np.asarray(z)
    if np.iscomplexobj(z):
        if np.any(np.abs(z.imag) > REAL_TOL * np.maximum(1.0, np.abs(z.real))):
            raise ValueError(f"{what} has a non-negligible imaginary part")
        z = z.real
    return z


def _diag(M):
    return np.diagonal(M, axis1=-2, axis2=-1)


# -- LLRs -------------------------------------------------------------------

def _min_sq_dist(coord, levels, labels):
    # coord (...,), levels (L,), labels (L, nb) -> (..., nb) for bit=0 and bit=1
    d = (coord[..., None] - levels) ** 2
    d0 = np.stack([d[..., labels[:, b] == 0].min(axis=-1) for b in range(labels.shape[1])], -1)
    d1 = np.stack([d[..., labels[:, b] == 1].min(axis=-1) for b in range(labels.shape[1])], -1)
    return d0, d1


def compute_llrs(xhat, mu, rho, constellation: Constellation, llr_max=LLR_MAX,
                 method="auto"):
    """Max-log bit LLRs ``rho * (min_{X_b^0} |z - a|^2 - min_{X_b^1} |z - a|^2)``
    with ``z = xhat / mu``.

    Negative values favour bit 0. Entries with ``|mu| < 1e-12`` are erased
    (all-zero LLRs) and the rest are clipped to ``[-llr_max, llr_max]``.

    ``method="separable"`` splits the minimization into the two PAM axes of
    the square constellation, which gives the same values as the exhaustive
    search over all points (``method="exhaustive"``) at a fraction of the
    cost. ``"auto"`` picks the separable route.
    """
    xhat, mu, rho = np.broadcast_arrays(np.asarray(xhat), np.asarray(mu), np.asarray(rho, dtype=float))
    erase = np.abs(mu) < MU_EPS
    z = xhat / np.where(erase, 1.0, mu)
    c = constellation
    if method in ("auto", "separable"):
        half = c.bits_per_symbol // 2
        i0, i1 = _min_sq_dist(z.real, c.pam_levels, c.pam_labels)
        q0, q1 = _min_sq_dist(z.imag, c.pam_levels, c.pam_labels)
        diff = np.concatenate([i0 - i1, q0 - q1], axis=-1)
        assert diff.shape[-1] == 2 * half
    elif method == "exhaustive":
        d = np.abs(z[..., None] - c.points) ** 2
        diff = np.stack(
            [d[..., c.subset(b, 0)].min(axis=-1) - d[..., c.subset(b, 1)].min(axis=-1)
             for b in range(c.bits_per_symbol)], -1)
    else:
        raise ValueError(f"unknown LLR method {method!r}")
    llrs = np.clip(rho[..., None] * diff, -llr_max, llr_max)
    llrs[erase] = 0.0
    return llrs


def _soft_output(xhat, mu, rho, constellation, nu2=None, breakdown=None):
    rho = np.maximum(rho, 0.0)
    llrs = None if constellation is None else compute_llrs(xhat, mu, rho, constellation)
    return SoftOutput(xhat, mu, rho, llrs, nu2, breakdown)


# -- explicit reference ----------------------------------------------------

def mmse_matrix_explicit(H, rho_u, counter=None):
    """``W = (H^H H + rho_u^{-1} I)^{-1} H^H`` via the Cholesky inverse."""
    if np.any(np.asarray(rho_u) <= 0):
        raise ValueError("rho_u must be positive")
    A = gram_regularized(H, 1.0 / np.asarray(rho_u, dtype=float), "uplink", counter)
    return cholesky_inverse(A, counter) @ hermitian_of(H)


def detect_explicit(H, y, rho_u, N0, Es, constellation=None) -> SoftOutput:
    """Reference soft-output MMSE detector.

    ``x_hat = W y``, ``mu_i = w_i^H h_i`` and
    ``nu_i^2 = sum_{j != i} |w_i^H h_j|^2 Es + ||w_i||^2 N0``.
    """
    if np.any(np.asarray(N0) <= 0) or np.any(np.asarray(Es) <= 0):
        raise ValueError("N0 and Es must be positive")
    W = mmse_matrix_explicit(H, rho_u)
    xhat = matvec(W, y)
    WH = W @ H
    mu = _real_gain(_diag(WH), "mu")
    interference = np.sum(np.abs(WH) ** 2, axis=-1) - np.abs(_diag(WH)) ** 2
    nu2 = interference * Es + np.sum(np.abs(W) ** 2, axis=-1) * N0
    return _soft_output(xhat, mu, mu ** 2 / nu2, constellation, nu2)


def detect_cholesky(H, y, N0, Es, constellation=None, counter=None, A=None,
                    b=None) -> SoftOutput:
    """Exact MMSE detection from the Cholesky-based inverse of ``A``.

    The regularizer is tied to the noise level, ``rho_u = Es / N0``. Then
    ``W H = I - rho_u^{-1} A^{-1}``, so ``mu_i = 1 - rho_u^{-1} [A^{-1}]_ii``
    and ``nu_i^2 = Es mu_i (1 - mu_i)``, giving ``rho_i = mu_i / (1 - mu_i)``.
    ``A`` and the matched-filter output ``b = H^H y`` may be supplied
    precomputed; their cost is tallied either way.
    """
    counter = as_counter(counter)
    rho_inv = np.asarray(N0, dtype=float) / Es
    if A is None:
        A = gram_regularized(H, rho_inv, "uplink", counter)
    else:
        B, U = H.shape[-2:]
        counter.add("gram", 2 * B * U * U)
    U = H.shape[-1]
    b = _matched_filter(H, y, b, counter)
    Ainv = cholesky_inverse(A, counter)
    xhat = matvec(Ainv, b)
    counter.complex_mults("equalize", U * U)
    mu = 1.0 - rho_inv[..., None] * _diag(Ainv).real
    counter.real_mults("sinr", U)
    nu2 = Es * mu * (1.0 - mu)
    rho = mu / (1.0 - mu)
    return _soft_output(xhat, mu, rho, constellation, nu2)


# -- SINR trackers -------------------------------------------------------

@dataclass(frozen=True)
class SinrTrackerExactState:
    """Sliding window ``L_k, L_{k-1}, L_{k-2}`` plus the step sizes
    ``(alpha_k, alpha_{k-1})`` and ``(beta_k, beta_{k-1})``."""

    k: int
    L: np.ndarray
    L_m1: np.ndarray
    L_m2: np.ndarray
    alphas: tuple
    betas: tuple


@dataclass(frozen=True)
class SinrTrackerApproxState:
    """Diagonal analogue of :class:`SinrTrackerExactState`."""

    k: int
    L: np.ndarray
    L_m1: np.ndarray
    L_m2: np.ndarray
    alphas: tuple
    betas: tuple


def _coefficients(alpha_k, alphas, betas):
    # alpha_k (1 + beta_{k-1}) / alpha_{k-1} and alpha_k beta_{k-2} / alpha_{k-2};
    # zero once the iteration has been frozen (alpha_k = 0)
    a1, a2 = (np.asarray(a, dtype=float) for a in alphas)
    b1, b2 = (np.asarray(b, dtype=float) for b in betas)
    live = alpha_k != 0
    c1 = np.where(live, alpha_k * (1.0 + b1) / np.where(a1 != 0, a1, 1.0), 0.0)
    c2 = np.where(live, alpha_k * b2 / np.where(a2 != 0, a2, 1.0), 0.0)
    return c1, c2


def tracker_exact_init(shape, U) -> SinrTrackerExactState:
    """State before the first iteration (``L_k = 0`` for ``k < 1``)."""
    Z = np.zeros(tuple(shape) + (U, U), dtype=complex)
    return SinrTrackerExactState(0, Z, Z, Z, (1.0, 1.0), (0.0, 0.0))


def tracker_exact_step(state: SinrTrackerExactState, A, alpha_k, beta_k,
                       counter=None) -> SinrTrackerExactState:
    """Advance ``L`` by one CG iteration.

    ``L_k = L_{k-1} + (c1 I - alpha_k A)(L_{k-1} - L_{k-2}) - c2 (L_{k-2} - L_{k-3})``
    with ``c1 = alpha_k (1 + beta_{k-1}) / alpha_{k-1}`` and
    ``c2 = alpha_k beta_{k-2} / alpha_{k-2}``; ``L_1 = alpha_1 I``.
    """
    counter = as_counter(counter)
    alpha_k = np.asarray(alpha_k, dtype=float)
    U = state.L.shape[-1]
    if state.k == 0:
        L_new = alpha_k[..., None, None] * np.eye(U)
    else:
        c1, c2 = _coefficients(alpha_k, state.alphas, state.betas)
        d1 = state.L - state.L_m1
        d2 = state.L_m1 - state.L_m2
        L_new = (state.L + c1[..., None, None] * d1
                 - alpha_k[..., None, None] * (A @ d1)
                 - c2[..., None, None] * d2)
        counter.complex_mults("tracker", U ** 3)
        counter.real_complex_mults("tracker", 3 * U * U)
    return SinrTrackerExactState(state.k + 1, L_new, state.L, state.L_m1,
                                 (alpha_k, state.alphas[0]), (beta_k, state.betas[0]))


def tracker_exact_extract(L, G, Es, N0, counter=None):
    """Gains and interference-plus-noise variances of the equalizer ``L H^H``.

    ``B = L G``: ``mu_i = B_ii`` and
    ``nu_i^2 = sum_{j != i} |B_ij|^2 Es + (B L^H)_ii N0``.
    """
    counter = as_counter(counter)
    U = L.shape[-1]
    Bm = L @ G
    mu = _real_gain(_diag(Bm), "mu")
    interference = np.sum(np.abs(Bm) ** 2, axis=-1) - np.abs(_diag(Bm)) ** 2
    C_diag = np.sum(Bm * np.conj(L), axis=-1).real
    nu2 = interference * Es + C_diag * N0
    counter.complex_mults("sinr", U ** 3)
    counter.abs2("sinr", U * (U - 1))
    counter.real_mults("sinr", 2 * U * U + 2 * U)
    return mu, nu2


def tracker_approx_init(shape, U) -> SinrTrackerApproxState:
    Z = np.zeros(tuple(shape) + (U,))
    return SinrTrackerApproxState(0, Z, Z, Z, (1.0, 1.0), (0.0, 0.0))


def tracker_approx_step(state: SinrTrackerApproxState, Adiag, alpha_k, beta_k,
                        counter=None) -> SinrTrackerApproxState:
    """Same recursion as :func:`tracker_exact_step` with ``A`` replaced by its
    diagonal, so every matrix stays diagonal and is stored as a vector."""
    alpha_k = np.asarray(alpha_k, dtype=float)
    U = state.L.shape[-1]
    if state.k == 0:
        L_new = np.broadcast_to(alpha_k[..., None], state.L.shape).copy()
    else:
        c1, c2 = _coefficients(alpha_k, state.alphas, state.betas)
        d1 = state.L - state.L_m1
        d2 = state.L_m1 - state.L_m2
        L_new = state.L + (c1[..., None] - alpha_k[..., None] * Adiag) * d1 - c2[..., None] * d2
    as_counter(counter).real_mults("tracker", U)
    return SinrTrackerApproxState(state.k + 1, L_new, state.L, state.L_m1,
                                  (alpha_k, state.alphas[0]), (beta_k, state.betas[0]))


def tracker_approx_extract(Ldiag, Gdiag, N0, counter=None):
    """``mu_i ~ L_ii G_ii`` and ``rho_i ~ G_ii / N0`` (independent of k)."""
    as_counter(counter).real_mults("sinr", Ldiag.shape[-1])
    mu = Ldiag * Gdiag
    rho = Gdiag / np.asarray(N0, dtype=float)[..., None]
    return mu, rho


# -- iterative detectors --------------------------------------------------

def _matched_filter(H, y, b, counter):
    if b is None:
        return adjoint_matvec(H, y, counter)
    counter.complex_mults("matched-filter", H.shape[-2] * H.shape[-1])
    return b


def _setup(H, y, rho_u, counter, A, b):
    counter = as_counter(counter)
    H = np.asarray(H)
    B, U = H.shape[-2:]
    rho_u = np.asarray(rho_u, dtype=float)
    if np.any(rho_u <= 0):
        raise ValueError("rho_u must be positive")
    if A is None:
        A = gram_regularized(H, 1.0 / rho_u, "uplink", counter)
    else:
        counter.add("gram", 2 * B * U * U)
    return counter, A, _matched_filter(H, y, b, counter), rho_u


def detect_cg(H, y, rho_u, N0, Es, constellation=None, K=None, tracker="approx",
              counter=None, on_breakdown="raise", A=None, b=None) -> SoftOutput:
    """CG-based soft-output MMSE detection.

    Runs ``K`` CG iterations on ``A x = H^H y`` (default ``K = U``) and
    tracks the SINR alongside. ``tracker="exact"`` reproduces
    :func:`detect_explicit` at ``K = U``; ``"approx"`` costs ``U``
    multiplications per iteration.
    """
    U = np.shape(H)[-1]
    K = U if K is None else K
    if K < 1:
        raise ValueError("K must be >= 1")
    counter, A, b, rho_u = _setup(H, y, rho_u, counter, A, b)
    batch = b.shape[:-1]
    if tracker == "exact":
        tr = tracker_exact_init(batch, U)
    elif tracker == "approx":
        tr = tracker_approx_init(batch, U)
        Adiag = _diag(A).real
    else:
        raise ValueError(f"unknown tracker {tracker!r}")
    for state in cg_iterations(A, b, counter, on_breakdown):
        if tracker == "exact":
            tr = tracker_exact_step(tr, A, state.alpha, state.beta, counter)
        else:
            tr = tracker_approx_step(tr, Adiag, state.alpha, state.beta, counter)
        if state.k == K:
            break
    N0 = np.asarray(N0, dtype=float)
    if tracker == "exact":
        G = A - (1.0 / rho_u)[..., None, None] * np.eye(U)
        mu, nu2 = tracker_exact_extract(tr.L, G, Es, N0[..., None], counter)
        counter.real_mults("sinr", U)
        # nu2 = 0 only when L = 0 (frozen at the first step), then mu = 0 too
        rho = np.where(nu2 > 0, mu ** 2 / np.where(nu2 > 0, nu2, 1.0), 0.0)
    else:
        Gdiag = _diag(A).real - (1.0 / rho_u)[..., None]
        mu, rho = tracker_approx_extract(tr.L, Gdiag, N0, counter)
        nu2 = None
    return _soft_output(state.v, mu, rho, constellation, nu2, state.breakdown)


def detect_cgls(H, y, rho_u, N0, Es, constellation=None, K=None, counter=None,
                on_breakdown="raise", Gdiag=None) -> SoftOutput:
    """CGLS-based detection on the augmented system ``[y; 0]``,
    ``[H; rho_u^{-1/2} I]`` with the approximate SINR tracker.

    ``rho_u`` must be a scalar here (one regularizer for the whole batch).
    """
    counter = as_counter(counter)
    H = np.asarray(H)
    U = H.shape[-1]
    K = U if K is None else K
    rho_u = float(rho_u)
    if rho_u <= 0:
        raise ValueError("rho_u must be positive")
    if Gdiag is None:
        Gdiag = gram_diagonal(H, counter)
    else:
        counter.abs2("gram", H.shape[-2] * U)
    Adiag = Gdiag + 1.0 / rho_u
    tr = tracker_approx_init(np.broadcast_shapes(H.shape[:-2], np.shape(y)[:-1]), U)
    for state in cgls_iterations(H, y, np.sqrt(1.0 / rho_u), counter, on_breakdown):
        tr = tracker_approx_step(tr, Adiag, state.alpha, state.beta, counter)
        if state.k == K:
            break
    mu, rho = tracker_approx_extract(tr.L, Gdiag, np.asarray(N0, dtype=float), counter)
    return _soft_output(state.x, mu, rho, constellation, None, state.breakdown)


def detect_neumann(H, y, rho_u, N0, Es, constellation=None, K=2, counter=None,
                   A=None, b=None) -> SoftOutput:
    """Detection with a ``K``-term Neumann-series approximate inverse.

    ``mu_i = Re[(A~^{-1} G)_ii]`` and, treating the approximate inverse as if
    it were exact, ``rho_i = mu_i / (1 - mu_i)``. Users with ``mu_i``
    outside ``(0, 1)`` get ``rho_i = 0`` (erased LLRs).
    """
    counter, A, b, rho_u = _setup(H, y, rho_u, counter, A, b)
    U = A.shape[-1]
    Ainv = neumann_inverse(A, K, counter)
    xhat = matvec(Ainv, b)
    counter.complex_mults("equalize", U * U)
    G = A - (1.0 / np.asarray(rho_u, dtype=float))[..., None, None] * np.eye(U)
    mu = np.sum(Ainv * np.swapaxes(G, -1, -2), axis=-1).real
    counter.real_mults("sinr", 2 * U * U)
    ok = (mu > 0) & (mu < 1)
    rho = np.where(ok, mu / np.where(ok, 1.0 - mu, 1.0), 0.0)
    return _soft_output(xhat, mu, rho, constellation)
