"""Slow, deliberately naive reference implementations used as test oracles.

Nothing here shares code with the package: loops are written out entry by
entry so that a mistake in a vectorized kernel cannot hide in its oracle.
"""

import numpy as np


def gram_loop(H, rho_inv=0.0, side="uplink"):
    """Entrywise ``H^H H + rho_inv I`` (or ``H H^H + rho_inv I``)."""
    H = np.asarray(H, dtype=complex)
    if side == "downlink":
        H = H.conj().T
    B, U = H.shape
    A = np.zeros((U, U), dtype=complex)
    for i in range(U):
        for j in range(U):
            acc = 0j
            for b in range(B):
                acc += H[b, i].conjugate() * H[b, j]
            A[i, j] = acc
        A[i, i] += rho_inv
    return A


def matmul_loop(X, Y):
    n, m = X.shape
    m2, p = Y.shape
    assert m == m2
    Z = np.zeros((n, p), dtype=complex)
    for i in range(n):
        for j in range(p):
            acc = 0j
            for k in range(m):
                acc += X[i, k] * Y[k, j]
            Z[i, j] = acc
    return Z


def gauss_jordan_inverse(A):
    """Inverse by Gauss-Jordan elimination with partial pivoting."""
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    aug = np.concatenate([A, np.eye(n, dtype=complex)], axis=1)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[piv, col] == 0:
            raise np.linalg.LinAlgError("singular")
        aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def exhaustive_llrs(z, rho, points, labels):
    """Max-log LLRs by a double minimum over every constellation point."""
    d = np.abs(z - points) ** 2
    out = []
    for b in range(labels.shape[1]):
        d0 = min(d[k] for k in range(len(points)) if labels[k, b] == 0)
        d1 = min(d[k] for k in range(len(points)) if labels[k, b] == 1)
        out.append(rho * (d0 - d1))
    return np.array(out)


def mmse_soft_loop(H, y, rho_u, N0, Es):
    """Unbatched MMSE gains and SINRs straight from their definitions."""
    A = gram_loop(H, 1.0 / rho_u)
    W = matmul_loop(gauss_jordan_inverse(A), H.conj().T)
    U = H.shape[1]
    xhat = W @ y
    mu = np.empty(U)
    nu2 = np.empty(U)
    for i in range(U):
        w = W[i]
        mu[i] = (w @ H[:, i]).real
        interference = sum(abs(w @ H[:, j]) ** 2 for j in range(U) if j != i)
        nu2[i] = interference * Es + np.sum(np.abs(w) ** 2) * N0
    return xhat, mu, nu2, mu ** 2 / nu2


def convolutional_encode_loop(info, generators=(0o133, 0o171), memory=6,
                              keep=(1, 1, 1, 0, 0, 1, 1, 0, 0, 1)):
    """Shift-register encoder followed by cyclic puncturing."""
    reg = [0] * memory
    mother = []
    for bit in list(info) + [0] * memory:
        window = [bit] + reg  # delay 0 .. memory
        for g in generators:
            taps = [(g >> (memory - d)) & 1 for d in range(memory + 1)]
            mother.append(sum(t * w for t, w in zip(taps, window)) % 2)
        reg = [bit] + reg[:-1]
    return np.array([m for i, m in enumerate(mother) if keep[i % len(keep)]], dtype=np.uint8)


def random_channel(rng, B, U, batch=()):
    shape = tuple(batch) + (B, U)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_hpd(rng, U, cond=10.0):
    """Hermitian positive definite matrix with eigenvalues log-spaced in ``[1, cond]``."""
    X = rng.standard_normal((U, U)) + 1j * rng.standard_normal((U, U))
    Q, _ = np.linalg.qr(X)
    eig = np.logspace(0, np.log10(cond), U)
    A = (Q * eig) @ Q.conj().T
    return (A + A.conj().T) / 2
