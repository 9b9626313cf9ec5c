import numpy as np
import pytest

from cgmimo.linalg import gram_regularized
from cgmimo.opcount import OpCounter
from cgmimo.solvers import (
    CgBreakdown,
    NotPositiveDefinite,
    ScalarHistory,
    cg_iterations,
    cg_solve,
    cgls_solve,
    cgne_solve,
    cholesky_factor,
    cholesky_inverse,
    neumann_inverse,
)
from oracles import gauss_jordan_inverse, random_channel, random_hpd


def _rand_vec(rng, n, batch=()):
    shape = tuple(batch) + (n,)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# -- CG ---------------------------------------------------------------------

def test_cg_identity_converges_in_one_step(rng):
    b = _rand_vec(rng, 4)
    res = cg_solve(np.eye(4), b, 1, trace=True)
    np.testing.assert_allclose(res.x, b, atol=1e-15)
    assert res.history.alphas[0] == pytest.approx(1.0)
    np.testing.assert_allclose(res.trace[0].r, 0, atol=1e-15)


def test_cg_zero_rhs_stays_zero():
    res = cg_solve(np.diag([1.0, 2.0, 3.0]), np.zeros(3), 3, trace=True)
    for state in res.trace:
        np.testing.assert_array_equal(state.v, 0)
    assert not res.breakdown


def test_cg_full_iterations_match_elimination_oracle(rng):
    A = random_hpd(rng, 4, cond=50)
    b = _rand_vec(rng, 4)
    x = cg_solve(A, b, 4).x
    expected = gauss_jordan_inverse(A) @ b
    assert np.linalg.norm(x - expected) / np.linalg.norm(expected) < 1e-9


def test_cg_batched_matches_single(rng):
    A = np.stack([random_hpd(rng, 5, cond=20) for _ in range(3)])
    b = _rand_vec(rng, 5, batch=(3,))
    batched = cg_solve(A, b, 3).x
    for n in range(3):
        np.testing.assert_allclose(batched[n], cg_solve(A[n], b[n], 3).x, rtol=1e-12, atol=1e-14)


def test_cg_initial_state_and_history(rng):
    A = random_hpd(rng, 3)
    b = _rand_vec(rng, 3)
    res = cg_solve(A, b, 3, trace=True)
    assert len(res.history) == 3
    # boundary convention for the tracker recursions
    assert res.history.alpha(0) == 1.0 and res.history.beta(0) == 0.0
    assert res.history.alpha(-1) == 1.0
    assert np.all(np.array(res.history.alphas) > 0)
    assert np.all(np.array(res.history.betas) >= 0)
    for state in res.trace:
        assert state.rnorm2 == pytest.approx(np.sum(np.abs(state.r) ** 2), rel=1e-12)


def test_cg_rejects_bad_arguments(rng):
    with pytest.raises(ValueError):
        cg_solve(np.eye(2), np.ones(2), 0)
    with pytest.raises(ValueError):
        cg_solve(np.eye(2), np.ones(3), 1)


def test_cg_breakdown_on_indefinite_matrix():
    A = np.diag([1.0, -1.0])
    b = np.array([1.0, 1.0])  # p^H A p = 0 with a live residual
    with pytest.raises(CgBreakdown) as info:
        cg_solve(A, b, 2)
    assert info.value.mask.all()
    res = cg_solve(A, b, 2, on_breakdown="flag")
    assert res.breakdown.all()
    np.testing.assert_array_equal(res.x, 0)


def test_cg_breakdown_flag_is_per_problem():
    A = np.stack([np.eye(2), np.diag([1.0, -1.0])])
    b = np.ones((2, 2))
    res = cg_solve(A, b, 2, on_breakdown="flag")
    np.testing.assert_array_equal(res.breakdown, [False, True])
    np.testing.assert_allclose(res.x[0], [1, 1])


def test_cg_rejects_non_hermitian():
    A = np.array([[1.0, 1j], [1j, 1.0]])
    with pytest.raises(ValueError):
        cg_solve(A, np.array([1.0, 1.0]), 1)


def test_cg_counts_match_closed_form(rng):
    U = 8
    c = OpCounter()
    cg_solve(random_hpd(rng, U), _rand_vec(rng, U, batch=(4,)), 5, counter=c)
    assert c["cg-iteration"] == 2 * U + 5 * (4 * U * U + 10 * U)


def test_scalar_history_boundary():
    h = ScalarHistory([0.5, 0.25], [0.1, 0.2])
    assert h.alpha(1) == 0.5 and h.beta(2) == 0.2
    assert h.alpha(0) == 1.0 and h.beta(-3) == 0.0


# -- CGLS and CGNE ----------------------------------------------------------

def test_cgls_diagonal_case():
    # [I_2; I_2] with b = (1, 0, 0, 0): normal equations 2I x = (1, 0)
    H = np.eye(2)
    b = np.array([1.0, 0.0])
    x = cgls_solve(H, b, 1, damp=1.0).x
    ref = cg_solve(2 * np.eye(2), H.conj().T @ b, 1).x
    np.testing.assert_allclose(x, ref, atol=1e-15)
    np.testing.assert_allclose(x, [0.5, 0.0], atol=1e-15)


def test_cgls_zero_rhs():
    res = cgls_solve(np.ones((4, 2)), np.zeros(4), 2, damp=1.0)
    np.testing.assert_array_equal(res.x, 0)


def test_cgls_matches_cg_at_full_iterations(rng):
    H = random_channel(rng, 8, 4)
    b = _rand_vec(rng, 8)
    x = cgls_solve(H, b, 4, damp=1.0).x
    ref = cg_solve(gram_regularized(H, 1.0), H.conj().T @ b, 4).x
    assert np.linalg.norm(x - ref) / np.linalg.norm(ref) < 1e-8


def test_cgls_scalars_match_cg(rng):
    H = random_channel(rng, 16, 6)
    b = _rand_vec(rng, 16)
    damp = 0.7
    # K < U: the last beta at K = U is rounding noise
    a = cgls_solve(H, b, 5, damp=damp)
    c = cg_solve(gram_regularized(H, damp ** 2), H.conj().T @ b, 5)
    np.testing.assert_allclose(a.history.alphas, c.history.alphas, rtol=1e-8)
    np.testing.assert_allclose(a.history.betas, c.history.betas, rtol=1e-7)


def test_cgne_iterates_are_mapped_cg_iterates(rng):
    # wide system [H, d I] q = t; iterates equal [H, d I]^H w_k
    H = random_channel(rng, 4, 12)
    t = _rand_vec(rng, 4)
    d = 0.5
    wide = np.concatenate([H, d * np.eye(4)], axis=1)
    ne = cgne_solve(H, t, 4, damp=d, trace=True)
    cg = cg_solve(gram_regularized(H, d * d, side="downlink"), t, 4, trace=True)
    for s_ne, s_cg in zip(ne.trace, cg.trace):
        expected = wide.conj().T @ s_cg.v
        assert np.linalg.norm(s_ne.x - expected) / np.linalg.norm(expected) < 1e-10


# -- Cholesky ---------------------------------------------------------------

def test_cholesky_inverse_diagonal():
    np.testing.assert_allclose(cholesky_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    np.testing.assert_allclose(cholesky_inverse(np.eye(5)), np.eye(5))


def test_cholesky_inverse_matches_elimination_oracle(rng):
    A = random_hpd(rng, 5, cond=100)
    np.testing.assert_allclose(cholesky_inverse(A), gauss_jordan_inverse(A), atol=1e-10)


def test_cholesky_factor_reconstructs(rng):
    A = random_hpd(rng, 6, cond=30)
    M, inv = cholesky_factor(A)
    np.testing.assert_allclose(M @ M.conj().T, A, atol=1e-12)
    assert np.all(np.triu(M, 1) == 0)
    np.testing.assert_allclose(inv, 1 / np.diagonal(M).real)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky_inverse(np.diag([1.0, -2.0]))


def test_cholesky_counts(rng):
    U = 8
    c = OpCounter()
    cholesky_inverse(random_hpd(rng, U), counter=c)
    assert c["cholesky"] == 2 * U * (U - 1) + 2 * U * (U - 1) * (U - 2) // 3
    assert c["substitution"] == 2 * (U ** 3 - U) // 3 + U * (U - 1) + 2 * U ** 3


# -- Neumann ----------------------------------------------------------------

@pytest.mark.parametrize("K", [1, 2, 5])
def test_neumann_exact_on_diagonal(K):
    A = np.diag([2.0, 5.0, 0.5])
    np.testing.assert_allclose(neumann_inverse(A, K), np.diag([0.5, 0.2, 2.0]))


def test_neumann_two_terms_by_hand():
    A = np.array([[2.0, 0.5], [0.5, 2.0]])
    np.testing.assert_allclose(neumann_inverse(A, 2), [[0.5, -0.125], [-0.125, 0.5]])


def test_neumann_three_terms_by_hand():
    # third term (D^-1 E)^2 D^-1 = diag(0.0625 * 0.5) for this A
    A = np.array([[2.0, 0.5], [0.5, 2.0]])
    np.testing.assert_allclose(neumann_inverse(A, 3), [[0.53125, -0.125], [-0.125, 0.53125]])


def test_neumann_residual_decreases_on_rayleigh_gram(rng):
    A = gram_regularized(random_channel(rng, 128, 8), 0.1)
    res = [np.linalg.norm(np.eye(8) - A @ neumann_inverse(A, K)) for K in (1, 2, 3)]
    assert res[0] > res[1] > res[2]


def test_neumann_errors():
    with pytest.raises(ValueError):
        neumann_inverse(np.eye(2), 0)
    with pytest.raises(ZeroDivisionError):
        neumann_inverse(np.array([[0.0, 1.0], [1.0, 2.0]]), 2)


def test_neumann_counts(rng):
    U = 8
    A = random_hpd(rng, U)
    for K, expected in [(1, 0), (2, 3 * U * (U - 1) // 2),
                        (4, 3 * U * (U - 1) // 2 + 2 * U * (U - 1) + 2 * 2 * (U ** 3 - U))]:
        c = OpCounter()
        neumann_inverse(A, K, counter=c)
        assert c["neumann-term"] == expected


def test_iterations_generator_is_unbounded(rng):
    it = cg_iterations(random_hpd(rng, 2), _rand_vec(rng, 2))
    ks = [next(it).k for _ in range(5)]
    assert ks == [1, 2, 3, 4, 5]
