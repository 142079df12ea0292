import numpy as np
import pytest

from qbdfactor import blockmat as bm
from qbdfactor import factorization as fz
from qbdfactor import jacobi as J

P321 = J.JacobiParams(3, 2, 1)


def scalar_chain(b, a, c, b0=None):
    """Constant scalar tridiagonal chain; ``b0`` overrides the level-0 diagonal."""
    return bm.BlockSequence(1, "tridiagonal",
                            lambda n: (None, [[b if b0 is None else b0]], [[a]]) if n == 0
                            else ([[c]], [[b]], [[a]]))


def scalar_lu_oracle(P, N):
    """Stochastic LU factors of a scalar chain solved directly from the row sums."""
    S, R, Y, X = [1.0], [0.0], [], []
    for n in range(N):
        C, B, A = (float(x[0, 0]) if x is not None else 0.0 for x in P.blocks(n))
        if n > 0:
            R.append(C / Y[n - 1])
            S.append(1.0 - R[n])
        X.append(A / S[n])
        Y.append(1.0 - X[n])
    return np.array(S), np.array(R), np.array(Y), np.array(X)


# --- monic reduction -------------------------------------------------------

def test_monic_scalar_constant():
    m = fz.monic_reduce(scalar_chain(1 / 3, 1 / 3, 1 / 3), 4)
    np.testing.assert_allclose(m.L[:, 0, 0], [1, 3, 9, 27, 81])
    np.testing.assert_allclose(m.Bhat[:, 0, 0], 1 / 3)
    np.testing.assert_allclose(m.Chat[1:, 0, 0], 1 / 9)


def test_monic_jacobi_L1():
    m = fz.monic_reduce(J.transition_sequence(P321), 3)
    np.testing.assert_allclose(m.L[1], [[4, 0], [-3 / 8, 21 / 8]], atol=1e-14)
    np.testing.assert_allclose(m.L[2], J.L_d2(P321, 2), rtol=1e-13)


def test_monic_singular_A0():
    P = bm.BlockSequence(2, "tridiagonal", lambda n: (None if n == 0 else np.eye(2), np.eye(2), np.ones((2, 2))))
    with pytest.raises(bm.SingularBlockError) as exc:
        fz.monic_reduce(P, 3)
    assert exc.value.level == 0


def test_monic_dense_is_conjugate():
    P = J.transition_sequence(P321)
    m = fz.monic_reduce(P, 6)
    D = bm.truncate_dense(P, 5)
    Lb = np.zeros((10, 10))
    Li = np.zeros((10, 10))
    for n in range(5):
        Lb[2 * n:2 * n + 2, 2 * n:2 * n + 2] = m.L[n]
        Li[2 * n:2 * n + 2, 2 * n:2 * n + 2] = m.Linv[n]
    np.testing.assert_allclose(Li @ D @ Lb, m.jacobi_dense(5), atol=1e-12)


# --- UL recursion ----------------------------------------------------------

def test_ul_scalar_one_step():
    m = fz.monic_reduce(scalar_chain(1 / 3, 1 / 3, 1 / 3), 3)
    co = fz.ul_coefficients(m, [[1 / 6]], 1)
    assert co.beta[1, 0, 0] == pytest.approx(1 / 6)
    assert co.alpha[1, 0, 0] == pytest.approx(2 / 3)


def test_ul_singular_beta1():
    p = J.JacobiParams(0, 0, 0.5, d=1)
    P = J.transition_sequence(p)
    m = fz.monic_reduce(P, 3)
    with pytest.raises(bm.SingularBlockError) as exc:
        fz.ul_coefficients(m, P.diag(0), 1)
    assert exc.value.level == 1 and exc.value.what == "beta_1"


def test_ul_level_one_matches_closed_form():
    F = fz.factor_ul(J.transition_sequence(P321), J.alpha0_paper(P321), J.paper_tau_strategy(P321), N=3)
    X, Y, R, S = J.paper_factors(P321, 1)
    np.testing.assert_allclose(F.P_U.sup(1), X, atol=1e-14)
    np.testing.assert_allclose(F.P_U.diag(1), Y, atol=1e-14)
    np.testing.assert_allclose(F.P_L.diag(1), S, atol=1e-14)
    np.testing.assert_allclose(F.P_L.sub(1), R, atol=1e-14)


def test_ul_needs_enough_monic_levels():
    m = fz.monic_reduce(J.transition_sequence(P321), 3)
    with pytest.raises(ValueError):
        fz.ul_coefficients(m, J.alpha0_paper(P321), 5)


# --- LU recursion ----------------------------------------------------------

def test_lu_scalar_breaks_at_level_one():
    m = fz.monic_reduce(scalar_chain(1 / 3, 1 / 3, 1 / 3), 3)
    with pytest.raises(bm.SingularBlockError) as exc:
        fz.lu_coefficients(m, 2)
    assert exc.value.level == 1


def test_lu_base_is_Bhat0():
    m = fz.monic_reduce(J.transition_sequence(P321), 4)
    co = fz.lu_coefficients(m, 3)
    np.testing.assert_allclose(co.alphat[0], m.Bhat[0], atol=1e-15)


def test_lu_scalar_birth_death_closed_form():
    # B^ = 1/2, C^ = 1/16: alpha~_n = (n + 2) / (4 (n + 1)) -> 1/4, beta~_n = 1/2 - alpha~_n
    m = fz.monic_reduce(scalar_chain(1 / 2, 1 / 4, 1 / 4), 41)
    co = fz.lu_coefficients(m, 40)
    n = np.arange(40)
    np.testing.assert_allclose(co.alphat[:, 0, 0], (n + 2) / (4 * (n + 1)), rtol=1e-12)
    np.testing.assert_allclose(co.betat[1:, 0, 0], 0.5 - co.alphat[1:, 0, 0], rtol=1e-12)


# --- tau -------------------------------------------------------------------

def test_scalar_tau0_is_one():
    p = J.JacobiParams(1, 1, 0.5, d=1)
    P = J.transition_sequence(p)
    F = fz.factor_ul(P, 0.5 * P.diag(0), N=5)
    assert F.tau[0, 0, 0] == pytest.approx(1.0)
    assert bm.validate_stochastic(F.P_U, 5).passed


def test_paper_tau0_inverse():
    np.testing.assert_allclose(J.tau0_inverse(P321), [[1, 0], [1 / 6, 5 / 6]], atol=1e-15)
    F = fz.factor_ul(J.transition_sequence(P321), J.alpha0_paper(P321), J.paper_tau_strategy(P321), N=2)
    np.testing.assert_allclose(np.linalg.inv(F.tau[0]), [[1, 0], [1 / 6, 5 / 6]], atol=1e-14)


def test_triangular_strategy_case1():
    a0 = J.alpha0_case1(P321, 1 / 12, 1 / 6)
    F = fz.factor_ul(J.transition_sequence(P321), a0, fz.TauStrategy.lower_triangular_Y_upper(), N=21)
    for n in range(21):
        assert abs(F.tau[n][0, 1]) <= 1e-12 * np.abs(F.tau[n]).max()
        Y, X = F.P_U.blocks(n)
        assert abs(Y[1, 0]) <= 1e-12
        np.testing.assert_allclose((X + Y).sum(axis=1), 1, atol=1e-10)


def test_triangular_strategy_reproduces_paper_tau0():
    F = fz.factor_ul(J.transition_sequence(P321), J.alpha0_paper(P321), N=2)
    np.testing.assert_allclose(np.linalg.inv(F.tau[0]), J.tau0_inverse(P321), atol=1e-14)


def test_explicit_tau_is_checked():
    P = J.transition_sequence(P321)
    with pytest.raises(ValueError):
        fz.factor_ul(P, J.alpha0_paper(P321), fz.TauStrategy.explicit([np.eye(2)] * 6), N=5)
    with pytest.raises(ValueError):
        fz.TauStrategy("bogus")


# --- assembly --------------------------------------------------------------

def test_closed_form_level0_blocks():
    F = fz.factor_ul(J.transition_sequence(P321), J.alpha0_paper(P321), J.paper_tau_strategy(P321), N=3)
    np.testing.assert_allclose(F.P_U.sup(0), [[2 / 7, 0], [0, 1 / 2]], atol=1e-15)
    np.testing.assert_allclose(F.P_U.diag(0), [[18 / 35, 1 / 5], [0, 1 / 2]], atol=1e-15)
    R1 = F.P_L.sub(1)
    assert R1[0, 0] == pytest.approx(1 / 8, abs=1e-15)
    assert R1[1, 1] == pytest.approx(1 / 6, abs=1e-15)


def test_identity_tau_assembly():
    m = fz.monic_reduce(J.transition_sequence(P321), 6)
    co = fz.ul_coefficients(m, J.alpha0_paper(P321), 4)
    P_U, P_L = fz.assemble_ul(m, co, np.array([np.eye(2)] * 5))
    for n in range(4):
        np.testing.assert_allclose(P_L.diag(n), m.Linv[n], rtol=1e-12)
        np.testing.assert_allclose(P_U.sup(n), m.L[n], rtol=1e-12)


def test_identity_tau_lu_assembly():
    m = fz.monic_reduce(J.transition_sequence(P321), 6)
    co = fz.lu_coefficients(m, 5)
    P_L, P_U = fz.assemble_lu(m, co, np.array([np.eye(2)] * 5))
    for n in range(4):
        np.testing.assert_allclose(P_L.diag(n), m.L[n], rtol=1e-12)
        np.testing.assert_allclose(P_U.sup(n), m.Linv[n + 1], rtol=1e-12)


@pytest.mark.parametrize("triple", [(3, 2, 1), (1, 2, 2)])
def test_lu_matches_shifted_ul(triple):
    p = J.JacobiParams(*triple).extended()
    F = fz.factor_lu(J.transition_sequence(p), J.paper_tau_lu_strategy(p), N=21)
    q = p.shift_alpha(1)
    for n in range(20):
        X, Y, R, S = J.paper_factors(q, n)
        np.testing.assert_allclose(np.asarray(F.P_U.sup(n), float), np.asarray(X, float), atol=1e-12)
        np.testing.assert_allclose(np.asarray(F.P_U.diag(n), float), np.asarray(Y, float), atol=1e-12)
        np.testing.assert_allclose(np.asarray(F.P_L.diag(n), float), np.asarray(S, float), atol=1e-12)
        if n:
            np.testing.assert_allclose(np.asarray(F.P_L.sub(n), float), np.asarray(R, float), atol=1e-12)


def test_scalar_lu_matches_direct_solution():
    p = J.JacobiParams(1, 1, 0.5, d=1)
    P = J.transition_sequence(p)
    F = fz.factor_lu(P, fz.TauStrategy.lower_triangular_Y_upper(), N=12)
    S, R, Y, X = scalar_lu_oracle(P, 12)
    for n in range(11):
        assert F.P_L.diag(n)[0, 0] == pytest.approx(S[n], abs=1e-13)
        assert F.P_U.diag(n)[0, 0] == pytest.approx(Y[n], abs=1e-13)
        assert F.P_U.sup(n)[0, 0] == pytest.approx(X[n], abs=1e-13)
        if n:
            assert F.P_L.sub(n)[0, 0] == pytest.approx(R[n], abs=1e-13)


# --- residual --------------------------------------------------------------

def test_residual_exact_and_perturbed():
    P = J.transition_sequence(P321)
    P_U, P_L = J.paper_factor_sequences(P321)
    assert fz.factorization_residual(P, P_U, P_L, 10) <= 1e-10

    def gen(n):
        Y, X = P_U.blocks(n)
        if n == 0:
            X = X + 1e-3
        return Y, X

    bad = bm.BlockSequence(2, "upper", gen)
    assert fz.factorization_residual(P, bad, P_L, 10) >= 9e-4


def test_factor_arrays_batch_matches_driver():
    m = fz.monic_reduce(J.transition_sequence(P321), 12)
    seeds = np.stack([J.alpha0_case1(P321, s, 0.5) for s in (0.02, 0.05)])
    out = fz.ul_factor_arrays(m, seeds, 10)
    for b, s in enumerate((0.02, 0.05)):
        F = fz.factor_ul(J.transition_sequence(P321), seeds[b], N=10)
        for n in range(10):
            np.testing.assert_allclose(out["X"][b, n], F.P_U.sup(n), atol=1e-12)
            np.testing.assert_allclose(out["S"][b, n], F.P_L.diag(n), atol=1e-12)
