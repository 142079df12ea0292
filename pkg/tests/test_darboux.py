import numpy as np
import pytest

from qbdfactor import blockmat as bm
from qbdfactor import darboux as db
from qbdfactor import factorization as fz
from qbdfactor import jacobi as J
from test_factorization import scalar_lu_oracle


def test_scalar_darboux_from_ul():
    U = bm.BlockSequence(1, "upper", lambda n: ([[0.5]], [[0.5]]))
    L = bm.BlockSequence(1, "lower", lambda n: ([[1.0]], None) if n == 0 else ([[0.5]], [[0.5]]))
    T = db.darboux_from_ul(U, L).transformed
    assert T.diag(0)[0, 0] == pytest.approx(0.5)
    assert T.sup(0)[0, 0] == pytest.approx(0.5)


@pytest.mark.parametrize("triple", [(3, 2, 1), (1, 2, 2)])
def test_darboux_from_ul_stochastic(triple):
    p = J.JacobiParams(*triple)
    F = fz.factor_ul(J.transition_sequence(p), J.alpha0_paper(p), J.paper_tau_strategy(p), N=21)
    res = db.darboux_from_ul(F.P_U, F.P_L, 20)
    assert res.source == "from_ul"
    assert bm.validate_stochastic(res.transformed, 20, 1e-10).passed


def test_darboux_with_identity_X_has_A_equal_S():
    rng = np.random.default_rng(3)
    S = [np.abs(rng.random((2, 2))) for _ in range(6)]
    U = bm.BlockSequence(2, "upper", lambda n: (np.zeros((2, 2)), np.eye(2)))
    L = bm.BlockSequence(2, "lower", lambda n: (S[n], None if n == 0 else np.eye(2)))
    T = db.darboux_from_ul(U, L).transformed
    for n in range(5):
        np.testing.assert_array_equal(T.sup(n), S[n])


@pytest.mark.parametrize("triple", [(3, 2, 1), (1, 2, 2)])
def test_darboux_from_lu_stochastic(triple):
    p = J.JacobiParams(*triple)
    G = fz.factor_lu(J.transition_sequence(p), J.paper_tau_lu_strategy(p), N=22)
    res = db.darboux_from_lu(G.P_U, G.P_L, 20)
    assert res.source == "from_lu"
    assert bm.validate_stochastic(res.transformed, 20, 1e-10).passed


def test_scalar_lu_darboux_matches_direct():
    p = J.JacobiParams(1, 1, 0.5, d=1)
    P = J.transition_sequence(p)
    G = fz.factor_lu(P, fz.TauStrategy.lower_triangular_Y_upper(), N=12)
    T = db.darboux_from_lu(G.P_U, G.P_L, 10).transformed
    S, R, Y, X = scalar_lu_oracle(P, 12)
    for n in range(10):
        C, B, A = T.blocks(n)
        assert A[0, 0] == pytest.approx(X[n] * S[n + 1], abs=1e-13)
        assert B[0, 0] == pytest.approx(Y[n] * S[n] + X[n] * R[n + 1], abs=1e-13)
        if n:
            assert C[0, 0] == pytest.approx(Y[n] * R[n], abs=1e-13)


def test_zero_Y_gives_pure_birth():
    U = bm.BlockSequence(2, "upper", lambda n: (np.zeros((2, 2)), np.eye(2)))
    L = bm.BlockSequence(2, "lower", lambda n: (0.5 * np.eye(2), None if n == 0 else 0.5 * np.eye(2)))
    T = db.darboux_from_lu(U, L).transformed
    for n in range(1, 5):
        np.testing.assert_array_equal(T.sub(n), 0)


def test_band_checks():
    U = bm.BlockSequence(2, "upper", lambda n: (np.eye(2), np.eye(2)))
    with pytest.raises(ValueError):
        db.darboux_from_ul(U, U)
    with pytest.raises(ValueError):
        db.darboux_from_lu(U, U)
