import numpy as np
import pytest

from qbdfactor import blockmat as bm
from qbdfactor import darboux as db
from qbdfactor import factorization as fz
from qbdfactor import jacobi as J
from qbdfactor import spectral as sp

P321 = J.JacobiParams(3, 2, 1)
P122 = J.JacobiParams(1, 2, 2)


def off_diagonal_ratio(G, left_only=False):
    H = [np.abs(G[n, n]).max() for n in range(G.shape[0])]
    return max(np.abs(G[n, m]).max() / H[n]
               for n in range(G.shape[0]) for m in range(G.shape[0])
               if (n > m if left_only else n != m))


# --- quadrature ------------------------------------------------------------

def test_midpoint_rule():
    r = sp.gauss_jacobi_rule(0, 0, 1)
    np.testing.assert_allclose(r.nodes, [0.5], atol=1e-15)
    np.testing.assert_allclose(r.weights, [1.0], atol=1e-15)


def test_beta_integral_two_nodes():
    r = sp.gauss_jacobi_rule(3, 2, 2)
    assert r.integrate(np.ones(2)) == pytest.approx(1 / 60, abs=1e-14)


def test_exactness_high_degree():
    r = sp.gauss_jacobi_rule(3, 2, 32)
    exact = 2 / (64 * 65 * 66)  # B(64, 3)
    assert r.integrate(r.nodes ** 60) == pytest.approx(exact, rel=1e-12)
    assert r.exactness_degree == 63


def test_inner_product_rejects_weak_rule():
    W = J.weight_spec(P321)
    with pytest.raises(sp.QuadratureError):
        sp.inner_product(np.ones((5, 2, 2)), np.ones((5, 2, 2)), W, rule=sp.gauss_jacobi_rule(3, 2, 2))


# --- polynomials -----------------------------------------------------------

def test_first_polynomials():
    P = J.transition_sequence(P321)
    ops = sp.polynomial_sequence(P, 2)
    np.testing.assert_array_equal(ops.polys[0], np.eye(2)[None])
    C, B, A = P.blocks(0)
    Ainv = np.linalg.inv(A)
    np.testing.assert_allclose(ops.polys[1][0], -Ainv @ B, atol=1e-14)
    np.testing.assert_allclose(ops.polys[1][1], Ainv, atol=1e-14)


def test_values_match_coefficients():
    P = J.transition_sequence(P122)
    xs = np.array([0.1, 0.5, 0.9])
    ops = sp.polynomial_sequence(P, 6)
    vals = sp.op_values(P, 6, xs)
    for n in range(7):
        np.testing.assert_allclose(vals[n], sp.polyval(ops.polys[n], xs), rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("p", [P321, P122])
def test_orthogonality(p):
    P = J.transition_sequence(p)
    W = J.weight_spec(p)
    assert off_diagonal_ratio(sp.gram_blocks(P, W, 8)) <= 1e-10
    ops = sp.polynomial_sequence(P, 6)
    for n in range(1, 7):
        for m in range(n):
            G = sp.inner_product(ops.polys[n], ops.polys[m], W)
            assert np.abs(G).max() <= 1e-10 * max(1.0, np.abs(sp.inner_product(ops.polys[n], ops.polys[n], W)).max())


def test_identity_inner_product_is_mu0():
    I = np.eye(2)[None]
    np.testing.assert_allclose(sp.inner_product(I, I, J.weight_spec(P321)), 3 / 70 * np.diag([1, 0.5]), atol=1e-16)


def test_pure_atom():
    M = np.array([[2.0, 0.5], [0.5, 1.0]])
    W = sp.WeightSpec(0, 0, np.zeros((1, 2, 2)), M)
    np.testing.assert_allclose(sp.inner_product(np.eye(2)[None], np.eye(2)[None], W), M)


# --- Karlin-McGregor -------------------------------------------------------

def test_kmcg_trivial_cases():
    P = J.transition_sequence(P321)
    W = J.weight_spec(P321)
    ops = sp.polynomial_sequence(P, 3).with_norms(W)
    np.testing.assert_allclose(sp.kmcg_entry(P, W, 0, 1, 1, ops), np.eye(2), atol=1e-13)
    np.testing.assert_allclose(sp.kmcg_entry(P, W, 0, 1, 2, ops), 0, atol=1e-13)
    np.testing.assert_allclose(sp.kmcg_entry(P, W, 1, 0, 0, ops), P.diag(0), atol=1e-13)


def test_kmcg_four_steps():
    P = J.transition_sequence(P321)
    W = J.weight_spec(P321)
    P4 = np.linalg.matrix_power(bm.truncate_dense(P, 12), 4)
    np.testing.assert_allclose(sp.kmcg_entry(P, W, 4, 1, 2), P4[2:4, 4:6], atol=1e-8)


# --- invariant measure -----------------------------------------------------

def test_invariant_measure_stationary():
    P = J.transition_sequence(P321)
    m = 10
    pi = np.concatenate(sp.invariant_measure(P, J.weight_spec(P321), m + 5))
    r = pi @ bm.truncate_dense(P, m + 5) - pi
    k = 2 * (m - 2)
    assert np.max(np.abs(r[:k]) / np.abs(pi[:k])) <= 1e-8


def test_invariant_measure_level0():
    pi = sp.invariant_measure(J.transition_sequence(P321), J.weight_spec(P321), 1)
    np.testing.assert_allclose(pi[0], np.linalg.inv(J.moments_d2(P321).mu0) @ np.ones(2), rtol=1e-13)


def test_invariant_measure_scalar_potential():
    # reversible scalar chain: pi_n proportional to prod_{j<n} A_j / C_{j+1}
    p = J.JacobiParams(1.5, 0.5, 0.7, d=1)
    P = J.transition_sequence(p)
    pi = np.array([v[0] for v in sp.invariant_measure(P, J.weight_spec(p), 10)])
    pot = [1.0]
    for n in range(9):
        pot.append(pot[-1] * P.sup(n)[0, 0] / P.sub(n + 1)[0, 0])
    np.testing.assert_allclose(pi / pi[0], pot, rtol=1e-11)


# --- weight transforms -----------------------------------------------------

def test_geronimus_with_closed_form_seed():
    W = J.weight_spec(P321)
    Wg = sp.geronimus_transform(W, J.alpha0_paper(P321), J.moments_d2(P321))
    assert (Wg.a, Wg.b) == (2, 2)
    assert np.abs(Wg.point_mass_at_zero).max() < 1e-15
    assert sp.christoffel_transform(Wg).same_as(W)


def test_geronimus_case1_mass_matches():
    a0 = J.alpha0_case1(P321, 0.05, 0.5)
    mom = J.moments_d2(P321)
    Wg = sp.geronimus_transform(J.weight_spec(P321), a0, mom)
    M = Wg.point_mass_at_zero
    np.testing.assert_allclose(M, M.T, atol=1e-15)
    np.testing.assert_allclose(M, J.geronimus_mass(a0, mom).M, atol=1e-15)


@pytest.mark.parametrize("case,p,sa,sb", [("case1", P321, 0.05, 0.5), ("case2a", P321, 0.5, 0.8),
                                          ("case2a", P122, 0.5, 0.8)])
def test_darboux_polynomials_left_orthogonal(case, p, sa, sb):
    a0 = J._SEEDS[case](p, sa, sb)
    Wt = sp.geronimus_transform(J.weight_spec(p), a0, J.moments_d2(p))
    # monic polynomials of the Darboux Jacobi matrix, by coefficients
    polys = J.darboux_monic_polynomials(p, a0, 5)
    G = np.array([[sp.inner_product(polys[n], polys[m], Wt) for m in range(6)] for n in range(6)])
    assert off_diagonal_ratio(G, left_only=True) <= 1e-9
    # the stochastic P~ recursion with Q~_0 = I, via values at the nodes
    F = fz.factor_ul(J.transition_sequence(p), a0, N=8)
    Pt = db.darboux_from_ul(F.P_U, F.P_L, 7).transformed
    G2 = sp.gram_blocks(Pt, Wt.conjugated(F.P_L.diag(0)), 5)
    assert off_diagonal_ratio(G2, left_only=True) <= 1e-10


def test_case2a_darboux_not_right_orthogonal():
    a0 = J.alpha0_case2a(P321, 0.5, 0.8)
    Wt = sp.geronimus_transform(J.weight_spec(P321), a0, J.moments_d2(P321))
    polys = J.darboux_monic_polynomials(P321, a0, 3)
    G = sp.inner_product(polys[1], polys[2], Wt)
    H = sp.inner_product(polys[2], polys[2], Wt)
    assert np.abs(G).max() > 1e-2 * np.abs(H).max()


def test_christoffel():
    W = J.weight_spec(P321)
    Wc = sp.christoffel_transform(W)
    assert (Wc.a, Wc.b) == (4, 2) and Wc.point_mass_at_zero is None
    x = np.zeros((2, 2, 2))
    x[1] = np.eye(2)
    np.testing.assert_allclose(sp.inner_product(np.eye(2)[None], np.eye(2)[None], Wc),
                               sp.inner_product(x, np.eye(2)[None], W), atol=1e-16)


@pytest.mark.parametrize("p", [P321, P122])
def test_lu_darboux_orthogonal_for_christoffel(p):
    G = fz.factor_lu(J.transition_sequence(p), J.paper_tau_lu_strategy(p), N=9)
    Ph = db.darboux_from_lu(G.P_U, G.P_L, 7).transformed
    Wh = sp.christoffel_transform(J.weight_spec(p)).conjugated(np.linalg.inv(G.P_L.diag(0)))
    assert off_diagonal_ratio(sp.gram_blocks(Ph, Wh, 5)) <= 1e-10


def test_weight_validation():
    with pytest.raises(ValueError):
        sp.WeightSpec(-1, 0, np.ones((1, 2, 2)))
    with pytest.raises(ValueError):
        sp.geronimus_transform(sp.WeightSpec(0, 0, np.ones((1, 2, 2))), np.eye(2), J.moments_d2(P321))
