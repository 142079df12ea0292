"""Matrix orthogonal polynomials, Gauss-Jacobi quadrature and spectral formulas.

Matrix polynomials are coefficient arrays of shape ``(deg + 1, d, d)`` in
the monomial basis: ``F(x) = sum_k F[k] x**k``.

All integrals are over ``[0, 1]`` against ``x**a (1 - x)**b`` times a
polynomial matrix, so a Gauss-Jacobi rule with enough nodes is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import List, Optional

import numpy as np
from scipy import special

from .blockmat import BlockSequence, small_inverse

__all__ = [
    "QuadratureError",
    "WeightSpec",
    "QuadratureRule",
    "OPSequence",
    "gauss_jacobi_rule",
    "polyval",
    "polymul",
    "polynomial_sequence",
    "monic_polynomials",
    "op_values",
    "inner_product",
    "gram_blocks",
    "kmcg_entry",
    "invariant_measure",
    "geronimus_transform",
    "christoffel_transform",
    "beta_moment",
]


class QuadratureError(Exception):
    pass


@dataclass(frozen=True)
class WeightSpec:
    """``W(x) = x**a (1-x)**b * matrix_part(x)`` on [0, 1], plus an optional atom at 0.

    ``matrix_part`` is a coefficient array ``(deg + 1, d, d)``.  ``name`` and
    ``params`` only describe the matrix part for serialization.
    """

    a: float
    b: float
    matrix_part: np.ndarray
    point_mass_at_zero: Optional[np.ndarray] = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.a > -1 and self.b > -1):
            raise ValueError(f"density exponents must exceed -1, got a={self.a}, b={self.b}")
        mp = np.asarray(self.matrix_part, float)
        if mp.ndim != 3 or mp.shape[1] != mp.shape[2]:
            raise ValueError("matrix_part must have shape (deg+1, d, d)")
        object.__setattr__(self, "matrix_part", mp)
        if self.point_mass_at_zero is not None:
            M = np.asarray(self.point_mass_at_zero, float)
            if M.shape != mp.shape[1:] or not np.all(np.isfinite(M)):
                raise ValueError("point mass must be a finite d x d matrix")
            object.__setattr__(self, "point_mass_at_zero", M)

    @property
    def d(self):
        return self.matrix_part.shape[1]

    @property
    def degree(self):
        return self.matrix_part.shape[0] - 1

    def __call__(self, x):
        """Density part evaluated at points in (0, 1); shape ``(len(x), d, d)``."""
        x = np.atleast_1d(np.asarray(x, float))
        return (x ** self.a * (1 - x) ** self.b)[:, None, None] * polyval(self.matrix_part, x)

    def same_as(self, other: "WeightSpec", atol=1e-14) -> bool:
        if (self.a, self.b) != (other.a, other.b):
            return False
        n = max(self.degree, other.degree) + 1
        p1 = _pad(self.matrix_part, n)
        p2 = _pad(other.matrix_part, n)
        if not np.allclose(p1, p2, rtol=0, atol=atol):
            return False
        m1 = self.point_mass_at_zero
        m2 = other.point_mass_at_zero
        z = np.zeros((self.d, self.d))
        return np.allclose(z if m1 is None else m1, z if m2 is None else m2, rtol=0, atol=atol)

    def conjugated(self, T) -> "WeightSpec":
        """``T W(x) T^T`` (atom included).

        Polynomials normalized by ``Q_0 = I`` after a change of level-0 basis
        ``T`` are orthogonal for the conjugated weight.
        """
        T = np.asarray(T, float)
        mp = np.einsum("ij,kjl,ml->kim", T, self.matrix_part, T)
        atom = None if self.point_mass_at_zero is None else T @ self.point_mass_at_zero @ T.T
        return WeightSpec(self.a, self.b, mp, atom, self.name, dict(self.params))

    def to_json(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "atom0": None if self.point_mass_at_zero is None else self.point_mass_at_zero.tolist(),
            "matrix_part": self.name,
            "params": dict(self.params),
            "coefficients": self.matrix_part.tolist(),
        }


def _pad(P, n):
    out = np.zeros((n,) + P.shape[1:])
    out[:P.shape[0]] = P
    return out


def beta_moment(a, b, j=0):
    """``int_0^1 x**(a+j) (1-x)**b dx``."""
    return math.exp(special.betaln(a + j + 1, b + 1))


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int
    a: float
    b: float

    def integrate(self, values):
        """Sum ``weights[k] * values[k]`` over the first axis."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def verify(self, rtol=1e-12):
        """Check monomials up to ``exactness_degree`` against Beta-function moments."""
        worst = 0.0
        for j in range(self.exactness_degree + 1):
            exact = beta_moment(self.a, self.b, j)
            got = float(self.weights @ self.nodes ** j)
            worst = max(worst, abs(got - exact) / exact)
        if worst > rtol:
            raise QuadratureError(
                f"Gauss-Jacobi rule (a={self.a}, b={self.b}, m={len(self.nodes)}) "
                f"misses monomial moments: max relative error {worst:.3e}")
        return worst


@lru_cache(maxsize=256)
def _rule(a, b, m):
    t, w = special.roots_jacobi(m, b, a)
    nodes = (1.0 + t) / 2.0
    weights = w * 2.0 ** (-(a + b + 1))
    rule = QuadratureRule(nodes, weights, 2 * m - 1, a, b)
    rule.verify()
    rule.nodes.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule


def gauss_jacobi_rule(a: float, b: float, m: int) -> QuadratureRule:
    """``m``-node Gauss rule for ``x**a (1-x)**b`` on (0, 1), verified before use."""
    if not (a > -1 and b > -1):
        raise ValueError("need a, b > -1")
    if m < 1:
        raise ValueError("need m >= 1")
    return _rule(float(a), float(b), int(m))


# --- matrix polynomials ---------------------------------------------------

def polyval(P, x):
    """Evaluate a matrix polynomial at points ``x``; returns ``(len(x), d, d)``."""
    x = np.atleast_1d(np.asarray(x, float))
    P = np.asarray(P, float)
    out = np.zeros((x.size,) + P.shape[1:])
    for c in P[::-1]:
        out = out * x[:, None, None] + c
    return out


def polymul(F, G):
    """Product ``F(x) G(x)`` of matrix polynomials (order matters)."""
    out = np.zeros((F.shape[0] + G.shape[0] - 1,) + F.shape[1:])
    for i, f in enumerate(F):
        for j, g in enumerate(G):
            out[i + j] += f @ g
    return out


def _shift(P):
    """Coefficients of ``x * P(x)``."""
    return np.concatenate([np.zeros((1,) + P.shape[1:]), P])


def _trim(P, deg):
    return P[:deg + 1]


@dataclass(frozen=True)
class OPSequence:
    """``polys[n]`` is ``Q_n`` with shape ``(n + 1, d, d)``; ``norms[n] = (Q_n, Q_n)_W`` when computed."""

    polys: List[np.ndarray]
    norms: Optional[List[np.ndarray]] = None

    def with_norms(self, W: "WeightSpec") -> "OPSequence":
        return replace(self, norms=[inner_product(Q, Q, W) for Q in self.polys])


def polynomial_sequence(P: BlockSequence, N: int) -> OPSequence:
    """``Q_0 .. Q_N`` from ``x Q_n = A_n Q_{n+1} + B_n Q_n + C_n Q_{n-1}``, ``Q_0 = I``."""
    if P.band != "tridiagonal":
        raise ValueError("need a tridiagonal sequence")
    d = P.d
    Q = [np.eye(d)[None]]
    prev = np.zeros((1, d, d))
    for n in range(N):
        C, B, A = P.blocks(n)
        Ainv = small_inverse(A, level=n, what=f"A_{n}")
        rhs = _shift(Q[n])
        rhs[:n + 1] -= np.einsum("ij,kjl->kil", B, Q[n])
        if C is not None:
            rhs[:n] -= np.einsum("ij,kjl->kil", C, prev)
        nxt = np.einsum("ij,kjl->kil", Ainv, rhs)
        prev = Q[n]
        Q.append(nxt)
    return OPSequence(Q)


def op_values(P: BlockSequence, N: int, x) -> np.ndarray:
    """``Q_0(x) .. Q_N(x)`` evaluated by running the recurrence at the points ``x``.

    Much better conditioned than summing monomial coefficients once the
    coefficients of ``Q_n`` grow large.  Shape ``(N + 1, len(x), d, d)``.
    """
    x = np.atleast_1d(np.asarray(x, float))
    d = P.d
    out = np.zeros((N + 1, x.size, d, d))
    out[0] = np.eye(d)
    for n in range(N):
        C, B, A = P.blocks(n)
        nxt = x[:, None, None] * out[n] - B @ out[n]
        if C is not None:
            nxt -= C @ out[n - 1]
        out[n + 1] = small_inverse(A, level=n, what=f"A_{n}") @ nxt
    return out


def monic_polynomials(diag, sub, N: int) -> List[np.ndarray]:
    """Monic ``P_0 .. P_N`` from ``x P_n = P_{n+1} + diag[n] P_n + sub[n] P_{n-1}``.

    ``sub[0]`` is ignored.
    """
    d = diag[0].shape[0]
    out = [np.eye(d)[None]]
    for n in range(N):
        nxt = _shift(out[n])
        nxt[:n + 1] -= np.einsum("ij,kjl->kil", diag[n], out[n])
        if n > 0:
            nxt[:n] -= np.einsum("ij,kjl->kil", sub[n], out[n - 1])
        out.append(nxt)
    return out


def inner_product(F, G, W: WeightSpec, rule: Optional[QuadratureRule] = None):
    """``int F(x) W(x) G(x)^T dx + F(0) M G(0)^T`` (the atom term only when present)."""
    F = np.asarray(F, float)
    G = np.asarray(G, float)
    need = (F.shape[0] - 1) + (G.shape[0] - 1) + W.degree
    if rule is None:
        rule = gauss_jacobi_rule(W.a, W.b, need // 2 + 1)
    elif rule.exactness_degree < need or (rule.a, rule.b) != (W.a, W.b):
        raise QuadratureError(
            f"rule exact to degree {rule.exactness_degree} for (a={rule.a}, b={rule.b}); "
            f"integrand needs degree {need} for (a={W.a}, b={W.b})")
    x = rule.nodes
    vals = polyval(F, x) @ polyval(W.matrix_part, x) @ np.swapaxes(polyval(G, x), 1, 2)
    out = rule.integrate(vals)
    if W.point_mass_at_zero is not None:
        out = out + F[0] @ W.point_mass_at_zero @ G[0].T
    return out


def gram_blocks(P: BlockSequence, W: WeightSpec, N: int) -> np.ndarray:
    """All ``(Q_n, Q_m)_W`` for ``n, m <= N``, shape ``(N + 1, N + 1, d, d)``.

    Integrates recurrence values at the nodes rather than monomial
    coefficients, which keeps off-diagonal blocks at rounding level relative
    to the norms.  Atoms at zero are included.
    """
    rule = gauss_jacobi_rule(W.a, W.b, (2 * N + W.degree) // 2 + 1)
    Q = op_values(P, N, rule.nodes)
    Z = polyval(W.matrix_part, rule.nodes)
    G = np.einsum("k,nkij,kjl,mkpl->nmip", rule.weights, Q, Z, Q)
    if W.point_mass_at_zero is not None:
        Q0 = op_values(P, N, [0.0])[:, 0]
        G = G + np.einsum("nij,jl,mpl->nmip", Q0, W.point_mass_at_zero, Q0)
    return G


def kmcg_entry(P: BlockSequence, W: WeightSpec, n: int, i: int, j: int,
               ops: Optional[OPSequence] = None):
    """Block ``(i, j)`` of ``P**n`` as ``(x^n Q_i, Q_j)_W (Q_j, Q_j)_W^{-1}``."""
    if ops is None or len(ops.polys) <= max(i, j):
        ops = polynomial_sequence(P, max(i, j))
    Qi, Qj = ops.polys[i], ops.polys[j]
    xnQi = np.concatenate([np.zeros((n,) + Qi.shape[1:]), Qi])
    num = inner_product(xnQi, Qj, W)
    norm = ops.norms[j] if ops.norms is not None else inner_product(Qj, Qj, W)
    return num @ small_inverse(norm, level=j, what=f"(Q_{j}, Q_{j})_W")


def invariant_measure(P: BlockSequence, W: WeightSpec, m: int) -> List[np.ndarray]:
    """Blocks ``pi_n = (Pi_n e)^T`` for ``n < m``, ``Pi_n = (Q_n, Q_n)_W^{-1}``.

    The norms are integrated from values of ``Q_n`` at the quadrature nodes
    (see :func:`op_values`); ``pi_n`` grows polynomially in ``n`` and the
    monomial route loses too many digits.
    """
    rule = gauss_jacobi_rule(W.a, W.b, (2 * (m - 1) + W.degree) // 2 + 1)
    Q = op_values(P, m - 1, rule.nodes)
    Z = polyval(W.matrix_part, rule.nodes)
    e = np.ones(P.d)
    out = []
    for n in range(m):
        H = rule.integrate(Q[n] @ Z @ np.swapaxes(Q[n], 1, 2))
        if W.point_mass_at_zero is not None:
            Q0 = op_values(P, n, [0.0])[n, 0]
            H = H + Q0 @ W.point_mass_at_zero @ Q0.T
        out.append(small_inverse(H, level=n, what=f"(Q_{n}, Q_{n})_W") @ e)
    return out


# --- measure transforms ---------------------------------------------------

def geronimus_transform(W: WeightSpec, alpha0, moments) -> WeightSpec:
    """``W(x)/x + M delta_0`` with ``M = alpha0^{-1} mu_0 - mu_{-1}``.

    ``moments`` is any object with ``mu0`` and ``mu_minus1`` attributes.
    """
    if not W.a > 0 or moments.mu_minus1 is None:
        raise ValueError(f"mu_-1 diverges: need density exponent a > 0, got {W.a}")
    inv = small_inverse(alpha0, what="alpha_0")
    M = inv @ moments.mu0 - moments.mu_minus1
    params = dict(W.params)
    return WeightSpec(W.a - 1, W.b, W.matrix_part, M, W.name, params)


def christoffel_transform(W: WeightSpec) -> WeightSpec:
    """``x W(x)``; an atom at zero is annihilated."""
    return WeightSpec(W.a + 1, W.b, W.matrix_part, None, W.name, dict(W.params))
