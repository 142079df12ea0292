"""Closed forms for the matrix-valued Jacobi example.

The transition matrix has ``d x d`` blocks built from six local
coefficients ``a_j(i, n)``, ``b_j(i, n)``; the same coefficients give a
stochastic UL factorization.  For ``d = 2`` the explicit matrices are kept
as a separate code path (the ``*_d2`` functions) so both can be
cross-checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import factorization as fz
from .blockmat import (RCOND_THRESHOLD, BlockSequence, SingularBlockError, batched_inverse,
                       small_inverse)
from .darboux import darboux_from_ul
from .spectral import WeightSpec, monic_polynomials, polyval

__all__ = [
    "JacobiParams",
    "LocalCoefficients",
    "MomentPair",
    "GeronimusMass",
    "RegionQuery",
    "OdeCoefficients",
    "local_coefficients",
    "sup_block",
    "block_coefficients",
    "block_coefficients_d2",
    "transition_sequence",
    "paper_factors",
    "paper_factors_d2",
    "paper_factor_sequences",
    "L_d2",
    "tau0_inverse",
    "paper_tau",
    "paper_tau_strategy",
    "paper_tau_lu",
    "paper_tau_lu_strategy",
    "alpha0_paper",
    "alpha0_paper_d2",
    "alpha0_from_moments",
    "alpha0_case1",
    "alpha0_case2a",
    "alpha0_case2b",
    "alpha0_case2c",
    "alpha0_case2d",
    "weight_matrix_poly",
    "weight_eval",
    "weight_spec",
    "moments_d2",
    "geronimus_mass",
    "case1_s21_bound",
    "case1_s11_bound",
    "case1_s11_psd_bound",
    "case2a_s12_bound",
    "analytic_inside",
    "region_membership",
    "region_scan",
    "RegionScan",
    "ode_coefficients",
    "ode_check",
]


@dataclass(frozen=True)
class JacobiParams:
    """Parameters ``alpha, beta > -1``, ``0 < k < beta + 1`` and block size ``d``."""

    alpha: float
    beta: float
    k: float
    d: int = 2
    checked: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if not self.checked:
            return
        if not self.alpha > -1:
            raise ValueError(f"alpha must exceed -1, got {self.alpha}")
        if not self.beta > -1:
            raise ValueError(f"beta must exceed -1, got {self.beta}")
        if not 0 < self.k < self.beta + 1:
            raise ValueError(f"k must satisfy 0 < k < beta + 1, got k={self.k}, beta={self.beta}")
        if not self.alpha + self.beta - self.k + 1 > 0:
            # only possible for alpha < 0; the phase-0 coefficients hit a pole or turn negative
            raise ValueError(f"need alpha + beta - k + 1 > 0, got {self.alpha + self.beta - self.k + 1}")

    @property
    def dtype(self):
        return np.result_type(self.alpha, self.beta, self.k, float)

    def extended(self) -> "JacobiParams":
        """Same parameters as ``np.longdouble``; every closed form then evaluates in extended precision."""
        ld = np.longdouble
        return JacobiParams(ld(self.alpha), ld(self.beta), ld(self.k), self.d, checked=self.checked)

    def shift_alpha(self, delta: float) -> "JacobiParams":
        """Same parameters with ``alpha + delta``, without range checks."""
        return JacobiParams(self.alpha + delta, self.beta, self.k, self.d, checked=False)

    def require_d2(self):
        if self.d != 2:
            raise ValueError("this closed form is only available for d = 2")

    def require_urn(self):
        ints = all(float(v).is_integer() for v in (self.alpha, self.beta, self.k))
        if not (ints and self.alpha >= 0 and 1 <= self.k <= self.beta and self.d == 2):
            raise ValueError("urn models need integers alpha >= 0, 1 <= k <= beta, and d = 2")


@dataclass(frozen=True)
class LocalCoefficients:
    a1: float
    a2: float
    a3: float
    b1: float
    b2: float
    b3: float


def local_coefficients(p: JacobiParams, i: int, n: int) -> LocalCoefficients:
    """The six local coefficients at phase ``i`` and level ``n``."""
    if not 0 <= i <= p.d - 1 or n < 0:
        raise ValueError(f"need 0 <= i <= {p.d - 1} and n >= 0, got i={i}, n={n}")
    t = p.dtype.type
    al, be, k, d = t(p.alpha), t(p.beta), t(p.k), p.d
    a1 = (n + k) * (n + be + d) / ((2 * n + al + be + d + i) * (n + k + d - i - 1))
    a2 = (d - i - 1) * (be - k + i + 1) / ((n + al + be - k + 2 * i + 1) * (n + k + d - i - 1))
    a3 = ((n + al + i) * (n + al + be - k + d + i)
          / ((2 * n + al + be + d + i) * (n + al + be - k + 2 * i + 1)))
    # b1 carries a factor n; at n = 0 its denominator may vanish too (al + be + d + i = 1)
    b1 = 0.0 * k if n == 0 else n * (n + k + d - 1) / ((2 * n + al + be + d + i - 1) * (n + k + d - i - 1))
    if i == 0:
        # the factor (n+al+be-k) cancels; keep b3 finite where it vanishes
        b2 = 0.0
        b3 = 1.0 + 0.0 * k if n == 0 else (n + al + be + d - 1) / (2 * n + al + be + d - 1)
    else:
        b2 = i * (k + d - i - 1) / ((n + al + be - k + 2 * i) * (n + k + d - i - 1))
        b3 = ((n + al + be + d + i - 1) * (n + al + be - k + i)
              / ((2 * n + al + be + d + i - 1) * (n + al + be - k + 2 * i)))
    return LocalCoefficients(a1, a2, a3, b1, b2, b3)


def sup_block(p: JacobiParams, n: int) -> np.ndarray:
    """``A_n`` alone.

    It needs only ``a1``, ``b2`` and ``b3``, so it stays finite for the
    alpha-shifted parameters used by the normalizations, whose other
    coefficients can have a pole at level 0.
    """
    d = p.d
    with np.errstate(divide="ignore", invalid="ignore"):
        lc = [local_coefficients(p, i, n) for i in range(d)]
        up = [local_coefficients(p, i, n + 1) for i in range(d)]
    A = np.zeros((d, d), p.dtype)
    for i in range(d):
        A[i, i] = lc[i].a1 * up[i].b3
        if i + 1 < d:
            A[i + 1, i] = lc[i + 1].a1 * up[i + 1].b2
    return A


def block_coefficients(p: JacobiParams, n: int):
    """``(A_n, B_n, C_n)`` for general ``d``; ``C_0`` is ``None``."""
    d = p.d
    lc = [local_coefficients(p, i, n) for i in range(d)]
    up = [local_coefficients(p, i, n + 1) for i in range(d)]
    dt = p.dtype
    A = np.zeros((d, d), dt)
    B = np.zeros((d, d), dt)
    C = np.zeros((d, d), dt)
    for i in range(d):
        A[i, i] = lc[i].a1 * up[i].b3
        diag = lc[i].a1 * up[i].b1 + lc[i].a3 * lc[i].b3
        if i + 1 < d:
            diag += lc[i].a2 * lc[i + 1].b2
            A[i + 1, i] = lc[i + 1].a1 * up[i + 1].b2
            B[i + 1, i] = lc[i + 1].a3 * lc[i + 1].b2
            B[i, i + 1] = lc[i].a2 * lc[i + 1].b3
            C[i, i + 1] = lc[i].a2 * lc[i + 1].b1
        B[i, i] = diag
        C[i, i] = lc[i].a3 * lc[i].b1
    return A, B, (None if n == 0 else C)


def block_coefficients_d2(p: JacobiParams, n: int):
    """Explicit ``d = 2`` matrices ``(A_n, B_n, C_n)``; ``C_0`` is ``None``."""
    p.require_d2()
    a, b, k = p.alpha, p.beta, p.k
    A = np.array([
        [(b + n + 2) * (k + n) * (a + b + n + 2) / ((k + n + 1) * (a + b + 2 * n + 2) * (a + b + 2 * n + 3)),
         0.0],
        [k * (b + n + 2) / ((a + b - k + n + 3) * (a + b + 2 * n + 3) * (k + n + 1)),
         (b + n + 2) * (a + b + n + 3) * (a + b - k + n + 2)
         / ((a + b + 2 * n + 3) * (a + b + 2 * n + 4) * (a + b - k + n + 3))],
    ])
    B11 = ((n + k) * (n + b + 2) * (n + 1) / ((a + b + 2 * n + 2) * (n + k + 1) * (a + b + 2 * n + 3))
           + (n + a) * (a + b - k + n + 2) * (n + a + b + 1)
           / ((a + b + 2 * n + 2) * (a + 1 + n - k + b) * (a + b + 2 * n + 1))
           + k * (b - k + 1) / ((a + 1 + n - k + b) * (n + k + 1) * (a + b - k + n + 2) * (n + k)))
    B22 = ((n + b + 2) * (n + 1) * (n + k + 2) / ((a + b + 2 * n + 3) * (a + b + 2 * n + 4) * (n + k + 1))
           + (a + n + 1) * (a + b + n + 2) * (a + 1 + n - k + b)
           / ((a + b + 2 * n + 3) * (a + b + 2 * n + 2) * (a + b - k + n + 2)))
    B = np.array([
        [B11, (b - k + 1) * (a + b + n + 2) / ((k + n + 1) * (a + b + 2 * n + 2) * (a + b - k + n + 2))],
        [(a + n + 1) * k / ((k + n) * (a + b - k + n + 2) * (a + b + 2 * n + 3)), B22],
    ])
    if n == 0:
        return A, B, None
    C = np.array([
        [n * (a + n) * (a + b - k + n + 2) / ((a + b - k + n + 1) * (a + b + 2 * n + 1) * (a + b + 2 * n + 2)),
         n * (b - k + 1) / ((a + b - k + n + 1) * (a + b + 2 * n + 2) * (k + n))],
        [0.0, n * (a + n + 1) * (k + n + 1) / ((k + n) * (a + b + 2 * n + 2) * (a + b + 2 * n + 3))],
    ])
    return A, B, C


def transition_sequence(p: JacobiParams, max_level: Optional[int] = None) -> BlockSequence:
    """The block tridiagonal transition matrix ``P`` as a lazy sequence."""

    def gen(n):
        A, B, C = block_coefficients(p, n)
        return (C, B, A)

    return BlockSequence(p.d, "tridiagonal", gen, max_level=max_level)


def paper_factors(p: JacobiParams, n: int):
    """``(X_n, Y_n, R_n, S_n)`` of the closed-form stochastic UL factorization (any ``d``)."""
    d = p.d
    lc = [local_coefficients(p, i, n) for i in range(d)]
    X = np.diag([c.a1 for c in lc])
    Y = np.diag([c.a3 for c in lc])
    R = np.diag([c.b1 for c in lc])
    S = np.diag([c.b3 for c in lc])
    for i in range(d - 1):
        Y[i, i + 1] = lc[i].a2
        S[i + 1, i] = lc[i + 1].b2
    return X, Y, R, S


def paper_factors_d2(p: JacobiParams, n: int):
    """Explicit ``d = 2`` ``(X_n, Y_n, R_n, S_n)``."""
    p.require_d2()
    a, b, k = p.alpha, p.beta, p.k
    X = np.array([[(n + k) * (n + b + 2) / ((2 * n + a + b + 2) * (n + k + 1)), 0.0],
                  [0.0, (n + b + 2) / (2 * n + a + b + 3)]])
    Y = np.array([[(n + a) * (n + a + b - k + 2) / ((2 * n + a + b + 2) * (n + a + 1 - k + b)),
                   (b - k + 1) / ((n + a + 1 - k + b) * (n + k + 1))],
                  [0.0, (n + a + 1) / (2 * n + a + b + 3)]])
    S = np.array([[(n + a + b + 1) / (2 * n + a + b + 1), 0.0],
                  [k / ((n + a + b - k + 2) * (n + k)),
                   (n + a + b + 2) * (n + a + 1 - k + b) / ((2 * n + a + b + 2) * (n + a + b - k + 2))]])
    R = np.array([[n / (2 * n + a + b + 1), 0.0],
                  [0.0, n * (n + k + 1) / ((2 * n + a + b + 2) * (n + k))]])
    return X, Y, R, S


def paper_factor_sequences(p: JacobiParams, N: Optional[int] = None):
    """``(P_U, P_L)`` from the closed-form blocks (``P_L`` gets one extra level)."""

    def upper(n):
        X, Y, _, _ = paper_factors(p, n)
        return (Y, X)

    def lower(n):
        _, _, R, S = paper_factors(p, n)
        return (S, None if n == 0 else R)

    return (BlockSequence(p.d, "upper", upper, max_level=N),
            BlockSequence(p.d, "lower", lower, max_level=None if N is None else N + 1))


def _poch(a, n: int):
    """Rising factorial ``(a)_n`` for integer ``n >= 0``, in the type of ``a``."""
    out = a * 0 + 1
    for j in range(n):
        out = out * (a + j)
    return out


def L_d2(p: JacobiParams, n: int) -> np.ndarray:
    """Closed form of ``L_n = (A_0 ... A_{n-1})^{-1}`` for ``d = 2``."""
    p.require_d2()
    a, b, k = p.alpha, p.beta, p.k
    pb = _poch(b + 2, n)
    return np.array([
        [(n + k) * _poch(a + b + n + 2, n) / (k * pb), 0.0],
        [-n * _poch(a + b + n + 3, n) / ((a + b - k + 2) * pb),
         (a + b + n - k + 2) * _poch(a + b + n + 3, n) / ((a + b - k + 2) * pb)],
    ])


def tau0_inverse(p: JacobiParams) -> np.ndarray:
    """Stochastic lower-bidiagonal ``tau_0^{-1}`` (equal to ``S_0``)."""
    d = p.d
    s = p.alpha + p.beta - p.k
    T = np.zeros((d, d), p.dtype)
    for i in range(d):
        # i = 0 entry is (s)/(s) = 1 even when s = 0
        T[i, i] = 1.0 if i == 0 else (s + i) / (s + 2 * i)
        if i + 1 < d:
            T[i + 1, i] = (i + 1) / (s + 2 * i + 2)
    return T


def _Linv_product(p: JacobiParams, n: int) -> np.ndarray:
    """``L_n^{-1} = A_0 ... A_{n-1}``."""
    out = np.eye(p.d, dtype=p.dtype)
    for m in range(n):
        out = out @ sup_block(p, m)
    return out


def paper_tau(p: JacobiParams, n: int) -> np.ndarray:
    """``tau_n = tau_0 (L_n^{-1} at alpha - 1)``."""
    tau0 = small_inverse(tau0_inverse(p), what="tau_0^{-1}")
    return tau0 @ _Linv_product(p.shift_alpha(-1), n)


def paper_tau_lu(p: JacobiParams, n: int) -> np.ndarray:
    """``tau~_n = tau~_0 (L_n^{-1} at alpha + 1)`` with ``tau~_0 = tau_0^{-1}`` at ``alpha + 1``."""
    q = p.shift_alpha(1)
    return tau0_inverse(q) @ _Linv_product(q, n)


def _conjugated(p: JacobiParams, start: np.ndarray, shifted: JacobiParams):
    """Generator of ``L_n M (L_n^{-1} at shifted)``, run as
    ``M_{n+1} = A_n^{-1} M_n A_n(shifted)`` so no factor of ``L_n`` is formed."""
    cache = [start]

    def gen(n):
        while len(cache) <= n:
            m = len(cache) - 1
            A = sup_block(p, m)
            As = sup_block(shifted, m)
            cache.append(small_inverse(A, level=m, what=f"A_{m}") @ cache[m] @ As)
        return cache[n]

    return gen


def paper_tau_strategy(p: JacobiParams) -> fz.TauStrategy:
    tau0 = small_inverse(tau0_inverse(p), what="tau_0^{-1}")
    return fz.TauStrategy("jacobi_paper", generator=_conjugated(p, tau0, p.shift_alpha(-1)))


def paper_tau_lu_strategy(p: JacobiParams) -> fz.TauStrategy:
    q = p.shift_alpha(1)
    return fz.TauStrategy("jacobi_paper", generator=_conjugated(p, tau0_inverse(q), q))


# --- alpha_0 choices ------------------------------------------------------

def alpha0_paper(p: JacobiParams) -> np.ndarray:
    """``alpha_0 = B_0 - D_0`` reproducing the closed-form factors."""
    d, al, be, k = p.d, p.alpha, p.beta, p.k
    _, B0, _ = block_coefficients(p, 0)
    D0 = np.diag([k * (be + d) * (k + d) / (_poch(al + be + d + i, 2) * _poch(k + d - i - 1, 2))
                  for i in range(d)])
    return B0 - D0


def alpha0_paper_d2(p: JacobiParams) -> np.ndarray:
    p.require_d2()
    a, b, k = p.alpha, p.beta, p.k
    return np.array([
        [(b - k + 1) / ((1 + a + b - k) * (1 + k) * (2 + a + b - k)) + a * (2 + a + b - k) / ((2 + a + b) * (1 + a + b - k)),
         (b - k + 1) / ((1 + k) * (2 + a + b - k))],
        [(1 + a) / ((3 + a + b) * (2 + a + b - k)),
         (1 + a) * (1 + a + b - k) / ((3 + a + b) * (2 + a + b - k))],
    ])


def alpha0_from_moments(p: JacobiParams) -> np.ndarray:
    """``mu_0 mu_{-1}^{-1}``: the seed that makes the Geronimus atom vanish."""
    m = moments_d2(p)
    if m.mu_minus1 is None:
        raise ValueError("mu_-1 diverges for alpha <= 0")
    return m.mu0 @ small_inverse(m.mu_minus1, what="mu_-1")


def _mat2(m11, m12, m21, m22):
    """2x2 matrices from broadcastable entries; scalars give a plain 2x2 array."""
    rows = np.broadcast_arrays(m11, m12, m21, m22)
    return np.stack([np.stack(rows[:2], -1), np.stack(rows[2:], -1)], -2)


def alpha0_case1(p: JacobiParams, s21, s11) -> np.ndarray:
    """Seed family with a symmetric Geronimus mass."""
    p.require_d2()
    a, b, k = p.alpha, p.beta, p.k
    c = (a + b + 3) * (b - k + 1) / ((k + 1) * (a + 1))
    return _mat2(c / (a + b - k + 1) * s11, c * s21, s21, (a + b - k + 1) * s21)


def alpha0_case2a(p: JacobiParams, s11, s12) -> np.ndarray:
    """Seed family giving diagonal ``X_n`` (normalized so ``s11 = s12 = 1`` is the paper seed)."""
    m = alpha0_paper_d2(p)
    return _mat2(m[0, 0] * s11, m[0, 1] * s12, m[1, 0], m[1, 1])


def alpha0_case2b(p: JacobiParams, s11, s21) -> np.ndarray:
    """Seed family giving diagonal ``R_n``: second column of the paper seed."""
    m = alpha0_paper_d2(p)
    return _mat2(s11, m[0, 1], s21, m[1, 1])


def alpha0_case2c(p: JacobiParams, s21, s22) -> np.ndarray:
    """Singular seed family giving diagonal ``Y_n``."""
    p.require_d2()
    return _mat2(0.0, 0.0, s21, s22)


def alpha0_case2d(p: JacobiParams, s12, s22) -> np.ndarray:
    """Singular seed family giving diagonal ``S_n``."""
    p.require_d2()
    return _mat2(0.0, s12, 0.0, s22)


# --- weight and moments ---------------------------------------------------

def _gbinom(top: float, m: int) -> float:
    """Binomial coefficient with real upper and integer lower argument."""
    if m < 0:
        return 0.0
    out = 1.0
    for j in range(m):
        out *= (top - j) / (j + 1)
    return out


def _V(p: JacobiParams) -> np.ndarray:
    d, al, be, k = p.d, p.alpha, p.beta, p.k
    V = np.zeros((d, d))
    for j in range(d):
        for i in range(j + 1):
            V[i, j] = ((-1) ** i * _poch(-j, i) / _poch(1 - d, i)
                       * _poch(al + be - k + j + 1, i) / _poch(be - k + 1, i))
    return V


def weight_matrix_poly(p: JacobiParams) -> np.ndarray:
    """Coefficients of ``V^T Z(x) V`` (the polynomial part of the weight)."""
    d, be, k = p.d, p.beta, p.k
    deg = 2 * (d - 1)
    Z = np.zeros((deg + 1, d, d))
    P = np.polynomial.polynomial
    for i in range(d):
        for j in range(d):
            acc = np.zeros(deg + 1)
            for r in range(d):
                c = (_gbinom(r, i) * _gbinom(r, j) * _gbinom(d + k - r - 2, d - r - 1)
                     * _gbinom(be - k + r, r))
                if c == 0.0:
                    continue
                term = P.polymul(P.polypow([1.0, -1.0], i + j), P.polypow([0.0, 1.0], d - r - 1))
                acc[:len(term)] += c * term
            Z[:, i, j] = acc
    V = _V(p)
    return np.einsum("ji,kjl,lm->kim", V, Z, V)


def weight_eval(p: JacobiParams, x) -> np.ndarray:
    """``W(x) = x**alpha (1-x)**beta V^T Z(x) V`` for ``0 < x < 1``."""
    xs = np.atleast_1d(np.asarray(x, float))
    if np.any((xs <= 0) | (xs >= 1)):
        raise ValueError("weight is evaluated on the open interval (0, 1)")
    vals = (xs ** p.alpha * (1 - xs) ** p.beta)[:, None, None] * polyval(weight_matrix_poly(p), xs)
    return vals[0] if np.ndim(x) == 0 else vals


def weight_spec(p: JacobiParams) -> WeightSpec:
    return WeightSpec(p.alpha, p.beta, weight_matrix_poly(p), None, "jacobi",
                      {"alpha": p.alpha, "beta": p.beta, "k": p.k, "d": p.d})


@dataclass(frozen=True)
class MomentPair:
    mu0: np.ndarray
    mu_minus1: Optional[np.ndarray]  # None when alpha <= 0 (the integral diverges)


def moments_d2(p: JacobiParams) -> MomentPair:
    """Closed-form ``mu_0 = int W`` and ``mu_{-1} = int W / x`` for ``d = 2``."""
    p.require_d2()
    a, b, k = p.alpha, p.beta, p.k
    g0 = math.exp(math.lgamma(a + 1) + math.lgamma(b + 2) - math.lgamma(a + b + 3)) * (a + b - k + 2)
    mu0 = g0 * np.diag([1.0, (a + 1) * (k + 1) / ((a + b + 3) * (b - k + 1))])
    if not a > 0:
        return MomentPair(mu0, None)
    g1 = math.exp(math.lgamma(a) + math.lgamma(b + 2) - math.lgamma(a + b + 2))
    m22 = ((a + 1) * (k + 1) * (a + b - k + 2) - k * (b - k + 1)) / ((a + b + 2) * (b - k + 1))
    mu1 = g1 * np.array([[a + b - k + 1, -1.0], [-1.0, m22]])
    return MomentPair(mu0, mu1)


@dataclass(frozen=True)
class GeronimusMass:
    M: np.ndarray
    alpha0_used: np.ndarray
    symmetric: bool
    psd: bool


def geronimus_mass(alpha0, moments: MomentPair, tol: float = 1e-12) -> GeronimusMass:
    """``M = alpha_0^{-1} mu_0 - mu_{-1}`` with symmetry / PSD flags.

    Raises
    ------
    SingularBlockError
        For a singular ``alpha_0`` (degenerate measure).
    """
    if moments.mu_minus1 is None:
        raise ValueError("mu_-1 diverges for alpha <= 0; no Geronimus mass")
    alpha0 = np.asarray(alpha0, float)
    M = small_inverse(alpha0, what="alpha_0") @ moments.mu0 - moments.mu_minus1
    scale = max(1.0, float(np.max(np.abs(M))))
    symmetric = bool(np.max(np.abs(M - M.T)) <= tol * scale)
    psd = bool(symmetric and np.min(np.linalg.eigvalsh((M + M.T) / 2)) >= -tol * scale)
    return GeronimusMass(M, alpha0, symmetric, psd)


# --- parameter regions ----------------------------------------------------

def case1_s21_bound(p: JacobiParams) -> float:
    a, b, k = p.alpha, p.beta, p.k
    return (a + 1) / ((a + b + 3) * (a + b - k + 2))


def case1_s11_bound(p: JacobiParams, s21):
    """Upper bound on ``s11`` for nonnegative factors in case 1."""
    a, b, k = p.alpha, p.beta, p.k
    c1 = (a + 1) ** 2 * (k + 1) / (k * (b - k + 1) * (a + b + 3))
    c2 = (a + 1) * (k + 1) / (k * (a + b - k + 1) * (a + b + 3))
    return s21 * (s21 - c1) / (s21 - c2)


def case1_s11_psd_bound(p: JacobiParams, s21):
    """Upper bound on ``s11`` for a positive semidefinite Geronimus mass in case 1."""
    a, b, k = p.alpha, p.beta, p.k
    return s21 + _poch(a, 2) * (k + 1) * (a + b - k + 2) / ((b - k + 1) * _poch(a + b + 2, 2))


def case2a_s12_bound(p: JacobiParams, s11):
    a, b, k = p.alpha, p.beta, p.k
    factor = 1 + a * (k + 1) * (a + b - k + 2) ** 2 / ((a + b + 2) * (b - k + 1))
    return np.minimum(factor * s11, 1.0)


def analytic_inside(p: JacobiParams, case: str, s_a, s_b):
    """Closed-form region test; ``(s_a, s_b)`` is ``(s21, s11)`` or ``(s11, s12)``."""
    s_a = np.asarray(s_a, float)
    s_b = np.asarray(s_b, float)
    if case == "case1":
        return ((0 < s_a) & (s_a <= case1_s21_bound(p))
                & (s_a < s_b) & (s_b <= case1_s11_bound(p, s_a)))
    if case == "case2a":
        return (0 < s_a) & (s_a <= 1) & (s_a <= s_b) & (s_b <= case2a_s12_bound(p, s_a))
    raise ValueError(f"no closed-form region for {case!r}")


_SEEDS = {"case1": alpha0_case1, "case2a": alpha0_case2a, "case2b": alpha0_case2b,
          "case2c": alpha0_case2c, "case2d": alpha0_case2d}


@dataclass(frozen=True)
class RegionQuery:
    case: str
    s_a: float
    s_b: float
    n_check: int = 50

    def __post_init__(self):
        if self.case not in _SEEDS:
            raise ValueError(f"unknown case {self.case!r}")
        if self.n_check < 1:
            raise ValueError("n_check must be >= 1")


def _seed_stack(p, case, s_a, s_b):
    s_a, s_b = np.broadcast_arrays(np.asarray(s_a, float), np.asarray(s_b, float))
    return _SEEDS[case](p, s_a, s_b)


def _stochastic_ok(p, case, s_a, s_b, n_check, tol=1e-12, monic=None):
    """Batched factorization + nonnegativity scan for levels ``0..n_check``."""
    seeds = _seed_stack(p, case, s_a, s_b)
    if monic is None:
        monic = fz.monic_reduce(transition_sequence(p), n_check + 2)
    N = n_check + 1
    out = fz.ul_factor_arrays(monic, seeds, N)
    flat = lambda a: a.reshape(a.shape[:-3] + (-1,))
    mins = np.minimum.reduce([flat(out["X"]).min(-1), flat(out["Y"]).min(-1),
                              flat(out["S"]).min(-1), flat(out["R"]).min(-1)])
    finite = np.all(np.isfinite(flat(out["X"])), -1) & np.all(np.isfinite(flat(out["S"])), -1)
    ok = (out["fail_level"] < 0) & finite & (mins >= -tol)
    return ok, out["fail_level"], mins


def region_membership(p: JacobiParams, q: RegionQuery) -> dict:
    """Analytic vs computed membership of one seed point."""
    p.require_d2()
    ok, fail, mins = _stochastic_ok(p, q.case, np.array([q.s_a]), np.array([q.s_b]), q.n_check)
    res = {"stochastic_factorization": bool(ok[0]), "M_psd": "n/a", "analytic_inside": "n/a"}
    if fail[0] >= 0:
        res["reason"] = f"singular recursion at level {int(fail[0])}"
    elif not ok[0]:
        res["reason"] = f"negative factor entry {mins[0]:.3e}"
    if q.case in ("case1", "case2a"):
        res["analytic_inside"] = bool(analytic_inside(p, q.case, q.s_a, q.s_b))
    if q.case == "case1":
        try:
            res["M_psd"] = geronimus_mass(_SEEDS["case1"](p, q.s_a, q.s_b), moments_d2(p)).psd
        except (SingularBlockError, ValueError):
            res["M_psd"] = False
    return res


@dataclass(frozen=True)
class RegionScan:
    """Grid scan result; arrays are indexed ``[i_a, i_b]``."""

    case: str
    s_a: np.ndarray
    s_b: np.ndarray
    analytic: Optional[np.ndarray]
    stochastic: np.ndarray
    M_psd: Optional[np.ndarray]
    n_check: int

    def exempt(self) -> np.ndarray:
        """Points within one grid cell of the analytic boundary."""
        if self.analytic is None:
            return np.zeros_like(self.stochastic)
        a = self.analytic
        ex = np.zeros_like(a)
        pad = np.pad(a, 1, mode="edge")
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ex |= pad[1 + di:1 + di + a.shape[0], 1 + dj:1 + dj + a.shape[1]] != a
        return ex

    def agreement(self) -> float:
        """Fraction of non-exempt points where scan and closed form agree."""
        if self.analytic is None:
            return float("nan")
        keep = ~self.exempt()
        if not keep.any():
            return 1.0
        return float(np.mean(self.analytic[keep] == self.stochastic[keep]))

    def rows(self):
        """CSV rows ``s_a, s_b, analytic_inside, stochastic_ok, M_psd`` in row-major order."""
        fmt = lambda v: "n/a" if v is None else ("1" if v else "0")
        for i, sa in enumerate(self.s_a):
            for j, sb in enumerate(self.s_b):
                yield (sa, sb,
                       fmt(None if self.analytic is None else self.analytic[i, j]),
                       fmt(self.stochastic[i, j]),
                       fmt(None if self.M_psd is None else self.M_psd[i, j]))


DEFAULT_RANGES = {"case1": ((0.0, 0.1), (0.0, 1.5)), "case2a": ((0.0, 1.2), (0.0, 1.2)),
                  "case2b": ((0.0, 1.0), (0.0, 0.5)), "case2c": ((0.0, 0.5), (0.0, 1.0)),
                  "case2d": ((0.0, 0.5), (0.0, 1.0))}


def region_scan(p: JacobiParams, case: str, grid: int = 200, ranges=None,
                n_check: int = 50, chunk: int = 8192) -> RegionScan:
    """Scan a ``grid x grid`` cell-centred lattice of seed parameters.

    ``ranges`` is ``((lo_a, hi_a), (lo_b, hi_b))`` for ``(s21, s11)`` in case 1
    and ``(s11, s12)`` in case 2a (first/second free entries otherwise).
    """
    p.require_d2()
    if case not in _SEEDS:
        raise ValueError(f"unknown case {case!r}")
    (la, ha), (lb, hb) = ranges or DEFAULT_RANGES[case]
    s_a = la + (np.arange(grid) + 0.5) * (ha - la) / grid
    s_b = lb + (np.arange(grid) + 0.5) * (hb - lb) / grid
    SA, SB = np.meshgrid(s_a, s_b, indexing="ij")
    monic = fz.monic_reduce(transition_sequence(p), n_check + 2)
    ok = np.zeros(SA.size, dtype=bool)
    fa, fb = SA.ravel(), SB.ravel()
    with np.errstate(all="ignore"):
        for start in range(0, SA.size, chunk):
            sl = slice(start, start + chunk)
            ok[sl] = _stochastic_ok(p, case, fa[sl], fb[sl], n_check, monic=monic)[0]
    ok = ok.reshape(SA.shape)
    analytic = analytic_inside(p, case, SA, SB) if case in ("case1", "case2a") else None
    psd = None
    if case == "case1":
        psd = _case1_psd_grid(p, SA, SB)
    return RegionScan(case, s_a, s_b, analytic, ok, psd, n_check)


def _case1_psd_grid(p, SA, SB, tol=1e-12):
    """Vectorized ``geronimus_mass(...).psd`` over a grid (singular seeds count as not PSD)."""
    mom = moments_d2(p)
    seeds = _seed_stack(p, "case1", SA, SB)
    inv, rc = batched_inverse(seeds)
    M = inv @ mom.mu0 - mom.mu_minus1
    scale = np.maximum(1.0, np.abs(M).max(axis=(-2, -1)))
    sym = np.abs(M - np.swapaxes(M, -1, -2)).max(axis=(-2, -1)) <= tol * scale
    lam = np.linalg.eigvalsh((M + np.swapaxes(M, -1, -2)) / 2)[..., 0]
    return (rc >= RCOND_THRESHOLD) & sym & (lam >= -tol * scale)


# --- second-order differential equation -----------------------------------

@dataclass(frozen=True)
class OdeCoefficients:
    """``F2``, ``F1`` as coefficient arrays (ascending powers), ``F0`` constant."""

    F2: np.ndarray
    F1: np.ndarray
    F0: np.ndarray

    def Lambda(self, n: int) -> np.ndarray:
        """Eigenvalue from the balance of the ``x**n`` coefficient of a monic solution."""
        return n * (n - 1) * self.F2[2] + n * self.F1[1] + self.F0


def ode_coefficients(p: JacobiParams) -> OdeCoefficients:
    """Coefficients of the operator satisfied by the Darboux-transformed polynomials."""
    p.require_d2()
    a, b, k = p.alpha, p.beta, p.k
    s = a + b - k + 2
    u, v = (b - k + 1) / s, (a + 1) / s
    F2 = np.zeros((3, 2, 2))
    F2[2] = [[0, 0], [1, -1]]
    F2[1] = [[u, -u], [-v, v]]
    F1 = np.zeros((2, 2, 2))
    F1[1] = [[0, 0], [k + 1, -(a + b + 3)]]
    F1[0] = [[-u, -u * (a + b - k + 1)], [v, v * (a + b - k + 1)]]
    F0 = np.array([[(k + 1) * (a + b - k + 1), 0.0], [-(k + 1), 0.0]])
    return OdeCoefficients(F2, F1, F0)


def _deriv(P):
    return np.array([j * P[j] for j in range(1, P.shape[0])]) if P.shape[0] > 1 else np.zeros((1,) + P.shape[1:])


def darboux_monic_polynomials(p: JacobiParams, alpha0, N: int):
    """Monic polynomials of ``beta alpha``, the monic form of the Darboux transform."""
    monic = fz.monic_reduce(transition_sequence(p), N + 2)
    co = fz.ul_coefficients(monic, alpha0, N)
    diag = [co.alpha[n] + co.beta[n] for n in range(N + 1)]
    sub = [None] + [co.beta[n] @ co.alpha[n - 1] for n in range(1, N + 1)]
    return monic_polynomials(diag, sub, N)


def ode_check(p: JacobiParams, s11: float, n: int, sample_xs: Sequence[float],
              s12: float = 1.0):
    """Max residual of ``P'' F2 + P' F1 + P F0 - Lambda_n P`` over ``sample_xs``.

    Only the case-2a seed with ``s12 = 1`` is supported.  Returns
    ``(residual, Lambda_n)``.
    """
    if s12 != 1.0:
        raise ValueError("the differential equation is only claimed for case 2a with s12 = 1")
    co = ode_coefficients(p)
    polys = darboux_monic_polynomials(p, alpha0_case2a(p, s11, 1.0), max(n, 1))
    Pn = polys[n]
    d1 = _deriv(Pn)
    d2 = _deriv(d1)
    xs = np.asarray(sample_xs, float)
    Lam = co.Lambda(n)
    lhs = (polyval(d2, xs) @ polyval(co.F2, xs) + polyval(d1, xs) @ polyval(co.F1, xs)
           + polyval(Pn, xs) @ co.F0)
    rhs = Lam @ polyval(Pn, xs)
    return float(np.max(np.abs(lhs - rhs))), Lam
