"""Stochastic UL and LU block factorization of a block tridiagonal matrix.

The pipeline for ``P = P_U P_L`` is

1. :func:`monic_reduce` -- ``P = L J L^{-1}`` with identity super-diagonal in ``J``;
2. :func:`ul_coefficients` -- split ``J = alpha beta`` from a seed ``alpha_0``;
3. :func:`solve_tau` -- a block-diagonal normalization making row sums one;
4. :func:`assemble_ul` -- read off ``X_n, Y_n, S_n, R_n``.

The LU route (``P = P~_L P~_U``) has no seed and uses :func:`lu_coefficients`
and :func:`assemble_lu`.  Nonnegativity of the factors is never enforced
here; validate with :func:`qbdfactor.blockmat.validate_stochastic`.

Everything is computed in the coordinates of ``P`` (conjugated back by
``L_n``), because ``L_n`` grows geometrically and the monic-coordinate
quantities lose all relative accuracy after a few dozen levels.  The
recursion kernels accept a stack of seeds with shape ``(..., d, d)`` so
parameter scans can run many factorizations at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .blockmat import (
    RCOND_THRESHOLD,
    BlockSequence,
    SingularBlockError,
    as_real,
    batched_inverse,
    small_inverse,
    truncate_dense,
)

__all__ = [
    "MonicData",
    "ULCoefficients",
    "LUCoefficients",
    "TauStrategy",
    "monic_reduce",
    "ul_coefficients",
    "lu_coefficients",
    "solve_tau",
    "assemble_ul",
    "assemble_lu",
    "factorization_residual",
    "factor_ul",
    "factor_lu",
    "ul_factor_arrays",
]

# a consistency check for user-supplied tau, not a precision target: the UL
# recursion itself amplifies rounding polynomially in n for some seeds
ROW_SUM_TOL = 1e-8


@dataclass(frozen=True)
class MonicData:
    """Monic reduction of a block tridiagonal matrix to ``N`` levels.

    ``L`` and ``Linv`` hold levels ``0..N``; ``Bhat`` levels ``0..N-1``;
    ``Chat`` levels ``0..N-1`` with ``Chat[0]`` zero (absent).
    """

    d: int
    N: int
    L: np.ndarray
    Linv: np.ndarray
    Bhat: np.ndarray
    Chat: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def jacobi_dense(self, levels: int) -> np.ndarray:
        """Dense section of the monic matrix ``J``."""
        d = self.d
        J = np.zeros((levels * d, levels * d))
        for n in range(levels):
            J[n * d:(n + 1) * d, n * d:(n + 1) * d] = self.Bhat[n]
            if n + 1 < levels:
                J[n * d:(n + 1) * d, (n + 1) * d:(n + 2) * d] = np.eye(d)
            if n > 0:
                J[n * d:(n + 1) * d, (n - 1) * d:n * d] = self.Chat[n]
        return J


@dataclass(frozen=True)
class ULCoefficients:
    """UL split for levels ``n <= N``.

    ``alpha_bal[n] = L_n alpha_n L_n^{-1}`` and ``beta_bal[n] = L_{n-1} beta_n L_{n-1}^{-1}``
    are the same coefficients in the coordinates of ``P`` itself; they stay
    O(1) while ``L_n`` grows geometrically, so all assembly uses them.
    ``alpha`` / ``beta`` give the monic-coordinate values (``beta[0]`` zero).
    """

    alpha0: np.ndarray
    alpha_bal: np.ndarray
    beta_bal: np.ndarray
    monic: "MonicData" = field(repr=False, compare=False)

    @property
    def N(self):
        return self.alpha_bal.shape[0] - 1

    @property
    def alpha(self):
        n = self.N + 1
        return self.monic.Linv[:n] @ self.alpha_bal @ self.monic.L[:n]

    @property
    def beta(self):
        out = np.zeros_like(self.beta_bal)
        n = self.N
        out[1:] = self.monic.Linv[:n] @ self.beta_bal[1:] @ self.monic.L[:n]
        return out


@dataclass(frozen=True)
class LUCoefficients:
    """LU split for levels ``n < N``, stored in the coordinates of ``P``.

    ``alphat_bal[n] = L_n alpha~_n L_n^{-1}``, ``betat_bal[n] = L_n beta~_n L_n^{-1}``.
    """

    alphat_bal: np.ndarray
    betat_bal: np.ndarray
    monic: "MonicData" = field(repr=False, compare=False)

    @property
    def N(self):
        return self.alphat_bal.shape[0]

    @property
    def alphat(self):
        return self.monic.Linv[:self.N] @ self.alphat_bal @ self.monic.L[:self.N]

    @property
    def betat(self):
        return self.monic.Linv[:self.N] @ self.betat_bal @ self.monic.L[:self.N]


@dataclass(frozen=True)
class TauStrategy:
    """How the normalization sequence ``tau_n`` is chosen.

    kind
        ``"explicit"``: user matrices (checked against the row-sum equations);
        ``"lower_triangular_Y_upper"``: ``tau_n`` lower triangular and ``Y_n``
        upper triangular, solved level by level;
        ``"jacobi_paper"``: closed form supplied by :mod:`qbdfactor.jacobi`;
        its generator returns ``L_n tau_n`` (UL) or ``L_n tau~_n`` (LU), the
        well-scaled form used internally.
    """

    kind: str
    matrices: Optional[Sequence[np.ndarray]] = None
    generator: Optional[Callable[[int], np.ndarray]] = field(default=None, compare=False)
    tau0: Optional[np.ndarray] = None

    @classmethod
    def explicit(cls, matrices):
        return cls("explicit", matrices=[as_real(m) for m in matrices])

    @classmethod
    def lower_triangular_Y_upper(cls, tau0=None):
        return cls("lower_triangular_Y_upper",
                   tau0=None if tau0 is None else as_real(tau0))

    def __post_init__(self):
        if self.kind not in ("explicit", "lower_triangular_Y_upper", "jacobi_paper"):
            raise ValueError(f"unknown tau strategy {self.kind!r}")
        if self.kind == "explicit" and self.matrices is None:
            raise ValueError("explicit strategy needs matrices")
        if self.kind == "jacobi_paper" and self.generator is None:
            raise ValueError("jacobi_paper strategy needs a generator")


# --- monic reduction ------------------------------------------------------

def monic_reduce(P: BlockSequence, N: int) -> MonicData:
    """Monic data ``L_n = (A_0 ... A_{n-1})^{-1}``, ``B^_n``, ``C^_n`` to ``N`` levels.

    Raises
    ------
    SingularBlockError
        If some ``A_n`` (``n < N``) is singular; ``.level`` names ``n``.
    """
    if P.band != "tridiagonal":
        raise ValueError("monic_reduce needs a tridiagonal sequence")
    if N < 1:
        raise ValueError("N must be >= 1")
    d = P.d
    eye = np.eye(d)
    L = [eye]
    Linv = [eye]
    A, B, C = [], [], [np.zeros((d, d))]
    for n in range(N):
        Cn, Bn, An = P.blocks(n)
        A.append(An)
        B.append(Bn)
        if n > 0:
            C.append(Cn)
        Ainv = small_inverse(An, level=n, what=f"A_{n}")
        L.append(Ainv @ L[n])
        Linv.append(Linv[n] @ An)
    L = np.array(L)
    Linv = np.array(Linv)
    A, B, C = np.array(A), np.array(B), np.array(C)
    Bhat = Linv[:N] @ B @ L[:N]
    Chat = np.zeros_like(B)
    Chat[1:] = Linv[1:N] @ C[1:] @ L[:N - 1]
    return MonicData(d, N, L, Linv, Bhat, Chat, A, B, C)


# --- alpha / beta recursions ----------------------------------------------

def _ul_kernel(monic: MonicData, alpha0, N: int):
    """Batched UL recursion in the coordinates of ``P``.

    ``beta'_{n+1} = B_n - alpha'_n`` and ``alpha'_{n+1} = C_{n+1} beta'_{n+1}^{-1} A_n``,
    which is ``beta_{n+1} = B^_n - alpha_n``, ``alpha_{n+1} = C^_{n+1} beta_{n+1}^{-1}``
    conjugated by ``L``.  Returns ``alpha'``, ``beta'`` of shape
    ``(..., N+1, d, d)``, the smallest reciprocal condition number seen and
    the first failing level (``-1`` if none).  Needs ``monic.N >= N + 1``.
    """
    alpha0 = as_real(alpha0)
    batch = alpha0.shape[:-2]
    d = monic.d
    dt = np.result_type(alpha0, monic.A)
    alpha = np.zeros(batch + (N + 1, d, d), dt)
    beta = np.zeros(batch + (N + 1, d, d), dt)
    alpha[..., 0, :, :] = alpha0
    worst = np.full(batch, np.inf)
    fail = np.full(batch, -1, dtype=int)
    for n in range(N):
        b = monic.B[n] - alpha[..., n, :, :]
        beta[..., n + 1, :, :] = b
        binv, rc = batched_inverse(b)
        # a beta that is pure cancellation noise next to B_n is singular too
        scale = np.abs(b).max(axis=(-2, -1))
        rc = np.where(scale <= RCOND_THRESHOLD * np.abs(monic.B[n]).max(), 0.0, rc)
        bad = (rc < RCOND_THRESHOLD) & (fail < 0)
        fail = np.where(bad, n + 1, fail)
        worst = np.minimum(worst, rc)
        alpha[..., n + 1, :, :] = monic.C[n + 1] @ binv @ monic.A[n]
    return alpha, beta, worst, fail


def ul_coefficients(monic: MonicData, alpha0, N: Optional[int] = None) -> ULCoefficients:
    """UL split of the monic matrix seeded by ``alpha_0``.

    Raises
    ------
    SingularBlockError
        When the invertibility chain ``B^_0 - alpha_0``, ``B^_1 - C^_1(B^_0 - alpha_0)^{-1}``, ...
        breaks; ``.level`` is the index ``n`` of the singular ``beta_n``.
    """
    N = monic.N - 1 if N is None else N
    if N + 1 > monic.N:
        raise ValueError(f"{N} factor levels need {N + 1} monic levels, have {monic.N}")
    alpha0 = as_real(alpha0)
    if alpha0.shape != (monic.d, monic.d):
        raise ValueError(f"alpha0 must be {monic.d}x{monic.d}")
    alpha, beta, worst, fail = _ul_kernel(monic, alpha0, N)
    if fail >= 0:
        n = int(fail)
        raise SingularBlockError(
            f"invertibility chain fails: beta_{n} = B^_{n - 1} - alpha_{n - 1} is singular\n{beta[n]}",
            level=n, what=f"beta_{n}")
    for n in range(1, N + 1):
        small_inverse(alpha[n], level=n, what=f"alpha_{n}")
    return ULCoefficients(alpha0, alpha, beta, monic)


def lu_coefficients(monic: MonicData, N: Optional[int] = None) -> LUCoefficients:
    """Unique LU split: ``alpha~_0 = B^_0``, ``beta~_n = C^_n alpha~_{n-1}^{-1}``, ``alpha~_n = B^_n - beta~_n``.

    Computed as ``beta~'_n = C_n alpha~'_{n-1}^{-1} A_{n-1}``, ``alpha~'_n = B_n - beta~'_n``.
    """
    N = monic.N if N is None else N
    d = monic.d
    alphat = np.zeros((N, d, d), monic.A.dtype)
    betat = np.zeros((N, d, d), monic.A.dtype)
    alphat[0] = monic.B[0]
    for n in range(1, N):
        inv = small_inverse(alphat[n - 1], level=n - 1, what=f"alpha~_{n - 1}")
        betat[n] = monic.C[n] @ inv @ monic.A[n - 1]
        alphat[n] = monic.B[n] - betat[n]
    # the last alpha~ is not inverted above but must still be nonsingular
    small_inverse(alphat[N - 1], level=N - 1, what=f"alpha~_{N - 1}")
    return LUCoefficients(alphat, betat, monic)


# --- tau ------------------------------------------------------------------
#
# Internally the UL normalization is carried as sigma_n = L_n tau_n and the LU
# one as rho_n = L_n tau~_n.  Both are O(1); tau itself shrinks like L_n^{-1}.

def _ul_row_targets(monic, beta_bal, N):
    """``sigma_n e``: ``e`` at level 0, ``(A_{n-1}^{-1} beta'_n + I) e`` above."""
    e = np.ones(monic.d)
    Ainv = np.array([small_inverse(a, level=n, what=f"A_{n}") for n, a in enumerate(monic.A[:N])])
    r = (Ainv @ beta_bal[..., 1:N + 1, :, :]) @ e + e
    r0 = np.broadcast_to(e, r.shape[:-2] + (1, monic.d))
    return np.concatenate([r0, r], axis=-2)


def _lu_row_targets(monic, alphat_bal, N):
    """``rho_n e = (A_n + alpha~'_n) e``."""
    e = np.ones(monic.d)
    return (monic.A[:N] + alphat_bal[:N]) @ e


def _unit_rows(M):
    return M / np.sqrt((M * M).sum(-1, keepdims=True))


def _triangular_system(G, H, r, unknown_left: bool):
    """Solve for ``T`` (vec'd row-major) from row sums and two triangularity conditions.

    ``unknown_left=False``: ``T e = r``, ``(H T)`` strictly upper zero, ``(G T)`` strictly lower zero.
    ``unknown_left=True``:  ``T r = e``, ``(T H)`` strictly upper zero, ``(T G)`` strictly lower zero.
    Batched over leading axes of ``G`` and ``r``.  Returns ``(T, rcond)``.
    """
    d = G.shape[-1]
    batch = np.broadcast_shapes(G.shape[:-2], r.shape[:-1])
    dt = np.result_type(G, H, r)
    K = np.zeros(batch + (d * d, d * d), dt)
    rhs = np.zeros(batch + (d * d,), dt)
    row = 0
    for i in range(d):
        if unknown_left:
            K[..., row, i * d:(i + 1) * d] = r
            rhs[..., row] = 1.0
        else:
            K[..., row, i * d:(i + 1) * d] = 1.0
            rhs[..., row] = r[..., i]
        row += 1
    for lower, M in ((False, H), (True, G)):
        for i in range(d):
            for j in (range(i) if lower else range(i + 1, d)):
                for l in range(d):
                    if unknown_left:
                        K[..., row, i * d + l] = M[..., l, j]
                    else:
                        K[..., row, l * d + j] = M[..., i, l]
                row += 1
    Kinv, rc = batched_inverse(K)
    T = (Kinv @ rhs[..., None])[..., 0].reshape(batch + (d, d))
    return T, rc


def _triangular_sigma_ul(monic, alpha_bal, beta_bal, N, tau0=None):
    """Batched ``sigma_n = L_n tau_n`` with ``tau_n`` lower and ``Y_n = alpha'_n sigma_n`` upper triangular."""
    r = _ul_row_targets(monic, beta_bal, N)
    batch = alpha_bal.shape[:-3]
    d = monic.d
    sigma = np.zeros(batch + (N + 1, d, d), alpha_bal.dtype)
    worst = np.full(batch, np.inf)
    fail = np.full(batch, -1, dtype=int)
    for n in range(N + 1):
        if n == 0 and tau0 is not None:
            sigma[..., 0, :, :] = tau0
            continue
        H = _unit_rows(monic.Linv[n])
        T, rc = _triangular_system(alpha_bal[..., n, :, :], H, r[..., n, :], unknown_left=False)
        sigma[..., n, :, :] = T
        bad = (rc < RCOND_THRESHOLD) & (fail < 0)
        fail = np.where(bad, n, fail)
        worst = np.minimum(worst, rc)
    return sigma, worst, fail


def _triangular_rho_lu(monic, coeffs, N, tau0=None):
    """``rho_n = L_n tau~_n`` with ``tau~_n`` lower and ``Y~_n = rho_n^{-1} alpha~'_n`` upper triangular."""
    r = _lu_row_targets(monic, coeffs.alphat_bal, N)
    d = monic.d
    rho = np.zeros((N, d, d), monic.A.dtype)
    for n in range(N):
        if n == 0 and tau0 is not None:
            rho[0] = tau0
            continue
        # kappa = rho^{-1}; tau~^{-1} = kappa L_n lower, kappa alpha~' upper
        H = _unit_rows(monic.L[n].T).T
        kappa, rc = _triangular_system(coeffs.alphat_bal[n], H, r[n], unknown_left=True)
        if rc < RCOND_THRESHOLD:
            return rho, n
        inv, rc2 = batched_inverse(kappa)
        if rc2 < RCOND_THRESHOLD:
            return rho, n
        rho[n] = inv
    return rho, -1


def _solve_normalization(coeffs, monic, strategy, N):
    """``sigma`` (UL) or ``rho`` (LU) for the chosen strategy, row sums validated."""
    is_ul = isinstance(coeffs, ULCoefficients)
    d = monic.d
    if is_ul:
        targets = _ul_row_targets(monic, coeffs.beta_bal, N)
        count = N + 1
    else:
        targets = _lu_row_targets(monic, coeffs.alphat_bal, N)
        count = N

    if strategy.kind == "lower_triangular_Y_upper":
        if is_ul:
            norm, _, fail = _triangular_sigma_ul(monic, coeffs.alpha_bal, coeffs.beta_bal,
                                                 N, strategy.tau0)
        else:
            norm, fail = _triangular_rho_lu(monic, coeffs, N, strategy.tau0)
        if fail >= 0:
            raise SingularBlockError(
                f"triangular tau system is singular at level {int(fail)}",
                level=int(fail), what=f"tau_{int(fail)}")
    else:
        if strategy.kind == "explicit":
            mats = list(strategy.matrices)
            if len(mats) < count:
                raise ValueError(f"explicit tau needs {count} matrices, got {len(mats)}")
            tau = as_real(np.array(mats[:count]))
            if tau.shape[1:] != (d, d):
                raise ValueError(f"tau matrices must be {d}x{d}")
            norm = monic.L[:count] @ tau
        else:
            norm = as_real(np.array([strategy.generator(n) for n in range(count)]))
            if norm.shape[1:] != (d, d):
                raise ValueError(f"tau matrices must be {d}x{d}")

    for n in range(count):
        small_inverse(norm[n], level=n, what=f"tau_{n}")
        dev = np.max(np.abs(norm[n] @ np.ones(d) - targets[n]))
        scale = max(1.0, float(np.max(np.abs(targets[n]))))
        if dev > ROW_SUM_TOL * scale:
            raise ValueError(f"tau_{n} violates its row-sum equation by {dev:.3e}")
    return norm


def solve_tau(coeffs, monic: MonicData, strategy: TauStrategy, N: Optional[int] = None):
    """Normalization sequence for a UL or LU factorization.

    UL: returns ``tau_0..tau_N`` with ``tau_0^{-1} e = e`` and
    ``tau_{n+1} e = (beta_{n+1} L_n^{-1} + L_{n+1}^{-1}) e``.
    LU: returns ``tau~_0..tau~_{N-1}`` with ``tau~_n e = (alpha~_n L_n^{-1} + L_{n+1}^{-1}) e``.
    """
    N = coeffs.N if N is None else N
    norm = _solve_normalization(coeffs, monic, strategy, N)
    return monic.Linv[:norm.shape[0]] @ norm


# --- assembly -------------------------------------------------------------

def _ul_blocks(monic, alpha_bal, beta_bal, sigma, N):
    """Batched factor blocks; X, Y: (..., N, d, d); S, R: (..., N+1, d, d), R[0] zero."""
    sinv, rc = batched_inverse(sigma)
    Ainv, _ = batched_inverse(monic.A[:N])
    X = monic.A[:N] @ sigma[..., 1:N + 1, :, :]
    Y = alpha_bal[..., :N, :, :] @ sigma[..., :N, :, :]
    S = sinv[..., :N + 1, :, :]
    R = np.zeros_like(S)
    R[..., 1:, :, :] = sinv[..., 1:N + 1, :, :] @ Ainv @ beta_bal[..., 1:N + 1, :, :]
    return X, Y, S, R, rc


def _upper_seq(Y, X):
    d = Y.shape[-1]
    return BlockSequence(d, "upper", lambda n: (Y[n], X[n]), max_level=len(X))


def _lower_seq(S, R):
    d = S.shape[-1]
    return BlockSequence(d, "lower", lambda n: (S[n], None if n == 0 else R[n]), max_level=len(S))


def assemble_ul(monic: MonicData, coeffs: ULCoefficients, tau=None, *, sigma=None):
    """Factors ``P_U`` (``N`` levels) and ``P_L`` (``N + 1`` levels) of ``P = P_U P_L``.

    ``X_n = L_n tau_{n+1}``, ``Y_n = L_n alpha_n tau_n``, ``S_n = tau_n^{-1} L_n^{-1}``,
    ``R_{n+1} = tau_{n+1}^{-1} beta_{n+1} L_n^{-1}``.  Pass ``sigma = L tau``
    instead of ``tau`` to skip the (lossy) round trip through ``tau``.
    """
    N = coeffs.N
    if sigma is None:
        if tau is None:
            raise ValueError("need tau or sigma")
        tau = as_real(tau)
        if tau.shape[0] < N + 1:
            raise ValueError(f"need tau_0..tau_{N}")
        sigma = monic.L[:N + 1] @ tau[:N + 1]
    sigma = as_real(sigma)[:N + 1]
    for n in range(N + 1):
        small_inverse(sigma[n], level=n, what=f"tau_{n}")
    X, Y, S, R, _ = _ul_blocks(monic, coeffs.alpha_bal, coeffs.beta_bal, sigma, N)
    return _upper_seq(Y, X), _lower_seq(S, R)


def assemble_lu(monic: MonicData, coeffs: LUCoefficients, tau=None, *, rho=None):
    """Factors ``(P~_L, P~_U)`` of ``P = P~_L P~_U``, both with ``N`` levels.

    ``X~_n = tau~_n^{-1} L_{n+1}^{-1}``, ``Y~_n = tau~_n^{-1} alpha~_n L_n^{-1}``,
    ``S~_n = L_n tau~_n``, ``R~_{n+1} = L_{n+1} beta~_{n+1} tau~_n``.
    """
    N = coeffs.N
    if rho is None:
        if tau is None:
            raise ValueError("need tau or rho")
        tau = as_real(tau)
        if tau.shape[0] < N:
            raise ValueError(f"need tau~_0..tau~_{N - 1}")
        rho = monic.L[:N] @ tau[:N]
    rho = as_real(rho)[:N]
    kappa = np.array([small_inverse(rho[n], level=n, what=f"tau~_{n}") for n in range(N)])
    Ainv, _ = batched_inverse(monic.A[:N])
    X = kappa @ monic.A[:N]
    Y = kappa @ coeffs.alphat_bal
    S = rho.copy()
    R = np.zeros_like(S)
    R[1:] = coeffs.betat_bal[1:] @ Ainv[:N - 1] @ rho[:N - 1]
    return _lower_seq(S, R), _upper_seq(Y, X)


def factorization_residual(P: BlockSequence, left: BlockSequence, right: BlockSequence,
                           N: int) -> float:
    """Max entrywise ``|P - left @ right|`` over the leading ``(N - 1) d`` rows of ``N``-level sections."""
    if N < 2:
        raise ValueError("N must be >= 2")
    d = P.d
    D = truncate_dense(P, N) - truncate_dense(left, N) @ truncate_dense(right, N)
    return float(np.max(np.abs(D[:(N - 1) * d])))


# --- one-call drivers -----------------------------------------------------

@dataclass(frozen=True)
class ULFactors:
    P_U: BlockSequence
    P_L: BlockSequence
    monic: MonicData
    coeffs: ULCoefficients
    tau: np.ndarray


@dataclass(frozen=True)
class LUFactors:
    P_L: BlockSequence
    P_U: BlockSequence
    monic: MonicData
    coeffs: LUCoefficients
    tau: np.ndarray


def factor_ul(P: BlockSequence, alpha0, strategy: Optional[TauStrategy] = None,
              N: int = 20) -> ULFactors:
    """Run the whole UL pipeline for ``N`` levels of ``P``.

    The default strategy is ``lower_triangular_Y_upper`` with ``tau_0`` solved
    from the same constraints as the other levels.
    """
    strategy = strategy or TauStrategy.lower_triangular_Y_upper()
    monic = monic_reduce(P, N + 1)
    coeffs = ul_coefficients(monic, alpha0, N)
    sigma = _solve_normalization(coeffs, monic, strategy, N)
    P_U, P_L = assemble_ul(monic, coeffs, sigma=sigma)
    return ULFactors(P_U, P_L, monic, coeffs, monic.Linv[:N + 1] @ sigma)


def factor_lu(P: BlockSequence, strategy: TauStrategy, N: int = 20) -> LUFactors:
    monic = monic_reduce(P, N + 1)
    coeffs = lu_coefficients(monic, N)
    rho = _solve_normalization(coeffs, monic, strategy, N)
    P_L, P_U = assemble_lu(monic, coeffs, rho=rho)
    return LUFactors(P_L, P_U, monic, coeffs, monic.Linv[:N] @ rho)


def ul_factor_arrays(monic: MonicData, alpha0, N: int, tau0=None):
    """Batched UL pipeline with the triangular ``tau`` strategy.

    ``alpha0`` has shape ``(..., d, d)``.  Returns a dict with the factor
    arrays ``X, Y, S, R`` and a per-seed ``fail_level`` (``-1`` when the
    recursion and the ``tau`` systems stayed nonsingular).
    """
    alpha0 = as_real(alpha0)
    alpha, beta, _, fail_ab = _ul_kernel(monic, alpha0, N)
    sigma, _, fail_tau = _triangular_sigma_ul(monic, alpha, beta, N, tau0)
    X, Y, S, R, rc = _ul_blocks(monic, alpha, beta, sigma, N)
    fail = np.where(fail_ab >= 0, fail_ab, fail_tau)
    return {"X": X, "Y": Y, "S": S, "R": R, "sigma": sigma, "alpha_bal": alpha,
            "beta_bal": beta, "fail_level": fail}
