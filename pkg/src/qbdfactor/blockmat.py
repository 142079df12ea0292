"""Semi-infinite block-banded matrices with small square blocks.

A :class:`BlockSequence` stores a block tridiagonal, upper-bidiagonal or
lower-bidiagonal matrix level by level.  Level ``n`` of each band holds:

======================  =====================================
band                    blocks(n)
======================  =====================================
``tridiagonal``         ``(C_n, B_n, A_n)``  (``C_0 is None``)
``upper``               ``(Y_n, X_n)``
``lower``               ``(S_n, R_n)``       (``R_0 is None``)
======================  =====================================

Blocks are produced by a generator callable and memoized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "BANDS",
    "RCOND_THRESHOLD",
    "BlockError",
    "BlockGenerationError",
    "SingularBlockError",
    "BlockSequence",
    "StochasticityReport",
    "as_real",
    "batched_inverse",
    "small_inverse",
    "truncate_dense",
    "multiply_banded",
    "validate_stochastic",
    "from_blocks",
    "load_json",
    "dump_json",
]

BANDS = ("tridiagonal", "upper", "lower")
RCOND_THRESHOLD = 1e-13

_BAND_ALIASES = {
    "tridiagonal": "tridiagonal",
    "upper": "upper",
    "upper_bidiagonal": "upper",
    "lower": "lower",
    "lower_bidiagonal": "lower",
}


class BlockError(Exception):
    """Base class for block-matrix errors."""


class BlockGenerationError(BlockError):
    """A block generator failed (or was exhausted) at some level."""

    def __init__(self, level: int, reason: str = ""):
        self.level = level
        msg = f"block generator failed at level {level}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class SingularBlockError(BlockError):
    """A block that must be inverted is singular to working precision."""

    def __init__(self, message: str, level: Optional[int] = None,
                 rcond: float = 0.0, what: str = ""):
        self.level = level
        self.rcond = rcond
        self.what = what
        super().__init__(message)


def as_real(x):
    """Array view of ``x`` as float64, keeping ``np.longdouble`` input extended."""
    x = np.asarray(x)
    return x if x.dtype == np.longdouble else x.astype(float, copy=False)


def _gauss_jordan_inverse(M):
    """Batched Gauss-Jordan inverse with partial pivoting, in the dtype of ``M``.

    numpy.linalg has no extended-precision kernels; blocks are tiny so a
    plain elimination loop is fine.  ``rcond`` is the 1-norm estimate
    ``1 / (|M|_1 |M^{-1}|_1)``.
    """
    d = M.shape[-1]
    aug = np.concatenate([M, np.broadcast_to(np.eye(d, dtype=M.dtype), M.shape)], axis=-1).copy()
    ok = np.ones(M.shape[:-2], dtype=bool)
    for c in range(d):
        piv = np.argmax(np.abs(aug[..., c:, c]), axis=-1) + c
        rows = np.take_along_axis(aug, piv[..., None, None], axis=-2)
        cur = aug[..., c:c + 1, :].copy()
        np.put_along_axis(aug, piv[..., None, None], cur, axis=-2)
        aug[..., c:c + 1, :] = rows
        pv = aug[..., c, c]
        ok &= pv != 0
        aug[..., c, :] /= np.where(pv != 0, pv, 1)[..., None]
        for r in range(d):
            if r != c:
                aug[..., r, :] -= aug[..., r, c:c + 1] * aug[..., c, :]
    inv = aug[..., d:]
    n1 = np.abs(M).sum(-2).max(-1)
    n2 = np.abs(inv).sum(-2).max(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rcond = np.where(ok & (n1 > 0), 1.0 / (n1 * n2), 0.0)
    rcond = np.where(np.isfinite(rcond), rcond, 0.0).astype(float)
    return inv, rcond


def _rcond1(M, inv):
    n1 = np.abs(M).sum(-2).max(-1)
    n2 = np.abs(inv).sum(-2).max(-1)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        rcond = 1.0 / (n1 * n2)
    return np.where(np.isfinite(rcond), rcond, 0.0).astype(float)


def batched_inverse(M):
    """Invert a stack of square matrices.

    Returns ``(inverse, rcond)`` with ``rcond = 1 / (|M|_1 |M^{-1}|_1)``.
    Singular members get a finite (but meaningless) inverse instead of
    raising, so callers can mask them.  Extended-precision input is
    inverted by elimination.
    """
    M = as_real(M)
    if M.dtype == np.longdouble:
        return _gauss_jordan_inverse(M)
    try:
        with np.errstate(all="ignore"):
            inv = np.linalg.inv(M)
        if np.all(np.isfinite(inv)):
            return inv, _rcond1(M, inv)
    except np.linalg.LinAlgError:
        pass
    # some member is exactly singular: pseudo-inverse keeps the batch going
    u, s, vt = np.linalg.svd(M)
    safe = np.where(s > s[..., :1] * 1e-300, s, np.inf)
    inv = np.swapaxes(vt, -1, -2) @ (np.swapaxes(u, -1, -2) / safe[..., :, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        rc2 = np.where(s[..., 0] > 0, s[..., -1] / s[..., 0], 0.0)
    return inv, np.where(np.isfinite(rc2), rc2, 0.0)


def small_inverse(M, *, level: Optional[int] = None, what: str = "block"):
    """Inverse of a small dense block, refusing near-singular input.

    Raises
    ------
    SingularBlockError
        If the reciprocal condition number is below ``RCOND_THRESHOLD``.
    """
    M = as_real(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise SingularBlockError(f"{what} has non-finite entries", level, 0.0, what)
    inv, rcond = batched_inverse(M)
    rcond = float(rcond)
    if rcond < RCOND_THRESHOLD:
        where = f" at level {level}" if level is not None else ""
        raise SingularBlockError(
            f"{what} is singular{where} (rcond={rcond:.3e})", level, rcond, what)
    # one Newton-Schulz step polishes the inverse
    inv = inv @ (2 * np.eye(M.shape[0], dtype=M.dtype) - M @ inv)
    return inv


def _as_block(b, d: int, level: int):
    if b is None:
        return None
    arr = np.array(as_real(b))
    if arr.shape != (d, d):
        raise BlockGenerationError(level, f"block has shape {arr.shape}, expected {(d, d)}")
    if not np.all(np.isfinite(arr)):
        raise BlockGenerationError(level, "block has non-finite entries")
    arr.setflags(write=False)
    return arr


class BlockSequence:
    """Level-indexed sequence of ``d x d`` blocks of a banded matrix.

    Parameters
    ----------
    d : int
        Block dimension.
    band : str
        ``"tridiagonal"``, ``"upper"`` or ``"lower"`` (the long names
        ``upper_bidiagonal``/``lower_bidiagonal`` are accepted too).
    generator : callable
        Pure function ``n -> tuple of blocks`` (see module docstring).
    max_level : int, optional
        Number of levels available; requesting level ``>= max_level``
        raises :class:`BlockGenerationError`.
    """

    def __init__(self, d: int, band: str, generator: Callable[[int], Sequence],
                 max_level: Optional[int] = None):
        if int(d) != d or d < 1:
            raise ValueError(f"block dimension must be a positive integer, got {d!r}")
        if band not in _BAND_ALIASES:
            raise ValueError(f"unknown band {band!r}; expected one of {BANDS}")
        self.d = int(d)
        self.band = _BAND_ALIASES[band]
        self.max_level = max_level
        self._generator = generator
        self._cache: dict = {}

    def __repr__(self):
        return f"BlockSequence(d={self.d}, band={self.band!r}, max_level={self.max_level})"

    def blocks(self, n: int):
        """Return the tuple of blocks at level ``n``."""
        n = int(n)
        if n < 0:
            raise BlockGenerationError(n, "negative level")
        if n in self._cache:
            return self._cache[n]
        if self.max_level is not None and n >= self.max_level:
            raise BlockGenerationError(n, f"sequence materialized only to {self.max_level} levels")
        try:
            raw = tuple(self._generator(n))
        except BlockError:
            raise
        except Exception as exc:
            raise BlockGenerationError(n, repr(exc)) from exc
        width = 3 if self.band == "tridiagonal" else 2
        if len(raw) != width:
            raise BlockGenerationError(n, f"expected {width} blocks, got {len(raw)}")
        out = tuple(_as_block(b, self.d, n) for b in raw)
        if n == 0 and self.band in ("tridiagonal", "lower"):
            out = (None,) + out[1:] if self.band == "tridiagonal" else out[:1] + (None,)
        for j, b in enumerate(out):
            if b is None and not (n == 0 and _is_subdiag(self.band, j)):
                raise BlockGenerationError(n, f"block {j} missing")
        self._cache[n] = out
        return out

    # convenient accessors; names follow the band
    def diag(self, n):
        b = self.blocks(n)
        return b[1] if self.band == "tridiagonal" else b[0]

    def sup(self, n):
        """Super-diagonal block (A_n or X_n); ``None`` for the lower band."""
        b = self.blocks(n)
        if self.band == "tridiagonal":
            return b[2]
        return b[1] if self.band == "upper" else None

    def sub(self, n):
        """Sub-diagonal block (C_n or R_n); ``None`` for the upper band or n=0."""
        b = self.blocks(n)
        if self.band == "tridiagonal":
            return b[0]
        return b[1] if self.band == "lower" else None

    def materialize(self, N: int) -> "BlockSequence":
        """Copy of the first ``N`` levels, with ``max_level=N``."""
        levels = [self.blocks(n) for n in range(N)]
        return BlockSequence(self.d, self.band, lambda n: levels[n], max_level=N)


def _is_subdiag(band, j):
    return (band == "tridiagonal" and j == 0) or (band == "lower" and j == 1)


def from_blocks(d: int, band: str, levels: Sequence[Sequence]) -> BlockSequence:
    """Build a finite :class:`BlockSequence` from explicit per-level tuples."""
    levels = [tuple(lv) for lv in levels]
    return BlockSequence(d, band, lambda n: levels[n], max_level=len(levels))


def truncate_dense(seq: BlockSequence, N: int) -> np.ndarray:
    """Leading ``(N d) x (N d)`` principal section of the matrix."""
    if N < 1:
        raise ValueError("N must be >= 1")
    d = seq.d
    dt = np.result_type(*[b for b in seq.blocks(0) if b is not None])
    out = np.zeros((N * d, N * d), dtype=dt)

    def put(i, j, blk):
        if blk is not None and 0 <= j < N:
            out[i * d:(i + 1) * d, j * d:(j + 1) * d] = blk

    for n in range(N):
        if seq.band == "tridiagonal":
            C, B, A = seq.blocks(n)
            put(n, n - 1, C)
            put(n, n, B)
            if n + 1 < N:
                put(n, n + 1, A)
        elif seq.band == "upper":
            Y, X = seq.blocks(n)
            put(n, n, Y)
            if n + 1 < N:
                put(n, n + 1, X)
        else:
            S, R = seq.blocks(n)
            put(n, n, S)
            put(n, n - 1, R)
    return out


def multiply_banded(left: BlockSequence, right: BlockSequence,
                    N: Optional[int] = None) -> BlockSequence:
    """Product of an (upper, lower) or (lower, upper) bidiagonal pair.

    The result is a lazy tridiagonal sequence.  When ``N`` is given it is
    capped at ``N`` levels (so level ``N - 1`` is the last one that can be
    requested); the factors must then provide one extra level.
    """
    if left.d != right.d:
        raise ValueError(f"dimension mismatch: {left.d} vs {right.d}")
    pair = (left.band, right.band)
    if pair == ("upper", "lower"):
        U, L = left, right

        def gen(n):
            Y, X = U.blocks(n)
            S, R = L.blocks(n)
            S1, R1 = L.blocks(n + 1)
            A = X @ S1
            B = X @ R1 + Y @ S
            C = None if n == 0 else Y @ R
            return (C, B, A)
    elif pair == ("lower", "upper"):
        L, U = left, right

        def gen(n):
            S, R = L.blocks(n)
            Y, X = U.blocks(n)
            A = S @ X
            if n == 0:
                return (None, S @ Y, A)
            Yp, Xp = U.blocks(n - 1)
            return (R @ Yp, R @ Xp + S @ Y, A)
    else:
        raise ValueError(f"cannot multiply bands {pair}; need (upper, lower) or (lower, upper)")
    return BlockSequence(left.d, "tridiagonal", gen, max_level=N)


@dataclass(frozen=True)
class StochasticityReport:
    max_negative_entry: float
    max_row_sum_deviation: float
    offending_level: Optional[int]
    passed: bool
    tol: float = 0.0

    def __str__(self):
        status = "passed" if self.passed else f"FAILED at level {self.offending_level}"
        return (f"stochasticity {status}: min entry {self.max_negative_entry:.3e}, "
                f"max row-sum deviation {self.max_row_sum_deviation:.3e} (tol {self.tol:g})")


def validate_stochastic(seq: BlockSequence, N: int, tol: float = 1e-12) -> StochasticityReport:
    """Check nonnegativity and unit row sums over levels ``0..N-1``.

    ``max_negative_entry`` is the smallest scalar entry seen (so a value
    ``>= -tol`` passes).  Row sums add all blocks of a level together.
    """
    if N < 1 or tol <= 0:
        raise ValueError("need N >= 1 and tol > 0")
    min_entry = np.inf
    max_dev = 0.0
    offending = None
    for n in range(N):
        blks = [b for b in seq.blocks(n) if b is not None]
        lvl_min = min(float(b.min()) for b in blks)
        rows = sum(b.sum(axis=1) for b in blks)
        lvl_dev = float(np.max(np.abs(rows - 1.0)))
        min_entry = min(min_entry, lvl_min)
        max_dev = max(max_dev, lvl_dev)
        if offending is None and (lvl_min < -tol or lvl_dev > tol):
            offending = n
    passed = offending is None
    return StochasticityReport(float(min_entry), float(max_dev), offending, passed, tol)


# --- JSON -----------------------------------------------------------------

_KEYS = {"tridiagonal": ("C", "B", "A"), "upper": ("Y", "X"), "lower": ("S", "R")}


def dump_json(seq: BlockSequence, N: int) -> dict:
    """Serialize the first ``N`` levels to the block-sequence JSON record."""
    keys = _KEYS[seq.band]
    blocks = []
    for n in range(N):
        rec = {}
        for key, blk in zip(keys, seq.blocks(n)):
            if blk is not None:
                rec[key] = np.asarray(blk, dtype=float).tolist()
        blocks.append(rec)
    return {"d": seq.d, "band": seq.band, "blocks": blocks}


def load_json(obj) -> BlockSequence:
    """Inverse of :func:`dump_json`; accepts a dict, a JSON string or a path."""
    if isinstance(obj, str):
        text = obj
        if not obj.lstrip().startswith("{"):
            with open(obj) as fh:
                text = fh.read()
        obj = json.loads(text)
    d = int(obj["d"])
    band = _BAND_ALIASES[obj["band"]]
    keys = _KEYS[band]
    levels = []
    for rec in obj["blocks"]:
        levels.append(tuple(None if rec.get(k) is None else np.array(rec[k], float) for k in keys))
    return from_blocks(d, band, levels)
