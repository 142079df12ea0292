"""Urn experiments realizing the stochastic factors of the Jacobi example.

States live on ``0, 1, 2, ...``; state ``n = 2m + i`` is level ``m``, phase
``i``.  Experiment 1 is a pure-birth chain (the upper factor ``P_U``),
Experiment 2 a pure-death chain absorbed at 0 (the lower factor ``P_L``).
Running one then the other gives ``P`` (1 then 2) or its Darboux transform
(2 then 1).

Each urn draw is made with a uniform ``u`` in [0, 1): the ball picked is
``floor(u * total)`` and blue balls come first.  Uniforms are derived from
``(base_seed, trial, draw)`` with the SplitMix64 finalizer, so counts do not
depend on how trials are chunked or scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .blockmat import truncate_dense
from .darboux import darboux_from_ul
from .jacobi import JacobiParams, paper_factor_sequences, transition_sequence

__all__ = [
    "EXPERIMENTS",
    "UrnChainSpec",
    "EmpiricalKernel",
    "KernelReport",
    "splitmix64",
    "trial_uniforms",
    "step_distribution",
    "experiment1_step",
    "experiment2_step",
    "empirical_kernel",
    "reference_row",
    "kernel_vs_matrix",
]

EXPERIMENTS = ("exp1", "exp2", "composed_P", "composed_Ptilde")
_STAGES = {"exp1": (1,), "exp2": (2,), "composed_P": (1, 2), "composed_Ptilde": (2, 1)}

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class UrnChainSpec:
    params: JacobiParams
    experiment: str

    def __post_init__(self):
        self.params.require_urn()
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")

    @property
    def ints(self):
        p = self.params
        return int(p.alpha), int(p.beta), int(p.k)


@dataclass(frozen=True)
class EmpiricalKernel:
    start_state: int
    counts: Dict[int, int]
    trials: int

    def frequency(self, target: int) -> float:
        return self.counts.get(target, 0) / self.trials


# --- randomness -----------------------------------------------------------

def splitmix64(x):
    """SplitMix64 output function applied to ``x + golden`` (uint64, wrapping)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def trial_uniforms(base_seed: int, trials: np.ndarray, draws: int) -> np.ndarray:
    """Uniforms ``(len(trials), draws)`` in [0, 1) for the given trial indices."""
    key = splitmix64(splitmix64(np.uint64(base_seed % 2**64)) ^ np.asarray(trials, np.uint64))
    with np.errstate(over="ignore"):
        streams = key[:, None] + np.arange(1, draws + 1, dtype=np.uint64)[None, :] * _GOLDEN
    bits = splitmix64(streams) >> np.uint64(11)
    return bits.astype(np.float64) * 2.0 ** -53


def _pick_blue(u, blue, red):
    """Uniform ball draw: blue iff ``floor(u * (blue + red)) < blue``."""
    return np.floor(u * (blue + red)) < blue


# --- experiments ----------------------------------------------------------

def _exp1(a, b, k, n, u1, u2):
    """Vectorized Experiment 1 from states ``n`` with two uniforms per trial."""
    m = n // 2
    odd = (n % 2) == 1
    out = n.copy()
    # odd n: m blue kept, beta+2 blue and m+alpha+1 red added; blue moves up two
    up = _pick_blue(u1, m + b + 2, m + a + 1)
    out = np.where(odd & up, n + 2, out)
    # even n: urn A has m+alpha blue, beta-k+1 red; then urn B or urn R
    first_blue = _pick_blue(u1, m + a, b - k + 1)
    second_blue = np.where(first_blue,
                           _pick_blue(u2, m + a + b - k + 2, m + k),
                           _pick_blue(u2, m + k, 1))
    even_target = np.where(first_blue & second_blue, n,
                           np.where(~first_blue & ~second_blue, n + 1, n + 2))
    return np.where(odd, out, even_target)


def _exp2(a, b, k, n, u1, u2):
    """Vectorized Experiment 2; state 0 is absorbing."""
    m = n // 2
    odd = (n % 2) == 1
    # even n: m blue, m+alpha+beta+1 red; blue moves down two
    down = _pick_blue(u1, m, m + a + b + 1)
    even_target = np.where(down, n - 2, n)
    # odd n: urn A has m+alpha+beta-k+1 blue, 1 red; then urn B or urn R
    first_blue = _pick_blue(u1, m + a + b - k + 1, 1)
    second_blue = np.where(first_blue,
                           _pick_blue(u2, m + a + b + 2, m),
                           _pick_blue(u2, m, k))
    odd_target = np.where(first_blue & second_blue, n,
                          np.where(~first_blue & ~second_blue, n - 1, n - 2))
    return np.where(odd, odd_target, np.where(n == 0, 0, even_target))


_STEP = {1: _exp1, 2: _exp2}


def step_distribution(spec: UrnChainSpec, n: int) -> Dict[int, float]:
    """Exact one-step distribution from state ``n``, read off the urn compositions."""
    a, b, k = spec.ints
    dist = {n: 1.0}
    for stage in _STAGES[spec.experiment]:
        nxt: Dict[int, float] = {}
        for s, ps in dist.items():
            for t, pt in _single(stage, a, b, k, s).items():
                nxt[t] = nxt.get(t, 0.0) + ps * pt
        dist = nxt
    return {t: p for t, p in sorted(dist.items()) if p > 0}


def _single(stage, a, b, k, n):
    m, odd = divmod(n, 2)
    if stage == 1:
        if odd:
            up = (m + b + 2) / (2 * m + a + b + 3)
            return {n + 2: up, n: 1 - up}
        pA = (m + a) / (m + a + b - k + 1)
        pB = (m + a + b - k + 2) / (2 * m + a + b + 2)
        pR = 1 / (m + k + 1)
        return {n: pA * pB, n + 1: (1 - pA) * pR, n + 2: pA * (1 - pB) + (1 - pA) * (1 - pR)}
    if n == 0:
        return {0: 1.0}
    if not odd:
        down = m / (2 * m + a + b + 1)
        return {n - 2: down, n: 1 - down}
    pA = (m + a + b - k + 1) / (m + a + b - k + 2)
    pB = (m + a + b + 2) / (2 * m + a + b + 2)
    pR = k / (m + k)
    out = {n: pA * pB, n - 1: (1 - pA) * pR, n - 2: pA * (1 - pB) + (1 - pA) * (1 - pR)}
    return {t: p for t, p in out.items() if p > 0}


def _scalar_step(stage, spec, n, rng):
    if n < 0:
        raise ValueError(f"state must be >= 0, got {n}")
    a, b, k = spec.ints
    u = rng.random(2)
    return int(_STEP[stage](a, b, k, np.array([n]), u[:1], u[1:])[0])


def experiment1_step(spec: UrnChainSpec, n: int, rng: np.random.Generator) -> int:
    """One step of Experiment 1 from state ``n``."""
    return _scalar_step(1, spec, n, rng)


def experiment2_step(spec: UrnChainSpec, n: int, rng: np.random.Generator) -> int:
    """One step of Experiment 2 from state ``n`` (0 is absorbing)."""
    return _scalar_step(2, spec, n, rng)


def _run_chunk(spec, start, base_seed, lo, hi):
    a, b, k = spec.ints
    stages = _STAGES[spec.experiment]
    u = trial_uniforms(base_seed, np.arange(lo, hi, dtype=np.uint64), 2 * len(stages))
    n = np.full(hi - lo, start, dtype=np.int64)
    for j, stage in enumerate(stages):
        n = _STEP[stage](a, b, k, n, u[:, 2 * j], u[:, 2 * j + 1])
    return np.bincount(n - start + 4, minlength=9)


def empirical_kernel(spec: UrnChainSpec, start: int, trials: int, base_seed: int,
                     workers: int = 1, chunk: int = 1 << 16) -> EmpiricalKernel:
    """Counts of the state reached after one (composed) step from ``start``.

    Trial ``t`` only uses uniforms derived from ``(base_seed, t)``, so the
    result is the same for any ``workers`` / ``chunk``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if start < 0:
        raise ValueError("start state must be >= 0")
    bounds = [(lo, min(lo + chunk, trials)) for lo in range(0, trials, chunk)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda lh: _run_chunk(spec, start, base_seed, *lh), bounds))
    else:
        parts = [_run_chunk(spec, start, base_seed, lo, hi) for lo, hi in bounds]
    total = np.sum(parts, axis=0)
    counts = {start + off - 4: int(c) for off, c in enumerate(total) if c}
    return EmpiricalKernel(start, counts, trials)


# --- reference rows and comparison ----------------------------------------

def reference_row(params: JacobiParams, experiment: str, start: int) -> Dict[int, float]:
    """Row ``start`` of ``P_U``, ``P_L``, ``P`` or ``P_L P_U`` from the closed-form blocks."""
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}")
    levels = start // 2 + 4
    P_U, P_L = paper_factor_sequences(params)
    if experiment == "exp1":
        seq = P_U
    elif experiment == "exp2":
        seq = P_L
    elif experiment == "composed_P":
        seq = transition_sequence(params)
    else:
        seq = darboux_from_ul(P_U, P_L, levels + 1).transformed
    row = truncate_dense(seq, levels)[start]
    return {t: float(p) for t, p in enumerate(row) if p != 0.0}


@dataclass(frozen=True)
class KernelReport:
    rows: List[tuple]  # (start, target, count, trials, empirical_p, reference_p, z)
    passed: bool
    z_threshold: float


def kernel_vs_matrix(kernel: EmpiricalKernel, reference: Dict[int, float],
                     z: float = 3.0) -> KernelReport:
    """Per-target binomial z-test of empirical frequencies against ``reference``.

    Targets with reference probability 0 or 1 must match exactly.
    """
    total = sum(reference.values())
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"reference probabilities sum to {total!r}, not 1")
    n0 = kernel.start_state
    outside = [t for t, p in reference.items() if p > 0 and abs(t - n0) > 2]
    if outside:
        raise ValueError(f"reference puts mass outside the reach set of {n0}: {outside}")
    rows = []
    ok = True
    for t in sorted(set(reference) | set(kernel.counts)):
        p = reference.get(t, 0.0)
        c = kernel.counts.get(t, 0)
        f = c / kernel.trials
        if p <= 0.0 or p >= 1.0:
            zt = 0.0 if f == p else math.inf
        else:
            zt = (f - p) / math.sqrt(p * (1 - p) / kernel.trials)
        ok &= abs(zt) <= z
        rows.append((n0, t, c, kernel.trials, f, p, zt))
    return KernelReport(rows, bool(ok), z)
