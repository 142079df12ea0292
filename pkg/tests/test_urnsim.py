import math

import numpy as np
import pytest

from qbdfactor import jacobi as J
from qbdfactor import urnsim as us

P321 = J.JacobiParams(3, 2, 1)


def spec(exp, p=P321):
    return us.UrnChainSpec(p, exp)


def test_spec_validation():
    with pytest.raises(ValueError):
        us.UrnChainSpec(J.JacobiParams(3.5, 2, 1), "exp1")
    with pytest.raises(ValueError):
        us.UrnChainSpec(P321, "exp3")


def test_experiment1_probabilities():
    d1 = us.step_distribution(spec("exp1"), 1)
    assert d1[3] == pytest.approx(1 / 2)
    d0 = us.step_distribution(spec("exp1"), 0)
    assert d0[0] == pytest.approx(18 / 35)
    for n in range(12):
        assert sum(us.step_distribution(spec("exp1"), n).values()) == pytest.approx(1, abs=1e-15)


def test_experiment2_probabilities():
    assert us.step_distribution(spec("exp2"), 0) == {0: 1.0}
    assert us.step_distribution(spec("exp2"), 2)[0] == pytest.approx(1 / 8)
    assert us.step_distribution(spec("exp2"), 1)[0] == pytest.approx(1 / 6)
    rng = np.random.default_rng(0)
    assert all(us.experiment2_step(spec("exp2"), 0, rng) == 0 for _ in range(20))


@pytest.mark.parametrize("triple", [(3, 2, 1), (1, 2, 2)])
@pytest.mark.parametrize("exp", us.EXPERIMENTS)
def test_exact_urn_rows_equal_matrix_rows(triple, exp):
    p = J.JacobiParams(*triple)
    for n in range(10):
        exact = us.step_distribution(us.UrnChainSpec(p, exp), n)
        ref = us.reference_row(p, exp, n)
        for t in set(exact) | set(ref):
            assert exact.get(t, 0.0) == pytest.approx(ref.get(t, 0.0), abs=1e-14)


@pytest.mark.parametrize("exp", ["composed_P", "composed_Ptilde"])
def test_composed_kernel_from_zero(exp):
    ker = us.empirical_kernel(spec(exp), 0, 100_000, base_seed=7)
    for t, p in us.reference_row(P321, exp, 0).items():
        assert abs(ker.frequency(t) - p) <= 3 * math.sqrt(p * (1 - p) / 100_000)


def test_single_trial_and_determinism():
    ker = us.empirical_kernel(spec("composed_P"), 3, 1, base_seed=1)
    assert sum(ker.counts.values()) == 1
    a = us.empirical_kernel(spec("composed_P"), 3, 5000, base_seed=11, workers=1, chunk=5000)
    b = us.empirical_kernel(spec("composed_P"), 3, 5000, base_seed=11, workers=3, chunk=700)
    assert a.counts == b.counts


def test_uniforms_in_unit_interval():
    u = us.trial_uniforms(123, np.arange(1000, dtype=np.uint64), 4)
    assert u.shape == (1000, 4) and u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.02


def test_kernel_comparison_self_consistency_and_perturbation():
    exact = us.step_distribution(spec("exp1"), 0)
    ker = us.empirical_kernel(spec("exp1"), 0, 200_000, base_seed=5)
    assert us.kernel_vs_matrix(ker, exact).passed
    t = max(exact, key=exact.get)
    p = exact[t]
    shift = 10 * math.sqrt(p * (1 - p) / ker.trials)
    bad = dict(exact)
    bad[t] = p - shift
    other = min(exact, key=exact.get)
    bad[other] += shift
    assert not us.kernel_vs_matrix(ker, bad).passed


def test_exp1_kernel_matches_level0_row_two():
    ker = us.empirical_kernel(spec("exp1"), 1, 100_000, base_seed=7)
    X, Y, _, _ = J.paper_factors(P321, 0)
    ref = {0: Y[1, 0], 1: Y[1, 1], 2: X[1, 0], 3: X[1, 1]}
    ref = {t: float(v) for t, v in ref.items() if v > 0}
    assert us.kernel_vs_matrix(ker, ref).passed


def test_reference_row_checks():
    with pytest.raises(ValueError):
        us.kernel_vs_matrix(us.EmpiricalKernel(0, {0: 1}, 1), {0: 0.5})
    with pytest.raises(ValueError):
        us.empirical_kernel(spec("exp1"), 0, 0, 1)
