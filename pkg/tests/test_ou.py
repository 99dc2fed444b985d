import math

import numpy as np
import pytest
from scipy import linalg as sla
from scipy import stats

from levyou import oracle
from levyou.errors import PreconditionError
from levyou.levy import Atoms, GaussianDensity, LevyTriplet, SmallJumpScheme, Stable, ZeroMeasure
from levyou.ou import (OUModel, convolution_from_path, coupled_pair_endpoint, invariant_horizon,
                       sample_compound_poisson_path, sample_invariant, simulate_convolution,
                       simulate_endpoint, uniform_moment_check)

ROT = np.array([[-1.0, 2.0], [-2.0, -1.0]])


def zero_model(A=ROT):
    return OUModel(A, LevyTriplet(None, None, ZeroMeasure(len(A))))


def gaussian_ou():
    return OUModel([[-1.0]], LevyTriplet([[1.0]], None, ZeroMeasure(1)))


def cp_model():
    return OUModel([[-1.0]], LevyTriplet(None, None, GaussianDensity(1.0, [0.0], [[1.0]])))


def test_zero_noise_is_the_flow():
    x = np.array([1.0, -2.0])
    out = simulate_endpoint(zero_model(), x, 1.3, rng=np.random.default_rng(0), size=5)
    np.testing.assert_allclose(out, np.tile(sla.expm(1.3 * ROT) @ x, (5, 1)), rtol=1e-13, atol=1e-15)


def test_gaussian_ou_law():
    t, x = 0.7, 2.0
    z = simulate_endpoint(gaussian_ou(), [x], t, rng=np.random.default_rng(1), size=10_000)[:, 0]
    sd = math.sqrt((1 - math.exp(-2 * t)) / 2)
    assert stats.kstest(z, "norm", args=(math.exp(-t) * x, sd)).pvalue > 0.01


@pytest.mark.parametrize("model", [gaussian_ou(), cp_model(),
                                   OUModel(ROT, LevyTriplet(None, None, Stable(alpha=1.3, dim=2)))])
def test_synchronous_noise_identity(model):
    d, t = model.dim, 2.0
    x, y = np.full(d, 1.5), np.full(d, -0.5)
    a = simulate_endpoint(model, x, t, rng=np.random.default_rng(9), size=100)
    b = simulate_endpoint(model, y, t, rng=np.random.default_rng(9), size=100)
    np.testing.assert_allclose(a - b, np.tile(model.flow(t) @ (x - y), (100, 1)), rtol=0, atol=1e-12)


def test_convolution_from_recorded_path():
    A = np.array([[-0.5, 1.0], [-1.0, -0.5]])
    model = OUModel(A, LevyTriplet(None, None, Atoms([[1.0, 0.0], [0.0, -2.0]], [1.0, 2.0])))
    path = sample_compound_poisson_path(model, 3.0, np.random.default_rng(2))
    assert path.count > 0
    direct = sum(sla.expm((3.0 - s) * A) @ u for s, u in zip(path.times, path.marks))
    np.testing.assert_allclose(convolution_from_path(model, path, 3.0), direct, atol=1e-12)


def test_simulate_convolution_zero_noise():
    np.testing.assert_array_equal(simulate_convolution(zero_model(), 2.0, size=3), np.zeros((3, 2)))


def test_sample_invariant_zero_noise_and_gaussian():
    draws, T = sample_invariant(zero_model(), np.random.default_rng(0), size=4)
    np.testing.assert_array_equal(draws, np.zeros((4, 2)))
    draws, T = sample_invariant(gaussian_ou(), np.random.default_rng(3), size=10_000)
    assert T > 0
    assert stats.kstest(draws[:, 0], "norm", args=(0.0, math.sqrt(0.5))).pvalue > 0.01


def test_invariant_needs_stable_drift():
    with pytest.raises(PreconditionError):
        invariant_horizon(zero_model(np.zeros((1, 1))), 1e-6)


def test_empirical_cf_matches_oracle():
    model = OUModel([[-1.0]], LevyTriplet([[0.3]], [0.5],
                                          GaussianDensity(1.0, [0.5], [[0.4]])))
    n, t, x = 100_000, 1.2, 0.8
    z = simulate_endpoint(model, [x], t, rng=np.random.default_rng(4), size=n)[:, 0]
    for xi in np.linspace(-3, 3, 10):
        emp = np.mean(np.exp(1j * xi * z))
        psi = complex(np.asarray(oracle.accumulated_symbol(model, t, [xi])).ravel()[0])
        exact = np.exp(1j * xi * math.exp(-t) * x - psi)
        assert abs(emp - exact) <= 4 / math.sqrt(n)


def test_coupling_same_start_couples_after_a_jump():
    n, t = 100_000, 0.8
    res = coupled_pair_endpoint(cp_model(), [0.5], [0.5], 1.0, t, np.random.default_rng(5), size=n)
    np.testing.assert_array_equal(res.coupled, res.n_jumps > 0)
    p = math.exp(-t)
    assert abs(np.mean(res.n_jumps == 0) - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_coupling_single_atom_never_couples():
    model = OUModel([[-1.0]], LevyTriplet(None, None, Atoms([[1.0]], [2.0])))
    res = coupled_pair_endpoint(model, [1.0], [0.0], 1.0, 2.0, np.random.default_rng(0), size=1000)
    assert not res.coupled.any()


def test_coupled_pairs_are_bitwise_equal():
    res = coupled_pair_endpoint(cp_model(), [1.0], [0.0], 1.0, 3.0, np.random.default_rng(6), size=5000)
    assert res.coupled.any()
    assert np.array_equal(res.X[res.coupled], res.X_prime[res.coupled])
    assert not np.any(np.all(res.X[~res.coupled] == res.X_prime[~res.coupled], axis=1))


def test_coupling_marginals():
    model, t, n = cp_model(), 1.5, 10_000
    res = coupled_pair_endpoint(model, [1.0], [-1.0], 1.0, t, np.random.default_rng(7), size=n)
    a = simulate_endpoint(model, [1.0], t, rng=np.random.default_rng(8), size=n)
    b = simulate_endpoint(model, [-1.0], t, rng=np.random.default_rng(9), size=n)
    assert stats.ks_2samp(res.X[:, 0], a[:, 0]).pvalue > 0.01
    assert stats.ks_2samp(res.X_prime[:, 0], b[:, 0]).pvalue > 0.01


def test_coupling_bound_dominates_oracle():
    model, t, n = cp_model(), 2.0, 50_000
    res = coupled_pair_endpoint(model, [1.0], [0.0], 1.0, t, np.random.default_rng(10), size=n)
    p = 1 - res.coupled.mean()
    ref = oracle.tv_distance_oracle(model, t, [1.0], [0.0]).value
    assert 2 * p >= ref - 3 * 2 * math.sqrt(max(p, ref / 2) * (1 - p) / n)


def test_coupling_with_stable_driver_in_2d():
    model = OUModel(ROT, LevyTriplet(None, None, Stable(alpha=1.2, dim=2)))
    res = coupled_pair_endpoint(model, [1.0, 0.0], [0.0, 0.0], 1.0, 2.0, np.random.default_rng(1),
                                size=2000)
    assert 0 < res.coupled.mean() < 1
    assert np.array_equal(res.X[res.coupled], res.X_prime[res.coupled])


def test_uniform_moment_zero_noise():
    tab = uniform_moment_check(zero_model(), 1.0, [1.0, 2.0, 3.0], 100, np.random.default_rng(0))
    assert tab.mean == [0.0, 0.0, 0.0]
    assert tab.plateau


def test_uniform_moment_precondition():
    cauchy = OUModel([[-1.0]], LevyTriplet(None, None, Stable(alpha=1.0)))
    with pytest.raises(PreconditionError):
        uniform_moment_check(cauchy, 1.0, [1.0], 10)


def test_gaussian_half_normal_means():
    tab = uniform_moment_check(gaussian_ou(), 1.0, [0.5, 1.0, 3.0], 40_000, np.random.default_rng(3))
    for t, m, s in tab.rows():
        assert abs(m - math.sqrt((1 - math.exp(-2 * t)) / math.pi)) <= 3.5 * s


def test_small_jump_scheme_recorded_choice():
    model = OUModel([[-1.0]], LevyTriplet(None, None, Stable(alpha=1.5)))
    scheme = SmallJumpScheme(epsilon=0.05, exact_stable=False)
    a = simulate_convolution(model, 1.0, scheme, np.random.default_rng(0), size=10_000)[:, 0]
    b = simulate_convolution(model, 1.0, None, np.random.default_rng(1), size=10_000)[:, 0]
    assert stats.ks_2samp(a, b).pvalue > 0.01
