import math

import numpy as np
import pytest
from scipy import stats

from levyou.errors import ConfigurationError, InvalidInputError
from levyou.levy import (Atoms, Density, GaussianDensity, LevyTriplet, SmallJumpScheme, Stable,
                         SumMeasure, UniformDensity, ZeroMeasure, moment_integral,
                         re_symbol_small_jump_bound, sample_increment, second_moment_matrix, symbol,
                         truncate)


def test_brownian_symbol():
    tri = LevyTriplet([[1.0]], [0.0], ZeroMeasure(1))
    assert symbol(tri, 2.0) == pytest.approx(2.0)


@pytest.mark.parametrize("xi", [0.3, 1.0, -2.5, 7.0])
def test_single_atom_symbol_has_no_compensation(xi):
    tri = LevyTriplet(None, None, Atoms([[1.0]], [1.0]))
    assert symbol(tri, xi) == pytest.approx(1 - np.exp(1j * xi), abs=1e-14)


def test_drift_enters_with_minus_i():
    tri = LevyTriplet(None, [2.0], ZeroMeasure(1))
    assert symbol(tri, 1.5) == pytest.approx(-3.0j)


@pytest.mark.parametrize("xi", [0.1, 1.0, 13.0])
def test_stable_symbol_matches_reference_quadrature(xi):
    nu = Stable(alpha=1.0, scale=1.0)
    closed = float(np.real(nu.jump_symbol(np.array([[xi]]))[0]))
    ref = float(np.real(nu.jump_symbol_quad(xi)))
    assert closed == pytest.approx(ref, rel=1e-6)
    assert closed == pytest.approx(nu.kappa * abs(xi), rel=1e-12)


def test_symbol_hermitian_symmetry():
    tri = LevyTriplet([[0.5]], [1.0], SumMeasure((Atoms([[0.4], [-2.0]], [1.0, 0.5]),
                                                  GaussianDensity(2.0, [0.3], [[0.5]]))))
    xi = np.linspace(-5, 5, 41)
    np.testing.assert_allclose(symbol(tri, -xi), np.conj(symbol(tri, xi)), atol=1e-12)
    assert np.all(symbol(tri, xi).real >= -1e-14)


def test_small_jump_bound_empty_region():
    nu = Atoms([[1.5], [-3.0]], [1.0, 2.0])
    assert re_symbol_small_jump_bound(nu, 2.0) == 0.0


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_small_jump_bound_stable_closed_form(alpha):
    c, xi = 0.7, 4.0
    got = re_symbol_small_jump_bound(Stable(alpha=alpha, scale=c), xi)
    expected = math.cos(1) / 2 * 2 * c * xi**alpha / (2 - alpha)
    assert float(got) == pytest.approx(expected, rel=1e-8)


def test_small_jump_bound_below_symbol():
    rng = np.random.default_rng(1)
    measures = [Stable(alpha=1.3, scale=1.0), GaussianDensity(1.0, [0.0], [[0.2]]),
                UniformDensity([-1.0], [1.0], 2.0)]
    for nu in measures:
        xi = rng.uniform(-50, 50, 100)
        xi = xi[xi != 0]
        bound = np.array([float(re_symbol_small_jump_bound(nu, v)) for v in xi])
        re = nu.jump_symbol(xi.reshape(-1, 1)).real
        assert np.all(bound <= re + 1e-12)


def test_truncate_atoms_keeps_everything():
    nu = Atoms([[0.1], [2.0]], [0.5, 1.5])
    tm = truncate(nu, 1.0)
    assert tm.total_mass == 2.0
    assert len(tm.atom_list()) == 2


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_truncate_stable_mass(alpha):
    assert truncate(Stable(alpha=alpha, scale=1.3), 1.0).total_mass == pytest.approx(2 * 1.3 / alpha)


def test_truncated_mass_monotone_in_epsilon():
    nu = Stable(alpha=1.2, scale=1.0)
    masses = [truncate(nu, e).total_mass for e in (0.1, 0.5, 1.0, 2.0, 5.0)]
    assert all(b <= a for a, b in zip(masses, masses[1:]))


def test_truncate_rejects_nonpositive_epsilon():
    with pytest.raises(InvalidInputError):
        truncate(Stable(), 0.0)


def test_log_moment_of_atom():
    res = moment_integral(Atoms([[2.0]], [1.0]), "log1p")
    assert res.finite and res.value == pytest.approx(math.log(3))


def test_power_moment_of_cauchy():
    res = moment_integral(Stable(alpha=1.0, scale=1.0), "power", 0.5)
    assert res.finite and res.value == pytest.approx(4.0, rel=1e-6)


def test_power_moment_divergent():
    assert not moment_integral(Stable(alpha=0.5, scale=1.0), "power", 1.0).finite


def _log_tail(power):
    def rho(z):
        r = np.abs(z)
        return np.where(r >= math.e, 1.0 / (r**power * np.log(r) ** 2), 0.0)
    return Density(rho=rho, dim=1, symmetric=True)


def test_log_moment_with_borderline_tails():
    # 1/(z^2 log^2 z) integrates log(1+z) to a finite number; 1/(z log^2 z) does not
    assert moment_integral(_log_tail(2.0), "log1p").finite
    assert not moment_integral(_log_tail(1.0), "log1p").finite


def test_second_moment_matrix():
    np.testing.assert_allclose(second_moment_matrix(GaussianDensity(2.0, [1.0], [[0.5]])), [[3.0]])
    assert second_moment_matrix(Stable()) is None


def test_pure_drift_increment():
    tri = LevyTriplet(None, [3.0], ZeroMeasure(1))
    np.testing.assert_array_equal(sample_increment(tri, 2.0, rng=np.random.default_rng(0)), [6.0])


def test_compound_poisson_counts():
    rate, h, n = 1.7, 0.8, 100_000
    tri = LevyTriplet(None, None, Atoms([[1.0]], [rate]))
    z = sample_increment(tri, h, rng=np.random.default_rng(4), size=n)[:, 0]
    assert np.all(z == np.round(z))
    assert abs(z.mean() - rate * h) <= 3 * math.sqrt(rate * h / n)


@pytest.mark.parametrize("alpha", [0.7, 1.0, 1.6])
def test_stable_self_similarity(alpha):
    tri = LevyTriplet(None, None, Stable(alpha=alpha, scale=1.0))
    rng = np.random.default_rng(11)
    h = 0.3
    a = sample_increment(tri, h, rng=rng, size=10_000)[:, 0] / h ** (1 / alpha)
    b = sample_increment(tri, 1.0, rng=rng, size=10_000)[:, 0]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_stable_cf_matches_symbol():
    tri = LevyTriplet(None, None, Stable.from_symbol_scale(1.5, 1.0))
    z = sample_increment(tri, 1.0, rng=np.random.default_rng(2), size=200_000)[:, 0]
    for xi in (0.3, 1.0, 2.0):
        assert abs(np.mean(np.exp(1j * xi * z)) - math.exp(-abs(xi) ** 1.5)) <= 4 / math.sqrt(len(z))


def test_truncated_stable_scheme_matches_exact_law():
    tri = LevyTriplet(None, None, Stable(alpha=1.2, scale=1.0))
    scheme = SmallJumpScheme(epsilon=0.05, gaussian=True, exact_stable=False)
    rng = np.random.default_rng(6)
    a = sample_increment(tri, 1.0, scheme, rng, size=10_000)[:, 0]
    b = sample_increment(tri, 1.0, rng=rng, size=10_000)[:, 0]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_scheme_rate_cap():
    tri = LevyTriplet(None, None, Stable(alpha=1.5, scale=1.0))
    with pytest.raises(ConfigurationError):
        sample_increment(tri, 1.0, SmallJumpScheme(epsilon=1e-6, exact_stable=False, max_rate=1e3),
                         np.random.default_rng(0), size=10)


def test_invalid_measures():
    with pytest.raises(InvalidInputError):
        Atoms([[0.0]], [1.0])
    with pytest.raises(InvalidInputError):
        Stable(alpha=2.0)
    with pytest.raises(InvalidInputError):
        LevyTriplet([[-1.0]], None, ZeroMeasure(1))
