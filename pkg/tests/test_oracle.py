import math

import numpy as np
import pytest
from scipy import stats

from levyou import oracle
from levyou.errors import DomainError, InvalidInputError
from levyou.levy import Atoms, GaussianDensity, LevyTriplet, Stable, SumMeasure, ZeroMeasure
from levyou.ou import OUModel


def brownian(lam=1.0):
    return OUModel([[-lam]], LevyTriplet([[1.0]], None, ZeroMeasure(1)))


def stable(alpha=1.0, lam=1.0):
    return OUModel([[-lam]], LevyTriplet(None, None, Stable.from_symbol_scale(alpha, 1.0)))


def cp():
    return OUModel([[-1.0]], LevyTriplet(None, None, GaussianDensity(1.0, [0.0], [[1.0]])))


def mixed():
    nu = SumMeasure((GaussianDensity(0.7, [0.5], [[0.3]]), Atoms([[-1.5]], [0.4])))
    return OUModel([[-0.8]], LevyTriplet([[0.2]], [0.3], nu))


XI = np.linspace(-6, 6, 25)


def test_zero_time():
    np.testing.assert_array_equal(oracle.accumulated_symbol(mixed(), 0.0, XI), np.zeros(25))


@pytest.mark.parametrize("lam,t", [(0.5, 1.0), (1.0, 2.0), (2.0, 0.3)])
def test_brownian_closed_form(lam, t):
    got = oracle.accumulated_symbol(brownian(lam), t, XI).real
    np.testing.assert_allclose(got, XI**2 * (1 - math.exp(-2 * lam * t)) / (4 * lam), rtol=1e-12)


@pytest.mark.parametrize("alpha,lam,t", [(1.0, 1.0, 1.0), (0.5, 2.0, 3.0), (1.7, 0.5, 0.4)])
def test_stable_closed_form(alpha, lam, t):
    got = oracle.accumulated_symbol(stable(alpha, lam), t, XI).real
    want = np.abs(XI) ** alpha * (1 - math.exp(-alpha * lam * t)) / (alpha * lam)
    np.testing.assert_allclose(got, want, rtol=1e-12)


@pytest.mark.parametrize("t", [0.5, 2.0, math.inf])
def test_fast_path_matches_quadrature(t):
    model = mixed()
    fast = oracle.accumulated_symbol(model, t, XI)
    for xi, f in zip(XI[::4], fast[::4]):
        ref = oracle.accumulated_symbol_quad(model, t, xi)
        assert abs(f - ref) <= 1e-8 * max(1.0, abs(ref))


def test_generic_path_in_2d_matches_quadrature():
    A = np.array([[-1.0, 0.5], [0.0, -2.0]])
    model = OUModel(A, LevyTriplet(np.eye(2) * 0.1, [0.2, -0.1],
                                   GaussianDensity(1.0, [0.3, 0.0], np.eye(2) * 0.5)))
    pts = np.array([[1.0, 0.5], [-2.0, 3.0], [0.0, -4.0]])
    fast = oracle.accumulated_symbol(model, 1.5, pts)
    for p, f in zip(pts, fast):
        ref = oracle.accumulated_symbol_quad(model, 1.5, p)
        assert abs(f - ref) <= 1e-7 * max(1.0, abs(ref))


def test_symbol_invariants():
    model = mixed()
    vals = [oracle.accumulated_symbol(model, t, XI) for t in (0.5, 1.0, 2.0, 4.0)]
    for v in vals:
        assert np.all(v.real >= -1e-14)
        np.testing.assert_allclose(oracle.accumulated_symbol(model, 1.0, -XI),
                                   np.conj(vals[1]), atol=1e-12)
    for a, b in zip(vals, vals[1:]):
        assert np.all(b.real >= a.real - 1e-12)


def test_phi_monotone():
    model = mixed()
    rhos = [0.5, 1.0, 2.0, 4.0, 8.0]
    for t in (0.5, 2.0):
        vals = [oracle.phi_t(model, t, r) for r in rhos]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert oracle.phi_t(model, 2.0, 3.0) >= oracle.phi_t(model, 1.0, 3.0)


@pytest.mark.parametrize("alpha,lam,t", [(1.0, 1.0, 1.0), (1.5, 0.5, 2.0), (0.7, 2.0, 0.5)])
def test_phi_inverse_closed_form(alpha, lam, t):
    want = (alpha * lam / (1 - math.exp(-alpha * lam * t))) ** (1 / alpha)
    assert oracle.phi_t_inverse(stable(alpha, lam), t, 1.0) == pytest.approx(want, rel=1e-8)


def test_phi_inverse_nonincreasing_in_t():
    vals = [oracle.phi_t_inverse(stable(1.3), t, 1.0) for t in (0.5, 1.0, 2.0, 4.0, 8.0)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_compound_poisson_phi_is_bounded():
    model = cp()
    t = 1.5
    assert oracle.phi_t(model, t, 1e4) <= 2 * 1.0 * t
    with pytest.raises(DomainError) as err:
        oracle.phi_t_inverse(model, t, 2.0 * t + 0.1)
    assert "bound" in err.value.diagnostics


def test_gaussian_density_closed_form():
    t, x = 0.8, 1.5
    dens = oracle.density_by_fft(brownian(), t, [x])
    grid = dens.axes[0]
    sd = math.sqrt((1 - math.exp(-2 * t)) / 2)
    want = stats.norm.pdf(grid, math.exp(-t) * x, sd)
    assert np.max(np.abs(dens.values - want)) <= 1e-6


@pytest.mark.parametrize("factory", [brownian, stable, cp, mixed])
def test_density_normalisation(factory):
    dens = oracle.density_by_fft(factory(), 1.0, [0.3])
    assert abs(dens.total - 1.0) <= 1e-4
    assert np.all(dens.values >= 0)
    assert dens.clipped_mass >= 0


def test_cauchy_density_symmetry():
    t, x = 1.0, 2.0
    dens = oracle.density_by_fft(stable(), t, [x])
    centre = math.exp(-t) * x
    grid = dens.axes[0]
    mirrored = np.interp(2 * centre - grid, grid, dens.values)
    inner = np.abs(grid - centre) < 0.5 * (grid[-1] - grid[0]) - 1.0
    assert np.max(np.abs(dens.values[inner] - mirrored[inner])) <= 1e-8


def test_density_translation_structure():
    model, t = mixed(), 1.3
    a = oracle.density_by_fft(model, t, [0.0])
    b = oracle.density_by_fft(model, t, [2.0])
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_allclose(b.axes[0] - a.axes[0], 2.0 * model.flow(t)[0, 0], rtol=1e-12)


def test_density_rejects_high_dimension():
    model = OUModel(-np.eye(3), LevyTriplet(np.eye(3), None, ZeroMeasure(3)))
    with pytest.raises(InvalidInputError):
        oracle.density_by_fft(model, 1.0, np.zeros(3))


def test_tv_same_point():
    assert oracle.tv_distance_oracle(mixed(), 1.0, [0.7], [0.7]).value == 0.0


@pytest.mark.parametrize("t,gap", [(0.5, 0.5), (1.0, 2.0), (4.0, 1.0)])
def test_tv_gaussian_closed_form(t, gap):
    sd = math.sqrt((1 - math.exp(-2 * t)) / 2)
    m = math.exp(-t) * gap / sd
    est = oracle.tv_distance_oracle(brownian(), t, [0.0], [gap])
    assert est.value == pytest.approx(2 * (2 * stats.norm.cdf(m / 2) - 1), abs=1e-3)


def test_tv_gaussian_2d_closed_form():
    A = np.array([[-1.0, 1.0], [-1.0, -1.0]])
    model = OUModel(A, LevyTriplet(np.eye(2), None, ZeroMeasure(2)))
    t, x = 1.0, np.array([1.0, -0.5])
    cov = (1 - math.exp(-2 * t)) / 2 * np.eye(2)
    v = model.flow(t) @ x
    m = math.sqrt(v @ np.linalg.solve(cov, v))
    est = oracle.tv_distance_oracle(model, t, x, [0.0, 0.0])
    assert est.value == pytest.approx(2 * (2 * stats.norm.cdf(m / 2) - 1), abs=1e-3)


@pytest.mark.parametrize("factory", [stable, cp, mixed])
def test_tv_bounds_and_translation(factory):
    model, t = factory(), 1.0
    a = oracle.tv_distance_oracle(model, t, [0.4], [1.4])
    b = oracle.tv_distance_oracle(model, t, [0.0], [1.0])
    assert 0.0 <= a.value <= 2.0 and a.bar >= 0.0
    assert a.value == pytest.approx(b.value, abs=1e-9)


def test_tv_disjoint_atoms_reach_two():
    model = OUModel([[-1.0]], LevyTriplet(None, None, Atoms([[1.0]], [1e-3])))
    est = oracle.tv_distance_oracle(model, 0.5, [0.0], [1.0])
    assert est.value == pytest.approx(2.0, abs=0.01)


def test_cauchy_tv_decreases_in_t():
    vals = [oracle.tv_distance_oracle(stable(), t, [1.0], [0.0]).value
            for t in (0.5, 1.0, 2.0, 4.0, 8.0)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_stationary_density_gaussian():
    dens = oracle.stationary_density(brownian())
    grid = dens.axes[0]
    assert np.max(np.abs(dens.values - stats.norm.pdf(grid, 0.0, math.sqrt(0.5)))) <= 1e-6


def test_vs_invariant_gaussian_numeric_integral():
    t, x = 1.0, 2.0
    m, s = math.exp(-t) * x, math.sqrt((1 - math.exp(-2 * t)) / 2)
    grid = np.linspace(-12, 12, 400_001)
    ref = float(np.sum(np.abs(stats.norm.pdf(grid, m, s) - stats.norm.pdf(grid, 0, math.sqrt(0.5))))
                * (grid[1] - grid[0]))
    est = oracle.tv_vs_invariant_oracle(brownian(), t, [x])
    assert est.value == pytest.approx(ref, abs=1e-3)


def test_compound_poisson_bracket_contains_oracle():
    model = cp()
    for t in (1.0, 4.0):
        ref = oracle.tv_distance_oracle(model, t, [1.0], [0.0]).value
        br = oracle._compound_poisson_bracket(model, t, [1.0], [0.0])
        assert br.low - 1e-9 <= ref <= br.high + 1e-9
