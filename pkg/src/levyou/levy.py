"""Levy measures, Levy triplets, the characteristic exponent and increment sampling.

Sign convention: ``E exp(i<xi, Z_t>) = exp(-t * symbol(xi))`` with

    symbol(xi) = 1/2 <Q xi, xi> - i <b, xi>
                 + int (1 - exp(i<xi,z>) + i<xi,z> 1{|z|<1}) nu(dz)

so that a pure drift ``b`` moves the process by ``+b*t``.

A measure is "cut" at radius ``cut`` when it is restricted to ``{|z| >= cut}``.
Truncation follows the whole-measure rule: a finite measure is never cut, an
infinite one is cut at ``epsilon`` in every component.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, InvalidInputError, NumericError
from .linalg import as_matrix

__all__ = [
    "LevyMeasure",
    "ZeroMeasure",
    "Atoms",
    "Stable",
    "Density",
    "GaussianDensity",
    "UniformDensity",
    "SumMeasure",
    "LevyTriplet",
    "TruncatedMeasure",
    "MomentResult",
    "SmallJumpScheme",
    "symbol",
    "re_symbol_small_jump_bound",
    "truncate",
    "moment_integral",
    "sample_increment",
    "sphere_area",
    "second_moment_matrix",
    "large_jump_mean",
]

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-8
_THETA_NODES = 256


def sphere_area(d):
    """Surface area of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _as_points(z, d):
    z = np.asarray(z, dtype=float)
    if d == 1 and (z.ndim == 0 or z.shape[-1] != 1):
        z = z[..., None]
    if z.shape[-1] != d:
        raise InvalidInputError(f"expected points of dimension {d}, got shape {z.shape}")
    return z


def _quad(f, a, b, what, **kw):
    kw.setdefault("epsabs", QUAD_EPSABS)
    kw.setdefault("epsrel", QUAD_EPSREL)
    kw.setdefault("limit", 500)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, **kw)
    tol = max(kw["epsabs"], kw["epsrel"] * abs(val))
    if not np.isfinite(val) or err > 1e3 * tol:
        raise NumericError(f"quadrature did not converge for {what}", value=val, residual=err)
    return val


def _unit_directions(d, n, rng):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _theta_grid(n=_THETA_NODES):
    th = 2 * np.pi * np.arange(n) / n
    return np.stack([np.cos(th), np.sin(th)], axis=1), 2 * np.pi / n


class LevyMeasure:
    """Common interface of every Levy measure variant.

    Subclasses describe the continuous part through ``pdf`` and
    ``radial_density`` and the discrete part through ``atom_list``.
    """

    dim: int = 1
    symmetric: bool = False

    # --- structure -----------------------------------------------------
    @property
    def finite(self):
        return math.isfinite(self.total_mass)

    @property
    def total_mass(self):
        raise NotImplementedError

    def effective_cut(self, epsilon):
        """Cut radius used for nu_epsilon (0 for finite measures)."""
        return 0.0 if self.finite else float(epsilon)

    def atom_list(self, cut=0.0):
        """Atom locations (k, d) and masses (k,) with |z| >= cut."""
        return np.zeros((0, self.dim)), np.zeros(0)

    def pdf(self, z, cut=0.0):
        """Density of the absolutely continuous part restricted to |z| >= cut."""
        z = _as_points(z, self.dim)
        return np.zeros(z.shape[:-1])

    def radial_density(self, r):
        """Continuous mass per unit radius at radius r > 0."""
        return np.zeros_like(np.asarray(r, dtype=float))

    def smoothness_scale(self):
        """Length scale on which the continuous density varies (grid hint)."""
        return 1.0

    def breakpoints(self):
        """Coordinates (1-d) where the continuous density may jump."""
        return ()

    # --- integrals -----------------------------------------------------
    def radial_integral(self, g, a, b):
        """int_{a<=|z|<b} g(|z|) nu(dz) for the continuous part plus atoms."""
        total = 0.0
        if b > a:
            total += self._radial_quad(g, a, b)
        loc, mass = self.atom_list()
        if len(mass):
            r = np.linalg.norm(loc, axis=1)
            sel = (r >= a) & (r < b)
            total += float(np.sum(mass[sel] * g(r[sel])))
        return total

    def _radial_quad(self, g, a, b):
        return 0.0

    def mass_outside(self, cut):
        """nu({|z| >= cut}); infinite when cut = 0 for infinite measures."""
        raise NotImplementedError

    def small_covariance(self, eps):
        """int_{|z|<eps} z z^T nu(dz)."""
        return np.zeros((self.dim, self.dim))

    def compensator(self, cut):
        """int_{cut <= |z| < 1} z nu(dz)."""
        return np.zeros(self.dim)

    def small_ball_quadratic(self, xi):
        """int_{|z| <= 1/|xi|} <z, xi>^2 nu(dz)."""
        raise NotImplementedError

    def jump_symbol(self, xi):
        """Jump part of the symbol, vectorised over xi of shape (..., d)."""
        raise NotImplementedError

    def sample_cut(self, cut, n, rng):
        """n draws from nu restricted to |z| >= cut, normalised to unit mass."""
        raise NotImplementedError

    def suggested_radius(self, cut, leak):
        """Radius R with nu({|z| >= max(R, cut)}) <= leak."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ZeroMeasure(LevyMeasure):
    dim: int = 1
    symmetric: bool = True

    @property
    def total_mass(self):
        return 0.0

    def mass_outside(self, cut):
        return 0.0

    def small_ball_quadratic(self, xi):
        xi = _as_points(xi, self.dim)
        return np.zeros(xi.shape[:-1])

    def jump_symbol(self, xi):
        xi = _as_points(xi, self.dim)
        return np.zeros(xi.shape[:-1], dtype=complex)

    def sample_cut(self, cut, n, rng):
        raise ConfigurationError("the zero measure has no jumps to sample")

    def suggested_radius(self, cut, leak):
        return 1.0


@dataclass(frozen=True, eq=False)
class Atoms(LevyMeasure):
    """Finite sum of point masses away from the origin."""

    locations: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    masses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        loc = np.atleast_2d(np.asarray(self.locations, dtype=float))
        if loc.shape[0] == 1 and loc.shape[1] != 1 and np.asarray(self.locations).ndim == 1:
            loc = loc.reshape(-1, 1)
        mass = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if loc.shape[0] != mass.shape[0]:
            raise InvalidInputError("atoms: locations and masses differ in length")
        if np.any(mass <= 0) or not np.all(np.isfinite(mass)):
            raise InvalidInputError("atoms: masses must be positive and finite")
        if np.any(np.linalg.norm(loc, axis=1) == 0):
            raise InvalidInputError("atoms: a Levy measure has no atom at the origin")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "masses", mass)

    @property
    def dim(self):
        return self.locations.shape[1]

    @property
    def symmetric(self):
        pos = {tuple(np.round(p, 12)): m for p, m in zip(self.locations, self.masses)}
        return all(abs(pos.get(tuple(np.round(-p, 12)), 0.0) - m) <= 1e-12 * m
                   for p, m in zip(self.locations, self.masses))

    @property
    def total_mass(self):
        return float(np.sum(self.masses))

    def atom_list(self, cut=0.0):
        keep = np.linalg.norm(self.locations, axis=1) >= cut
        return self.locations[keep], self.masses[keep]

    def mass_outside(self, cut):
        return float(np.sum(self.atom_list(cut)[1]))

    def small_covariance(self, eps):
        r = np.linalg.norm(self.locations, axis=1)
        sel = r < eps
        loc, m = self.locations[sel], self.masses[sel]
        return (loc * m[:, None]).T @ loc

    def compensator(self, cut):
        r = np.linalg.norm(self.locations, axis=1)
        sel = (r >= cut) & (r < 1)
        return np.sum(self.locations[sel] * self.masses[sel, None], axis=0)

    def small_ball_quadratic(self, xi):
        xi = _as_points(xi, self.dim)
        nxi = np.linalg.norm(xi, axis=-1)
        r = np.linalg.norm(self.locations, axis=1)
        proj = xi @ self.locations.T
        inside = r[None, :] * nxi.reshape(-1, 1) <= 1.0
        out = np.sum(np.where(inside, proj.reshape(-1, len(r)) ** 2 * self.masses, 0.0), axis=1)
        return out.reshape(nxi.shape)

    def jump_symbol(self, xi):
        xi = _as_points(xi, self.dim)
        proj = xi @ self.locations.T
        small = np.linalg.norm(self.locations, axis=1) < 1.0
        terms = 1.0 - np.exp(1j * proj) + 1j * proj * small
        return terms @ self.masses

    def sample_cut(self, cut, n, rng):
        loc, m = self.atom_list(cut)
        if not len(m):
            raise ConfigurationError("no atoms outside the cut radius")
        idx = rng.choice(len(m), size=n, p=m / m.sum())
        return loc[idx]

    def suggested_radius(self, cut, leak):
        return float(np.max(np.linalg.norm(self.locations, axis=1))) if len(self.masses) else 1.0

    def smoothness_scale(self):
        return 0.0


@dataclass(frozen=True, eq=False)
class Stable(LevyMeasure):
    """Isotropic alpha-stable measure with density ``scale * |z|^(-d-alpha)``."""

    alpha: float = 1.0
    scale: float = 1.0
    dim: int = 1
    symmetric: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise InvalidInputError("stable index must lie in (0, 2)")
        if not self.scale > 0:
            raise InvalidInputError("stable scale must be positive")
        if int(self.dim) < 1:
            raise InvalidInputError("dimension must be positive")

    @classmethod
    def from_symbol_scale(cls, alpha, kappa, dim=1):
        """Stable measure whose symbol is ``kappa * |xi|^alpha``."""
        return cls(alpha=alpha, scale=kappa / cls._kappa_per_scale(alpha, dim), dim=dim)

    @staticmethod
    def _kappa_per_scale(alpha, d):
        if abs(alpha - 1.0) < 1e-14:
            radial = math.pi / 2
        else:
            radial = math.gamma(1.0 - alpha) * math.cos(math.pi * alpha / 2) / alpha
        angular = 2 * math.pi ** ((d - 1) / 2) * math.gamma((alpha + 1) / 2) / math.gamma((d + alpha) / 2)
        return radial * angular

    @property
    def kappa(self):
        """Constant in symbol(xi) = kappa |xi|^alpha."""
        return self.scale * self._kappa_per_scale(self.alpha, self.dim)

    @property
    def total_mass(self):
        return math.inf

    def pdf(self, z, cut=0.0):
        z = _as_points(z, self.dim)
        r = np.linalg.norm(z, axis=-1)
        with np.errstate(divide="ignore"):
            val = self.scale * r ** (-self.dim - self.alpha)
        return np.where((r >= cut) & (r > 0), val, 0.0)

    def radial_density(self, r):
        r = np.asarray(r, dtype=float)
        return self.scale * sphere_area(self.dim) * r ** (-1.0 - self.alpha)

    def _radial_quad(self, g, a, b):
        pts = [p for p in (1.0,) if a < p < b]
        if math.isinf(b):
            head = _quad(lambda r: g(r) * float(self.radial_density(r)), a, max(a, 1.0) * 2, "stable radial")
            tail = _quad(lambda r: g(r) * float(self.radial_density(r)), max(a, 1.0) * 2, np.inf, "stable radial")
            return head + tail
        return _quad(lambda r: g(r) * float(self.radial_density(r)), a, b, "stable radial", points=pts or None)

    def mass_outside(self, cut):
        if cut <= 0:
            return math.inf
        return self.scale * sphere_area(self.dim) * cut ** (-self.alpha) / self.alpha

    def small_covariance(self, eps):
        s = self.scale * sphere_area(self.dim) / self.dim * eps ** (2 - self.alpha) / (2 - self.alpha)
        return s * np.eye(self.dim)

    def small_ball_quadratic(self, xi):
        xi = _as_points(xi, self.dim)
        nxi = np.linalg.norm(xi, axis=-1)
        return self.scale * sphere_area(self.dim) / self.dim * nxi**self.alpha / (2 - self.alpha)

    def jump_symbol(self, xi):
        xi = _as_points(xi, self.dim)
        return (self.kappa * np.linalg.norm(xi, axis=-1) ** self.alpha).astype(complex)

    def jump_symbol_quad(self, xi):
        """Jump symbol by radial quadrature, independent of the closed form.

        Isotropy reduces the integral to the angular factor times
        int_0^inf (1 - cos(r|xi|)) r^(-1-alpha) dr, split at r|xi| = 1.
        """
        nxi = float(np.linalg.norm(np.atleast_1d(np.asarray(xi, dtype=float))))
        if nxi == 0:
            return 0.0 + 0.0j
        d, a = self.dim, self.alpha
        angular = 2 * math.pi ** ((d - 1) / 2) * math.gamma((a + 1) / 2) / math.gamma((d + a) / 2)
        head = _quad(lambda u: 2 * math.sin(u / 2) ** 2 * u ** (-1 - a), 0.0, 1.0, "stable")
        tail = (_quad(lambda u: u ** (-1 - a), 1.0, np.inf, "stable")
                - _quad(lambda u: u ** (-1 - a), 1.0, np.inf, "stable", weight="cos", wvar=1.0))
        return complex(self.scale * angular * (head + tail) * nxi**a)

    def sample_cut(self, cut, n, rng):
        if cut <= 0:
            raise ConfigurationError("an infinite stable measure must be cut at a positive radius")
        radius = cut * rng.random(n) ** (-1.0 / self.alpha)
        return radius[:, None] * _unit_directions(self.dim, n, rng)

    def sample_symbol_law(self, h, n, rng):
        """Exact draws of a vector with characteristic function exp(-h*kappa*|xi|^alpha)."""
        a = self.alpha
        if self.dim == 1:
            v = rng.uniform(-math.pi / 2, math.pi / 2, n)
            w = rng.exponential(1.0, n)
            if abs(a - 1.0) < 1e-14:
                s = np.tan(v)
            else:
                s = (np.sin(a * v) / np.cos(v) ** (1 / a)
                     * (np.cos((1 - a) * v) / w) ** ((1 - a) / a))
            return ((h * self.kappa) ** (1 / a) * s)[:, None]
        # sub-Gaussian: sqrt(W) G with W positive (alpha/2)-stable, E exp(-sW) = exp(-s^(alpha/2))
        b = a / 2
        u = rng.uniform(0, math.pi, n)
        w = rng.exponential(1.0, n)
        pos = (np.sin(b * u) / np.sin(u) ** (1 / b)) * (np.sin((1 - b) * u) / w) ** ((1 - b) / b)
        g = rng.standard_normal((n, self.dim))
        # sqrt(pos)*G has exponent (|xi|^2/2)^(alpha/2)
        factor = (h * self.kappa * 2 ** (a / 2)) ** (1 / a)
        return factor * np.sqrt(pos)[:, None] * g

    def suggested_radius(self, cut, leak):
        c = self.scale * sphere_area(self.dim) / self.alpha
        return max(cut, (c / leak) ** (1.0 / self.alpha))

    def smoothness_scale(self):
        return 1.0


@dataclass(frozen=True, eq=False)
class Density(LevyMeasure):
    """Levy measure nu(dz) = rho(z) dz for a user-supplied vectorised density.

    ``rho`` maps points of shape (n, d) (or (n,) in 1-d) to non-negative
    values.  ``total_mass_hint`` may be given to skip the numerical finiteness
    test; ``support_radius`` bounds the support when known.
    """

    rho: object = None
    dim: int = 1
    total_mass_hint: float | None = None
    symmetric: bool = False
    support_radius: float | None = None
    name: str = "density"

    def __post_init__(self):
        if self.rho is None or not callable(self.rho):
            raise InvalidInputError("density variant needs a callable rho")
        if self.dim not in (1, 2):
            raise InvalidInputError("density variants are supported for d <= 2")

    def _rho(self, z):
        z = _as_points(z, self.dim)
        flat = z.reshape(-1, self.dim)
        arg = flat[:, 0] if self.dim == 1 else flat
        with np.errstate(all="ignore"):
            val = np.asarray(self.rho(arg), dtype=float).reshape(z.shape[:-1])
        return np.where(np.isfinite(val), np.maximum(val, 0.0), 0.0)

    def pdf(self, z, cut=0.0):
        z = _as_points(z, self.dim)
        r = np.linalg.norm(z, axis=-1)
        return np.where((r >= cut) & (r > 0), self._rho(z), 0.0)

    def radial_density(self, r):
        r = np.asarray(r, dtype=float)
        if self.dim == 1:
            return self._rho(r) + self._rho(-r)
        dirs, dth = _theta_grid()
        pts = r[..., None, None] * dirs
        return np.sum(self._rho(pts), axis=-1) * dth * r

    def _radial_breaks(self, a, b):
        pts = [1.0]
        if self.support_radius is not None:
            pts.append(self.support_radius)
        return sorted(p for p in pts if a < p < b)

    def _radial_quad(self, g, a, b):
        f = lambda r: g(r) * float(self.radial_density(r))
        if math.isinf(b):
            if self.support_radius is not None:
                b = max(a, self.support_radius)
                if b <= a:
                    return 0.0
                return _quad(f, a, b, self.name, points=self._radial_breaks(a, b) or None)
            mid = max(2 * a, 2.0)
            return (_quad(f, a, mid, self.name, points=self._radial_breaks(a, mid) or None)
                    + _quad(f, mid, np.inf, self.name))
        return _quad(f, a, b, self.name, points=self._radial_breaks(a, b) or None)

    @cached_property
    def total_mass(self):
        if self.total_mass_hint is not None:
            return float(self.total_mass_hint)
        inner = moment_integral(self, "mass_small")
        if not inner.finite:
            return math.inf
        return inner.value + self._radial_quad(lambda r: 1.0, 1.0, np.inf)

    def mass_outside(self, cut):
        if cut <= 0:
            if self.finite:
                return self.total_mass
            return math.inf
        return self._radial_quad(lambda r: 1.0, cut, np.inf)

    def small_covariance(self, eps):
        if self.dim == 1:
            return np.array([[self._radial_quad(lambda r: r * r, 0.0, eps)]])
        dirs, dth = _theta_grid()
        outer = dirs[:, :, None] * dirs[:, None, :]

        def comp(i, j):
            f = lambda r: r**3 * float(np.sum(self._rho(r * dirs) * outer[:, i, j]) * dth)
            return _quad(f, 0.0, eps, self.name)

        return np.array([[comp(i, j) for j in range(2)] for i in range(2)])

    def compensator(self, cut):
        if self.symmetric or cut >= 1:
            return np.zeros(self.dim)
        if self.dim == 1:
            f = lambda r: r * float(self._rho(r) - self._rho(-r))
            return np.array([_quad(f, cut, 1.0, self.name)])
        dirs, dth = _theta_grid()
        out = []
        for i in range(2):
            f = lambda r, i=i: r * r * float(np.sum(self._rho(r * dirs) * dirs[:, i]) * dth)
            out.append(_quad(f, cut, 1.0, self.name))
        return np.array(out)

    def small_ball_quadratic(self, xi):
        xi = _as_points(xi, self.dim)
        flat = xi.reshape(-1, self.dim)
        out = np.empty(len(flat))
        for k, x in enumerate(flat):
            n = np.linalg.norm(x)
            if n == 0:
                out[k] = 0.0
                continue
            if self.dim == 1:
                out[k] = n * n * self._radial_quad(lambda r: r * r, 0.0, 1.0 / n)
            else:
                dirs, dth = _theta_grid()
                proj2 = (dirs @ x) ** 2
                f = lambda r: r**3 * float(np.sum(self._rho(r * dirs) * proj2) * dth)
                out[k] = _quad(f, 0.0, 1.0 / n, self.name)
        return out.reshape(xi.shape[:-1])

    # --- symbol ----------------------------------------------------------
    def _jump_symbol_scalar_1d(self, x):
        """Jump symbol at one real frequency by adaptive quadrature."""
        if x == 0:
            return 0.0 + 0.0j
        n = abs(x)
        even = lambda r: float(self._rho(r) + self._rho(-r))
        odd = lambda r: float(self._rho(r) - self._rho(-r))
        split = 1.0 / n
        inner_pts = [p for p in [split] + self._radial_breaks(0.0, 1.0) if 0 < p < 1]
        # inner region 0 < r < 1
        if split < 1.0:
            re_in = _quad(lambda r: 2 * math.sin(n * r / 2) ** 2 * even(r), 0.0, split, self.name)
            re_in += (_quad(even, split, 1.0, self.name, points=[p for p in inner_pts if p > split] or None)
                      - _quad(even, split, 1.0, self.name, weight="cos", wvar=n))
        else:
            re_in = _quad(lambda r: 2 * math.sin(n * r / 2) ** 2 * even(r), 0.0, 1.0, self.name,
                          points=inner_pts or None)
        # outer region r >= 1
        top = self.support_radius if self.support_radius is not None else np.inf
        if top <= 1.0:
            re_out = 0.0
        elif math.isinf(top):
            re_out = (_quad(even, 1.0, np.inf, self.name)
                      - _quad(even, 1.0, np.inf, self.name, weight="cos", wvar=n))
        else:
            re_out = (_quad(even, 1.0, top, self.name)
                      - _quad(even, 1.0, top, self.name, weight="cos", wvar=n))
        im = 0.0
        if not self.symmetric:
            im_in = _quad(lambda r: (math.sin(n * r) - n * r) * odd(r), 0.0, 1.0, self.name,
                          points=inner_pts or None)
            if top <= 1.0:
                im_out = 0.0
            else:
                im_out = _quad(odd, 1.0, top, self.name, weight="sin", wvar=n)
            im = -(im_in + im_out) * math.copysign(1.0, x)
        return complex(re_in + re_out, im)

    def _jump_symbol_scalar_2d(self, x):
        n = float(np.linalg.norm(x))
        if n == 0:
            return 0.0 + 0.0j
        k = max(_THETA_NODES, int(8 * n * (self.support_radius or 50.0)))
        dirs, dth = _theta_grid(min(k, 1 << 14))
        proj = dirs @ x

        def integrand(r, part):
            p = r * proj
            rho = self._rho(r * dirs)
            if part == 0:
                return r * float(np.sum(2 * np.sin(p / 2) ** 2 * rho) * dth)
            comp = p if r < 1 else 0.0
            return r * float(np.sum((comp - np.sin(p)) * rho) * dth)

        top = self.support_radius if self.support_radius is not None else np.inf
        pts = sorted({p for p in (1.0 / n, 1.0) if p < top})
        val = []
        for part in (0, 1):
            if part == 1 and self.symmetric:
                val.append(0.0)
                continue
            edges = [0.0] + pts + [top]
            val.append(sum(_quad(lambda r: integrand(r, part), a, b, self.name)
                           for a, b in zip(edges[:-1], edges[1:])))
        return complex(val[0], val[1])

    @cached_property
    def _symbol_cache(self):
        return {}

    def jump_symbol(self, xi):
        xi = _as_points(xi, self.dim)
        flat = xi.reshape(-1, self.dim)
        if self.dim == 2:
            out = np.array([self._jump_symbol_scalar_2d(x) for x in flat])
            return out.reshape(xi.shape[:-1])
        x = flat[:, 0]
        uniq = np.unique(np.abs(x))
        if len(uniq) <= 256:
            table = {u: self._jump_symbol_scalar_1d(u) for u in uniq}
            pos = np.array([table[abs(v)] for v in x], dtype=complex)
        else:
            pos = self._spline_symbol(np.abs(x))
        out = np.where(x < 0, np.conj(pos), pos)
        return out.reshape(xi.shape[:-1])

    def _spline_symbol(self, ax):
        """Symbol at many |xi| by cubic interpolation in log|xi| (40 nodes per decade)."""
        nz = ax[ax > 0]
        out = np.zeros(ax.shape, dtype=complex)
        if not len(nz):
            return out
        lo = math.floor(math.log10(nz.min())) - 0.5
        hi = math.ceil(math.log10(nz.max())) + 0.5
        key = (lo, hi)
        if key not in self._symbol_cache:
            v = np.linspace(lo * math.log(10), hi * math.log(10), int((hi - lo) * 40) + 1)
            vals = np.array([self._jump_symbol_scalar_1d(math.exp(t)) for t in v])
            self._symbol_cache[key] = (CubicSpline(v, vals.real), CubicSpline(v, vals.imag))
        sr, si = self._symbol_cache[key]
        lv = np.log(nz)
        out[ax > 0] = sr(lv) + 1j * si(lv)
        return out

    # --- sampling --------------------------------------------------------
    def sample_cut(self, cut, n, rng):
        """Piecewise-constant sampler on a fine lattice (approximate)."""
        R = self.suggested_radius(cut, 1e-9 * max(self.mass_outside(max(cut, 1e-300)), 1e-300))
        if self.dim == 1:
            h = min(R / 2e5, max(cut, 1e-3) / 50)
            edges = np.arange(-R, R + h, h)
            from .lattice import cell_masses_1d  # local import: lattice depends on this module

            w = cell_masses_1d(self, edges, cut)
            idx = rng.choice(len(w), size=n, p=w / w.sum())
            return (edges[idx] + h * rng.random(n))[:, None]
        from .lattice import cell_masses_2d

        h = R / 400
        edges = np.arange(-R, R + h, h)
        w = cell_masses_2d(self, edges, edges, cut).ravel()
        idx = rng.choice(len(w), size=n, p=w / w.sum())
        i, j = np.divmod(idx, len(edges) - 1)
        return np.stack([edges[i], edges[j]], axis=1) + h * rng.random((n, 2))

    def suggested_radius(self, cut, leak):
        if self.support_radius is not None:
            return max(self.support_radius, cut)
        R = max(1.0, cut)
        while R < 1e12 and self.mass_outside(R) > leak:
            R *= 2
        return R


@dataclass(frozen=True, eq=False)
class GaussianDensity(Density):
    """Finite measure ``mass * N(mean, cov)`` (compound Poisson with Gaussian jumps)."""

    mass: float = 1.0
    mean: np.ndarray = None
    cov: np.ndarray = None

    def __init__(self, mass=1.0, mean=None, cov=None, dim=None):
        cov = np.atleast_2d(np.asarray(1.0 if cov is None else cov, dtype=float))
        d = cov.shape[0] if dim is None else int(dim)
        if cov.shape == (1, 1) and d > 1:
            cov = cov[0, 0] * np.eye(d)
        mean = np.zeros(d) if mean is None else np.asarray(mean, dtype=float).reshape(d)
        if cov.shape != (d, d) or np.min(np.linalg.eigvalsh(cov)) <= 0:
            raise InvalidInputError("gaussian jump covariance must be symmetric positive definite")
        if not mass > 0:
            raise InvalidInputError("gaussian jump mass must be positive")
        prec = np.linalg.inv(cov)
        norm = mass / math.sqrt((2 * math.pi) ** d * np.linalg.det(cov))

        def rho(z):
            z = np.asarray(z, dtype=float).reshape(-1, d) - mean
            return norm * np.exp(-0.5 * np.einsum("ni,ij,nj->n", z, prec, z))

        object.__setattr__(self, "mass", float(mass))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        Density.__init__(self, rho=rho, dim=d, total_mass_hint=float(mass),
                         symmetric=bool(np.all(mean == 0)), support_radius=None, name="gaussian")

    @cached_property
    def _inner_first_moment(self):
        if np.all(self.mean == 0):
            return np.zeros(self.dim)
        return Density.compensator(self, 0.0)

    def compensator(self, cut):
        if cut == 0:
            return self._inner_first_moment
        return Density.compensator(self, cut)

    def jump_symbol(self, xi):
        xi = _as_points(xi, self.dim)
        quad = np.einsum("...i,ij,...j->...", xi, self.cov, xi)
        ft = np.exp(1j * (xi @ self.mean) - 0.5 * quad)
        return self.mass * (1.0 - ft) + 1j * (xi @ self._inner_first_moment)

    def sample_cut(self, cut, n, rng):
        if cut > 0:
            return Density.sample_cut(self, cut, n, rng)
        return rng.multivariate_normal(self.mean, self.cov, size=n, method="cholesky")

    def suggested_radius(self, cut, leak):
        sd = math.sqrt(float(np.max(np.linalg.eigvalsh(self.cov))))
        k = math.sqrt(2 * max(math.log(max(self.mass, 1e-300) / leak), 1.0)) + 1.0
        return max(cut, float(np.linalg.norm(self.mean)) + k * sd * math.sqrt(self.dim))

    def smoothness_scale(self):
        return math.sqrt(float(np.min(np.linalg.eigvalsh(self.cov))))

    def cdf_1d(self, x):
        sd = math.sqrt(self.cov[0, 0])
        return self.mass * special.ndtr((np.asarray(x) - self.mean[0]) / sd)


@dataclass(frozen=True, eq=False)
class UniformDensity(Density):
    """Finite measure with constant density on an interval (1-d) or a box."""

    low: np.ndarray = None
    high: np.ndarray = None
    mass: float = 1.0

    def __init__(self, low, high, mass=1.0):
        low = np.atleast_1d(np.asarray(low, dtype=float))
        high = np.atleast_1d(np.asarray(high, dtype=float))
        if low.shape != high.shape or np.any(high <= low):
            raise InvalidInputError("uniform density needs low < high componentwise")
        d = low.shape[0]
        vol = float(np.prod(high - low))
        level = mass / vol

        def rho(z):
            z = np.asarray(z, dtype=float).reshape(-1, d)
            inside = np.all((z >= low) & (z <= high), axis=1)
            return np.where(inside, level, 0.0)

        radius = float(np.max(np.linalg.norm(np.stack([low, high]), axis=1))) if d == 1 else \
            float(np.linalg.norm(np.maximum(np.abs(low), np.abs(high))))
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        object.__setattr__(self, "mass", float(mass))
        Density.__init__(self, rho=rho, dim=d, total_mass_hint=float(mass),
                         symmetric=bool(np.all(low == -high)), support_radius=radius, name="uniform")

    def sample_cut(self, cut, n, rng):
        if cut > 0:
            return Density.sample_cut(self, cut, n, rng)
        return self.low + (self.high - self.low) * rng.random((n, self.dim))

    def smoothness_scale(self):
        return float(np.min(self.high - self.low))

    def breakpoints(self):
        return (float(self.low[0]), float(self.high[0])) if self.dim == 1 else ()


@dataclass(frozen=True, eq=False)
class SumMeasure(LevyMeasure):
    parts: tuple = ()

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise InvalidInputError("sum measure needs at least one part")
        if len({p.dim for p in parts}) != 1:
            raise InvalidInputError("sum measure parts differ in dimension")
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self):
        return self.parts[0].dim

    @property
    def symmetric(self):
        return all(p.symmetric for p in self.parts)

    @property
    def total_mass(self):
        return float(sum(p.total_mass for p in self.parts))

    def atom_list(self, cut=0.0):
        locs, masses = zip(*(p.atom_list(cut) for p in self.parts))
        return np.concatenate(locs), np.concatenate(masses)

    def pdf(self, z, cut=0.0):
        return sum(p.pdf(z, cut) for p in self.parts)

    def radial_density(self, r):
        return sum(p.radial_density(r) for p in self.parts)

    def radial_integral(self, g, a, b):
        return sum(p.radial_integral(g, a, b) for p in self.parts)

    def mass_outside(self, cut):
        return float(sum(p.mass_outside(cut) for p in self.parts))

    def small_covariance(self, eps):
        return sum(p.small_covariance(eps) for p in self.parts)

    def compensator(self, cut):
        return sum(p.compensator(cut) for p in self.parts)

    def small_ball_quadratic(self, xi):
        return sum(p.small_ball_quadratic(xi) for p in self.parts)

    def jump_symbol(self, xi):
        return sum(p.jump_symbol(xi) for p in self.parts)

    def sample_cut(self, cut, n, rng):
        w = np.array([p.mass_outside(cut) if p.total_mass > 0 else 0.0 for p in self.parts])
        if not np.all(np.isfinite(w)):
            raise ConfigurationError("cannot sample an uncut infinite component")
        which = rng.choice(len(self.parts), size=n, p=w / w.sum())
        out = np.empty((n, self.dim))
        for k, p in enumerate(self.parts):
            sel = which == k
            if sel.any():
                out[sel] = p.sample_cut(cut, int(sel.sum()), rng)
        return out

    def suggested_radius(self, cut, leak):
        return max(p.suggested_radius(cut, leak) for p in self.parts if p.total_mass > 0)

    def smoothness_scale(self):
        return min(p.smoothness_scale() for p in self.parts)

    def breakpoints(self):
        return tuple(b for p in self.parts for b in p.breakpoints())


@dataclass(frozen=True, eq=False)
class LevyTriplet:
    """Gaussian covariance ``Q``, drift ``b`` and Levy measure ``nu``."""

    Q: np.ndarray
    b: np.ndarray
    nu: LevyMeasure

    def __post_init__(self):
        d = self.nu.dim
        Q = as_matrix(np.zeros((d, d)) if self.Q is None else self.Q, "Q")
        b = np.zeros(d) if self.b is None else np.asarray(self.b, dtype=float).reshape(-1)
        if Q.shape != (d, d) or b.shape != (d,):
            raise InvalidInputError("triplet dimensions do not agree")
        scale = max(1.0, float(np.max(np.abs(Q))))
        if np.max(np.abs(Q - Q.T)) > 1e-12 * scale or np.min(np.linalg.eigvalsh(Q)) < -1e-12 * scale:
            raise InvalidInputError("Q must be symmetric positive semi-definite")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.nu.dim

    @property
    def has_gaussian(self):
        return bool(np.any(self.Q != 0))


def symbol(triplet, xi):
    """Characteristic exponent of the triplet at ``xi`` (vectorised over leading axes)."""
    xi = _as_points(xi, triplet.dim)
    if not np.all(np.isfinite(xi)):
        raise InvalidInputError("xi must be finite")
    gauss = 0.5 * np.einsum("...i,ij,...j->...", xi, triplet.Q, xi)
    drift = xi @ triplet.b
    return gauss - 1j * drift + triplet.nu.jump_symbol(xi)


def re_symbol_small_jump_bound(nu, xi):
    """Lower bound (cos 1)/2 * int_{|z|<=1/|xi|} <z,xi>^2 nu(dz) for Re of the jump symbol."""
    xi = _as_points(xi, nu.dim)
    if np.any(np.linalg.norm(xi, axis=-1) == 0):
        raise InvalidInputError("xi must be non-zero")
    return 0.5 * math.cos(1.0) * nu.small_ball_quadratic(xi)


@dataclass(frozen=True, eq=False)
class TruncatedMeasure:
    """nu_epsilon: nu itself when finite, nu restricted to |z| >= epsilon otherwise."""

    epsilon: float
    base: LevyMeasure
    cut: float
    total_mass: float

    @property
    def dim(self):
        return self.base.dim

    def atom_list(self):
        return self.base.atom_list(self.cut)

    def pdf(self, z):
        return self.base.pdf(z, self.cut)

    def sample(self, n, rng):
        """n draws from the normalised measure nu_epsilon / C_epsilon."""
        if self.total_mass <= 0:
            raise ConfigurationError("nu_epsilon has zero mass")
        return self.base.sample_cut(self.cut, n, rng)

    def suggested_radius(self, leak):
        return self.base.suggested_radius(self.cut, leak)


def truncate(nu, epsilon):
    """Build nu_epsilon and its total mass C_epsilon."""
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise InvalidInputError("epsilon must be positive")
    cut = nu.effective_cut(epsilon)
    mass = nu.total_mass if cut == 0 else nu.mass_outside(cut)
    if not np.isfinite(mass):
        raise NumericError("truncated mass diverges", epsilon=epsilon)
    return TruncatedMeasure(epsilon=epsilon, base=nu, cut=cut, total_mass=float(mass))


@dataclass(frozen=True)
class MomentResult:
    finite: bool
    value: float
    shells: tuple = ()

    def __bool__(self):
        return self.finite


_N_SHELLS = 64
_WINDOW = 8


def _shell_verdict(shells):
    s = np.asarray(shells, dtype=float)
    total = float(np.sum(s))
    tiny = 1e-300 + 1e-15 * total
    if np.all(s[-2 * _WINDOW:] <= tiny):
        return True, total
    a, b, c = s[-1 - 2 * _WINDOW], s[-1 - _WINDOW], s[-1]
    if min(a, b, c) <= 0:
        return False, math.inf
    late = (c / b) ** (1 / _WINDOW)
    early = (b / a) ** (1 / _WINDOW)
    # geometric decay: ratio below one and not creeping up towards one
    if late < 1.0 and late <= early * (1 + 1e-6) + 1e-9:
        return True, total + c * late / (1 - late)
    return False, math.inf


def moment_integral(nu, kind, alpha=None):
    """Integral of |z|-functions against nu with a dyadic-shell divergence test.

    ``kind`` is ``"log1p"`` (log(1+|z|) on |z|>=1), ``"power"`` (|z|^alpha on
    |z|>=1), ``"square_small"`` (|z|^2 on 0<|z|<1) or ``"mass_small"``
    (1 on 0<|z|<1).  Shells are [2^k, 2^(k+1)) outward or [2^-(k+1), 2^-k)
    inward; the integral is declared divergent when the last 8 shell
    contributions do not decay geometrically.
    """
    if kind == "log1p":
        g, outward = (lambda r: np.log1p(r)), True
    elif kind == "power":
        if alpha is None or not 0 < alpha <= 1:
            raise InvalidInputError("power moment needs alpha in (0, 1]")
        g, outward = (lambda r: np.power(r, alpha)), True
    elif kind == "square_small":
        g, outward = (lambda r: np.square(r)), False
    elif kind == "square_large":
        g, outward = (lambda r: np.square(r)), True
    elif kind == "mass_small":
        g, outward = (lambda r: np.ones_like(np.asarray(r, dtype=float))), False
    else:
        raise InvalidInputError(f"unknown moment kind {kind!r}")
    if isinstance(nu, SumMeasure):
        parts = [moment_integral(p, kind, alpha) for p in nu.parts]
        if all(p.finite for p in parts):
            return MomentResult(True, float(sum(p.value for p in parts)))
        return MomentResult(False, math.inf)
    if isinstance(nu, ZeroMeasure):
        return MomentResult(True, 0.0)
    shells = []
    for k in range(_N_SHELLS):
        a, b = (2.0**k, 2.0 ** (k + 1)) if outward else (2.0 ** -(k + 1), 2.0**-k)
        shells.append(nu.radial_integral(g, a, b))
    finite, value = _shell_verdict(shells)
    return MomentResult(finite, value, tuple(shells))


def second_moment_matrix(nu):
    """int z z^T nu(dz), or None when it diverges."""
    d = nu.dim
    total = np.zeros((d, d))
    for p in (nu.parts if isinstance(nu, SumMeasure) else (nu,)):
        if isinstance(p, ZeroMeasure):
            continue
        if isinstance(p, Stable):
            return None
        if isinstance(p, Atoms):
            total += (p.locations * p.masses[:, None]).T @ p.locations
        elif isinstance(p, GaussianDensity):
            total += p.mass * (p.cov + np.outer(p.mean, p.mean))
        elif isinstance(p, UniformDensity):
            mid = 0.5 * (p.low + p.high)
            total += p.mass * (np.diag((p.high - p.low) ** 2 / 12.0) + np.outer(mid, mid))
        else:
            large = moment_integral(p, "square_large")
            if not large.finite:
                return None
            small = moment_integral(p, "square_small")
            total += (large.value + small.value) / d * np.eye(d)
    return total


def large_jump_mean(nu):
    """int_{|z|>=1} z nu(dz) where it is cheap to get; zero for symmetric or unknown parts."""
    d = nu.dim
    total = np.zeros(d)
    for p in (nu.parts if isinstance(nu, SumMeasure) else (nu,)):
        if isinstance(p, Atoms):
            far = np.linalg.norm(p.locations, axis=1) >= 1
            total += p.masses[far] @ p.locations[far]
        elif isinstance(p, GaussianDensity):
            total += p.mass * p.mean - p.compensator(0.0)
        elif isinstance(p, UniformDensity):
            total += p.mass * 0.5 * (p.low + p.high) - p.compensator(0.0)
    return total


@dataclass(frozen=True)
class SmallJumpScheme:
    """How jumps below ``epsilon`` are simulated.

    ``gaussian`` replaces them by a Gaussian with the matching covariance;
    ``exact_stable`` draws stable components from their exact law instead of
    truncating them.  ``max_rate`` caps the expected jump count per unit time.
    """

    epsilon: float = 0.01
    gaussian: bool = True
    exact_stable: bool = True
    max_rate: float = 1e6


def _stable_parts(nu):
    parts = nu.parts if isinstance(nu, SumMeasure) else (nu,)
    return [p for p in parts if isinstance(p, Stable)], [p for p in parts if not isinstance(p, Stable)]


def sample_increment(triplet, h, scheme=None, rng=None, size=None):
    """Draw Z_{t+h} - Z_t; returns shape (d,) or (size, d)."""
    scheme = scheme or SmallJumpScheme()
    rng = rng if rng is not None else np.random.default_rng()
    h = float(h)
    if not h > 0:
        raise InvalidInputError("h must be positive")
    n = 1 if size is None else int(size)
    d = triplet.dim
    out = np.tile(h * triplet.b, (n, 1))
    small_cov = h * triplet.Q
    stable, rest = _stable_parts(triplet.nu)
    for p in stable:
        if scheme.exact_stable:
            out += p.sample_symbol_law(h, n, rng)
        else:
            rest.append(p)
    for p in rest:
        if p.total_mass == 0:
            continue
        cut = 0.0 if p.finite else scheme.epsilon
        rate = p.mass_outside(cut) if cut > 0 else p.total_mass
        if cut > 0 and rate > scheme.max_rate:
            raise ConfigurationError(
                f"epsilon={scheme.epsilon} gives jump rate {rate:.3g} above max_rate", "scheme.epsilon")
        counts = rng.poisson(rate * h, size=n)
        total = int(counts.sum())
        if total:
            marks = p.sample_cut(cut, total, rng)
            owner = np.repeat(np.arange(n), counts)
            for j in range(d):
                out[:, j] += np.bincount(owner, weights=marks[:, j], minlength=n)
        out -= h * p.compensator(cut)
        if cut > 0 and scheme.gaussian:
            small_cov = small_cov + h * p.small_covariance(cut)
    if np.any(small_cov != 0):
        out += rng.multivariate_normal(np.zeros(d), small_cov, size=n, method="eigh")
    return out[0] if size is None else out
