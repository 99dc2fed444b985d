"""Finite measures on regular lattices (d <= 2): meet, total variation, shifts,
overlap masses and a maximal-coupling sampler.

A ``GriddedMeasure`` stores the exact mass of each cell together with
``outside``, the mass of the underlying measure that the lattice does not
cover.  Every TV or overlap value is therefore reported with an error bar
that accounts for that uncovered mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .errors import CoverageError, InvalidInputError
from .levy import GaussianDensity, LevyMeasure, SumMeasure, TruncatedMeasure

__all__ = [
    "GriddedMeasure",
    "Estimate",
    "cell_masses_1d",
    "cell_masses_2d",
    "discretize",
    "meet",
    "tv_norm",
    "tv_estimate",
    "shift",
    "overlap_mass",
    "maximal_coupling_sample",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL2_X, _GL2_W = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class Estimate:
    """A numerical value with an absolute error bar."""

    value: float
    bar: float = 0.0

    @property
    def low(self):
        return self.value - self.bar

    @property
    def high(self):
        return self.value + self.bar


@dataclass(frozen=True, eq=False)
class GriddedMeasure:
    """Non-negative weights on cells ``origin + h*[i, i+1)`` per axis."""

    origin: np.ndarray
    spacing: np.ndarray
    weights: np.ndarray
    outside: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        spacing = np.atleast_1d(np.asarray(self.spacing, dtype=float))
        if w.ndim not in (1, 2) or origin.shape != (w.ndim,) or spacing.shape != (w.ndim,):
            raise InvalidInputError("gridded measure needs matching origin, spacing and weights (d <= 2)")
        if np.any(spacing <= 0):
            raise InvalidInputError("grid spacing must be positive")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidInputError("gridded weights must be finite and non-negative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dim(self):
        return self.weights.ndim

    @property
    def shape(self):
        return self.weights.shape

    @property
    def mass(self):
        """Mass carried by the lattice (excluding ``outside``)."""
        return float(self.weights.sum())

    @property
    def total_mass(self):
        return self.mass + self.outside

    def edges(self, axis=0):
        n = self.weights.shape[axis]
        return self.origin[axis] + self.spacing[axis] * np.arange(n + 1)

    def centers(self, axis=0):
        e = self.edges(axis)
        return 0.5 * (e[1:] + e[:-1])

    def same_grid(self, other):
        return (self.shape == other.shape
                and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12 * np.max(self.spacing))
                and np.allclose(self.spacing, other.spacing, rtol=1e-12, atol=0))

    def normalized(self):
        total = self.total_mass
        if total <= 0:
            raise InvalidInputError("cannot normalise a zero measure")
        return replace(self, weights=self.weights / total, outside=self.outside / total)

    def scaled(self, factor):
        return replace(self, weights=self.weights * factor, outside=self.outside * factor)

    def coarsened(self):
        """Same measure on a lattice with doubled spacing (exact cell sums)."""
        w = self.weights
        for axis in range(self.dim):
            n = w.shape[axis]
            if n % 2:
                pad = [(0, 0)] * self.dim
                pad[axis] = (0, 1)
                w = np.pad(w, pad)
            w = w.reshape(w.shape[:axis] + (-1, 2) + w.shape[axis + 1:]).sum(axis=axis + 1)
        return GriddedMeasure(self.origin, 2 * self.spacing, w, self.outside)


def _check_same(m1, m2):
    if not m1.same_grid(m2):
        raise InvalidInputError("gridded measures live on different lattices")


def _atom_cells(grid_edges, loc, mass, weights):
    """Add atoms to their containing cells; return mass that fell outside."""
    lost = 0.0
    idx = []
    ok = np.ones(len(mass), dtype=bool)
    for axis, e in enumerate(grid_edges):
        h = e[1] - e[0]
        i = np.floor((loc[:, axis] - e[0]) / h + 1e-9).astype(int)
        ok &= (i >= 0) & (i < len(e) - 1)
        idx.append(i)
    lost += float(mass[~ok].sum())
    np.add.at(weights, tuple(i[ok] for i in idx), mass[ok])
    return lost


def _parts(nu):
    return nu.parts if isinstance(nu, SumMeasure) else (nu,)


def cell_masses_1d(nu, edges, cut=0.0):
    """Exact-quadrature masses of nu restricted to |z| >= cut on 1-d cells."""
    edges = np.asarray(edges, dtype=float)
    w = np.zeros(len(edges) - 1)
    for part in _parts(nu):
        if isinstance(part, GaussianDensity) and cut == 0:
            w += np.diff(part.cdf_1d(edges))
            continue
        if part.total_mass == 0 or type(part).pdf is LevyMeasure.pdf:
            continue
        # split cells at every point where the integrand is not smooth
        brk = [b for b in (-cut, cut) + tuple(part.breakpoints()) if edges[0] < b < edges[-1]]
        lo, hi = edges[:-1], edges[1:]
        pieces = [(lo, hi)]
        for b in sorted(set(brk)):
            new = []
            for a, c in pieces:
                inside = (a < b) & (b < c)
                new.append((a, np.where(inside, b, c)))
                new.append((np.where(inside, b, c), c))
            pieces = new
        for a, c in pieces:
            width = c - a
            mid = 0.5 * (a + c)
            nodes = mid[:, None] + 0.5 * width[:, None] * _GL_X
            vals = part.pdf(nodes[..., None], cut)
            w += 0.5 * width * (vals @ _GL_W)
    loc, mass = nu.atom_list(cut)
    if len(mass):
        _atom_cells([edges], loc, mass, w)
    return w


def cell_masses_2d(nu, xedges, yedges, cut=0.0):
    """Cell masses on a 2-d lattice (tensor Gauss-Legendre, exact for axis-aligned Gaussians)."""
    xedges = np.asarray(xedges, dtype=float)
    yedges = np.asarray(yedges, dtype=float)
    w = np.zeros((len(xedges) - 1, len(yedges) - 1))
    hx, hy = np.diff(xedges), np.diff(yedges)
    for part in _parts(nu):
        if part.total_mass == 0 or type(part).pdf is LevyMeasure.pdf:
            continue
        if isinstance(part, GaussianDensity) and cut == 0 and part.cov[0, 1] == 0:
            sx, sy = math.sqrt(part.cov[0, 0]), math.sqrt(part.cov[1, 1])
            px = np.diff(special.ndtr((xedges - part.mean[0]) / sx))
            py = np.diff(special.ndtr((yedges - part.mean[1]) / sy))
            w += part.mass * np.outer(px, py)
            continue
        cx = 0.5 * (xedges[1:] + xedges[:-1])
        cy = 0.5 * (yedges[1:] + yedges[:-1])
        for gx, wx in zip(_GL2_X, _GL2_W):
            for gy, wy in zip(_GL2_X, _GL2_W):
                px = cx + 0.5 * hx * gx
                py = cy + 0.5 * hy * gy
                pts = np.stack(np.meshgrid(px, py, indexing="ij"), axis=-1)
                w += 0.25 * wx * wy * part.pdf(pts, cut) * np.outer(hx, hy)
    loc, mass = nu.atom_list(cut)
    if len(mass):
        _atom_cells([xedges, yedges], loc, mass, w)
    return w


def discretize(measure, h, radius=None, pad=0.0, leak_tol=1e-6, total_mass=None):
    """Put a truncated measure (or any LevyMeasure of finite mass) on a lattice.

    The lattice is the cube [-R - pad, R + pad]^d with R chosen so that the
    mass beyond R is below ``leak_tol`` times the total (unless ``radius`` is
    given).  ``pad`` leaves room for later shifts.  Raises CoverageError when
    the uncovered mass exceeds ``leak_tol`` times the total.
    """
    if isinstance(measure, TruncatedMeasure):
        nu, cut, total = measure.base, measure.cut, measure.total_mass
    elif isinstance(measure, LevyMeasure):
        nu, cut = measure, 0.0
        total = measure.total_mass
    else:
        raise InvalidInputError("discretize expects a TruncatedMeasure or a finite LevyMeasure")
    if total_mass is not None:
        total = float(total_mass)
    if not math.isfinite(total):
        raise InvalidInputError("cannot discretize a measure of infinite mass")
    h = float(h)
    if not h > 0:
        raise InvalidInputError("lattice spacing must be positive")
    d = nu.dim
    if d > 2:
        raise InvalidInputError("lattice algebra is limited to d <= 2")
    if radius is None:
        radius = nu.suggested_radius(cut, 0.5 * leak_tol * max(total, 1e-300))
    # one extra coarse cell so that support points on the boundary survive a shift by pad
    half = 2 * h * (math.ceil((float(radius) + float(pad)) / (2 * h)) + 1)
    edges = np.linspace(-half, half, int(round(2 * half / h)) + 1)
    if d == 1:
        w = cell_masses_1d(nu, edges, cut)
    else:
        w = cell_masses_2d(nu, edges, edges, cut)
    outside = max(total - float(w.sum()), 0.0)
    if outside > leak_tol * max(total, 1e-300):
        raise CoverageError("lattice leaves too much mass uncovered",
                            outside=outside, total=total, radius=half)
    return GriddedMeasure(np.full(d, -half), np.full(d, h), w, outside)


def meet(m1, m2):
    """Cellwise minimum; the uncovered parts contribute min(outside)."""
    _check_same(m1, m2)
    return GriddedMeasure(m1.origin, m1.spacing, np.minimum(m1.weights, m2.weights),
                          min(m1.outside, m2.outside))


def tv_norm(m1, m2):
    """Total variation of m1 - m2: sum of |w1 - w2| plus |outside1 - outside2|."""
    _check_same(m1, m2)
    return float(np.abs(m1.weights - m2.weights).sum()) + abs(m1.outside - m2.outside)


def tv_estimate(m1, m2):
    """TV with an error bar covering every placement of the uncovered mass."""
    return Estimate(tv_norm(m1, m2), 2.0 * min(m1.outside, m2.outside))


def shift(mu, x, leak_tol=1e-6):
    """delta_x * mu by multilinear mass splitting between neighbouring cells.

    A lattice-aligned ``x`` is an exact index shift.  Mass pushed off the
    lattice moves to ``outside``; CoverageError if it exceeds ``leak_tol``
    times the total mass.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (mu.dim,):
        raise InvalidInputError("shift vector has the wrong dimension")
    w = mu.weights
    for axis in range(mu.dim):
        steps = x[axis] / mu.spacing[axis]
        k = math.floor(steps)
        f = steps - k
        if f > 1 - 1e-12:
            k, f = k + 1, 0.0
        elif f < 1e-12:
            f = 0.0
        w = _shift_axis(w, axis, k)
        if f:
            w = _split(w, axis, f)
    lost = mu.mass - float(w.sum())
    lost = max(lost, 0.0)
    if lost > leak_tol * max(mu.total_mass, 1e-300):
        raise CoverageError("shift pushes mass off the lattice", lost=lost, shift=x.tolist())
    return GriddedMeasure(mu.origin, mu.spacing, w, mu.outside + lost)


def _shift_axis(w, axis, k):
    """Move weights k cells along axis, dropping what leaves the lattice."""
    out = np.zeros_like(w)
    n = w.shape[axis]
    if abs(k) < n:
        src = [slice(None)] * w.ndim
        dst = [slice(None)] * w.ndim
        if k >= 0:
            src[axis], dst[axis] = slice(0, n - k), slice(k, n)
        else:
            src[axis], dst[axis] = slice(-k, n), slice(0, n + k)
        out[tuple(dst)] = w[tuple(src)]
    return out


def _split(w, axis, f):
    """Each cell keeps 1-f of its mass and passes f to the next cell."""
    out = (1.0 - f) * w
    n = w.shape[axis]
    src = [slice(None)] * w.ndim
    dst = [slice(None)] * w.ndim
    src[axis], dst[axis] = slice(0, n - 1), slice(1, n)
    out[tuple(dst)] += f * w[tuple(src)]
    return out


def overlap_mass(nu_grid, x, leak_tol=1e-6):
    """Mass of nu ^ (delta_x * nu), with an error bar from uncovered mass."""
    moved = shift(nu_grid, x, leak_tol)
    m = meet(nu_grid, moved)
    # every value in [grid meet, grid meet + 2 min(outside)] is compatible
    return Estimate(m.total_mass, min(nu_grid.outside, moved.outside))


def maximal_coupling_sample(mu_bar, x, rng, n=None, leak_tol=1e-6):
    """Draw (U, U', coupled) with U ~ mu_bar, U' ~ delta_x * mu_bar, P(U = U') maximal.

    Cells are drawn from the lattice weights and points are spread uniformly
    inside the drawn cell; a coupled pair shares its cell and its jitter.
    """
    size = 1 if n is None else int(n)
    p1 = mu_bar.weights
    if abs(mu_bar.total_mass - 1.0) > 1e-9:
        raise InvalidInputError(f"maximal coupling needs a unit-mass measure (mass {mu_bar.total_mass:.6g})")
    p2 = shift(mu_bar, x, leak_tol).weights
    both = np.minimum(p1, p2)
    a = float(both.sum())
    d = mu_bar.dim
    coupled = rng.random(size) < a
    k = int(coupled.sum())
    U = np.empty((size, d))
    V = np.empty((size, d))

    def draw(p, count):
        flat = p.ravel()
        if not flat.sum() > 0:
            flat = np.ones_like(flat)
        idx = rng.choice(flat.size, size=count, p=flat / flat.sum())
        cell = np.stack(np.unravel_index(idx, p.shape), axis=1)
        return mu_bar.origin + mu_bar.spacing * (cell + rng.random((count, d)))

    if k:
        U[coupled] = V[coupled] = draw(both, k)
    if size - k:
        U[~coupled] = draw(p1 - both, size - k)
        V[~coupled] = draw(p2 - both, size - k)
    if n is None:
        return U[0], V[0], bool(coupled[0])
    return U, V, coupled
