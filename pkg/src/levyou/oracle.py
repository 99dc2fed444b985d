"""Deterministic laws and total-variation distances from characteristic functions.

The law of X_t^x is the law of Y_t = int_0^t e^{(t-s)A} dZ_s translated by
e^{tA} x, and Y_t has characteristic function exp(-psi_t(xi)) with

    psi_t(xi) = int_0^t symbol(e^{s A^T} xi) ds.

Densities come from an FFT of that function; TV distances are L1 norms of
FFT-inverted differences, reported with an error bar that collects the
mass beyond the grid, the change under halved resolution and any clipped
negative ringing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg as sla, special

from .errors import DomainError, InvalidInputError, NumericError, ResolutionError
from .lattice import Estimate, discretize, overlap_mass
from .levy import (
    Atoms,
    Density,
    Stable,
    SumMeasure,
    ZeroMeasure,
    large_jump_mean,
    second_moment_matrix,
    symbol,
    truncate,
)
from .linalg import expm, flow_integral, gaussian_convolution_covariance

__all__ = [
    "accumulated_symbol",
    "accumulated_symbol_quad",
    "phi_t",
    "phi_t_inverse",
    "DensityGrid",
    "density_by_fft",
    "stationary_density",
    "tv_distance_oracle",
    "tv_vs_invariant_oracle",
]

CF_CUTOFF = 1e-10
RESOLUTION_FLOOR = 1e-3
MAX_N = {1: 1 << 22, 2: 1 << 11}
_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)
_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)
_INF = math.inf
_CHUNK = 1 << 16


def _parts(nu):
    return list(nu.parts) if isinstance(nu, SumMeasure) else [nu]


def _points(xi, d):
    xi = np.asarray(xi, dtype=float)
    if d == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        xi = xi[..., None]
    if xi.shape[-1] != d:
        raise InvalidInputError(f"xi must have last dimension {d}")
    return xi


def _stable_time_factor(a, alpha, t):
    """int_0^t e^{a alpha s} ds, including t = inf for a < 0."""
    if math.isinf(t):
        return 1.0 / (-a * alpha)
    if a == 0:
        return t
    return math.expm1(a * alpha * t) / (a * alpha)


def _closed_stable(model, p):
    return isinstance(p, Stable) and model.conformal_rate is not None


def _require_stationary(model):
    if not model.spectral.strictly_stable:
        raise DomainError("stationary quantities need a strictly stable drift matrix")


def _gaussian_part(model, t):
    """(Sigma, drift) so that the Gaussian+drift piece of psi_t is 1/2 xi Sigma xi - i <m, xi>."""
    A, Q, b = model.A, model.triplet.Q, model.triplet.b
    if math.isinf(t):
        _require_stationary(model)
        sigma = sla.solve_continuous_lyapunov(A, -Q) if np.any(Q) else np.zeros_like(A)
        m = -np.linalg.solve(A, b)
        return 0.5 * (sigma + sigma.T), m
    sigma = gaussian_convolution_covariance(A, Q, t) if np.any(Q) else np.zeros_like(A)
    return sigma, flow_integral(A, b, t)


def _numeric_horizon(model, xi_max):
    spec = model.spectral
    return (math.log(max(1.0, spec.envelope_c * xi_max)) + 40.0) / spec.envelope_lambda


def _jump_psi_log_variable(part, a, t, x):
    """int_0^t jump_symbol(e^{a s} x) ds for scalar a != 0 and x > 0.

    With v = log r the integral is (G(log x + a t) - G(log x)) / a where
    G(v) = int jump_symbol(e^v) dv; G is accumulated once over all sorted
    endpoints with Gauss-Legendre panels.
    """
    v1 = np.log(x)
    if math.isinf(t):
        span = (v1.max() + 35.0 - math.log(1e-14)) / -a
        v2 = v1 + a * span
    else:
        v2 = v1 + a * t
    allv = np.concatenate([v1, v2])
    order = np.argsort(allv, kind="stable")
    sv = allv[order]
    gaps = np.diff(sv)
    osc = _oscillation_radius(part)
    # panel count per gap: width <= 0.25 in v and phase change <= 1 for atoms
    upper = np.exp(sv[1:])
    pieces = np.maximum(1, np.ceil(gaps / 0.25)).astype(np.int64)
    if osc > 0:
        pieces = np.maximum(pieces, np.ceil(gaps * osc * upper * 2).astype(np.int64))
    # short gaps (dense frequency grids) take a single 3-point rule
    short = (pieces == 1) & (gaps < 0.02)
    per_gap = np.zeros(len(gaps), dtype=complex)
    if np.any(short):
        w = gaps[short]
        nodes = sv[:-1][short, None] + 0.5 * w[:, None] * (_GL3_X + 1.0)
        vals = part.jump_symbol(np.exp(nodes).reshape(-1, 1)).reshape(nodes.shape)
        per_gap[short] = 0.5 * w * (vals @ _GL3_W)
    long_ = np.flatnonzero(~short)
    pieces = pieces[long_]
    total = int(pieces.sum())
    if total > 5_000_000:
        raise NumericError("accumulated symbol needs too many panels", panels=total)
    if total:
        left = np.repeat(sv[:-1][long_], pieces)
        width = np.repeat(gaps[long_] / pieces, pieces)
        offs = np.arange(total) - np.repeat(np.cumsum(pieces) - pieces, pieces)
        a0 = left + offs * width
        nodes = a0[:, None] + 0.5 * width[:, None] * (_GL8_X + 1.0)
        vals = part.jump_symbol(np.exp(nodes).reshape(-1, 1)).reshape(nodes.shape)
        panel = 0.5 * width * (vals @ _GL8_W)
        per_gap[long_] = np.add.reduceat(panel, np.concatenate([[0], np.cumsum(pieces)[:-1]]))
    G = np.concatenate([[0.0], np.cumsum(per_gap)])
    Gall = np.empty_like(G)
    Gall[order] = G
    n = len(x)
    return (Gall[n:] - Gall[:n]) / a


def _atoms_G(part, v):
    """Antiderivative in v = log r of the 1-d atom symbol, through the sine and cosine integrals."""
    z = part.locations[:, 0]
    c = np.abs(z)
    v = np.asarray(v, dtype=float)[:, None]
    out = np.empty((v.shape[0], len(z)), dtype=complex)
    low = np.isneginf(v[:, 0])
    # v -> -inf: v - Ci(c e^v) tends to -gamma - log c, the other terms vanish
    out[low] = -np.euler_gamma - np.log(c)
    if np.any(~low):
        vv = v[~low]
        u = c * np.exp(vv)
        si, ci = special.sici(u)
        small = (c < 1.0) * z * np.exp(vv)
        out[~low] = vv - ci - 1j * np.sign(z) * si + 1j * small
    return out @ part.masses


def _atoms_psi_1d(part, a, t, x):
    """Closed form of int_0^t jump_symbol(e^{a s} x) ds for atoms, x > 0."""
    v1 = np.log(x)
    v2 = np.full_like(v1, -np.inf) if math.isinf(t) else v1 + a * t
    return (_atoms_G(part, v2) - _atoms_G(part, v1)) / a


def _oscillation_radius(part):
    if isinstance(part, Atoms):
        return float(np.max(np.linalg.norm(part.locations, axis=1)))
    return 0.0


def _jump_psi_generic(model, part, t, xi):
    """Composite Gauss-Legendre in s, panels doubled until the values settle."""
    d = model.dim
    if math.isinf(t):
        t = _numeric_horizon(model, float(np.max(np.linalg.norm(xi, axis=1), initial=1.0)))
    if np.allclose(model.A, 0):
        return t * part.jump_symbol(xi)

    def rule(panels, pts):
        edges = np.linspace(0.0, t, panels + 1)
        h = np.diff(edges)
        s = (edges[:-1, None] + 0.5 * h[:, None] * (_GL8_X + 1)).ravel()
        w = (0.5 * h[:, None] * _GL8_W).ravel()
        E = expm(s[:, None, None] * model.A.T)
        out = np.zeros(len(pts), dtype=complex)
        step = max(1, 2_000_000 // max(len(s), 1))
        for c in range(0, len(pts), step):
            rot = np.einsum("mij,nj->mni", E, pts[c:c + step])
            vals = part.jump_symbol(rot.reshape(-1, d)).reshape(len(s), -1)
            out[c:c + step] = w @ vals
        return out

    norms = np.linalg.norm(xi, axis=1)
    probe = xi[np.argsort(norms)[-64:]]
    panels = 8
    prev = rule(panels, probe)
    while True:
        panels *= 2
        cur = rule(panels, probe)
        if np.max(np.abs(cur - prev)) <= 1e-9 * max(1.0, float(np.max(np.abs(cur)))):
            break
        if panels >= 4096:
            raise NumericError("accumulated symbol quadrature did not settle", panels=panels)
        prev = cur
    return rule(panels, xi)


def accumulated_symbol(model, t, xi):
    """psi_t(xi) = int_0^t symbol(e^{s A^T} xi) ds, vectorised; t may be inf."""
    d = model.dim
    xi = _points(xi, d)
    shape = xi.shape[:-1]
    flat = xi.reshape(-1, d)
    t = float(t)
    if t < 0 or math.isnan(t):
        raise InvalidInputError("t must be non-negative")
    if t == 0:
        return np.zeros(shape, dtype=complex)
    sigma, m = _gaussian_part(model, t)
    out = 0.5 * np.einsum("ni,ij,nj->n", flat, sigma, flat) - 1j * (flat @ m)
    for p in _parts(model.triplet.nu):
        if isinstance(p, ZeroMeasure) or p.total_mass == 0:
            continue
        if _closed_stable(model, p):
            h = _stable_time_factor(model.conformal_rate, p.alpha, t)
            out = out + p.kappa * h * np.linalg.norm(flat, axis=1) ** p.alpha
            continue
        if d == 1 and model.A[0, 0] != 0:
            a = model.A[0, 0]
            x = flat[:, 0]
            pos = np.zeros(len(x), dtype=complex)
            nz = x != 0
            mags, inv = np.unique(np.abs(x[nz]), return_inverse=True)
            vals = np.empty(len(mags), dtype=complex)
            kernel = _atoms_psi_1d if isinstance(p, Atoms) else _jump_psi_log_variable
            for c in range(0, len(mags), _CHUNK):
                vals[c:c + _CHUNK] = kernel(p, a, t, mags[c:c + _CHUNK])
            pos[nz] = vals[inv.ravel()]
            out = out + np.where(x < 0, np.conj(pos), pos)
        else:
            out = out + _jump_psi_generic(model, p, t, flat)
    return out.reshape(shape)


def accumulated_symbol_quad(model, t, xi):
    """Single-point psi_t by adaptive quadrature of the full symbol (reference path)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float)).reshape(model.dim)
    if t == 0:
        return 0.0 + 0.0j

    def f(s, part):
        v = symbol(model.triplet, expm(s * model.A.T) @ xi)
        return float(v.real if part == 0 else v.imag)

    re = integrate.quad(f, 0.0, t, args=(0,), limit=500, epsabs=1e-12, epsrel=1e-10)[0]
    im = integrate.quad(f, 0.0, t, args=(1,), limit=500, epsabs=1e-12, epsrel=1e-10)[0]
    return complex(re, im)


# --- phi_t --------------------------------------------------------------------

def _probe_directions(d):
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = 2 * np.pi * np.arange(128) / 128
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    g = np.random.default_rng(0).standard_normal((512, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.concatenate([g, np.eye(d), -np.eye(d)])


_RADII = (0.25, 0.5, 0.75, 1.0)


def phi_t(model, t, rho):
    """sup over |xi| <= rho of Re psi_t(xi): sphere directions plus interior shells."""
    if not t > 0:
        raise InvalidInputError("t must be positive")
    if not rho >= 0:
        raise InvalidInputError("rho must be non-negative")
    if rho == 0:
        return 0.0
    dirs = _probe_directions(model.dim)
    pts = np.concatenate([rho * f * dirs for f in _RADII])
    return float(np.max(accumulated_symbol(model, t, pts).real))


def phi_t_inverse(model, t, y, rho_max=1e8, tol=1e-10):
    """Smallest rho with phi_t(rho) >= y, by bisection (relative tolerance ``tol``)."""
    if not y > 0:
        raise InvalidInputError("y must be positive")
    hi = 1.0
    while phi_t(model, t, hi) < y:
        hi *= 2.0
        if hi > rho_max:
            bound = phi_t(model, t, rho_max)
            raise DomainError(f"phi_t stays below {y} up to rho={rho_max:g}",
                              bound=bound, rho_max=rho_max)
    lo = 0.0 if hi == 1.0 else hi / 2.0
    while hi - lo > tol * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if phi_t(model, t, mid) >= y:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# --- law of Y_t ------------------------------------------------------------------

@dataclass
class _Law:
    """Characteristic function of Y_t split into an optional atom and the rest."""

    model: object
    t: float
    atom_mass: float
    atom_loc: np.ndarray
    mean: np.ndarray
    cov: np.ndarray | None
    heavy_alpha: float | None

    def cf_total(self, xi):
        return np.exp(-accumulated_symbol(self.model, self.t, xi))

    def cf_cont(self, xi):
        cf = self.cf_total(xi)
        if self.atom_mass > 0:
            xi = _points(xi, self.model.dim)
            cf = cf - self.atom_mass * np.exp(1j * (xi @ self.atom_loc))
        return cf


def _law(model, t):
    tri = model.triplet
    nu = tri.nu
    d = model.dim
    parts = [p for p in _parts(nu) if not isinstance(p, ZeroMeasure) and p.total_mass > 0]
    atom_mass, atom_loc = 0.0, np.zeros(d)
    finite_jumps = all(p.finite for p in parts)
    if not np.any(tri.Q) and finite_jumps:
        C = float(sum(p.total_mass for p in parts))
        drift = tri.b - sum((p.compensator(0.0) for p in parts), np.zeros(d))
        if math.isinf(t):
            if C == 0:
                _require_stationary(model)
                atom_mass, atom_loc = 1.0, -np.linalg.solve(model.A, drift)
        else:
            atom_mass = math.exp(-C * t)
            atom_loc = flow_integral(model.A, drift, t)
    M2 = second_moment_matrix(nu)
    b_eff = tri.b + large_jump_mean(nu)
    if math.isinf(t):
        _require_stationary(model)
        mean = -np.linalg.solve(model.A, b_eff)
    else:
        mean = flow_integral(model.A, b_eff, t)
    cov = None
    heavy = None
    if M2 is not None:
        Qe = tri.Q + M2
        cov = (sla.solve_continuous_lyapunov(model.A, -Qe) if math.isinf(t)
               else gaussian_convolution_covariance(model.A, Qe, t))
    else:
        alphas = [p.alpha for p in parts if isinstance(p, Stable)]
        heavy = min(alphas) if alphas else 1.0
    return _Law(model, t, atom_mass, atom_loc, mean, cov, heavy)


def _radial_probe(law, direction, target):
    """Smallest |xi| along ``direction`` with Re psi >= target (None if never by 1e9)."""
    lo, hi = 0.0, 1e-3
    f = lambda r: float(accumulated_symbol(law.model, law.t, r * direction[None, :]).real[0])
    while f(hi) < target:
        lo, hi = hi, hi * 4
        if hi > 1e9:
            return None
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if f(mid) >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-6 * hi:
            break
    return hi


def _cf_profile(law, direction, start):
    """Geometric frequency grid and max |cf_cont| over +/- direction."""
    grid = start * 1.5 ** np.arange(0, 80)
    grid = grid[grid <= 1e9]
    pts = np.concatenate([grid[:, None] * direction, -grid[:, None] * direction])
    mag = np.abs(law.cf_cont(pts)).reshape(2, -1).max(axis=0)
    return grid, mag


def _cf_cutoff(grid, mag):
    """Frequency beyond which |cf_cont| stays below CF_CUTOFF (inf if never on the grid)."""
    big = np.flatnonzero(mag >= CF_CUTOFF)
    if len(big) and big[-1] >= len(grid) - 2:
        return math.inf
    return float(grid[big[-1] + 1]) if len(big) else float(grid[0])


def _cf_tail(grid, mag, xi):
    """Largest |cf_cont| seen at frequencies >= xi."""
    sel = mag[grid >= xi]
    return float(sel.max()) if len(sel) else 0.0


@dataclass
class _Grid:
    centre: np.ndarray
    half: np.ndarray  # half-widths per axis
    n: int  # points per axis
    spacing: np.ndarray

    def axes(self, coarse=False):
        step = 2 if coarse else 1
        n = self.n // step
        return [c + (np.arange(n) - n // 2) * h * step for c, h in zip(self.centre, self.spacing)]


def _plan_grid(law, tail_tol, extra_half=None):
    d = law.model.dim
    dirs = np.eye(d)
    centre = law.mean.copy()
    half = np.zeros(d)
    cuts, profiles = [], []
    res_scale = np.full(d, np.inf)
    for k in range(d):
        e = dirs[k]
        r1 = _radial_probe(law, e, 1.0)
        inv = 1.0 / r1 if r1 else None
        if law.cov is not None:
            sd = math.sqrt(max(law.cov[k, k], 0.0))
            if sd == 0:
                raise ResolutionError("law is degenerate along an axis", axis=k)
            half[k] = 8.0 * sd
            res_scale[k] = min(sd, inv) if inv else sd
        else:
            if inv is None:
                raise ResolutionError("no scale found for a heavy-tailed law", axis=k)
            a = law.heavy_alpha
            c_tail = 2 * math.gamma(a) * math.sin(math.pi * a / 2) / math.pi
            half[k] = inv * (2 * c_tail / tail_tol) ** (1.0 / a)
            res_scale[k] = inv
        start = 0.1 / max(res_scale[k], 1e-300)
        profiles.append(_cf_profile(law, e, start))
        cuts.append(_cf_cutoff(*profiles[-1]))
    if extra_half is not None:
        half = half + extra_half
    # 2*dy must still resolve the cutoff for the halved-resolution comparison
    dy = np.minimum(res_scale / 32.0, np.pi / (2.0 * np.array(cuts)))
    need = float(np.max(2 * half / np.maximum(dy, 1e-300)))
    n = max(int(2 ** math.ceil(math.log2(need))) if need < 2.0**60 else 2**60, 64)
    if n > MAX_N[d]:
        # slowly decaying cf: use the finest grid allowed and let the
        # halved-resolution comparison carry the truncation error
        n = MAX_N[d]
        reach = [math.pi / (2.0 * h) for h in 2 * half / n]
        tails = [_cf_tail(g, m, r) for (g, m), r in zip(profiles, reach)]
        if max(tails) > RESOLUTION_FLOOR:
            raise ResolutionError("characteristic function too large at the reachable frequency",
                                  cap=MAX_N[d], reachable=reach, cf_at_reach=tails,
                                  cutoff=[float(c) for c in cuts])
    spacing = 2 * half / n
    return _Grid(centre, spacing * n / 2, n, spacing)


def _frequency_mesh(grid):
    d = len(grid.centre)
    n = grid.n
    dxi = 2 * np.pi / (n * grid.spacing)
    ks = [(np.arange(n) - n // 2) * dxi[k] for k in range(d)]
    return np.stack(np.meshgrid(*ks, indexing="ij"), axis=-1), dxi


def _fft_values(vals, mesh, centre, dxi):
    """(1/2pi)^d sum_k cf(xi_k) e^{-i<xi_k, y_j>} dxi on the matching spatial grid."""
    d = vals.ndim
    n = vals.shape[0]
    sign = (-1.0) ** np.arange(n)
    a = vals * np.exp(-1j * (mesh @ centre))
    for k in range(d):
        shape = [1] * d
        shape[k] = n
        a = a * sign.reshape(shape)
    f = np.fft.fftn(a)
    for k in range(d):
        shape = [1] * d
        shape[k] = n
        f = f * sign.reshape(shape) * (-1.0) ** (n // 2)
    return f.real * np.prod(dxi) / (2 * np.pi) ** d


def _invert(cf_fn, grid, coarse=False):
    """Inverse transform on the grid; with ``coarse`` also on the 2h grid.

    Both grids share the frequency step, so the coarse transform reuses the
    central half of the frequency samples.
    """
    d = len(grid.centre)
    mesh, dxi = _frequency_mesh(grid)
    vals = cf_fn(mesh.reshape(-1, d)).reshape((grid.n,) * d)
    fine = _fft_values(vals, mesh, grid.centre, dxi)
    if not coarse:
        return fine
    q = grid.n // 4
    sl = tuple(slice(q, q + grid.n // 2) for _ in range(d))
    return fine, _fft_values(vals[sl], mesh[sl], grid.centre, dxi)


def _edge_tail(f, grid, coarse=False):
    """Crude mass beyond the grid: peak density in the outer 5% times the box volume."""
    d = f.ndim
    n = f.shape[0]
    k = max(1, n // 20)
    mask = np.zeros(f.shape, dtype=bool)
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = slice(0, k)
        mask[tuple(sl)] = True
        sl[ax] = slice(n - k, n)
        mask[tuple(sl)] = True
    vol = float(np.prod(2 * grid.half))
    return float(np.max(np.abs(f[mask]))) * vol


@dataclass
class DensityGrid:
    axes: list
    values: np.ndarray
    clipped_mass: float
    tail_bound: float
    atoms: list = field(default_factory=list)

    @property
    def cell_volume(self):
        return float(np.prod([ax[1] - ax[0] for ax in self.axes]))

    @property
    def total(self):
        return float(self.values.sum()) * self.cell_volume + sum(m for _, m in self.atoms)

    def cdf_1d(self):
        """Cumulative distribution on the grid (1-d, atoms included)."""
        if len(self.axes) != 1:
            raise InvalidInputError("cdf_1d needs a 1-d grid")
        x = self.axes[0]
        c = np.cumsum(self.values) * self.cell_volume
        for loc, m in self.atoms:
            c = c + m * (x >= loc[0])
        return x, c


def density_by_fft(model, t, x, tail_tol=1e-4):
    """Density of X_t^x on an FFT grid (d <= 2); atoms of the law listed separately."""
    d = model.dim
    if d > 2:
        raise InvalidInputError("FFT inversion is limited to d <= 2")
    if not t > 0:
        raise InvalidInputError("t must be positive")
    law = _law(model, t)
    return _density(model, law, model.flow(t) @ np.asarray(x, dtype=float).reshape(d), tail_tol)


def stationary_density(model, tail_tol=1e-4):
    """Density of the invariant law (characteristic function exp(-psi_inf))."""
    _require_stationary(model)
    law = _law(model, _INF)
    return _density(model, law, np.zeros(model.dim), tail_tol)


def _density(model, law, offset, tail_tol):
    grid = _plan_grid(law, tail_tol)
    f = _invert(law.cf_cont, grid)
    cell = float(np.prod(grid.spacing))
    clipped = float(np.sum(np.maximum(-f, 0.0))) * cell
    tail = _edge_tail(f, grid)
    axes = [ax + o for ax, o in zip(grid.axes(), offset)]
    atoms = [(law.atom_loc + offset, law.atom_mass)] if law.atom_mass > 0 else []
    return DensityGrid(axes, np.maximum(f, 0.0), clipped, tail, atoms)


def _l1_difference(law_a, law_b, shift_a, shift_b, tail_tol):
    """L1 distance of the continuous parts of two laws with translations."""
    d = law_a.model.dim
    gap = np.abs(shift_a - shift_b)
    grid = _plan_grid(law_a, tail_tol, extra_half=0.5 * gap)
    if law_b is not law_a:
        gb = _plan_grid(law_b, tail_tol, extra_half=0.5 * gap)
        half = np.maximum(grid.half, gb.half)
        spacing = np.minimum(grid.spacing, gb.spacing)
        need = int(2 ** math.ceil(math.log2(float(np.max(2 * half / spacing)))))
        n = min(max(grid.n, gb.n, need), MAX_N[d])
        grid = _Grid(grid.centre, half, n, 2 * half / n)
    grid.centre = 0.5 * (law_a.mean + shift_a + law_b.mean + shift_b)

    def diff(xi):
        return (law_a.cf_cont(xi) * np.exp(1j * (xi @ shift_a))
                - law_b.cf_cont(xi) * np.exp(1j * (xi @ shift_b)))

    fine, coarse = _invert(diff, grid, coarse=True)
    cell = float(np.prod(grid.spacing))
    l1_f = float(np.abs(fine).sum()) * cell
    l1_c = float(np.abs(coarse).sum()) * cell * 2**d
    # the difference beyond the box is missed once and aliased back once
    return l1_f, abs(l1_f - l1_c) + 2.0 * _edge_tail(fine, grid)


def _atom_tv(law_a, law_b, shift_a, shift_b):
    ma, mb = law_a.atom_mass, law_b.atom_mass
    la, lb = law_a.atom_loc + shift_a, law_b.atom_loc + shift_b
    if ma == 0 and mb == 0:
        return 0.0
    if ma > 0 and mb > 0 and np.allclose(la, lb, rtol=0, atol=1e-14):
        return abs(ma - mb)
    return ma + mb


def tv_distance_oracle(model, t, x, y, tail_tol=1e-4):
    """||P_t(x, .) - P_t(y, .)||_var with an error bar; value in [0, 2]."""
    d = model.dim
    if d > 2:
        raise InvalidInputError("the TV oracle is limited to d <= 2")
    if not t > 0:
        raise InvalidInputError("t must be positive")
    T = model.flow(t)
    sx = T @ np.asarray(x, dtype=float).reshape(d)
    sy = T @ np.asarray(y, dtype=float).reshape(d)
    if np.array_equal(sx, sy):
        return Estimate(0.0, 0.0)
    law = _law(model, t)
    try:
        l1, bar = _l1_difference(law, law, sx, sy, tail_tol)
    except ResolutionError:
        if law.atom_mass > 0:
            return _compound_poisson_bracket(model, t, x, y)
        raise
    val = l1 + _atom_tv(law, law, sx, sy)
    return Estimate(min(max(val, 0.0), 2.0), bar)


def tv_vs_invariant_oracle(model, t, x, tail_tol=1e-4):
    """||P_t(x, .) - mu||_var against the invariant law mu, with an error bar."""
    d = model.dim
    if d > 2:
        raise InvalidInputError("the TV oracle is limited to d <= 2")
    _require_stationary(model)
    law_t = _law(model, t)
    law_inf = _law(model, _INF)
    sx = model.flow(t) @ np.asarray(x, dtype=float).reshape(d)
    l1, bar = _l1_difference(law_t, law_inf, sx, np.zeros(d), tail_tol)
    val = l1 + _atom_tv(law_t, law_inf, sx, np.zeros(d))
    return Estimate(min(max(val, 0.0), 2.0), bar)


def _compound_poisson_bracket(model, t, x, y, nodes=64):
    """Bracket for compound Poisson models whose law the FFT cannot resolve.

    Lower end: the two no-jump atoms, 2 e^{-Ct}.  Upper end: the coupling
    bound 2 e^{-Ct} + int_0^t C e^{-Cu} ||nu_bar - delta_{v(u)} nu_bar|| du
    with v(u) = e^{(t-u)A}(x - y).  Returned as midpoint +/- half-width.
    """
    nu = model.triplet.nu
    tm = truncate(nu, 1.0)
    C = tm.total_mass
    d = model.dim
    diff = np.asarray(x, dtype=float).reshape(d) - np.asarray(y, dtype=float).reshape(d)
    span = float(np.linalg.norm(diff)) * max(1.0, model.spectral.envelope_c)
    scale = nu.smoothness_scale() or 0.05
    h = min(scale / 20, max(span, 1e-3) / 20)
    grid = discretize(tm, h, pad=span, leak_tol=1e-6).normalized()
    u, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * t * (u + 1)
    w = 0.5 * t * w
    tv = np.array([2.0 * (1.0 - overlap_mass(grid, model.flow(t - ui) @ diff).value) for ui in u])
    atoms = 2.0 * math.exp(-C * t)
    upper = atoms + float(np.sum(w * C * np.exp(-C * u) * np.clip(tv, 0.0, 2.0)))
    upper = min(upper, 2.0)
    return Estimate(0.5 * (atoms + upper), 0.5 * (upper - atoms))
