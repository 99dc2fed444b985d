"""Exact-in-time simulation of Levy-driven Ornstein-Uhlenbeck processes.

X_t = e^{tA} x + int_0^t e^{(t-s)A} dZ_s is assembled from independent
pieces: a deterministic flow of the drift, a Gaussian vector with the
Van Loan covariance, compound Poisson jumps pushed through the flow at their
exact times, and (for isotropic stable noise with a conformal drift matrix)
an exact stable vector.  Only jumps below the cut radius of an infinite
measure are approximated, by a Gaussian with matching covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, InvalidInputError, NumericError, PreconditionError
from .levy import LevyTriplet, SmallJumpScheme, Stable, SumMeasure, moment_integral, truncate
from .linalg import (
    as_matrix,
    expm,
    flow_integral,
    gaussian_convolution_covariance,
    operator_norm,
    spectral_profile,
)

__all__ = [
    "OUModel",
    "CoupledEndpoint",
    "CompoundPoissonPath",
    "simulate_endpoint",
    "simulate_convolution",
    "sample_invariant",
    "coupled_pair_endpoint",
    "sample_compound_poisson_path",
    "convolution_from_path",
    "uniform_moment_check",
    "MomentTable",
]

_FLOW_GUARD = 1e150


@dataclass(frozen=True, eq=False)
class OUModel:
    A: np.ndarray
    triplet: LevyTriplet

    def __post_init__(self):
        A = as_matrix(self.A)
        if A.shape[0] != self.triplet.dim:
            raise InvalidInputError("A and the Levy triplet differ in dimension")
        object.__setattr__(self, "A", A)

    @property
    def dim(self):
        return self.A.shape[0]

    @cached_property
    def spectral(self):
        return spectral_profile(self.A)

    @cached_property
    def conformal_rate(self):
        """a when A = a*I + skew (flows are scaled rotations), else None."""
        sym = 0.5 * (self.A + self.A.T)
        a = float(np.trace(self.A)) / self.dim
        scale = max(1.0, float(np.max(np.abs(self.A))))
        if np.max(np.abs(sym - a * np.eye(self.dim))) <= 1e-12 * scale:
            return a
        return None

    def flow(self, t):
        T = expm(float(t) * self.A)
        if not np.all(np.isfinite(T)) or operator_norm(T) > _FLOW_GUARD:
            raise NumericError("flow e^{tA} overflows", t=t)
        return T

    def apply_flow(self, taus, vecs):
        """e^{tau_k A} v_k for each row; taus (M,), vecs (M, d)."""
        taus = np.asarray(taus, dtype=float)
        vecs = np.asarray(vecs, dtype=float).reshape(len(taus), self.dim)
        if self.dim == 1:
            return np.exp(self.A[0, 0] * taus)[:, None] * vecs
        w, V = self._eig
        if V is not None:
            coeff = vecs @ self._eig_inv.T
            coeff = coeff * np.exp(np.outer(taus, w))
            return (coeff @ V.T).real
        out = np.empty_like(vecs)
        for s in range(0, len(taus), 4096):
            E = expm(taus[s:s + 4096, None, None] * self.A)
            out[s:s + 4096] = np.einsum("kij,kj->ki", E, vecs[s:s + 4096])
        return out

    @cached_property
    def _eig(self):
        w, V = np.linalg.eig(self.A)
        if np.linalg.cond(V) > 1e6:
            return w, None
        return w, V

    @cached_property
    def _eig_inv(self):
        return np.linalg.inv(self._eig[1])


@dataclass
class _NoisePlan:
    cut: float
    jump_measure: object  # measure whose jumps >= cut are explicit
    rate: float
    thinned: list  # finite parts whose jumps below cut are simulated raw
    exact_stable: list
    drift: np.ndarray
    cov: np.ndarray


def _parts(nu):
    return list(nu.parts) if isinstance(nu, SumMeasure) else [nu]


def _plan(model, cut, scheme):
    tri = model.triplet
    exact = []
    rest = []
    for p in _parts(tri.nu):
        if p.total_mass == 0:
            continue
        if isinstance(p, Stable) and scheme.exact_stable and model.conformal_rate is not None:
            exact.append(p)
        else:
            rest.append(p)
    if cut == 0 and any(not p.finite for p in rest):
        cut = scheme.epsilon
    drift = tri.b.copy()
    cov = tri.Q.copy()
    thinned = []
    for p in rest:
        if p.finite:
            drift = drift - p.compensator(0.0)
            if cut > 0:
                thinned.append(p)
        else:
            drift = drift - p.compensator(cut)
            if scheme.gaussian:
                cov = cov + p.small_covariance(cut)
    if rest:
        jm = SumMeasure(tuple(rest)) if len(rest) > 1 else rest[0]
        rate = jm.mass_outside(cut) if cut > 0 else jm.total_mass
    else:
        jm, rate = None, 0.0
    if rate > scheme.max_rate:
        raise ConfigurationError(f"jump rate {rate:.3g} above max_rate; raise epsilon", "scheme.epsilon")
    return _NoisePlan(cut, jm, float(rate), thinned, exact, drift, cov)


def _check_t(t):
    t = float(t)
    if not (t >= 0 and math.isfinite(t)):
        raise InvalidInputError("t must be finite and non-negative")
    return t


def _stable_contribution(model, p, t, n, rng):
    a = model.conformal_rate
    alpha = p.alpha
    h = t if a == 0 else math.expm1(a * alpha * t) / (a * alpha)
    return p.sample_symbol_law(h, n, rng) if h > 0 else np.zeros((n, model.dim))


def _common_noise(model, plan, t, n, rng):
    """Everything except the explicit jumps >= cut: drift flow, Gaussian,
    exact stable parts and raw small jumps of finite parts."""
    d = model.dim
    out = np.tile(flow_integral(model.A, plan.drift, t), (n, 1))
    if t > 0 and np.any(plan.cov != 0):
        sigma = gaussian_convolution_covariance(model.A, plan.cov, t)
        out += rng.multivariate_normal(np.zeros(d), sigma, size=n, method="eigh")
    for p in plan.exact_stable:
        out += _stable_contribution(model, p, t, n, rng)
    for p in plan.thinned:
        counts = rng.poisson(p.total_mass * t, size=n)
        total = int(counts.sum())
        if total:
            marks = p.sample_cut(0.0, total, rng)
            small = np.linalg.norm(marks, axis=1) < plan.cut
            times = rng.uniform(0.0, t, total)
            contrib = model.apply_flow(t - times, marks) * small[:, None]
            owner = np.repeat(np.arange(n), counts)
            for j in range(d):
                out[:, j] += np.bincount(owner, weights=contrib[:, j], minlength=n)
    return out


@dataclass
class CompoundPoissonPath:
    """Jump times (sorted, absolute) and marks of the explicit jumps on [0, t]."""

    times: np.ndarray
    marks: np.ndarray

    @property
    def count(self):
        return len(self.times)


def _jumps(model, plan, t, n, rng):
    """Explicit jumps: counts per draw, owner index, absolute times, marks."""
    d = model.dim
    if plan.jump_measure is None or plan.rate == 0 or t == 0:
        return np.zeros(n, dtype=int), np.zeros(0, dtype=int), np.zeros(0), np.zeros((0, d))
    counts = rng.poisson(plan.rate * t, size=n)
    total = int(counts.sum())
    owner = np.repeat(np.arange(n), counts)
    times = rng.uniform(0.0, t, total)
    marks = plan.jump_measure.sample_cut(plan.cut, total, rng) if total else np.zeros((0, d))
    return counts, owner, times, marks


def _sum_jumps(model, n, owner, times, marks, t):
    out = np.zeros((n, model.dim))
    if len(times):
        contrib = model.apply_flow(t - times, marks)
        for j in range(model.dim):
            out[:, j] = np.bincount(owner, weights=contrib[:, j], minlength=n)
    return out


def simulate_endpoint(model, x, t, scheme=None, rng=None, size=None):
    """Draws of X_t started at x; shape (d,) or (size, d)."""
    scheme = scheme or SmallJumpScheme()
    rng = rng if rng is not None else np.random.default_rng()
    t = _check_t(t)
    n = 1 if size is None else int(size)
    x = np.asarray(x, dtype=float).reshape(model.dim)
    T = model.flow(t)
    cut = 0.0 if model.triplet.nu.finite else scheme.epsilon
    plan = _plan(model, cut, scheme)
    out = _common_noise(model, plan, t, n, rng)
    counts, owner, times, marks = _jumps(model, plan, t, n, rng)
    out += _sum_jumps(model, n, owner, times, marks, t)
    out += T @ x
    return out[0] if size is None else out


def simulate_convolution(model, t, scheme=None, rng=None, size=None):
    """Draws of Y_t = int_0^t e^{(t-s)A} dZ_s."""
    return simulate_endpoint(model, np.zeros(model.dim), t, scheme, rng, size)


def sample_compound_poisson_path(model, t, rng, epsilon=1.0):
    """Explicit jump record of the nu_epsilon compound Poisson part on [0, t]."""
    t = _check_t(t)
    tm = truncate(model.triplet.nu, epsilon)
    count = rng.poisson(tm.total_mass * t)
    times = np.sort(rng.uniform(0.0, t, count))
    marks = tm.sample(count, rng) if count else np.zeros((0, model.dim))
    return CompoundPoissonPath(times, marks)


def convolution_from_path(model, path, t):
    """sum_k e^{(t - s_k)A} U_k for a recorded path."""
    if path.count == 0:
        return np.zeros(model.dim)
    return model.apply_flow(t - path.times, path.marks).sum(axis=0)


def invariant_horizon(model, tail_tol):
    """Horizon T beyond which the envelope makes the neglected tail below tail_tol."""
    spec = model.spectral
    if not spec.strictly_stable:
        raise PreconditionError("an invariant sample needs a strictly stable drift matrix")
    tri = model.triplet
    lm = moment_integral(tri.nu, "log1p")
    if not lm.finite:
        raise PreconditionError("log moment of nu diverges; no invariant measure is guaranteed")
    scale = 1.0 + float(np.linalg.norm(tri.b)) + math.sqrt(float(np.trace(tri.Q))) + lm.value
    for p in _parts(tri.nu):
        if p.total_mass > 0:
            scale += p.mass_outside(1.0) if not p.finite else p.total_mass
    lam = spec.envelope_lambda
    return max(math.log(spec.envelope_c * scale / tail_tol) / lam, 1.0 / lam)


def sample_invariant(model, rng=None, tail_tol=1e-6, scheme=None, size=None):
    """Draws of int_0^T e^{sA} dZ_s (same law as Y_T); returns (draws, T)."""
    T = invariant_horizon(model, tail_tol)
    return simulate_convolution(model, T, scheme, rng, size), T


@dataclass
class CoupledEndpoint:
    X: np.ndarray
    X_prime: np.ndarray
    coupled: np.ndarray
    n_jumps: np.ndarray
    last_jump_time: np.ndarray
    shift: np.ndarray = field(default=None)


def _rn_density(tm, z):
    """Radon-Nikodym density of nu_eps against Lebesgue + counting on atoms.

    Returns (value, is_atom) per row of z.
    """
    loc, mass = tm.atom_list()
    z = np.asarray(z, dtype=float)
    val = tm.pdf(z)
    is_atom = np.zeros(len(z), dtype=bool)
    if len(mass):
        diff = np.linalg.norm(z[:, None, :] - loc[None, :, :], axis=2)
        hit = diff <= 1e-12 * (1 + np.linalg.norm(loc, axis=1))[None, :]
        is_atom = hit.any(axis=1)
        val = np.where(is_atom, hit.astype(float) @ mass, val)
    return val, is_atom


def _ratio(tm, num_pts, den_pts):
    """p(num)/p(den) with an atom never comparable to a density point."""
    pn, an = _rn_density(tm, num_pts)
    pd, ad = _rn_density(tm, den_pts)
    pn = np.where(an == ad, pn, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(pd > 0, pn / pd, np.inf)
    return r


def exact_maximal_coupling(tm, v, rng, max_rounds=10_000):
    """Couple U ~ nu_bar and U' ~ nu_bar so that U' = U + v_i with maximal probability.

    ``v`` has one row per pair.  Returns (U, U', coupled).
    """
    v = np.asarray(v, dtype=float)
    n = len(v)
    U = tm.sample(n, rng)
    w = rng.random(n)
    coupled = w * 1.0 <= _ratio(tm, U + v, U)
    Up = U + v
    todo = np.flatnonzero(~coupled)
    rounds = 0
    while len(todo):
        rounds += 1
        if rounds > max_rounds:
            raise NumericError("residual sampler for the coupling did not terminate", left=len(todo))
        V0 = tm.sample(len(todo), rng)
        w2 = rng.random(len(todo))
        ok = w2 < 1.0 - np.minimum(1.0, _ratio(tm, V0 - v[todo], V0))
        Up[todo[ok]] = V0[ok]
        todo = todo[~ok]
    return U, Up, coupled


def coupled_pair_endpoint(model, x, y, epsilon, t, rng=None, size=None, scheme=None):
    """Pairs (X_t^x, X_t^y) sharing all noise except the last explicit jump mark.

    The last mark of the y-copy equals U + e^{S A}(x - y) whenever the
    maximal coupling succeeds (S is the last jump time), which makes the two
    endpoints identical; they are then returned as the same bits.
    """
    rng = rng if rng is not None else np.random.default_rng()
    scheme = scheme or SmallJumpScheme(epsilon=epsilon)
    scheme = SmallJumpScheme(epsilon=epsilon, gaussian=scheme.gaussian, exact_stable=False,
                             max_rate=scheme.max_rate)
    if not model.spectral.weakly_stable_semisimple:
        raise PreconditionError("coupling needs semisimple purely imaginary eigenvalues")
    t = _check_t(t)
    n = 1 if size is None else int(size)
    d = model.dim
    x = np.asarray(x, dtype=float).reshape(d)
    y = np.asarray(y, dtype=float)
    # one y per draw is allowed (mixtures over starting points)
    y = np.broadcast_to(y.reshape(-1, d), (n, d)) if y.size != d else np.tile(y.reshape(d), (n, 1))
    tm = truncate(model.triplet.nu, epsilon)
    if tm.total_mass <= 0:
        raise ConfigurationError("nu_epsilon has zero mass; nothing to couple", "epsilon")
    plan = _plan(model, tm.cut, scheme)
    T = model.flow(t)
    common = _common_noise(model, plan, t, n, rng)
    counts, owner, times, marks = _jumps(model, plan, t, n, rng)
    has = counts > 0
    last_time = np.full(n, np.nan)
    coupled = np.zeros(n, dtype=bool)
    delta = np.zeros((n, d))
    if len(times):
        order = np.lexsort((times, owner))
        ends = np.cumsum(counts)[has] - 1
        last_idx = order[ends]
        S = times[last_idx]
        last_time[has] = S
        v = model.apply_flow(S, x - y[has])
        U, Up, ok = exact_maximal_coupling(tm, v, rng)
        marks[last_idx] = U
        coupled[has] = ok
        # y-copy differs only through its last mark
        delta[has] = model.apply_flow(t - S, Up - U)
    base = common + _sum_jumps(model, n, owner, times, marks, t)
    X = base + T @ x
    Xp = base + y @ T.T + delta
    Xp[coupled] = X[coupled]
    res = CoupledEndpoint(X, Xp, coupled, counts, last_time)
    if size is None:
        return CoupledEndpoint(X[0], Xp[0], bool(coupled[0]), int(counts[0]), float(last_time[0]))
    return res


@dataclass
class MomentTable:
    t: list
    mean: list
    se: list
    alpha: float
    plateau: bool

    def rows(self):
        return list(zip(self.t, self.mean, self.se))


def uniform_moment_check(model, alpha, t_grid, n, rng=None, scheme=None):
    """Monte Carlo E|Y_t|^alpha per t with standard errors, and a plateau verdict.

    The plateau holds when the last three means agree pairwise within three
    combined standard errors.
    """
    if not 0 < alpha <= 1:
        raise InvalidInputError("alpha must lie in (0, 1]")
    mom = moment_integral(model.triplet.nu, "power", alpha)
    if not mom.finite:
        raise PreconditionError(f"the |z|^{alpha} moment of nu diverges")
    rng = rng if rng is not None else np.random.default_rng()
    ts, means, ses = [], [], []
    for t in t_grid:
        Y = simulate_convolution(model, t, scheme, rng, size=n)
        val = np.linalg.norm(Y, axis=1) ** alpha
        ts.append(float(t))
        means.append(float(val.mean()))
        ses.append(float(val.std(ddof=1) / math.sqrt(n)))
    tail = list(zip(means[-3:], ses[-3:]))
    plateau = all(abs(m1 - m2) <= 3 * math.hypot(s1, s2)
                  for i, (m1, s1) in enumerate(tail) for (m2, s2) in tail[i + 1:])
    return MomentTable(ts, means, ses, alpha, plateau)
