"""Numerical checkers for the hypotheses on nu, the symbol and A, and the
classification that combines them.

Every checker returns a ``ConditionRecord`` whose status is ``pass``,
``fail`` or ``inconclusive``.  Decisions compare values against thresholds
only after subtracting (or adding) ``bar_scale`` times the error bar, so
doubling the bars can only turn a decision into ``inconclusive``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ConsistencyError, InvalidInputError, LevyOUError, NumericError
from .lattice import GriddedMeasure, cell_masses_1d, cell_masses_2d, discretize, overlap_mass, shift, tv_estimate
from .levy import (
    LevyTriplet,
    Stable,
    SumMeasure,
    moment_integral,
    symbol,
    truncate,
)

__all__ = [
    "PASS",
    "FAIL",
    "INCONCLUSIVE",
    "CLASSIFICATIONS",
    "ConditionRecord",
    "ConditionReport",
    "check_log_moment",
    "check_alpha_moment",
    "check_overlap_condition",
    "check_tv_ratio_condition",
    "check_small_jump_spread",
    "check_symbol_growth",
    "check_density_sufficient",
    "check_minorant",
    "classify",
    "check_model",
    "default_alpha",
]

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"

CLASSIFICATIONS = (
    "none",
    "invariant-measure-exists",
    "ergodic",
    "algebraic-rate",
    "exp-ergodic",
    "exp-ergodic-alpha",
)

DEFAULT_EPSILONS = (0.5, 1.0, 2.0)
GROWTH_MARGIN = 1e-3
MAX_CELLS = {1: 4_000_000, 2: 1_500_000}


@dataclass
class ConditionRecord:
    name: str
    status: str
    evidence: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    message: str = ""

    def to_dict(self):
        return {
            "name": self.name,
            "status": self.status,
            "evidence": _jsonable(self.evidence),
            "parameters": _jsonable(self.parameters),
            "message": self.message,
        }


@dataclass
class ConditionReport:
    records: list
    classification: str
    justification: str
    alpha: float
    spectral: dict = field(default_factory=dict)

    def record(self, name):
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {
            "classification": self.classification,
            "justification": self.justification,
            "alpha": self.alpha,
            "spectral": _jsonable(self.spectral),
            "conditions": [r.to_dict() for r in self.records],
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _decide(low, high, threshold):
    """pass if low > threshold, fail if high <= threshold, else inconclusive."""
    if low > threshold:
        return PASS
    if high <= threshold:
        return FAIL
    return INCONCLUSIVE


# --- moments --------------------------------------------------------------

def check_log_moment(nu):
    try:
        res = moment_integral(nu, "log1p")
    except NumericError as exc:
        return ConditionRecord("log_moment", INCONCLUSIVE, message=str(exc))
    return ConditionRecord("log_moment", PASS if res.finite else FAIL,
                           evidence={"value": res.value})


def check_alpha_moment(nu, alpha):
    name = "moment_abs" if alpha == 1 else "moment_alpha"
    try:
        res = moment_integral(nu, "power", alpha)
    except NumericError as exc:
        return ConditionRecord(name, INCONCLUSIVE, parameters={"alpha": alpha}, message=str(exc))
    return ConditionRecord(name, PASS if res.finite else FAIL,
                           evidence={"value": res.value}, parameters={"alpha": alpha})


# --- lattice-based shift conditions ------------------------------------------

def _directions(d, n_dirs):
    if d == 1:
        return np.array([[1.0], [-1.0]])
    th = 2 * np.pi * np.arange(n_dirs) / n_dirs
    return np.stack([np.cos(th), np.sin(th)], axis=1)


def _lattice_for(tm, h_target, pad, leak_tol):
    """Discretise nu_eps with spacing near h_target inside the cell budget."""
    d = tm.dim
    total = tm.total_mass
    radius = tm.suggested_radius(0.5 * leak_tol * total)
    cells = MAX_CELLS[d] ** (1.0 / d)
    h = max(h_target, 2.0 * (radius + pad) / cells)
    # keep cell edges on a dyadic lattice so shifts 2^-k are lattice aligned where possible
    h = 2.0 ** math.ceil(math.log2(h))
    return discretize(tm, h, radius=radius, pad=pad, leak_tol=leak_tol)


def _overlap_with_bar(fine, coarse, x, leak_tol):
    vf = overlap_mass(fine, x, leak_tol)
    vc = overlap_mass(coarse, x, leak_tol)
    return vf.value, vf.bar + abs(vf.value - vc.value)


def check_overlap_condition(nu, epsilon=1.0, rho=0.5, n_radii=8, n_dirs=16, h=None,
                            leak_tol=1e-3, bar_scale=1.0):
    """inf over |x| <= rho of the mass of nu_eps ^ (delta_x * nu_eps) is positive."""
    params = {"epsilon": epsilon, "rho": rho, "n_radii": n_radii, "n_dirs": n_dirs}
    if not (epsilon > 0 and rho > 0):
        raise InvalidInputError("epsilon and rho must be positive")
    if nu.dim > 2:
        return ConditionRecord("overlap", INCONCLUSIVE, parameters=params,
                               message="lattice algebra is limited to d <= 2")
    try:
        tm = truncate(nu, epsilon)
    except LevyOUError as exc:
        return ConditionRecord("overlap", INCONCLUSIVE, parameters=params, message=str(exc))
    if tm.total_mass <= 0:
        return ConditionRecord("overlap", FAIL, evidence={"C_epsilon": 0.0}, parameters=params,
                               message="nu_epsilon has no mass")
    if h is None:
        scale = nu.smoothness_scale() or rho
        h = min(rho / 16, scale / 16, max(tm.cut, 1e-3) / 8)
    try:
        fine = _lattice_for(tm, h, rho, leak_tol)
    except LevyOUError as exc:
        return ConditionRecord("overlap", INCONCLUSIVE, parameters=params, message=str(exc))
    coarse = fine.coarsened()
    best = None
    for k in range(1, n_radii + 1):
        for u in _directions(nu.dim, n_dirs):
            x = rho * k / n_radii * u
            v, bar = _overlap_with_bar(fine, coarse, x, leak_tol)
            if best is None or v - bar_scale * bar < best[0] - bar_scale * best[1]:
                best = (v, bar, x)
    v, bar, x = best
    floor = 1e-12 * tm.total_mass
    status = _decide(v - bar_scale * bar, v + bar_scale * bar, floor)
    params["h"] = float(fine.spacing[0])
    return ConditionRecord("overlap", status,
                           evidence={"min_overlap": v, "bar": bar, "argmin_x": x,
                                     "C_epsilon": tm.total_mass},
                           parameters=params)


def _tv_ratios(fine, coarse, rhos, d, n_dirs, leak_tol, fractions=(0.25, 0.5, 0.75, 1.0)):
    ratios, bars = [], []
    for rho in rhos:
        best = (0.0, 0.0)
        for f in fractions:
            for u in _directions(d, n_dirs):
                x = rho * f * u
                tf = tv_estimate(fine, shift(fine, x, leak_tol))
                tc = tv_estimate(coarse, shift(coarse, x, leak_tol))
                val, bar = tf.value, tf.bar + abs(tf.value - tc.value)
                if val + bar > best[0] + best[1]:
                    best = (val, bar)
        ratios.append(best[0] / rho)
        bars.append(best[1] / rho)
    return np.array(ratios), np.array(bars)


def _bounded_verdict(ratios, bars, bar_scale):
    """Decide bounded/non-diverging on the last four ratios."""
    if len(ratios) < 4:
        return INCONCLUSIVE
    r0, r1 = ratios[-4], ratios[-1]
    e0, e1 = bar_scale * bars[-4], bar_scale * bars[-1]
    if r1 + e1 <= 1e-12:
        return PASS
    if r0 - e0 > 0 and (r1 + e1) / (r0 - e0) <= 1.5:
        return PASS
    if (r1 - e1) / (r0 + e0) > 2.0:
        return FAIL
    return INCONCLUSIVE


def _tv_ratio_on_lattice(fine, k_max, n_dirs, leak_tol, bar_scale, name, extra):
    h = float(fine.spacing[0])
    rhos = [2.0**-k for k in range(2, k_max + 1) if 2.0**-k >= 8 * h]
    coarse = fine.coarsened()
    ratios, bars = _tv_ratios(fine, coarse, rhos, fine.dim, n_dirs, leak_tol)
    status = _bounded_verdict(ratios, bars, bar_scale)
    evidence = dict(extra, rho=rhos, ratio=ratios, bar=bars,
                    limit_estimate=float(ratios[-1]) if len(ratios) else None,
                    limit_bar=float(bars[-1]) if len(bars) else None,
                    resolvable_min_rho=min(rhos) if rhos else None)
    msg = "" if len(rhos) >= 4 else "lattice too coarse: fewer than four resolvable radii"
    return ConditionRecord(name, status, evidence=evidence,
                           parameters={"k_max": k_max, "h": h, "n_dirs": n_dirs}, message=msg)


def check_tv_ratio_condition(nu, epsilon=1.0, k_max=8, n_dirs=8, h=None, leak_tol=1e-3,
                             bar_scale=1.0):
    """limsup over rho -> 0 of sup_{|x|<=rho} ||nu_eps - delta_x*nu_eps|| / rho is finite."""
    if nu.dim > 2:
        return ConditionRecord("tv_ratio", INCONCLUSIVE, parameters={"epsilon": epsilon},
                               message="lattice algebra is limited to d <= 2")
    try:
        tm = truncate(nu, epsilon)
        if tm.total_mass <= 0:
            # no jumps to couple with: the shift conditions carry no information
            return ConditionRecord("tv_ratio", FAIL, evidence={"C_epsilon": 0.0},
                                   parameters={"epsilon": epsilon}, message="nu_epsilon has no mass")
        if h is None:
            h = 2.0**-k_max / 8
        fine = _lattice_for(tm, h, 0.25, leak_tol)
    except LevyOUError as exc:
        return ConditionRecord("tv_ratio", INCONCLUSIVE, parameters={"epsilon": epsilon},
                               message=str(exc))
    rec = _tv_ratio_on_lattice(fine, k_max, n_dirs, leak_tol, bar_scale, "tv_ratio",
                               {"C_epsilon": tm.total_mass})
    rec.parameters["epsilon"] = epsilon
    return rec


# --- growth conditions --------------------------------------------------------

def _xi_grid(xi_max, d, n_dirs, per_decade=10):
    if xi_max < 1e3:
        raise InvalidInputError("xi_max must be at least 1e3")
    mags = np.logspace(1, math.log10(xi_max), int(round((math.log10(xi_max) - 1) * per_decade)) + 1)
    return mags, _directions(d, n_dirs)[: (1 if d == 1 else n_dirs)]


def _liminf_estimate(mags, ratio, bar):
    """liminf surrogate over the last two decades: min of the data and the
    intercept of a fit ratio ~ a + b / log(1 + |xi|)."""
    sel = mags >= mags[-1] / 100.0
    m, r, e = mags[sel], ratio[sel], bar[sel]
    X = np.stack([np.ones_like(m), 1.0 / np.log1p(m)], axis=1)
    coef, *_ = np.linalg.lstsq(X, r, rcond=None)
    resid = r - X @ coef
    dof = max(len(r) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.pinv(X.T @ X)
    a, a_se = float(coef[0]), math.sqrt(max(cov[0, 0], 0.0))
    i = int(np.argmin(r))
    if r[i] <= a:
        return float(r[i]), float(e[i]), a
    return a, a_se + float(np.max(e)), a


def _growth_record(name, mags, ratios, bars, bar_scale, extra, margin=GROWTH_MARGIN):
    ratio = ratios.min(axis=1)
    bar = bars.max(axis=1)
    est, est_bar, intercept = _liminf_estimate(mags, ratio, bar)
    status = _decide(est - bar_scale * est_bar, est + bar_scale * est_bar, margin)
    evidence = dict(extra, xi=mags, ratio=ratio, liminf_estimate=est, bar=est_bar,
                    fit_intercept=intercept, margin=margin)
    return ConditionRecord(name, status, evidence=evidence), est


def check_small_jump_spread(nu, xi_max=1e6, n_dirs=8, bar_scale=1.0):
    """liminf over |xi| -> inf of int_{|z|<=1/|xi|} <z,xi>^2 nu(dz) / log(1+|xi|) is positive."""
    mags, dirs = _xi_grid(xi_max, nu.dim, n_dirs)
    params = {"xi_max": xi_max, "n_dirs": len(dirs)}
    try:
        pts = mags[:, None, None] * dirs[None, :, :]
        num = nu.small_ball_quadratic(pts)
    except LevyOUError as exc:
        return ConditionRecord("small_jump_spread", INCONCLUSIVE, parameters=params, message=str(exc))
    ratios = num / np.log1p(mags)[:, None]
    bars = 1e-7 * np.abs(ratios) + 1e-12
    rec, _ = _growth_record("small_jump_spread", mags, ratios, bars, bar_scale, {})
    rec.parameters = params
    return rec


def check_symbol_growth(triplet, xi_max=1e6, n_dirs=8, bar_scale=1.0):
    """liminf over |xi| -> inf of Re symbol(xi) / log(1+|xi|) is positive; records c0 and t0."""
    d = triplet.dim
    mags, dirs = _xi_grid(xi_max, d, n_dirs)
    params = {"xi_max": xi_max, "n_dirs": len(dirs)}
    try:
        pts = mags[:, None, None] * dirs[None, :, :]
        re = symbol(triplet, pts.reshape(-1, d)).real.reshape(len(mags), len(dirs))
    except LevyOUError as exc:
        return ConditionRecord("symbol_growth", INCONCLUSIVE, parameters=params, message=str(exc))
    ratios = re / np.log1p(mags)[:, None]
    bars = 1e-7 * np.abs(ratios) + 1e-10
    rec, est = _growth_record("symbol_growth", mags, ratios, bars, bar_scale, {})
    rec.parameters = params
    if not triplet.has_gaussian and triplet.nu.finite:
        bound = 2.0 * triplet.nu.total_mass
        rec.status = FAIL
        rec.evidence["certificate"] = f"bounded symbol: Re <= 2 nu(R^d) = {bound:.6g}"
    if rec.status == PASS:
        rec.evidence["c0"] = est
        rec.evidence["t0"] = (2 * d + 2) / est
    return rec


# --- density sufficient conditions -----------------------------------------

def _ball_integral(f, z0, eps, d):
    """int over |z - z0| <= eps of a vectorised function."""
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    if d == 1:
        g = lambda z: float(f(np.array([[z]]))[0])
        with np.errstate(all="ignore"):
            val, _ = integrate.quad(g, z0[0] - eps, z0[0] + eps, limit=400,
                                    points=[z0[0]], epsabs=1e-12, epsrel=1e-10)
        return val
    th = 2 * np.pi * np.arange(256) / 256
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    g = lambda r: float(np.sum(f(z0 + r * dirs)) * (2 * np.pi / 256) * r)
    with np.errstate(all="ignore"):
        val, _ = integrate.quad(g, 0.0, eps, limit=400, epsabs=1e-12, epsrel=1e-10)
    return val


def check_density_sufficient(rho_fn, z0, epsilon, dim=1, bar_scale=1.0):
    """Two sufficient density criteria on the ball |z - z0| <= epsilon.

    Returns ``(inverse_record, lipschitz_record)``: the first tests
    int 1/rho < inf (which gives the overlap condition), the second tests
    that sup_{|x|<=r} int |rho(z) - rho(z + x)| dz / r stays bounded as r -> 0.
    """
    z0 = np.atleast_1d(np.asarray(z0, dtype=float)).reshape(dim)
    params = {"z0": z0, "epsilon": epsilon}

    def rho(z):
        z = np.asarray(z, dtype=float).reshape(-1, dim)
        with np.errstate(all="ignore"):
            v = np.asarray(rho_fn(z[:, 0] if dim == 1 else z), dtype=float).reshape(-1)
        return np.where(np.isfinite(v), np.maximum(v, 0.0), 0.0)

    # zero-set certificate on a fine lattice of the ball
    n = 4001 if dim == 1 else 301
    axes = [np.linspace(-epsilon, epsilon, n)] * dim
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    pts = pts[np.linalg.norm(pts, axis=1) <= epsilon] + z0
    vals = rho(pts)
    zero_frac = float(np.mean(vals <= 0))
    if zero_frac > 1e-3:
        inv = ConditionRecord("density_inverse", FAIL, parameters=params,
                              evidence={"zero_fraction": zero_frac,
                                        "zero_point": pts[np.argmax(vals <= 0)]},
                              message="density vanishes on a set of positive measure")
    else:
        # capped integrals int min(1/rho, 1/delta); increments per decade must die out
        caps = [10.0**-k for k in range(0, 13)]
        totals = []
        for c in caps:
            f = lambda z, c=c: 1.0 / np.maximum(rho(z), c)
            totals.append(_ball_integral(f, z0, epsilon, dim))
        inc = np.diff(totals)
        total = totals[-1]
        tail = inc[-3:]
        converged = tail[-1] <= 1e-6 * max(total, 1e-300) or (
            tail[0] > 0 and tail[-1] / tail[0] < 0.05)
        diverging = tail[-1] > 0.2 * tail[0] and tail[-1] > 1e-3 * max(total, 1e-300)
        status = PASS if converged else (FAIL if diverging else INCONCLUSIVE)
        inv = ConditionRecord("density_inverse", status, parameters=params,
                              evidence={"capped_integrals": totals, "caps": caps,
                                        "value": total if status == PASS else math.inf})
    # shifted-L1 ratios
    rs = [2.0**-k for k in range(2, 11)]
    ratios, bars = [], []
    for r in rs:
        best = 0.0
        for f in (0.5, 1.0):
            for u in _directions(dim, 8):
                x = r * f * u
                val = _ball_integral(lambda z, x=x: np.abs(rho(z) - rho(z + x)), z0, epsilon, dim)
                best = max(best, val)
        ratios.append(best / r)
        bars.append(1e-8 * best / r + 1e-12)
    ratios, bars = np.array(ratios), np.array(bars)
    lip = ConditionRecord("density_shift_l1", _bounded_verdict(ratios, bars, bar_scale),
                          parameters=params,
                          evidence={"r": rs, "ratio": ratios, "limit_estimate": float(ratios[-1])})
    return inv, lip


# --- minorant --------------------------------------------------------------

def check_minorant(nu, mu, k_max=8, n_dirs=8, leak_tol=1e-3, bar_scale=1.0):
    """nu dominates the finite gridded measure mu cellwise, and mu satisfies the TV-ratio bound."""
    if not isinstance(mu, GriddedMeasure):
        raise InvalidInputError("minorant must be a GriddedMeasure")
    h = float(mu.spacing[0])
    # nu cell masses; the cell holding the origin of an infinite nu is unbounded
    cut = 1e-12 if not nu.finite else 0.0
    if mu.dim == 1:
        nu_w = cell_masses_1d(nu, mu.edges(0), cut)
    else:
        nu_w = cell_masses_2d(nu, mu.edges(0), mu.edges(1), cut)
    if not nu.finite:
        centre = tuple(int(np.floor(-o / s + 1e-9)) for o, s in zip(mu.origin, mu.spacing))
        if all(0 <= c < n for c, n in zip(centre, mu.shape)):
            nu_w[centre] = np.inf
    slack = 1e-9 * nu_w + 1e-14
    bad = mu.weights > nu_w + bar_scale * slack
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(np.where(bad, mu.weights - nu_w, -np.inf))), mu.shape)
        cell = [float(mu.origin[a] + mu.spacing[a] * idx[a]) for a in range(mu.dim)]
        return ConditionRecord("minorant", FAIL,
                               evidence={"violating_cell": cell, "mu_mass": float(mu.weights[idx]),
                                         "nu_mass": float(nu_w[idx])},
                               message="nu does not dominate the minorant")
    # zero cells around mu leave room for the ratio shifts (at most 1/4)
    k = int(math.ceil(0.25 / h)) + 2
    padded = GriddedMeasure(mu.origin - k * mu.spacing, mu.spacing, np.pad(mu.weights, k), mu.outside)
    rec = _tv_ratio_on_lattice(padded, k_max, n_dirs, leak_tol, bar_scale, "minorant",
                               {"minorant_mass": mu.total_mass})
    rec.parameters["h"] = h
    return rec


# --- classification ----------------------------------------------------------

def default_alpha(nu):
    """min(1, alpha0/2) over stable components, else 1."""
    parts = nu.parts if isinstance(nu, SumMeasure) else (nu,)
    idx = [p.alpha for p in parts if isinstance(p, Stable)]
    return min(1.0, min(idx) / 2.0) if idx else 1.0


def _status(records, name):
    for r in records:
        if r.name == name:
            return r.status
    return INCONCLUSIVE


def classify(records, spectral, alpha):
    """Strongest conclusion the passing conditions support.

    Each rung needs a strictly stable drift matrix.  The rungs are:
      invariant-measure-exists: log moment;
      ergodic: log moment + overlap;
      algebraic-rate: overlap + first absolute moment;
      exp-ergodic: (TV ratio or minorant) + first absolute moment;
      exp-ergodic-alpha: (symbol growth or small-jump spread) + |z|^alpha moment.
    """
    ok = lambda name: _status(records, name) == PASS
    tv_ok = ok("tv_ratio")
    if tv_ok and _status(records, "overlap") == FAIL:
        raise ConsistencyError("TV-ratio condition passes but the overlap condition fails")
    overlap_ok = ok("overlap") or tv_ok  # a bounded TV ratio implies the overlap condition
    if not spectral.strictly_stable:
        return "none", "drift matrix is not strictly stable"
    alpha_name = "moment_abs" if alpha == 1 else "moment_alpha"
    ladder = [
        ("exp-ergodic-alpha", (ok("symbol_growth") or ok("small_jump_spread")) and ok(alpha_name),
         "symbol growth or small-jump spread, with the |z|^alpha moment"),
        ("exp-ergodic", (tv_ok or ok("minorant")) and ok("moment_abs"),
         "TV-ratio bound or minorant, with the first absolute moment"),
        ("algebraic-rate", overlap_ok and ok("moment_abs"),
         "overlap condition with the first absolute moment"),
        ("ergodic", overlap_ok and ok("log_moment"), "overlap condition with the log moment"),
        ("invariant-measure-exists", ok("log_moment"), "log moment with strictly stable drift"),
    ]
    for label, holds, why in ladder:
        if holds:
            return label, why
    return "none", "log moment not established"


def _spectral_dict(spectral):
    return {
        "eigenvalues": [[e.real, e.imag] for e in spectral.eigenvalues],
        "strictly_stable": spectral.strictly_stable,
        "weakly_stable_semisimple": spectral.weakly_stable_semisimple,
        "envelope_c": spectral.envelope_c,
        "envelope_lambda": spectral.envelope_lambda,
    }


def _best(records):
    """Pick pass over inconclusive over fail."""
    order = {PASS: 0, INCONCLUSIVE: 1, FAIL: 2}
    return min(records, key=lambda r: order[r.status])


def check_model(model, epsilon=None, rho=0.5, alpha=None, xi_max=1e6, n_dirs=8,
                minorant=None, bar_scale=1.0):
    """Run every checker on an OU model and classify it.

    For an infinite nu and ``epsilon=None`` the shift conditions are tried at
    each epsilon in (0.5, 1, 2) and the best outcome is kept.
    """
    nu = model.triplet.nu
    if alpha is None:
        alpha = default_alpha(nu)
    if not 0 < alpha <= 1:
        raise InvalidInputError("alpha must lie in (0, 1]")
    if epsilon is None:
        epsilons = DEFAULT_EPSILONS if not nu.finite else (1.0,)
    else:
        epsilons = (float(epsilon),)
    records = [check_log_moment(nu)]
    overlap, tv = [], []
    for eps in epsilons:
        o = check_overlap_condition(nu, eps, rho, bar_scale=bar_scale)
        t = check_tv_ratio_condition(nu, eps, n_dirs=n_dirs, bar_scale=bar_scale)
        if t.status == PASS and o.status != PASS:
            o = _recheck_overlap(nu, eps, rho, t, bar_scale)
        overlap.append(o)
        tv.append(t)
    records += [_best(overlap), _best(tv)]
    records.append(check_alpha_moment(nu, 1.0))
    if alpha != 1:
        records.append(check_alpha_moment(nu, alpha))
    records.append(check_small_jump_spread(nu, xi_max, n_dirs, bar_scale))
    records.append(check_symbol_growth(model.triplet, xi_max, n_dirs, bar_scale))
    if minorant is not None:
        records.append(check_minorant(nu, minorant, bar_scale=bar_scale))
    label, why = classify(records, model.spectral, alpha)
    return ConditionReport(records, label, why, alpha, _spectral_dict(model.spectral))


def _recheck_overlap(nu, eps, rho, tv_record, bar_scale):
    """A finite TV ratio K forces a positive overlap for rho' < C_eps / K."""
    c = tv_record.evidence["C_epsilon"]
    k = tv_record.evidence["limit_estimate"] + bar_scale * tv_record.evidence["limit_bar"]
    small = min(rho, 0.5 * c / max(k, 1e-300))
    small = max(small, tv_record.evidence["resolvable_min_rho"] or small)
    rec = check_overlap_condition(nu, eps, small, bar_scale=bar_scale)
    if rec.status == FAIL:
        raise ConsistencyError(
            f"TV ratio bounded by {k:.4g} at epsilon={eps} yet overlap fails at rho={small:.4g}")
    rec.message = f"rechecked at rho={small:.6g} because the TV-ratio condition passed"
    return rec
