"""Decay experiments, rate fits and the combined model report."""

from __future__ import annotations

import io
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import oracle
from .conditions import (
    ConditionReport,
    _jsonable,
    _lattice_for,
    check_model,
)
from .errors import FitDegenerateError, InvalidInputError, LevyOUError
from .lattice import overlap_mass
from .levy import truncate
from .ou import coupled_pair_endpoint, sample_invariant, simulate_endpoint
from .parallel import run_chunked, sub_seed

__all__ = [
    "DecayRow",
    "DecayTable",
    "RateFit",
    "CrossCheck",
    "ScalingTable",
    "ReportParams",
    "FullReport",
    "tv_decay_two_points",
    "tv_decay_vs_invariant",
    "fit_decay",
    "cross_check",
    "starting_point_scaling",
    "full_report",
    "invariant_ks",
]

METHODS = ("oracle", "coupling", "histogram")
FAMILIES = ("exponential", "algebraic", "alpha-exponential")
MIN_ROWS = 6


@dataclass
class DecayRow:
    t: float
    tv: float
    err: float
    method: str
    extra: dict = field(default_factory=dict)


@dataclass
class DecayTable:
    """TV values against time for one estimator.

    ``err`` is the oracle error bar for oracle rows and one standard error
    for Monte Carlo rows.
    """

    rows: list
    method: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ts = [r.t for r in self.rows]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidInputError("decay table times must be strictly increasing")

    @property
    def t(self):
        return np.array([r.t for r in self.rows])

    @property
    def tv(self):
        return np.array([r.tv for r in self.rows])

    @property
    def err(self):
        return np.array([r.err for r in self.rows])

    def floor(self):
        """Per-row noise floor: the bar for oracle rows, 3 sigma for Monte Carlo."""
        return self.err if self.method == "oracle" else 3.0 * self.err

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "tv", "err", "method"])
        for r in self.rows:
            w.writerow([repr(float(r.t)), repr(float(r.tv)), repr(float(r.err)), r.method])
        return buf.getvalue()

    def to_dict(self):
        return {
            "method": self.method,
            "metadata": _jsonable(self.metadata),
            "rows": [{"t": r.t, "tv": r.tv, "err": r.err, "method": r.method,
                      **({"extra": _jsonable(r.extra)} if r.extra else {})} for r in self.rows],
        }


def _times(t_grid):
    ts = np.asarray(t_grid, dtype=float).ravel()
    if len(ts) == 0 or np.any(ts <= 0) or np.any(np.diff(ts) <= 0):
        raise InvalidInputError("t grid must be positive and strictly increasing")
    return ts


def _vec(model, x, name):
    v = np.asarray(x, dtype=float)
    if v.size != model.dim:
        raise InvalidInputError(f"{name} must have {model.dim} components")
    return v.reshape(model.dim)


# --- Monte Carlo estimators ---------------------------------------------------------

def _overlap_curve(model, tm, diff, t):
    """S -> mass of nu_bar ^ (delta_{e^{SA} diff} nu_bar) on [0, t], by interpolation."""
    grid = _lattice_bar(tm, float(np.linalg.norm(diff)) * model.spectral.envelope_c)
    nodes = np.linspace(0.0, t, max(129, int(16 * t) + 1))
    vals = np.array([overlap_mass(grid, model.flow(s) @ diff, 1e-3).value for s in nodes])
    return lambda S: np.interp(S, nodes, vals)


def _lattice_bar(tm, pad):
    scale = tm.base.smoothness_scale() or 1.0
    return _lattice_for(tm, scale / 64.0, pad, 1e-3).normalized()


def _coupling_draws(model, x, y, epsilon, t, n, seed, workers, scheme=None):
    parts = run_chunked(
        lambda rng, m: coupled_pair_endpoint(model, x, y, epsilon, t, rng, size=m, scheme=scheme),
        n, seed, workers)
    coupled = np.concatenate([p.coupled for p in parts])
    counts = np.concatenate([p.n_jumps for p in parts])
    last = np.concatenate([p.last_jump_time for p in parts])
    return coupled, counts, last


def _coupling_row(model, x, y, epsilon, t, n, seed, workers, scheme=None):
    """2 P(not coupled): Rao-Blackwellised value and the raw frequency.

    Given the clocks, the coupling fails with probability 1 when there is no
    jump and 1 - overlap(e^{S A}(x - y)) otherwise (S the last jump time), so
    averaging that conditional probability removes the mark noise.
    """
    tm = truncate(model.triplet.nu, epsilon)
    coupled, counts, last = _coupling_draws(model, x, y, epsilon, t, n, seed, workers, scheme)
    raw = 1.0 - coupled.mean()
    curve = _overlap_curve(model, tm, x - y, t)
    cond = np.where(counts > 0, 1.0 - curve(np.nan_to_num(last)), 1.0)
    stat = 2.0 * np.clip(cond, 0.0, 1.0)
    sigma = float(stat.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    p0 = float(np.mean(counts == 0))
    extra = {
        "raw": 2.0 * raw,
        "raw_se": 2.0 * math.sqrt(max(raw * (1 - raw), 1.0 / n) / n),
        "p_no_jump": p0,
        "p_no_jump_expected": math.exp(-tm.total_mass * t),
        "epsilon": epsilon,
        "n": n,
    }
    return DecayRow(float(t), float(stat.mean()), sigma, "coupling", extra)


def _equal_mass_edges(pooled, k):
    qs = np.quantile(pooled, np.linspace(0, 1, k + 1))
    qs[0], qs[-1] = -np.inf, np.inf
    return np.unique(qs)


def _histogram_l1(a, b):
    """L1 between binned empirical laws with an upward-noise bar.

    Bins are equal-mass in the pooled sample (per axis in 2-d).  Binning
    biases the value low; sampling noise biases it high by at most
    sum_i sqrt((p_i + q_i)/n), which is returned as the bar.
    """
    n, d = a.shape
    k = max(10, int(2 * n ** (1.0 / 3.0))) if d == 1 else max(5, int(n ** 0.25))
    pooled = np.concatenate([a, b])
    edges = [_equal_mass_edges(pooled[:, j], k) for j in range(d)]
    ha = np.histogramdd(a, bins=edges)[0] / len(a)
    hb = np.histogramdd(b, bins=edges)[0] / len(b)
    l1 = float(np.abs(ha - hb).sum())
    bar = float(np.sqrt((ha + hb) / min(len(a), len(b))).sum())
    return l1, bar


def _histogram_row(model, x, other, t, n, seed, workers, scheme=None):
    xs = np.concatenate(run_chunked(lambda rng, m: simulate_endpoint(model, x, t, scheme, rng, m),
                                    n, sub_seed(seed, 1), workers))
    ys = other(n, sub_seed(seed, 2))
    l1, bar = _histogram_l1(xs, ys)
    return DecayRow(float(t), min(l1, 2.0), bar, "histogram", {"n": n})


# --- decay tables ------------------------------------------------------------------

def tv_decay_two_points(model, x, y, t_grid, method="oracle", n=10_000, seed=0,
                        epsilon=1.0, workers=None, scheme=None):
    """||P_t(x,.) - P_t(y,.)||_var over a t grid.

    ``method`` is "oracle", "coupling" (upper bound 2 P(not coupled)),
    "histogram" (binned L1, biased low) or "monte-carlo" for both Monte
    Carlo tables, returned as a list.
    """
    ts = _times(t_grid)
    x, y = _vec(model, x, "x"), _vec(model, y, "y")
    meta = {"x": x, "y": y, "seed": seed, "epsilon": epsilon, "n": n}
    if method == "monte-carlo":
        return [tv_decay_two_points(model, x, y, ts, m, n, seed, epsilon, workers, scheme)
                for m in ("coupling", "histogram")]
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}")
    rows = []
    for i, t in enumerate(ts):
        if np.array_equal(x, y):
            rows.append(DecayRow(float(t), 0.0, 0.0, method))
        elif method == "oracle":
            e = oracle.tv_distance_oracle(model, t, x, y)
            rows.append(DecayRow(float(t), e.value, e.bar, method))
        elif method == "coupling":
            rows.append(_coupling_row(model, x, y, epsilon, t, n, sub_seed(seed, i), workers, scheme))
        else:
            def other(m, s, t=t):
                return np.concatenate(run_chunked(
                    lambda rng, k: simulate_endpoint(model, y, t, scheme, rng, k), m, s, workers))
            rows.append(_histogram_row(model, x, other, t, n, sub_seed(seed, i), workers, scheme))
    return DecayTable(rows, method, meta)


def tv_decay_vs_invariant(model, x, t_grid, method="oracle", n=10_000, seed=0,
                          epsilon=1.0, workers=None, scheme=None):
    """||P_t(x,.) - mu||_var over a t grid against the invariant law mu.

    The coupling estimate averages the two-point bound over y ~ mu, which
    bounds the distance by the mixture inequality.
    """
    ts = _times(t_grid)
    x = _vec(model, x, "x")
    meta = {"x": x, "y": "vs-invariant", "seed": seed, "epsilon": epsilon, "n": n}
    if method == "monte-carlo":
        return [tv_decay_vs_invariant(model, x, ts, m, n, seed, epsilon, workers, scheme)
                for m in ("coupling", "histogram")]
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}")

    def mu_draws(m, s):
        return np.concatenate(run_chunked(
            lambda rng, k: sample_invariant(model, rng, scheme=scheme, size=k)[0], m, s, workers))

    rows = []
    for i, t in enumerate(ts):
        if method == "oracle":
            e = oracle.tv_vs_invariant_oracle(model, t, x)
            rows.append(DecayRow(float(t), e.value, e.bar, method))
        elif method == "coupling":
            ys = mu_draws(n, sub_seed(seed, i, 0))
            rows.append(_mixture_coupling_row(model, x, ys, epsilon, t, n,
                                              sub_seed(seed, i, 1), workers, scheme))
        else:
            rows.append(_histogram_row(model, x, mu_draws, t, n, sub_seed(seed, i), workers, scheme))
    return DecayTable(rows, method, meta)


def _mixture_coupling_row(model, x, ys, epsilon, t, n, seed, workers, scheme):
    """2 P(not coupled) for pairs started at x and y_i ~ mu, one y per draw."""
    tm = truncate(model.triplet.nu, epsilon)
    res = run_chunked(
        lambda rng, m, o: coupled_pair_endpoint(model, x, ys[o:o + m], epsilon, t, rng,
                                                size=m, scheme=scheme),
        n, seed, workers, offsets=True)
    coupled = np.concatenate([r.coupled for r in res])
    counts = np.concatenate([r.n_jumps for r in res])
    last = np.concatenate([r.last_jump_time for r in res])
    raw = 1.0 - coupled.mean()
    if model.dim == 1:
        stat = 2.0 * _mixture_conditional(model, tm, x, ys, counts, last)
    else:
        stat = 2.0 * (~coupled).astype(float)
    sigma = float(stat.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    extra = {"raw": 2.0 * raw, "raw_se": 2.0 * math.sqrt(max(raw * (1 - raw), 1.0 / n) / n),
             "epsilon": epsilon, "n": n}
    return DecayRow(float(t), float(stat.mean()), sigma, "coupling", extra)


def _mixture_conditional(model, tm, x, ys, counts, last):
    """1-d: P(not coupled | clocks) with the overlap tabulated in the shift."""
    has = counts > 0
    a = model.A[0, 0]
    v = np.zeros(len(ys))
    v[has] = np.exp(a * last[has]) * (x[0] - ys[has, 0])
    lo, hi = float(v.min()), float(v.max())
    span = max(abs(lo), abs(hi), 1e-12)
    grid = _lattice_bar(tm, span)
    nodes = np.linspace(lo, hi, 1025) if hi > lo else np.array([lo])
    ov = np.array([overlap_mass(grid, np.array([s]), 1e-3).value for s in nodes])
    ovl = np.interp(v, nodes, ov) if len(nodes) > 1 else np.full(len(v), ov[0])
    return np.where(has, np.clip(1.0 - ovl, 0.0, 1.0), 1.0)


# --- rate fits -----------------------------------------------------------------------

@dataclass
class RateFit:
    family: str
    params: dict
    ci: dict
    r2: float
    n_used: int
    residuals: list
    rate_positive: bool
    excluded: list = field(default_factory=list)

    def to_dict(self):
        return _jsonable({
            "family": self.family,
            "params": self.params,
            "ci95": self.ci,
            "r2": self.r2,
            "n_used": self.n_used,
            "rate_positive": self.rate_positive,
            "residuals": self.residuals,
            "excluded_t": self.excluded,
        })


def fit_decay(table, family="exponential", alpha=None, x=None):
    """Weighted least squares on the log scale.

    exponential: log tv = log C - kappa t; algebraic: log tv = log C - p log t;
    alpha-exponential: the exponential fit of tv / (1 + |x|^alpha).
    Rows at or below the noise floor are excluded.
    """
    if family not in FAMILIES:
        raise InvalidInputError(f"unknown family {family!r}")
    t, tv, err = table.t, table.tv, table.err
    floor = table.floor()
    use = (tv > floor) & (tv > 0)
    if int(use.sum()) < MIN_ROWS:
        raise FitDegenerateError(
            f"only {int(use.sum())} rows above the noise floor; need {MIN_ROWS}",
            usable=int(use.sum()), rows=len(t))
    tu, vu, eu = t[use], tv[use], err[use]
    prefactor = 1.0
    if family == "alpha-exponential":
        if alpha is None:
            raise InvalidInputError("alpha-exponential needs alpha")
        xv = np.zeros(1) if x is None else np.asarray(x, dtype=float)
        prefactor = 1.0 + float(np.linalg.norm(xv)) ** alpha
    y = np.log(vu / prefactor)
    z = np.log(tu) if family == "algebraic" else tu
    rel = eu / vu
    w = np.ones_like(y) if not np.any(rel > 0) else 1.0 / np.maximum(rel, 1e-9) ** 2
    X = np.stack([np.ones_like(z), z], axis=1)
    W = np.diag(w)
    xtwx = X.T @ W @ X
    coef = np.linalg.solve(xtwx, X.T @ W @ y)
    resid = y - X @ coef
    dof = len(y) - 2
    s2 = float(w @ resid**2) / dof
    cov = s2 * np.linalg.inv(xtwx)
    q = float(stats.t.ppf(0.975, dof))
    ybar = float(w @ y / w.sum())
    ss_tot = float(w @ (y - ybar) ** 2)
    r2 = 1.0 - float(w @ resid**2) / ss_tot if ss_tot > 0 else 1.0
    rate = -float(coef[1])
    half = q * math.sqrt(max(cov[1, 1], 0.0))
    name = "p" if family == "algebraic" else "kappa"
    params = {name: rate, "C": math.exp(float(coef[0])) * prefactor}
    if family == "alpha-exponential":
        params["alpha"] = alpha
    ci = {name: [rate - half, rate + half]}
    return RateFit(family, params, ci, r2, int(use.sum()),
                   [[float(a), float(b)] for a, b in zip(tu, resid)],
                   bool(rate - half > 0), [float(v) for v in t[~use]])


# --- cross check ---------------------------------------------------------------

@dataclass
class CrossCheck:
    rows: list
    consistent: bool

    def to_dict(self):
        return _jsonable({"consistent": self.consistent, "rows": self.rows})


def cross_check(oracle_table, coupling_table=None, histogram_table=None, k=3.0):
    """Coupling bound >= oracle - k sigma and histogram <= oracle + bars, row by row."""
    o = {r.t: r for r in oracle_table.rows}
    rows, ok = [], True
    for tab, kind in ((coupling_table, "coupling"), (histogram_table, "histogram")):
        if tab is None:
            continue
        for r in tab.rows:
            if r.t not in o:
                continue
            ref = o[r.t]
            if kind == "coupling":
                # a Rao-Blackwell row of exact zeros has no spread; fall back to the raw binomial bar
                sig = r.err if r.err > 0 else r.extra.get("raw_se", 0.0)
                good = r.tv >= ref.tv - ref.err - k * sig
            else:
                good = r.tv <= ref.tv + ref.err + r.err + k * math.sqrt(r.tv * (2 - r.tv) / max(r.extra.get("n", 1), 1))
            ok &= bool(good)
            rows.append({"t": r.t, "estimator": kind, "value": r.tv, "err": r.err,
                         "oracle": ref.tv, "oracle_bar": ref.err, "ok": bool(good)})
    return CrossCheck(rows, ok)


# --- starting point scaling -------------------------------------------------------

@dataclass
class ScalingTable:
    rows: list  # (|x|, tv, bar, ratio)
    alpha: float
    t: float
    spread: float
    bounded: bool

    def to_dict(self):
        return _jsonable({"alpha": self.alpha, "t": self.t, "max_over_min": self.spread,
                          "bounded": self.bounded,
                          "rows": [dict(zip(("x_norm", "tv", "bar", "ratio"), r)) for r in self.rows]})


def starting_point_scaling(model, t_fixed, x_grid, alpha):
    """TV(t; x, mu) / (1 + |x|^alpha) over starting points.

    ``bounded`` holds when the ratio at the largest |x| is at most twice the
    largest ratio seen before it (no divergence at the end of the grid).
    """
    if not 0 < alpha <= 1:
        raise InvalidInputError("alpha must lie in (0, 1]")
    rows = []
    for x in x_grid:
        xv = np.broadcast_to(np.asarray(x, dtype=float), (model.dim,)).copy()
        e = oracle.tv_vs_invariant_oracle(model, t_fixed, xv)
        r = float(np.linalg.norm(xv))
        rows.append((r, e.value, e.bar, e.value / (1.0 + r**alpha)))
    rows.sort(key=lambda row: row[0])
    ratios = np.array([row[3] for row in rows])
    pos = ratios[ratios > 0]
    spread = float(pos.max() / pos.min()) if len(pos) else 1.0
    bounded = len(ratios) < 2 or ratios[-1] <= 2.0 * ratios[:-1].max()
    return ScalingTable(rows, alpha, float(t_fixed), spread, bool(bounded))


# --- full report -------------------------------------------------------------------

EXPECTED_FAMILY = {
    "exp-ergodic-alpha": "alpha-exponential",
    "exp-ergodic": "exponential",
    "algebraic-rate": "algebraic",
}


@dataclass
class ReportParams:
    x: float = 1.0
    t_grid_exponential: tuple = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
    t_grid_algebraic: tuple = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    cross_check_t: tuple = (1.0, 2.0, 4.0)
    n_mc: int = 20_000
    seed: int = 0
    workers: int | None = None
    epsilon: float | None = None
    rho: float = 0.5
    alpha: float | None = None
    xi_max: float = 1e6


@dataclass
class FullReport:
    conditions: ConditionReport | None
    expected_family: str | None
    tables: list
    fits: list
    cross: CrossCheck | None
    agreement: str
    skipped: list
    errors: list
    params: dict

    def to_dict(self):
        return _jsonable({
            "conditions": self.conditions.to_dict() if self.conditions else None,
            "expected_family": self.expected_family,
            "agreement": self.agreement,
            "tables": [t.to_dict() for t in self.tables],
            "fits": [f.to_dict() for f in self.fits],
            "cross_check": self.cross.to_dict() if self.cross else None,
            "skipped": self.skipped,
            "errors": self.errors,
            "params": self.params,
        })


def _err(stage, exc):
    return {"stage": stage, "error": type(exc).__name__, "message": str(exc),
            "diagnostics": _jsonable(getattr(exc, "diagnostics", {}))}


def full_report(model, params=None):
    """Check conditions, run the decay experiment the classification predicts, fit and compare."""
    p = params or ReportParams()
    errors, skipped, tables, fits = [], [], [], []
    cross = None
    pdict = {k: getattr(p, k) for k in p.__dataclass_fields__}
    try:
        rep = check_model(model, epsilon=p.epsilon, rho=p.rho, alpha=p.alpha, xi_max=p.xi_max)
    except LevyOUError as exc:
        errors.append(_err("conditions", exc))
        return FullReport(None, None, [], [], None, "n/a", ["conditions failed"], errors, pdict)
    label = rep.classification
    family = EXPECTED_FAMILY.get(label)
    x = np.full(model.dim, float(p.x))
    if family is None and label != "ergodic":
        skipped.append({"stage": "decay", "reason": f"classification {label!r} predicts no rate"})
        return FullReport(rep, None, [], [], None, "n/a", skipped, errors, pdict)
    if model.dim > 2:
        skipped.append({"stage": "decay", "reason": "oracle limited to d <= 2"})
        return FullReport(rep, family, [], [], None, "n/a", skipped, errors, pdict)
    try:
        if family == "algebraic":
            y = x + np.eye(model.dim)[0]
            table = tv_decay_two_points(model, x, y, p.t_grid_algebraic, "oracle")
        else:
            table = tv_decay_vs_invariant(model, x, p.t_grid_exponential, "oracle")
        tables.append(table)
    except LevyOUError as exc:
        errors.append(_err("decay", exc))
        return FullReport(rep, family, tables, [], None, "n/a", skipped, errors, pdict)
    fams = [family] if family else ["exponential", "algebraic"]
    for fam in fams:
        try:
            fits.append(fit_decay(table, fam, alpha=rep.alpha, x=x))
        except LevyOUError as exc:
            errors.append(_err(f"fit:{fam}", exc))
    cross = _report_cross_check(model, x, p, errors, skipped)
    agreement = "n/a"
    if family and fits:
        f = fits[0]
        agreement = "agree" if f.rate_positive and f.r2 >= 0.9 else "disagree"
    if cross is not None and not cross.consistent:
        agreement = "estimators-disagree"
    return FullReport(rep, family, tables, fits, cross, agreement, skipped, errors, pdict)


def _report_cross_check(model, x, p, errors, skipped):
    """Two-point oracle against the coupling bound at a few times."""
    eps = p.epsilon or 1.0
    try:
        tm = truncate(model.triplet.nu, eps)
        if tm.total_mass <= 0 or not model.spectral.weakly_stable_semisimple:
            skipped.append({"stage": "cross-check", "reason": "no coupling available"})
            return None
        y = x + np.eye(model.dim)[0]
        ot = tv_decay_two_points(model, x, y, p.cross_check_t, "oracle")
        ct = tv_decay_two_points(model, x, y, p.cross_check_t, "coupling", n=p.n_mc,
                                 seed=p.seed, epsilon=eps, workers=p.workers)
        return cross_check(ot, ct)
    except LevyOUError as exc:
        errors.append(_err("cross-check", exc))
        return None


# --- invariant law check ---------------------------------------------------------

def invariant_ks(model, draws, horizon, tail_tol=1e-4):
    """KS distance between 1-d stationary draws and the FFT-inverted invariant law."""
    draws = np.sort(np.asarray(draws, dtype=float).reshape(-1))
    out = {"n": int(len(draws)), "horizon": float(horizon)}
    if model.dim != 1:
        out["skipped"] = "KS comparison needs a 1-d model"
        return out
    dens = oracle.stationary_density(model, tail_tol)
    grid_x, cdf = dens.cdf_1d()
    # cell-centred values: the cdf at the right edge of each cell
    h = grid_x[1] - grid_x[0]
    F = np.interp(draws, grid_x + 0.5 * h, cdf, left=0.0, right=1.0)
    n = len(draws)
    emp_hi = np.arange(1, n + 1) / n
    emp_lo = np.arange(0, n) / n
    ks = float(max(np.max(emp_hi - F), np.max(F - emp_lo)))
    out.update({"ks": ks, "oracle_mass": dens.total, "oracle_clipped": dens.clipped_mass,
                "critical_0.01": 1.628 / math.sqrt(n)})
    return out
