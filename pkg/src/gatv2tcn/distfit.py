"""Fit candidate distribution families to per-statistic samples and rank them by histogram RSS.

Families: ``norm`` and ``exp`` use closed-form maximum likelihood; ``t``,
``beta``, ``gamma`` and ``genextreme`` minimise the negative log-likelihood
with Nelder-Mead from moment-based starting points. Densities, log-densities
and shape conventions are those of :mod:`scipy.stats` (``genextreme`` shape
``c`` has the opposite sign of the usual GEV ``xi``).

RSS is the sum over histogram bins of the squared difference between the
fitted density at the bin centre and the histogram density.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special, stats

FAMILIES = ("norm", "t", "exp", "beta", "gamma", "genextreme")
DEFAULT_BINS = 40
MIN_SAMPLES = 30
T_DOF_FLOOR = 2.1
BETA_MARGIN = 1e-6
REPORT_HEADER = ("statistic", "family", "loc", "scale", "shape1", "shape2", "rss")

_PENALTY = 1e300
# shape parameters are bounded by e**12, past which t/gamma/beta match their limiting forms
_LOG_SHAPE_CAP = 12.0


class FitError(RuntimeError):
    """A family could not be fitted; ``best`` holds the best parameters reached, if any."""

    def __init__(self, message: str, best: "FitResult | None" = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class FitResult:
    family: str
    loc: float
    scale: float
    shapes: tuple[float, ...] = ()
    rss: float = float("nan")
    nll: float = float("nan")

    def frozen(self):
        return _SCIPY[self.family](*self.shapes, loc=self.loc, scale=self.scale)

    def pdf(self, x) -> np.ndarray:
        return self.frozen().pdf(np.asarray(x, dtype=np.float64))

    def row(self, statistic: str) -> tuple:
        s1 = self.shapes[0] if len(self.shapes) > 0 else ""
        s2 = self.shapes[1] if len(self.shapes) > 1 else ""
        return (statistic, self.family, self.loc, self.scale, s1, s2, self.rss)


_SCIPY = {
    "norm": stats.norm,
    "t": stats.t,
    "exp": stats.expon,
    "beta": stats.beta,
    "gamma": stats.gamma,
    "genextreme": stats.genextreme,
}


def histogram(samples, bins: int = DEFAULT_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width density histogram over ``[min, max]``."""
    x = _as_samples(samples)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if x.size < 2 or x.min() == x.max():
        raise ValueError("histogram needs at least two distinct samples")
    density, edges = np.histogram(x, bins=bins, range=(x.min(), x.max()), density=True)
    return edges, density


def rss(result: FitResult, edges: np.ndarray, density: np.ndarray) -> float:
    centres = 0.5 * (edges[:-1] + edges[1:])
    fitted = np.nan_to_num(result.pdf(centres), nan=0.0, posinf=0.0)
    return float(np.sum((fitted - density) ** 2))


def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    return x


def _nll(logpdf: Callable, x: np.ndarray) -> float:
    with np.errstate(all="ignore"):
        v = -np.sum(logpdf(x))
    return float(v) if np.isfinite(v) else _PENALTY


def _simplex(objective, start, maxiter: int, bounds=None):
    res = optimize.minimize(
        objective,
        np.asarray(start, dtype=np.float64),
        method="Nelder-Mead",
        bounds=bounds,
        options={"maxiter": maxiter, "maxfev": 2 * maxiter, "xatol": 1e-8, "fatol": 1e-10, "adaptive": True},
    )
    return res


# Each fitter maps samples -> (loc, scale, shapes, nll, converged, message).


def _fit_norm(x, maxiter):
    loc, scale = float(x.mean()), float(x.std())
    return loc, scale, (), _nll(stats.norm(loc, scale).logpdf, x), True, ""


def _fit_exp(x, maxiter):
    loc = float(x.min())
    scale = float(x.mean() - loc)
    return loc, scale, (), _nll(stats.expon(loc, scale).logpdf, x), True, ""


# Log-densities in standardised form; they match scipy.stats.<family>.logpdf
# but skip its argument checking, which dominates the simplex run time.


def _logpdf_t(x, df, loc, scale):
    z = (x - loc) / scale
    const = special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * math.log(df * math.pi) - math.log(scale)
    return const - (df + 1) / 2 * np.log1p(z * z / df)


def _logpdf_gamma(x, a, loc, scale):
    y = (x - loc) / scale
    if np.any(y <= 0):
        return np.array([-np.inf])
    return (a - 1) * np.log(y) - y - special.gammaln(a) - math.log(scale)


def _logpdf_beta(u, a, b):
    return (a - 1) * np.log(u) + (b - 1) * np.log1p(-u) - special.betaln(a, b)


def _logpdf_genextreme(x, c, loc, scale):
    z = (x - loc) / scale
    if abs(c) < 1e-12:
        return -z - np.exp(-z) - math.log(scale)
    t = 1 - c * z
    if np.any(t <= 0):
        return np.array([-np.inf])
    logt = np.log(t)
    return (1 / c - 1) * logt - np.exp(logt / c) - math.log(scale)


def _fit_t(x, maxiter):
    def unpack(p):
        return T_DOF_FLOOR + math.exp(p[0]), p[1], math.exp(p[2])

    def objective(p):
        df, loc, scale = unpack(p)
        return _nll(lambda v: _logpdf_t(v, df, loc, scale), x)

    iqr = np.subtract(*np.percentile(x, [75, 25]))
    start = (math.log(10.0 - T_DOF_FLOOR), float(np.median(x)), math.log(max(iqr / 1.349, x.std() * 0.5, 1e-12)))
    res = _simplex(objective, start, maxiter, bounds=[(None, _LOG_SHAPE_CAP), (None, None), (None, None)])
    df, loc, scale = unpack(res.x)
    return loc, scale, (df,), float(res.fun), bool(res.success), res.message


def _fit_gamma(x, maxiter):
    mean, sd = x.mean(), x.std()
    skew = float(stats.skew(x))
    a0 = min(max(4.0 / skew**2, 0.5), 200.0) if skew > 1e-3 else 200.0
    scale0 = sd / math.sqrt(a0)
    loc0 = min(mean - a0 * scale0, x.min() - 1e-3 * sd)

    def objective(p):
        return _nll(lambda v: _logpdf_gamma(v, math.exp(p[0]), p[1], math.exp(p[2])), x)

    bounds = [(None, _LOG_SHAPE_CAP), (None, None), (None, None)]
    res = _simplex(objective, (math.log(a0), loc0, math.log(scale0)), maxiter, bounds)
    return float(res.x[1]), math.exp(res.x[2]), (math.exp(res.x[0]),), float(res.fun), bool(res.success), res.message


def _fit_beta(x, maxiter):
    span = x.max() - x.min()
    loc = float(x.min() - BETA_MARGIN * span)
    scale = float(span * (1 + 2 * BETA_MARGIN))
    u = (x - loc) / scale
    m, v = u.mean(), u.var()
    common = max(m * (1 - m) / v - 1, 1e-2)
    start = (math.log(max(m * common, 1e-2)), math.log(max((1 - m) * common, 1e-2)))

    def objective(p):
        return _nll(lambda s: _logpdf_beta(s, math.exp(p[0]), math.exp(p[1])), u)

    res = _simplex(objective, start, maxiter, bounds=[(None, _LOG_SHAPE_CAP)] * 2)
    a, b = math.exp(res.x[0]), math.exp(res.x[1])
    nll = float(res.fun) + x.size * math.log(scale)
    return loc, scale, (a, b), nll, bool(res.success), res.message


def _fit_genextreme(x, maxiter):
    scale0 = x.std() * math.sqrt(6) / math.pi
    loc0 = x.mean() - 0.5772156649 * scale0
    start = (0.1, float(loc0), math.log(max(scale0, 1e-12)))

    def objective(p):
        return _nll(lambda v: _logpdf_genextreme(v, p[0], p[1], math.exp(p[2])), x)

    best = None
    # the likelihood surface is multimodal in c; try both tail types
    for c0 in (start[0], -0.1):
        res = _simplex(objective, (c0,) + start[1:], maxiter)
        if best is None or res.fun < best.fun:
            best = res
    return float(best.x[1]), math.exp(best.x[2]), (float(best.x[0]),), float(best.fun), bool(best.success), best.message


_FITTERS = {
    "norm": _fit_norm,
    "t": _fit_t,
    "exp": _fit_exp,
    "beta": _fit_beta,
    "gamma": _fit_gamma,
    "genextreme": _fit_genextreme,
}


def fit_family(samples, family: str, bins: int = DEFAULT_BINS, maxiter: int = 4000) -> FitResult:
    """Maximum-likelihood fit of one family, scored by histogram RSS."""
    if family not in _FITTERS:
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
    x = _as_samples(samples)
    if x.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    edges, density = histogram(x, bins)
    loc, scale, shapes, nll, ok, message = _FITTERS[family](x, maxiter)
    result = FitResult(family, float(loc), float(scale), tuple(float(s) for s in shapes), nll=nll)
    if not (np.isfinite(scale) and scale > 0 and np.isfinite(loc) and nll < _PENALTY):
        raise FitError(f"{family}: fit produced invalid parameters", result)
    result = FitResult(result.family, result.loc, result.scale, result.shapes, rss(result, edges, density), nll)
    if not ok:
        raise FitError(f"{family}: simplex did not converge ({message})", result)
    return result


def best_fit(
    samples,
    families: Sequence[str] = FAMILIES,
    bins: int = DEFAULT_BINS,
    return_all: bool = False,
):
    """Fit every family and return the minimal-RSS result (and all results if asked)."""
    x = _as_samples(samples)
    if x.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    results = []
    for family in families:
        try:
            results.append(fit_family(x, family, bins))
        except FitError as exc:
            warnings.warn(f"skipping family {family}: {exc}", stacklevel=2)
    if not results:
        raise FitError("every family failed to fit")
    winner = min(results, key=lambda r: r.rss)
    return (winner, results) if return_all else winner


def stat_samples(raw: np.ndarray, mask: np.ndarray, names: Sequence[str]) -> dict[str, np.ndarray]:
    """Observed values per statistic from a ``T x n x k`` tensor and ``T x n`` mask."""
    observed = np.asarray(raw)[np.asarray(mask, dtype=bool)]
    return {name: observed[:, k] for k, name in enumerate(names)}


def fit_report(
    samples_by_stat: dict[str, np.ndarray],
    bins: int = DEFAULT_BINS,
    all_families: bool = False,
) -> list[tuple]:
    """Report rows: the winner per statistic, or every family when ``all_families``."""
    rows = []
    for name, x in samples_by_stat.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            winner, results = best_fit(x, bins=bins, return_all=True)
        for r in results if all_families else [winner]:
            rows.append(r.row(name))
    return rows


def write_report_csv(path: str | os.PathLike, rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
