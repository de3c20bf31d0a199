"""One-dimensional CDFs, distribution regression and rank-based copula summaries.

Everything that is later composed, averaged or perturbed is represented as a
right-continuous step function over an ascending set of breakpoints:

* :class:`StepDistribution` for an unconditional CDF,
* subclasses of :class:`StepFamily` for a CDF ``F(y | y')`` whose breakpoints
  do not depend on the conditioning value ``y'``.

Quantiles always use the generalized inverse ``inf{y : F(y) >= q}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .exceptions import InsufficientDataError

logger = logging.getLogger(__name__)

LINKS = ("logit", "probit")
# standardized slope beyond which a binary fit is treated as diverging
_MAX_SLOPE = 40.0


def _as_float_vector(x, name="sample"):
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def step_lookup(breakpoints, values, y, side="right"):
    """Evaluate step functions stored as values at breakpoints.

    ``values[..., j]`` is the function value on ``[b_j, b_{j+1})``; below ``b_0``
    the function is 0.  ``side="left"`` returns left limits instead.
    """
    idx = np.searchsorted(breakpoints, np.asarray(y, dtype=float), side=side)
    padded = np.concatenate(
        [np.zeros(values.shape[:-1] + (1,)), values], axis=-1
    )
    return padded[..., idx]


@dataclass(frozen=True, eq=False)
class StepDistribution:
    """Right-continuous step CDF with generalized-inverse quantiles.

    Parameters
    ----------
    support : array_like
        Strictly ascending jump locations.
    cdf_values : array_like
        CDF value on ``[support[j], support[j+1])``; nondecreasing, ends at 1.
    """

    support: np.ndarray
    cdf_values: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float).ravel()
        values = np.asarray(self.cdf_values, dtype=float).ravel()
        if support.size == 0 or support.size != values.size:
            raise ValueError("support and cdf_values must be nonempty and of equal length")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly ascending")
        if np.any(np.diff(values) < 0) or values[0] < 0:
            raise ValueError("cdf_values must be nondecreasing and nonnegative")
        if abs(values[-1] - 1.0) > 1e-9:
            raise ValueError("cdf_values must end at 1")
        values = values.copy()
        values[-1] = 1.0
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "cdf_values", values)

    @property
    def breakpoints(self):
        return self.support

    def cdf(self, y):
        return step_lookup(self.support, self.cdf_values, y, side="right")

    __call__ = cdf

    def cdf_left(self, y):
        """Left limit ``F(y-)``."""
        return step_lookup(self.support, self.cdf_values, y, side="left")

    def quantile(self, q):
        """Generalized inverse; ``q <= 0`` maps to the lowest support point."""
        q = np.asarray(q, dtype=float)
        idx = np.searchsorted(self.cdf_values, q, side="left")
        return self.support[np.clip(idx, 0, self.support.size - 1)]

    def masses(self):
        return np.diff(self.cdf_values, prepend=0.0)

    def mean(self):
        return float(np.sum(self.support * self.masses()))

    def is_point_mass(self):
        return int(np.count_nonzero(self.masses() > 0)) <= 1


def ecdf_fit(sample) -> StepDistribution:
    """Empirical CDF ``F(y) = #{x_i <= y} / n``."""
    x = _as_float_vector(sample)
    support, counts = np.unique(x, return_counts=True)
    # exact division keeps equal fractions bit-identical across groups
    values = np.cumsum(counts) / x.size
    return StepDistribution(support, values)


def rearrange_monotone(values):
    """Sort values along the last axis and clip into [0, 1]."""
    return np.clip(np.sort(np.asarray(values, dtype=float), axis=-1), 0.0, 1.0)


class StepFamily:
    """A family ``y -> F(y | y')`` of step CDFs sharing one breakpoint grid.

    Subclasses provide ``breakpoints`` and ``at_breakpoints(cond)``, which
    returns an array of shape ``(len(cond), len(breakpoints))``.
    """

    breakpoints: np.ndarray

    def at_breakpoints(self, cond) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, y, cond):
        cond = np.atleast_1d(np.asarray(cond, dtype=float))
        return step_lookup(self.breakpoints, self.at_breakpoints(cond), np.atleast_1d(y))

    def cdf_left(self, y, cond):
        cond = np.atleast_1d(np.asarray(cond, dtype=float))
        return step_lookup(
            self.breakpoints, self.at_breakpoints(cond), np.atleast_1d(y), side="left"
        )

    def averaged(self, cond_values, weights=None) -> np.ndarray:
        """Mixture over conditioning values, on the breakpoint grid."""
        vals = self.at_breakpoints(cond_values)
        return np.average(vals, axis=0, weights=weights)


@dataclass
class DrFitReport:
    """What happened at each threshold of a distribution-regression fit."""

    n: int
    link: str
    n_thresholds: int
    fallbacks: list = field(default_factory=list)
    separated: list = field(default_factory=list)

    def as_record(self):
        return {
            "n": self.n,
            "link": self.link,
            "n_thresholds": self.n_thresholds,
            "n_fallback": len(self.fallbacks),
            "n_separated": len(self.separated),
            "fallbacks": list(self.fallbacks),
        }


class ConditionalCDF(StepFamily):
    """Distribution-regression estimate of ``F(y | y')``.

    At each threshold ``y_k`` the probability ``P(Y <= y_k | y')`` is one of:
    a fitted binary regression on ``(1, y')``; a constant (frequency fallback);
    or, under complete separation in ``y'``, the limiting step in ``y'``.
    Predictions are monotonically rearranged across thresholds.
    """

    def __init__(self, thresholds, intercept, slope, kind, constant, cut, step_low,
                 link, center, scale, report):
        self.thresholds = np.asarray(thresholds, dtype=float)
        self.intercept = np.asarray(intercept, dtype=float)
        self.slope = np.asarray(slope, dtype=float)
        self.kind = np.asarray(kind)
        self.constant = np.asarray(constant, dtype=float)
        self.cut = np.asarray(cut, dtype=float)
        self.step_low = np.asarray(step_low, dtype=bool)
        self.link = link
        self.center = float(center)
        self.scale = float(scale)
        self.report = report

    @property
    def breakpoints(self):
        return self.thresholds

    def raw_predict(self, cond):
        z = (np.atleast_1d(np.asarray(cond, dtype=float)) - self.center) / self.scale
        eta = self.intercept[None, :] + z[:, None] * self.slope[None, :]
        out = _link_mean(eta, self.link)
        const = self.kind == "constant"
        out[:, const] = self.constant[const]
        step = self.kind == "step"
        if np.any(step):
            zz = z[:, None]
            cut = self.cut[step][None, :]
            low = self.step_low[step][None, :]
            val = np.where(low, (zz < cut).astype(float), (zz > cut).astype(float))
            val = np.where(zz == cut, 0.5, val)
            out[:, step] = val
        return out

    def predict(self, cond):
        cond = np.atleast_1d(np.asarray(cond, dtype=float))
        # bootstrap pipelines evaluate the same conditioning vector repeatedly
        cached = self.__dict__.get("_last")
        if cached is not None and cached[0].shape == cond.shape and np.array_equal(cached[0], cond):
            return cached[1]
        out = rearrange_monotone(self.raw_predict(cond))
        out.flags.writeable = False
        self._last = (cond.copy(), out)
        return out

    at_breakpoints = predict


def _link_mean(eta, link):
    if link == "logit":
        return special.expit(eta)
    if link == "probit":
        return special.ndtr(eta)
    raise ValueError(f"unknown link {link!r}")


def _link_deriv(eta, mu, link):
    if link == "logit":
        return mu * (1.0 - mu)
    return np.exp(-0.5 * eta**2) / np.sqrt(2.0 * np.pi)


def _link_init(p, link):
    p = np.clip(p, 1e-4, 1 - 1e-4)
    if link == "logit":
        return special.logit(p)
    return special.ndtri(p)


def _fit_binary_many(Y, z, link, max_iter=100, tol=1e-7, start=None):
    """IRLS for many binary regressions on the same regressor ``(1, z)``.

    Returns intercepts, slopes and a convergence mask, one entry per row of Y.
    ``start`` optionally supplies initial (intercepts, slopes).
    """
    K = Y.shape[0]
    if start is None:
        a = _link_init(Y.mean(axis=1), link)
        b = np.zeros(K)
    else:
        a = np.array(start[0], dtype=float)
        b = np.array(start[1], dtype=float)
    active = np.ones(K, dtype=bool)
    converged = np.zeros(K, dtype=bool)
    z2 = z * z
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        eta = a[idx, None] + b[idx, None] * z[None, :]
        mu = np.clip(_link_mean(eta, link), 1e-12, 1 - 1e-12)
        if link == "logit":
            w = mu * (1.0 - mu)
            wr = Y[idx] - mu
        else:
            dmu = np.maximum(_link_deriv(eta, mu, link), 1e-300)
            w = dmu * dmu / (mu * (1.0 - mu))
            wr = w * (Y[idx] - mu) / dmu
        # Fisher scoring step: solve the 2x2 information system per row
        s0 = w.sum(axis=1)
        s1 = w @ z
        s2 = w @ z2
        g0 = wr.sum(axis=1)
        g1 = wr @ z
        det = s0 * s2 - s1 * s1
        with np.errstate(divide="ignore", invalid="ignore"):
            da = (s2 * g0 - s1 * g1) / det
            db = (s0 * g1 - s1 * g0) / det
        a_new = a[idx] + da
        b_new = b[idx] + db
        bad = ~np.isfinite(a_new) | ~np.isfinite(b_new) | (np.abs(b_new) > _MAX_SLOPE)
        step = np.maximum(np.abs(da), np.abs(db))
        a[idx] = np.where(bad, a[idx], a_new)
        b[idx] = np.where(bad, b[idx], b_new)
        done = ~bad & (step < tol)
        converged[idx[done]] = True
        active[idx[done | bad]] = False
    return a, b, converged


def response_thresholds(response, grid_size):
    """Empirical quantiles of the response at levels k/grid_size, k = 1..grid_size."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    levels = np.arange(1, grid_size + 1) / grid_size
    return np.unique(ecdf_fit(response).quantile(levels))


def dr_fit(response, conditioning, grid_size: int = 100, link: str = "logit",
           thresholds: Optional[Sequence[float]] = None, min_size: int = 20,
           start: Optional["ConditionalCDF"] = None) -> ConditionalCDF:
    """Distribution regression of ``response`` on ``(1, conditioning)``.

    Parameters
    ----------
    response, conditioning : array_like
        Paired samples of equal length.
    grid_size : int
        Number of equispaced probability levels defining the thresholds.
    link : {"logit", "probit"}
        Binary link.
    thresholds : array_like, optional
        Use these thresholds instead of response quantiles (bootstrap refits
        keep the point-estimate grid).
    min_size : int
        Minimum number of pairs.
    start : ConditionalCDF, optional
        A fit on the same thresholds whose coefficients seed the iterations
        (bootstrap refits converge in a few steps from the point estimate).
    """
    y = _as_float_vector(response, "response")
    x = _as_float_vector(conditioning, "conditioning")
    if y.size != x.size:
        raise ValueError("response and conditioning must have the same length")
    if y.size < max(min_size, 2):
        raise InsufficientDataError(
            f"distribution regression needs at least {max(min_size, 2)} pairs, got {y.size}",
            size=y.size,
        )
    if link not in LINKS:
        raise ValueError(f"unknown link {link!r}")
    if thresholds is None:
        thr = response_thresholds(y, grid_size)
    else:
        thr = np.unique(np.asarray(thresholds, dtype=float))

    center = float(np.mean(x))
    scale = float(np.std(x))
    if not scale > 0:
        scale = 1.0
    z = (x - center) / scale

    Y = (y[None, :] <= thr[:, None]).astype(float)
    K = thr.size
    freq = Y.mean(axis=1)
    kind = np.full(K, "fit", dtype=object)
    report = DrFitReport(n=y.size, link=link, n_thresholds=K)

    degenerate = (freq == 0.0) | (freq == 1.0) | (np.ptp(z) == 0)
    kind[degenerate] = "constant"

    ones = Y.astype(bool)
    zmax1 = np.where(ones, z, -np.inf).max(axis=1)
    zmin1 = np.where(ones, z, np.inf).min(axis=1)
    zmax0 = np.where(ones, -np.inf, z).max(axis=1)
    zmin0 = np.where(ones, np.inf, z).min(axis=1)
    sep_low = ~degenerate & (zmax1 < zmin0)
    sep_high = ~degenerate & (zmin1 > zmax0)
    cut = np.where(sep_low, 0.5 * (zmax1 + zmin0), np.where(sep_high, 0.5 * (zmin1 + zmax0), 0.0))
    kind[sep_low | sep_high] = "step"

    intercept = np.zeros(K)
    slope = np.zeros(K)
    todo = np.flatnonzero(kind == "fit")
    if todo.size:
        init = None
        if start is not None and np.array_equal(start.thresholds, thr):
            # rescale the seed's coefficients to this sample's standardization
            slope0 = start.slope[todo] * scale / start.scale
            icpt0 = start.intercept[todo] + start.slope[todo] * (center - start.center) / start.scale
            init = (np.where(start.kind[todo] == "fit", icpt0, _link_init(freq[todo], link)),
                    np.where(start.kind[todo] == "fit", slope0, 0.0))
        a, b, ok = _fit_binary_many(Y[todo], z, link, start=init)
        if init is not None and not ok.all():
            retry = ~ok
            a[retry], b[retry], ok[retry] = _fit_binary_many(Y[todo[retry]], z, link)
        intercept[todo] = a
        slope[todo] = b
        failed = todo[~ok]
        kind[failed] = "constant"
        for k in failed:
            report.fallbacks.append({"threshold": float(thr[k]), "reason": "non-convergence"})
    for k in np.flatnonzero(sep_low | sep_high):
        report.separated.append(float(thr[k]))
    if report.fallbacks:
        logger.info("distribution regression fallbacks: %s", report.as_record())

    return ConditionalCDF(
        thresholds=thr, intercept=intercept, slope=slope, kind=kind.astype(str),
        constant=freq, cut=cut, step_low=sep_low, link=link, center=center,
        scale=scale, report=report,
    )


def kendall_tau(x, y) -> float:
    """Kendall's tau-b (tie-adjusted)."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("x and y must have equal length")
    if x.size < 2:
        raise ValueError("kendall_tau needs at least 2 pairs")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("kendall_tau is undefined for an all-tied vector")
    return float(stats.kendalltau(x, y, variant="b").statistic)


@dataclass(frozen=True, eq=False)
class PseudoSample:
    """Normalized ranks ``(u_i, v_i)`` of a bivariate sample."""

    u: np.ndarray
    v: np.ndarray

    def __len__(self):
        return self.u.size


def pseudo_obs(x, y) -> PseudoSample:
    """Average ranks scaled by ``1 / (n + 1)``."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("x and y must have equal length")
    if x.size < 2:
        raise ValueError("pseudo_obs needs at least 2 pairs")
    n = x.size
    return PseudoSample(stats.rankdata(x) / (n + 1), stats.rankdata(y) / (n + 1))


def empirical_copula(ps: PseudoSample, u, v):
    """``C_n(u, v) = mean 1{U_i <= u, V_i <= v}`` at paired points ``(u, v)``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    ind = (ps.u[:, None] <= u[None, :]) & (ps.v[:, None] <= v[None, :])
    return ind.mean(axis=0)
