"""Fréchet-Hoeffding and Williamson-Downs bounds, averaging and quantile inversion.

For step CDFs the sup/inf in the Williamson-Downs formulas is computed exactly:
the difference of two step functions only changes at the union of their jump
points, so evaluating at ``B1 ∪ (B0 + δ)`` suffices.  The lower bound uses the
left limit ``F0(y - δ -)``, which makes it sharp for discrete marginals:

    lower(δ) = sup_y max(F1(y) - F0((y - δ)-), 0)
    upper(δ) = 1 + inf_y min(F1(y) - F0(y - δ), 0)

For continuous CDFs both limits agree and a dense y-grid is used instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd

from .distributions import StepDistribution, StepFamily, rearrange_monotone
from .exceptions import InsufficientDataError

REARRANGE_FLAG_TOL = 1e-3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            return None
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass(eq=False)
class BoundCurve:
    """Lower and upper bounds on ``P(Y1 - Y0 <= δ)`` over a δ-grid."""

    delta: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if not (self.delta.shape == self.lower.shape == self.upper.shape):
            raise ValueError("delta, lower and upper must have equal shapes")
        if np.any(np.diff(self.delta) <= 0):
            raise ValueError("delta grid must be strictly ascending")

    def check(self, tol=1e-12):
        """Return a list of violated invariants (empty when valid)."""
        problems = []
        if np.any(self.lower < -tol) or np.any(self.upper > 1 + tol):
            problems.append("values outside [0, 1]")
        if np.any(self.lower > self.upper + tol):
            problems.append("lower above upper")
        if np.any(np.diff(self.lower) < -tol) or np.any(np.diff(self.upper) < -tol):
            problems.append("not nondecreasing in delta")
        return problems

    def width(self):
        return self.upper - self.lower

    def at(self, delta):
        """Bounds at given δ by right-continuous lookup on the grid."""
        idx = np.searchsorted(self.delta, np.atleast_1d(delta), side="right") - 1
        idx = np.clip(idx, 0, self.delta.size - 1)
        return self.lower[idx], self.upper[idx]

    def to_frame(self):
        return pd.DataFrame({"delta": self.delta, "lower": self.lower, "upper": self.upper})

    def to_json(self):
        return json.dumps(_jsonable({"meta": self.meta, "delta": self.delta,
                                     "lower": self.lower, "upper": self.upper}), indent=2)


@dataclass(eq=False)
class QuantileBounds:
    """Bounds on the quantile of the treatment effect over a τ-grid.

    ``lower_flag``/``upper_flag`` are +1 or -1 where the inversion left the
    δ-grid (value is then ``±inf``), 0 otherwise.
    """

    tau: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    lower_flag: np.ndarray
    upper_flag: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_frame(self):
        return pd.DataFrame({"tau": self.tau, "lower": self.lower, "upper": self.upper,
                             "lower_flag": self.lower_flag, "upper_flag": self.upper_flag})

    def to_json(self):
        return json.dumps(_jsonable({"meta": self.meta, "tau": self.tau, "lower": self.lower,
                                     "upper": self.upper}), indent=2)


@dataclass(eq=False)
class JointBoundSurface:
    """Bounds on the joint CDF of ``(Y1, Y0)``; rows index y1, columns y0."""

    y1_grid: np.ndarray
    y0_grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def fh_conditional(F1, F0):
    """Fréchet-Hoeffding bounds ``(max(F1 + F0 - 1, 0), min(F1, F0))``."""
    F1 = np.asarray(F1, dtype=float)
    F0 = np.asarray(F0, dtype=float)
    return np.maximum(F1 + F0 - 1.0, 0.0), np.minimum(F1, F0)


def _unique_weights(cond_values, weights=None):
    cond = np.asarray(cond_values, dtype=float).ravel()
    if cond.size == 0:
        raise InsufficientDataError("no conditioning values to average over", size=0)
    w = np.ones(cond.size) if weights is None else np.asarray(weights, dtype=float).ravel()
    uniq, inv = np.unique(cond, return_inverse=True)
    return uniq, np.bincount(inv, weights=w) / w.sum()


def joint_bounds(F1_cond: StepFamily, F0_cond: StepFamily, cond_values, y1_grid, y0_grid,
                 weights=None) -> JointBoundSurface:
    """Average the conditional Fréchet-Hoeffding bounds over ``cond_values``."""
    cond, w = _unique_weights(cond_values, weights)
    y1_grid = np.asarray(y1_grid, dtype=float)
    y0_grid = np.asarray(y0_grid, dtype=float)
    F1 = F1_cond(y1_grid, cond)  # m x n1
    F0 = F0_cond(y0_grid, cond)  # m x n0
    lower = np.empty((y1_grid.size, y0_grid.size))
    upper = np.empty_like(lower)
    for i in range(y1_grid.size):
        lo, hi = fh_conditional(F1[:, i:i + 1], F0)
        lower[i] = w @ lo
        upper[i] = w @ hi
    return JointBoundSurface(y1_grid, y0_grid, lower, upper)


def _pad(values):
    values = np.atleast_2d(values)
    return np.concatenate([np.zeros((values.shape[0], 1)), values], axis=1)


def _snap(shifted, ref, rel_tol=1e-12):
    """Move shifted breakpoints onto reference breakpoints they equal up to rounding.

    ``y0 + δ`` rarely reproduces ``y1`` bit for bit even when the tie is exact
    in decimal (0.1-unit outcomes on a 0.1-step δ grid), and a tie decides
    whether an atom counts on both sides.
    """
    if ref.size == 0 or shifted.size == 0:
        return shifted
    tol = rel_tol * max(1.0, float(np.abs(ref).max()), float(np.abs(shifted).max()))
    idx = np.clip(np.searchsorted(ref, shifted), 1, ref.size - 1) if ref.size > 1 else None
    if idx is None:
        near = np.zeros(shifted.size, dtype=int)
    else:
        near = np.where(np.abs(ref[idx - 1] - shifted) <= np.abs(ref[idx] - shifted), idx - 1, idx)
    close = np.abs(ref[near] - shifted) <= tol
    if not close.any():
        return shifted
    return np.maximum.accumulate(np.where(close, ref[near], shifted))


def wd_step_matrix(B1, V1, B0, V0, deltas):
    """Exact conditional WD bounds for step CDFs.

    ``V1`` (m x |B1|) and ``V0`` (m x |B0|) hold the CDF values of m pairs of
    step functions at their breakpoints.  Returns lower and upper arrays of
    shape (m, len(deltas)).
    """
    B1 = np.asarray(B1, dtype=float)
    B0 = np.asarray(B0, dtype=float)
    V1p = _pad(V1)
    V0p = _pad(V0)
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    m = V1p.shape[0]
    lower = np.empty((m, deltas.size))
    upper = np.empty((m, deltas.size))
    for k, d in enumerate(deltas):
        B0d = _snap(B0 + d, B1)
        cand = np.union1d(B1, B0d)
        F1 = V1p[:, np.searchsorted(B1, cand, side="right")]
        F0_right = V0p[:, np.searchsorted(B0d, cand, side="right")]
        F0_left = V0p[:, np.searchsorted(B0d, cand, side="left")]
        lower[:, k] = np.maximum((F1 - F0_left).max(axis=1), 0.0)
        upper[:, k] = 1.0 + np.minimum((F1 - F0_right).min(axis=1), 0.0)
    return lower, upper


def wd_grid(F1_at: Callable, F0_at: Callable, delta, y_grid, F0_left_at: Optional[Callable] = None):
    """WD bounds by maximizing/minimizing over a y-grid (continuous CDFs)."""
    y = np.asarray(y_grid, dtype=float)
    if y.size < 2:
        raise ValueError("y_grid needs at least 2 points")
    F0_left_at = F0_left_at or F0_at
    F1 = np.asarray(F1_at(y), dtype=float)
    low = max(float(np.max(F1 - np.asarray(F0_left_at(y - delta)))), 0.0)
    up = 1.0 + min(float(np.min(F1 - np.asarray(F0_at(y - delta)))), 0.0)
    return low, up


def wd_conditional(F1_cond_at, F0_cond_at, delta, y_grid=None):
    """Williamson-Downs bounds on ``P(Y1 - Y0 <= δ)`` for one pair of CDFs.

    Step distributions are handled exactly (``y_grid`` is then optional);
    plain callables are optimized over ``y_grid``.
    """
    if isinstance(F1_cond_at, StepDistribution) and isinstance(F0_cond_at, StepDistribution):
        lo, up = wd_step_matrix(F1_cond_at.support, F1_cond_at.cdf_values,
                                F0_cond_at.support, F0_cond_at.cdf_values, [delta])
        return float(lo[0, 0]), float(up[0, 0])
    if y_grid is None:
        raise ValueError("y_grid is required for non-step CDFs")
    left = getattr(F0_cond_at, "cdf_left", None)
    return wd_grid(F1_cond_at, F0_cond_at, delta, y_grid, left)


def finalize_curve(delta, lower, upper, meta=None) -> BoundCurve:
    """Monotone-rearrange averaged curves across δ and record the correction."""
    lo = rearrange_monotone(lower)
    up = rearrange_monotone(upper)
    shift = float(max(np.max(np.abs(lo - lower)), np.max(np.abs(up - upper))))
    up = np.maximum(up, lo)
    meta = dict(meta or {})
    meta["rearrangement_shift"] = shift
    meta["rearrangement_flag"] = shift > REARRANGE_FLAG_TOL
    return BoundCurve(delta, lo, up, meta)


def conditional_dote(F1_cond: StepFamily, F0_cond: StepFamily, cond_values, delta_grid):
    """Per-conditioning-value WD curves, arrays of shape (len(cond_values), len(delta_grid))."""
    cond = np.atleast_1d(np.asarray(cond_values, dtype=float))
    return wd_step_matrix(F1_cond.breakpoints, F1_cond.at_breakpoints(cond),
                          F0_cond.breakpoints, F0_cond.at_breakpoints(cond), delta_grid)


def dote_bounds(F1_cond: StepFamily, F0_cond: StepFamily, cond_values, delta_grid,
                weights=None, meta=None) -> BoundCurve:
    """Average the conditional WD bounds over the target group's ``Y_{t-1}``.

    Repeated conditioning values are merged with summed weights, which leaves
    the equal-weight average unchanged.
    """
    cond, w = _unique_weights(cond_values, weights)
    lo, up = conditional_dote(F1_cond, F0_cond, cond, delta_grid)
    return finalize_curve(delta_grid, w @ lo, w @ up, meta)


def wd_baseline(F1: StepDistribution, F0: StepDistribution, delta_grid, meta=None) -> BoundCurve:
    """WD bounds from the unconditional marginals (no dependence restriction)."""
    lo, up = wd_step_matrix(F1.support, F1.cdf_values, F0.support, F0.cdf_values, delta_grid)
    return finalize_curve(delta_grid, lo[0], up[0], meta)


def default_delta_grid(y1_values, y0_values, n_points=201):
    """Equispaced grid over ``[min Y1 - max Y0, max Y1 - min Y0]``."""
    y1 = np.asarray(y1_values, dtype=float)
    y0 = np.asarray(y0_values, dtype=float)
    lo = float(np.min(y1) - np.max(y0))
    hi = float(np.max(y1) - np.min(y0))
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n_points)


def invert_curve(delta, curve, tau):
    """``inf{δ on grid : curve(δ) >= τ}`` with ±inf sentinels off the grid."""
    tau = np.asarray(tau, dtype=float)
    idx = np.searchsorted(curve, tau, side="left")
    out = delta[np.clip(idx, 0, delta.size - 1)].astype(float)
    flag = np.zeros(tau.shape, dtype=int)
    above = idx >= delta.size
    below = (idx == 0) & (tau < curve[0])
    out[above] = np.inf
    flag[above] = 1
    out[below] = -np.inf
    flag[below] = -1
    return out, flag


def qote_bounds(curve: BoundCurve, tau_grid) -> QuantileBounds:
    """Invert DoTE bounds: the upper DoTE bound gives the lower QoTE bound and vice versa."""
    tau = np.asarray(tau_grid, dtype=float)
    if np.any((tau <= 0) | (tau >= 1)):
        raise ValueError("tau values must lie in (0, 1)")
    lo, lo_flag = invert_curve(curve.delta, curve.upper, tau)
    up, up_flag = invert_curve(curve.delta, curve.lower, tau)
    return QuantileBounds(tau, lo, up, lo_flag, up_flag, meta=dict(curve.meta))
