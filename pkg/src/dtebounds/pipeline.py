"""First-step estimation and the bound pipeline for one target group.

``groups`` arguments map three-period patterns to outcome matrices with
columns ``(t-2, t-1, t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from .bounds import BoundCurve, dote_bounds, wd_baseline, conditional_dote, finalize_curve
from .counterfactual import CounterfactualConditional, GceSpec, cic_marginal
from .distributions import ConditionalCDF, StepDistribution, dr_fit, ecdf_fit
from .exceptions import ConfigError, InsufficientDataError
from .panel import DEFAULT_MIN_SIZE, as_pattern, flip_last, pattern_label


@dataclass(frozen=True)
class EstimatorConfig:
    grid_size: int = 100
    link: str = "logit"
    min_size: int = DEFAULT_MIN_SIZE

    def __post_init__(self):
        if self.grid_size < 2:
            raise ConfigError("grid_size must be at least 2")
        if self.link not in ("logit", "probit"):
            raise ConfigError(f"unknown link {self.link!r}")


@dataclass(frozen=True, eq=False)
class FirstSteps:
    """Every estimated object the bounds depend on.

    ``F_target_prev`` doubles as the distribution of the conditioning variable
    (the target's ``Y_{t-1}``) and its masses are the averaging weights.
    ``spec`` is None for the no-assumption baseline.
    """

    target: tuple
    n_target: int
    F_target_prev: StepDistribution
    F_control_prev: StepDistribution
    F_control_last: StepDistribution
    F_obs_last: StepDistribution
    spec: Optional[GceSpec] = None
    obs_cond: Optional[object] = None
    rec_cond: Optional[object] = None
    F_rec_resp: Optional[StepDistribution] = None
    F_rec_cond: Optional[StepDistribution] = None
    reports: dict = field(default_factory=dict)

    @property
    def treated_last(self):
        return self.target[2] == 1

    @property
    def F_cf_last(self) -> StepDistribution:
        """Counterfactual marginal at ``t`` from change-in-changes."""
        return cic_marginal(self.F_target_prev, self.F_control_prev, self.F_control_last)

    def cf_cond(self, F_cf_last=None) -> CounterfactualConditional:
        return CounterfactualConditional(
            F_cf_last if F_cf_last is not None else self.F_cf_last,
            self.F_target_prev, self.rec_cond, self.F_rec_resp, self.F_rec_cond,
        )

    def arms(self):
        """Conditional families ordered as (treated, untreated)."""
        cf = self.cf_cond()
        return (self.obs_cond, cf) if self.treated_last else (cf, self.obs_cond)

    def marginal_arms(self):
        cf = self.F_cf_last
        return (self.F_obs_last, cf) if self.treated_last else (cf, self.F_obs_last)

    @property
    def cond_support(self):
        return self.F_target_prev.support

    @property
    def cond_weights(self):
        return self.F_target_prev.masses()

    def thresholds(self):
        if self.spec is None:
            return {}
        return {"obs": self.obs_cond.breakpoints, "rec": self.rec_cond.breakpoints}


def _require(groups, pattern, min_size):
    pattern = as_pattern(pattern)
    mat = groups.get(pattern)
    size = 0 if mat is None else len(mat)
    if size < min_size:
        raise InsufficientDataError(
            f"group {pattern_label(pattern)} has {size} units, fewer than {min_size}",
            pattern=pattern, size=size,
        )
    return np.asarray(mat, dtype=float)


def fit_first_steps(groups: Mapping, target, spec: Optional[GceSpec] = None,
                    config: EstimatorConfig = EstimatorConfig(),
                    thresholds: Optional[Mapping] = None,
                    start: Optional[FirstSteps] = None) -> FirstSteps:
    """Fit the marginals, the CiC inputs and (with a spec) both conditional CDFs.

    ``thresholds`` fixes the distribution-regression grids (keys ``obs`` and
    ``rec``), which bootstrap refits use to stay on the point-estimate grid;
    ``start`` seeds the regressions with an earlier fit's coefficients.
    """
    target = as_pattern(target)
    if spec is not None and spec.target != target:
        raise ConfigError("spec target does not match the requested target")
    thresholds = thresholds or {}
    T = _require(groups, target, config.min_size)
    C = _require(groups, flip_last(target), config.min_size)
    first = FirstSteps(
        target=target,
        n_target=len(T),
        F_target_prev=ecdf_fit(T[:, 1]),
        F_control_prev=ecdf_fit(C[:, 1]),
        F_control_last=ecdf_fit(C[:, 2]),
        F_obs_last=ecdf_fit(T[:, 2]),
    )
    if spec is None:
        return first
    R = _require(groups, spec.recovery, config.min_size)
    c, r = spec.pair_columns
    obs = dr_fit(T[:, 2], T[:, 1], config.grid_size, config.link,
                 thresholds=thresholds.get("obs"), min_size=config.min_size,
                 start=None if start is None else start.obs_cond)
    rec = dr_fit(R[:, r], R[:, c], config.grid_size, config.link,
                 thresholds=thresholds.get("rec"), min_size=config.min_size,
                 start=None if start is None else start.rec_cond)
    return replace(
        first, spec=spec, obs_cond=obs, rec_cond=rec,
        F_rec_resp=ecdf_fit(R[:, r]), F_rec_cond=ecdf_fit(R[:, c]),
        reports={"obs": obs.report.as_record(), "rec": rec.report.as_record()},
    )


def _meta(first: FirstSteps, method):
    meta = {"method": method, "target": pattern_label(first.target), "n_target": first.n_target}
    if first.spec is not None and method != "wd_baseline":
        meta.update(first.spec.as_dict())
    return meta


def proposed_curve(first: FirstSteps, delta_grid) -> BoundCurve:
    """DoTE bounds under the copula-equality model of ``first.spec``."""
    if first.spec is None:
        raise ConfigError("proposed bounds need a GceSpec")
    F1, F0 = first.arms()
    return dote_bounds(F1, F0, first.cond_support, delta_grid, weights=first.cond_weights,
                       meta=_meta(first, f"model{first.spec.model}"))


def baseline_curve(first: FirstSteps, delta_grid) -> BoundCurve:
    F1, F0 = first.marginal_arms()
    return wd_baseline(F1, F0, delta_grid, meta=_meta(first, "wd_baseline"))


def conditional_curves(first: FirstSteps, cond_values, delta_grid):
    """Conditional DoTE bounds at chosen values of ``Y_{t-1}``, one curve each."""
    F1, F0 = first.arms()
    lo, up = conditional_dote(F1, F0, cond_values, delta_grid)
    curves = []
    for i, v in enumerate(np.atleast_1d(cond_values)):
        meta = _meta(first, f"model{first.spec.model}")
        meta["conditioning_value"] = float(v)
        curves.append(finalize_curve(delta_grid, lo[i], up[i], meta))
    return curves
