"""Simulation designs, closed-form Gaussian bounds, Monte Carlo harness and oracles.

Latent outcome vectors are ordered
``(Y1_t, Y0_t, Y1_{t-1}, Y0_{t-1}, Y1_{t-2}, Y0_{t-2})``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import special
from scipy.optimize import linprog

from .bounds import BoundCurve, wd_step_matrix
from .counterfactual import default_recovery, resolve_gce
from .exceptions import ConfigError, DteBoundsError
from .gcetest import copula_equality_test
from .inference import InferenceConfig, bootstrap_first_steps, numerical_delta
from .panel import PanelDataset, all_patterns, as_pattern, flip_last, pattern_label
from .pipeline import EstimatorConfig, fit_first_steps, proposed_curve

logger = logging.getLogger(__name__)

PATTERN_ORDER = all_patterns(3)  # (1,1,1), (1,1,0), ..., (0,0,0)
SLOT = {("1", 0): 0, ("0", 0): 1, ("1", 1): 2, ("0", 1): 3, ("1", 2): 4, ("0", 2): 5}


def slot(arm, lag):
    """Latent index of arm ``arm`` at period ``t - lag``."""
    return SLOT[(str(int(arm)), lag)]


def observed_slots(pattern):
    """Latent indices observed by a pattern, ordered ``(t-2, t-1, t)``."""
    d2, d1, d0 = pattern
    return [slot(d2, 2), slot(d1, 1), slot(d0, 0)]


def lag_stationary_sigma(rho_star, rho_treated=0.5):
    """Correlation matrix of the latent time effects.

    ``θ1_s`` is a unit-variance AR(1) with coefficient ``rho_treated`` and
    ``θ0_s = ρ* θ1_{s-1} + sqrt(1 - ρ*²) e_s`` with independent noise, so the
    matrix is positive semi-definite by construction and
    ``corr(θ0_t, θ1_{t-1}) = corr(θ0_{t-1}, θ1_{t-2}) = ρ*``.
    """
    r, phi = float(rho_star), float(rho_treated)
    if not (-1 < r < 1 and -1 < phi < 1):
        raise ConfigError("correlations must lie in (-1, 1)")
    lags = {0: 0, 1: 0, 2: 1, 3: 1, 4: 2, 5: 2}
    arms = {0: 1, 1: 0, 2: 1, 3: 0, 4: 1, 5: 0}
    sigma = np.eye(6)
    for i in range(6):
        for j in range(6):
            if i == j:
                continue
            si, sj = -lags[i], -lags[j]
            if arms[i] == 1 and arms[j] == 1:
                sigma[i, j] = phi ** abs(si - sj)
            elif arms[i] == 0 and arms[j] == 0:
                sigma[i, j] = r * r * phi ** abs(si - sj)
            else:
                s0, s1 = (si, sj) if arms[i] == 0 else (sj, si)
                sigma[i, j] = r * phi ** abs(s0 - 1 - s1)
    return sigma


def _check_corr(mat, name, size):
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (size, size):
        raise ConfigError(f"{name} must be {size}x{size}")
    if not np.allclose(mat, mat.T, atol=1e-12) or not np.allclose(np.diag(mat), 1.0):
        raise ConfigError(f"{name} must be symmetric with unit diagonal")
    if np.linalg.eigvalsh(mat).min() < -1e-10:
        raise ConfigError(f"{name} is not positive semi-definite")
    return mat


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """Kronecker-normal design: group g draws ``N(mu_eta[g] * mu_theta, Sigma_theta)``.

    Group effects index :data:`PATTERN_ORDER`.  With a unit-diagonal
    ``sigma_eta`` each group's block covariance is ``sigma_theta``, so every
    group shares the time copula.
    """

    group_sizes: Mapping
    rho_star: float = 0.6
    mu_eta: Optional[Sequence] = None
    mu_theta: Optional[Sequence] = None
    sigma_eta: Optional[np.ndarray] = None
    sigma_theta: Optional[np.ndarray] = None
    rho_treated: float = 0.5
    seed: int = 0

    def __post_init__(self):
        sizes = {as_pattern(p): int(n) for p, n in dict(self.group_sizes).items()}
        if any(n < 0 for n in sizes.values()):
            raise ConfigError("group sizes must be nonnegative")
        object.__setattr__(self, "group_sizes", sizes)
        mu_eta = np.ones(8) if self.mu_eta is None else np.asarray(self.mu_eta, dtype=float)
        mu_theta = (np.array([1.0, 0, 0, 0, 0, 0]) if self.mu_theta is None
                    else np.asarray(self.mu_theta, dtype=float))
        if mu_eta.shape != (8,) or mu_theta.shape != (6,):
            raise ConfigError("mu_eta must have 8 entries and mu_theta 6")
        sigma_eta = _check_corr(np.eye(8) if self.sigma_eta is None else self.sigma_eta, "sigma_eta", 8)
        sigma_theta = (lag_stationary_sigma(self.rho_star, self.rho_treated)
                       if self.sigma_theta is None else self.sigma_theta)
        sigma_theta = _check_corr(sigma_theta, "sigma_theta", 6)
        if abs(sigma_theta[1, 2] - self.rho_star) > 1e-12:
            raise ConfigError("rho_star must equal the (theta0_t, theta1_{t-1}) entry of sigma_theta")
        object.__setattr__(self, "mu_eta", mu_eta)
        object.__setattr__(self, "mu_theta", mu_theta)
        object.__setattr__(self, "sigma_eta", sigma_eta)
        object.__setattr__(self, "sigma_theta", sigma_theta)

    @property
    def lag_stationary(self):
        return abs(self.sigma_theta[3, 4] - self.rho_star) < 1e-12

    def stacked_mean(self):
        return np.kron(self.mu_eta, self.mu_theta)

    def stacked_cov(self):
        return np.kron(self.sigma_eta, self.sigma_theta)

    def group_mean(self, pattern):
        return self.mu_eta[PATTERN_ORDER.index(as_pattern(pattern))] * self.mu_theta

    def group_cov(self, pattern):
        g = PATTERN_ORDER.index(as_pattern(pattern))
        return self.sigma_eta[g, g] * self.sigma_theta

    def with_seed(self, seed):
        return DgpSpec(self.group_sizes, self.rho_star, self.mu_eta, self.mu_theta,
                       self.sigma_eta, self.sigma_theta, self.rho_treated, seed)

    def as_dict(self):
        return {
            "group_sizes": {pattern_label(p): n for p, n in self.group_sizes.items()},
            "rho_star": self.rho_star, "rho_treated": self.rho_treated,
            "mu_eta": self.mu_eta.tolist(), "mu_theta": self.mu_theta.tolist(),
            "sigma_theta": self.sigma_theta.tolist(), "seed": self.seed,
            "kronecker_reading": "each unit realizes only its own group's 6-dim block",
        }


def design_group_sizes(target, n):
    """Target, change-in-changes control and both recovery groups, ``n`` units each."""
    target = as_pattern(target)
    pats = {target, flip_last(target), default_recovery(1, target), default_recovery(2, target)}
    return {p: n for p in pats}


@dataclass(frozen=True, eq=False)
class SimulatedPanel:
    """Observed outcome matrices (columns t-2, t-1, t) with the latent vectors."""

    groups: dict
    latents: dict
    spec: DgpSpec

    def to_panel(self, first_period=1) -> PanelDataset:
        frames = []
        uid = 0
        for p in sorted(self.groups, reverse=True):
            mat = self.groups[p]
            n = len(mat)
            units = np.repeat(np.arange(uid, uid + n), 3)
            uid += n
            frames.append(pd.DataFrame({
                "unit": units,
                "period": np.tile(np.arange(first_period, first_period + 3), n),
                "treatment": np.tile(np.asarray(p), n),
                "outcome": mat.ravel(),
            }))
        return PanelDataset.from_frame(pd.concat(frames, ignore_index=True))


def sample_dgp(spec: DgpSpec, rng=None) -> SimulatedPanel:
    """Draw each group's latent block and keep the outcomes its pattern reveals."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    chol = np.linalg.cholesky(spec.sigma_theta + 1e-13 * np.eye(6))
    groups, latents = {}, {}
    for p in sorted(spec.group_sizes, reverse=True):
        n = spec.group_sizes[p]
        z = rng.standard_normal((n, 6)) @ chol.T
        g = PATTERN_ORDER.index(p)
        lat = spec.group_mean(p) + np.sqrt(spec.sigma_eta[g, g]) * z
        latents[p] = lat
        groups[p] = lat[:, observed_slots(p)]
    return SimulatedPanel(groups, latents, spec)


# ---------------------------------------------------------------- closed form

def gauss_hermite_normal(n_nodes):
    """Nodes and weights for expectations under N(0, 1)."""
    x, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    return x, w / w.sum()


def default_y_grid(lo=-10.0, hi=10.0, n=4001):
    return np.linspace(lo, hi, n)


def mixture_wd_bounds(a1, b1, s1, a0, b0, s0, delta_grid, n_nodes=64, y_grid=None,
                      cond_mean=0.0, cond_sd=1.0):
    """WD bounds averaged over ``v ~ N(cond_mean, cond_sd²)``.

    Conditional CDFs are ``F_j(y | v) = Φ((y - a_j - b_j z) / s_j)`` with
    ``z = (v - cond_mean) / cond_sd``; the sup/inf run over ``y_grid``.
    """
    y = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    z, w = gauss_hermite_normal(n_nodes)
    F1 = special.ndtr((y[None, :] - a1 - b1 * z[:, None]) / s1)
    lower = np.empty(len(delta_grid))
    upper = np.empty(len(delta_grid))
    for k, d in enumerate(delta_grid):
        diff = F1 - special.ndtr((y[None, :] - d - a0 - b0 * z[:, None]) / s0)
        lower[k] = w @ np.maximum(diff.max(axis=1), 0.0)
        upper[k] = w @ (1.0 + np.minimum(diff.min(axis=1), 0.0))
    return lower, upper


def normal_wd_baseline(m1, sd1, m0, sd0, delta_grid, y_grid=None):
    y = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    F1 = special.ndtr((y - m1) / sd1)
    lower = np.empty(len(delta_grid))
    upper = np.empty(len(delta_grid))
    for k, d in enumerate(delta_grid):
        diff = F1 - special.ndtr((y - d - m0) / sd0)
        lower[k] = max(diff.max(), 0.0)
        upper[k] = 1.0 + min(diff.min(), 0.0)
    return lower, upper


@dataclass(frozen=True)
class IllustrationSpec:
    rho1: float = 0.0
    rho0: float = 0.0
    n_nodes: int = 64
    delta_grid: tuple = tuple(np.round(np.linspace(-4, 4, 161), 10))

    def __post_init__(self):
        if not (abs(self.rho1) < 1 and abs(self.rho0) < 1):
            raise ConfigError("|rho| must be below 1")
        if self.n_nodes < 2:
            raise ConfigError("n_nodes must be at least 2")


def closed_form_bounds(spec: IllustrationSpec, y_grid=None, check_nodes=True):
    """Proposed and baseline DoTE bounds for standard-normal Gaussian-copula margins.

    Returns ``(proposed, baseline)``.  With ``check_nodes`` the quadrature is
    repeated with twice the nodes and the maximal change is stored in the
    proposed curve's metadata.
    """
    delta = np.asarray(spec.delta_grid, dtype=float)
    s1 = np.sqrt(1 - spec.rho1**2)
    s0 = np.sqrt(1 - spec.rho0**2)
    lo, up = mixture_wd_bounds(0.0, spec.rho1, s1, 0.0, spec.rho0, s0, delta, spec.n_nodes, y_grid)
    meta = {"method": "proposed", "rho1": spec.rho1, "rho0": spec.rho0, "n_nodes": spec.n_nodes}
    if check_nodes:
        lo2, up2 = mixture_wd_bounds(0.0, spec.rho1, s1, 0.0, spec.rho0, s0, delta,
                                     2 * spec.n_nodes, y_grid)
        meta["node_doubling_change"] = float(max(np.abs(lo2 - lo).max(), np.abs(up2 - up).max()))
    blo, bup = normal_wd_baseline(0.0, 1.0, 0.0, 1.0, delta, y_grid)
    baseline = BoundCurve(delta, blo, bup, {"method": "wd_baseline", "rho1": spec.rho1,
                                             "rho0": spec.rho0})
    return BoundCurve(delta, lo, up, meta), baseline


def theoretical_curve(spec: DgpSpec, target, delta_grid, n_nodes=64, y_grid=None) -> BoundCurve:
    """Population DoTE bounds of the target group implied by the Gaussian design."""
    target = as_pattern(target)
    mean = spec.group_mean(target)
    cov = spec.group_cov(target)
    c = slot(target[1], 1)
    sd_c = np.sqrt(cov[c, c])
    params = []
    for arm in (1, 0):
        j = slot(arm, 0)
        beta = cov[j, c] / sd_c  # per unit of standardized conditioning value
        sd = np.sqrt(max(cov[j, j] - beta**2, 1e-300))
        params.append((mean[j], beta, sd))
    (a1, b1, s1), (a0, b0, s0) = params
    if y_grid is None:
        span = 10 * max(np.sqrt(cov[0, 0]), np.sqrt(cov[1, 1]))
        y_grid = np.linspace(min(mean[0], mean[1]) - span, max(mean[0], mean[1]) + span, 4001)
    lo, up = mixture_wd_bounds(a1, b1, s1, a0, b0, s0, np.asarray(delta_grid, dtype=float),
                               n_nodes, y_grid)
    return BoundCurve(delta_grid, lo, up, {"method": "theory", "target": pattern_label(target),
                                           "rho_star": spec.rho_star})


# ---------------------------------------------------------------- Monte Carlo

@dataclass
class McReport:
    delta: np.ndarray
    theory: BoundCurve
    mean_lower: dict
    mean_upper: dict
    sup_gap: dict
    width_at_zero: dict
    theory_width_at_zero: float
    coverage: dict
    n_ok: int
    n_failed: int
    seconds: float
    meta: dict = field(default_factory=dict)

    def model_gap(self, a=1, b=2, central=0.8):
        mask = central_mask(self.delta, central)
        return float(max(np.abs(self.mean_lower[a] - self.mean_lower[b])[mask].max(),
                         np.abs(self.mean_upper[a] - self.mean_upper[b])[mask].max()))

    def rows(self):
        out = []
        for m in self.mean_lower:
            row = {"N": self.meta.get("N"), "rho_star": self.meta.get("rho_star"),
                   "model": m, "sup_gap": self.sup_gap[m], "width_at_zero": self.width_at_zero[m],
                   "theory_width_at_zero": self.theory_width_at_zero,
                   "n_ok": self.n_ok, "n_failed": self.n_failed}
            for key, val in self.coverage.get(m, {}).items():
                row[key] = val
            out.append(row)
        return out


def central_mask(delta, central=0.8):
    delta = np.asarray(delta, dtype=float)
    lo, hi = delta[0], delta[-1]
    pad = (1 - central) / 2 * (hi - lo)
    return (delta >= lo + pad - 1e-12) & (delta <= hi - pad + 1e-12)


def run_monte_carlo(spec: DgpSpec, n_reps: int, target=(1, 1, 1),
                    est_config: EstimatorConfig = EstimatorConfig(), delta_grid=None,
                    models=(1, 2), inference: Optional[InferenceConfig] = None,
                    coverage_deltas=(0.0,), central=0.8) -> McReport:
    """Replicate sampling and estimation; compare mean curves with the theory.

    With ``inference`` each replication also builds bands at ``coverage_deltas``
    (Model of the first entry in ``models``) and records whether they contain
    the theoretical bounds.
    """
    start = time.perf_counter()
    target = as_pattern(target)
    delta = np.linspace(-5, 5, 101) if delta_grid is None else np.asarray(delta_grid, dtype=float)
    theory = theoretical_curve(spec, target, delta)
    cov_delta = np.atleast_1d(np.asarray(coverage_deltas, dtype=float))
    th_cov = theoretical_curve(spec, target, cov_delta) if inference else None
    specs = {m: resolve_gce(m, target) for m in models}
    sums_lo = {m: np.zeros(delta.size) for m in models}
    sums_up = {m: np.zeros(delta.size) for m in models}
    hits = {"cover_lower": 0, "cover_upper": 0, "cover_both": 0}
    n_ok = n_failed = 0
    for rep, ss in enumerate(np.random.SeedSequence(spec.seed).spawn(n_reps)):
        rng = np.random.default_rng(ss)
        sim = sample_dgp(spec, rng)
        try:
            fits = {m: fit_first_steps(sim.groups, target, specs[m], est_config) for m in models}
            curves = {m: proposed_curve(fits[m], delta) for m in models}
            if inference is not None:
                m0 = models[0]
                inf_cfg = InferenceConfig(inference.n_bootstrap, inference.r, inference.alpha,
                                          int(rng.integers(2**63)), inference.sign,
                                          inference.two_sided, inference.max_retries)
                boots = bootstrap_first_steps(sim.groups, target, specs[m0], inf_cfg,
                                              est_config, fits[m0])
                band = numerical_delta(fits[m0], boots,
                                       lambda f: proposed_curve(f, cov_delta), inf_cfg)
        except DteBoundsError as exc:
            n_failed += 1
            logger.warning("replication %d failed: %s", rep, exc)
            continue
        n_ok += 1
        for m in models:
            sums_lo[m] += curves[m].lower
            sums_up[m] += curves[m].upper
        if inference is not None:
            lo_ok = np.all(band.ci_lower <= th_cov.lower + 1e-12)
            up_ok = np.all(band.ci_upper >= th_cov.upper - 1e-12)
            hits["cover_lower"] += int(lo_ok)
            hits["cover_upper"] += int(up_ok)
            hits["cover_both"] += int(lo_ok and up_ok)
    if n_ok == 0:
        raise DteBoundsError("every Monte Carlo replication failed")
    mask = central_mask(delta, central)
    zero = int(np.argmin(np.abs(delta)))
    mean_lo = {m: sums_lo[m] / n_ok for m in models}
    mean_up = {m: sums_up[m] / n_ok for m in models}
    sup_gap = {m: float(max(np.abs(mean_lo[m] - theory.lower)[mask].max(),
                            np.abs(mean_up[m] - theory.upper)[mask].max())) for m in models}
    width = {m: float(mean_up[m][zero] - mean_lo[m][zero]) for m in models}
    coverage = {}
    if inference is not None:
        coverage[models[0]] = {k: v / n_ok for k, v in hits.items()}
    meta = {"N": spec.group_sizes.get(target), "rho_star": spec.rho_star,
            "target": pattern_label(target), "n_reps": n_reps, "link": est_config.link,
            "grid_size": est_config.grid_size}
    return McReport(delta, theory, mean_lo, mean_up, sup_gap, width,
                    float(theory.upper[zero] - theory.lower[zero]), coverage, n_ok, n_failed,
                    time.perf_counter() - start, meta)


# ---------------------------------------------------------------- TWFE check

@dataclass(frozen=True)
class TwfeSpec:
    """Two-way fixed effects outcomes ``Y_ds = θ_s + η + d·α + V_s``.

    ``V_s`` is a stationary Gaussian AR(1) (``ar_coef = 0`` gives i.i.d.
    shocks).  ``violation_scale`` multiplies the standard deviation of the
    target group's period-t shock, breaking lag-stationarity in that group only.
    """

    theta: tuple = (0.0, 0.5, 1.0)
    alpha_te: float = 1.0
    eta_sd: float = 1.0
    v_sd: float = 1.0
    ar_coef: float = 0.0
    violation_scale: float = 1.0

    def __post_init__(self):
        if len(self.theta) != 3:
            raise ConfigError("theta needs one value per period (t-2, t-1, t)")
        if not -1 < self.ar_coef < 1:
            raise ConfigError("ar_coef must lie in (-1, 1)")


def _twfe_group(spec: TwfeSpec, n, rng, violate=False):
    eta = spec.eta_sd * rng.standard_normal(n)
    v = np.empty((n, 3))
    v[:, 0] = spec.v_sd * rng.standard_normal(n)
    innov = spec.v_sd * np.sqrt(1 - spec.ar_coef**2)
    for s in (1, 2):
        v[:, s] = spec.ar_coef * v[:, s - 1] + innov * rng.standard_normal(n)
    if violate:
        v[:, 2] *= spec.violation_scale
    theta = np.asarray(spec.theta, dtype=float)
    y0 = theta + eta[:, None] + v
    return y0, y0 + spec.alpha_te


def twfe_samples(spec: TwfeSpec, n, rng):
    """The two copula samples whose equality the fixed-effects structure implies.

    Sample A: ``(Y1_{t-1}, Y0_t)`` of the target group (1,1,1).
    Sample B: ``(Y1_{t-2}, Y0_{t-1})`` of the recovery group (1,0,1).
    """
    y0, y1 = _twfe_group(spec, n, rng, violate=spec.violation_scale != 1.0)
    a = np.column_stack([y1[:, 1], y0[:, 2]])
    y0, y1 = _twfe_group(spec, n, rng)
    b = np.column_stack([y1[:, 0], y0[:, 1]])
    return a, b


def twfe_panel(spec: TwfeSpec, n_units: int, n_periods: int, seed: int = 0,
               p_treat: float = 0.5) -> PanelDataset:
    """Long panel with i.i.d. treatment paths and fixed-effects outcomes.

    Period effects extend ``spec.theta`` linearly; treatment does not depend on
    outcomes, so every copula-equality restriction holds in every window.
    """
    rng = np.random.default_rng(seed)
    periods = np.arange(1, n_periods + 1)
    theta = np.interp(periods, [1, 2, 3], spec.theta, left=None, right=None)
    slope = spec.theta[2] - spec.theta[1]
    theta = np.where(periods > 3, spec.theta[2] + slope * (periods - 3), theta)
    d = (rng.random((n_units, n_periods)) < p_treat).astype(int)
    v = np.empty((n_units, n_periods))
    v[:, 0] = spec.v_sd * rng.standard_normal(n_units)
    innov = spec.v_sd * np.sqrt(1 - spec.ar_coef**2)
    for s in range(1, n_periods):
        v[:, s] = spec.ar_coef * v[:, s - 1] + innov * rng.standard_normal(n_units)
    y = theta + spec.eta_sd * rng.standard_normal(n_units)[:, None] + v + spec.alpha_te * d
    frame = pd.DataFrame({"unit": np.repeat(np.arange(n_units), n_periods),
                          "period": np.tile(periods, n_units),
                          "treatment": d.ravel(), "outcome": y.ravel()})
    return PanelDataset.from_frame(frame)


def twfe_dgp_check(spec: TwfeSpec, n: int, seed: int = 0, n_multiplier: int = 1000) -> dict:
    rng = np.random.default_rng(seed)
    a, b = twfe_samples(spec, n, rng)
    stat, p = copula_equality_test(a, b, n_multiplier, int(rng.integers(2**63)))
    return {"n": n, "statistic_cvm": stat, "p_nonparametric": p,
            "violation_scale": spec.violation_scale, "ar_coef": spec.ar_coef}


# ---------------------------------------------------------------- LP oracle

def lp_coupling_oracle(atoms1, probs1, atoms0, probs0, delta):
    """Min and max of ``P(Y1 - Y0 <= δ)`` over all couplings of two discrete laws."""
    a1 = np.asarray(atoms1, dtype=float)
    a0 = np.asarray(atoms0, dtype=float)
    p1 = np.asarray(probs1, dtype=float)
    p0 = np.asarray(probs0, dtype=float)
    if a1.size != p1.size or a0.size != p0.size:
        raise ValueError("atoms and probabilities must align")
    if abs(p1.sum() - 1) > 1e-12 or abs(p0.sum() - 1) > 1e-12 or (p1 < 0).any() or (p0 < 0).any():
        raise ValueError("marginal probabilities must be nonnegative and sum to 1")
    k1, k0 = a1.size, a0.size
    cost = (a1[:, None] - a0[None, :] <= delta).astype(float).ravel()
    rows = np.kron(np.eye(k1), np.ones((1, k0)))
    cols = np.kron(np.ones((1, k1)), np.eye(k0))
    a_eq = np.vstack([rows, cols])
    b_eq = np.concatenate([p1, p0])
    lo = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    hi = linprog(-cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if lo.status != 0 or hi.status != 0:
        raise DteBoundsError("coupling LP failed")
    return float(lo.fun), float(-hi.fun)


def wd_discrete(atoms1, probs1, atoms0, probs0, delta):
    """WD formulas on two discrete laws given as atoms and probabilities."""
    o1, o0 = np.argsort(atoms1), np.argsort(atoms0)
    a1, p1 = np.asarray(atoms1, dtype=float)[o1], np.asarray(probs1, dtype=float)[o1]
    a0, p0 = np.asarray(atoms0, dtype=float)[o0], np.asarray(probs0, dtype=float)[o0]
    v1, v0 = np.cumsum(p1), np.cumsum(p0)
    v1[-1] = v0[-1] = 1.0
    lo, up = wd_step_matrix(a1, v1, a0, v0, [delta])
    return float(lo[0, 0]), float(up[0, 0])
