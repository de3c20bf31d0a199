"""Bounds on distributional treatment effects in three-period panels."""

from .bounds import (
    BoundCurve,
    JointBoundSurface,
    QuantileBounds,
    dote_bounds,
    fh_conditional,
    joint_bounds,
    qote_bounds,
    wd_baseline,
    wd_conditional,
)
from .counterfactual import (
    CicSpec,
    GceSpec,
    cic_marginal,
    gce_conditional_marginal,
    lagged_joint,
    resolve_gce,
)
from .distributions import (
    ConditionalCDF,
    PseudoSample,
    StepDistribution,
    dr_fit,
    ecdf_fit,
    kendall_tau,
    pseudo_obs,
    rearrange_monotone,
)
from .exceptions import (
    ConfigError,
    DataError,
    DteBoundsError,
    InsufficientDataError,
    ParseError,
)
from .panel import GroupIndex, PanelDataset, classify, group_matrix, load_panel

__version__ = "0.1.0"
