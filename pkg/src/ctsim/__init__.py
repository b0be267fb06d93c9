"""Critical-thinking voting model: welfare closed forms, Monte Carlo checks and the
transition-frequency pipeline."""

from ._kernels import BACKEND
from .analytics import (
    Regime,
    RegimeResult,
    WelfareReport,
    classify_regime,
    classify_regime_numerical,
    posterior_loadings,
    welfare_curve,
    welfare_report,
    zero_bias_time,
)
from .model import (
    BehaviorParams,
    Loadings,
    ModelError,
    PriorSpec,
    ProcessParams,
    State,
    election_loadings,
    share_stereotype,
)
from .montecarlo import McConfig, Mode, Target, compare_mc_closed_form, estimate_welfare_mc
from .threestate import ChainParams, chain_shares, identify_from_panel, symmetry_test

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BehaviorParams", "ChainParams", "Loadings", "McConfig", "Mode", "ModelError",
    "PriorSpec", "ProcessParams", "Regime", "RegimeResult", "State", "Target", "WelfareReport",
    "chain_shares", "classify_regime", "classify_regime_numerical", "compare_mc_closed_form",
    "election_loadings", "estimate_welfare_mc", "identify_from_panel", "posterior_loadings",
    "share_stereotype", "symmetry_test", "welfare_curve", "welfare_report", "zero_bias_time",
]
