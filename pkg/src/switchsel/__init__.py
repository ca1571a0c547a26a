"""Model selection between nested exponential families with the switch criterion."""

__version__ = "0.1.0"

from switchsel.criteria import (Criterion, Decision, NestedModel, RobustTest, aic_select, bfms_select, bic_select,
                                glrt_threshold, hq_select, post_selection_estimate, robust_test, select,
                                switch_select)
from switchsel.evidence import MarginalState, log_marginal, run
from switchsel.expfam import FamilySpec, LossKind, MeanParam, NestedPair, get_family, loss, mle
from switchsel.switchcrit import SwitchPrior, SwitchState, delta_sw, log_psw1, r_sw, run_switch

__all__ = [
    "Criterion", "Decision", "FamilySpec", "LossKind", "MarginalState", "MeanParam", "NestedModel",
    "NestedPair", "RobustTest", "SwitchPrior", "SwitchState", "aic_select", "bfms_select", "bic_select",
    "delta_sw", "get_family", "glrt_threshold", "hq_select", "log_marginal", "log_psw1", "loss", "mle",
    "post_selection_estimate", "r_sw", "robust_test", "run", "run_switch", "select", "switch_select",
]
