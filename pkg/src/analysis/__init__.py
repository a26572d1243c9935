"""Nuisance learners, estimators, ground-truth oracles, coverage studies and importance"""

from .inference import EstimateResult, MetricId, wald_interval
from .learners import LearnerConfig, ProbabilityModel, calibrate, cv_select, fit_binary, fit_joint
from .estimators import (
    CmiConfig,
    CmiMode,
    MetricSpec,
    NuisanceSet,
    estimate_cmi_knn,
    estimate_cmi_tl,
    estimate_opportunity,
    estimate_parity,
    fit_nuisances,
    model_fairness_estimate,
    naive_model_ttest,
)
from .oracles import brute_force_estimand, mc_truth
from .coverage import CoverageReport, StudyCell, run_coverage_study
from .importance import ImportanceReport, shapley_importance

__all__ = [
    'EstimateResult',
    'MetricId',
    'wald_interval',
    'LearnerConfig',
    'ProbabilityModel',
    'calibrate',
    'cv_select',
    'fit_binary',
    'fit_joint',
    'CmiConfig',
    'CmiMode',
    'MetricSpec',
    'NuisanceSet',
    'estimate_cmi_knn',
    'estimate_cmi_tl',
    'estimate_opportunity',
    'estimate_parity',
    'fit_nuisances',
    'model_fairness_estimate',
    'naive_model_ttest',
    'brute_force_estimand',
    'mc_truth',
    'CoverageReport',
    'StudyCell',
    'run_coverage_study',
    'ImportanceReport',
    'shapley_importance',
]
