"""
Estimating-equation estimators for data-fairness metrics and conditional mutual information.

Each estimator evaluates its efficient influence function (EIF) on the evaluation split,
solves the empirical EIF mean to zero for the point estimate, and builds a Wald interval
from the same EIF values. Nuisance models are fitted on the training split only.

Traditional metrics average the Bayes decision D_c(x) = 1{D(x) >= c}; probabilistic
metrics average D(x) = P(Y=1|X=x) itself and carry an augmentation term, which makes
probabilistic parity doubly robust in (D, pi).
"""

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, NamedTuple, Optional, Tuple

import numpy as np
from scipy import special
from scipy.spatial import cKDTree
from statsmodels.stats.weightstats import CompareMeans, DescrStatsW

from .inference import EstimateResult, MetricId
from .learners import (
    LearnerConfig,
    ProbabilityModel,
    fit_binary,
    fit_joint,
    group_marginal,
    outcome_marginal,
)
from ..data.dataset import Dataset, SplitPair
from ..utils.config import config
from ..utils.errors import (
    CalibrationMissing,
    EmptyGroup,
    EmptyPositiveGroup,
    InsufficientData,
    KTooLarge,
    NonBinaryLabels,
    PropensityDegenerate,
    PropensityTruncation,
)

logger = logging.getLogger(__name__)


class Metric(str, Enum):
    PARITY = 'parity'
    OPPORTUNITY = 'opportunity'


class Kind(str, Enum):
    TRADITIONAL = 'traditional'
    PROBABILISTIC = 'probabilistic'


class CmiMode(str, Enum):
    SINGLE = 'single'
    SEPARATE = 'separate'


_METRIC_IDS = {
    (Metric.PARITY, Kind.TRADITIONAL): MetricId.PARITY,
    (Metric.PARITY, Kind.PROBABILISTIC): MetricId.PROB_PARITY,
    (Metric.OPPORTUNITY, Kind.TRADITIONAL): MetricId.OPPORTUNITY,
    (Metric.OPPORTUNITY, Kind.PROBABILISTIC): MetricId.PROB_OPPORTUNITY,
}


@dataclass(frozen=True)
class MetricSpec:
    """Which fairness functional to estimate and how to learn its nuisances"""
    metric: Metric = Metric.PARITY
    kind: Kind = Kind.TRADITIONAL
    threshold: float = config.estimator_config['threshold']
    outcome_learner: LearnerConfig = field(default_factory=LearnerConfig)
    group_learner: LearnerConfig = field(default_factory=LearnerConfig)
    joint_learner: LearnerConfig = field(default_factory=LearnerConfig)
    level: float = config.estimator_config['level']
    clip: float = config.estimator_config['propensity_clip']

    def __post_init__(self):
        object.__setattr__(self, 'metric', Metric(self.metric))
        object.__setattr__(self, 'kind', Kind(self.kind))
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"Threshold must lie in (0, 1), got {self.threshold}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"Confidence level must lie in (0, 1), got {self.level}")

    @property
    def metric_id(self) -> MetricId:
        return _METRIC_IDS[(self.metric, self.kind)]

    @classmethod
    def for_metric_id(cls, metric_id: str, **kwargs) -> 'MetricSpec':
        wanted = MetricId(metric_id)
        for (metric, kind), candidate in _METRIC_IDS.items():
            if candidate == wanted:
                return cls(metric=metric, kind=kind, **kwargs)
        raise ValueError(f"{metric_id} is not a parity or opportunity metric")

    def with_learners(self, learner: LearnerConfig) -> 'MetricSpec':
        return MetricSpec(self.metric, self.kind, self.threshold, learner, learner, learner, self.level, self.clip)


@dataclass(frozen=True)
class NuisanceSet:
    """Fitted plug-in models plus empirical group probabilities from the evaluation split"""
    d_model: ProbabilityModel
    pi_model: Optional[ProbabilityModel] = None
    rho_model: Optional[ProbabilityModel] = None
    p_hat_g1: Optional[float] = None
    p_hat_yg11: Optional[float] = None

    def provenance(self) -> Dict[str, Any]:
        record = {'outcome_model': self.d_model.provenance()}
        if self.pi_model is not None:
            record['group_model'] = self.pi_model.provenance()
        if self.rho_model is not None:
            record['joint_model'] = self.rho_model.provenance()
        return record


class NaiveTTest(NamedTuple):
    diff: float
    stderr: float
    ci_low: float
    ci_high: float
    dof: float


# ---------------------------------------------------------------------------
# Array kernels
# ---------------------------------------------------------------------------

def _clip_propensity(values: np.ndarray, clip: float, name: str) -> Tuple[np.ndarray, float]:
    values = np.asarray(values, dtype=float)
    if not np.isfinite(values).all():
        raise PropensityDegenerate(f"{name} has non-finite predictions")
    outside = (values < clip) | (values > 1.0 - clip)
    fraction = float(outside.mean())
    if fraction == 1.0:
        raise PropensityDegenerate(f"Every row of {name} lies outside [{clip}, {1 - clip}]")
    if fraction > config.estimator_config['truncation_warning_fraction']:
        message = f"{fraction:.1%} of {name} values truncated to [{clip}, {1 - clip}]"
        logger.warning(message)
        warnings.warn(message, PropensityTruncation, stacklevel=3)
    return np.clip(values, clip, 1.0 - clip), fraction


def _weighted_arm(indicator: np.ndarray, values: np.ndarray) -> Tuple[float, np.ndarray]:
    """Estimating-equation solution and EIF for E[values | indicator = 1]"""
    p = indicator.mean()
    psi = float(np.sum(indicator * values) / np.sum(indicator))
    return psi, indicator / p * (values - psi)


def _augmented_arm(indicator: np.ndarray, weight: np.ndarray, outcome: np.ndarray,
                   d_hat: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Augmented arm: psi = mean(w*(y - D) + 1{arm}*D) / P(arm),
    phi = (w*(y - D) + 1{arm}*(D - psi)) / P(arm).
    """
    p = indicator.mean()
    residual = weight * (outcome - d_hat)
    psi = float(np.mean(residual + indicator * d_hat) / p)
    return psi, (residual + indicator * (d_hat - psi)) / p


def parity_from_predictions(group: np.ndarray, outcome: np.ndarray, d_hat: np.ndarray,
                            pi_hat: Optional[np.ndarray] = None, kind: Kind = Kind.TRADITIONAL,
                            threshold: float = 0.5,
                            clip: float = config.estimator_config['propensity_clip']
                            ) -> Tuple[float, np.ndarray, Dict[str, Any]]:
    """Demographic parity point estimate, EIF values and diagnostics from predictions"""
    g1 = np.asarray(group, dtype=float)
    g0 = 1.0 - g1
    if g1.sum() == 0 or g0.sum() == 0:
        raise EmptyGroup("Evaluation data must contain both group values")
    d_hat = np.asarray(d_hat, dtype=float)

    if Kind(kind) == Kind.TRADITIONAL:
        decision = (d_hat >= threshold).astype(float)
        psi1, phi1 = _weighted_arm(g1, decision)
        psi0, phi0 = _weighted_arm(g0, decision)
        return psi1 - psi0, phi1 - phi0, {'psi_1': psi1, 'psi_0': psi0}

    if pi_hat is None:
        raise ValueError("Probabilistic parity needs propensity predictions")
    y = np.asarray(outcome, dtype=float)
    pi1, truncated1 = _clip_propensity(pi_hat, clip, 'propensity')
    pi0, truncated0 = _clip_propensity(1.0 - np.asarray(pi_hat, dtype=float), clip, 'propensity')
    psi1, phi1 = _augmented_arm(g1, pi1, y, d_hat)
    psi0, phi0 = _augmented_arm(g0, pi0, y, d_hat)
    plug_in = float(np.sum(g1 * d_hat) / g1.sum() - np.sum(g0 * d_hat) / g0.sum())
    diagnostics = {
        'psi_1': psi1,
        'psi_0': psi0,
        'plug_in': plug_in,
        'truncated_fraction': max(truncated1, truncated0),
    }
    return psi1 - psi0, phi1 - phi0, diagnostics


def opportunity_from_predictions(group: np.ndarray, outcome: np.ndarray, d_hat: np.ndarray,
                                 rho_hat: Optional[np.ndarray] = None, kind: Kind = Kind.TRADITIONAL,
                                 threshold: float = 0.5,
                                 clip: float = config.estimator_config['propensity_clip']
                                 ) -> Tuple[float, np.ndarray, Dict[str, Any]]:
    """
    Equal opportunity point estimate, EIF values and diagnostics.

    ``rho_hat`` has columns (rho_0, rho_1) with rho_g(x) = P(Y=1, G=g | x).
    """
    g = np.asarray(group, dtype=float)
    y = np.asarray(outcome, dtype=float)
    positive1 = y * g
    positive0 = y * (1.0 - g)
    if positive1.sum() == 0 or positive0.sum() == 0:
        raise EmptyPositiveGroup("Evaluation data needs Y=1 rows in both groups")
    d_hat = np.asarray(d_hat, dtype=float)

    if Kind(kind) == Kind.TRADITIONAL:
        decision = (d_hat >= threshold).astype(float)
        psi1, phi1 = _weighted_arm(positive1, decision)
        psi0, phi0 = _weighted_arm(positive0, decision)
        return psi1 - psi0, phi1 - phi0, {'psi_1': psi1, 'psi_0': psi0}

    if rho_hat is None:
        raise ValueError("Probabilistic opportunity needs joint-model predictions")
    rho_hat = np.asarray(rho_hat, dtype=float)
    rho0, truncated0 = _clip_propensity(rho_hat[:, 0], clip, 'rho_0')
    rho1, truncated1 = _clip_propensity(rho_hat[:, 1], clip, 'rho_1')
    psi1, phi1 = _augmented_arm(positive1, rho1, y, d_hat)
    psi0, phi0 = _augmented_arm(positive0, rho0, y, d_hat)
    plug_in = float(np.sum(positive1 * d_hat) / positive1.sum() - np.sum(positive0 * d_hat) / positive0.sum())
    diagnostics = {
        'psi_1': psi1,
        'psi_0': psi0,
        'plug_in': plug_in,
        'truncated_fraction': max(truncated0, truncated1),
    }
    return psi1 - psi0, phi1 - phi0, diagnostics


def cmi_from_predictions(outcome: np.ndarray, group: np.ndarray, joint_probs: np.ndarray,
                         outcome_probs: np.ndarray, group_probs: np.ndarray,
                         floor: float = config.estimator_config['probability_floor']
                         ) -> Tuple[float, np.ndarray]:
    """
    Mean log ratio p(y,g|x) / (p(y|x) p(g|x)) over observed (y, g), and its EIF
    (log ratio minus the mean). ``outcome_probs`` / ``group_probs`` are P(Y=1|x), P(G=1|x).
    """
    y = np.asarray(outcome, dtype=int)
    g = np.asarray(group, dtype=int)
    rows = np.arange(y.size)
    p_joint = np.maximum(joint_probs[rows, 2 * y + g], floor)
    p_y = np.maximum(np.where(y == 1, outcome_probs, 1.0 - outcome_probs), floor)
    p_g = np.maximum(np.where(g == 1, group_probs, 1.0 - group_probs), floor)
    log_ratio = np.log(p_joint) - np.log(p_y) - np.log(p_g)
    point = float(np.mean(log_ratio))
    return point, log_ratio - point


# ---------------------------------------------------------------------------
# Nuisance fitting
# ---------------------------------------------------------------------------

def _require_both_groups(data: Dataset):
    n0, n1 = data.group_counts()
    if n0 == 0 or n1 == 0:
        raise EmptyGroup(f"Dataset lacks group value {0 if n0 == 0 else 1} (n0={n0}, n1={n1})")


def fit_nuisances(split: SplitPair, spec: MetricSpec) -> NuisanceSet:
    """Fit the models the metric needs on the training split"""
    train, evaluation = split.train, split.eval
    d_model = fit_binary(train.features, train.outcome, spec.outcome_learner)
    pi_model = rho_model = None
    if spec.kind == Kind.PROBABILISTIC and spec.metric == Metric.PARITY:
        pi_model = fit_binary(train.features, train.group, spec.group_learner)
    if spec.kind == Kind.PROBABILISTIC and spec.metric == Metric.OPPORTUNITY:
        rho_model = fit_joint(train.features, train.outcome, train.group, spec.joint_learner)

    return NuisanceSet(
        d_model=d_model,
        pi_model=pi_model,
        rho_model=rho_model,
        p_hat_g1=float(evaluation.group.mean()),
        p_hat_yg11=float(np.mean(evaluation.group * evaluation.outcome)),
    )


def _result(point: float, eif: np.ndarray, spec: MetricSpec, nuisances: NuisanceSet,
            diagnostics: Dict[str, Any]) -> EstimateResult:
    metadata = {
        'threshold': spec.threshold,
        'kind': spec.kind.value,
        'learners': nuisances.provenance(),
        'p_hat_g1': nuisances.p_hat_g1,
        'p_hat_yg11': nuisances.p_hat_yg11,
    }
    metadata.update(diagnostics)
    return EstimateResult.from_eif(point, eif, spec.level, spec.metric_id, metadata)


def estimate_parity(split: SplitPair, spec: MetricSpec, nuisances: Optional[NuisanceSet] = None) -> EstimateResult:
    """
    Traditional or probabilistic demographic parity of the data-generating law.

    Pass ``nuisances`` to evaluate with pre-fitted (for example oracle) models.
    """
    if spec.metric != Metric.PARITY:
        raise ValueError(f"estimate_parity got a {spec.metric.value} spec")
    evaluation = split.eval
    _require_both_groups(evaluation)
    if nuisances is None:
        nuisances = fit_nuisances(split, spec)

    d_hat = nuisances.d_model.predict_positive(evaluation.features)
    pi_hat = None
    if spec.kind == Kind.PROBABILISTIC:
        if nuisances.pi_model is None:
            raise ValueError("Probabilistic parity needs a propensity model")
        pi_hat = nuisances.pi_model.predict_positive(evaluation.features)

    point, eif, diagnostics = parity_from_predictions(
        evaluation.group, evaluation.outcome, d_hat, pi_hat, spec.kind, spec.threshold, spec.clip,
    )
    return _result(point, eif, spec, nuisances, diagnostics)


def estimate_opportunity(split: SplitPair, spec: MetricSpec, nuisances: Optional[NuisanceSet] = None) -> EstimateResult:
    """Traditional or probabilistic equal opportunity (metric restricted to Y=1 rows)"""
    if spec.metric != Metric.OPPORTUNITY:
        raise ValueError(f"estimate_opportunity got a {spec.metric.value} spec")
    evaluation = split.eval
    y, g = evaluation.outcome, evaluation.group
    if not ((y == 1) & (g == 1)).any() or not ((y == 1) & (g == 0)).any():
        raise EmptyPositiveGroup("Evaluation split needs Y=1 rows in both groups")
    if nuisances is None:
        nuisances = fit_nuisances(split, spec)

    d_hat = nuisances.d_model.predict_positive(evaluation.features)
    rho_hat = None
    if spec.kind == Kind.PROBABILISTIC:
        if nuisances.rho_model is None:
            raise ValueError("Probabilistic opportunity needs a joint model")
        joint = nuisances.rho_model.predict_proba(evaluation.features)
        rho_hat = joint[:, [2, 3]]

    point, eif, diagnostics = opportunity_from_predictions(
        g, y, d_hat, rho_hat, spec.kind, spec.threshold, spec.clip,
    )
    return _result(point, eif, spec, nuisances, diagnostics)


def estimate_metric(split: SplitPair, spec: MetricSpec, nuisances: Optional[NuisanceSet] = None) -> EstimateResult:
    if spec.metric == Metric.PARITY:
        return estimate_parity(split, spec, nuisances)
    return estimate_opportunity(split, spec, nuisances)


# ---------------------------------------------------------------------------
# Conditional mutual information
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CmiConfig:
    joint_learner: LearnerConfig = field(default_factory=lambda: LearnerConfig(calibrate=True))
    outcome_learner: LearnerConfig = field(default_factory=lambda: LearnerConfig(calibrate=True))
    group_learner: LearnerConfig = field(default_factory=lambda: LearnerConfig(calibrate=True))
    level: float = config.estimator_config['level']
    floor: float = config.estimator_config['probability_floor']

    @classmethod
    def from_learner(cls, learner: LearnerConfig, **kwargs) -> 'CmiConfig':
        return cls(joint_learner=learner, outcome_learner=learner, group_learner=learner, **kwargs)


def estimate_cmi_tl(split: SplitPair, mode: CmiMode = CmiMode.SINGLE, configs: CmiConfig = None,
                    joint_model: Optional[ProbabilityModel] = None,
                    outcome_model: Optional[ProbabilityModel] = None,
                    group_model: Optional[ProbabilityModel] = None) -> EstimateResult:
    """
    Conditional mutual information between Y and G given X.

    single mode marginalizes the joint (Y, G) model; separate mode fits P(Y|X) and P(G|X)
    on their own. Negative estimates are returned unchanged.
    """
    mode = CmiMode(mode)
    configs = configs or CmiConfig()
    train, evaluation = split.train, split.eval
    for data in (train, evaluation):
        if not (np.isin(data.outcome, (0, 1)).all() and np.isin(data.group, (0, 1)).all()):
            raise NonBinaryLabels("CMI estimation needs binary Y and G")

    if joint_model is None:
        joint_model = fit_joint(train.features, train.outcome, train.group, configs.joint_learner)
    models = [joint_model]
    joint = joint_model.predict_proba(evaluation.features)

    if mode == CmiMode.SINGLE:
        outcome_probs = outcome_marginal(joint)
        group_probs = group_marginal(joint)
    else:
        if outcome_model is None:
            outcome_model = fit_binary(train.features, train.outcome, configs.outcome_learner)
        if group_model is None:
            group_model = fit_binary(train.features, train.group, configs.group_learner)
        models += [outcome_model, group_model]
        outcome_probs = outcome_model.predict_positive(evaluation.features)
        group_probs = group_model.predict_positive(evaluation.features)

    uncalibrated = [m.algorithm for m in models if not m.calibrated and not m.metadata.get('oracle')]
    if uncalibrated:
        message = f"CMI uses uncalibrated classifiers: {uncalibrated}"
        logger.warning(message)
        warnings.warn(message, CalibrationMissing, stacklevel=2)

    point, eif = cmi_from_predictions(
        evaluation.outcome, evaluation.group, joint, outcome_probs, group_probs, configs.floor,
    )
    metadata = {
        'mode': mode.value,
        'learners': {f'model_{i}': m.provenance() for i, m in enumerate(models)},
    }
    return EstimateResult.from_eif(point, eif, configs.level, MetricId.CMI, metadata)


def _standardize(features: np.ndarray) -> np.ndarray:
    scale = features.std(axis=0)
    scale[scale == 0] = 1.0
    return (features - features.mean(axis=0)) / scale


def _ball_counts(points: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """Neighbours within max-norm ``radius`` of each point, excluding the point itself"""
    counts = cKDTree(points).query_ball_point(points, r=radius, p=np.inf, return_length=True)
    counts = np.asarray(counts, dtype=float)
    return np.where(counts > 1, counts - 1, counts)


def _finite_mean(terms: np.ndarray) -> float:
    """Mean of the finite k-NN terms; dropped terms are logged"""
    finite = np.isfinite(terms)
    if not finite.any():
        raise InsufficientData("Every k-NN term is non-finite")
    dropped = int(terms.size - finite.sum())
    if dropped:
        logger.warning(f"Dropped {dropped} of {terms.size} non-finite k-NN CMI terms")
    return float(terms[finite].mean())


def estimate_cmi_knn(data: Dataset, k: int = config.estimator_config['knn_neighbors']) -> float:
    """
    Mixed discrete/continuous k-nearest-neighbour estimate of I(Y; G | X).

    Uses the max-norm neighbourhood of the k-th neighbour in (Y, G, X) space; when that
    distance is zero every tied point is counted. Point estimate only.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= data.n:
        raise KTooLarge(f"k={k} must be smaller than n={data.n}")

    x = _standardize(data.features)
    y = data.outcome.astype(float)[:, None]
    g = data.group.astype(float)[:, None]
    joint = np.hstack([y, g, x])

    distances, _ = cKDTree(joint).query(joint, k=k + 1, p=np.inf)
    radius = distances[:, -1]

    k_tilde = _ball_counts(joint, radius)
    k_yx = _ball_counts(np.hstack([y, x]), radius)
    k_gx = _ball_counts(np.hstack([g, x]), radius)
    k_x = _ball_counts(x, radius)

    terms = special.digamma(k_tilde) - special.digamma(k_yx) - special.digamma(k_gx) + special.digamma(k_x)
    return _finite_mean(terms)


# ---------------------------------------------------------------------------
# Model-level baselines
# ---------------------------------------------------------------------------

def naive_model_ttest(model: ProbabilityModel, evaluation: Dataset, c: float = 0.5,
                      probabilistic: bool = False, level: float = 0.95) -> NaiveTTest:
    """
    Welch two-sample comparison of model outputs between groups, treating each
    prediction as an iid draw. Traditional form thresholds at ``c``.

    For traditional parity the difference equals the estimating-equation point and the
    two standard errors agree up to the pooled vs per-group variance divisor; only the
    probabilistic form, whose influence values carry the residual Y - D(x), gives a
    wider estimating-equation interval than this baseline.
    """
    _require_both_groups(evaluation)
    scores = model.predict_positive(evaluation.features)
    if not probabilistic:
        scores = (scores >= c).astype(float)
    in_group = evaluation.group == 1
    first, second = scores[in_group], scores[~in_group]
    diff = float(first.mean() - second.mean())

    if first.size < 2 or second.size < 2:
        return NaiveTTest(diff, float('nan'), float('nan'), float('nan'), float('nan'))
    comparison = CompareMeans(DescrStatsW(first), DescrStatsW(second))
    stderr = float(comparison.std_meandiff_separatevar)
    if stderr == 0.0:
        return NaiveTTest(diff, 0.0, diff, diff, float('nan'))
    ci_low, ci_high = comparison.tconfint_diff(alpha=1.0 - level, usevar='unequal')
    _, _, dof = comparison.ttest_ind(usevar='unequal')
    return NaiveTTest(diff, stderr, float(ci_low), float(ci_high), float(dof))


def model_fairness_estimate(model: ProbabilityModel, evaluation: Dataset, c: float = 0.5,
                            level: float = config.estimator_config['level']) -> EstimateResult:
    """Parity of a fixed model's thresholded predictions m_c(x) = 1{m(x) >= c}"""
    _require_both_groups(evaluation)
    scores = model.predict_positive(evaluation.features)
    point, eif, diagnostics = parity_from_predictions(
        evaluation.group, evaluation.outcome, scores, kind=Kind.TRADITIONAL, threshold=c,
    )
    metadata = {'threshold': c, 'model': model.provenance()}
    metadata.update(diagnostics)
    return EstimateResult.from_eif(point, eif, level, MetricId.MODEL_PARITY, metadata)
