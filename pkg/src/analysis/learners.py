"""
Plug-in nuisance learners for conditional probabilities.

Binary models estimate P(Y=1|X), P(G=1|X); the joint model estimates the four-class
law of (Y, G) given X. Every fitted model is wrapped in a ProbabilityModel whose
predictions always lie on the probability simplex, floored away from 0 and 1.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit
from sklearn.ensemble import GradientBoostingClassifier
from sklearn.exceptions import ConvergenceWarning
from sklearn.isotonic import IsotonicRegression
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import log_loss
from sklearn.model_selection import KFold, StratifiedKFold, train_test_split

from ..utils.config import config
from ..utils.errors import (
    FairnessInferenceError,
    HoldoutTooSmall,
    InsufficientData,
    MissingJointCell,
    NonBinaryLabels,
    NonFiniteFeature,
    SingleClassLabels,
)
from ..utils.rng import derive_seed

logger = logging.getLogger(__name__)

BINARY_LABELS: Tuple[int, ...] = (0, 1)
# Joint class index is 2*y + g
JOINT_LABELS: Tuple[Tuple[int, int], ...] = ((0, 0), (0, 1), (1, 0), (1, 1))


class Algorithm(str, Enum):
    LOGISTIC = 'logistic'
    GBT = 'gbt'
    CONSTANT = 'constant'
    CV_SELECT = 'cv_select'


@dataclass(frozen=True)
class LearnerConfig:
    """Algorithm choice plus hyperparameters; defaults come from the project config"""
    algorithm: Algorithm = Algorithm.LOGISTIC
    ridge: float = config.learner_config['ridge']
    max_iter: int = config.learner_config['max_iter']
    tol: float = config.learner_config['tol']
    n_estimators: int = config.learner_config['n_estimators']
    max_depth: int = config.learner_config['max_depth']
    learning_rate: float = config.learner_config['learning_rate']
    subsample: float = config.learner_config['subsample']
    folds: int = config.learner_config['cv_folds']
    candidates: Tuple['LearnerConfig', ...] = ()
    calibrate: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'algorithm', Algorithm(self.algorithm))
        if self.ridge < 0:
            raise ValueError(f"ridge must be >= 0, got {self.ridge}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.n_estimators < 1 or self.max_depth < 1:
            raise ValueError("GBT needs n_estimators >= 1 and max_depth >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError(f"subsample must lie in (0, 1], got {self.subsample}")
        if self.algorithm == Algorithm.CV_SELECT:
            if self.folds < 2:
                raise ValueError(f"cv_select requires folds >= 2, got {self.folds}")
            if any(c.algorithm == Algorithm.CV_SELECT for c in self.candidates):
                raise ValueError("cv_select candidates cannot themselves be cv_select")

    @classmethod
    def named(cls, name: str, **overrides) -> 'LearnerConfig':
        """Config for an algorithm name; cv_select gets the default candidate library"""
        algorithm = Algorithm(name)
        if algorithm == Algorithm.CV_SELECT and 'candidates' not in overrides:
            seed = overrides.get('seed', 0)
            overrides['candidates'] = tuple(
                cls(algorithm=Algorithm(c), seed=seed) for c in config.learner_config['candidates']
            )
        return cls(algorithm=algorithm, **overrides)

    def with_seed(self, seed: int) -> 'LearnerConfig':
        return replace(self, seed=int(seed), candidates=tuple(c.with_seed(seed) for c in self.candidates))

    def hyperparameters(self) -> Dict[str, Any]:
        if self.algorithm == Algorithm.LOGISTIC:
            return {'ridge': self.ridge, 'max_iter': self.max_iter, 'tol': self.tol}
        if self.algorithm == Algorithm.GBT:
            return {
                'n_estimators': self.n_estimators,
                'max_depth': self.max_depth,
                'learning_rate': self.learning_rate,
                'subsample': self.subsample,
            }
        if self.algorithm == Algorithm.CV_SELECT:
            return {'folds': self.folds, 'candidates': [c.algorithm.value for c in self.candidates]}
        return {}


# ---------------------------------------------------------------------------
# Logistic regression by iteratively reweighted least squares
# ---------------------------------------------------------------------------

def add_intercept(features: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((features.shape[0], 1)), features])


def logistic_loss(beta: np.ndarray, design: np.ndarray, labels: np.ndarray, ridge: float) -> float:
    """Penalized negative log-likelihood: sum log(1 + e^eta) - y*eta + ridge/2 |beta|^2"""
    eta = design @ beta
    return float(np.sum(np.logaddexp(0.0, eta) - labels * eta) + 0.5 * ridge * beta @ beta)


def logistic_gradient(beta: np.ndarray, design: np.ndarray, labels: np.ndarray, ridge: float) -> np.ndarray:
    return design.T @ (expit(design @ beta) - labels) + ridge * beta


class IRLSLogistic:
    """Ridge-stabilized logistic regression fitted by Newton / IRLS with step halving"""

    def __init__(self, ridge: float = 1e-6, max_iter: int = 100, tol: float = 1e-10):
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol
        self.coef_: Optional[np.ndarray] = None
        self.n_iter_ = 0

    def fit(self, features: np.ndarray, labels: np.ndarray) -> 'IRLSLogistic':
        design = add_intercept(features)
        labels = labels.astype(float)
        beta = np.zeros(design.shape[1])
        loss = logistic_loss(beta, design, labels, self.ridge)
        penalty = self.ridge * np.eye(design.shape[1])

        for iteration in range(1, self.max_iter + 1):
            p = expit(design @ beta)
            weights = p * (1.0 - p)
            gradient = design.T @ (p - labels) + self.ridge * beta
            hessian = design.T @ (design * weights[:, None]) + penalty
            try:
                step = np.linalg.solve(hessian, gradient)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(hessian, gradient, rcond=None)[0]

            scale = 1.0
            for _ in range(50):
                candidate = beta - scale * step
                candidate_loss = logistic_loss(candidate, design, labels, self.ridge)
                if candidate_loss <= loss:
                    break
                scale *= 0.5
            else:
                break

            improvement = loss - candidate_loss
            beta, loss = candidate, candidate_loss
            self.n_iter_ = iteration
            if improvement <= self.tol * (1.0 + abs(loss)):
                break

        self.coef_ = beta
        return self

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        p = expit(add_intercept(features) @ self.coef_)
        return np.column_stack([1.0 - p, p])


class MultinomialLogistic:
    """Softmax regression (scikit-learn lbfgs) with a small ridge penalty, always exposing ``n_classes`` columns"""

    def __init__(self, n_classes: int, ridge: float = 1e-6, max_iter: int = 100, tol: float = 1e-10):
        self.n_classes = n_classes
        self.model = LogisticRegression(
            C=1.0 / ridge,
            multi_class='multinomial',
            solver='lbfgs',
            max_iter=10 * max_iter,
            tol=tol,
        )

    def fit(self, features: np.ndarray, labels: np.ndarray) -> 'MultinomialLogistic':
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always', ConvergenceWarning)
            self.model.fit(features, labels.astype(int))
        if any(issubclass(w.category, ConvergenceWarning) for w in caught):
            logger.debug("Multinomial logistic stopped at max_iter=%d", self.model.max_iter)
        return self

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        # classes absent from the training labels get zero mass
        probs = np.zeros((features.shape[0], self.n_classes))
        probs[:, self.model.classes_] = self.model.predict_proba(features)
        return probs


class ConstantClassifier:
    """Empirical class frequencies, ignoring the covariates"""

    def __init__(self, n_classes: int):
        self.n_classes = n_classes
        self.frequencies_: Optional[np.ndarray] = None

    def fit(self, features: np.ndarray, labels: np.ndarray) -> 'ConstantClassifier':
        counts = np.bincount(labels.astype(int), minlength=self.n_classes).astype(float)
        self.frequencies_ = counts / counts.sum()
        return self

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return np.tile(self.frequencies_, (features.shape[0], 1))


class BoostedBinary:
    """Gradient-boosted trees on log-loss, exposing (n, 2) probabilities"""

    def __init__(self, learner: LearnerConfig):
        self.model = GradientBoostingClassifier(
            loss='log_loss',
            n_estimators=learner.n_estimators,
            max_depth=learner.max_depth,
            learning_rate=learner.learning_rate,
            subsample=learner.subsample,
            random_state=learner.seed,
        )

    @property
    def train_loss_(self) -> np.ndarray:
        """Training log-loss after each boosting round"""
        return self.model.train_score_

    def fit(self, features: np.ndarray, labels: np.ndarray) -> 'BoostedBinary':
        self.model.fit(features, labels)
        return self

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return self.model.predict_proba(features)


class OneVsRestBoosting:
    """One boosted binary model per class, renormalized to a probability vector"""

    def __init__(self, n_classes: int, learner: LearnerConfig):
        self.n_classes = n_classes
        self.learner = learner
        self.members_: List[Any] = []

    def fit(self, features: np.ndarray, labels: np.ndarray) -> 'OneVsRestBoosting':
        self.members_ = []
        for k in range(self.n_classes):
            target = (labels == k).astype(int)
            if 0 < target.sum() < target.size:
                self.members_.append(BoostedBinary(self.learner).fit(features, target))
            else:
                self.members_.append(float(target.mean()))
        return self

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        columns = []
        for member in self.members_:
            if isinstance(member, float):
                columns.append(np.full(features.shape[0], member))
            else:
                columns.append(member.predict_proba(features)[:, 1])
        return _normalize_rows(np.column_stack(columns))


class FunctionClassifier:
    """Wraps a known conditional-probability function (oracle nuisance)"""

    def __init__(self, function: Callable[[np.ndarray], np.ndarray], n_classes: int):
        self.function = function
        self.n_classes = n_classes

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        values = np.asarray(self.function(features), dtype=float)
        if self.n_classes == 2 and values.ndim == 1:
            return np.column_stack([1.0 - values, values])
        return values


def _normalize_rows(probs: np.ndarray) -> np.ndarray:
    totals = probs.sum(axis=1, keepdims=True)
    uniform = np.full_like(probs, 1.0 / probs.shape[1])
    safe = np.where(totals > 0, totals, 1.0)
    return np.where(totals > 0, probs / safe, uniform)


# ---------------------------------------------------------------------------
# Fitted model contract
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbabilityModel:
    """
    Fitted conditional-probability function.

    ``predict_proba`` returns one probability vector per row over ``class_labels``;
    entries are floored at ``floor`` and each row sums to one.
    """
    estimator: Any = field(repr=False)
    class_labels: Tuple[Any, ...]
    algorithm: str
    hyperparameters: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    calibrators: Optional[Tuple[IsotonicRegression, ...]] = field(default=None, repr=False)
    floor: float = config.estimator_config['probability_floor']
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    @property
    def is_binary(self) -> bool:
        return self.n_classes == 2

    @property
    def calibrated(self) -> bool:
        return self.calibrators is not None

    @classmethod
    def from_function(cls, function: Callable[[np.ndarray], np.ndarray], n_classes: int = 2,
                      name: str = 'oracle') -> 'ProbabilityModel':
        """Model around a known function; binary functions return P(class 1)"""
        labels = BINARY_LABELS if n_classes == 2 else JOINT_LABELS
        return cls(estimator=FunctionClassifier(function, n_classes), class_labels=labels,
                   algorithm=name, metadata={'oracle': True})

    def raw_proba(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(self.estimator.predict_proba(_as_matrix(features)), dtype=float)

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        probs = self.raw_proba(features)
        if self.is_binary:
            positive = probs[:, 1]
            if self.calibrators is not None:
                positive = self.calibrators[0].predict(positive)
            positive = np.clip(positive, self.floor, 1.0 - self.floor)
            return np.column_stack([1.0 - positive, positive])

        if self.calibrators is not None:
            probs = _normalize_rows(np.column_stack(
                [iso.predict(probs[:, k]) for k, iso in enumerate(self.calibrators)]
            ))
        return _normalize_rows(np.maximum(probs, self.floor))

    def predict_positive(self, features: np.ndarray) -> np.ndarray:
        """P(class 1 | x) for binary models"""
        if not self.is_binary:
            raise ValueError("predict_positive is only defined for binary models")
        return self.predict_proba(features)[:, 1]

    def provenance(self) -> Dict[str, Any]:
        record = {
            'algorithm': self.algorithm,
            'hyperparameters': dict(self.hyperparameters),
            'seed': self.seed,
            'calibrated': self.calibrated,
        }
        if 'cv_scores' in self.metadata:
            record['cv_scores'] = dict(self.metadata['cv_scores'])
        return record


def joint_labels(outcome: np.ndarray, group: np.ndarray) -> np.ndarray:
    return 2 * np.asarray(outcome, dtype=int) + np.asarray(group, dtype=int)


def outcome_marginal(joint_probs: np.ndarray) -> np.ndarray:
    """P(Y=1|x) from a joint (Y, G) probability table"""
    return joint_probs[:, 2] + joint_probs[:, 3]


def group_marginal(joint_probs: np.ndarray) -> np.ndarray:
    """P(G=1|x) from a joint (Y, G) probability table"""
    return joint_probs[:, 1] + joint_probs[:, 3]


# ---------------------------------------------------------------------------
# Fitting entry points
# ---------------------------------------------------------------------------

def _as_matrix(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    return features


def _check_inputs(features: np.ndarray, labels: np.ndarray, n_classes: int) -> Tuple[np.ndarray, np.ndarray]:
    features = _as_matrix(features)
    labels = np.asarray(labels)
    if features.shape[0] != labels.shape[0]:
        raise InsufficientData(f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
    if not np.isfinite(features).all():
        raise NonFiniteFeature("Features contain NaN or infinite values")
    if not np.isin(labels, np.arange(n_classes)).all():
        raise NonBinaryLabels(f"Labels must be integers in [0, {n_classes})")
    if labels.size < config.learner_config['min_rows']:
        raise InsufficientData(f"Need at least {config.learner_config['min_rows']} rows, got {labels.size}")
    if np.unique(labels).size < 2:
        raise SingleClassLabels("Labels contain a single class")
    return features, labels.astype(int)


def _build_estimator(learner: LearnerConfig, n_classes: int):
    if learner.algorithm == Algorithm.LOGISTIC:
        if n_classes == 2:
            return IRLSLogistic(learner.ridge, learner.max_iter, learner.tol)
        return MultinomialLogistic(n_classes, learner.ridge, learner.max_iter, learner.tol)
    if learner.algorithm == Algorithm.GBT:
        return BoostedBinary(learner) if n_classes == 2 else OneVsRestBoosting(n_classes, learner)
    if learner.algorithm == Algorithm.CONSTANT:
        return ConstantClassifier(n_classes)
    raise ValueError(f"No direct estimator for algorithm {learner.algorithm.value}")


def _fit_model(features: np.ndarray, labels: np.ndarray, learner: LearnerConfig,
               class_labels: Tuple[Any, ...]) -> ProbabilityModel:
    n_classes = len(class_labels)
    if learner.algorithm == Algorithm.CV_SELECT:
        return cv_select(features, labels, list(learner.candidates), learner.folds, learner.seed,
                         class_labels=class_labels)
    estimator = _build_estimator(learner, n_classes).fit(features, labels)
    return ProbabilityModel(
        estimator=estimator,
        class_labels=class_labels,
        algorithm=learner.algorithm.value,
        hyperparameters=learner.hyperparameters(),
        seed=learner.seed,
    )


def _fit_with_optional_calibration(features: np.ndarray, labels: np.ndarray, learner: LearnerConfig,
                                   class_labels: Tuple[Any, ...]) -> ProbabilityModel:
    if not learner.calibrate:
        return _fit_model(features, labels, learner, class_labels)

    fraction = config.estimator_config['calibration_fraction']
    counts = np.bincount(labels, minlength=len(class_labels))
    stratify = labels if counts[counts > 0].min() >= 2 else None
    fit_idx, holdout_idx = train_test_split(
        np.arange(labels.size), test_size=fraction, random_state=derive_seed(learner.seed, 1), stratify=stratify,
    )
    model = _fit_model(features[fit_idx], labels[fit_idx], replace(learner, calibrate=False), class_labels)
    return calibrate(model, features[holdout_idx], labels[holdout_idx])


def fit_binary(features: np.ndarray, labels: np.ndarray, learner: LearnerConfig) -> ProbabilityModel:
    """
    Fit P(label = 1 | x).

    logistic: IRLS with ridge penalty; gbt: boosted trees on log-loss; constant: class
    frequency; cv_select: discrete super learner over ``learner.candidates``.
    """
    features, labels = _check_inputs(features, labels, 2)
    return _fit_with_optional_calibration(features, labels, learner, BINARY_LABELS)


def fit_joint(features: np.ndarray, outcome: np.ndarray, group: np.ndarray, learner: LearnerConfig) -> ProbabilityModel:
    """Fit the four-class law of (Y, G) given x; class index is 2*y + g"""
    outcome = np.asarray(outcome)
    group = np.asarray(group)
    if not (np.isin(outcome, (0, 1)).all() and np.isin(group, (0, 1)).all()):
        raise NonBinaryLabels("Joint model needs binary outcome and group")
    labels = joint_labels(outcome, group)
    features, labels = _check_inputs(features, labels, 4)

    counts = np.bincount(labels, minlength=4)
    for k, count in enumerate(counts):
        if count == 0:
            message = f"Joint cell (y, g) = {JOINT_LABELS[k]} is empty in the training data"
            logger.warning(message)
            warnings.warn(message, MissingJointCell, stacklevel=2)
    return _fit_with_optional_calibration(features, labels, learner, JOINT_LABELS)


def calibrate(model: ProbabilityModel, features: np.ndarray, labels: np.ndarray) -> ProbabilityModel:
    """
    Isotonic recalibration on a holdout disjoint from the model's training rows.

    Binary models recalibrate the positive class only; multiclass models recalibrate each
    class and renormalize.
    """
    features = _as_matrix(features)
    labels = np.asarray(labels, dtype=int)
    minimum = config.estimator_config['min_calibration_rows']
    if labels.size < minimum:
        raise HoldoutTooSmall(f"Calibration holdout has {labels.size} rows, need at least {minimum}")

    raw = model.raw_proba(features)
    targets = [1] if model.is_binary else range(model.n_classes)
    calibrators = []
    for k in targets:
        iso = IsotonicRegression(y_min=0.0, y_max=1.0, increasing=True, out_of_bounds='clip')
        iso.fit(raw[:, k], (labels == k).astype(float))
        calibrators.append(iso)

    metadata = dict(model.metadata, calibration_rows=int(labels.size))
    return replace(model, calibrators=tuple(calibrators), metadata=metadata)


def cv_select(features: np.ndarray, labels: np.ndarray, candidates: Sequence[LearnerConfig], folds: int,
              seed: int, class_labels: Tuple[Any, ...] = BINARY_LABELS) -> ProbabilityModel:
    """
    Discrete super learner: the candidate with the lowest K-fold cross-validated log-loss
    is refit on all rows. Ties go to the earlier candidate; a candidate that fails on any
    fold is disqualified.
    """
    if folds < 2:
        raise ValueError(f"cv_select requires folds >= 2, got {folds}")
    if len(candidates) < 1:
        raise ValueError("cv_select needs at least one candidate")
    features = _as_matrix(features)
    labels = np.asarray(labels, dtype=int)
    n_classes = len(class_labels)

    counts = np.bincount(labels, minlength=n_classes)
    if counts[counts > 0].min() >= folds:
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    else:
        splitter = KFold(n_splits=folds, shuffle=True, random_state=seed)
    fold_indices = list(splitter.split(features, labels))

    scores: Dict[str, float] = {}
    best_index, best_score = None, np.inf
    for index, candidate in enumerate(candidates):
        name = f"{index}:{candidate.algorithm.value}"
        losses = []
        try:
            for train_idx, test_idx in fold_indices:
                model = _fit_model(features[train_idx], labels[train_idx], candidate, class_labels)
                probs = model.predict_proba(features[test_idx])
                losses.append(log_loss(labels[test_idx], probs, labels=list(range(n_classes))))
        except (FairnessInferenceError, ValueError) as e:
            logger.info("Candidate %s disqualified: %s", name, e)
            scores[name] = float('nan')
            continue
        scores[name] = float(np.mean(losses))
        if scores[name] < best_score:
            best_index, best_score = index, scores[name]

    if best_index is None:
        raise InsufficientData("Every cv_select candidate failed on at least one fold")

    chosen = _fit_model(features, labels, candidates[best_index], class_labels)
    logger.debug("cv_select chose %s (scores %s)", candidates[best_index].algorithm.value, scores)
    metadata = dict(chosen.metadata, cv_scores=scores, selected=candidates[best_index].algorithm.value)
    return replace(chosen, metadata=metadata)


def expected_calibration_error(labels: np.ndarray, probs: np.ndarray, n_bins: int = 10) -> float:
    """Weighted mean |observed - predicted| over equal-width probability bins"""
    labels = np.asarray(labels, dtype=float)
    probs = np.asarray(probs, dtype=float)
    bins = np.minimum((probs * n_bins).astype(int), n_bins - 1)
    error = 0.0
    for b in range(n_bins):
        mask = bins == b
        if mask.any():
            error += mask.mean() * abs(labels[mask].mean() - probs[mask].mean())
    return float(error)
