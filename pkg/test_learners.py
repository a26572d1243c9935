#!/usr/bin/env python3
"""
Tests for nuisance learners: logistic IRLS, boosted trees, joint models, calibration
and cross-validated selection
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.special import expit

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from src.analysis.learners import (
    Algorithm,
    BoostedBinary,
    LearnerConfig,
    ProbabilityModel,
    add_intercept,
    calibrate,
    cv_select,
    expected_calibration_error,
    fit_binary,
    fit_joint,
    group_marginal,
    logistic_gradient,
    logistic_loss,
    outcome_marginal,
)
from src.data.generators import DgpSpec, generate
from src.utils.errors import HoldoutTooSmall, MissingJointCell, NonFiniteFeature, SingleClassLabels
from src.utils.rng import make_generator

LOGISTIC = LearnerConfig(algorithm=Algorithm.LOGISTIC)
CONSTANT = LearnerConfig(algorithm=Algorithm.CONSTANT)


def logistic_data(n, coef, seed=0):
    rng = make_generator(seed)
    x = rng.normal(size=(n, len(coef)))
    y = (rng.random(n) < expit(x @ np.asarray(coef))).astype(int)
    return x, y


class TestLearnerConfig:
    def test_cv_select_needs_two_folds(self):
        with pytest.raises(ValueError):
            LearnerConfig(algorithm=Algorithm.CV_SELECT, folds=1)

    def test_rejects_bad_learning_rate(self):
        with pytest.raises(ValueError):
            LearnerConfig(algorithm=Algorithm.GBT, learning_rate=0.0)

    def test_named_cv_select_gets_default_library(self):
        learner = LearnerConfig.named('cv_select', seed=3)
        assert [c.algorithm.value for c in learner.candidates] == ['constant', 'logistic', 'gbt']
        assert all(c.seed == 3 for c in learner.candidates)


class TestBinaryFits:
    def test_constant_predicts_frequency(self):
        labels = np.array([1] * 3 + [0] * 7)
        model = fit_binary(np.zeros((10, 1)), labels, CONSTANT)
        np.testing.assert_allclose(model.predict_positive(np.ones((4, 1))), 0.3)

    def test_ridge_keeps_separable_fit_inside_unit_interval(self):
        x = np.linspace(-1, 1, 10).reshape(-1, 1)
        y = (x[:, 0] > 0).astype(int)
        probs = fit_binary(x, y, LOGISTIC).predict_positive(x)
        assert np.all(probs > 0) and np.all(probs < 1)
        assert probs[-1] > 0.99 and probs[0] < 0.01

    def test_logistic_recovers_coefficients(self):
        x, y = logistic_data(20000, [0.5] * 5, seed=1)
        model = fit_binary(x, y, LOGISTIC)
        coef = model.estimator.coef_
        assert abs(coef[0]) < 0.15
        np.testing.assert_allclose(coef[1:], 0.5, atol=0.15)

    def test_gradient_matches_finite_differences(self):
        rng = make_generator(4)
        for _ in range(5):
            design = add_intercept(rng.normal(size=(30, 3)))
            labels = (rng.random(30) < 0.5).astype(float)
            beta = rng.normal(size=4)
            analytic = logistic_gradient(beta, design, labels, 1e-3)
            numeric = np.zeros_like(beta)
            for j in range(beta.size):
                step = np.zeros_like(beta)
                step[j] = 1e-6
                numeric[j] = (logistic_loss(beta + step, design, labels, 1e-3)
                              - logistic_loss(beta - step, design, labels, 1e-3)) / 2e-6
            np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)

    def test_boosting_loss_never_increases(self):
        x, y = logistic_data(500, [1.0, -1.0], seed=2)
        booster = BoostedBinary(LearnerConfig(algorithm=Algorithm.GBT, n_estimators=50)).fit(x, y)
        assert np.all(np.diff(booster.train_loss_) <= 1e-10)

    def test_predictions_are_deterministic(self):
        x, y = logistic_data(300, [1.0, 0.5], seed=3)
        learner = LearnerConfig(algorithm=Algorithm.GBT, n_estimators=20, subsample=0.8, seed=9)
        first = fit_binary(x, y, learner).predict_proba(x)
        second = fit_binary(x, y, learner).predict_proba(x)
        np.testing.assert_array_equal(first, second)

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassLabels):
            fit_binary(np.zeros((12, 1)), np.ones(12), LOGISTIC)

    def test_non_finite_features_rejected(self):
        x = np.zeros((12, 1))
        x[3, 0] = np.inf
        with pytest.raises(NonFiniteFeature):
            fit_binary(x, np.arange(12) % 2, LOGISTIC)


class TestJointModel:
    def test_constant_joint_is_uniform_for_balanced_cells(self):
        y = np.array([0, 0, 1, 1] * 5)
        g = np.array([0, 1, 0, 1] * 5)
        model = fit_joint(np.zeros((20, 1)), y, g, CONSTANT)
        np.testing.assert_allclose(model.predict_proba(np.zeros((3, 1))), 0.25)

    @pytest.mark.parametrize('algorithm', ['logistic', 'gbt'])
    def test_outputs_lie_on_simplex(self, algorithm):
        data = generate(DgpSpec('setting3'), 600, make_generator(5))
        learner = LearnerConfig(algorithm=Algorithm(algorithm), n_estimators=30)
        probs = fit_joint(data.features, data.outcome, data.group, learner).predict_proba(data.features)
        assert probs.shape == (600, 4)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        for marginal in (outcome_marginal(probs), group_marginal(probs)):
            assert np.all((marginal >= 0) & (marginal <= 1))

    def test_marginal_matches_direct_model(self):
        data = generate(DgpSpec('setting1'), 4000, make_generator(6))
        joint = fit_joint(data.features, data.outcome, data.group, LOGISTIC)
        direct = fit_binary(data.features, data.group, LOGISTIC)
        implied = group_marginal(joint.predict_proba(data.features))
        assert np.mean(np.abs(implied - direct.predict_positive(data.features))) < 0.03

    def test_missing_cell_warns(self):
        y = np.array([0, 1] * 10)
        g = np.array([0, 0, 1, 1] * 5)
        y[(g == 1)] = 0
        with pytest.warns(MissingJointCell):
            model = fit_joint(np.arange(20, dtype=float).reshape(-1, 1), y, g, CONSTANT)
        probs = model.predict_proba(np.zeros((1, 1)))
        assert probs[0, 3] <= 1e-5

    def test_logistic_joint_keeps_four_columns_when_a_cell_is_missing(self):
        rng = make_generator(7)
        x = rng.normal(size=(200, 1))
        g = (rng.random(200) < expit(x[:, 0])).astype(int)
        y = np.where(g == 1, 0, (rng.random(200) < 0.5).astype(int))
        with pytest.warns(MissingJointCell):
            model = fit_joint(x, y, g, LOGISTIC)
        probs = model.predict_proba(x)
        assert probs.shape == (200, 4)
        assert probs[:, 3].max() <= 1e-5
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_logistic_joint_is_saturated_on_binary_covariate(self):
        rng = make_generator(8)
        x = (rng.random(4000) < 0.5).astype(float).reshape(-1, 1)
        labels = rng.integers(0, 4, 4000) * (x[:, 0] == 1) + rng.choice(4, 4000, p=[0.1, 0.2, 0.3, 0.4]) * (x[:, 0] == 0)
        probs = fit_joint(x, labels // 2, labels % 2, LOGISTIC).predict_proba(np.array([[0.0], [1.0]]))
        for row, value in enumerate((0.0, 1.0)):
            empirical = np.bincount(labels[x[:, 0] == value], minlength=4) / np.sum(x[:, 0] == value)
            np.testing.assert_allclose(probs[row], empirical, atol=1e-3)


class TestCalibration:
    def test_constant_overconfident_model_is_recalibrated(self):
        model = ProbabilityModel.from_function(lambda x: np.full(x.shape[0], 0.9))
        labels = np.arange(100) % 2
        calibrated = calibrate(model, np.zeros((100, 1)), labels)
        np.testing.assert_allclose(calibrated.predict_positive(np.zeros((5, 1))), 0.5)
        assert calibrated.calibrated

    def test_well_calibrated_model_is_unchanged(self):
        levels = np.repeat([0.2, 0.5, 0.8], 100)
        labels = np.concatenate([np.arange(100) < 20, np.arange(100) < 50, np.arange(100) < 80]).astype(int)
        model = ProbabilityModel.from_function(lambda x: x[:, 0])
        calibrated = calibrate(model, levels.reshape(-1, 1), labels)
        np.testing.assert_allclose(calibrated.predict_positive(np.array([[0.2], [0.5], [0.8]])),
                                   [0.2, 0.5, 0.8], atol=1e-6)

    def test_small_holdout_rejected(self):
        model = ProbabilityModel.from_function(lambda x: np.full(x.shape[0], 0.5))
        with pytest.raises(HoldoutTooSmall):
            calibrate(model, np.zeros((20, 1)), np.arange(20) % 2)

    def test_calibration_reduces_reliability_gap(self):
        train = generate(DgpSpec('setting1'), 2000, make_generator(7))
        fresh = generate(DgpSpec('setting1'), 2000, make_generator(8))
        holdout = generate(DgpSpec('setting1'), 2000, make_generator(9))
        learner = LearnerConfig(algorithm=Algorithm.GBT, n_estimators=200, max_depth=5, learning_rate=0.3)
        model = fit_binary(train.features, train.outcome, learner)
        calibrated = calibrate(model, holdout.features, holdout.outcome)
        before = expected_calibration_error(fresh.outcome, model.predict_positive(fresh.features))
        after = expected_calibration_error(fresh.outcome, calibrated.predict_positive(fresh.features))
        assert after <= before

    def test_calibrate_flag_fits_on_split(self):
        x, y = logistic_data(400, [1.0], seed=10)
        model = fit_binary(x, y, LearnerConfig(calibrate=True))
        assert model.calibrated
        assert model.metadata['calibration_rows'] == 100


class TestCrossValidatedSelection:
    def test_logistic_beats_constant_on_linear_data(self):
        x, y = logistic_data(1000, [2.0, -1.0], seed=11)
        model = cv_select(x, y, [CONSTANT, LOGISTIC], folds=5, seed=0)
        assert model.metadata['selected'] == 'logistic'
        assert set(model.metadata['cv_scores']) == {'0:constant', '1:logistic'}

    def test_single_candidate_is_refit(self):
        x, y = logistic_data(200, [1.0], seed=12)
        model = cv_select(x, y, [LOGISTIC], folds=3, seed=0)
        np.testing.assert_allclose(model.predict_proba(x), fit_binary(x, y, LOGISTIC).predict_proba(x))

    def test_boosting_selected_for_quadratic_truth(self):
        data = generate(DgpSpec('setting3'), 4000, make_generator(13))
        gbt = LearnerConfig(algorithm=Algorithm.GBT)
        model = cv_select(data.features, data.outcome, [LOGISTIC, gbt], folds=3, seed=0)
        assert model.metadata['selected'] == 'gbt'


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
