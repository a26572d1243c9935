#!/usr/bin/env python3
"""
Tests for permutation-sampled Shapley importance of covariates
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from src.analysis.estimators import MetricSpec
from src.analysis.importance import shapley_importance
from src.analysis.inference import MetricId
from src.data.dataset import Dataset, split_sample
from src.data.generators import DgpSpec, generate
from src.utils.errors import InsufficientData
from src.utils.rng import make_generator


@pytest.fixture(scope='module')
def setting1_split():
    return split_sample(generate(DgpSpec('setting1'), 1000, make_generator(1)), 0.5, seed=2)


def test_contributions_add_up_to_full_minus_empty(setting1_split):
    report = shapley_importance(setting1_split, MetricSpec(), n_perms=6, seed=3, threads=1)
    assert report.variables == ('X1', 'X2', 'X3', 'X4', 'X5')
    assert report.n_used == 6 and not report.diagnostics
    np.testing.assert_allclose(report.permutation_contributions.sum(axis=1), report.full_value - report.empty_value)
    assert report.contributions.sum() == pytest.approx(report.full_value - report.empty_value)
    assert report.metric_id == MetricId.PARITY


def test_single_variable_gets_everything(setting1_split):
    split = split_sample(setting1_split.train.select_columns(np.array([1])), 0.5, seed=4)
    report = shapley_importance(split, MetricSpec(), n_perms=3, seed=0, threads=1)
    assert report.contributions[0] == pytest.approx(report.full_value - report.empty_value)
    np.testing.assert_allclose(report.stderr, 0.0, atol=1e-12)


def test_pure_noise_outcome_gets_no_importance():
    rng = make_generator(5)
    data = Dataset(rng.normal(size=(400, 3)), rng.random(400) < 0.5, rng.random(400) < 0.1, ('a', 'b', 'c'))
    report = shapley_importance(split_sample(data, 0.5, seed=6), MetricSpec(), n_perms=4, seed=0, threads=1)
    np.testing.assert_array_equal(report.contributions, 0.0)
    assert report.full_value == 0.0


def test_reproducible_for_fixed_seed(setting1_split):
    first = shapley_importance(setting1_split, MetricSpec(kind='probabilistic'), n_perms=4, seed=7, threads=1)
    second = shapley_importance(setting1_split, MetricSpec(kind='probabilistic'), n_perms=4, seed=7, threads=2)
    np.testing.assert_array_equal(first.contributions, second.contributions)


def test_encoded_columns_move_together():
    rng = make_generator(8)
    job = rng.integers(0, 3, 600)
    group = (rng.random(600) < 0.3 + 0.2 * (job == 2)).astype(int)
    outcome = (rng.random(600) < 0.2 + 0.6 * (job == 2)).astype(int)
    features = np.column_stack([rng.normal(size=600), job == 1, job == 2]).astype(float)
    data = Dataset(features, group, outcome, ('age', 'job=1', 'job=2'), source_columns=('age', 'job', 'job'))
    report = shapley_importance(split_sample(data, 0.5, seed=9), MetricSpec(), n_perms=4, seed=1, threads=1)
    frame = report.to_frame()
    assert list(report.variables) == ['age', 'job']
    assert frame['variable'].iloc[0] == 'job'
    assert list(frame.columns) == ['variable', 'importance', 'stderr', 'abs_importance']


def test_failed_full_set_is_fatal():
    rng = make_generator(10)
    # Y=1 only occurs in group 1
    group = np.arange(40) % 2
    outcome = np.zeros(40, dtype=int)
    outcome[[1, 3]] = 1
    data = Dataset(rng.normal(size=(40, 2)), group, outcome, ('a', 'b'))
    split = split_sample(data, 0.5, seed=0)
    with pytest.raises(InsufficientData):
        shapley_importance(split, MetricSpec(metric='opportunity'), n_perms=2, threads=1)


def test_rejects_zero_permutations(setting1_split):
    with pytest.raises(ValueError):
        shapley_importance(setting1_split, MetricSpec(), n_perms=0)


@pytest.mark.slow
def test_duplicated_column_shares_credit_equally():
    data = generate(DgpSpec('setting1'), 2000, make_generator(11))
    x = data.features
    doubled = Dataset(np.column_stack([x[:, :3], x[:, 2]]), data.group, data.outcome, ('X1', 'X2', 'X3', 'X3copy'))
    report = shapley_importance(split_sample(doubled, 0.5, seed=12), MetricSpec(), n_perms=200, seed=13, threads=4)
    gap = abs(report.contributions[2] - report.contributions[3])
    assert gap <= 3 * (report.stderr[2] + report.stderr[3]) + 1e-9


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
