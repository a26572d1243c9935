#!/usr/bin/env python3
"""
Tests for core data types, sample splitting, Wald intervals and shared utilities
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from src.analysis.inference import EstimateResult, MetricId, wald_interval
from src.data.dataset import Dataset, split_sample
from src.utils.config import config, expand_grid, load_study_config
from src.utils.errors import ConfigError, DegenerateSplit, InsufficientData, InvalidDataset
from src.utils.rng import derive_seed, make_generator
from src.utils.security import convert_numpy, dumps_deterministic, sanitize_filename


def make_dataset(n=10, d=2, seed=0):
    rng = np.random.default_rng(seed)
    group = np.arange(n) % 2
    outcome = (np.arange(n) // 2) % 2
    return Dataset(
        features=rng.normal(size=(n, d)),
        group=group,
        outcome=outcome,
        feature_names=tuple(f'x{j}' for j in range(d)),
    )


class TestDataset:
    def test_arrays_are_read_only(self):
        data = make_dataset()
        with pytest.raises(ValueError):
            data.features[0, 0] = 1.0
        assert data.group.dtype == np.int8

    def test_rejects_non_binary_group(self):
        with pytest.raises(InvalidDataset):
            Dataset(np.zeros((3, 1)), [0, 1, 2], [0, 1, 0], ('x',))

    def test_rejects_length_mismatch(self):
        with pytest.raises(InvalidDataset):
            Dataset(np.zeros((3, 1)), [0, 1], [0, 1, 0], ('x',))

    def test_rejects_missing_values(self):
        with pytest.raises(InvalidDataset):
            Dataset(np.array([[0.0], [np.nan]]), [0, 1], [0, 1], ('x',))

    def test_source_columns_group_encoded_columns(self):
        data = Dataset(np.zeros((2, 3)), [0, 1], [0, 1], ('age', 'job=a', 'job=b'),
                       source_columns=('age', 'job', 'job'))
        assert data.variables == ('age', 'job')
        assert list(data.columns_for(['job'])) == [1, 2]

    def test_frame_round_trip_keeps_labels(self):
        data = make_dataset()
        again = Dataset.from_frame(data.to_frame())
        np.testing.assert_array_equal(again.features, data.features)
        np.testing.assert_array_equal(again.group, data.group)


class TestSplitSample:
    def test_partition_of_rows(self):
        data = make_dataset(n=10)
        split = split_sample(data, 0.5, seed=7)
        assert split.train.n == 5 and split.eval.n == 5
        union = np.sort(np.concatenate([split.train_index, split.eval_index]))
        np.testing.assert_array_equal(union, np.arange(10))

    def test_deterministic_under_seed(self):
        data = make_dataset(n=40)
        first = split_sample(data, 0.6, seed=11)
        second = split_sample(data, 0.6, seed=11)
        np.testing.assert_array_equal(first.train_index, second.train_index)

    def test_floor_rule_sizes(self):
        n = 48842
        data = Dataset(np.zeros((n, 1)), np.arange(n) % 2, np.arange(n) % 2, ('x',))
        split = split_sample(data, 0.6, seed=1)
        assert (split.train.n, split.eval.n) == (29305, 19537)

    def test_rejects_bad_ratio(self):
        with pytest.raises(ValueError):
            split_sample(make_dataset(), 1.0, seed=0)

    def test_too_small(self):
        with pytest.raises(DegenerateSplit):
            split_sample(make_dataset(n=3), 0.5, seed=0)

    def test_single_group_fails(self):
        data = Dataset(np.zeros((20, 1)), np.zeros(20), np.arange(20) % 2, ('x',))
        with pytest.raises(DegenerateSplit):
            split_sample(data, 0.5, seed=0)

    def test_outcome_stratification_check(self):
        data = Dataset(np.zeros((20, 1)), np.arange(20) % 2, np.zeros(20), ('x',))
        split_sample(data, 0.5, seed=0)
        with pytest.raises(DegenerateSplit):
            split_sample(data, 0.5, seed=0, stratify_outcome=True)


class TestWaldInterval:
    def test_zero_variance(self):
        assert wald_interval(0.0, np.zeros(10)) == (0.0, 0.0, 0.0)

    def test_plus_minus_one_sequence(self):
        eif = np.tile([-1.0, 1.0], 100)
        low, high, stderr = wald_interval(0.0, eif, 0.95)
        expected = np.std(eif, ddof=1) / np.sqrt(200)
        assert stderr == pytest.approx(expected)
        assert stderr == pytest.approx(0.0709, abs=1e-4)
        assert high == pytest.approx(1.959964 * expected, rel=1e-6)
        assert low == pytest.approx(-high)

    def test_needs_two_values(self):
        with pytest.raises(InsufficientData):
            wald_interval(0.0, np.array([1.0]))

    def test_width_halves_when_sample_quadruples(self):
        rng = make_generator(3)
        widths = {}
        for m in (400, 1600):
            runs = [wald_interval(0.0, rng.normal(size=m))[2] for _ in range(200)]
            widths[m] = np.mean(runs)
        assert widths[1600] == pytest.approx(widths[400] / 2, rel=0.2)


class TestEstimateResult:
    def test_from_eif_copies_and_freezes(self):
        eif = np.array([0.5, -0.5, 1.0, -1.0])
        result = EstimateResult.from_eif(0.2, eif, 0.95, MetricId.PARITY)
        eif[0] = 10.0
        assert result.eif_values[0] == 0.5
        assert not result.eif_values.flags.writeable
        assert result.ci_low <= result.point <= result.ci_high
        assert result.covers(0.2)
        assert result.to_record()['metric'] == 'parity'


class TestUtilities:
    def test_streams_are_reproducible_and_distinct(self):
        a = make_generator(5, 1, 2).random(3)
        b = make_generator(5, 1, 2).random(3)
        c = make_generator(5, 2, 1).random(3)
        np.testing.assert_array_equal(a, b)
        assert not np.allclose(a, c)
        assert derive_seed(5, 1) == derive_seed(5, 1)
        assert 0 <= derive_seed(5, 1) < 2 ** 31

    def test_convert_numpy_handles_nested_values(self):
        payload = {'a': np.float64(np.nan), 'b': np.arange(2), 'c': (np.int64(3), Path('x'))}
        assert convert_numpy(payload) == {'a': None, 'b': [0, 1], 'c': [3, 'x']}

    def test_dumps_is_key_sorted(self):
        text = dumps_deterministic({'b': 1, 'a': 2})
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith('\n')

    def test_sanitize_filename(self):
        assert sanitize_filename('../../etc/passwd') == 'passwd'

    def test_expand_grid_is_cartesian(self):
        cells = expand_grid({'dgp': ['setting1', 'setting2'], 'metric': ['parity'], 'n': [100, 200]})
        assert len(cells) == 4
        assert cells[0] == {'dgp': 'setting1', 'metric': 'parity', 'estimator': {}, 'n': 100}

    def test_load_study_config(self, tmp_path):
        path = tmp_path / 'study.json'
        path.write_text(json.dumps({'replicates': 3, 'grid': {'dgp': ['setting1'], 'metric': ['parity'], 'n': [50]}}))
        study = load_study_config(path)
        assert study['replicates'] == 3
        assert study['master_seed'] == config.runtime_config['seed']
        assert len(study['cells']) == 1

    def test_load_study_config_requires_axes(self, tmp_path):
        path = tmp_path / 'study.json'
        path.write_text(json.dumps({'grid': {'dgp': ['setting1']}}))
        with pytest.raises(ConfigError):
            load_study_config(path)

    def test_config_defaults(self):
        assert config.estimator_config['threshold'] == 0.5
        assert config.get_threads() >= 1
        assert config.as_dict()['learner']['candidates'] == ['constant', 'logistic', 'gbt']

    def test_save_config_writes_resolved_defaults(self, tmp_path, monkeypatch):
        monkeypatch.setattr(config, 'output_dir', tmp_path / 'outputs')
        config.validate_directories()
        assert (tmp_path / 'outputs' / 'studies').is_dir()
        saved = json.loads(config.save_config().read_text())
        assert saved['estimator']['propensity_clip'] == 1e-3
        assert saved['directories']['output'] == str(tmp_path / 'outputs')


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
