#!/usr/bin/env python3
"""
Tests for CSV loading and the command-line runs (estimate / simulate / importance)
"""

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from src.cli import RunConfig, main, parse_args
from src.data.generators import DgpSpec, generate
from src.data.loader import CsvSchema, DatasetLoader, load_csv
from src.utils.errors import ConfigError, EmptyAfterCleaning, NonBinaryAfterMapping, SchemaMismatch
from src.utils.rng import make_generator

RAW_DIR = Path(__file__).parent / "data" / "raw"
TOY_CSV = RAW_DIR / "toy_income.csv"
TOY_SCHEMA = RAW_DIR / "toy_income_schema.json"


def write_simulated_csv(directory, n=800, seed=1, all_group_zero=False):
    frame = generate(DgpSpec('setting1'), n, make_generator(seed)).to_frame()
    if all_group_zero:
        frame['G'] = 0
    csv_path = directory / "simulated.csv"
    frame.to_csv(csv_path, index=False)
    schema_path = directory / "simulated_schema.json"
    schema_path.write_text(json.dumps({'outcome': 'Y', 'group': 'G'}))
    return csv_path, schema_path


def read_report(directory):
    return json.loads((directory / "report.json").read_text())


class TestCsvLoading:
    def test_toy_income_file(self):
        loader = DatasetLoader()
        data = loader.load(TOY_CSV, TOY_SCHEMA)
        assert (data.n, data.d) == (11, 4)
        assert data.feature_names == ('age', 'workclass=Self-emp', 'workclass=State-gov', 'hours')
        assert data.variables == ('age', 'workclass', 'hours')
        assert int(data.outcome.sum()) == 7
        assert int(data.group.sum()) == 7
        assert loader.history[-1]['rows_dropped'] == 1
        assert loader.metadata()['datasets_loaded'] == 1

    def test_missing_column(self):
        schema = {'outcome': 'income', 'group': 'race'}
        with pytest.raises(SchemaMismatch):
            load_csv(TOY_CSV, schema)

    def test_unmapped_label_value(self):
        schema = {
            'outcome': {'column': 'income', 'positive': ['>50K'], 'negative': ['<=50']},
            'group': {'column': 'sex', 'positive': ['Male']},
            'categorical': ['workclass'],
        }
        with pytest.raises(NonBinaryAfterMapping):
            load_csv(TOY_CSV, schema)

    def test_label_column_needs_mapping(self):
        schema = {'outcome': 'income', 'group': {'column': 'sex', 'positive': ['Male']}}
        with pytest.raises(NonBinaryAfterMapping):
            load_csv(TOY_CSV, schema)

    def test_text_covariate_must_be_declared_categorical(self):
        schema = CsvSchema.from_file(TOY_SCHEMA)
        raw = {
            'outcome': {'column': 'income', 'positive': list(schema.outcome.positive)},
            'group': {'column': 'sex', 'positive': ['Male']},
            'categorical': [],
        }
        with pytest.raises(SchemaMismatch):
            load_csv(TOY_CSV, raw)

    def test_numeric_label_with_missing_cell(self, tmp_path):
        csv_path = tmp_path / "law.csv"
        csv_path.write_text(
            "lsat,fam_inc,tier,race,pass_bar\n"
            "38,3,2,White,1\n"
            "41,4,3,Black,0\n"
            "35,2,1,White,\n"
            "44,5,4,White,1\n"
            "30,1,2,Black,0\n"
            "39,3,3,White,1\n"
        )
        loader = DatasetLoader()
        data = loader.load(csv_path, RAW_DIR / "law_schema.json")
        assert data.n == 5
        np.testing.assert_array_equal(data.outcome, [1, 0, 1, 0, 1])
        np.testing.assert_array_equal(data.group, [1, 0, 1, 0, 1])
        assert loader.history[-1]['rows_dropped'] == 1

    def test_no_complete_rows(self):
        frame = pd.DataFrame({'x': [np.nan, np.nan], 'G': [0, 1], 'Y': [1, 0]})
        with pytest.raises(EmptyAfterCleaning):
            DatasetLoader().to_dataset(frame, CsvSchema.from_dict({'outcome': 'Y', 'group': 'G'}))


class TestRunConfig:
    def test_default_split_ratios(self, tmp_path):
        csv_path, schema_path = write_simulated_csv(tmp_path, n=50)
        real = parse_args(['--command', 'estimate', '--input', str(csv_path), '--schema', str(schema_path)])
        simulated = parse_args(['--command', 'estimate', '--dgp', 'setting1', '--n', '100'])
        assert real.ratio == 0.6
        assert simulated.ratio == 0.5
        assert real.metrics == ('parity', 'prob_parity', 'opportunity', 'prob_opportunity', 'cmi')
        assert real.learner == 'cv_select'

    def test_metric_list_is_parsed(self):
        run_config = parse_args(['--command', 'simulate', '--dgp', 'setting2', '--n', '100',
                                 '--metrics', 'parity, cmi_knn'])
        assert run_config.metrics == ('parity', 'cmi_knn')

    def test_validation(self):
        with pytest.raises(ConfigError):
            RunConfig(command='estimate', dgp='setting1', n=100, metrics=('fairness',)).validate()
        with pytest.raises(ConfigError):
            RunConfig(command='importance', dgp='setting1', n=100, metrics=('parity', 'cmi')).validate()
        with pytest.raises(ConfigError):
            RunConfig(command='estimate').validate()


class TestEstimateCommand:
    def test_simulated_dataset_run(self, tmp_path):
        status = main(['--command', 'estimate', '--dgp', 'setting1', '--n', '800', '--seed', '3',
                       '--metrics', 'parity,prob_parity,cmi,cmi_knn,model_parity', '--output', str(tmp_path)])
        assert status == 0
        report = read_report(tmp_path)
        assert report['status'] == 'ok'
        assert [r['name'] for r in report['results']] == ['parity', 'prob_parity', 'cmi', 'cmi_knn', 'model_parity']
        assert report['data']['n_eval'] == 400
        parity = report['results'][0]
        assert parity['ci_low'] <= parity['point'] <= parity['ci_high']
        outcome_model = parity['metadata']['learners']['outcome_model']
        assert set(outcome_model['cv_scores']) == {'0:constant', '1:logistic', '2:gbt'}

        table = pd.read_csv(tmp_path / "estimates.csv")
        assert len(table) == 5
        assert (table['seed'] == 3).all()
        assert (tmp_path / "metadata.json").exists()

    def test_csv_run_is_byte_identical_on_rerun(self, tmp_path):
        csv_path, schema_path = write_simulated_csv(tmp_path)
        outputs = []
        for name in ('first', 'second'):
            output = tmp_path / name
            status = main(['--command', 'estimate', '--input', str(csv_path), '--schema', str(schema_path),
                           '--metrics', 'parity,prob_opportunity,cmi', '--learner', 'logistic', '--seed', '5',
                           '--output', str(output)])
            assert status == 0
            outputs.append(output)
        first, second = (o / "estimates.csv" for o in outputs)
        assert first.read_bytes() == second.read_bytes()
        assert read_report(outputs[0])['results'] == read_report(outputs[1])['results']
        assert read_report(outputs[0])['data']['n_train'] == 480

    def test_single_group_fails_with_report(self, tmp_path):
        csv_path, schema_path = write_simulated_csv(tmp_path, n=100, all_group_zero=True)
        output = tmp_path / "out"
        status = main(['--command', 'estimate', '--input', str(csv_path), '--schema', str(schema_path),
                       '--output', str(output)])
        assert status != 0
        report = read_report(output)
        assert report['status'] == 'failed'
        assert report['error']['type'] == 'EmptyGroup'
        assert not (output / "estimates.csv").exists()

    def test_invalid_config_is_reported(self, tmp_path):
        status = main(['--command', 'estimate', '--dgp', 'setting1', '--n', '100', '--level', '1.5',
                       '--output', str(tmp_path)])
        assert status == 1
        assert read_report(tmp_path)['error']['type'] == 'ConfigError'


class TestOtherCommands:
    def test_simulate_small_grid(self, tmp_path):
        status = main(['--command', 'simulate', '--dgp', 'setting2', '--n', '200', '--metrics', 'parity',
                       '--replicates', '2', '--n-mc', '100000', '--output', str(tmp_path)])
        assert status == 0
        coverage = pd.read_csv(tmp_path / "coverage.csv")
        assert list(coverage['replicates']) == [2]
        assert coverage['coverage'].between(0, 1).all()
        replicates = pd.read_csv(tmp_path / "series" / "replicates.csv")
        assert len(replicates) == 2
        assert (tmp_path / "series" / "naive_contrast.csv").exists()
        assert read_report(tmp_path)['study']['replicates'] == 2

    def test_simulate_from_study_file(self, tmp_path):
        study = tmp_path / "study.json"
        study.write_text(json.dumps({
            'replicates': 1, 'n_mc': 100000,
            'grid': {'dgp': ['setting1', 'cmi_sim:c=2'], 'metric': ['parity', 'cmi_knn'], 'n': [200]},
        }))
        status = main(['--command', 'simulate', '--input', str(study), '--output', str(tmp_path / "out")])
        assert status == 0
        coverage = pd.read_csv(tmp_path / "out" / "coverage.csv")
        assert list(coverage['dgp']) == ['setting1', 'setting1', 'cmi_sim:c=2.0', 'cmi_sim:c=2.0']

    def test_importance_run(self, tmp_path):
        status = main(['--command', 'importance', '--dgp', 'setting1', '--n', '600', '--metrics', 'parity',
                       '--perms', '3', '--learner', 'logistic', '--output', str(tmp_path)])
        assert status == 0
        importance = pd.read_csv(tmp_path / "importance.csv")
        assert sorted(importance['variable']) == ['X1', 'X2', 'X3', 'X4', 'X5']
        summary = read_report(tmp_path)['summary']
        assert importance['importance'].sum() == pytest.approx(summary['full_value'] - summary['empty_value'])
        permutations = pd.read_csv(tmp_path / "series" / "importance_permutations.csv")
        assert len(permutations) == 3


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
