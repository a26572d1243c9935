"""
Command-line front end.

    python run_fairness_analysis.py --command estimate --input adult.csv --schema adult_schema.json
    python run_fairness_analysis.py --command simulate --input study.json --threads 4
    python run_fairness_analysis.py --command importance --input adult.csv --schema adult_schema.json --perms 20

Every run writes ``report.json`` (status, resolved config, results) plus flat CSV tables
into ``--output``; a failed run still writes a report marked ``"status": "failed"``.
"""

import argparse
import logging
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from .analysis.coverage import StudyCell, run_coverage_study
from .analysis.estimators import (
    CmiConfig,
    CmiMode,
    MetricSpec,
    estimate_cmi_knn,
    estimate_cmi_tl,
    estimate_metric,
    model_fairness_estimate,
)
from .analysis.importance import shapley_importance
from .analysis.inference import MetricId
from .analysis.learners import Algorithm, LearnerConfig, fit_binary
from .data.dataset import Dataset, split_sample
from .data.generators import DgpSpec, generate
from .data.loader import DatasetLoader
from .reporting.writer import ReportWriter, failure_payload
from .utils.config import config, expand_grid, load_study_config
from .utils.errors import ConfigError, EmptyGroup
from .utils.rng import derive_seed

logger = logging.getLogger(__name__)

ESTIMATE_METRICS = ('parity', 'prob_parity', 'opportunity', 'prob_opportunity', 'cmi')
EXTRA_METRICS = ('cmi_separate', 'cmi_knn', 'model_parity')
FAIRNESS_METRICS = ('parity', 'prob_parity', 'opportunity', 'prob_opportunity')


class Command(str, Enum):
    ESTIMATE = 'estimate'
    SIMULATE = 'simulate'
    IMPORTANCE = 'importance'


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs; ``validate`` checks paths and ranges"""
    command: Command
    input: Optional[Path] = None
    schema: Optional[Path] = None
    dgp: Optional[str] = None
    n: Optional[int] = None
    metrics: Tuple[str, ...] = ()
    split_ratio: Optional[float] = None
    seed: int = config.runtime_config['seed']
    level: float = config.estimator_config['level']
    learner: str = Algorithm.CV_SELECT.value
    threshold: float = config.estimator_config['threshold']
    threads: int = field(default_factory=config.get_threads)
    output: Path = field(default_factory=lambda: config.output_dir / "reports")
    perms: int = config.simulation_config['shapley_permutations']
    replicates: int = config.simulation_config['replicates']
    n_mc: int = config.simulation_config['n_mc']
    verbose: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'command', Command(self.command))
        if not self.metrics:
            default = ESTIMATE_METRICS if self.command == Command.ESTIMATE else ('parity',)
            object.__setattr__(self, 'metrics', default)
        object.__setattr__(self, 'metrics', tuple(self.metrics))

    @property
    def ratio(self) -> float:
        if self.split_ratio is not None:
            return self.split_ratio
        uses_real_data = self.input is not None and self.command != Command.SIMULATE
        key = 'real_data_ratio' if uses_real_data else 'simulation_ratio'
        return config.split_config[key]

    def validate(self):
        if not 0.0 < self.ratio < 1.0:
            raise ConfigError(f"--split-ratio must lie in (0, 1), got {self.ratio}")
        if not 0.0 < self.level < 1.0:
            raise ConfigError(f"--level must lie in (0, 1), got {self.level}")
        if self.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {self.threads}")
        if self.learner not in {a.value for a in Algorithm}:
            raise ConfigError(f"Unknown learner {self.learner!r}")
        known = set(ESTIMATE_METRICS) | set(EXTRA_METRICS)
        unknown = [m for m in self.metrics if m not in known]
        if unknown:
            raise ConfigError(f"Unknown metrics {unknown}; choose from {sorted(known)}")
        for path in (self.input, self.schema):
            if path is not None and not Path(path).exists():
                raise ConfigError(f"Path does not exist: {path}")

        if self.command == Command.SIMULATE:
            if self.input is None and (self.dgp is None or self.n is None):
                raise ConfigError("simulate needs a study file (--input) or --dgp with --n")
        elif self.input is None and (self.dgp is None or self.n is None):
            raise ConfigError(f"{self.command.value} needs --input and --schema, or --dgp with --n")
        elif self.input is not None and self.schema is None:
            raise ConfigError(f"{self.command.value} on a CSV needs --schema")
        if self.command == Command.IMPORTANCE:
            if len(self.metrics) != 1 or self.metrics[0] not in FAIRNESS_METRICS:
                raise ConfigError(f"importance takes exactly one metric from {FAIRNESS_METRICS}")
            if self.perms < 1:
                raise ConfigError(f"--perms must be >= 1, got {self.perms}")

    def to_dict(self) -> Dict[str, Any]:
        resolved = asdict(self)
        resolved['command'] = self.command.value
        resolved['split_ratio'] = self.ratio
        for key in ('input', 'schema', 'output'):
            resolved[key] = None if resolved[key] is None else str(resolved[key])
        return resolved


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Inference for data-fairness metrics with targeted estimating equations",
    )
    parser.add_argument('--command', required=True, choices=[c.value for c in Command])
    parser.add_argument('--input', type=Path, help="CSV dataset, or study JSON for simulate")
    parser.add_argument('--schema', type=Path, help="JSON schema naming outcome/group columns")
    parser.add_argument('--dgp', help="simulated process, e.g. setting1 or cmi_sim:c=2")
    parser.add_argument('--n', type=int, help="sample size for --dgp")
    parser.add_argument('--metrics', help="comma-separated metric names")
    parser.add_argument('--split-ratio', type=float, help="training share (0.6 real data, 0.5 simulations)")
    parser.add_argument('--seed', type=int, default=config.runtime_config['seed'])
    parser.add_argument('--level', type=float, default=config.estimator_config['level'])
    parser.add_argument('--learner', default=Algorithm.CV_SELECT.value, choices=[a.value for a in Algorithm])
    parser.add_argument('--threshold', type=float, default=config.estimator_config['threshold'])
    parser.add_argument('--threads', type=int, default=config.get_threads(),
                        help="worker count (default from FAIRTL_THREADS)")
    parser.add_argument('--output', type=Path, default=config.output_dir / "reports")
    parser.add_argument('--perms', type=int, default=config.simulation_config['shapley_permutations'])
    parser.add_argument('--replicates', type=int, default=config.simulation_config['replicates'])
    parser.add_argument('--n-mc', type=int, default=config.simulation_config['n_mc'])
    parser.add_argument('--verbose', action='store_true')
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    metrics = tuple(m.strip() for m in args.metrics.split(',') if m.strip()) if args.metrics else ()
    return RunConfig(
        command=args.command,
        input=args.input,
        schema=args.schema,
        dgp=args.dgp,
        n=args.n,
        metrics=metrics,
        split_ratio=args.split_ratio,
        seed=args.seed,
        level=args.level,
        learner=args.learner,
        threshold=args.threshold,
        threads=args.threads,
        output=args.output,
        perms=args.perms,
        replicates=args.replicates,
        n_mc=args.n_mc,
        verbose=args.verbose,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _load_data(run_config: RunConfig) -> Tuple[Dataset, Dict[str, Any]]:
    if run_config.input is not None:
        loader = DatasetLoader()
        data = loader.load(run_config.input, run_config.schema)
        return data, loader.history[-1]
    spec = DgpSpec.parse(run_config.dgp, seed=run_config.seed)
    data = generate(spec, run_config.n)
    return data, {'source': spec.label, 'n': data.n, 'columns': data.d}


def _learner(run_config: RunConfig, **overrides) -> LearnerConfig:
    return LearnerConfig.named(run_config.learner, seed=derive_seed(run_config.seed, 1), **overrides)


def _estimate_one(name: str, split, run_config: RunConfig) -> Dict[str, Any]:
    learner = _learner(run_config)
    if name.startswith('cmi'):
        if name == 'cmi_knn':
            data = split.eval
            return {'name': name, 'metric': MetricId.CMI.value, 'point': estimate_cmi_knn(data), 'n_eval': data.n}
        mode = CmiMode.SEPARATE if name == 'cmi_separate' else CmiMode.SINGLE
        cmi_config = CmiConfig.from_learner(replace(learner, calibrate=True), level=run_config.level)
        result = estimate_cmi_tl(split, mode, cmi_config)
    elif name == MetricId.MODEL_PARITY.value:
        model = fit_binary(split.train.features, split.train.outcome, learner)
        result = model_fairness_estimate(model, split.eval, run_config.threshold, run_config.level)
    else:
        spec = MetricSpec.for_metric_id(name, threshold=run_config.threshold, level=run_config.level)
        result = estimate_metric(split, spec.with_learners(learner))
    record = {'name': name}
    record.update(result.to_record())
    record['metadata'] = result.metadata
    return record


def run_estimate(run_config: RunConfig, writer: ReportWriter) -> Dict[str, Any]:
    data, source = _load_data(run_config)
    n0, n1 = data.group_counts()
    if n0 == 0 or n1 == 0:
        raise EmptyGroup(f"Dataset has no rows with G={0 if n0 == 0 else 1}")
    split = split_sample(data, run_config.ratio, run_config.seed)

    results = []
    for name in run_config.metrics:
        logger.info(f"Estimating {name}")
        results.append(_estimate_one(name, split, run_config))

    table = pd.DataFrame([{k: v for k, v in r.items() if k != 'metadata'} for r in results])
    table['seed'] = run_config.seed
    writer.write_table('estimates', table)
    return {
        'data': dict(source, n_train=split.train.n, n_eval=split.eval.n),
        'results': results,
    }


def _study_from_config(run_config: RunConfig) -> Dict[str, Any]:
    if run_config.input is not None:
        return load_study_config(run_config.input)
    grid = {
        'dgp': [run_config.dgp],
        'metric': list(run_config.metrics),
        'estimator': [{'learner': run_config.learner}],
        'n': [run_config.n],
    }
    return {
        'master_seed': run_config.seed,
        'replicates': run_config.replicates,
        'n_mc': run_config.n_mc,
        'split_ratio': run_config.ratio,
        'level': run_config.level,
        'threads': run_config.threads,
        'grid': grid,
        'cells': expand_grid(grid),
    }


def run_simulate(run_config: RunConfig, writer: ReportWriter) -> Dict[str, Any]:
    study = _study_from_config(run_config)
    cells = [StudyCell.from_grid(entry) for entry in study['cells']]
    report = run_coverage_study(
        cells,
        replicates=study['replicates'],
        master_seed=study['master_seed'],
        n_mc=study['n_mc'],
        split_ratio=study['split_ratio'],
        level=study['level'],
        threads=run_config.threads,
    )
    writer.write_table('coverage', report.cells)
    writer.write_series('replicates', report.replicates)
    naive = report.replicates[['cell', 'replicate', 'n', 'point', 'stderr', 'naive_diff', 'naive_stderr']]
    writer.write_series('naive_contrast', naive)
    return {
        'study': {k: v for k, v in study.items() if k != 'cells'},
        'results': report.cells.to_dict(orient='records'),
    }


def run_importance(run_config: RunConfig, writer: ReportWriter) -> Dict[str, Any]:
    data, source = _load_data(run_config)
    split = split_sample(data, run_config.ratio, run_config.seed)
    spec = MetricSpec.for_metric_id(run_config.metrics[0], threshold=run_config.threshold, level=run_config.level)
    spec = spec.with_learners(_learner(run_config))
    report = shapley_importance(split, spec, run_config.perms, run_config.seed, run_config.threads)

    writer.write_table('importance', report.to_frame())
    per_permutation = pd.DataFrame(report.permutation_contributions, columns=list(report.variables))
    per_permutation.insert(0, 'permutation', range(len(per_permutation)))
    writer.write_series('importance_permutations', per_permutation)
    return {
        'data': dict(source, n_train=split.train.n, n_eval=split.eval.n),
        'summary': report.summary(),
        'results': report.to_frame().to_dict(orient='records'),
        'diagnostics': report.diagnostics,
    }


COMMANDS = {
    Command.ESTIMATE: run_estimate,
    Command.SIMULATE: run_simulate,
    Command.IMPORTANCE: run_importance,
}


def _print_summary(run_config: RunConfig, payload: Dict[str, Any], writer: ReportWriter):
    print(f"✅ {run_config.command.value} finished; reports in {writer.output_dir}")
    if run_config.command == Command.ESTIMATE:
        for row in payload['results']:
            if 'ci_low' in row:
                print(f"  📊 {row['name']:<17} {row['point']: .4f}  ({row['ci_low']: .4f}, {row['ci_high']: .4f})")
            else:
                print(f"  📊 {row['name']:<17} {row['point']: .4f}")
    elif run_config.command == Command.SIMULATE:
        for row in payload['results']:
            print(f"  🎯 {row['dgp']} / {row['metric']} / n={row['n']}: coverage {row['coverage']:.3f}")
    else:
        for row in payload['results'][:5]:
            print(f"  🔑 {row['variable']:<20} {row['importance']: .4f}")


def run(run_config: RunConfig) -> int:
    """Execute one command; returns the process exit status"""
    logging.basicConfig(level=logging.DEBUG if run_config.verbose else logging.INFO)
    writer = ReportWriter(run_config.output)
    resolved = run_config.to_dict()
    try:
        run_config.validate()
        payload = COMMANDS[run_config.command](run_config, writer)
        report = {'status': 'ok', 'command': run_config.command.value, 'config': resolved}
        report.update(payload)
        writer.write_report(report)
        writer.write_metadata({'command': run_config.command.value})
        _print_summary(run_config, payload, writer)
        return 0
    except (ValueError, OSError) as e:
        logger.error(f"{run_config.command.value} failed: {type(e).__name__}: {e}")
        try:
            writer.write_report(failure_payload(run_config.command.value, resolved, e))
            writer.write_metadata({'command': run_config.command.value, 'status': 'failed'})
        except OSError as write_error:
            logger.error(f"Could not write failure report: {write_error}")
        print(f"❌ {type(e).__name__}: {e}")
        return 1


def main(argv: Optional[List[str]] = None) -> int:
    return run(parse_args(argv))
