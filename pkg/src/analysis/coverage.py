"""
Monte Carlo coverage and bias study over a grid of (process, metric, estimator, n) cells.

Replicates run in parallel with joblib; each replicate draws from its own stream derived
from (master seed, cell index, replicate index), and results are assembled in grid order,
so the report does not depend on the worker count.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .estimators import (
    CmiConfig,
    CmiMode,
    Kind,
    MetricSpec,
    estimate_cmi_knn,
    estimate_cmi_tl,
    estimate_metric,
    fit_nuisances,
    naive_model_ttest,
)
from .inference import MetricId
from .learners import LearnerConfig
from .oracles import TruthValue, mc_truth
from ..data.dataset import split_sample
from ..data.generators import DgpId, DgpSpec, generate
from ..utils.config import config
from ..utils.errors import FairnessInferenceError
from ..utils.rng import derive_seed, make_generator

logger = logging.getLogger(__name__)

KNN_MODE = 'knn'
CMI_ALIASES = {'cmi_separate': CmiMode.SEPARATE.value, 'cmi_knn': KNN_MODE}


@dataclass(frozen=True)
class StudyCell:
    """One grid cell: process, metric, estimator options and sample size"""
    dgp: DgpSpec
    metric: MetricId
    n: int
    estimator: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'metric', MetricId(self.metric))
        if self.metric == MetricId.MODEL_PARITY:
            raise ValueError("model_parity has no population truth to cover")
        if self.n < 4:
            raise ValueError(f"Cell sample size must be >= 4, got {self.n}")

    @classmethod
    def from_grid(cls, entry: Mapping[str, Any]) -> 'StudyCell':
        """Cell from an expanded grid entry; ``cmi_separate`` / ``cmi_knn`` select the CMI mode"""
        metric = str(entry['metric'])
        estimator = dict(entry.get('estimator') or {})
        if metric in CMI_ALIASES:
            estimator.setdefault('mode', CMI_ALIASES[metric])
            metric = MetricId.CMI.value
        return cls(DgpSpec.parse(entry['dgp']), metric, int(entry['n']), estimator)

    @property
    def estimator_label(self) -> str:
        if not self.estimator:
            return 'default'
        return ','.join(f'{k}={v}' for k, v in sorted(self.estimator.items()))

    @property
    def cmi_mode(self) -> str:
        return str(self.estimator.get('mode', CmiMode.SINGLE.value))

    @property
    def threshold(self) -> float:
        return float(self.estimator.get('threshold', config.estimator_config['threshold']))

    @property
    def truth_reference(self) -> str:
        """Which population quantity the truth column holds"""
        if self.metric != MetricId.CMI:
            return 'population'
        if self.dgp.id != DgpId.CMI_SIM:
            return 'conditional'
        return str(self.estimator.get('reference', 'marginal'))

    def truth_key(self) -> Tuple[Any, ...]:
        return (self.dgp.label, self.metric.value, self.threshold, self.truth_reference)

    def learner(self, role: str, seed: int) -> LearnerConfig:
        name = self.estimator.get(role, self.estimator.get('learner', 'logistic'))
        calibrate = bool(self.estimator.get('calibrate', self.metric == MetricId.CMI))
        return LearnerConfig.named(name, seed=seed, calibrate=calibrate)

    def metric_spec(self, seed: int, level: float) -> MetricSpec:
        return MetricSpec.for_metric_id(
            self.metric,
            threshold=self.threshold,
            outcome_learner=self.learner('outcome', seed),
            group_learner=self.learner('group', seed),
            joint_learner=self.learner('joint', seed),
            level=level,
        )

    def cmi_config(self, seed: int, level: float) -> CmiConfig:
        return CmiConfig(
            joint_learner=self.learner('joint', seed),
            outcome_learner=self.learner('outcome', seed),
            group_learner=self.learner('group', seed),
            level=level,
        )


@dataclass
class CoverageReport:
    """Per-cell summary table plus the per-replicate series it was computed from"""
    cells: pd.DataFrame
    replicates: pd.DataFrame
    settings: Dict[str, Any] = field(default_factory=dict)

    def cell(self, index: int) -> pd.Series:
        return self.cells.iloc[index]


def _run_replicate(cell: StudyCell, cell_index: int, replicate: int, master_seed: int,
                   split_ratio: float, level: float, truth: TruthValue) -> Dict[str, Any]:
    seed = derive_seed(master_seed, cell_index, replicate)
    record = {
        'cell': cell_index,
        'replicate': replicate,
        'seed': seed,
        'n': cell.n,
        'truth': truth.value,
        'status': 'ok',
        'error': None,
        'point': np.nan,
        'stderr': np.nan,
        'ci_low': np.nan,
        'ci_high': np.nan,
        'covered': np.nan,
        'naive_diff': np.nan,
        'naive_stderr': np.nan,
    }
    try:
        data = generate(cell.dgp, cell.n, make_generator(seed, 0))
        if cell.metric == MetricId.CMI and cell.cmi_mode == KNN_MODE:
            record['point'] = estimate_cmi_knn(data, int(cell.estimator.get('k', config.estimator_config['knn_neighbors'])))
            return record

        split = split_sample(data, split_ratio, derive_seed(seed, 1))
        learner_seed = derive_seed(seed, 2)
        if cell.metric == MetricId.CMI:
            result = estimate_cmi_tl(split, CmiMode(cell.cmi_mode), cell.cmi_config(learner_seed, level))
        else:
            spec = cell.metric_spec(learner_seed, level)
            nuisances = fit_nuisances(split, spec)
            result = estimate_metric(split, spec, nuisances)
            naive = naive_model_ttest(nuisances.d_model, split.eval, spec.threshold,
                                      probabilistic=spec.kind == Kind.PROBABILISTIC, level=level)
            record['naive_diff'] = naive.diff
            record['naive_stderr'] = naive.stderr

        record.update(point=result.point, stderr=result.stderr, ci_low=result.ci_low,
                      ci_high=result.ci_high, covered=float(result.covers(truth.value)))
    except FairnessInferenceError as e:
        logger.warning("Replicate %d of cell %d failed: %s", replicate, cell_index, e)
        record['status'] = 'failed'
        record['error'] = f"{type(e).__name__}: {e}"
    return record


def _summarize(cell: StudyCell, cell_index: int, truth: TruthValue, rows: pd.DataFrame,
               replicates: int) -> Dict[str, Any]:
    ok = rows[rows['status'] == 'ok']
    bias = ok['point'] - truth.value
    return {
        'cell': cell_index,
        'dgp': cell.dgp.label,
        'metric': cell.metric.value,
        'estimator': cell.estimator_label,
        'n': cell.n,
        'truth': truth.value,
        'truth_reference': cell.truth_reference,
        'truth_stderr': truth.stderr,
        'replicates': replicates,
        'completed': int(len(ok)),
        'failures': int(replicates - len(ok)),
        'coverage': float(ok['covered'].mean()) if ok['covered'].notna().any() else np.nan,
        'mean_bias': float(bias.mean()) if len(ok) else np.nan,
        'mean_width': float((ok['ci_high'] - ok['ci_low']).mean()) if len(ok) else np.nan,
        'replicate_sd': float(ok['point'].std(ddof=1)) if len(ok) > 1 else np.nan,
        'mean_stderr': float(ok['stderr'].mean()) if len(ok) else np.nan,
        'mean_naive_stderr': float(ok['naive_stderr'].mean()) if ok['naive_stderr'].notna().any() else np.nan,
    }


def run_coverage_study(cells: Sequence[StudyCell], replicates: int = config.simulation_config['replicates'],
                       master_seed: int = config.runtime_config['seed'],
                       n_mc: int = config.simulation_config['n_mc'],
                       split_ratio: float = config.split_config['simulation_ratio'],
                       level: float = config.estimator_config['level'],
                       threads: Optional[int] = None,
                       truths: Optional[Mapping[int, TruthValue]] = None) -> CoverageReport:
    """
    Coverage rate, mean signed bias and mean interval width per cell.

    Truth comes from ``truths`` (cell index -> value) when given, otherwise from
    ``mc_truth`` with one seeded draw per distinct (process, metric) pair.
    Failed replicates stay in the replicate table with their error.
    """
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")
    cells = [c if isinstance(c, StudyCell) else StudyCell.from_grid(c) for c in cells]
    threads = threads or config.get_threads()

    truth_cache: Dict[Tuple[Any, ...], TruthValue] = {}
    cell_truths: List[TruthValue] = []
    for index, cell in enumerate(cells):
        if truths is not None and index in truths:
            cell_truths.append(truths[index])
            continue
        key = cell.truth_key()
        if key not in truth_cache:
            truth_cache[key] = mc_truth(
                cell.dgp, cell.metric, n_mc, derive_seed(master_seed, len(truth_cache), 10**6),
                reference=cell.truth_reference, threshold=cell.threshold,
            )
        cell_truths.append(truth_cache[key])

    logger.info("Running %d cells x %d replicates on %d worker(s)", len(cells), replicates, threads)
    tasks = [(index, rep) for index in range(len(cells)) for rep in range(replicates)]
    records = Parallel(n_jobs=threads)(
        delayed(_run_replicate)(cells[index], index, rep, master_seed, split_ratio, level, cell_truths[index])
        for index, rep in tasks
    )

    replicate_frame = pd.DataFrame.from_records(records)
    summaries = [
        _summarize(cell, index, cell_truths[index], replicate_frame[replicate_frame['cell'] == index], replicates)
        for index, cell in enumerate(cells)
    ]
    settings = {
        'replicates': replicates,
        'master_seed': master_seed,
        'n_mc': n_mc,
        'split_ratio': split_ratio,
        'level': level,
    }
    return CoverageReport(cells=pd.DataFrame.from_records(summaries), replicates=replicate_frame, settings=settings)
