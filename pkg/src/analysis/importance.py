"""
Permutation-sampled Shapley attribution of a fairness metric to covariates.

Each sampled ordering adds source variables one at a time; the metric is re-estimated
with nuisances refitted on every prefix and the successive differences are credited to
the variable just added. One-hot columns of a categorical covariate move together.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .estimators import MetricSpec, estimate_metric
from .inference import MetricId
from .learners import Algorithm, LearnerConfig
from ..data.dataset import SplitPair
from ..utils.config import config
from ..utils.errors import FairnessInferenceError, InsufficientData
from ..utils.rng import make_generator

logger = logging.getLogger(__name__)


@dataclass
class ImportanceReport:
    metric_id: MetricId
    variables: Tuple[str, ...]
    contributions: np.ndarray
    stderr: np.ndarray
    n_perms: int
    n_used: int
    full_value: float
    empty_value: float
    permutation_contributions: np.ndarray = field(repr=False)
    diagnostics: List[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            'variable': list(self.variables),
            'importance': self.contributions,
            'stderr': self.stderr,
        })
        frame['abs_importance'] = frame['importance'].abs()
        return frame.sort_values('abs_importance', ascending=False, kind='mergesort').reset_index(drop=True)

    def summary(self) -> Dict[str, Union[str, int, float]]:
        return {
            'metric': self.metric_id.value,
            'n_perms': self.n_perms,
            'n_used': self.n_used,
            'full_value': self.full_value,
            'empty_value': self.empty_value,
        }


def _restrict(split: SplitPair, variables: FrozenSet[str]) -> SplitPair:
    columns = split.train.columns_for(variables)
    return SplitPair(
        train=split.train.select_columns(columns),
        eval=split.eval.select_columns(columns),
        seed=split.seed,
        ratio=split.ratio,
        train_index=split.train_index,
        eval_index=split.eval_index,
    )


def _constant_spec(spec: MetricSpec) -> MetricSpec:
    return spec.with_learners(LearnerConfig(algorithm=Algorithm.CONSTANT))


def _coalition_value(split: SplitPair, spec: MetricSpec, coalition: FrozenSet[str]) -> Union[float, str]:
    """Metric point estimate with nuisances fitted on ``coalition`` only; an error string on failure"""
    try:
        if not coalition:
            return estimate_metric(split, _constant_spec(spec)).point
        return estimate_metric(_restrict(split, coalition), spec).point
    except FairnessInferenceError as e:
        return f"{type(e).__name__}: {e}"


def shapley_importance(split: SplitPair, spec: MetricSpec,
                       n_perms: int = config.simulation_config['shapley_permutations'],
                       seed: int = 0, threads: Optional[int] = None) -> ImportanceReport:
    """
    Average marginal contribution of each source variable over ``n_perms`` random orderings.

    Coalition values are computed once per distinct subset, so each ordering's
    contributions sum to full minus empty value. An ordering that needs a failed
    subset is dropped and noted in ``diagnostics``.
    """
    if n_perms < 1:
        raise ValueError(f"n_perms must be >= 1, got {n_perms}")
    variables = split.train.variables
    d = len(variables)
    rng = make_generator(seed)
    orders = [tuple(rng.permutation(d)) for _ in range(n_perms)]

    coalitions: Dict[FrozenSet[str], None] = {frozenset(): None}
    for order in orders:
        for k in range(1, d + 1):
            coalitions.setdefault(frozenset(variables[j] for j in order[:k]), None)
    keys = list(coalitions)

    threads = threads or config.get_threads()
    logger.info("Evaluating %d coalitions over %d variables (%d permutations)", len(keys), d, n_perms)
    values = dict(zip(keys, Parallel(n_jobs=threads)(
        delayed(_coalition_value)(split, spec, key) for key in keys
    )))

    full_key = frozenset(variables)
    for key, label in ((frozenset(), 'empty'), (full_key, 'full')):
        if isinstance(values[key], str):
            raise InsufficientData(f"Metric on the {label} variable set failed: {values[key]}")

    diagnostics = []
    rows = []
    for p, order in enumerate(orders):
        prefix = frozenset()
        row = np.zeros(d)
        failed = None
        for j in order:
            extended = prefix | {variables[j]}
            if isinstance(values[extended], str):
                failed = values[extended]
                break
            row[j] = values[extended] - values[prefix]
            prefix = extended
        if failed is not None:
            diagnostics.append(f"permutation {p} dropped: {failed}")
            logger.warning("Permutation %d dropped: %s", p, failed)
            continue
        rows.append(row)

    if not rows:
        raise InsufficientData(f"Every permutation failed; first diagnostic: {diagnostics[0]}")
    matrix = np.vstack(rows)
    n_used = matrix.shape[0]
    stderr = matrix.std(axis=0, ddof=1) / np.sqrt(n_used) if n_used > 1 else np.full(d, np.nan)
    return ImportanceReport(
        metric_id=spec.metric_id,
        variables=variables,
        contributions=matrix.mean(axis=0),
        stderr=stderr,
        n_perms=n_perms,
        n_used=n_used,
        full_value=float(values[full_key]),
        empty_value=float(values[frozenset()]),
        permutation_contributions=matrix,
        diagnostics=diagnostics,
    )
