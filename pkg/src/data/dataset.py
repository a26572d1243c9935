"""
Core data containers: the (X, G, Y) dataset and its seeded train/evaluation split.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..utils.errors import DegenerateSplit, InvalidDataset
from ..utils.rng import make_generator

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Dataset:
    """
    Covariates X (n x d), binary group G and binary outcome Y.

    ``source_columns`` names the original variable behind each column, so that
    one-hot encoded columns can be attributed back to a single covariate.
    """
    features: np.ndarray
    group: np.ndarray
    outcome: np.ndarray
    feature_names: Tuple[str, ...]
    source_columns: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.ndim != 2:
            raise InvalidDataset(f"Features must be a 2-d table, got shape {features.shape}")
        n, d = features.shape
        if n < 1 or d < 1:
            raise InvalidDataset(f"Need n >= 1 and d >= 1, got n={n}, d={d}")

        group = np.asarray(self.group)
        outcome = np.asarray(self.outcome)
        if group.shape != (n,) or outcome.shape != (n,):
            raise InvalidDataset(
                f"Length mismatch: features {n}, group {group.shape}, outcome {outcome.shape}"
            )
        if np.isnan(features).any():
            raise InvalidDataset("Features contain missing values")
        for name, values in (('group', group), ('outcome', outcome)):
            if not np.isin(values, (0, 1)).all():
                raise InvalidDataset(f"{name} must contain only 0/1 values")

        names = tuple(str(name) for name in self.feature_names)
        if len(names) != d:
            raise InvalidDataset(f"Expected {d} feature names, got {len(names)}")
        sources = names if self.source_columns is None else tuple(self.source_columns)
        if len(sources) != d:
            raise InvalidDataset(f"Expected {d} source column labels, got {len(sources)}")

        object.__setattr__(self, 'features', _frozen(features))
        object.__setattr__(self, 'group', _frozen(group.astype(np.int8)))
        object.__setattr__(self, 'outcome', _frozen(outcome.astype(np.int8)))
        object.__setattr__(self, 'feature_names', names)
        object.__setattr__(self, 'source_columns', sources)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def variables(self) -> Tuple[str, ...]:
        """Distinct source variables, in first-appearance order"""
        return tuple(dict.fromkeys(self.source_columns))

    def columns_for(self, variables: Sequence[str]) -> np.ndarray:
        """Column indices (in original order) belonging to the given source variables"""
        wanted = set(variables)
        return np.array([j for j, source in enumerate(self.source_columns) if source in wanted], dtype=int)

    def take(self, indices: np.ndarray) -> 'Dataset':
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            features=self.features[indices],
            group=self.group[indices],
            outcome=self.outcome[indices],
            feature_names=self.feature_names,
            source_columns=self.source_columns,
        )

    def select_columns(self, columns: np.ndarray) -> 'Dataset':
        columns = np.asarray(columns, dtype=int)
        return Dataset(
            features=self.features[:, columns],
            group=self.group,
            outcome=self.outcome,
            feature_names=tuple(self.feature_names[j] for j in columns),
            source_columns=tuple(self.source_columns[j] for j in columns),
        )

    def with_flipped_group(self) -> 'Dataset':
        return Dataset(
            features=self.features,
            group=1 - self.group,
            outcome=self.outcome,
            feature_names=self.feature_names,
            source_columns=self.source_columns,
        )

    def group_counts(self) -> Tuple[int, int]:
        n1 = int(self.group.sum())
        return self.n - n1, n1

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.features, columns=list(self.feature_names))
        df['G'] = self.group
        df['Y'] = self.outcome
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame, group_col: str = 'G', outcome_col: str = 'Y') -> 'Dataset':
        feature_cols = [c for c in df.columns if c not in (group_col, outcome_col)]
        return cls(
            features=df[feature_cols].to_numpy(dtype=float),
            group=df[group_col].to_numpy(),
            outcome=df[outcome_col].to_numpy(),
            feature_names=tuple(feature_cols),
        )


@dataclass(frozen=True)
class SplitPair:
    """Training split for nuisance fits and evaluation split for the estimator"""
    train: Dataset
    eval: Dataset
    seed: int
    ratio: float
    train_index: np.ndarray = field(repr=False, default=None)
    eval_index: np.ndarray = field(repr=False, default=None)


def _check_both_values(data: Dataset, label: str, stratify_outcome: bool):
    n0, n1 = data.group_counts()
    if n0 == 0 or n1 == 0:
        raise DegenerateSplit(f"{label} split lacks group value {0 if n0 == 0 else 1}")
    if stratify_outcome:
        positives = int(data.outcome.sum())
        if positives == 0 or positives == data.n:
            raise DegenerateSplit(f"{label} split lacks one of the outcome values")


def split_sample(data: Dataset, ratio: float, seed: int, stratify_outcome: bool = False) -> SplitPair:
    """
    Uniformly random partition of the rows into floor(ratio * n) training rows and the
    remaining evaluation rows, reproducible for a fixed seed.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"Split ratio must lie in (0, 1), got {ratio}")
    if data.n * min(ratio, 1.0 - ratio) < 2:
        raise DegenerateSplit(f"n={data.n} is too small for ratio {ratio}")

    n_train = int(np.floor(ratio * data.n))
    order = make_generator(seed).permutation(data.n)
    train_index = np.sort(order[:n_train])
    eval_index = np.sort(order[n_train:])

    train = data.take(train_index)
    evaluation = data.take(eval_index)
    _check_both_values(train, 'train', stratify_outcome)
    _check_both_values(evaluation, 'eval', stratify_outcome)

    logger.debug("Split %d rows into %d train / %d eval (seed=%d)", data.n, train.n, evaluation.n, seed)
    return SplitPair(
        train=train,
        eval=evaluation,
        seed=int(seed),
        ratio=float(ratio),
        train_index=_frozen(train_index),
        eval_index=_frozen(eval_index),
    )
