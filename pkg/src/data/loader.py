"""
CSV ingestion for real-data analyses.
Maps the outcome and group columns to 0/1 under a declared schema, one-hot encodes
categorical covariates and drops incomplete rows with a reported count.
"""

import json
import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .dataset import Dataset
from ..utils.config import config
from ..utils.errors import EmptyAfterCleaning, NonBinaryAfterMapping, SchemaMismatch

logger = logging.getLogger(__name__)

DEFAULT_NA_VALUES = ('?', '', 'NA', 'NaN', 'null')


def _label_text(values: pd.Series) -> pd.Series:
    """Label values as text; integral floats (a numeric column that held NaN) lose the trailing '.0'"""
    if pd.api.types.is_numeric_dtype(values) and not pd.api.types.is_bool_dtype(values):
        integral = values.notna() & (values % 1 == 0)
        text = values.astype(str)
        text.loc[integral] = values[integral].astype('int64').astype(str)
        return text.str.strip()
    return values.astype(str).str.strip()


@dataclass(frozen=True)
class ColumnMapping:
    """Binary label column: values in ``positive`` map to 1, values in ``negative`` (or anything else) to 0"""
    column: str
    positive: Tuple[str, ...] = ()
    negative: Tuple[str, ...] = ()

    @classmethod
    def parse(cls, raw: Union[str, Mapping[str, Any]], role: str) -> 'ColumnMapping':
        if isinstance(raw, str):
            return cls(raw)
        if not isinstance(raw, Mapping) or 'column' not in raw:
            raise SchemaMismatch(f"Schema entry for {role} needs a 'column' key")
        return cls(
            column=str(raw['column']),
            positive=tuple(str(v).strip() for v in raw.get('positive', ())),
            negative=tuple(str(v).strip() for v in raw.get('negative', ())),
        )

    def apply(self, values: pd.Series) -> np.ndarray:
        if not self.positive:
            numeric = pd.to_numeric(values, errors='coerce')
            if numeric.isna().any() or not numeric.isin((0, 1)).all():
                raise NonBinaryAfterMapping(
                    f"Column '{self.column}' is not 0/1 and the schema gives no positive values"
                )
            return numeric.to_numpy(dtype=int)

        text = _label_text(values)
        positive = text.isin(self.positive)
        if self.negative:
            unknown = ~(positive | text.isin(self.negative))
            if unknown.any():
                examples = sorted(text[unknown].unique())[:5]
                raise NonBinaryAfterMapping(f"Column '{self.column}' has unmapped values {examples}")
        return positive.to_numpy(dtype=int)


@dataclass(frozen=True)
class CsvSchema:
    """
    Declares the outcome and group columns and how covariates are read.

    ``features`` defaults to every other column; ``categorical`` defaults to the
    non-numeric ones.
    """
    outcome: ColumnMapping
    group: ColumnMapping
    features: Optional[Tuple[str, ...]] = None
    categorical: Optional[Tuple[str, ...]] = None
    drop: Tuple[str, ...] = ()
    na_values: Tuple[str, ...] = DEFAULT_NA_VALUES

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> 'CsvSchema':
        for key in ('outcome', 'group'):
            if key not in raw:
                raise SchemaMismatch(f"Schema is missing '{key}'")
        optional = {}
        for key in ('features', 'categorical', 'drop', 'na_values'):
            if raw.get(key) is not None:
                optional[key] = tuple(str(v) for v in raw[key])
        return cls(
            outcome=ColumnMapping.parse(raw['outcome'], 'outcome'),
            group=ColumnMapping.parse(raw['group'], 'group'),
            **optional,
        )

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'CsvSchema':
        path = Path(path)
        if not path.exists():
            raise SchemaMismatch(f"Schema file not found: {path}")
        with open(path, 'r') as f:
            try:
                return cls.from_dict(json.load(f))
            except json.JSONDecodeError as e:
                raise SchemaMismatch(f"Schema file {path} is not valid JSON: {e}") from e


class DatasetLoader:
    """
    Reads headered CSV files into Datasets and keeps a record of what was loaded.
    """

    def __init__(self, data_dir: Optional[Path] = None):
        self.data_dir = Path(data_dir) if data_dir else config.data_dir / "raw"
        self.logger = logging.getLogger(__name__)
        self.history: List[Dict[str, Any]] = []

    def _resolve(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        if not path.is_absolute() and not path.exists():
            path = self.data_dir / path
        if not path.exists():
            raise SchemaMismatch(f"CSV file not found: {path}")
        return path

    def read_frame(self, path: Union[str, Path], schema: CsvSchema) -> pd.DataFrame:
        path = self._resolve(path)
        try:
            return pd.read_csv(path, na_values=list(schema.na_values), skipinitialspace=True)
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise SchemaMismatch(f"Could not parse {path} as headered CSV: {e}") from e

    def _feature_columns(self, frame: pd.DataFrame, schema: CsvSchema) -> List[str]:
        excluded = {schema.outcome.column, schema.group.column, *schema.drop}
        if schema.features is not None:
            return [c for c in schema.features if c not in excluded]
        return [c for c in frame.columns if c not in excluded]

    def to_dataset(self, frame: pd.DataFrame, schema: CsvSchema, source: str = '<frame>') -> Dataset:
        frame = frame.copy()
        frame.columns = [str(c).strip() for c in frame.columns]
        features = self._feature_columns(frame, schema)
        required = [schema.outcome.column, schema.group.column, *features]
        missing = [c for c in required if c not in frame.columns]
        if missing:
            raise SchemaMismatch(f"Columns {missing} declared in the schema are absent from {source}")
        if not features:
            raise SchemaMismatch("Schema leaves no covariate columns")

        frame = frame[required].copy()
        for column in frame.columns:
            if frame[column].dtype == object:
                frame[column] = frame[column].str.strip()
        complete = frame.dropna()
        dropped = len(frame) - len(complete)
        if dropped:
            self.logger.info(f"Dropped {dropped} of {len(frame)} rows with missing values from {source}")
        if complete.empty:
            raise EmptyAfterCleaning(f"No complete rows remain in {source}")

        outcome = schema.outcome.apply(complete[schema.outcome.column])
        group = schema.group.apply(complete[schema.group.column])

        if schema.categorical is not None:
            categorical = [c for c in features if c in set(schema.categorical)]
        else:
            categorical = [c for c in features if not pd.api.types.is_numeric_dtype(complete[c])]

        blocks, names, sources = [], [], []
        for column in features:
            if column in categorical:
                dummies = pd.get_dummies(complete[column].astype(str), prefix=column, prefix_sep='=',
                                         drop_first=True, dtype=float)
                blocks.append(dummies.to_numpy())
                names.extend(dummies.columns)
                sources.extend([column] * dummies.shape[1])
            else:
                values = pd.to_numeric(complete[column], errors='coerce')
                if values.isna().any():
                    raise SchemaMismatch(f"Column '{column}' is not numeric; declare it categorical")
                blocks.append(values.to_numpy(dtype=float).reshape(-1, 1))
                names.append(column)
                sources.append(column)

        matrix = np.hstack(blocks) if blocks else np.empty((len(complete), 0))
        if matrix.shape[1] == 0:
            raise SchemaMismatch("Every categorical covariate has a single level; nothing to model")

        dataset = Dataset(
            features=matrix,
            group=group,
            outcome=outcome,
            feature_names=tuple(names),
            source_columns=tuple(sources),
        )
        self.history.append({
            'source': source,
            'rows_read': int(len(frame)),
            'rows_dropped': int(dropped),
            'n': dataset.n,
            'columns': dataset.d,
            'outcome_prevalence': float(outcome.mean()),
            'group_prevalence': float(group.mean()),
        })
        self.logger.info(
            f"Loaded {dataset.n} rows x {dataset.d} columns from {source} "
            f"(P(Y=1)={outcome.mean():.3f}, P(G=1)={group.mean():.3f})"
        )
        return dataset

    def load(self, path: Union[str, Path], schema: Union[CsvSchema, Mapping[str, Any], str, Path]) -> Dataset:
        if not isinstance(schema, CsvSchema):
            schema = CsvSchema.from_dict(schema) if isinstance(schema, Mapping) else CsvSchema.from_file(schema)
        frame = self.read_frame(path, schema)
        return self.to_dataset(frame, schema, source=str(path))

    def metadata(self) -> Dict[str, Any]:
        return {
            'load_timestamp': datetime.now().isoformat(),
            'datasets_loaded': len(self.history),
            'total_records': sum(entry['n'] for entry in self.history),
            'loads': list(self.history),
        }


def load_csv(path: Union[str, Path], schema: Union[CsvSchema, Mapping[str, Any], str, Path]) -> Dataset:
    """Read ``path`` under ``schema`` into a Dataset"""
    return DatasetLoader().load(path, schema)
