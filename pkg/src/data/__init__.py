"""Data containers, CSV ingestion and simulated data-generating processes"""

from .dataset import Dataset, SplitPair, split_sample
from .generators import DgpId, DgpSpec, DiscreteDistribution, generate
from .loader import CsvSchema, DatasetLoader, load_csv

__all__ = [
    'Dataset',
    'SplitPair',
    'split_sample',
    'DgpId',
    'DgpSpec',
    'DiscreteDistribution',
    'generate',
    'CsvSchema',
    'DatasetLoader',
    'load_csv',
]
