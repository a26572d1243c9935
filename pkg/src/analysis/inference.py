"""
Estimate containers and the Wald-interval primitive shared by every estimator.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Tuple

import numpy as np
from scipy import stats

from ..utils.errors import InsufficientData


class MetricId(str, Enum):
    PARITY = 'parity'
    PROB_PARITY = 'prob_parity'
    OPPORTUNITY = 'opportunity'
    PROB_OPPORTUNITY = 'prob_opportunity'
    CMI = 'cmi'
    MODEL_PARITY = 'model_parity'


def wald_interval(point: float, eif_values: np.ndarray, level: float = 0.95) -> Tuple[float, float, float]:
    """
    Wald confidence interval from influence-function values.

    stderr is the sample standard deviation (divisor m - 1) over sqrt(m); the half-width
    uses the exact normal quantile z_{(1+level)/2}.

    Returns (ci_low, ci_high, stderr).
    """
    eif_values = np.asarray(eif_values, dtype=float)
    m = eif_values.size
    if m < 2:
        raise InsufficientData(f"Need at least 2 influence values, got {m}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"Confidence level must lie in (0, 1), got {level}")

    stderr = float(np.std(eif_values, ddof=1) / np.sqrt(m))
    half_width = float(stats.norm.ppf(0.5 * (1.0 + level))) * stderr
    return point - half_width, point + half_width, stderr


@dataclass(frozen=True)
class EstimateResult:
    """Point estimate with its per-observation influence values and Wald interval"""
    point: float
    eif_values: np.ndarray = field(repr=False)
    stderr: float
    ci_low: float
    ci_high: float
    level: float
    metric_id: MetricId
    n_eval: int
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    @classmethod
    def from_eif(cls, point: float, eif_values: np.ndarray, level: float, metric_id: MetricId,
                 metadata: Dict[str, Any] = None) -> 'EstimateResult':
        eif_values = np.array(eif_values, dtype=float)
        eif_values.setflags(write=False)
        ci_low, ci_high, stderr = wald_interval(point, eif_values, level)
        return cls(
            point=float(point),
            eif_values=eif_values,
            stderr=stderr,
            ci_low=ci_low,
            ci_high=ci_high,
            level=float(level),
            metric_id=MetricId(metric_id),
            n_eval=int(eif_values.size),
            metadata=dict(metadata or {}),
        )

    @property
    def width(self) -> float:
        return self.ci_high - self.ci_low

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_record(self) -> Dict[str, Any]:
        """Flat row for report tables"""
        return {
            'metric': self.metric_id.value,
            'point': self.point,
            'stderr': self.stderr,
            'ci_low': self.ci_low,
            'ci_high': self.ci_high,
            'level': self.level,
            'n_eval': self.n_eval,
        }
