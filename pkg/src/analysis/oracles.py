"""
Ground-truth values of the estimands, computed from a known generating law.

``brute_force_estimand`` enumerates a finite law exactly. ``mc_truth`` averages the
exact conditional laws of a simulated process over a Monte Carlo covariate sample and
reports the Monte Carlo standard error of that average.
"""

import logging
from typing import Mapping, NamedTuple, Union

import numpy as np

from .estimators import Kind, Metric, MetricSpec
from .inference import MetricId
from ..data.generators import CmiSimLaw, DgpId, DgpSpec, DiscreteDistribution
from ..utils.errors import InsufficientData, InvalidDistribution
from ..utils.rng import make_generator

logger = logging.getLogger(__name__)

MIN_MC_DRAWS = 100_000

MetricLike = Union[MetricSpec, MetricId, str]


class TruthValue(NamedTuple):
    value: float
    stderr: float


def _resolve_metric(metric: MetricLike, threshold: float = 0.5) -> Union[MetricSpec, MetricId]:
    if isinstance(metric, MetricSpec):
        return metric
    metric_id = MetricId(metric)
    if metric_id == MetricId.CMI:
        return metric_id
    if metric_id == MetricId.MODEL_PARITY:
        raise ValueError("model_parity describes a fitted model, not a generating law")
    return MetricSpec.for_metric_id(metric_id, threshold=threshold)


def metric_label(metric: Union[MetricSpec, MetricId]) -> str:
    return metric.value if isinstance(metric, MetricId) else metric.metric_id.value


def _entropy_terms(cells: np.ndarray) -> np.ndarray:
    """Row-wise sum of p * log(p / (p_y * p_g)) for joint tables with columns 2y + g"""
    p_y1 = cells[:, 2] + cells[:, 3]
    p_g1 = cells[:, 1] + cells[:, 3]
    marginal = np.column_stack([
        (1 - p_y1) * (1 - p_g1), (1 - p_y1) * p_g1, p_y1 * (1 - p_g1), p_y1 * p_g1,
    ])
    with np.errstate(divide='ignore', invalid='ignore'):
        terms = np.where(cells > 0, cells * np.log(cells / marginal), 0.0)
    return terms.sum(axis=1)


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------

def brute_force_estimand(cells: Union[DiscreteDistribution, Mapping], metric: MetricLike,
                         threshold: float = 0.5) -> float:
    """Exact estimand of a finite (X, G, Y) law"""
    law = cells if isinstance(cells, DiscreteDistribution) else DiscreteDistribution(cells)
    metric = _resolve_metric(metric, threshold)
    table = law.table  # [x, g, y]
    joint = law.conditional_joint()

    if metric == MetricId.CMI:
        return float(np.sum(law.p_x * _entropy_terms(joint)))

    d = law.decision_function()
    values = (d >= metric.threshold).astype(float) if metric.kind == Kind.TRADITIONAL else d
    if metric.metric == Metric.PARITY:
        weights = table.sum(axis=2)  # P(x, g)
    else:
        weights = table[:, :, 1]  # P(x, g, Y=1)

    means = []
    for g in (0, 1):
        mass = weights[:, g].sum()
        if mass <= 0:
            raise InvalidDistribution(f"Law puts no mass on the conditioning event for group {g}")
        means.append(float(np.sum(weights[:, g] * values) / mass))
    return means[1] - means[0]


# ---------------------------------------------------------------------------
# Monte Carlo truth
# ---------------------------------------------------------------------------

def _ratio_influence(indicator: np.ndarray, weight: np.ndarray, values: np.ndarray) -> tuple:
    """Ratio mean sum(1{g} w v) / sum(1{g} w) and its per-draw influence values"""
    w = indicator * weight
    ratio = float(np.sum(w * values) / np.sum(w))
    return ratio, w * (values - ratio) / w.mean()


def _fairness_truth(law, metric: MetricSpec, n_mc: int, rng: np.random.Generator) -> TruthValue:
    x, g = law.sample_covariates(n_mc, rng)
    d = law.decision_function(x)
    values = (d >= metric.threshold).astype(float) if metric.kind == Kind.TRADITIONAL else d
    if metric.metric == Metric.PARITY:
        weight1 = weight0 = np.ones(n_mc)
    else:
        weight1 = law.outcome_probability(x, 1)
        weight0 = law.outcome_probability(x, 0)

    psi1, infl1 = _ratio_influence((g == 1).astype(float), weight1, values)
    psi0, infl0 = _ratio_influence((g == 0).astype(float), weight0, values)
    influence = infl1 - infl0
    return TruthValue(psi1 - psi0, float(influence.std(ddof=1) / np.sqrt(n_mc)))


def _cmi_truth(law, n_mc: int, rng: np.random.Generator, reference: str) -> TruthValue:
    if isinstance(law, CmiSimLaw):
        x = rng.standard_normal((n_mc, law.dim))
    else:
        x, _ = law.sample_covariates(n_mc, rng)
    cells = law.joint_probability(x)

    if reference == 'conditional':
        terms = _entropy_terms(cells)
        return TruthValue(float(terms.mean()), float(terms.std(ddof=1) / np.sqrt(n_mc)))
    if reference != 'marginal':
        raise ValueError(f"reference must be 'marginal' or 'conditional', got {reference!r}")
    if not isinstance(law, CmiSimLaw):
        raise ValueError("The marginal reference is only defined for cmi_sim")

    # Dependence of the binarized pair with the covariate signal integrated out
    table = cells.mean(axis=0)
    p_y1 = table[2] + table[3]
    p_g1 = table[1] + table[3]
    product = np.array([(1 - p_y1) * (1 - p_g1), (1 - p_y1) * p_g1, p_y1 * (1 - p_g1), p_y1 * p_g1])
    log_ratio = np.log(np.where(table > 0, table, 1.0) / product)
    value = float(np.sum(np.where(table > 0, table * log_ratio, 0.0)))
    influence = cells @ log_ratio
    return TruthValue(value, float(influence.std(ddof=1) / np.sqrt(n_mc)))


def mc_truth(spec: DgpSpec, metric: MetricLike, n_mc: int = 1_000_000, seed: int = 0,
             reference: str = 'marginal', threshold: float = 0.5) -> TruthValue:
    """
    Estimand value of the law behind ``spec`` with its Monte Carlo standard error.

    Discrete laws are enumerated exactly (stderr 0). For cmi_sim, ``reference``
    selects the dependence of the binarized pair marginally over the latent inputs
    (``marginal``) or the covariate-conditional mutual information (``conditional``).
    Other laws always use the conditional form.
    """
    metric = _resolve_metric(metric, threshold)
    if spec.id == DgpId.DISCRETE_CUSTOM:
        return TruthValue(brute_force_estimand(spec.law(), metric), 0.0)
    if n_mc < MIN_MC_DRAWS:
        raise InsufficientData(f"n_mc must be at least {MIN_MC_DRAWS}, got {n_mc}")

    law = spec.law()
    rng = make_generator(seed)
    if metric == MetricId.CMI:
        if spec.id != DgpId.CMI_SIM:
            reference = 'conditional'
        truth = _cmi_truth(law, n_mc, rng, reference)
    else:
        truth = _fairness_truth(law, metric, n_mc, rng)

    logger.info("MC truth for %s / %s: %.5f (se %.2e, n_mc=%d)",
                spec.label, metric_label(metric), truth.value, truth.stderr, n_mc)
    return truth
