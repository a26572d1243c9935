"""
Simulated data-generating processes with known conditional laws.

Every law exposes P(G=1|x), P(Y=1|x, G=g) and the joint table P(Y=y, G=g | x), so the
ground truth of any fairness functional or of the conditional mutual information can be
computed from the law itself rather than from a fitted model.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Hashable, Mapping, Optional, Tuple, Union

import numpy as np
from scipy.special import expit
from scipy.stats import multivariate_normal

from .dataset import Dataset
from ..utils.errors import InvalidDistribution, UnknownSpec
from ..utils.rng import make_generator

logger = logging.getLogger(__name__)

SETTING_DIM = 5
CMI_DIM = 3


class DgpId(str, Enum):
    SETTING1 = 'setting1'
    SETTING2 = 'setting2'
    SETTING3 = 'setting3'
    CMI_SIM = 'cmi_sim'
    DISCRETE_CUSTOM = 'discrete_custom'


def setting_covariance() -> np.ndarray:
    """Identity variances with Cov(X2, X3) = 0.5 and Cov(X4, X5) = -0.5"""
    cov = np.eye(SETTING_DIM)
    cov[1, 2] = cov[2, 1] = 0.5
    cov[3, 4] = cov[4, 3] = -0.5
    return cov


# ---------------------------------------------------------------------------
# Discrete laws given as explicit cells
# ---------------------------------------------------------------------------

class DiscreteDistribution:
    """
    Finite joint law of (X, G, Y) given as ``{(x, g, y): probability}``.

    ``x`` may be a number or a tuple of numbers; tuples become multi-column features.
    """

    def __init__(self, cells: Mapping[Tuple[Hashable, int, int], float], tol: float = 1e-9):
        if not cells:
            raise InvalidDistribution("A discrete law needs at least one cell")
        support = []
        for key, prob in cells.items():
            if len(key) != 3:
                raise InvalidDistribution(f"Cell keys must be (x, g, y), got {key!r}")
            _, g, y = key
            if g not in (0, 1) or y not in (0, 1):
                raise InvalidDistribution(f"g and y must be 0/1 in cell {key!r}")
            if not np.isfinite(prob) or prob < 0:
                raise InvalidDistribution(f"Cell {key!r} has invalid probability {prob}")
            support.append(key[0])
        total = float(sum(cells.values()))
        if abs(total - 1.0) > tol:
            raise InvalidDistribution(f"Cell probabilities sum to {total}, not 1")

        self.x_values = sorted(set(support), key=lambda x: np.atleast_1d(x).tolist())
        self._index = {x: i for i, x in enumerate(self.x_values)}
        # table[i, g, y] = P(X = x_i, G = g, Y = y)
        self.table = np.zeros((len(self.x_values), 2, 2))
        for (x, g, y), prob in cells.items():
            self.table[self._index[x], g, y] += prob
        self.cells = dict(cells)

    @classmethod
    def from_params(cls, params: Mapping[str, Any]) -> 'DiscreteDistribution':
        raw = params.get('cells')
        if raw is None:
            raise InvalidDistribution("discrete_custom needs a 'cells' parameter")
        if isinstance(raw, DiscreteDistribution):
            return raw
        if isinstance(raw, Mapping):
            return cls(raw)
        # JSON form: [[x, g, y, p], ...]
        cells = {}
        for row in raw:
            *x, g, y, p = row
            key = x[0] if len(x) == 1 else tuple(x)
            cells[(key, int(g), int(y))] = float(p)
        return cls(cells)

    @classmethod
    def eight_cell(cls) -> 'DiscreteDistribution':
        """
        X in {0, 1}; P(G=1) = 0.5; P(X=1|G=1) = 0.7, P(X=1|G=0) = 0.3;
        P(Y=1|X=0) = 0.2, P(Y=1|X=1) = 0.8; Y independent of G given X.
        """
        p_x1 = {0: 0.3, 1: 0.7}
        p_y1 = {0: 0.2, 1: 0.8}
        cells = {}
        for x in (0, 1):
            for g in (0, 1):
                px = p_x1[g] if x == 1 else 1.0 - p_x1[g]
                for y in (0, 1):
                    py = p_y1[x] if y == 1 else 1.0 - p_y1[x]
                    cells[(x, g, y)] = 0.5 * px * py
        return cls(cells)

    @property
    def dim(self) -> int:
        return np.atleast_1d(self.x_values[0]).size

    @property
    def x_matrix(self) -> np.ndarray:
        return np.array([np.atleast_1d(x) for x in self.x_values], dtype=float)

    @property
    def p_x(self) -> np.ndarray:
        return self.table.sum(axis=(1, 2))

    def conditional_joint(self) -> np.ndarray:
        """P(Y=y, G=g | X=x_i) with columns 2y + g; zero rows for unsupported x"""
        p_x = self.p_x
        safe = np.where(p_x > 0, p_x, 1.0)[:, None]
        joint = np.column_stack([
            self.table[:, 0, 0], self.table[:, 1, 0], self.table[:, 0, 1], self.table[:, 1, 1],
        ])
        return joint / safe

    def decision_function(self) -> np.ndarray:
        """D(x_i) = P(Y=1 | X=x_i)"""
        joint = self.conditional_joint()
        return joint[:, 2] + joint[:, 3]

    def group_probability(self) -> np.ndarray:
        joint = self.conditional_joint()
        return joint[:, 1] + joint[:, 3]

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        flat = self.table.reshape(-1)
        draws = rng.choice(flat.size, size=n, p=flat / flat.sum())
        x_index, g, y = np.unravel_index(draws, self.table.shape)
        return Dataset(
            features=self.x_matrix[x_index],
            group=g,
            outcome=y,
            feature_names=tuple(f'X{j + 1}' for j in range(self.dim)),
        )


# ---------------------------------------------------------------------------
# Continuous simulation laws
# ---------------------------------------------------------------------------

class SimulationLaw:
    """Base for laws with continuous covariates; subclasses define the conditionals"""
    dim = SETTING_DIM

    def sample_covariates(self, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def group_probability(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def outcome_probability(self, x: np.ndarray, g: Union[int, np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def joint_probability(self, x: np.ndarray) -> np.ndarray:
        """P(Y=y, G=g | x) with columns 2y + g"""
        pi = self.group_probability(x)
        q0 = self.outcome_probability(x, 0)
        q1 = self.outcome_probability(x, 1)
        return np.column_stack([(1 - pi) * (1 - q0), pi * (1 - q1), (1 - pi) * q0, pi * q1])

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        """D(x) = P(Y=1 | X=x)"""
        joint = self.joint_probability(x)
        return joint[:, 2] + joint[:, 3]

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        x, g = self.sample_covariates(n, rng)
        y = (rng.random(n) < self.outcome_probability(x, g)).astype(int)
        return Dataset(features=x, group=g, outcome=y,
                       feature_names=tuple(f'X{j + 1}' for j in range(self.dim)))


class Setting1Law(SimulationLaw):
    """Group shifts X2 up and X5 down; Y|X follows a logistic model with interactions"""
    shift = np.array([0.0, 0.5, 0.0, 0.0, -0.5])

    def __init__(self):
        self.cov = setting_covariance()

    def sample_covariates(self, n, rng):
        g = (rng.random(n) < 0.5).astype(int)
        x = rng.multivariate_normal(np.zeros(self.dim), self.cov, size=n, method='cholesky')
        return x + g[:, None] * self.shift, g

    def group_probability(self, x):
        log_ratio = (multivariate_normal.logpdf(x, mean=self.shift, cov=self.cov)
                     - multivariate_normal.logpdf(x, mean=np.zeros(self.dim), cov=self.cov))
        return expit(np.atleast_1d(log_ratio))

    def outcome_probability(self, x, g):
        x = np.atleast_2d(x)
        eta = (-2 * x[:, 0] + 3 * x[:, 1] - 4 * x[:, 2] + 3 * x[:, 3] - x[:, 4]
               + 2 * x[:, 1] * x[:, 4] + x[:, 2] * x[:, 3])
        return expit(eta)


class Setting2Law(SimulationLaw):
    """X independent of G; the logistic slope on sum(X) is 2 for G=1 and 0.5 for G=0"""
    slopes = (0.5, 2.0)

    def __init__(self):
        self.cov = setting_covariance()

    def sample_covariates(self, n, rng):
        g = (rng.random(n) < 0.5).astype(int)
        x = rng.multivariate_normal(np.zeros(self.dim), self.cov, size=n, method='cholesky')
        return x, g

    def group_probability(self, x):
        return np.full(np.atleast_2d(x).shape[0], 0.5)

    def outcome_probability(self, x, g):
        score = np.atleast_2d(x).sum(axis=1)
        slope = np.where(np.asarray(g) == 1, self.slopes[1], self.slopes[0])
        return expit(slope * score)


class Setting3Law(SimulationLaw):
    """Both Y and G are logistic in the squared covariates"""

    def __init__(self):
        self.cov = setting_covariance()

    def sample_covariates(self, n, rng):
        x = rng.multivariate_normal(np.zeros(self.dim), self.cov, size=n, method='cholesky')
        g = (rng.random(n) < self.group_probability(x)).astype(int)
        return x, g

    def group_probability(self, x):
        sq = np.atleast_2d(x) ** 2
        return expit(sq[:, 0] + sq[:, 1] - sq[:, 2] - 2 * sq[:, 3] + sq[:, 4])

    def outcome_probability(self, x, g):
        sq = np.atleast_2d(x) ** 2
        return expit(4 * sq[:, 0] + 2 * sq[:, 1] + sq[:, 2] - 3 * sq[:, 3] - 4 * sq[:, 4])


def _clip_integral(x: np.ndarray) -> np.ndarray:
    """Antiderivative of clip(u, 0, 1)"""
    return np.where(x <= 0, 0.0, np.where(x <= 1, 0.5 * x ** 2, 0.5 + (x - 1)))


def _clip_square_integral(x: np.ndarray) -> np.ndarray:
    """Antiderivative of clip(u, 0, 1) ** 2"""
    return np.where(x <= 0, 0.0, np.where(x <= 1, x ** 3 / 3.0, 1.0 / 3.0 + (x - 1)))


class CmiSimLaw(SimulationLaw):
    """
    Y = (c*S + U + f(X)) / (c + 2) and G = (c*S + V + f(X)) / (c + 2) with
    S, U, V ~ Uniform[0, 1], f(X) = sigmoid(beta'X), X ~ N(0, I_3); Y and G are then
    binarized at ``threshold``. The shared S makes Y and G dependent beyond X.
    """
    dim = CMI_DIM

    def __init__(self, c: float = 0.0, beta: Union[float, np.ndarray] = 1.0, threshold: float = 0.5):
        if c < 0:
            raise UnknownSpec(f"cmi_sim weight c must be >= 0, got {c}")
        self.c = float(c)
        self.beta = np.broadcast_to(np.asarray(beta, dtype=float), (self.dim,)).copy()
        self.threshold = float(threshold)

    def signal(self, x: np.ndarray) -> np.ndarray:
        return expit(np.atleast_2d(x) @ self.beta)

    def _pass_probability(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        E_S[q] and E_S[q^2] where q = P(U >= cut | S, X) and cut makes the
        binarized variable equal to 1.
        """
        f = self.signal(x)
        # U >= threshold*(c+2) - c*S - f  <=>  q = clip(f + c*S - (threshold*(c+2) - 1), 0, 1)
        offset = f - (self.threshold * (self.c + 2.0) - 1.0)
        if self.c == 0:
            q = np.clip(offset, 0.0, 1.0)
            return q, q ** 2
        low, high = offset, offset + self.c
        first = (_clip_integral(high) - _clip_integral(low)) / self.c
        second = (_clip_square_integral(high) - _clip_square_integral(low)) / self.c
        return first, second

    def sample_covariates(self, n, rng):
        x = rng.standard_normal((n, self.dim))
        g = (rng.random(n) < self.group_probability(x)).astype(int)
        return x, g

    def group_probability(self, x):
        return self._pass_probability(x)[0]

    def joint_probability(self, x):
        first, second = self._pass_probability(x)
        both = second
        single = first - second
        return np.column_stack([1.0 - 2.0 * first + second, single, single, both])

    def outcome_probability(self, x, g):
        joint = self.joint_probability(x)
        g = np.asarray(g)
        p_g1 = joint[:, 1] + joint[:, 3]
        given_one = joint[:, 3] / np.where(p_g1 > 0, p_g1, 1.0)
        given_zero = joint[:, 2] / np.where(1 - p_g1 > 0, 1 - p_g1, 1.0)
        return np.where(g == 1, given_one, given_zero)

    def sample(self, n, rng):
        x = rng.standard_normal((n, self.dim))
        s, u, v = rng.random(n), rng.random(n), rng.random(n)
        f = self.signal(x)
        y_cont = (self.c * s + u + f) / (self.c + 2.0)
        g_cont = (self.c * s + v + f) / (self.c + 2.0)
        return Dataset(
            features=x,
            group=(g_cont >= self.threshold).astype(int),
            outcome=(y_cont >= self.threshold).astype(int),
            feature_names=tuple(f'Z{j + 1}' for j in range(self.dim)),
        )


# ---------------------------------------------------------------------------
# Specs and sampling entry point
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DgpSpec:
    """Identifier of a generating process plus its parameters"""
    id: DgpId
    params: Dict[str, Any] = field(default_factory=dict, compare=False)
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, 'id', DgpId(self.id))
        except ValueError as e:
            raise UnknownSpec(f"Unknown data-generating process: {self.id!r}") from e
        self.law()

    @classmethod
    def parse(cls, text: Union[str, Mapping[str, Any]], seed: int = 0) -> 'DgpSpec':
        """
        Build from ``"setting1"``, ``"cmi_sim:c=1.5"`` or a mapping
        ``{"id": "cmi_sim", "c": 1.5}``.
        """
        if isinstance(text, Mapping):
            params = {k: v for k, v in text.items() if k not in ('id', 'seed')}
            return cls(text['id'], params, int(text.get('seed', seed)))
        name, _, rest = str(text).partition(':')
        params = {}
        for item in filter(None, rest.split(',')):
            key, _, value = item.partition('=')
            params[key.strip()] = float(value)
        return cls(name.strip(), params, seed)

    @property
    def label(self) -> str:
        shown = {k: v for k, v in sorted(self.params.items()) if k != 'cells'}
        if not shown:
            return self.id.value
        return self.id.value + ':' + ','.join(f'{k}={v}' for k, v in shown.items())

    def law(self) -> Union[SimulationLaw, DiscreteDistribution]:
        if self.id == DgpId.SETTING1:
            return Setting1Law()
        if self.id == DgpId.SETTING2:
            return Setting2Law()
        if self.id == DgpId.SETTING3:
            return Setting3Law()
        if self.id == DgpId.CMI_SIM:
            return CmiSimLaw(
                c=float(self.params.get('c', 0.0)),
                beta=self.params.get('beta', 1.0),
                threshold=float(self.params.get('threshold', 0.5)),
            )
        return DiscreteDistribution.from_params(self.params)


def generate(spec: DgpSpec, n: int, rng: Optional[Union[np.random.Generator, int]] = None) -> Dataset:
    """Draw ``n`` rows from the law; reproducible for a fixed spec seed or generator"""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if rng is None:
        rng = make_generator(spec.seed)
    elif not isinstance(rng, np.random.Generator):
        rng = make_generator(int(rng))
    data = spec.law().sample(int(n), rng)
    logger.debug("Generated %d rows from %s", n, spec.label)
    return data
