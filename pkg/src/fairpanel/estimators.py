"""scikit-learn style wrappers around the selectors and the auditor.

``X`` is either a precomputed distance matrix (``metric="precomputed"``) or
a feature matrix turned into distances with
:func:`sklearn.metrics.pairwise_distances`.  ``sample_weight`` gives integer
multiplicities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.metrics import pairwise_distances
from sklearn.utils.validation import check_array, check_is_fitted, check_random_state

from .allocation import fractional_allocation
from .audit import audit_panel, exact_core_violation
from .birkhoff import BIRKHOFF_MAX_N, fgc_distribution, sample_panel
from .metric import MetricInstance, Panel
from .selectors import afgc_sample, uniform_panel


def _instance(X, sample_weight, metric: str) -> MetricInstance:
    if isinstance(X, MetricInstance):
        if sample_weight is not None:
            raise ValueError("pass weights inside the MetricInstance")
        return X
    X = check_array(X, dtype=float)
    if metric == "precomputed":
        if X.shape[0] != X.shape[1]:
            raise ValueError("precomputed distances must be square")
        D = X
    else:
        D = pairwise_distances(X, metric=metric)
        D = np.triu(D, 1)
        D = D + D.T
    if sample_weight is not None:
        sample_weight = check_array(sample_weight, ensure_2d=False, dtype=float)
    return MetricInstance(D, weight=sample_weight)


def _check_k(k, N):
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= N:
        raise ValueError(f"k must be an integer in [1, N={N}], got {k!r}")


class _Selector(BaseEstimator):
    def _fit_instance(self, X, sample_weight):
        self.instance_ = _instance(X, sample_weight, self.metric)
        _check_k(self.k, self.instance_.N)
        self.n_features_in_ = self.instance_.n
        return self.instance_

    def sample(self, n_panels: int = 1, random_state=None) -> list[Panel]:
        """Draw ``n_panels`` independent panels."""
        check_is_fitted(self, "instance_")
        rng = check_random_state(self.random_state if random_state is None else random_state)
        gen = np.random.default_rng(rng.randint(2**31 - 1))
        return [self._draw(gen) for _ in range(n_panels)]

    def fit_sample(self, X, sample_weight=None) -> Panel:
        return self.fit(X, sample_weight=sample_weight).sample(1)[0]


class UniformSelection(_Selector):
    """Uniformly random panel of ``k`` individuals."""

    def __init__(self, k: int = 1, metric: str = "precomputed", random_state=None):
        self.k = k
        self.metric = metric
        self.random_state = random_state

    def fit(self, X, y=None, sample_weight=None):
        self._fit_instance(X, sample_weight)
        return self

    def _draw(self, gen):
        return uniform_panel(self.instance_, self.k, gen)


class FairGreedyCapture(TransformerMixin, _Selector):
    """Fair greedy capture: exact panel distribution with one seat per ball.

    Attributes
    ----------
    allocation_ : FractionalAllocation
    distribution_ : PanelDistribution
    """

    def __init__(self, k: int = 1, metric: str = "precomputed", method: str = "auto",
                 max_exact_n: int = BIRKHOFF_MAX_N, random_state=None):
        self.k = k
        self.metric = metric
        self.method = method
        self.max_exact_n = max_exact_n
        self.random_state = random_state

    def fit(self, X, y=None, sample_weight=None):
        inst = self._fit_instance(X, sample_weight)
        self.allocation_ = fractional_allocation(inst, self.k)
        self.distribution_ = fgc_distribution(inst, self.k, self.method, self.max_exact_n, self.allocation_)
        return self

    def _draw(self, gen):
        return sample_panel(self.distribution_, gen)

    def transform(self, X=None):
        """Ball-membership indicators, shape ``(n, k)``."""
        check_is_fitted(self, "allocation_")
        return (self.allocation_.units.T > 0).astype(np.int8)


class AugmentedFairGreedyCapture(_Selector):
    """Augmented greedy capture for a known ``q``."""

    def __init__(self, k: int = 1, q: int = 1, metric: str = "precomputed", random_state=None):
        self.k = k
        self.q = q
        self.metric = metric
        self.random_state = random_state

    def fit(self, X, y=None, sample_weight=None):
        inst = self._fit_instance(X, sample_weight)
        if not 1 <= self.q <= self.k:
            raise ValueError(f"q must lie in [1, k={self.k}], got {self.q}")
        afgc_sample(inst, self.k, self.q, 0)  # runs and caches the detection phase
        return self

    def _draw(self, gen):
        return afgc_sample(self.instance_, self.k, self.q, gen)


class CoreAuditor(BaseEstimator):
    """Core-violation scorer for panels of one population.

    ``exact=True`` enumerates every deviation (small populations only);
    otherwise the nearest-neighbor audit estimate is returned.
    """

    def __init__(self, k: int = 1, q: int = 1, metric: str = "precomputed", exact: bool = False, max_n: int = 14):
        self.k = k
        self.q = q
        self.metric = metric
        self.exact = exact
        self.max_n = max_n

    def fit(self, X, y=None, sample_weight=None):
        self.instance_ = _instance(X, sample_weight, self.metric)
        _check_k(self.k, self.instance_.N)
        self.n_features_in_ = self.instance_.n
        return self

    def violation(self, panel) -> float:
        check_is_fitted(self, "instance_")
        if self.exact:
            return exact_core_violation(self.instance_, panel, self.k, self.q, max_n=self.max_n).alpha_star
        return audit_panel(self.instance_, panel, self.k, self.q).alpha_hat

    def score(self, panel) -> float:
        """Negated violation, so larger is better."""
        return -self.violation(panel)
