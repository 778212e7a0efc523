"""scikit-learn style wrappers.

Rows of ``X`` are routes; columns are hops.

* :class:`OutageTransformer` maps line-of-sight fractions to per-hop
  decoding-error probabilities.
* :class:`ArqAllocator` maps per-hop error probabilities to the optimal ARQ
  allocation (``transform``) or its drop probability (``predict``).

Both compose in a :class:`sklearn.pipeline.Pipeline`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .channel import ASYMPTOTIC, LinkSpec, outage_probability
from .optimizer import Method, OptimizationReport, OptimizationRequest, optimize
from .pdp import ClusterCase, NetworkLayout, Strategy
from .validation import check_probability_matrix

__all__ = ["ArqAllocator", "OutageTransformer"]


class OutageTransformer(TransformerMixin, BaseEstimator):
    """Per-hop decoding-error probability from line-of-sight fractions.

    Parameters
    ----------
    snr_db : float
        Average SNR of every hop, in dB.
    rate : float
        Code rate in bits per channel use.
    blocklength : int or "asymptotic"
        Blocklength ``K`` of the finite-blocklength approximation.
    """

    def __init__(self, snr_db: float = 10.0, rate: float = 1.0, blocklength=500):
        self.snr_db = snr_db
        self.rate = rate
        self.blocklength = blocklength

    def _k(self):
        return ASYMPTOTIC if self.blocklength == "asymptotic" else self.blocklength

    def fit(self, X, y=None):
        X = validate_data(self, X, reset=True, dtype=np.float64)
        check_probability_matrix(X, "X")
        # validate parameters eagerly
        LinkSpec(0.0, self.snr_db, self.rate, self._k())
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        check_probability_matrix(X, "X")
        k = self._k()
        cache: dict[float, float] = {}
        out = np.empty_like(X)
        for idx, c in np.ndenumerate(X):
            if c not in cache:
                cache[c] = outage_probability(LinkSpec(float(c), self.snr_db, self.rate, k))
            out[idx] = cache[c]
        return out


class ArqAllocator(TransformerMixin, BaseEstimator):
    """Optimal ARQ allocation for each route in ``X`` (per-hop error probabilities).

    Parameters
    ----------
    q_sum : int
        Total number of attempts to distribute.
    strategy : {"non_coop", "sc", "csc"}
    case : {1, 2, 3} or None
        Cluster position for ``strategy="csc"``.
    n_su, n_cy, n_sw : int
        Hops before, inside and after the cluster.
    method : {"exhaustive", "one_fold", "multi_fold", "greedy"}
    folds : int or None
    """

    def __init__(self, q_sum: int = 10, strategy: str = "sc", case=None, n_su: int = 0, n_cy: int = 2,
                 n_sw: int = 0, method: str = "exhaustive", folds=None):
        self.q_sum = q_sum
        self.strategy = strategy
        self.case = case
        self.n_su = n_su
        self.n_cy = n_cy
        self.n_sw = n_sw
        self.method = method
        self.folds = folds

    def _layout(self, n_hops: int) -> NetworkLayout:
        strategy = Strategy(self.strategy)
        if strategy is Strategy.CSC:
            if self.case is None:
                raise ValueError("strategy='csc' needs a cluster case")
            layout = NetworkLayout.csc(ClusterCase(self.case), self.n_su, self.n_cy, self.n_sw)
            if layout.n_hops != n_hops:
                raise ValueError(f"cluster segments cover {layout.n_hops} hops but X has {n_hops} columns")
            return layout
        return NetworkLayout(n_hops, strategy)

    def fit(self, X, y=None):
        X = validate_data(self, X, reset=True, dtype=np.float64)
        check_probability_matrix(X, "X")
        self.layout_ = self._layout(X.shape[1])
        self.method_ = Method(self.method)
        # surface request-level errors (budget, method/strategy mismatch) at fit time
        OptimizationRequest(self.layout_, tuple(X[0]), self.q_sum, self.method_, self.folds)
        return self

    def allocate(self, p) -> OptimizationReport:
        """Full optimisation report for one route."""
        check_is_fitted(self, "layout_")
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.n_features_in_,):
            raise ValueError(f"expected {self.n_features_in_} outage probabilities, got shape {p.shape}")
        check_probability_matrix(p[None, :], "p")
        return optimize(OptimizationRequest(self.layout_, tuple(p), self.q_sum, self.method_, self.folds))

    def _reports(self, X):
        check_is_fitted(self, "layout_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        check_probability_matrix(X, "X")
        return [self.allocate(row) for row in X]

    def transform(self, X):
        """Best allocation per route, shape ``(n_routes, n_hops)``."""
        return np.array([r.best_allocation for r in self._reports(X)], dtype=np.int64).reshape(-1, self.n_features_in_)

    def predict(self, X):
        """Drop probability of the best allocation per route."""
        return np.array([r.best_pdp for r in self._reports(X)], dtype=np.float64)
