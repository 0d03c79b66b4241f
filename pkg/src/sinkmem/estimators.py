"""Estimator-style front end: store patterns with fit, recall with predict.

Both memories accept the same training input: a PatternBank, a sequence of
measures, or a plain array of shape (n_patterns, M, d) which is wrapped with
uniform weights. Labels default to the pattern indices.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baseline import retrieve_euclidean
from .measures import DiscreteMeasure, DomainSpec, MeasureParams, PatternBank, min_pairwise_distance
from .retrieval import RetrievalConfig, retrieve, success_metric
from .sinkhorn import SinkhornConfig


def as_measures(X) -> list[DiscreteMeasure]:
    """Coerce fit/predict input into a list of measures."""
    if isinstance(X, PatternBank):
        return list(X.patterns)
    if isinstance(X, DiscreteMeasure):
        return [X]
    if isinstance(X, np.ndarray):
        if X.ndim != 3:
            raise ValueError("array input must have shape (n, M, d)")
        m = X.shape[1]
        return [DiscreteMeasure(weights=np.full(m, 1.0 / m), supports=s) for s in X]
    out = []
    for item in X:
        if isinstance(item, DiscreteMeasure):
            out.append(item)
        elif isinstance(item, tuple) and len(item) == 2:
            out.append(DiscreteMeasure(weights=item[0], supports=item[1]))
        else:
            arr = np.asarray(item, dtype=np.float64)
            if arr.ndim != 2:
                raise ValueError("each pattern must be a measure, (weights, supports), or (M, d) array")
            out.append(DiscreteMeasure(weights=np.full(arr.shape[0], 1.0 / arr.shape[0]), supports=arr))
    return out


def _derive_bank(measures: list[DiscreteMeasure], domain, padding: float) -> PatternBank:
    if not measures:
        raise ValueError("need at least one pattern")
    m = measures[0].num_atoms
    d = measures[0].dim
    if any(p.num_atoms != m or p.dim != d for p in measures):
        raise ValueError("all patterns must share the same atom count and dimension")
    if domain is None:
        pts = np.concatenate([p.supports for p in measures])
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        span = hi - lo
        pad = np.where(span > 0, padding * span, 1.0)
        domain = DomainSpec.box(lo - pad, hi + pad)
    min_w = min(float(np.min(p.weights)) for p in measures)
    seps = [min_pairwise_distance(p.supports)[0] for p in measures]
    min_sep = float(min(seps))
    if not min_sep > 0:
        raise ValueError("a pattern has coincident atoms; separation-based defaults undefined")
    params = MeasureParams(M=m, a_min=0.5 * min_w, delta_min=0.5 * min_sep)
    return PatternBank(patterns=tuple(measures), params=params, domain=domain)


class SinkhornShkMemory(BaseEstimator):
    """Associative memory with divergence energy and transport retrieval.

    fit stores the patterns (deriving the domain and measure constraints when
    not given); predict runs retrieval from each query and returns the label
    of the nearest stored pattern; transform returns the retrieved measures.
    """

    def __init__(
        self,
        beta: float = 50.0,
        epsilon: float = 0.05,
        eta: float = 1.3,
        lam: float = 1.0,
        max_iter: int = 200,
        stop_tol: float = 1e-7,
        weight_stop_tol: float = 1e-9,
        enable_weight_step: bool = False,
        sinkhorn_max_iter: int = 120,
        sinkhorn_tol: float = 1e-9,
        boundary_policy: str = "clip",
        domain=None,
        domain_padding: float = 0.2,
    ):
        self.beta = beta
        self.epsilon = epsilon
        self.eta = eta
        self.lam = lam
        self.max_iter = max_iter
        self.stop_tol = stop_tol
        self.weight_stop_tol = weight_stop_tol
        self.enable_weight_step = enable_weight_step
        self.sinkhorn_max_iter = sinkhorn_max_iter
        self.sinkhorn_tol = sinkhorn_tol
        self.boundary_policy = boundary_policy
        self.domain = domain
        self.domain_padding = domain_padding

    def _retrieval_config(self) -> RetrievalConfig:
        return RetrievalConfig(
            beta=self.beta,
            eta=self.eta,
            lam=self.lam,
            max_iter=self.max_iter,
            stop_tol=self.stop_tol,
            weight_stop_tol=self.weight_stop_tol,
            enable_weight_step=self.enable_weight_step,
            boundary_policy=self.boundary_policy,
        )

    def _sinkhorn_config(self) -> SinkhornConfig:
        return SinkhornConfig(
            epsilon=self.epsilon, max_iter=self.sinkhorn_max_iter, tol=self.sinkhorn_tol
        )

    def fit(self, X, y=None):
        if isinstance(X, PatternBank) and self.domain is None:
            self.bank_ = X
        else:
            self.bank_ = _derive_bank(as_measures(X), self.domain, self.domain_padding)
        n = self.bank_.n_patterns
        if y is None:
            self.labels_ = np.arange(n)
        else:
            y = np.asarray(y)
            if y.shape[0] != n:
                raise ValueError(f"got {y.shape[0]} labels for {n} patterns")
            self.labels_ = y
        return self

    def retrieve_trace(self, query):
        check_is_fitted(self, "bank_")
        (measure,) = as_measures([query] if not isinstance(query, DiscreteMeasure) else query)
        return retrieve(measure, self.bank_, self._retrieval_config(), self._sinkhorn_config())

    def transform(self, X) -> list[DiscreteMeasure]:
        check_is_fitted(self, "bank_")
        return [self.retrieve_trace(q).final for q in as_measures(X)]

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "bank_")
        ot_cfg = self._sinkhorn_config()
        out = []
        for final in self.transform(X):
            match = success_metric(final, self.bank_, ot_cfg)
            out.append(self.labels_[match.index])
        return np.asarray(out)


class EuclideanHopfieldMemory(BaseEstimator):
    """Flat-vector attention memory over the same inputs, for comparison.

    Retrieval happens in the vectorized space; classification of the final
    state still uses the nearest divergence, so both memories are scored in
    the same geometry.
    """

    def __init__(
        self,
        beta: float = 50.0,
        max_iter: int = 200,
        stop_tol: float = 1e-9,
        epsilon: float = 0.05,
        sinkhorn_max_iter: int = 120,
        sinkhorn_tol: float = 1e-9,
        domain=None,
        domain_padding: float = 0.2,
    ):
        self.beta = beta
        self.max_iter = max_iter
        self.stop_tol = stop_tol
        self.epsilon = epsilon
        self.sinkhorn_max_iter = sinkhorn_max_iter
        self.sinkhorn_tol = sinkhorn_tol
        self.domain = domain
        self.domain_padding = domain_padding

    def _sinkhorn_config(self) -> SinkhornConfig:
        return SinkhornConfig(
            epsilon=self.epsilon, max_iter=self.sinkhorn_max_iter, tol=self.sinkhorn_tol
        )

    def fit(self, X, y=None):
        if isinstance(X, PatternBank) and self.domain is None:
            self.bank_ = X
        else:
            self.bank_ = _derive_bank(as_measures(X), self.domain, self.domain_padding)
        n = self.bank_.n_patterns
        if y is None:
            self.labels_ = np.arange(n)
        else:
            y = np.asarray(y)
            if y.shape[0] != n:
                raise ValueError(f"got {y.shape[0]} labels for {n} patterns")
            self.labels_ = y
        return self

    def transform(self, X) -> list[DiscreteMeasure]:
        check_is_fitted(self, "bank_")
        return [
            retrieve_euclidean(
                q, self.bank_, beta=self.beta, max_iter=self.max_iter, stop_tol=self.stop_tol
            ).final
            for q in as_measures(X)
        ]

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "bank_")
        ot_cfg = self._sinkhorn_config()
        out = []
        for final in self.transform(X):
            match = success_metric(final, self.bank_, ot_cfg)
            out.append(self.labels_[match.index])
        return np.asarray(out)
