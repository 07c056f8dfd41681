"""scikit-learn style wrapper around the grid pipeline."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dims
from .pipeline import PipelineConfig, run


class DistillationOptimizer(BaseEstimator):
    """Optimal (state, map) protocols over a grid of success probabilities.

    ``fit(p_grid)`` runs the pipeline on the given probabilities (multiples
    of 0.01, contiguous); ``predict(p)`` returns the best fidelity available
    at success probability at least ``p``, i.e. the value at the next grid
    point at or above ``p``.

    >>> est = DistillationOptimizer(d=2, s=2, r=1).fit([1.0])
    >>> round(float(est.predict([1.0])[0]), 3)
    0.75
    """

    def __init__(self, d=2, s=2, r=1, outermap=False, erasure=False, n_restarts=2, workers=1, random_state=0):
        self.d = d
        self.s = s
        self.r = r
        self.outermap = outermap
        self.erasure = erasure
        self.n_restarts = n_restarts
        self.workers = workers
        self.random_state = random_state

    def _config(self, pmin, pmax):
        check_dims(self.d, self.s, self.r)
        return PipelineConfig(
            self.d,
            self.s,
            self.r,
            pmin=pmin,
            pmax=pmax,
            outermap=self.outermap,
            erasure=self.erasure,
            workers=self.workers,
            seed=int(self.random_state or 0),
            n_restarts=self.n_restarts,
        )

    def fit(self, X, y=None):
        p = np.round(np.asarray(X, dtype=float).ravel(), 2)
        if p.size == 0:
            raise ValueError("need at least one success probability")
        cfg = self._config(float(p.min()), float(p.max()))
        self.store_ = run(cfg)
        keys = sorted(self.store_.best)
        self.grid_ = np.array(keys)
        self.fidelity_ = np.array([self.store_.best[k].fidelity for k in keys])
        self.results_ = [self.store_.best[k] for k in keys]
        return self

    def predict(self, X):
        check_is_fitted(self, "fidelity_")
        p = np.asarray(X, dtype=float).ravel()
        idx = np.searchsorted(self.grid_, p - 1e-9, side="left")
        out = np.full(p.shape, np.nan)
        ok = idx < self.grid_.size
        out[ok] = self.fidelity_[idx[ok]]
        return out

    def protocol(self, p):
        """Stored result at grid probability p."""
        check_is_fitted(self, "fidelity_")
        return self.store_[p]

    def table(self):
        check_is_fitted(self, "fidelity_")
        return list(zip(self.grid_.tolist(), self.fidelity_.tolist()))
