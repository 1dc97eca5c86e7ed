"""Estimator-style wrappers (``fit`` / ``transform`` / ``predict``).

They hold only hyper-parameters in ``__init__`` so that ``get_params`` and
``set_params`` work, and store results in trailing-underscore attributes.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .align import DEFAULT_STAGES, PipelineConfig, run_pipeline
from .match import DEFAULT_NW, match_all
from .validate import desire_lines, error_summary, proxy_flows
from .validation import check_lines, check_positive, check_trajectories


class RouteMatcher(BaseEstimator, TransformerMixin):
    """Match trajectories through ``backend`` and keep the accepted routes."""

    def __init__(self, backend=None, n_w=DEFAULT_NW, h_max=100.0, r_max=1.1, min_length=100.0, n_jobs=1):
        self.backend = backend
        self.n_w = n_w
        self.h_max = h_max
        self.r_max = r_max
        self.min_length = min_length
        self.n_jobs = n_jobs

    def _match(self, X):
        if self.backend is None:
            raise ValueError("a backend is required")
        trajs = check_trajectories(X)
        return match_all(
            trajs,
            self.backend,
            tuple(self.n_w),
            h_max=check_positive("h_max", self.h_max),
            r_max=check_positive("r_max", self.r_max),
            min_length=check_positive("min_length", self.min_length, allow_zero=True),
            n_jobs=check_positive("n_jobs", self.n_jobs, integer=True),
        )

    def fit(self, X, y=None):
        self.matches_ = self._match(X)
        self.n_accepted_ = sum(m.accepted for m in self.matches_)
        return self

    def transform(self, X):
        return [m.route for m in self._match(X) if m.accepted]

    def fit_transform(self, X, y=None):
        self.fit(X)
        return [m.route for m in self.matches_ if m.accepted]


class FlowMapAggregator(BaseEstimator, TransformerMixin):
    """Aggregate routes into a locally aligned flow map."""

    def __init__(self, stages=DEFAULT_STAGES, eps_simplify=1.0, max_iter=20, min_flow=1, n_jobs=1):
        self.stages = stages
        self.eps_simplify = eps_simplify
        self.max_iter = max_iter
        self.min_flow = min_flow
        self.n_jobs = n_jobs

    def _config(self) -> PipelineConfig:
        return PipelineConfig(
            tuple(self.stages),
            check_positive("eps_simplify", self.eps_simplify),
            check_positive("max_iter", self.max_iter, integer=True),
            check_positive("min_flow", self.min_flow, integer=True, allow_zero=True),
        )

    def fit(self, X, y=None):
        routes = check_lines(X)
        res = run_pipeline(routes, self._config(), n_jobs=check_positive("n_jobs", self.n_jobs, integer=True))
        self.flowmaps_ = res.maps
        self.flowmap_ = res.final
        self.history_ = res.history
        self.exits_ = res.exits
        self.n_iter_ = sum(e["iterations"] for e in res.exits if e["k"] is not None)
        return self

    def transform(self, X=None):
        check_is_fitted(self, "flowmap_")
        return self.flowmap_

    def fit_transform(self, X, y=None):
        return self.fit(X).flowmap_


class TransectValidator(BaseEstimator):
    """Transect proxy-flow validation against a fixed set of routes."""

    def __init__(self, eps_t=5.0, delta_t=50.0, err_cut=4.0, rerr_cut=0.1, round_mean=True):
        self.eps_t = eps_t
        self.delta_t = delta_t
        self.err_cut = err_cut
        self.rerr_cut = rerr_cut
        self.round_mean = round_mean

    def fit(self, X, y=None):
        self.routes_ = check_lines(X)
        return self

    def transform(self, fmap):
        check_is_fitted(self, "routes_")
        self.errors_ = proxy_flows(
            self.routes_,
            fmap,
            check_positive("eps_t", self.eps_t),
            check_positive("delta_t", self.delta_t),
            round_mean=self.round_mean,
        )
        self.summary_ = error_summary(self.errors_, self.err_cut, self.rerr_cut)
        return self.errors_

    def score(self, fmap, y=None) -> float:
        """Share of transects with zero error."""
        self.transform(fmap)
        return self.summary_.zero_share


class DesireLines(BaseEstimator):
    """Hub-to-hub desire lines; ``predict`` assigns new trips to hub pairs."""

    def __init__(self, cutoff=5000.0):
        self.cutoff = cutoff

    def fit(self, X, y=None):
        res = desire_lines(check_trajectories(X), check_positive("cutoff", self.cutoff))
        self.hubs_ = np.asarray(res.hubs, dtype=float)
        self.lines_ = res.lines
        self.labels_ = np.asarray(res.assignment, dtype=int)
        return self

    def predict(self, X) -> np.ndarray:
        """Nearest-hub ``(origin, destination)`` index pairs."""
        check_is_fitted(self, "hubs_")
        trajs = check_trajectories(X)
        ends = np.array([p for t in trajs for p in (t.points[0], t.points[-1])], dtype=float)
        _, idx = cKDTree(self.hubs_).query(ends)
        return idx.reshape(-1, 2)
