"""Estimator-style wrappers around the schedulers.

``fit`` takes a flow set and computes a schedule on a fixed network;
``predict`` returns the admission indicator of each flow and ``score`` the
total accepted weight.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .scheduler import (CycleLedger, Schedule, exact_schedule_small, greedy_schedule,
                        ledger_from_schedule)
from .timebase import TimedNetwork
from .validation import check_flowset, check_positive_int


class _SchedulerBase(BaseEstimator):
    def _check_params(self):
        if not isinstance(self.network, TimedNetwork):
            raise TypeError("network must be a TimedNetwork")
        check_positive_int(self.k_paths, "k_paths")

    def _solve(self, flows) -> Schedule:
        raise NotImplementedError

    def fit(self, X, y=None):
        self._check_params()
        flows = check_flowset(X, self.network)
        self.schedule_ = self._solve(flows)
        self.ledger_: CycleLedger = ledger_from_schedule(self.network, flows, self.schedule_)
        self.n_rejected_ = self.schedule_.n_rejected
        self.objective_ = self.schedule_.objective
        return self

    def predict(self, X) -> np.ndarray:
        """Admission indicator per flow of ``X``; flows not seen in ``fit`` are 0."""
        check_is_fitted(self, "schedule_")
        flows = check_flowset(X)
        dec = self.schedule_.decisions
        return np.array([int(f.id in dec and dec[f.id].accepted) for f in flows], dtype=np.int8)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).predict(X)

    def score(self, X, y=None) -> float:
        """Total weight of the flows of ``X`` that the fitted schedule admits."""
        flows = check_flowset(X)
        mask = self.predict(flows).astype(bool)
        return float(np.sum(np.array([f.weight for f in flows], dtype=float)[mask]))


class JointScheduler(_SchedulerBase):
    """Greedy joint admission, path and shift selection.

    ``shaping=False`` pins every shift to its minimum and
    ``path_selection=False`` restricts each flow to its minimum-hop path.
    """

    def __init__(self, network=None, k_paths=3, shaping=True, path_selection=True):
        self.network = network
        self.k_paths = k_paths
        self.shaping = shaping
        self.path_selection = path_selection

    def _solve(self, flows):
        return greedy_schedule(self.network, flows, self.k_paths, self.shaping,
                               self.path_selection)


class ExactScheduler(_SchedulerBase):
    def __init__(self, network=None, k_paths=3, shaping=True, path_selection=True,
                 max_flows=10, max_patterns=50):
        self.network = network
        self.k_paths = k_paths
        self.shaping = shaping
        self.path_selection = path_selection
        self.max_flows = max_flows
        self.max_patterns = max_patterns

    def _solve(self, flows):
        return exact_schedule_small(self.network, flows, self.k_paths, self.shaping,
                                    self.path_selection, self.max_flows, self.max_patterns)
