"""Log partial likelihood of the stratified Cox model on counting-process intervals.

An interval (entry, stop] is at risk at failure time t when entry < t <= stop.
Risk-set sums are built from per-time buckets: the sum over intervals with
stop >= t minus the sum over intervals with entry >= t. Every reduction runs
in a fixed order (ascending time, ascending row), so results do not depend on
how many threads the rest of the pipeline uses.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from apps.core.constants import COMMON_STRATUM
from apps.core.models import SpellDataset, Technique

from .models import Ties


@dataclass(frozen=True, eq=False)
class CoxDesign:
    X: np.ndarray
    entry: np.ndarray
    stop: np.ndarray
    status: np.ndarray
    strata: np.ndarray
    clusters: np.ndarray
    names: Tuple[str, ...]

    @classmethod
    def from_dataset(cls, ds: SpellDataset) -> 'CoxDesign':
        frame = ds.frame
        if Technique(ds.technique) == Technique.PWP:
            strata = frame['spell_num_binned'].to_numpy(dtype=np.int64)
        else:
            strata = np.full(len(frame), COMMON_STRATUM, dtype=np.int64)
        return cls(
            X=ds.covariate_matrix(),
            entry=frame['entry'].to_numpy(dtype=np.int64),
            stop=frame['stop'].to_numpy(dtype=np.int64),
            status=frame['status'].to_numpy(dtype=np.int64),
            strata=strata,
            clusters=frame['loan_id'].astype(str).to_numpy(),
            names=tuple(ds.schema),
        )

    @property
    def n(self) -> int:
        return len(self.stop)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.status.sum())


def _group(positions: np.ndarray, n_groups: int) -> Tuple[np.ndarray, np.ndarray]:
    order = np.argsort(positions, kind='stable')
    bounds = np.searchsorted(positions[order], np.arange(n_groups + 1), side='left')
    return order, bounds


def _bucket_sums(order, bounds, w, X, hessian=True):
    """Per-bucket sums of w, w*x and w*x*x^T."""
    n_groups = len(bounds) - 1
    p = X.shape[1]
    s0 = np.zeros(n_groups)
    s1 = np.zeros((n_groups, p))
    s2 = np.zeros((n_groups, p, p)) if hessian else None
    for g in range(n_groups):
        rows = order[bounds[g]:bounds[g + 1]]
        if len(rows) == 0:
            continue
        wg = w[rows]
        Xg = X[rows]
        s0[g] = wg.sum()
        s1[g] = wg @ Xg
        if hessian:
            s2[g] = (Xg.T * wg) @ Xg
    return s0, s1, s2


def _revcum(a: np.ndarray) -> np.ndarray:
    return np.cumsum(a[::-1], axis=0)[::-1]


class StratumBlock:
    """Index bookkeeping for the intervals of one stratum."""

    def __init__(self, key: int, rows: np.ndarray, design: CoxDesign):
        self.key = int(key)
        self.rows = rows
        entry = design.entry[rows]
        stop = design.stop[rows]
        is_event = design.status[rows] == 1

        self.grid = np.unique(np.concatenate([entry, stop]))
        n_grid = len(self.grid)
        order, self.stop_bounds = _group(np.searchsorted(self.grid, stop), n_grid)
        self.stop_order = rows[order]
        order, self.entry_bounds = _group(np.searchsorted(self.grid, entry), n_grid)
        self.entry_order = rows[order]

        self.failure_times = np.unique(stop[is_event])
        self.fail_pos = np.searchsorted(self.grid, self.failure_times)
        events = np.flatnonzero(is_event)
        order, self.event_bounds = _group(np.searchsorted(self.failure_times, stop[events]),
                                          len(self.failure_times))
        self.event_order = rows[events[order]]
        self.d = np.diff(self.event_bounds)

    @property
    def m(self) -> int:
        return len(self.failure_times)

    def risk_sums(self, w, X, hessian=True):
        """(S0, S1, S2) over the risk set at each failure time."""
        at_stop = _bucket_sums(self.stop_order, self.stop_bounds, w, X, hessian)
        at_entry = _bucket_sums(self.entry_order, self.entry_bounds, w, X, hessian)
        sums = []
        for a, b in zip(at_stop, at_entry):
            sums.append(None if a is None else (_revcum(a) - _revcum(b))[self.fail_pos])
        return tuple(sums)

    def tie_sums(self, w, X, hessian=True):
        return _bucket_sums(self.event_order, self.event_bounds, w, X, hessian)

    def event_rows(self, k: int) -> np.ndarray:
        return self.event_order[self.event_bounds[k]:self.event_bounds[k + 1]]


class PartialLikelihood:
    """Log partial likelihood, gradient and Hessian as functions of beta."""

    def __init__(self, design: CoxDesign, ties: str = Ties.EFRON):
        if ties not in Ties.CHOICES:
            raise ValueError(f"unknown tie method {ties!r}; expected one of {Ties.CHOICES}")
        self.design = design
        self.ties = ties
        keys = np.unique(design.strata)
        self.blocks: List[StratumBlock] = [
            StratumBlock(key, np.flatnonzero(design.strata == key), design) for key in keys
        ]

    def _weights(self, beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        eta = self.design.X @ beta if self.design.p else np.zeros(self.design.n)
        shift = float(eta.max()) if len(eta) else 0.0
        return eta - shift, np.exp(eta - shift), shift

    def evaluate(self, beta, hessian: bool = True) -> Tuple[float, np.ndarray, Optional[np.ndarray]]:
        beta = np.asarray(beta, dtype=float).reshape(self.design.p)
        X = self.design.X
        p = self.design.p
        eta, w, _ = self._weights(beta)

        log_pl = 0.0
        grad = np.zeros(p)
        hess = np.zeros((p, p)) if hessian else None
        for block in self.blocks:
            if block.m == 0:
                continue
            R0, R1, R2 = block.risk_sums(w, X, hessian)
            starts = block.event_bounds[:-1]
            log_pl += float(np.add.reduceat(eta[block.event_order], starts).sum())
            if p:
                grad += np.add.reduceat(X[block.event_order], starts, axis=0).sum(axis=0)

            d = block.d.astype(float)
            single = (block.d == 1) | (self.ties == Ties.BRESLOW)
            if single.any():
                r0 = R0[single]
                dk = d[single]
                log_pl -= float((dk * np.log(r0)).sum())
                mean = R1[single] / r0[:, None]
                grad -= (dk[:, None] * mean).sum(axis=0)
                if hessian:
                    second = R2[single] / r0[:, None, None] - mean[:, :, None] * mean[:, None, :]
                    hess -= (dk[:, None, None] * second).sum(axis=0)

            tied = np.flatnonzero(~single)
            if len(tied):
                T0, T1, T2 = block.tie_sums(w, X, hessian)
                for k in tied:
                    frac = np.arange(block.d[k]) / block.d[k]
                    s0 = R0[k] - frac * T0[k]
                    s1 = R1[k][None, :] - frac[:, None] * T1[k][None, :]
                    log_pl -= float(np.log(s0).sum())
                    mean = s1 / s0[:, None]
                    grad -= mean.sum(axis=0)
                    if hessian:
                        s2 = R2[k][None, :, :] - frac[:, None, None] * T2[k][None, :, :]
                        hess -= (s2 / s0[:, None, None]).sum(axis=0) - mean.T @ mean
        return log_pl, grad, hess

    def breslow_increments(self, beta) -> dict:
        """Breslow baseline increments d_k / sum_R exp(beta'x) per stratum."""
        beta = np.asarray(beta, dtype=float).reshape(self.design.p)
        _, w, shift = self._weights(beta)
        result = {}
        for block in self.blocks:
            if block.m == 0:
                result[block.key] = (block.failure_times, np.zeros(0))
                continue
            R0 = block.risk_sums(w, self.design.X, hessian=False)[0]
            result[block.key] = (block.failure_times, block.d * np.exp(-shift) / R0)
        return result

    def score_residuals(self, beta) -> np.ndarray:
        """Breslow-type score residual per interval (rows of the design)."""
        beta = np.asarray(beta, dtype=float).reshape(self.design.p)
        X = self.design.X
        _, w, _ = self._weights(beta)
        residuals = np.zeros_like(X)
        for block in self.blocks:
            if block.m == 0:
                continue
            R0, R1, _ = block.risk_sums(w, X, hessian=False)
            xbar = R1 / R0[:, None]
            h = block.d / R0
            A = np.r_[0.0, np.cumsum(h)]
            B = np.vstack([np.zeros((1, X.shape[1])), np.cumsum(h[:, None] * xbar, axis=0)])

            rows = block.rows
            at_stop = np.searchsorted(block.failure_times, self.design.stop[rows], side='right')
            at_entry = np.searchsorted(block.failure_times, self.design.entry[rows], side='right')
            xr = X[rows]
            compensator = w[rows][:, None] * (
                xr * (A[at_stop] - A[at_entry])[:, None] - (B[at_stop] - B[at_entry])
            )
            residuals[rows] = -compensator

            events = block.event_order
            fail_index = np.searchsorted(block.failure_times, self.design.stop[events], side='left')
            residuals[events] += X[events] - xbar[fail_index]
        return residuals
