import logging
import math
from typing import List, Optional

import numpy as np
import pandas as pd

from apps.core.models import LoanState, Panel
from apps.utils.parallel import chunk_bounds, ordered_map, resolve_threads

from .models import CovariateKind, GeneratorSpec

logger = logging.getLogger(__name__)


def loan_stream(seed: int, loan_index: int) -> np.random.Generator:
    """Counter-based stream for one loan, independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(loan_index)])))


class GeneratorService:

    @classmethod
    def generate(cls, spec: GeneratorSpec, threads: Optional[int] = None) -> Panel:
        """
        Simulate a loan-month panel with known hazards.

        Each performing month defaults with probability 1 - exp(-h_j * exp(beta'x)),
        otherwise settles or is written off with the flat monthly hazards, otherwise
        stays performing. The opening month of every spell (origination, first
        observed month or cure month) is performing. After a default the loan
        cures into spell j+1 after a geometric(cure_prob) number of months, or
        its history ends.

        Args:
            spec: generator parameters
            threads: worker threads; the panel does not depend on it

        Returns:
            Panel: sorted, valid panel
        """
        covariates = spec.resolved_covariates
        if len(covariates) != len(spec.true_beta):
            raise ValueError(f"{len(spec.true_beta)} coefficients for {len(covariates)} covariates")
        width = max(6, len(str(spec.n_loans)))
        n_jobs = resolve_threads(threads)

        def simulate_block(bounds):
            start, stop = bounds
            return [cls._simulate_loan(spec, covariates, k) for k in range(start, stop)]

        blocks = ordered_map(simulate_block, chunk_bounds(spec.n_loans, n_jobs * 4), threads=n_jobs)

        loan_ids: List[str] = []
        periods: List[np.ndarray] = []
        states: List[np.ndarray] = []
        values: List[np.ndarray] = []
        for block in blocks:
            for k, (loan_periods, loan_states, loan_values) in block:
                loan_ids.extend([f'L{k + 1:0{width}d}'] * len(loan_periods))
                periods.append(loan_periods)
                states.append(loan_states)
                values.append(loan_values)

        names = spec.covariate_names
        frame = pd.DataFrame({
            'loan_id': pd.Series(loan_ids, dtype=object),
            'period': np.concatenate(periods) if periods else np.zeros(0, dtype=np.int64),
            'state': pd.Series(np.concatenate(states) if states else [], dtype=object),
        })
        matrix = np.vstack(values) if values else np.zeros((0, len(names)))
        for j, name in enumerate(names):
            frame[name] = matrix[:, j]

        panel = Panel(schema=names, frame=frame, calendar_origin=spec.calendar_origin)
        logger.info(f"Generated {spec.n_loans} loans, {len(panel)} loan-months (seed {spec.seed})")
        return panel

    @staticmethod
    def covariate_paths(rng: np.random.Generator, covariates, n_months: int) -> np.ndarray:
        """(n_months, p) covariate values; time-fixed kinds repeat their single draw."""
        paths = np.zeros((n_months, len(covariates)))
        for j, cov in enumerate(covariates):
            kind = CovariateKind(cov.kind)
            if kind == CovariateKind.NORMAL:
                paths[:, j] = cov.scale * rng.standard_normal()
            elif kind == CovariateKind.BINARY:
                paths[:, j] = float(rng.random() < cov.prob)
            else:
                shocks = rng.standard_normal(n_months)
                innovation = cov.scale * math.sqrt(1.0 - cov.phi ** 2)
                value = cov.scale * shocks[0]
                for t in range(n_months):
                    if t:
                        value = cov.phi * value + innovation * shocks[t]
                    paths[t, j] = value
        return paths

    @classmethod
    def _simulate_loan(cls, spec: GeneratorSpec, covariates, index: int):
        rng = loan_stream(spec.seed, index)
        first = int(rng.integers(0, spec.max_left_truncation + 1)) + 1
        censor_min = spec.max_horizon if spec.censor_min is None else spec.censor_min
        last = max(int(rng.integers(censor_min, spec.max_horizon + 1)), first)

        n_months = last - first + 1
        paths = cls.covariate_paths(rng, covariates, n_months)
        beta = np.asarray(spec.true_beta, dtype=float)
        risk = np.exp(paths @ beta) if len(beta) else np.ones(n_months)
        draws = rng.random((n_months, 3))

        periods, states = [], []
        spell = 1
        t = first
        opening = True
        while t <= last:
            k = t - first
            periods.append(t)
            if opening:
                # origination or cure month: performing at month end
                states.append(LoanState.PERFORMING.value)
                opening = False
                t += 1
                continue
            if draws[k, 0] < 1.0 - math.exp(-spec.hazard_for_spell(spell) * risk[k]):
                states.append(LoanState.DEFAULT.value)
                if spec.cure_prob <= 0.0:
                    break
                t += int(rng.geometric(spec.cure_prob))
                spell += 1
                opening = True
                continue
            if draws[k, 1] < spec.settle_hazard:
                states.append(LoanState.SETTLED.value)
                break
            if draws[k, 2] < spec.writeoff_hazard:
                states.append(LoanState.WRITE_OFF.value)
                break
            states.append(LoanState.PERFORMING.value)
            t += 1

        rows = np.asarray(periods, dtype=np.int64) - first
        return index, (np.asarray(periods, dtype=np.int64), np.asarray(states, dtype=object), paths[rows])
