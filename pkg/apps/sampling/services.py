import logging
from typing import Dict, Mapping, Tuple

import numpy as np

from apps.core.exceptions import SamplingError
from apps.core.models import Panel, ResolutionType, SpellDataset
from apps.core.services import Source
from apps.core.settings_manager import EngineSettings
from apps.utils.dateManager import periodLabel

from .models import Representativeness, ResolutionSeries

logger = logging.getLogger(__name__)

COHORT_END = 'cohort_end'


class SamplingService:

    @staticmethod
    def split_sample(panel: Panel, train_fraction: float, strata: Mapping[str, str],
                     seed: int) -> Tuple[Panel, Panel]:
        """
        Stratified clustered split: whole loans go to training or validation.

        Args:
            panel: loan-month panel
            train_fraction: share of each stratum's loans sent to training, in (0, 1)
            strata: stratum label per loan id
            seed: split seed; each stratum draws from its own stream

        Returns:
            (training panel, validation panel)
        """
        if not 0.0 < float(train_fraction) < 1.0:
            raise SamplingError(f"train_fraction must lie in (0, 1), got {train_fraction}")

        loans = [str(loan_id) for loan_id in panel.loan_ids]
        unlabeled = [loan_id for loan_id in loans if loan_id not in strata]
        if unlabeled:
            raise SamplingError(f"{len(unlabeled)} loan(s) lack a stratum label, e.g. {unlabeled[0]}")

        members: Dict[str, list] = {str(label): [] for label in set(strata.values())}
        for loan_id in loans:
            members[str(strata[loan_id])].append(loan_id)
        empty = sorted(label for label, group in members.items() if not group)
        if empty:
            raise SamplingError(f"empty stratum: {', '.join(empty)}")

        train = []
        for index, label in enumerate(sorted(members)):
            group = members[label]
            n_train = int(np.floor(train_fraction * len(group) + 0.5))
            rng = np.random.default_rng([int(seed), index])
            picked = rng.permutation(len(group))[:n_train]
            train.extend(group[k] for k in sorted(picked))
            logger.debug(f"Stratum {label}: {n_train} of {len(group)} loans to training")

        train_set = set(train)
        valid = [loan_id for loan_id in loans if loan_id not in train_set]
        logger.info(f"Split {len(loans)} loans into {len(train)} training / {len(valid)} validation")
        return panel.subset(train), panel.subset(valid)

    @staticmethod
    def resolution_rate(ds: SpellDataset, kappa, scale: str = COHORT_END) -> ResolutionSeries:
        """Share of spells stopping at each calendar period that resolve as ``kappa``."""
        if scale != COHORT_END:
            raise SamplingError(f"unsupported aggregation {scale!r}; only {COHORT_END!r} is available")
        kappa = ResolutionType(kappa)
        return _cohort_end_series(ds.spells(), kappa, ds)

    @staticmethod
    def resolution_rates_by_spell(ds: SpellDataset, kappa) -> Dict[int, ResolutionSeries]:
        """One cohort-end series per binned spell number."""
        kappa = ResolutionType(kappa)
        spells = ds.spells()
        return {
            int(bin_value): _cohort_end_series(group, kappa, ds)
            for bin_value, group in spells.groupby('spell_num_binned', sort=True)
        }

    @staticmethod
    def avg_discrepancy(a: ResolutionSeries, b: ResolutionSeries) -> float:
        if a.kappa != b.kappa:
            raise SamplingError(f"cannot compare {a.kappa.label} rates with {b.kappa.label} rates")
        shared, ia, ib = np.intersect1d(a.times, b.times, assume_unique=True, return_indices=True)
        if len(shared) == 0:
            raise SamplingError('resolution series share no calendar periods')
        return float(np.mean(np.abs(a.rates[ia] - b.rates[ib])))

    @classmethod
    def representativeness(cls, full: SpellDataset, train: SpellDataset, valid: SpellDataset,
                           kappa=ResolutionType.DEFAULT) -> Representativeness:
        """AD for the three pairs; the full set overlaps both of its parts."""
        kappa = ResolutionType(kappa)
        r_full = cls.resolution_rate(full, kappa)
        r_train = cls.resolution_rate(train, kappa)
        r_valid = cls.resolution_rate(valid, kappa)
        report = Representativeness(
            kappa=kappa,
            full_vs_train=cls.avg_discrepancy(r_full, r_train),
            full_vs_valid=cls.avg_discrepancy(r_full, r_valid),
            train_vs_valid=cls.avg_discrepancy(r_train, r_valid),
        )
        logger.info(f"Representativeness ({kappa.label}): {report.as_dict()}")
        return report

    @staticmethod
    def write_series(series: ResolutionSeries, target: Source) -> None:
        series.as_frame().to_csv(target, index=False, float_format=EngineSettings.get_float_format(),
                                 lineterminator='\n')


def _cohort_end_series(spells, kappa: ResolutionType, ds: SpellDataset) -> ResolutionSeries:
    if spells.empty:
        empty = np.zeros(0)
        return ResolutionSeries(empty.astype(np.int64), empty, kappa, empty.astype(np.int64),
                                () if ds.calendar_origin else None)
    # calendar stop = loan period of the spell's last month, whatever the technique clock
    stop = spells['period'].to_numpy(dtype=np.int64)
    hit = (spells['resolution'].to_numpy() == kappa.value).astype(np.int64)
    times, inverse = np.unique(stop, return_inverse=True)
    n = np.bincount(inverse, minlength=len(times))
    k = np.bincount(inverse, weights=hit, minlength=len(times))
    labels = None
    if ds.calendar_origin is not None:
        labels = tuple(periodLabel(ds.calendar_origin, t) for t in times)
    return ResolutionSeries(times, k / n, kappa, n.astype(np.int64), labels)
