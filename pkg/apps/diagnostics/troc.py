"""Nearest-neighbour (Akritas) estimator behind the tROC curves.

Both variants share one code path. Markers carry the index of their spell;
the classical curve is the case of one marker per spell. For a threshold p_c
each spell contributes the average conditional survival over its markers
above p_c (zero when it has none), and the marker distribution at m is the
share of spells whose markers all lie at or below m.
"""
import numpy as np

from apps.core.exceptions import UndefinedCurveError

from .models import MarkerSet


def marker_cdf(values: np.ndarray, spell_index: np.ndarray, n_spells: int) -> np.ndarray:
    """Mean-adjusted F̂_M evaluated at every marker."""
    maxima = np.full(n_spells, -np.inf)
    np.maximum.at(maxima, spell_index, values)
    return np.searchsorted(np.sort(maxima), values, side='right') / n_spells


def conditional_survival(cdf: np.ndarray, times: np.ndarray, status: np.ndarray,
                         horizon: int, lambda_n: float) -> np.ndarray:
    """
    Ŝ(horizon | m_s) for every marker by the 0/1 nearest-neighbour product-limit.

    The neighbourhood of s holds every s' with |F̂(m_s) - F̂(m_s')| < lambda_n;
    it is a contiguous block once markers are sorted by F̂.
    """
    order = np.argsort(cdf, kind='stable')
    sorted_cdf = cdf[order]
    lo = np.searchsorted(sorted_cdf, cdf - lambda_n, side='right')
    hi = np.searchsorted(sorted_cdf, cdf + lambda_n, side='left')
    sorted_times = times[order]
    sorted_events = status[order] == 1

    survival = np.ones(len(cdf))
    failure_times = np.unique(times[(status == 1) & (times <= horizon)])
    for u in failure_times:
        failed = np.r_[0, np.cumsum(sorted_events & (sorted_times == u))]
        at_risk = np.r_[0, np.cumsum(sorted_times >= u)]
        d = failed[hi] - failed[lo]
        y = at_risk[hi] - at_risk[lo]
        survival *= np.where(y > 0, 1.0 - d / np.maximum(y, 1), 1.0)
    return survival


def threshold_grid(markers: np.ndarray, step: float) -> np.ndarray:
    """Distinct marker quantiles on a ``step`` grid, descending, framed by +inf and -inf."""
    levels = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    cuts = np.unique(np.quantile(markers, levels, method='inverted_cdf'))
    return np.r_[np.inf, cuts[::-1], -np.inf]


def roc_points(markers: MarkerSet, thresholds: np.ndarray, horizon: int, lambda_n: float):
    """
    Raw (F+, T+) at each threshold.

    Raises:
        UndefinedCurveError: no failures by ``horizon`` or no survivors past it
    """
    _, spell_index = np.unique(markers.spell_index, return_inverse=True)
    n_spells = int(spell_index.max()) + 1
    cdf = marker_cdf(markers.markers, spell_index, n_spells)
    survival = conditional_survival(cdf, markers.times, markers.status, horizon, lambda_n)

    joint = np.zeros(len(thresholds))
    above = np.zeros(len(thresholds))
    for k, p_c in enumerate(thresholds):
        exceeds = markers.markers > p_c
        total = np.bincount(spell_index, weights=survival * exceeds, minlength=n_spells)
        count = np.bincount(spell_index, weights=exceeds.astype(float), minlength=n_spells)
        per_spell = np.divide(total, count, out=np.zeros(n_spells), where=count > 0)
        joint[k] = per_spell.sum() / n_spells
        # spells with any marker above p_c
        above[k] = np.count_nonzero(count > 0) / n_spells

    overall = _overall(survival, spell_index, n_spells)
    if not 0.0 < overall < 1.0:
        raise UndefinedCurveError(
            f"tROC undefined at horizon {horizon}: estimated survival {overall:.6g} leaves no "
            f"{'cases' if overall >= 1.0 else 'controls'}")
    fpr = joint / overall
    tpr = (above - joint) / (1.0 - overall)
    return fpr, tpr


def clean_curve(fpr: np.ndarray, tpr: np.ndarray):
    """Running maximum along descending thresholds, clipped to [0, 1]."""
    return (np.clip(np.maximum.accumulate(fpr), 0.0, 1.0),
            np.clip(np.maximum.accumulate(tpr), 0.0, 1.0))


def _overall(survival, spell_index, n_spells) -> float:
    total = np.bincount(spell_index, weights=survival, minlength=n_spells)
    count = np.bincount(spell_index, minlength=n_spells)
    return float(np.divide(total, count, out=np.zeros(n_spells), where=count > 0).sum() / n_spells)
