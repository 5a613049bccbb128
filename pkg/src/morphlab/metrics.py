"""Vulnerability and detectability metrics.

Conventions: a comparison is a match when ``similarity >= threshold``; a
detector classifies a sample as a morph when ``score >= threshold``.
Rates come from integer counts. Pass ``exact=True`` to get a
:class:`fractions.Fraction`; the default float is that fraction correctly
rounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, NoDataError, NonFiniteError

INF = float("inf")


@dataclass(frozen=True)
class MorphTrial:
    morph_id: str
    sim1: float
    sim2: float


@dataclass(frozen=True)
class DemorphTrial:
    trial_id: str
    sim_b2: float
    sim_b1: float


@dataclass(frozen=True)
class DetectionReport:
    threshold: float
    apcer: float
    bpcer: float
    acer: float
    accuracy: float
    d_eer: float
    d_eer_threshold: float


def _out(rate: Fraction, exact: bool):
    return rate if exact else float(rate)


def _scores(values, what: str) -> np.ndarray:
    arr = np.asarray(list(values), dtype=np.float64).ravel()
    if arr.size == 0:
        raise NoDataError(f"no data: empty {what}")
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite value in {what}")
    return np.sort(arr)


def _count_ge(sorted_scores: np.ndarray, tau: float) -> int:
    return int(sorted_scores.size - np.searchsorted(sorted_scores, tau, side="left"))


def _trial_pairs(trials, a: str, b: str) -> tuple:
    trials = list(trials)
    if not trials:
        raise NoDataError("no data: empty trial list")
    first = np.array([t[0] if isinstance(t, tuple) else getattr(t, a) for t in trials], float)
    second = np.array([t[1] if isinstance(t, tuple) else getattr(t, b) for t in trials], float)
    if not (np.isfinite(first).all() and np.isfinite(second).all()):
        raise NonFiniteError("non-finite similarity in trials")
    return first, second


def fmr_threshold(non_mated, target_fmr: float = 0.001) -> float:
    """Smallest candidate threshold whose false match rate is <= ``target_fmr``.

    Candidates are the observed scores plus ``+inf``; ``+inf`` comes back
    when no finite score achieves the target.
    """
    s = _scores(non_mated, "non-mated scores")
    if target_fmr <= 0:
        raise ConfigError("target_fmr must be positive")
    limit = Fraction(target_fmr) * s.size
    for tau in np.unique(s):
        if _count_ge(s, tau) <= limit:
            return float(tau)
    return INF


def mmpmr(trials, threshold: float, exact: bool = False):
    """Share of morphs whose weaker subject similarity still reaches the threshold.

    ``trials`` holds :class:`MorphTrial` records or ``(sim1, sim2)`` tuples.
    """
    s1, s2 = _trial_pairs(trials, "sim1", "sim2")
    hits = int(np.count_nonzero(np.minimum(s1, s2) >= threshold))
    return _out(Fraction(hits, s1.size), exact)


def apcer(attack, threshold: float, exact: bool = False):
    """Share of attack samples scored below the threshold (passed as bona fide)."""
    s = _scores(attack, "attack scores")
    return _out(Fraction(s.size - _count_ge(s, threshold), s.size), exact)


def bpcer(bonafide, threshold: float, exact: bool = False):
    """Share of bona fide samples scored at or above the threshold (flagged as morphs)."""
    s = _scores(bonafide, "bona fide scores")
    return _out(Fraction(_count_ge(s, threshold), s.size), exact)


def acer(apcer_rate, bpcer_rate):
    """Mean of the two error rates; exact when both inputs are Fractions."""
    return (apcer_rate + bpcer_rate) / 2


def accuracy(attack, bonafide, threshold: float, exact: bool = False):
    a = _scores(attack, "attack scores")
    b = _scores(bonafide, "bona fide scores")
    correct = _count_ge(a, threshold) + (b.size - _count_ge(b, threshold))
    return _out(Fraction(correct, a.size + b.size), exact)


def d_eer(attack, bonafide, exact: bool = False) -> tuple:
    """Detection equal-error rate over the score grid.

    Sweeps the observed scores plus -inf/+inf, takes the threshold that
    minimizes ``|APCER - BPCER|`` (the smallest one on ties) and returns
    ``((APCER + BPCER) / 2, threshold)`` there.
    """
    a = _scores(attack, "attack scores")
    b = _scores(bonafide, "bona fide scores")
    na, nb = a.size, b.size
    candidates = np.concatenate([[-INF], np.unique(np.concatenate([a, b])), [INF]])
    best_gap, best = None, None
    for tau in candidates:
        miss = na - _count_ge(a, tau)
        false_alarm = _count_ge(b, tau)
        # |miss/na - fa/nb| scaled by na*nb keeps the comparison in integers
        gap = abs(miss * nb - false_alarm * na)
        if best_gap is None or gap < best_gap:
            best_gap, best = gap, (tau, miss, false_alarm)
    tau, miss, false_alarm = best
    rate = (Fraction(miss, na) + Fraction(false_alarm, nb)) / 2
    return _out(rate, exact), float(tau)


def demorph_accuracy(trials, threshold: float, exact: bool = False):
    """Share of restorations that match the hidden subject but not the reference."""
    s_b2, s_b1 = _trial_pairs(trials, "sim_b2", "sim_b1")
    ok = (s_b2 >= threshold) & (s_b1 < threshold)
    return _out(Fraction(int(np.count_nonzero(ok)), s_b2.size), exact)


def detection_report(attack, bonafide, threshold: float) -> DetectionReport:
    attack, bonafide = list(attack), list(bonafide)
    ap = apcer(attack, threshold, exact=True)
    bp = bpcer(bonafide, threshold, exact=True)
    rate, tau = d_eer(attack, bonafide)
    return DetectionReport(float(threshold), float(ap), float(bp), float(acer(ap, bp)),
                           accuracy(attack, bonafide, threshold), rate, tau)


def format_percent(rate) -> str:
    return f"{100 * float(rate):.2f}%"
