"""Brute-force reference implementations of the evaluation metrics.

Plain Python loops over every candidate threshold with Fraction counts and
no binary search. They exist to cross-check :mod:`morphlab.metrics`.
"""

from __future__ import annotations

from fractions import Fraction

INF = float("inf")


def _rate(hits: int, total: int) -> Fraction:
    return Fraction(hits, total)


def fmr_at(non_mated, tau) -> Fraction:
    return _rate(sum(1 for s in non_mated if s >= tau), len(non_mated))


def fmr_threshold(non_mated, target_fmr) -> float:
    target = Fraction(target_fmr)
    candidates = sorted(set(non_mated)) + [INF]
    return min(t for t in candidates if fmr_at(non_mated, t) <= target)


def mmpmr(pairs, tau) -> Fraction:
    return _rate(sum(1 for s1, s2 in pairs if s1 >= tau and s2 >= tau), len(pairs))


def apcer(attack, tau) -> Fraction:
    return _rate(sum(1 for s in attack if not s >= tau), len(attack))


def bpcer(bonafide, tau) -> Fraction:
    return _rate(sum(1 for s in bonafide if s >= tau), len(bonafide))


def acer(attack, bonafide, tau) -> Fraction:
    return (apcer(attack, tau) + bpcer(bonafide, tau)) / 2


def accuracy(attack, bonafide, tau) -> Fraction:
    correct = sum(1 for s in attack if s >= tau) + sum(1 for s in bonafide if s < tau)
    return _rate(correct, len(attack) + len(bonafide))


def d_eer(attack, bonafide):
    best = None
    for tau in [-INF] + sorted(set(attack) | set(bonafide)) + [INF]:
        a, b = apcer(attack, tau), bpcer(bonafide, tau)
        gap = abs(a - b)
        if best is None or gap < best[0]:
            best = (gap, (a + b) / 2, tau)
    return best[1], best[2]


def demorph_accuracy(pairs, tau) -> Fraction:
    return _rate(sum(1 for b2, b1 in pairs if b2 >= tau and b1 < tau), len(pairs))
