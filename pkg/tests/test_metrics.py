import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from morphlab import metrics, oracles
from morphlab.errors import ConfigError, NoDataError, NonFiniteError
from morphlab.metrics import DemorphTrial, MorphTrial

INF = float("inf")
# a coarse grid makes ties between scores common
SCORE = st.integers(0, 20).map(lambda k: k / 20)
SCORES = st.lists(SCORE, min_size=1, max_size=100)
PAIRS = st.lists(st.tuples(SCORE, SCORE), min_size=1, max_size=100)
TAU = st.one_of(SCORE, st.sampled_from([-INF, INF, 0.525]))


# ---------------------------------------------------------------- worked examples

def test_fmr_threshold_examples():
    scores = [i / 10 for i in range(1, 11)]
    assert metrics.fmr_threshold(scores, 0.10) == 1.0
    assert metrics.fmr_threshold(scores, 1.0) == 0.1
    assert metrics.fmr_threshold(scores, 1.5) == 0.1
    assert metrics.fmr_threshold([0.4] * 5, 0.5) == INF


def test_mmpmr_examples():
    trials = [(0.7, 0.6), (0.8, 0.4), (0.55, 0.9)]
    assert metrics.mmpmr(trials, 0.5, exact=True) == Fraction(2, 3)
    assert metrics.mmpmr(trials, -INF) == 1.0
    assert metrics.mmpmr(trials, 0.95) == 0.0
    records = [MorphTrial(str(i), a, b) for i, (a, b) in enumerate(trials)]
    assert metrics.mmpmr(records, 0.5) == metrics.mmpmr(trials, 0.5)


def test_detection_examples():
    attack, bonafide = [0.2, 0.6, 0.9], [0.1, 0.3]
    assert metrics.apcer(attack, 0.5, exact=True) == Fraction(1, 3)
    assert metrics.bpcer(bonafide, 0.5) == 0.0
    assert metrics.accuracy(attack, bonafide, 0.5) == pytest.approx(0.8)
    assert metrics.apcer([0.8, 0.9], 0.5) == metrics.bpcer([0.1, 0.2], 0.5) == 0.0
    assert metrics.apcer(attack, 0.1) == 0.0 and metrics.bpcer(bonafide, 0.1) == 1.0
    assert metrics.acer(0, 0) == 0 and metrics.acer(0.2, 0.4) == pytest.approx(0.3)


def test_d_eer_examples():
    assert metrics.d_eer([0.9, 0.8], [0.1, 0.2]) == (0.0, 0.8)
    same = [0.1, 0.4, 0.4, 0.7]
    rate, _ = metrics.d_eer(same, list(same))
    assert rate == 0.5


def test_demorph_accuracy_examples():
    assert metrics.demorph_accuracy([(0.9, 0.1)], 0.5) == 1.0
    assert metrics.demorph_accuracy([(0.9, 0.9)], 0.5) == 0.0
    trials = [(0.9, 0.1), (0.9, 0.9), (0.2, 0.1)]
    assert metrics.demorph_accuracy(trials, 0.5, exact=True) == Fraction(1, 3)
    records = [DemorphTrial(str(i), a, b) for i, (a, b) in enumerate(trials)]
    assert metrics.demorph_accuracy(records, 0.5, exact=True) == Fraction(1, 3)


def test_report_and_percent_format():
    report = metrics.detection_report([0.2, 0.6, 0.9], [0.1, 0.3], 0.5)
    assert (report.apcer, report.bpcer, report.accuracy) == pytest.approx((1 / 3, 0, 0.8))
    assert report.acer == pytest.approx(1 / 6)
    assert metrics.format_percent(Fraction(2, 3)) == "66.67%"


@pytest.mark.parametrize("call", [
    lambda: metrics.fmr_threshold([]),
    lambda: metrics.mmpmr([], 0.5),
    lambda: metrics.apcer([], 0.5),
    lambda: metrics.bpcer([], 0.5),
    lambda: metrics.accuracy([0.1], [], 0.5),
    lambda: metrics.d_eer([], [0.1]),
    lambda: metrics.demorph_accuracy([], 0.5),
])
def test_empty_inputs_report_no_data(call):
    with pytest.raises(NoDataError, match="no data"):
        call()


def test_bad_inputs_rejected():
    with pytest.raises(NonFiniteError):
        metrics.apcer([0.1, math.nan], 0.5)
    with pytest.raises(NonFiniteError):
        metrics.mmpmr([(0.1, math.inf)], 0.5)
    with pytest.raises(ConfigError):
        metrics.fmr_threshold([0.1], 0.0)


# ---------------------------------------------------------------- oracle equivalence

@given(SCORES, st.sampled_from([0.001, 0.01, 0.1, 0.25, 0.5, 0.999, 1.0]))
def test_fmr_threshold_matches_enumeration(scores, target):
    tau = metrics.fmr_threshold(scores, target)
    assert tau == oracles.fmr_threshold(scores, target)
    assert oracles.fmr_at(scores, tau) <= Fraction(target)


@given(PAIRS, TAU)
def test_pair_metrics_match_enumeration(pairs, tau):
    assert metrics.mmpmr(pairs, tau, exact=True) == oracles.mmpmr(pairs, tau)
    assert metrics.demorph_accuracy(pairs, tau, exact=True) == oracles.demorph_accuracy(pairs, tau)


@given(SCORES, SCORES, TAU)
def test_detection_metrics_match_enumeration(attack, bonafide, tau):
    ap = metrics.apcer(attack, tau, exact=True)
    bp = metrics.bpcer(bonafide, tau, exact=True)
    assert ap == oracles.apcer(attack, tau)
    assert bp == oracles.bpcer(bonafide, tau)
    assert metrics.acer(ap, bp) == oracles.acer(attack, bonafide, tau)
    assert metrics.accuracy(attack, bonafide, tau, exact=True) == oracles.accuracy(attack, bonafide, tau)
    assert metrics.d_eer(attack, bonafide, exact=True) == oracles.d_eer(attack, bonafide)


# ---------------------------------------------------------------- properties

@given(SCORES, PAIRS, SCORE, SCORE)
def test_rates_are_monotone_in_threshold(scores, pairs, t1, t2):
    lo, hi = sorted((t1, t2))
    assert metrics.mmpmr(pairs, lo) >= metrics.mmpmr(pairs, hi)
    assert metrics.apcer(scores, lo) <= metrics.apcer(scores, hi)
    assert metrics.bpcer(scores, lo) >= metrics.bpcer(scores, hi)


@given(SCORES, TAU)
def test_attack_set_is_partitioned(scores, tau):
    ap = metrics.apcer(scores, tau, exact=True)
    assert 0 <= ap <= 1
    assert ap + Fraction(sum(s >= tau for s in scores), len(scores)) == 1


@given(SCORES, SCORES, st.sampled_from([np.exp, np.tanh, lambda x: 3 * x - 7, np.cbrt]))
def test_d_eer_rate_invariant_under_increasing_transform(attack, bonafide, f):
    rate, _ = metrics.d_eer(attack, bonafide, exact=True)
    moved, _ = metrics.d_eer([float(f(s)) for s in attack], [float(f(s)) for s in bonafide],
                             exact=True)
    assert rate == moved


def test_float_rate_is_rounded_fraction(rng):
    a = list(rng.uniform(0, 1, 37))
    assert metrics.apcer(a, 0.5) == float(metrics.apcer(a, 0.5, exact=True))
