"""Test criteria/ and the resample probability helpers."""
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from criteria.resample import Disabled, HardCutoff, Logistic, TruncatedNormal, parse_criterion
from errors import CriterionSyntaxError
from modules.recovery import per_step_prob, resample_prob

coordinates = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)
criteria = st.one_of(
    st.just(Disabled()),
    st.floats(min_value=0.5, max_value=5.0).map(HardCutoff),
    st.tuples(st.floats(min_value=0.5, max_value=6.0), st.floats(min_value=0.5, max_value=4.0))
      .map(lambda ab: Logistic(*ab)),
    st.floats(min_value=0.5, max_value=5.0).map(TruncatedNormal),
)


def test_hard_cutoff():
    hard = HardCutoff(2.5)
    assert resample_prob(hard, 3.0) == 1.0
    assert resample_prob(hard, 0.0) == 0.0
    assert resample_prob(hard, 2.5) == 0.0
    assert resample_prob(hard, -2.5000001) == 1.0


@pytest.mark.parametrize("a, b", [(2.0, 2.0), (3.0, 2.5), (4.0, 3.0)])
def test_logistic_midpoint_is_one_half(a, b):
    assert resample_prob(Logistic(a, b), b) == pytest.approx(0.5, abs=1e-12)
    assert resample_prob(Logistic(a, b), -b) == pytest.approx(0.5, abs=1e-12)


def test_logistic_closed_form():
    expected = 1.0 / (1.0 + math.exp(-2.0))
    assert abs(resample_prob(Logistic(2.0, 2.0), 3.0) - expected) < 1e-12
    assert abs(expected - 0.880797) < 1e-6


def test_truncated_normal_closed_form():
    assert abs(resample_prob(TruncatedNormal(2.5), 0.0) - math.exp(-3.125)) < 1e-12
    assert resample_prob(TruncatedNormal(2.5), 2.5) == 1.0
    assert resample_prob(TruncatedNormal(2.5), -2.5) == 1.0
    assert resample_prob(TruncatedNormal(2.5), 4.0) == 1.0


def test_disabled_never_resamples():
    assert resample_prob(Disabled(), 1e9) == 0.0
    assert not np.any(Disabled().probability(np.linspace(-10, 10, 21)))


def test_vectorized_probability_matches_scalar():
    z = np.array([-3.0, -1.0, 0.0, 2.0, 2.75, 5.0])
    crit = TruncatedNormal(2.75)
    np.testing.assert_array_equal(crit.probability(z), [crit.probability(float(v)) for v in z])


@given(criteria, coordinates)
def test_probability_is_even_and_bounded(criterion, z):
    p = resample_prob(criterion, z)
    assert 0.0 <= p <= 1.0
    assert p == resample_prob(criterion, -z)


@given(criteria, coordinates, coordinates)
def test_probability_is_non_decreasing_in_magnitude(criterion, z1, z2):
    small, large = sorted((abs(z1), abs(z2)))
    assert resample_prob(criterion, small) <= resample_prob(criterion, large)


@given(st.floats(min_value=0.5, max_value=5.0), coordinates, st.sampled_from([1e6, 1e9, 1e12]))
def test_hard_cutoff_is_the_steep_limit_of_logistic(c, z, a):
    assume(abs(abs(z) - c) > 1e-3)
    assert resample_prob(Logistic(a, c), z) == resample_prob(HardCutoff(c), z)


def test_steep_logistic_differs_from_hard_cutoff_only_at_the_cut():
    assert resample_prob(Logistic(1e9, 2.5), 2.5) == 0.5
    assert resample_prob(HardCutoff(2.5), 2.5) == 0.0


@pytest.mark.parametrize("text, expected", [
    ("disabled", Disabled()),
    ("hard:2.5", HardCutoff(2.5)),
    ("logistic:2,2", Logistic(2.0, 2.0)),
    ("truncnorm:3.75", TruncatedNormal(3.75)),
])
def test_parse_criterion(text, expected):
    parsed = parse_criterion(text)
    assert parsed == expected
    assert parse_criterion(parsed.spec()) == parsed


@pytest.mark.parametrize("text", ["", "hard", "hard:0", "hard:-1", "logistic:2", "logistic:2,2,2",
                                  "truncnorm:0", "cosine:1", "disabled:1", "hard:abc"])
def test_parse_criterion_rejects_malformed_text(text):
    with pytest.raises(CriterionSyntaxError):
        parse_criterion(text)


def test_labels_read_like_table_rows():
    assert Logistic(2.0, 2.0).label == "logistic(2, 2)"
    assert TruncatedNormal(2.75).label == "truncnorm(2.75)"
    assert Disabled().label == "disabled"
    assert str(HardCutoff(3.0)) == "hard:3"


@pytest.mark.parametrize("p, E, expected", [
    (0.0, 20000, 0.0),
    (1.0, 1, 1.0),
    (1.0, 20000, 1.0),
    (0.5, 2, 1.0 - 2.0 ** -0.5),
    (0.5, 20000, 1.0 - math.exp(math.log(0.5) / 20000)),
])
def test_per_step_prob_values(p, E, expected):
    assert abs(per_step_prob(p, E) - expected) < 1e-12


def test_per_step_prob_small_value():
    assert per_step_prob(0.5, 20000) == pytest.approx(3.4657e-5, rel=1e-4)


def test_per_step_prob_rejects_zero_horizon():
    with pytest.raises(ValueError):
        per_step_prob(0.5, 0)


@given(st.floats(min_value=0.0, max_value=1.0 - 1e-9), st.sampled_from([1, 2, 20000]))
def test_per_step_prob_round_trips(p, E):
    q = per_step_prob(p, E)
    assert abs(-math.expm1(E * math.log1p(-q)) - p) < 1e-12
