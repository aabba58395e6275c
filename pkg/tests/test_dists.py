import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wnetlab.dists import (DistError, DistSpec, check_gap_dist, parse_dist, sample,
                           sample_gap, substream)


def test_interval_is_degenerate():
    rng = np.random.default_rng(0)
    assert [sample(DistSpec("interval", (2.0,)), rng) for _ in range(5)] == [2.0] * 5


@pytest.mark.parametrize("text,kind,params", [
    ("uniform(1, 3)", "uniform", (1.0, 3.0)),
    ("exponential(0.5)", "exponential", (0.5,)),
    ("normal(5,0)", "normal", (5.0, 0.0)),
    ("poisson(3)", "poisson", (3.0,)),
    (2.5, "interval", (2.5,)),
    ({"kind": "interval", "params": [4]}, "interval", (4.0,)),
    ({"kind": "exponential", "params": 2}, "exponential", (2.0,)),
])
def test_parse_forms(text, kind, params):
    d = parse_dist(text)
    assert (d.kind, d.params) == (kind, params)


@pytest.mark.parametrize("bad,code", [
    ("exponential(-1.0)", "E_DIST_DOMAIN"),
    ("poisson(0)", "E_DIST_DOMAIN"),
    ("normal(1, -1)", "E_DIST_DOMAIN"),
    ("uniform(3, 1)", "E_DIST_DOMAIN"),
    ("interval(0)", "E_DIST_DOMAIN"),
    ("uniform(1)", "E_DIST_ARITY"),
    ("gamma(1)", "E_DIST_KIND"),
    ("normal(nan, 1)", "E_DIST_DOMAIN"),
    ("exponential(x)", "E_DIST_DOMAIN"),
    (True, "E_DIST_KIND"),
    ({"kind": "uniform", "params": [1, 2], "extra": 1}, "E_DIST_KIND"),
    ({"params": [1]}, "E_DIST_KIND"),
])
def test_rejections(bad, code):
    with pytest.raises(DistError) as exc:
        parse_dist(bad)
    assert exc.value.code == code


def test_rate_must_be_positive_message():
    with pytest.raises(DistError, match="rate must be positive"):
        parse_dist("exponential(-1.0)")


@pytest.mark.parametrize("text", ["uniform(-1, 0)", "normal(-1, 1)", "interval(1e-7)"])
def test_gap_laws_must_advance_time(text):
    with pytest.raises(DistError):
        check_gap_dist(parse_dist(text))


def test_poisson_gap_is_exponential_with_rate():
    rng = substream(1, "gaps")
    gaps = [sample_gap(DistSpec("poisson", (4.0,)), rng) for _ in range(20000)]
    assert abs(np.mean(gaps) - 0.25) < 0.25 * 0.03
    assert min(gaps) >= 0


def test_negative_normal_gaps_truncate_to_zero():
    rng = substream(1, "n")
    gaps = [sample_gap(DistSpec("normal", (0.1, 1.0)), rng) for _ in range(1000)]
    assert min(gaps) == 0.0


def test_uniform_burst_gap_mean():
    # uniform(0, 0.01) gaps have mean 5 ms
    rng = substream(2, "burst")
    gaps = [sample_gap(parse_dist("uniform(0, 0.01)"), rng) for _ in range(10000)]
    assert abs(np.mean(gaps) - 0.005) < 0.005 * 0.05


def test_substreams_are_named_and_reproducible():
    a = substream(7, "x", 1).random(4)
    assert np.array_equal(a, substream(7, "x", 1).random(4))
    assert not np.array_equal(a, substream(7, "x", 2).random(4))
    assert not np.array_equal(a, substream(8, "x", 1).random(4))


def test_str_and_dict():
    d = parse_dist("uniform(1, 2)")
    assert str(d) == "uniform(1.0, 2.0)"
    assert parse_dist(d.to_dict()) == d
    assert parse_dist(str(d)) == d


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
positive = st.floats(min_value=1e-3, max_value=1e3)


@st.composite
def dists(draw):
    kind = draw(st.sampled_from(["uniform", "exponential", "normal", "interval", "poisson"]))
    if kind == "uniform":
        a, b = sorted((draw(finite), draw(finite)))
        return DistSpec(kind, (a, b))
    if kind == "normal":
        return DistSpec(kind, (draw(finite), draw(st.floats(0, 1e3))))
    return DistSpec(kind, (draw(positive),))


@given(dists(), st.integers(0, 2**32))
@settings(max_examples=200)
def test_samples_lie_in_support(d, seed):
    x = sample(d, np.random.default_rng(seed))
    assert math.isfinite(x)
    if d.kind == "uniform":
        assert d.params[0] <= x <= d.params[1]
    if d.kind in ("exponential", "poisson"):
        assert x >= 0
    if d.kind == "interval":
        assert x == d.params[0]
    if d.kind == "poisson":
        assert x == int(x)


@given(dists())
def test_text_round_trip(d):
    assert parse_dist(str(d)) == d
    assert parse_dist(d.to_dict()) == d
