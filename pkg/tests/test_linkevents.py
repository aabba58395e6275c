import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import EEL_FILES
from wnetlab import sample_path
from wnetlab.config import LinkRule, TopologySpec
from wnetlab.dists import parse_dist, substream
from wnetlab.linkevents import (EelError, EventLog, LinkEvent, format_time, generate_events,
                                import_precomputed, parse_eel, sample, serialize_eel)
from wnetlab.topology import LinkParams, Selector, build


def net(n=2, structure="full-mesh"):
    return build(TopologySpec(n, structure), [])


def rule(event, pathloss=None, **kw):
    return LinkRule(event_dist=parse_dist(event),
                    pathloss_dist=parse_dist(pathloss) if pathloss else None, **kw)


def test_interval_events_on_one_link():
    r = rule("interval(10)", selector=Selector("pairs", pairs=((0, 1),)))
    log = generate_events([r], 35, seed=1, network=net())
    assert [e.time for e in log] == [10.0, 20.0, 30.0]
    assert {(e.src, e.dst) for e in log} == {(0, 1)}


def test_toggle_without_magnitude_law():
    r = rule("interval(1)", selector=Selector("pairs", pairs=((0, 1),)))
    log = generate_events([r], 4, 0, net())
    base = LinkParams().initial_pathloss
    assert [e.pathloss for e in log] == [base + 40, base, base + 40, base]


def test_poisson_event_count():
    # Renewal process with exponential gaps of rate 1 over 1000 s: N ~ Poisson(1000).
    r = rule("poisson(1.0)", selector=Selector("pairs", pairs=((0, 1),)))
    n = len(generate_events([r], 1000, 5, net()))
    assert abs(n - 1000) <= 3 * math.sqrt(1000)


def test_no_event_rules_give_empty_log():
    assert len(generate_events([LinkRule()], 100, 1, net())) == 0


def test_magnitudes_follow_pathloss_law():
    r = rule("interval(0.01)", "uniform(70, 130)")
    log = generate_events([r], 50, 2, net())
    losses = np.array([e.pathloss for e in log])
    assert losses.min() >= 70 and losses.max() <= 130
    assert abs(losses.mean() - 100) < 1.0


def test_rule_streams_are_independent_of_order():
    a = rule("exponential(2)", name="a")
    b = rule("poisson(3)", "normal(90, 5)", name="b")
    net4 = net(4)
    both = generate_events([a, b], 30, 9, net4)
    only_a = generate_events([a], 30, 9, net4)
    swapped = generate_events([b, a], 30, 9, net4)
    assert both == swapped
    assert set(only_a) <= set(both)


def test_sample_reexport():
    rng = np.random.default_rng(0)
    assert [sample(parse_dist("interval(2.0)"), rng) for _ in range(5)] == [2.0] * 5


def test_exponential_mean():
    rng = substream(4, "mean")
    xs = [sample(parse_dist("exponential(0.5)"), rng) for _ in range(10000)]
    assert abs(np.mean(xs) - 2.0) < 0.1


def test_poisson_unit_window_counts():
    rng = substream(4, "pois")
    xs = np.array([sample(parse_dist("poisson(3)"), rng) for _ in range(10000)])
    assert abs(xs.mean() - 3) < 0.15
    assert abs(xs.var() - 3) < 0.3


# ------------------------------------------------------------------ EEL text


def test_line_format():
    log = EventLog([LinkEvent(5_000_000, 1, 2, 95.0)])
    assert serialize_eel(log) == "5.0 nem:1 pathloss nem:2,95.0\n"
    assert parse_eel(serialize_eel(log)) == log


def test_time_formatting():
    assert format_time(0) == "0.0"
    assert format_time(1) == "0.000001"
    assert format_time(2_500_000) == "2.5"


def test_empty_log_is_empty_file():
    assert serialize_eel(EventLog()) == ""
    assert len(parse_eel("")) == 0


def test_malformed_line_reports_line_number():
    with pytest.raises(EelError) as exc:
        parse_eel("abc nem:1 pathloss nem:2,95.0\n")
    assert exc.value.line == 1
    with pytest.raises(EelError) as exc:
        parse_eel("# header\n1.0 nem:1 pathloss nem:2,95.0\n1.0 nem:1 loss nem:2,9\n")
    assert exc.value.line == 3


def test_unsorted_input_is_rejected():
    with pytest.raises(EelError, match="sorted"):
        parse_eel("2.0 nem:1 pathloss nem:2,1.0\n1.0 nem:1 pathloss nem:2,1.0\n")


def test_equal_times_order_by_src_then_dst():
    log = parse_eel((EEL_FILES[0].parent / "duplicates.eel").read_text())
    at_half = [(e.src, e.dst) for e in log if e.time_us == 500_000]
    assert at_half == [(0, 1), (0, 2), (2, 1)]


def test_exact_duplicates_keep_file_order():
    text = "1.0 nem:0 pathloss nem:1,90.0\n1.0 nem:0 pathloss nem:1,120.0\n"
    assert [e.pathloss for e in parse_eel(text)] == [90.0, 120.0]


@pytest.mark.parametrize("path", EEL_FILES, ids=lambda p: p.name)
def test_corpus_round_trip(path):
    log = parse_eel(path.read_text(encoding="ascii"))
    assert parse_eel(serialize_eel(log)) == log


def _count_event_lines(text: str) -> int:
    return sum(1 for line in text.splitlines() if line.split("#")[0].strip())


def test_bundled_sample_file():
    path = sample_path("sample30.eel")
    log = import_precomputed(path)
    assert len(log) == _count_event_lines(path.read_text())
    assert log == parse_eel(path.read_text())


def test_bundled_file_matches_generation():
    from wnetlab.orchestrator import prepare
    assert prepare(sample_path()).events == import_precomputed(sample_path("sample30.eel"))


def test_import_truncates_with_warning(tmp_path, caplog):
    p = tmp_path / "e.eel"
    p.write_text("1.0 nem:0 pathloss nem:1,90.0\n5.0 nem:0 pathloss nem:1,90.0\n")
    with caplog.at_level(logging.WARNING):
        log = import_precomputed(p, duration=2)
    assert len(log) == 1
    assert "dropped 1" in caplog.text


def test_import_rejects_undeclared_link(tmp_path):
    p = tmp_path / "e.eel"
    p.write_text("1.0 nem:0 pathloss nem:5,90.0\n")
    with pytest.raises(EelError):
        import_precomputed(p, network=net())


events = st.builds(LinkEvent, st.integers(0, 10**10), st.integers(0, 300), st.integers(0, 300),
                   st.floats(-200, 400, allow_nan=False))


@given(st.lists(events, max_size=40))
def test_round_trip_property(evs):
    log = EventLog(evs)
    assert parse_eel(serialize_eel(log)) == log
    times = [e.time_us for e in log]
    assert times == sorted(times)


@given(st.sampled_from(["interval(0.7)", "exponential(3)", "poisson(2)", "uniform(0.1, 1)",
                        "normal(0.5, 0.1)"]), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_generation_deterministic_and_sorted(dist, seed):
    rules = [rule(dist)]
    a = generate_events(rules, 20, seed, net(3))
    assert a == generate_events(rules, 20, seed, net(3))
    assert all(0 <= e.time <= 20 for e in a)
    assert parse_eel(serialize_eel(a)) == a


@pytest.mark.parametrize("dist,mean,var", [
    ("interval(0.5)", 0.5, 0.0),
    ("exponential(4)", 0.25, 1 / 16),
    ("poisson(4)", 0.25, 1 / 16),
    ("uniform(0.2, 0.6)", 0.4, 0.4 ** 2 / 12),
    ("normal(1.0, 0.1)", 1.0, 0.01),
])
def test_renewal_gap_moments(dist, mean, var):
    r = rule(dist, selector=Selector("pairs", pairs=((0, 1),)))
    log = generate_events([r], 4000, 3, net())
    t = np.array([0.0] + [e.time for e in log])
    gaps = np.diff(t)
    assert abs(gaps.mean() - mean) <= 0.05 * mean
    assert abs(gaps.var() - var) <= 0.1 * var + 1e-11
