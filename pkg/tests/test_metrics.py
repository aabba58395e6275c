from dataclasses import dataclass, field

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wnetlab.metrics import (CONTROLLER, MetricPoint, MetricStore, ResourceSampler,
                             record_samples, sample_resources)


@dataclass
class FakeState:
    n_nodes: int
    handled: dict = field(default_factory=dict)
    queued: dict = field(default_factory=dict)

    def handled_total(self, node):
        return self.handled.get(node, 0)

    def queued_bytes(self, node):
        return self.queued.get(node, 0)


def test_query_returns_time_order():
    store = MetricStore()
    for t in (3.0, 1.0, 2.0, 1.0):
        store.record(MetricPoint(t, 0, "lat", t * 10))
    assert [p.t for p in store.query("lat")] == [1.0, 1.0, 2.0, 3.0]


def test_query_filters():
    store = MetricStore(MetricPoint(float(t), t % 2, "x", t) for t in range(10))
    assert [p.value for p in store.query("x", node=1, t0=2, t1=7)] == [3, 5, 7]
    assert store.query("x", t0=20) == []
    assert store.query("nope") == []


def test_invalid_points_rejected():
    with pytest.raises(ValueError):
        MetricPoint(0.0, 0, "", 1.0)
    with pytest.raises(ValueError):
        MetricPoint(-1.0, 0, "x", 1.0)


points = st.builds(
    MetricPoint,
    st.floats(0, 1e4, allow_nan=False),
    st.one_of(st.integers(0, 300), st.just(CONTROLLER)),
    st.sampled_from(["latency_s", "cpu_proxy", "mem_proxy"]),
    st.floats(-1e9, 1e9, allow_nan=False),
    st.dictionaries(st.sampled_from(["flow", "kind"]), st.sampled_from(["1", "udp"])).map(
        lambda d: tuple(d.items())),
)


@given(st.lists(points, max_size=30))
def test_csv_round_trip(pts):
    store = MetricStore(pts)
    assert MetricStore.from_csv(store.to_csv()) == store


@given(st.lists(points, max_size=30))
def test_jsonl_round_trip(pts):
    store = MetricStore(pts)
    assert MetricStore.from_jsonl(store.to_jsonl()) == store


def test_export_and_load(tmp_path):
    store = MetricStore([MetricPoint(0.5, 1, "cpu_proxy", 4, (("flow", "2"),))])
    for fmt, name in (("csv", "m.csv"), ("json", "m.jsonl")):
        store.export(tmp_path / name, fmt)
        assert MetricStore.load(tmp_path / name) == store


def test_idle_node_samples_zero():
    s = sample_resources(FakeState(2), 1.0)
    assert [(x.cpu_proxy, x.mem_proxy) for x in s] == [(0, 0), (0, 0)]


def test_cpu_proxy_counts_handled_since_last_sample():
    state = FakeState(1)
    sampler = ResourceSampler(period=1.0)
    sampler.take(state, 0.0)
    state.handled[0] = 100
    assert sampler.take(state, 1.0)[0].cpu_proxy == 100
    state.handled[0] = 150
    assert sampler.take(state, 2.0)[0].cpu_proxy == 50


def test_mem_proxy_is_queued_bytes():
    state = FakeState(1, queued={0: 10 * 1500})
    assert sample_resources(state, 0.0)[0].mem_proxy == 15000


def test_record_samples_writes_both_series():
    store = MetricStore()
    record_samples(store, sample_resources(FakeState(3, handled={1: 7}), 2.0))
    assert store.names() == ["cpu_proxy", "mem_proxy"]
    assert store.query("cpu_proxy", node=1)[0].value == 7
