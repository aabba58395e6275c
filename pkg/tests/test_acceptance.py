"""Acceptance checks; a PASS/FAIL line per criterion appears in the terminal summary."""
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CONFIGS, EEL_FILES, _checked_run, run_text
from oracles import brute_first_hops, hop_diameter
from wnetlab import config as cfg
from wnetlab import emucore, sample_path
from wnetlab.dists import DistSpec, sample, substream
from wnetlab.linkevents import EventLog, parse_eel, serialize_eel
from wnetlab.orchestrator import (HOST_MODELS, Pricing, compile_external, emulate,
                                  estimate_cost, plan_deployment, prepare, sweep)
from wnetlab.routing import (LSA_BYTES, LSA_PER_LINK, LinkStateDb, RoutingPlane,
                             centralized_compute, spf)
from wnetlab.topology import is_connected

SWEEP_N = list(range(50, 1001, 50))


def criterion(number, label):
    return pytest.mark.criterion(number, label)


# ------------------------------------------------------------ host scaling


@criterion(1, "host scaling sweep")
def test_sweep_host_formulas_and_runtime():
    t0 = time.perf_counter()
    hosts, _ = sweep(SWEEP_N, list(HOST_MODELS))
    elapsed = time.perf_counter() - t0
    for row in hosts:
        n = row["n_nodes"]
        assert row["private-cloud"] == 6 + math.ceil(n / 24)
        assert row["container-per-core"] == math.ceil(n / 24)
        assert row["container-dense"] == math.ceil(n / 88)
    assert elapsed < 1.0


@criterion(1, "host scaling sweep")
def test_sweep_private_cloud_to_dense_ratio_envelope():
    hosts, _ = sweep(SWEEP_N, ["private-cloud", "container-dense"])
    outside = {r["n_nodes"]: round(r["private-cloud"] / r["container-dense"], 3)
               for r in hosts if r["n_nodes"] >= 176
               and not 2 <= r["private-cloud"] / r["container-dense"] <= 5.5}
    assert not outside, f"ratio outside [2, 5.5] at {outside}"


@criterion(2, "283-node plan")
def test_283_node_plan():
    h = {m: plan_deployment(283, m).hosts for m in
         ("container-dense", "container-per-core", "private-cloud")}
    assert h == {"container-dense": 4, "container-per-core": 12, "private-cloud": 18}
    assert h["private-cloud"] / h["container-dense"] == 4.5


money = st.floats(0, 1e6, allow_nan=False, allow_infinity=False)


@criterion(3, "cost ordering")
@given(st.sampled_from(["in-house", "cloud"]), money, money, money, st.floats(0, 120))
@settings(max_examples=200, deadline=None)
def test_dense_cost_never_exceeds_vm(env, unit, rate, mgmt, months):
    pricing = Pricing(env, unit, rate, mgmt)
    per_host = estimate_cost(plan_deployment(1, "vm-per-core"), pricing, months).total
    for n in SWEEP_N:
        dense_plan, vm_plan = plan_deployment(n, "container-dense"), plan_deployment(n, "vm-per-core")
        dense = estimate_cost(dense_plan, pricing, months).total
        vm = estimate_cost(vm_plan, pricing, months).total
        assert dense <= vm
        if dense == vm:
            # Equal totals need equal host counts unless a host costs nothing.
            assert dense_plan.hosts == vm_plan.hosts or per_host == 0


# --------------------------------------------------------------- bootstrap


@criterion(4, "startup and deterministic compile")
def test_prepare_under_a_second_and_compile_deterministic():
    t0 = time.perf_counter()
    prep = prepare(sample_path())
    elapsed = time.perf_counter() - t0
    assert prep.scenario.n_nodes == 30 and prep.plan.hosts >= 1
    assert elapsed < 1.0
    first = compile_external(prep.scenario, prep.events)
    again = prepare(sample_path())
    second = compile_external(again.scenario, again.events)
    assert first.files == second.files
    assert first.manifest_hash == second.manifest_hash


# ----------------------------------------------------------------- routing


def _connected_graph(rng, n):
    while True:
        adj = {i: {} for i in range(n)}
        p = rng.uniform(0.2, 0.8)
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < p:
                    adj[i][j] = float(rng.integers(1, 4))
                    adj[j][i] = float(rng.integers(1, 4))
        if is_connected(n, {(s, d) for s in adj for d in adj[s]}):
            return adj


@criterion(5, "spf against exhaustive enumeration")
def test_spf_matches_enumeration_on_200_graphs():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        adj = _connected_graph(rng, int(rng.integers(2, 11)))
        db = LinkStateDb.from_links((s, d, c) for s in adj for d, c in adj[s].items())
        for src in adj:
            got = {d: (e.cost, e.gateway) for d, e in spf(db, src).entries.items()}
            mismatches += got != brute_first_hops(adj, src)
    assert mismatches == 0
    assert time.perf_counter() - t0 < 30.0


CONVERGE = """
duration: 60
seed: {seed}
topology: {{num_nodes: 10, structure: random, random_p: 0.3}}
links: [{{select: all, capacity: 11.0e6, prop_delay: 0.001, fixed_delay: 0.0005, mac: rf-pipe}}]
routing: [{{nodes: all, protocol: {proto}}}]
"""


@criterion(6, "link-state convergence")
@pytest.mark.parametrize("proto,seed", [("olsr", 1), ("olsr", 2), ("ospf", 3), ("olsr", 4)])
def test_link_state_converges_within_bound(proto, seed):
    sc = cfg.expand(cfg.parse(CONVERGE.format(seed=seed, proto=proto)))
    net = sc.network
    rule = sc.protocols[0][0]
    plane = RoutingPlane(net, sc.protocols)
    emucore.Emulator(net, EventLog(), plane, [], sc.spec.duration, sc.spec.seed).run()

    adj = {n: {} for n in net.nodes}
    for link in net.links:
        adj[link.src][link.dst] = 1.0
    lp = link.params
    max_degree = max(len(v) for v in adj.values())
    flood_delay = 8 * (LSA_BYTES + LSA_PER_LINK * max_degree) / lp.capacity + \
        lp.prop_delay + lp.fixed_delay
    bound = 2 * rule.hello_interval + hop_diameter(adj) * flood_delay
    last_change = max(t for t, _, _ in plane.changes)
    assert last_change <= bound, (last_change, bound)
    truth = centralized_compute(net)
    assert {n: t.forwarding() for n, t in plane.protocol_tables(proto).items()} == \
        {n: t.forwarding() for n, t in truth.items()}


# ----------------------------------------------------------------- physics


PING = """
duration: 10
seed: 1
topology: {{num_nodes: 2, structure: full-mesh}}
links: [{{select: all, capacity: {cap}, prop_delay: {prop}, fixed_delay: {fixed}, mac: rf-pipe}}]
traffic: [{{src: 0, dst: 1, app: ping, interarrival: interval(1.0), packet_size: {size}}}]
"""


@criterion(7, "emulator physics")
@pytest.mark.parametrize("cap,prop,fixed,size", [(1e6, 0.002, 0.0005, 100),
                                                 (11e6, 0.0001, 0.0, 1500)])
def test_ping_rtt_closed_form(cap, prop, fixed, size):
    _, trace = run_text(PING.format(cap=cap, prop=prop, fixed=fixed, size=size))
    expected = 2 * (8 * size / cap + prop + fixed)
    rtts = trace.flows[0].rtts()
    assert len(rtts) == 10 and max(abs(r - expected) for r in rtts) <= 1e-6


@criterion(7, "emulator physics")
def test_over_offered_udp_measures_capacity():
    text = PING.format(cap=10e6, prop=0.001, fixed=0.0, size=100).replace(
        "app: ping, interarrival: interval(1.0), packet_size: 100",
        "app: iperf, interarrival: interval(0.0005), packet_size: 1250")
    from wnetlab.traffic import summarize
    _, trace = run_text(text)
    s = summarize(trace.flows).flows[0]
    assert s.throughput_bps == pytest.approx(10e6, rel=0.05)
    assert trace.conservation_holds()


@criterion(7, "emulator physics")
def test_conservation_guard_covers_every_run():
    assert emucore.Emulator.run is _checked_run


# ----------------------------------------------------------- distributions


@criterion(8, "distribution sanity")
@pytest.mark.parametrize("dist,mean", [
    (DistSpec("uniform", (2.0, 6.0)), 4.0),
    (DistSpec("exponential", (0.5,)), 2.0),
    (DistSpec("normal", (10.0, 2.0)), 10.0),
    (DistSpec("interval", (3.0,)), 3.0),
    (DistSpec("poisson", (4.0,)), 4.0),
])
def test_sample_mean(dist, mean):
    rng = substream(11, "acceptance", dist.kind)
    xs = np.array([sample(dist, rng) for _ in range(10_000)])
    if dist.kind == "interval":
        assert np.all(xs == mean)
    else:
        assert abs(xs.mean() - mean) <= 0.05 * mean
    if dist.kind == "poisson":
        assert abs(xs.var() - mean) <= 0.10 * mean


# -------------------------------------------------------------- round trips


@criterion(9, "format round trips")
def test_eel_and_config_corpus():
    failures = []
    eel_texts = [p.read_text(encoding="ascii") for p in EEL_FILES]
    eel_texts.append((sample_path("sample30.eel")).read_text(encoding="ascii"))
    for text in eel_texts:
        log = parse_eel(text)
        if parse_eel(serialize_eel(log)) != log:
            failures.append(text[:40])
    for path in [*CONFIGS, sample_path()]:
        spec = cfg.load(path)
        printed = cfg.dump(spec)
        again = cfg.parse(printed, base_dir=path.parent)
        if again != spec or cfg.dump(again) != printed:
            failures.append(path.name)
    assert failures == []


# ------------------------------------------------------------- determinism


@criterion(10, "run determinism")
def test_sample_runs_byte_identical():
    exports, hashes = [], []
    for _ in range(2):
        prep = prepare(sample_path())
        exports.append(emulate(prep.scenario, prep.events).to_json())
        hashes.append(compile_external(prep.scenario, prep.events).manifest_hash)
    assert exports[0] == exports[1]
    assert hashes[0] == hashes[1]
