import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdnlab import telemetry as tm
from sdnlab.netsim import ProbeResult
from sdnlab.telemetry import (
    EmptyWindow,
    FeatureRecord,
    FlowWindow,
    InsufficientProbes,
    InvalidComponent,
    PacketTrace,
    assemble_record,
    flow_statistics,
    ping_aggregate,
)
from sdnlab.vquality import QualityReport

A, B = "10.0.0.1", "10.0.0.2"
WIN = FlowWindow((A, B), 0.0, 100.0)
PROBE = ProbeResult(5e6, 2, 0.3, 0.1, 0.05, 0.0, 2.0)


def test_schema_shape():
    assert len(tm.FEATURE_NAMES) == 49
    assert len(tm.FLOW_FEATURES) == 33
    assert tm.FEATURE_NAMES[:2] == ("average_rtt", "packet_loss")
    assert tm.FEATURE_NAMES[-5:] == ("psnr", "ssim", "original_file_size", "file_size", "hop_count")
    assert len(tm.PROBE_VIEW) == 45


def test_ping_aggregate_examples():
    assert ping_aggregate([0.010, 0.020, None, 0.030]) == pytest.approx((20.0, 25.0))
    assert ping_aggregate([0.005] * 7) == pytest.approx((5.0, 0.0))
    with pytest.raises(InsufficientProbes):
        ping_aggregate([None, None])
    with pytest.raises(InsufficientProbes):
        ping_aggregate([])


def test_two_packet_flow():
    trace = PacketTrace([(0.0, A, B, 100), (0.010, A, B, 200)])
    f = flow_statistics(trace, WIN)
    assert f["src2dst_mean_ps"] == 150
    assert f["src2dst_stddev_ps"] == 50
    assert f["src2dst_min_piat_ms"] == pytest.approx(10)
    assert f["src2dst_max_piat_ms"] == pytest.approx(10)
    assert f["dst2src_packets"] == 0
    assert f["dst2src_mean_piat_ms"] == 0


def test_single_packet_flow():
    f = flow_statistics(PacketTrace([(1.0, A, B, 640)]), WIN)
    assert f["bidirectional_min_ps"] == f["bidirectional_mean_ps"] == f["bidirectional_max_ps"] == 640
    assert f["bidirectional_stddev_ps"] == 0
    assert f["bidirectional_duration_ms"] == 0
    assert all(f[k] == 0 for k in tm.FLOW_FEATURES if "piat" in k)


def test_uniform_train():
    trace = PacketTrace([(0.002 * i, A, B, 800) for i in range(50)])
    f = flow_statistics(trace, WIN)
    assert f["src2dst_stddev_ps"] == 0
    assert f["src2dst_mean_piat_ms"] == pytest.approx(2.0)
    assert f["src2dst_stddev_piat_ms"] == pytest.approx(0.0, abs=1e-9)


def test_empty_window():
    with pytest.raises(EmptyWindow):
        flow_statistics(PacketTrace([(200.0, A, B, 100)]), WIN)
    with pytest.raises(EmptyWindow):
        flow_statistics(PacketTrace([(1.0, A, "10.0.0.9", 100)]), WIN)


def test_idle_gap_starts_new_flow():
    pkts = [(0.0, A, B, 100), (1.0, A, B, 100), (20.0, A, B, 300), (20.5, B, A, 64)]
    f = flow_statistics(PacketTrace(pkts), WIN)
    # only the flow after the 19 s gap is reported
    assert f["bidirectional_packets"] == 2
    assert f["src2dst_bytes"] == 300
    short = FlowWindow((A, B), 0.0, 100.0, idle_timeout=100.0)
    assert flow_statistics(PacketTrace(pkts), short)["bidirectional_packets"] == 4


def test_window_validation():
    with pytest.raises(ValueError):
        FlowWindow((A, B), 1.0, 1.0)


packets = st.lists(
    st.tuples(st.floats(0, 10, allow_nan=False), st.booleans(), st.integers(64, 1500)),
    min_size=1, max_size=40)


def _trace(pkts):
    return PacketTrace([(t, A, B, s) if fwd else (t, B, A, s) for t, fwd, s in pkts])


@settings(max_examples=100, deadline=None)
@given(packets)
def test_relabel_swaps_direction_blocks(pkts):
    trace = _trace(pkts)
    f = flow_statistics(trace, WIN)
    g = flow_statistics(trace.relabel({A: B, B: A}), WIN)
    for k in tm.FLOW_FEATURES:
        if k.startswith("src2dst_"):
            assert g[k] == f["dst2src_" + k[8:]]
        elif k.startswith("dst2src_"):
            assert g[k] == f["src2dst_" + k[8:]]
        else:
            assert g[k] == f[k]


@settings(max_examples=100, deadline=None)
@given(packets)
def test_flow_feature_invariants(pkts):
    f = flow_statistics(_trace(pkts), WIN)
    assert f["bidirectional_packets"] == f["src2dst_packets"] + f["dst2src_packets"]
    assert f["bidirectional_bytes"] == f["src2dst_bytes"] + f["dst2src_bytes"]
    for d in tm.DIRECTIONS:
        for kind in ("ps", "piat_ms"):
            mn, mean, sd, mx = (f[f"{d}_{s}_{kind}"] for s in ("min", "mean", "stddev", "max"))
            assert mn - 1e-9 <= mean <= mx + 1e-9
            assert sd >= 0
            if kind == "ps" and f[f"{d}_packets"] > 0:
                assert (sd == 0) == (mn == mx)


def _flow():
    return flow_statistics(PacketTrace([(0.0, A, B, 100), (0.01, B, A, 64)]), WIN)


def test_assemble_full_and_probe_view():
    q = QualityReport(40.0, 0.99, 100, 98, 1, 1, 1000, 990)
    full = assemble_record(ping_aggregate([0.02]), PROBE, _flow(), q, 3, 0)
    assert full.absent == ()
    assert full["cpu_host_user"] == pytest.approx(0.07)
    assert full["cpu_host_system"] == pytest.approx(0.03)
    assert full["hop_count"] == 3
    probe = assemble_record(ping_aggregate([0.02]), PROBE, _flow(), None, 3, 1)
    assert set(probe.absent) == set(tm.OUTCOME_FEATURES)
    assert sum(v is not None for v in probe.values) == 45
    assert full.probe_view() == FeatureRecord(
        [None if n in tm.OUTCOME_FEATURES else full[n] for n in tm.FEATURE_NAMES], 0)


def test_assemble_guards():
    with pytest.raises(InvalidComponent):
        assemble_record((10.0, 120.0), PROBE, _flow(), None, 3, 0)
    bad = dict(_flow(), src2dst_bytes=-1.0)
    with pytest.raises(InvalidComponent):
        assemble_record((10.0, 0.0), PROBE, bad, None, 3, 0)
    q = QualityReport(40.0, 0.99, 100, 98, 1, 1, 1000, 2000)
    with pytest.raises(InvalidComponent):
        assemble_record((10.0, 0.0), PROBE, _flow(), q, 3, 0)
    with pytest.raises(InvalidComponent):
        assemble_record((10.0, 0.0), PROBE, _flow(), None, 0, 0)


def test_record_rejects_bad_values():
    vals = {n: 1.0 for n in tm.FEATURE_NAMES}
    FeatureRecord(vals, 1)
    with pytest.raises(InvalidComponent):
        FeatureRecord(dict(vals, bu_ratio=1.5), 1)
    with pytest.raises(InvalidComponent):
        FeatureRecord(dict(vals, label_typo=1.0), 1)
    with pytest.raises(InvalidComponent):
        FeatureRecord(vals, 2)


def test_csv_round_trip_keeps_absent_cells(tmp_path):
    full = assemble_record((12.5, 0.0), PROBE, _flow(), QualityReport(
        100.0, 1.0, 10, 10, 0, 0, 1000, 1000), 3, 0)
    probe = full.probe_view()
    path = tmp_path / "d.csv"
    tm.write_dataset(path, [full, probe])
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(tm.FEATURE_NAMES) + ["label"]
    cells = lines[2].split(",")
    for n in tm.OUTCOME_FEATURES:
        assert cells[tm.FEATURE_NAMES.index(n)] == ""
    assert tm.read_dataset(path) == [full, probe]
    tm.append_rows(path, [full])
    assert len(tm.read_dataset(path)) == 3


def test_loss_from_conservation_matches_ping_aggregate():
    from sdnlab.netsim import Simulator, install_path, start_ping
    from sdnlab.topology import Path, nsfnet

    sim = Simulator(nsfnet())
    handles = install_path(sim, Path((0, 3, 8, 9)), (A, B))
    s = start_ping(sim, "client", "server", 10, 0.1, start=0.0)
    # pull the path halfway through so later probes die at the ingress switch
    sim.schedule(0.45, lambda a, b: sim.remove_rule(handles[0]))
    sim.run(s.done_at)
    c = sim.counters[s.flow_id]
    requests_lost = 100.0 * c.dropped / 10
    assert ping_aggregate(s.results())[1] == pytest.approx(requests_lost)
    assert math.isfinite(ping_aggregate(s.results())[0])
    assert np.isclose(ping_aggregate(s.results())[1], 50.0)
