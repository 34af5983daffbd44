from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from dmmopt import trace
from dmmopt.trace import (
    EventKind,
    MalformedLineError,
    SynthProfile,
    parse_trace,
    serialize_trace,
    synth_trace,
)
from support import brute_stats


def test_parse_basic_pair():
    r = parse_trace("malloc 0.01 24 0x10\nfree 0.02 0x10\n")
    assert len(r.events) == 2
    assert r.events[0].kind is EventKind.ALLOC
    assert r.events[0].size == 24
    assert r.distinct_sizes == (24,)
    assert r.max_size == 24
    assert r.diagnostics == ()


def test_parse_empty_input():
    r = parse_trace("")
    assert r.events == ()
    assert r.distinct_sizes == ()
    assert r.max_size == 0


def test_parse_dangling_free_dropped_with_diagnostic():
    r = parse_trace("free 0.0 0x99\n")
    assert r.events == ()
    assert len(r.diagnostics) == 1
    assert r.diagnostics[0].kind == "dangling_free"
    assert r.diagnostics[0].line_no == 1


def test_parse_double_free_dropped():
    r = parse_trace("malloc 0 8 0x1\nfree 0 0x1\nfree 0 0x1\n")
    assert len(r.events) == 2
    assert [d.kind for d in r.diagnostics] == ["dangling_free"]


def test_parse_zero_size_normalized():
    r = parse_trace("malloc 0 0 0x1\n")
    assert r.events[0].size == 1
    assert r.diagnostics[0].kind == "zero_size_alloc"


def test_parse_decimal_addresses():
    r = parse_trace("malloc 0 8 4096\nfree 0 4096\n")
    assert len(r.events) == 2
    assert r.events[0].address == 4096


@pytest.mark.parametrize("line", [
    "malloc 0.0 24",          # missing address
    "mallok 0.0 24 0x10",     # unknown op
    "malloc x 24 0x10",       # bad time
    "malloc 0.0 -3 0x10",     # negative size
    "malloc 0.0 8 0x0",       # zero address
    "free 0.0",               # missing address
])
def test_parse_malformed_lines(line):
    with pytest.raises(MalformedLineError) as exc:
        parse_trace(line + "\n")
    assert exc.value.line_no == 1


def test_compute_stats_hand_example():
    r = parse_trace(
        "malloc 0 8 0x1\nmalloc 0 16 0x2\nfree 0 0x1\n"
        "malloc 0 8 0x3\nfree 0 0x2\nfree 0 0x3\n"
    )
    st_ = trace.compute_stats(r)
    assert st_.objects == 3
    assert st_.total_memory == 32
    assert st_.max_in_use == 24
    assert st_.memory_ops == 6


def test_compute_stats_empty():
    st_ = trace.compute_stats(parse_trace(""))
    assert (st_.objects, st_.total_memory, st_.max_in_use, st_.memory_ops) == (0, 0, 0, 0)
    assert st_.average_size == 0.0


def test_compute_stats_single_unfreed():
    st_ = trace.compute_stats(parse_trace("malloc 0 100 0x1\n"))
    assert st_.objects == 1
    assert st_.total_memory == 100
    assert st_.max_in_use == 100
    assert st_.memory_ops == 1


def test_distinct_sizes_sorted_dedup():
    r = parse_trace("malloc 0 16 0x1\nmalloc 0 8 0x2\nmalloc 0 16 0x3\n")
    assert r.distinct_sizes == (8, 16)


def test_distinct_sizes_dealii_prefix(golden_report):
    assert golden_report.distinct_sizes[:3] == (4, 7, 8)
    assert golden_report.max_size == 7832240


def test_synth_empty():
    r = synth_trace(SynthProfile(size_weights={8: 1.0}, event_count=0, seed=1))
    assert r.events == ()


def test_synth_deterministic():
    p = SynthProfile(size_weights={8: 1.0, 4096: 1.0}, event_count=500, seed=1)
    assert serialize_trace(synth_trace(p)) == serialize_trace(synth_trace(p))


def test_synth_bimodal_sizes():
    p = SynthProfile(size_weights={8: 1.0, 4096: 1.0}, event_count=1000, seed=3)
    assert synth_trace(p).distinct_sizes == (8, 4096)


def test_synth_frees_target_live_allocs():
    p = SynthProfile(size_weights={8: 1.0}, event_count=800, seed=9, drain=True)
    r = synth_trace(p)
    # re-parsing must produce zero diagnostics and identical events
    reparsed = parse_trace(serialize_trace(r))
    assert reparsed.diagnostics == ()
    assert len(reparsed.events) == len(r.events)
    assert reparsed.n_allocs == reparsed.n_frees


def test_format_golden_file_is_canonical():
    """The checked-in golden file pins the wire format byte for byte;
    the capture shim and the parser share this contract."""
    text = (Path(__file__).parent / "data" / "format_golden.trace").read_text()
    report = parse_trace(text)
    assert serialize_trace(report) == text
    assert report.diagnostics == ()
    assert report.n_allocs == 3 and report.n_frees == 3
    assert report.distinct_sizes == (24, 4096)
    st_ = trace.compute_stats(report)
    assert (st_.objects, st_.total_memory, st_.max_in_use) == (3, 4144, 4120)


def test_roundtrip_canonicalization():
    messy = "malloc   0.01  24   16\nfree\t0.02 0x10\n\n"
    canonical = serialize_trace(parse_trace(messy))
    assert canonical == "malloc 0.01 24 0x10\nfree 0.02 0x10\n"
    assert serialize_trace(parse_trace(canonical)) == canonical


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 400), st.integers(0, 2**31))
def test_stats_match_brute_force_replay(n_events, seed):
    r = synth_trace(SynthProfile(
        size_weights={8: 1.0, 24: 2.0, 4096: 0.5}, event_count=n_events, seed=seed,
    ))
    st_ = trace.compute_stats(r)
    objects, total, peak, ops = brute_stats(r)
    assert (st_.objects, st_.total_memory, st_.max_in_use, st_.memory_ops) == \
        (objects, total, peak, ops)


@settings(max_examples=80, deadline=None)
@given(st.binary(max_size=200))
def test_parse_never_panics(data):
    text = data.decode("utf-8", errors="replace")
    try:
        parse_trace(text)
    except MalformedLineError:
        pass  # structured error, not a crash
