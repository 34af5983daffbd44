import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dmmopt import trace


@pytest.fixture(scope="session")
def bimodal_10k():
    """The seed-fixed bimodal workload used throughout the acceptance suite."""
    return trace.synth_trace(trace.SynthProfile(
        size_weights={8: 1.0, 4096: 1.0}, event_count=10_000, seed=42,
    ))


@pytest.fixture(scope="session")
def golden_report():
    """A 420-distinct-size workload shaped like the reference profiling
    report: sizes begin 4, 7, 8 and the maximum is 7832240."""
    sizes = [4, 7, 8] + [10 + 2 * i for i in range(416)] + [7832240]
    assert len(sizes) == 420
    lines = [f"malloc 0.0 {s} {0x1000 + 16 * i:#x}" for i, s in enumerate(sizes)]
    return trace.parse_trace("\n".join(lines))


GOLDEN_GENOME = (401, 213, 8, 151, 77, 2, 34, 60, 300, 114,
                 205, 7, 2, 122, 183, 197, 49, 136)
