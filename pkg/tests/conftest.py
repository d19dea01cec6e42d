import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def random_raster(rng, max_side=32, min_side=4):
    h = int(rng.integers(min_side, max_side + 1))
    w = int(rng.integers(min_side, max_side + 1))
    return rng.random((h, w)).astype(np.float32)


def random_histogram(rng):
    """Mix of dense, sparse, and spiky histograms (ties included)."""
    kind = rng.integers(0, 4)
    counts = np.zeros(256, dtype=np.int64)
    if kind == 0:
        counts[:] = rng.integers(0, 1000, size=256)
    elif kind == 1:
        n_bins = int(rng.integers(1, 8))
        bins = rng.choice(256, size=n_bins, replace=False)
        counts[bins] = rng.integers(1, 10000, size=n_bins)
    elif kind == 2:
        centers = rng.choice(256, size=int(rng.integers(1, 4)), replace=False)
        x = np.arange(256)
        for c in centers:
            counts += np.maximum(0, 500 - 8 * np.abs(x - c)).astype(np.int64)
        counts[centers[0]] += 1
    else:
        counts[:] = rng.integers(0, 3, size=256)
    if counts.sum() == 0:
        counts[int(rng.integers(0, 256))] = 1
    return counts


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion at the end of the run."""
    lines = []
    for outcome, label in (("passed", "PASS"), ("failed", "FAIL"), ("skipped", "SKIP")):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in getattr(rep, "nodeid", ""):
                name = rep.nodeid.split("::")[-1]
                lines.append((name, label))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, label in sorted(lines):
            terminalreporter.write_line(f"{label}  {name}")
