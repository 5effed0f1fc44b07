import numpy as np
import pytest
from hypothesis import strategies as st

from segpost.raster import BinaryMask, LabelMap

_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; printed in the terminal summary."""

    def record(number, title, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        _ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@st.composite
def bool_grids(draw, max_side=10):
    h = draw(st.integers(1, max_side))
    w = draw(st.integers(1, max_side))
    flat = draw(st.lists(st.booleans(), min_size=h * w, max_size=h * w))
    return BinaryMask(np.array(flat, dtype=bool).reshape(h, w))


@st.composite
def label_grids(draw, max_side=10, max_label=6):
    h = draw(st.integers(1, max_side))
    w = draw(st.integers(1, max_side))
    flat = draw(st.lists(st.integers(0, max_label), min_size=h * w, max_size=h * w))
    return LabelMap(np.array(flat, dtype=np.uint8).reshape(h, w))


def random_label_map(rng, h, w, n_objects=4, density=0.5):
    a = rng.integers(1, n_objects + 1, size=(h, w))
    a[rng.random((h, w)) > density] = 0
    return LabelMap(a.astype(np.uint8))
