"""Hypothesis strategies shared by the test modules."""
import numpy as np
from hypothesis import strategies as st

from polyq.model import Walk


@st.composite
def walks(draw, d=None, min_n=1, max_n=40):
    d = draw(st.integers(1, 3)) if d is None else d
    n = draw(st.integers(min_n, max_n))
    steps = draw(st.lists(st.integers(0, 2 * d - 1), min_size=n - 1, max_size=n - 1))
    return Walk(d, np.array(steps, dtype=np.int8))


@st.composite
def int_charges(draw, n, lo=-3, hi=3):
    return np.array(draw(st.lists(st.integers(lo, hi), min_size=n, max_size=n)), dtype=np.int64)


@st.composite
def walk_and_charges(draw, d=None, min_n=1, max_n=40, real=False):
    w = draw(walks(d=d, min_n=min_n, max_n=max_n))
    if real:
        q = np.array(draw(st.lists(st.floats(-3, 3, allow_nan=False), min_size=w.N, max_size=w.N)))
    else:
        q = draw(int_charges(w.N))
    return w, q
