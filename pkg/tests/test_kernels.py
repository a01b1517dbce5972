import os
import subprocess
import sys

import numpy as np
import pytest

from polyq import kernels
from polyq.exact import shards
from polyq.mcmc import Chain
from polyq.model import ChargeLaw, GibbsSpec, sample_charges

IMPLS = kernels.implementations()
needs_compiled = pytest.mark.skipif("cython" not in IMPLS, reason="compiled kernels not built")


def test_python_fallback_always_present():
    assert "python" in IMPLS
    assert kernels.IMPLEMENTATION in IMPLS


def test_env_forces_fallback():
    code = "from polyq import kernels; print(kernels.IMPLEMENTATION)"
    env = dict(os.environ, POLYQ_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"


@needs_compiled
@pytest.mark.parametrize("d,N", [(1, 9), (2, 7), (3, 5)])
@pytest.mark.parametrize("law", ["rademacher", "gaussian"])
def test_enumeration_identical(d, N, law):
    q = sample_charges(ChargeLaw.from_name(law), N, 3).astype(np.float64)
    py, cy = IMPLS["python"], IMPLS["cython"]
    for prefix, plen in shards(d, N):
        H1, l1 = py.enum_stats(q, d, N, prefix, plen)
        H2, l2 = cy.enum_stats(q, d, N, prefix, plen)
        np.testing.assert_allclose(H1, H2, rtol=0, atol=1e-9)
        assert np.array_equal(np.asarray(l1), np.asarray(l2))
        assert np.array_equal(py.enum_site_local_times(d, N, prefix, plen),
                              cy.enum_site_local_times(d, N, prefix, plen))


@needs_compiled
def test_exp_table_sum_identical():
    d, N = 2, 6
    tab = -0.5 * np.log1p(-2 * 0.3 * np.arange(N + 1) / N)
    for prefix, plen in shards(d, N):
        a = IMPLS["python"].enum_exp_table_sum(d, N, tab, N + 1, 0.0, prefix, plen)
        b = IMPLS["cython"].enum_exp_table_sum(d, N, tab, N + 1, 0.0, prefix, plen)
        assert a[1] == b[1] and a[0] == pytest.approx(b[0], rel=1e-13)


@needs_compiled
@pytest.mark.parametrize("d,beta,pull,law", [
    (2, 3.0, None, "rademacher"), (1, 1.0, (0.4,), "rademacher"), (3, 2.0, None, "gaussian"),
])
def test_chain_bit_identical(d, beta, pull, law):
    N = 25
    q = sample_charges(ChargeLaw.from_name(law), N, 7)
    spec = GibbsSpec(d, N, beta, ChargeLaw.from_name(law), pull)
    a = Chain(spec, q, seed=11, impl=IMPLS["python"])
    b = Chain(spec, q, seed=11, impl=IMPLS["cython"])
    Ha, la, sa = a.run(150, record_steps=True)
    Hb, lb, sb = b.run(150, record_steps=True)
    assert np.array_equal(Ha, Hb) and np.array_equal(la, lb) and np.array_equal(sa, sb)
    assert (a.core.proposed, a.core.accepted) == (b.core.proposed, b.core.accepted)
