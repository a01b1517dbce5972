import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polyq.exact import BudgetExceeded, quenched_partition
from polyq.mcmc import Chain
from polyq.model import ChargeLaw, GibbsSpec, sample_charges
from polyq.pulling import (
    beta_c_bounds, beta_c_scan, lipschitz_gap, log_tilted_partition, mean_origin_local_time,
    step_normalizer, tilted_partition, tilted_step_law,
)
from polyq.rate import return_probabilities


def rad(N, seed):
    return sample_charges(ChargeLaw.rademacher(), N, seed)


class TestStepLaw:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_unforced_is_uniform(self, d):
        law = tilted_step_law(np.zeros(d), d)
        assert set(law.values()) == {1 / (2 * d)} and len(law) == 2 * d

    def test_arithmetic(self):
        law = tilted_step_law([math.log(3)], 1)
        assert law[(1,)] == pytest.approx(0.9, abs=1e-15)
        assert law[(-1,)] == pytest.approx(0.1, abs=1e-15)

    @given(st.integers(1, 4), st.data())
    def test_normalized(self, d, data):
        lam = data.draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=d, max_size=d))
        assert abs(math.fsum(tilted_step_law(lam, d).values()) - 1) <= 1e-15

    def test_normalizer(self):
        assert step_normalizer([0.3, 0.0], 2) == pytest.approx((math.cosh(0.3) + 1) / 2)

    def test_wrong_dimension(self):
        with pytest.raises(ValueError):
            tilted_step_law([0.1, 0.2], 3)


class TestPartition:
    def test_beta_zero(self):
        spec = GibbsSpec(2, 6, 0.0, pull=(0.4, -0.2))
        assert tilted_partition(spec, rad(6, 1)) == pytest.approx(1.0, abs=1e-13)

    def test_unforced_reduces_to_quenched(self):
        q = rad(7, 2)
        spec = GibbsSpec(2, 7, 1.5)
        assert tilted_partition(spec, q) == pytest.approx(quenched_partition(spec, q), rel=1e-12)

    def test_direct_sum(self):
        # d=1, N=3: four paths, weights from the tilted step law
        q = np.array([1, -1, 1])
        lam, beta = 0.5, 2.0
        p = {1: math.exp(lam) / (2 * math.cosh(lam)), -1: math.exp(-lam) / (2 * math.cosh(lam))}
        total = 0.0
        for a in (1, -1):
            for b in (1, -1):
                sites = [0, a, a + b]
                Q = {}
                for x, c in zip(sites, q):
                    Q[x] = Q.get(x, 0) + c
                total += p[a] * p[b] * math.exp(beta * sum(v * v for v in Q.values()) / 3)
        spec = GibbsSpec(1, 3, beta, pull=(lam,))
        assert tilted_partition(spec, q) == pytest.approx(total, rel=1e-13)

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            log_tilted_partition(GibbsSpec(2, 20, 1.0, pull=(0.1, 0.1)), rad(20, 0))

    def test_exact_vs_mcmc(self):
        q = rad(8, 42)
        spec = GibbsSpec(1, 8, 2.0, pull=(0.6,))
        ex = tilted_partition(spec, q)
        est = tilted_partition(spec, q, method="mcmc", sweeps=30_000, seed=3)
        assert abs(est.mean - ex) <= 3 * est.stderr + 1e-12

    def test_mcmc_needs_seed(self):
        with pytest.raises(ValueError):
            tilted_partition(GibbsSpec(1, 4, 1.0, pull=(0.1,)), rad(4, 0), method="mcmc")

    def test_unforced_chain_unchanged(self):
        q = rad(15, 3)
        a = Chain(GibbsSpec(2, 15, 2.0), q, seed=4).run(500)[0]
        b = Chain(GibbsSpec(2, 15, 2.0, pull=(0.0, 0.0)), q, seed=4).run(500)[0]
        assert np.array_equal(a, b)


class TestBetaCBounds:
    def test_rademacher_upper(self):
        b = beta_c_bounds([0.0, 0.0], ChargeLaw.rademacher(), 2)
        assert b.upper == pytest.approx(4 * math.log(4))
        assert b.lower == pytest.approx(1.0, abs=1e-6)

    def test_gaussian_upper(self):
        b = beta_c_bounds([0.0, 0.0], ChargeLaw.gaussian(), 2)
        assert b.upper == pytest.approx(2 * math.pi * math.log(4), rel=1e-6)

    @pytest.mark.parametrize("law", [ChargeLaw.rademacher(), ChargeLaw.gaussian()])
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_consistent_on_grid(self, law, d):
        for x in np.linspace(0, 4, 9):
            b = beta_c_bounds(np.full(d, x), law, d)
            assert b.consistent, (x, b)

    def test_metadata_notes_kappa_factor(self):
        assert "kappa" in beta_c_bounds([0.2], ChargeLaw.rademacher(), 1).metadata["note"]


class TestLipschitz:
    def test_no_increment(self):
        assert lipschitz_gap([0.5], [0.0], 2.0, ChargeLaw.rademacher(), 1) == 0.0

    @pytest.mark.parametrize("lam", [0.1, 0.5, 1.0, 3.0])
    def test_nonnegative_finite(self, lam):
        v = lipschitz_gap([lam, 0.0], [0.1, 0.1], 3.0, ChargeLaw.rademacher(), 2)
        assert 0 <= v < math.inf

    def test_unforced_is_infinite(self):
        assert lipschitz_gap([0.0], [0.1], 3.0, ChargeLaw.rademacher(), 1) == math.inf


class TestLocalTime:
    @pytest.mark.parametrize("d,lam", [(1, 0.3), (2, 0.2)])
    def test_pull_reduces_origin_visits(self, d, lam):
        N = 200
        free = math.fsum(return_probabilities(d, N - 1))
        e = mean_origin_local_time(d, N, lam, 20_000, seed=1)
        assert e.mean + 3 * e.stderr <= free

    def test_unforced_matches_exact_mean(self):
        N = 100
        free = math.fsum(return_probabilities(1, N - 1))
        e = mean_origin_local_time(1, N, 0.0, 40_000, seed=2)
        assert abs(e.mean - free) <= 4 * e.stderr


class TestScan:
    def test_bracket_reported(self):
        q = rad(16, 1)
        spec = GibbsSpec(2, 16, 0.0, pull=(0.2, 0.0))
        s = beta_c_scan(spec, q, np.linspace(0, 12, 7), 3000, seed=2)
        assert s.F_excess[0] == 0.0
        assert s.bracket is None or s.bracket[0] < s.bracket[1]
