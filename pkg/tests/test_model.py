import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from polyq.model import (
    ChargeLaw, GibbsSpec, Walk, charge_moments, diameter, energy, interaction_energy,
    occupation, parity_sign_sums, qbar, sample_charges,
)
from strategies import walk_and_charges, walks


def brute_energy(q, walk):
    pos = [tuple(p) for p in walk.positions.tolist()]
    return sum(q[i] * q[j] for i in range(len(q)) for j in range(len(q)) if pos[i] == pos[j])


def brute_qbar(q, window):
    a = np.abs(np.asarray(q, dtype=float))
    n = len(a)
    if window == n:
        return a.mean()
    return min(a[i:j].mean() for i in range(n) for j in range(i + window, n + 1) if j - i <= n - 1)


class TestOccupation:
    def test_small_d1_example(self):
        w = Walk(1, [0, 1])
        fld = occupation(np.array([1, -1, 1]), w)
        assert fld.as_dict() == {(0,): (2, 2), (1,): (1, -1)}
        assert energy(fld) == 5
        assert interaction_energy(np.array([1, -1, 1]), w) == 1

    def test_charge_count_mismatch(self):
        with pytest.raises(ValueError):
            occupation(np.array([1, 1]), Walk(1, [0, 0]))

    def test_integer_energy_is_exact_int(self):
        q = np.array([10 ** 9, -(10 ** 9), 10 ** 9])
        assert energy(occupation(q, Walk.straight(2, 3))) == 3 * 10 ** 18

    @given(walk_and_charges())
    def test_local_times_sum_to_N(self, wq):
        w, q = wq
        fld = occupation(q, w)
        assert fld.N == w.N
        assert fld.local_time.min() >= 1

    @given(walk_and_charges())
    def test_energy_matches_double_sum(self, wq):
        w, q = wq
        assert energy(occupation(q, w)) == brute_energy(q, w)

    @given(walk_and_charges())
    def test_energy_interaction_decomposition(self, wq):
        w, q = wq
        assert energy(occupation(q, w)) == 2 * interaction_energy(q, w) + int(np.dot(q, q))

    @given(walk_and_charges(real=True))
    def test_energy_decomposition_real(self, wq):
        w, q = wq
        H = energy(occupation(q, w))
        assert H == pytest.approx(2 * interaction_energy(q, w) + float(np.dot(q, q)), abs=1e-9)


class TestWalk:
    def test_invalid_step_code(self):
        with pytest.raises(ValueError):
            Walk(2, [4])

    def test_from_positions_roundtrip(self):
        w = Walk(2, [0, 2, 1, 3])
        assert Walk.from_positions(w.positions) == w

    def test_from_positions_rejects_jump(self):
        with pytest.raises(ValueError):
            Walk.from_positions([[0, 0], [2, 0]])

    @given(walks(min_n=2))
    def test_suffix_reanchored(self, w):
        k = w.N // 2
        s = w.suffix(k)
        assert s.N == w.N - k
        assert np.array_equal(s.positions, w.positions[k:] - w.positions[k])


class TestParitySums:
    def test_alternating_example(self):
        p = parity_sign_sums(np.array([1, -1, 1, -1]))
        assert (p.plus_even, p.minus_even, p.plus_odd, p.minus_odd) == (2, 0, 0, 2)
        assert p.max_energy() == 8

    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=30))
    def test_consistency(self, xs):
        q = np.array(xs)
        p = parity_sign_sums(q)
        assert p.get(1, 0) - p.get(-1, 0) == q[0::2].sum()
        assert p.get(1, 1) - p.get(-1, 1) == q[1::2].sum()
        assert p.get(1, 0) + p.get(-1, 0) + p.get(1, 1) + p.get(-1, 1) == np.abs(q).sum()


class TestDiameter:
    def test_examples(self):
        assert diameter(Walk.straight(1, 1)) == 0
        assert diameter(Walk.straight(2, 5)) == 4
        assert diameter(Walk(2, [0, 2, 1])) == 2

    @given(walks())
    def test_matches_pairwise(self, w):
        pos = w.positions
        ref = max((int(np.abs(a - b).sum()) for a, b in combinations(pos, 2)), default=0)
        assert diameter(w) == ref


class TestQbar:
    def test_examples(self):
        assert qbar(np.array([1, 0, 0, 1]), 2) == 0.0
        assert qbar(np.array([1, 2, 3]), 3) == 2.0
        assert qbar(np.array([3, 1, 2, 5]), 1) == 1.0

    def test_bad_window(self):
        with pytest.raises(ValueError):
            qbar(np.array([1, 2]), 3)

    @given(st.lists(st.floats(-4, 4, allow_nan=False), min_size=2, max_size=25), st.data())
    def test_matches_quadratic_scan(self, xs, data):
        q = np.array(xs)
        w = data.draw(st.integers(1, len(q)))
        assert qbar(q, w) == pytest.approx(brute_qbar(q, w), abs=1e-12)


class TestChargeLaws:
    def test_rademacher_moments(self):
        m = charge_moments(ChargeLaw.rademacher())
        assert m.kappa == pytest.approx(1.0, abs=1e-6)
        assert m.gamma == pytest.approx(0.25)
        assert m.lam == pytest.approx(0.125)
        for d in (1, 2, 3):
            for a in (0.1, 0.5, 1 / 17):
                assert m.beta_alpha(a, d) == pytest.approx(32 * math.log(2 * d) / (1 - a))

    def test_rho_below_one(self):
        law = ChargeLaw.rademacher()
        m = charge_moments(law)
        a = 1 / 17
        beta = 34 * math.log(4) + 1
        assert m.rho(beta, a, 2, law) == pytest.approx(4 * math.exp(-beta * a / 2))
        assert m.rho(beta, a, 2, law) < 1

    def test_discrete_rademacher_same_samples(self):
        a = sample_charges(ChargeLaw.rademacher(), 100_000, 1)
        b = sample_charges(ChargeLaw.discrete([-1, 1], [0.5, 0.5]), 100_000, 2)
        assert stats.ks_2samp(a, b).statistic < 0.02

    def test_gaussian_sample_moments(self):
        x = sample_charges(ChargeLaw.gaussian(), 200_000, 3)
        assert abs(x.mean()) < 0.01
        assert x.var() == pytest.approx(1.0, abs=0.02)

    def test_uniform_unit_variance(self):
        x = sample_charges(ChargeLaw.uniform(), 200_000, 4)
        assert x.var() == pytest.approx(1.0, abs=0.02)

    def test_discrete_is_standardized(self):
        law = ChargeLaw.discrete([0, 1], [0.5, 0.5])
        assert law.values == (-1.0, 1.0)

    def test_discrete_rejects_degenerate(self):
        with pytest.raises(ValueError):
            ChargeLaw.discrete([2, 2], [0.5, 0.5])
        with pytest.raises(ValueError):
            ChargeLaw.discrete([-1, 1], [0.6, 0.6])

    def test_from_name(self):
        assert ChargeLaw.from_name("rademacher") == ChargeLaw.rademacher()
        assert ChargeLaw.from_name("discrete:-1=0.5,1=0.5").is_integer

    def test_sampling_is_seeded(self):
        a = sample_charges(ChargeLaw.gaussian(), 10, 5)
        assert np.array_equal(a, sample_charges(ChargeLaw.gaussian(), 10, 5))

    def test_rademacher_integer_dtype(self):
        assert sample_charges(ChargeLaw.rademacher(), 4, 0).dtype.kind == "i"


class TestGibbsSpec:
    def test_pull_defaults_to_zero(self):
        s = GibbsSpec(2, 5, 1.0)
        assert s.pull == (0.0, 0.0) and not s.pulled

    def test_pull_dimension_checked(self):
        with pytest.raises(ValueError):
            GibbsSpec(2, 5, 1.0, pull=(1.0,))

    def test_charges_need_seed(self):
        with pytest.raises(ValueError):
            GibbsSpec(1, 3, 1.0).charges()
