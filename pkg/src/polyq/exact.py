"""Exhaustive enumeration over all (2d)^(N-1) walks.

Paths are visited in lexicographic order of their direction codes, split
into shards that share a fixed-length prefix.  Every reduction is done per
shard in a fixed order and merged once with log-sum-exp rescaling and
``math.fsum``, so results do not depend on how shards are scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from . import kernels
from .model import (GibbsSpec, Walk, direction_vectors, diameter_batch, is_integer_charges)

DEFAULT_BUDGET = 2 ** 26
SHARD_LEAVES = 2 ** 16


class BudgetExceeded(RuntimeError):
    """The requested enumeration is larger than the path budget."""


def path_count(d: int, N: int) -> int:
    return (2 * d) ** (N - 1)


def check_budget(d: int, N: int, budget: int | None = None) -> int:
    budget = DEFAULT_BUDGET if budget is None else budget
    n = path_count(d, N)
    if n > budget:
        raise BudgetExceeded(f"(2d)^(N-1) = {n} paths for d={d}, N={N} exceeds budget {budget}")
    return n


def shards(d: int, N: int) -> list[tuple[int, int]]:
    """``(prefix, prefix_len)`` pairs covering all paths in lexicographic order."""
    b = 2 * d
    rest = 0
    while rest < N - 1 and b ** (rest + 1) <= SHARD_LEAVES:
        rest += 1
    plen = N - 1 - rest
    return [(p, plen) for p in range(b ** plen)]


class PathBatch:
    """One shard of paths with their energies; positions are built lazily."""

    def __init__(self, d, N, prefix, prefix_len, H, lstar):
        self.d, self.N = d, N
        self.prefix, self.prefix_len = prefix, prefix_len
        self.H = H
        self.lstar = lstar
        self._steps = None
        self._pos = None

    def __len__(self):
        return len(self.H)

    @property
    def steps(self) -> np.ndarray:
        if self._steps is None:
            self._steps = kernels.shard_steps(self.d, self.N, self.prefix, self.prefix_len)
        return self._steps

    @property
    def positions(self) -> np.ndarray:
        if self._pos is None:
            pos = np.zeros((len(self), self.N, self.d), dtype=np.int64)
            if self.N > 1:
                pos[:, 1:] = np.cumsum(direction_vectors(self.d)[self.steps], axis=1)
            self._pos = pos
        return self._pos

    @property
    def endpoints(self) -> np.ndarray:
        if self._pos is not None:
            return self._pos[:, -1]
        return direction_vectors(self.d)[self.steps].sum(axis=1)


def iter_batches(q, d: int, N: int, budget: int | None = None) -> Iterable[PathBatch]:
    check_budget(d, N, budget)
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (N,):
        raise ValueError(f"need {N} charges, got {q.shape}")
    for prefix, plen in shards(d, N):
        H, lstar = kernels.enum_stats(q, d, N, prefix, plen)
        yield PathBatch(d, N, prefix, plen, H, lstar)


# ---------------------------------------------------------------------------
# observables

Observable = Callable[[PathBatch], np.ndarray]


def _named_observable(name: str, spec: GibbsSpec, q) -> Observable:
    N = spec.N
    if name == "H/N2":
        return lambda b: b.H / N ** 2
    if name == "Lstar/N":
        return lambda b: b.lstar / N
    if name == "diameter":
        return lambda b: diameter_batch(b.positions).astype(float)
    if name == "S1=e1":
        return lambda b: (b.steps[:, 0] == 0).astype(float) if N > 1 else np.zeros(len(b))
    if name == "one":
        return lambda b: np.ones(len(b))
    base, _, arg = name.partition("@")
    if base in ("S_alpha", "C_alpha", "R_alpha"):
        from .structure import event_batch
        alpha = float(arg) if arg else 0.5
        key = {"S_alpha": "S", "C_alpha": "C", "R_alpha": "R"}[base]
        return lambda b: event_batch(q, b.positions, alpha)[key].astype(float)
    raise ValueError(f"unknown observable {name!r}")


def resolve_observable(obs, spec: GibbsSpec, q) -> Observable:
    if callable(obs):
        return obs
    return _named_observable(str(obs), spec, q)


# ---------------------------------------------------------------------------
# Gibbs measure


def _merge_log(parts: list[tuple[float, float]]) -> float:
    """log of sum_s exp(m_s) * s_s."""
    parts = [(m, s) for m, s in parts if s > 0 and m > -math.inf]
    if not parts:
        return -math.inf
    M = max(m for m, _ in parts)
    return M + math.log(math.fsum(s * math.exp(m - M) for m, s in parts))


class ExactGibbs:
    """The quenched Gibbs measure at fixed charges, by exhaustive enumeration.

    ``hamiltonian='Hhat'`` weights paths by ``2 * Hhat = H - sum q^2``
    instead of ``H``; expectations are unchanged, only ``Z`` rescales by
    the charge-only factor ``exp(beta * sum q^2 / N)``.
    """

    def __init__(self, spec: GibbsSpec, q, budget: int | None = None, hamiltonian: str = "H"):
        if spec.pulled:
            raise ValueError("use pulling.tilted_partition for a pulled measure")
        self.spec = spec
        self.q = np.asarray(q)
        self.budget = budget
        self.d, self.N, self.beta = spec.d, spec.N, spec.beta
        check_budget(self.d, self.N, budget)
        if hamiltonian not in ("H", "Hhat"):
            raise ValueError("hamiltonian must be 'H' or 'Hhat'")
        self.hamiltonian = hamiltonian
        self.energy_offset = float(np.dot(self.q, self.q)) if hamiltonian == "Hhat" else 0.0
        self._log_sum = None

    # internals -----------------------------------------------------------

    def batches(self):
        return iter_batches(self.q, self.d, self.N, self.budget)

    def _logw(self, b: PathBatch) -> np.ndarray:
        return self.beta * (b.H - self.energy_offset) / self.N

    @property
    def log_weight_sum(self) -> float:
        """log sum_paths exp(beta * H / N)."""
        if self._log_sum is None:
            parts = []
            for b in self.batches():
                lw = self._logw(b)
                m = float(lw.max())
                parts.append((m, math.fsum(np.exp(lw - m))))
            self._log_sum = _merge_log(parts)
        return self._log_sum

    # partition functions -------------------------------------------------

    @property
    def log_Z(self) -> float:
        return self.log_weight_sum - (self.N - 1) * math.log(2 * self.d)

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    @property
    def free_energy(self) -> float:
        """(1/N) ln Z_N(beta)."""
        return self.log_Z / self.N

    def log_truncated_Z(self, eps: float) -> float:
        """log Z_N^eps: only paths with L* <= eps N contribute."""
        parts = []
        cut = eps * self.N
        for b in self.batches():
            keep = b.lstar <= cut
            if keep.any():
                lw = self._logw(b)[keep]
                m = float(lw.max())
                parts.append((m, math.fsum(np.exp(lw - m))))
        return _merge_log(parts) - (self.N - 1) * math.log(2 * self.d)

    def truncated_Z(self, eps: float) -> float:
        return math.exp(self.log_truncated_Z(eps))

    # expectations --------------------------------------------------------

    def expect_many(self, observables: Mapping[str, object] | list) -> dict:
        """Gibbs expectations of several observables in one pass."""
        if not isinstance(observables, Mapping):
            observables = {str(o) if not callable(o) else getattr(o, "__name__", repr(o)): o
                           for o in observables}
        funcs = {k: resolve_observable(o, self.spec, self.q) for k, o in observables.items()}
        L = self.log_weight_sum
        acc = {k: [] for k in funcs}
        for b in self.batches():
            w = np.exp(self._logw(b) - L)
            for k, f in funcs.items():
                acc[k].append(math.fsum(w * np.asarray(f(b), dtype=float)))
        return {k: math.fsum(v) for k, v in acc.items()}

    def expect(self, observable) -> float:
        return self.expect_many({"obs": observable})["obs"]

    def probability(self, predicate) -> float:
        """Gibbs probability of a boolean path functional ``predicate(batch)``."""
        return self.expect(lambda b: np.asarray(predicate(b), dtype=float))

    def tv_distance(self) -> float:
        """Total-variation distance between the Gibbs and uniform path laws."""
        L = self.log_weight_sum
        p0 = 1.0 / path_count(self.d, self.N)
        parts = [math.fsum(np.abs(np.exp(self._logw(b) - L) - p0)) for b in self.batches()]
        return min(1.0, 0.5 * math.fsum(parts))

    def endpoint_law(self) -> dict:
        """Exact law of S_{N-1}: mapping site tuple -> probability."""
        L = self.log_weight_sum
        acc: dict[tuple, list] = {}
        for b in self.batches():
            w = np.exp(self._logw(b) - L)
            sites, inv = np.unique(b.endpoints, axis=0, return_inverse=True)
            sums = np.bincount(inv.reshape(-1), weights=w, minlength=len(sites))
            for s, v in zip(map(tuple, sites.tolist()), sums):
                acc.setdefault(s, []).append(v)
        return {s: math.fsum(v) for s, v in sorted(acc.items())}

    def energy_gap_probability(self, eps: float, max_energy: float | None = None) -> float:
        """P_N^beta{ max_S H - H >= eps N^2 }."""
        if max_energy is None:
            max_energy = brute_max_energy(self.q, self.d, self.N, self.budget)[0]
        cut = max_energy - eps * self.N ** 2
        return self.probability(lambda b: b.H <= cut + 1e-9 * max(1.0, abs(cut)))


# ---------------------------------------------------------------------------
# convenience wrappers


def quenched_partition(spec: GibbsSpec, q, budget: int | None = None) -> float:
    return ExactGibbs(spec, q, budget).Z


def truncated_partition(spec: GibbsSpec, q, eps: float, budget: int | None = None) -> float:
    return ExactGibbs(spec, q, budget).truncated_Z(eps)


def gibbs_expectation(spec: GibbsSpec, q, observable, budget: int | None = None) -> float:
    return ExactGibbs(spec, q, budget).expect(observable)


def tv_distance(spec: GibbsSpec, q, budget: int | None = None) -> float:
    return ExactGibbs(spec, q, budget).tv_distance()


def endpoint_law(spec: GibbsSpec, q, budget: int | None = None) -> dict:
    return ExactGibbs(spec, q, budget).endpoint_law()


def brute_max_energy(q, d: int, N: int | None = None, budget: int | None = None):
    """Exact maximum of H_N over all walks and the lexicographically first maximizer."""
    q = np.asarray(q)
    N = len(q) if N is None else N
    best, where = -math.inf, None
    for b in iter_batches(q, d, N, budget):
        k = int(np.argmax(b.H))
        if b.H[k] > best:
            best, where = float(b.H[k]), (b, k)
    b, k = where
    walk = Walk(d, b.steps[k])
    return (int(round(best)) if is_integer_charges(q) else best), walk


@dataclass(frozen=True)
class AnnealedResult:
    value: float          # E Z_N(beta); math.inf when some path diverges
    log_value: float
    infinite: bool
    n_infinite_paths: int


def _gaussian_table(beta: float, N: int) -> tuple[np.ndarray, int]:
    """Per-site exponent -ln(1 - 2 beta l / N) / 2 and the first divergent l."""
    lim = N + 1
    if beta > 0:
        lim = max(1, math.ceil(N / (2 * beta)))
        while lim > 1 and 2 * beta * (lim - 1) / N >= 1:
            lim -= 1
        while 2 * beta * lim / N < 1:
            lim += 1
    ls = np.arange(N + 1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        tab = -0.5 * np.log1p(-2 * beta * ls / N)
    tab[min(lim, N + 1):] = 0.0
    return tab, lim


def annealed_partition_gaussian(spec: GibbsSpec, budget: int | None = None) -> AnnealedResult:
    """E Z_N(beta) for standard Gaussian charges, by enumeration over walks.

    Integrating the charges out gives a product over visited sites of
    ``(1 - 2 beta L^x / N)^(-1/2)``, infinite once ``2 beta L^x >= N``.
    """
    if spec.law.kind != "gaussian":
        raise ValueError("annealed closed form needs gaussian charges")
    d, N, beta = spec.d, spec.N, spec.beta
    check_budget(d, N, budget)
    tab, lim = _gaussian_table(beta, N)
    # sum_x f(L^x) <= N f(l)/l at the largest admissible l since f(l)/l increases
    top = min(lim - 1, (N + 1) // 2)
    shift = N * tab[top] / top if top >= 1 and beta > 0 else 0.0
    total, n_inf = [], 0
    for prefix, plen in shards(d, N):
        s, ni = kernels.enum_exp_table_sum(d, N, tab, lim, shift, prefix, plen)
        total.append(s)
        n_inf += ni
    if n_inf:
        return AnnealedResult(math.inf, math.inf, True, n_inf)
    log_value = shift + math.log(math.fsum(total)) - (N - 1) * math.log(2 * d)
    return AnnealedResult(math.exp(log_value), log_value, False, 0)


# ---------------------------------------------------------------------------
# local times of the free walk


def site_local_time_law(d: int, N: int, budget: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Exact counts[site, l] of paths with L^site = l, over the box ``[-(N-1), N-1]^d``.

    Returns ``(sites, counts)`` where ``sites`` are coordinate rows.
    """
    check_budget(d, N, budget)
    counts = None
    for prefix, plen in shards(d, N):
        c = kernels.enum_site_local_times(d, N, prefix, plen)
        counts = c if counts is None else counts + c
    side = 2 * N - 1
    sites = np.stack(np.unravel_index(np.arange(side ** d), (side,) * d), axis=1) - (N - 1)
    return sites, counts


def max_local_time_law(d: int, N: int, budget: int | None = None) -> np.ndarray:
    """counts[l] = number of walks with L*_N = l."""
    out = np.zeros(N + 1, dtype=np.int64)
    for b in iter_batches(np.zeros(N), d, N, budget):
        out += np.bincount(b.lstar, minlength=N + 1)
    return out
