"""Numpy / pure-Python implementations of the hot loops.

These mirror ``_ckernels.pyx`` call for call and are used when the compiled
module is unavailable (or when ``POLYQ_PURE_PYTHON=1``).  Both produce the
same enumeration order and, for the Markov chain, the same random stream
consumption, so chains agree bit for bit.
"""
from __future__ import annotations

import math

import numpy as np

from .model import direction_vectors

IMPLEMENTATION = "python"
_INV53 = 1.0 / 9007199254740992.0


def shard_steps(d: int, N: int, prefix: int, prefix_len: int) -> np.ndarray:
    """All step sequences of a shard in lexicographic order, shape ``(P, N-1)``."""
    b = 2 * d
    rest = N - 1 - prefix_len
    P = b ** rest
    steps = np.empty((P, N - 1), dtype=np.int8)
    p = prefix
    for k in range(prefix_len - 1, -1, -1):
        steps[:, k] = p % b
        p //= b
    idx = np.arange(P, dtype=np.int64)
    for k in range(N - 2, prefix_len - 1, -1):
        steps[:, k] = idx % b
        idx //= b
    return steps


def shard_positions(d: int, N: int, prefix: int, prefix_len: int) -> np.ndarray:
    steps = shard_steps(d, N, prefix, prefix_len)
    pos = np.zeros((steps.shape[0], N, d), dtype=np.int64)
    if N > 1:
        pos[:, 1:] = np.cumsum(direction_vectors(d)[steps], axis=1)
    return pos


def _coincidence(pos: np.ndarray) -> np.ndarray:
    """Boolean ``(P, N, N)`` array of S_i == S_j."""
    return np.all(pos[:, :, None, :] == pos[:, None, :, :], axis=3)


def enum_stats(q, d: int, N: int, prefix: int, prefix_len: int):
    """Energies and maximal local times of every path in a shard."""
    q = np.asarray(q, dtype=np.float64)
    eq = _coincidence(shard_positions(d, N, prefix, prefix_len))
    H = (eq.astype(np.float64) @ q) @ q
    lstar = eq.sum(axis=2).max(axis=1).astype(np.int32)
    return H, lstar


def enum_exp_table_sum(d: int, N: int, table, lim: int, shift: float, prefix: int, prefix_len: int):
    """Sum over the shard of exp(sum_x table[L^x] - shift).

    ``table[l]`` is used for ``l < lim``; a path with a local time
    ``>= lim`` counts as infinite.  Returns ``(total, n_infinite)``.
    """
    tab = np.zeros(N + 1)
    src = np.asarray(table, dtype=np.float64)
    n = min(len(src), lim, N + 1)
    tab[:n] = src[:n]
    eq = _coincidence(shard_positions(d, N, prefix, prefix_len))
    lt = eq.sum(axis=2)
    inf = lt.max(axis=1) >= lim
    expo = (tab[lt] / lt).sum(axis=1)
    return math.fsum(np.exp(expo[~inf] - shift)), int(inf.sum())


def enum_site_local_times(d: int, N: int, prefix: int, prefix_len: int) -> np.ndarray:
    """counts[site, l] = number of shard paths with L^site = l.

    Sites are indexed on the box ``[-(N-1), N-1]^d`` in C order.
    """
    pos = shard_positions(d, N, prefix, prefix_len)
    P = pos.shape[0]
    side = 2 * N - 1
    eq = _coincidence(pos)
    lt = eq.sum(axis=2)
    first = ~np.tril(eq, -1).any(axis=2)
    site = np.ravel_multi_index(tuple(np.moveaxis(pos + N - 1, 2, 0)), (side,) * d)
    counts = np.zeros((side ** d, N + 1), dtype=np.int64)
    np.add.at(counts, (site[first], lt[first]), 1)
    counts[:, 0] += P - counts[:, 1:].sum(axis=1)
    return counts


class ChainCore:
    """Suffix-shift Metropolis chain at fixed charges.

    A proposal picks an increment index ``i`` and a new direction, replaces
    increment ``i`` and rigidly translates monomers ``i+1..N-1``.  Each
    proposal consumes three raw 64-bit draws from ``bitgen``.
    """

    def __init__(self, q, d, steps, beta, pull, bitgen):
        self.q = [float(x) for x in np.asarray(q, dtype=np.float64)]
        self.d = int(d)
        self.N = len(self.q)
        self.beta = float(beta)
        self.pull = [float(x) for x in pull]
        self.bitgen = bitgen
        self.dirs = [tuple(int(v) for v in row) for row in direction_vectors(self.d)]
        self.dir_pull = [0.0] * (2 * self.d)
        for k in range(2 * self.d):
            self.dir_pull[k] = self.pull[k // 2] if k % 2 == 0 else -self.pull[k // 2]
        self.proposed = 0
        self.accepted = 0
        self.changed = 0    # accepted proposals that actually moved the walk
        self.set_steps(steps)

    # state ---------------------------------------------------------------

    def set_steps(self, steps):
        steps = [int(s) for s in np.asarray(steps).reshape(-1)]
        if len(steps) != self.N - 1:
            raise ValueError("step count does not match charges")
        self.steps = steps
        pos = [(0,) * self.d]
        for s in steps:
            e = self.dirs[s]
            pos.append(tuple(a + b for a, b in zip(pos[-1], e)))
        self.pos = pos
        self.sites = {}
        self.hist = [0] * (self.N + 2)
        self.H = 0.0
        self.lstar = 0
        for i in range(self.N):
            self._add(i, pos[i])

    def _add(self, i, x):
        qi = self.q[i]
        Q, L = self.sites.get(x, (0.0, 0))
        self.H += 2.0 * qi * Q + qi * qi
        self.sites[x] = (Q + qi, L + 1)
        self.hist[L] -= 1 if L else 0
        self.hist[L + 1] += 1
        if L + 1 > self.lstar:
            self.lstar = L + 1

    def _remove(self, i, x):
        qi = self.q[i]
        Q, L = self.sites[x]
        self.H += -2.0 * qi * Q + qi * qi
        if L == 1:
            del self.sites[x]
        else:
            self.sites[x] = (Q - qi, L - 1)
        self.hist[L] -= 1
        if L - 1:
            self.hist[L - 1] += 1
        if L == self.lstar and self.hist[L] == 0:
            self.lstar = L - 1

    def get_steps(self):
        return np.asarray(self.steps, dtype=np.int8)

    def positions(self):
        return np.asarray(self.pos, dtype=np.int64).reshape(self.N, self.d)

    def energy(self):
        return self.H

    def max_local_time(self):
        return self.lstar

    def set_beta(self, beta):
        self.beta = float(beta)

    # dynamics ------------------------------------------------------------

    def _propose(self, r0, r1, r2):
        n1 = self.N - 1
        i = int((r0 >> 11) * _INV53 * n1)
        k = int((r1 >> 11) * _INV53 * (2 * self.d))
        u = (r2 >> 11) * _INV53
        self.proposed += 1
        old = self.steps[i]
        if k == old:
            self.accepted += 1
            return
        eo, en = self.dirs[old], self.dirs[k]
        shift = tuple(b - a for a, b in zip(eo, en))
        H0, l0 = self.H, self.lstar
        pos = self.pos
        for j in range(i + 1, self.N):
            self._remove(j, pos[j])
        moved = [tuple(a + b for a, b in zip(pos[j], shift)) for j in range(i + 1, self.N)]
        for j in range(i + 1, self.N):
            self._add(j, moved[j - i - 1])
        a = self.beta * (self.H - H0) / self.N + (self.dir_pull[k] - self.dir_pull[old])
        if a >= 0.0 or u < math.exp(a):
            self.accepted += 1
            self.changed += 1
            self.steps[i] = k
            pos[i + 1:] = moved
            return
        for j in range(i + 1, self.N):
            self._remove(j, moved[j - i - 1])
        for j in range(i + 1, self.N):
            self._add(j, pos[j])
        self.H, self.lstar = H0, l0

    def run(self, nsweeps, record_steps=False):
        """Run ``nsweeps`` sweeps of ``N-1`` proposals.

        Returns per-sweep energies, maximal local times and (optionally) the
        step sequence after each sweep.
        """
        nsweeps = int(nsweeps)
        n1 = self.N - 1
        Hs = np.empty(nsweeps, dtype=np.float64)
        ls = np.empty(nsweeps, dtype=np.int32)
        rec = np.empty((nsweeps, n1) if record_steps else (0, n1), dtype=np.int8)
        for s in range(nsweeps):
            if n1:
                raw = self.bitgen.random_raw(3 * n1).tolist()
                for t in range(n1):
                    self._propose(raw[3 * t], raw[3 * t + 1], raw[3 * t + 2])
            Hs[s] = self.H
            ls[s] = self.lstar
            if record_steps:
                rec[s] = self.steps
        return Hs, ls, rec
