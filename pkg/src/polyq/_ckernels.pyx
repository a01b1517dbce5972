# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled enumeration and Metropolis kernels.

Call-for-call twin of ``_pykernels``: same enumeration order, same floating
point operation order, same consumption of the random stream.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp
from libc.stdint cimport int64_t, uint64_t
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector
from libcpp.pair cimport pair
from numpy.random cimport bitgen_t

cnp.import_array()

ctypedef pair[double, int] Cell

cdef extern from *:
    """
    #include <unordered_map>
    #include <utility>
    template <class It>
    static inline std::pair<double, int>& deref_cell(It it) { return it->second; }
    """
    Cell& deref_cell(unordered_map[int64_t, Cell].iterator) nogil

IMPLEMENTATION = "cython"
cdef double INV53 = 1.0 / 9007199254740992.0


# ---------------------------------------------------------------------------
# Exhaustive enumeration


cdef struct Grid:
    int d
    int N
    int side
    int mode          # 0: stats, 1: exp-table sum, 2: site local times
    int prefix_len
    int lim
    double shift
    long[12] stride   # offsets of the 2d directions in the flat grid
    double* q
    int* L
    double* Qs
    int* site        # flat site index of each placed monomer
    double* table
    double* H_out
    int* ls_out
    long long* counts
    int* stamp
    int stamp_now
    long leaf
    double sum_hi
    double sum_lo
    long n_inf


cdef inline void neumaier(Grid* g, double x) noexcept nogil:
    cdef double t = g.sum_hi + x
    if (g.sum_hi if g.sum_hi >= 0 else -g.sum_hi) >= (x if x >= 0 else -x):
        g.sum_lo += (g.sum_hi - t) + x
    else:
        g.sum_lo += (x - t) + g.sum_hi
    g.sum_hi = t


cdef void leaf_out(Grid* g, double H, int lstar, double expo, int bad) noexcept nogil:
    cdef int i, s
    if g.mode == 0:
        g.H_out[g.leaf] = H
        g.ls_out[g.leaf] = lstar
    elif g.mode == 1:
        if bad:
            g.n_inf += 1
        else:
            neumaier(g, exp(expo - g.shift))
    else:
        g.stamp_now += 1
        for i in range(g.N):
            s = g.site[i]
            if g.stamp[s] != g.stamp_now:
                g.stamp[s] = g.stamp_now
                g.counts[s * (g.N + 1) + g.L[s]] += 1
    g.leaf += 1


cdef void descend(Grid* g, int t, double H, int lstar, double expo, int bad) noexcept nogil:
    # monomers 0..t-1 are placed; place monomer t
    cdef int k, s, l
    cdef double qt, Q
    if t == g.N:
        leaf_out(g, H, lstar, expo, bad)
        return
    qt = g.q[t]
    for k in range(2 * g.d):
        s = g.site[t - 1] + g.stride[k]
        Q = g.Qs[s]
        l = g.L[s] + 1
        g.Qs[s] = Q + qt
        g.L[s] = l
        g.site[t] = s
        if g.mode == 1:
            descend(g, t + 1, H + 2.0 * qt * Q + qt * qt, lstar if lstar > l else l,
                    expo + (g.table[l] - g.table[l - 1]) if l < g.lim else expo,
                    bad or l >= g.lim)
        else:
            descend(g, t + 1, H + 2.0 * qt * Q + qt * qt, lstar if lstar > l else l, 0.0, 0)
        g.Qs[s] = Q
        g.L[s] = l - 1


cdef void run_shard(Grid* g, long prefix) noexcept nogil:
    cdef int t, k, s, l, lstar = 1, bad = 0
    cdef double H, expo = 0.0, qt, Q
    cdef long p = prefix, b = 2 * g.d
    cdef int[64] digits
    for t in range(g.prefix_len - 1, -1, -1):
        digits[t] = p % b
        p //= b
    s = 0
    for t in range(g.d):
        s = s * g.side + (g.N - 1)
    g.site[0] = s
    g.Qs[s] = g.q[0]
    g.L[s] = 1
    H = g.q[0] * g.q[0]
    if g.mode == 1:
        if 1 < g.lim:
            expo = g.table[1] - g.table[0]
        else:
            bad = 1
    for t in range(1, g.prefix_len + 1):
        k = digits[t - 1]
        qt = g.q[t]
        s = g.site[t - 1] + g.stride[k]
        Q = g.Qs[s]
        l = g.L[s] + 1
        g.Qs[s] = Q + qt
        g.L[s] = l
        g.site[t] = s
        H = H + 2.0 * qt * Q + qt * qt
        if l > lstar:
            lstar = l
        if g.mode == 1:
            if l < g.lim:
                expo = expo + (g.table[l] - g.table[l - 1])
            else:
                bad = 1
    descend(g, g.prefix_len + 1, H, lstar, expo, bad)


cdef object _enumerate(int mode, double[::1] q, int d, int N, long prefix, int prefix_len,
                       double[::1] table, int lim, double shift):
    if N < 1 or prefix_len > N - 1 or prefix_len > 63 or d > 6:
        raise ValueError("unsupported enumeration shape")
    cdef Grid g
    cdef int side = 2 * N - 1
    cdef long n_sites = 1
    cdef int k
    for k in range(d):
        n_sites *= side
    cdef long P = 1
    for k in range(N - 1 - prefix_len):
        P *= 2 * d
    cdef long stride = 1
    for k in range(d - 1, -1, -1):
        g.stride[2 * k] = stride
        g.stride[2 * k + 1] = -stride
        stride *= side
    Lbuf = np.zeros(n_sites, dtype=np.intc)
    Qbuf = np.zeros(n_sites, dtype=np.float64)
    sbuf = np.zeros(N, dtype=np.intc)
    cdef int[::1] Lv = Lbuf
    cdef double[::1] Qv = Qbuf
    cdef int[::1] sv = sbuf
    cdef double[::1] Hv
    cdef int[::1] lv
    cdef long long[:, ::1] cv
    cdef int[::1] stv
    g.d, g.N, g.side, g.mode, g.prefix_len = d, N, side, mode, prefix_len
    g.q, g.L, g.Qs, g.site = &q[0], &Lv[0], &Qv[0], &sv[0]
    g.leaf, g.sum_hi, g.sum_lo, g.n_inf, g.stamp_now = 0, 0.0, 0.0, 0, 0
    g.lim, g.shift = lim, shift
    H_arr = ls_arr = counts = None
    if mode == 0:
        H_arr = np.empty(P, dtype=np.float64)
        ls_arr = np.empty(P, dtype=np.int32)
        Hv, lv = H_arr, ls_arr
        g.H_out, g.ls_out = &Hv[0], &lv[0]
    elif mode == 1:
        g.table = &table[0]
    else:
        counts = np.zeros((n_sites, N + 1), dtype=np.int64)
        stamp = np.zeros(n_sites, dtype=np.intc)
        cv, stv = counts, stamp
        g.counts, g.stamp = &cv[0, 0], &stv[0]
    with nogil:
        run_shard(&g, prefix)
    if mode == 0:
        return H_arr, ls_arr
    if mode == 1:
        return g.sum_hi + g.sum_lo, int(g.n_inf)
    counts[:, 0] += P - counts[:, 1:].sum(axis=1)
    return counts


cdef double[::1] _EMPTY = np.zeros(1)


def enum_stats(q, int d, int N, long prefix, int prefix_len):
    """Energies and maximal local times of every path in a shard."""
    return _enumerate(0, np.ascontiguousarray(q, dtype=np.float64), d, N, prefix, prefix_len,
                      _EMPTY, 0, 0.0)


def enum_exp_table_sum(int d, int N, table, int lim, double shift, long prefix, int prefix_len):
    """Neumaier sum over the shard of exp(sum_x table[L^x] - shift).

    ``table[l]`` is used for ``l < lim``; a path with a local time
    ``>= lim`` counts as infinite.  Returns ``(total, n_infinite)``.
    """
    tab = np.zeros(max(N + 1, 2), dtype=np.float64)
    src = np.asarray(table, dtype=np.float64)
    n = min(len(src), lim, N + 1)
    tab[:n] = src[:n]
    return _enumerate(1, np.zeros(N, dtype=np.float64), d, N, prefix, prefix_len, tab, lim, shift)


def enum_site_local_times(int d, int N, long prefix, int prefix_len):
    """counts[site, l] = number of shard paths with L^site = l."""
    return _enumerate(2, np.zeros(N, dtype=np.float64), d, N, prefix, prefix_len, _EMPTY, 0, 0.0)


# ---------------------------------------------------------------------------
# Metropolis chain



cdef class ChainCore:
    """Suffix-shift Metropolis chain at fixed charges (see ``_pykernels``)."""

    cdef readonly int d, N
    cdef public double beta
    cdef readonly long proposed, accepted, changed
    cdef double H
    cdef int lstar, bits
    cdef int64_t offset
    cdef vector[double] q
    cdef vector[int] steps_
    cdef vector[int64_t] key     # packed position of each monomer
    cdef vector[int64_t] moved
    cdef vector[int64_t] dkey    # packed offset of each direction
    cdef vector[double] dir_pull
    cdef vector[int] hist
    cdef unordered_map[int64_t, Cell] sites
    cdef object bitgen_obj
    cdef bitgen_t* rng

    def __init__(self, q, int d, steps, double beta, pull, bitgen):
        cdef int k
        qa = np.ascontiguousarray(q, dtype=np.float64)
        self.N = len(qa)
        self.d = d
        self.bits = min(31, 63 // d)
        if d > 8 or self.N >= (1 << (self.bits - 2)):
            raise ValueError("walk too long for packed coordinates")
        self.offset = (<int64_t>1) << (self.bits - 1)
        self.beta = beta
        for k in range(self.N):
            self.q.push_back(qa[k])
        pull = [float(x) for x in pull]
        for k in range(2 * d):
            self.dkey.push_back(((<int64_t>1) << (self.bits * (k // 2))) * (1 if k % 2 == 0 else -1))
            self.dir_pull.push_back(pull[k // 2] if k % 2 == 0 else -pull[k // 2])
        self.bitgen_obj = bitgen
        capsule = bitgen.capsule
        if not PyCapsule_IsValid(capsule, "BitGenerator"):
            raise ValueError("invalid bit generator")
        self.rng = <bitgen_t*>PyCapsule_GetPointer(capsule, "BitGenerator")
        self.proposed = 0
        self.accepted = 0
        self.changed = 0
        self.moved.resize(self.N)
        self.set_steps(steps)

    def set_steps(self, steps):
        cdef int i
        st = np.asarray(steps).reshape(-1)
        if len(st) != self.N - 1:
            raise ValueError("step count does not match charges")
        self.steps_.assign(self.N - 1, 0)
        self.key.assign(self.N, 0)
        self.sites.clear()
        self.hist.assign(self.N + 2, 0)
        self.H = 0.0
        self.lstar = 0
        cdef int64_t origin = 0
        for i in range(self.d):
            origin += self.offset << (self.bits * i)
        self.key[0] = origin
        for i in range(self.N - 1):
            self.steps_[i] = int(st[i])
            self.key[i + 1] = self.key[i] + self.dkey[self.steps_[i]]
        for i in range(self.N):
            self._add(i, self.key[i])

    cdef inline void _add(self, int i, int64_t x) noexcept nogil:
        cdef double qi = self.q[i]
        cdef Cell* c = &self.sites[x]    # default-inserts (0.0, 0)
        cdef int L = c.second
        self.H += 2.0 * qi * c.first + qi * qi
        c.first = c.first + qi
        c.second = L + 1
        if L:
            self.hist[L] -= 1
        self.hist[L + 1] += 1
        if L + 1 > self.lstar:
            self.lstar = L + 1

    cdef inline void _remove(self, int i, int64_t x) noexcept nogil:
        cdef double qi = self.q[i]
        cdef unordered_map[int64_t, Cell].iterator it = self.sites.find(x)
        cdef Cell* c = &(deref_cell(it))
        cdef int L = c.second
        self.H += -2.0 * qi * c.first + qi * qi
        if L == 1:
            self.sites.erase(it)
        else:
            c.first = c.first - qi
            c.second = L - 1
        self.hist[L] -= 1
        if L - 1:
            self.hist[L - 1] += 1
        if L == self.lstar and self.hist[L] == 0:
            self.lstar = L - 1

    cdef void _propose(self, uint64_t r0, uint64_t r1, uint64_t r2) noexcept nogil:
        cdef int n1 = self.N - 1
        cdef int i = <int>(<double>(r0 >> 11) * INV53 * n1)
        cdef int k = <int>(<double>(r1 >> 11) * INV53 * (2 * self.d))
        cdef double u = <double>(r2 >> 11) * INV53
        cdef int old, j, l0
        cdef int64_t shift
        cdef double H0, a
        self.proposed += 1
        old = self.steps_[i]
        if k == old:
            self.accepted += 1
            return
        shift = self.dkey[k] - self.dkey[old]
        H0 = self.H
        l0 = self.lstar
        for j in range(i + 1, self.N):
            self._remove(j, self.key[j])
        for j in range(i + 1, self.N):
            self.moved[j] = self.key[j] + shift
            self._add(j, self.moved[j])
        a = self.beta * (self.H - H0) / self.N + (self.dir_pull[k] - self.dir_pull[old])
        if a >= 0.0 or u < exp(a):
            self.accepted += 1
            self.changed += 1
            self.steps_[i] = k
            for j in range(i + 1, self.N):
                self.key[j] = self.moved[j]
            return
        for j in range(i + 1, self.N):
            self._remove(j, self.moved[j])
        for j in range(i + 1, self.N):
            self._add(j, self.key[j])
        self.H = H0
        self.lstar = l0

    def get_steps(self):
        out = np.empty(self.N - 1, dtype=np.int8)
        cdef int i
        for i in range(self.N - 1):
            out[i] = self.steps_[i]
        return out

    def positions(self):
        from .model import positions_from_steps
        return positions_from_steps(self.d, self.get_steps())

    def energy(self):
        return self.H

    def max_local_time(self):
        return self.lstar

    def set_beta(self, double beta):
        self.beta = beta

    def run(self, long nsweeps, bint record_steps=False):
        """Run ``nsweeps`` sweeps of ``N-1`` proposals (see ``_pykernels``)."""
        cdef int n1 = self.N - 1
        cdef long s
        cdef int t, i
        cdef uint64_t r0, r1, r2
        Hs = np.empty(nsweeps, dtype=np.float64)
        ls = np.empty(nsweeps, dtype=np.int32)
        rec = np.empty((nsweeps, n1) if record_steps else (0, n1), dtype=np.int8)
        cdef double[::1] Hv = Hs
        cdef int[::1] lv = ls
        cdef cnp.int8_t[:, ::1] rv = rec
        with self.bitgen_obj.lock:
            with nogil:
                for s in range(nsweeps):
                    for t in range(n1):
                        r0 = self.rng.next_uint64(self.rng.state)
                        r1 = self.rng.next_uint64(self.rng.state)
                        r2 = self.rng.next_uint64(self.rng.state)
                        self._propose(r0, r1, r2)
                    Hv[s] = self.H
                    lv[s] = self.lstar
                    if record_steps:
                        for i in range(n1):
                            rv[s, i] = self.steps_[i]
        return Hs, ls, rec
