"""Folded-phase structure: argmax sites, distance to optimality, optimal
trajectories, unit-square events and the d = 1 strategies."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .model import (OccupationField, Walk, is_integer_charges, occupation, parity_sign_sums,
                    energy, qbar)

SIGNS = (1, -1)
PARITIES = (0, 1)  # even, odd
_REL = 1e-12


class PreconditionError(ValueError):
    """An operation was called outside the situation it is defined for."""


# ---------------------------------------------------------------------------
# argmax points


@dataclass(frozen=True)
class ArgmaxPoints:
    """Sites x_eps^p maximizing eps * Q^x over sites of parity p."""

    sites: dict          # (sign, parity) -> tuple site
    values: dict         # (sign, parity) -> eps * Q at the site
    degenerate: dict     # (sign, parity) -> bool, True when the maximum is tied

    def __getitem__(self, key):
        return self.sites[key]

    @property
    def any_degenerate(self) -> bool:
        return any(self.degenerate.values())


def _site_parity(sites: np.ndarray) -> np.ndarray:
    return np.abs(sites).sum(axis=1) % 2


def _lexmin(rows: np.ndarray) -> int:
    return int(np.lexsort(rows.T[::-1])[0])


def argmax_points(field: OccupationField, d: int | None = None) -> ArgmaxPoints:
    """The four argmax sites with lexicographic tie-breaking.

    Unvisited sites carry Q = 0; candidates among them are the sites within
    L1 distance 2 of the visited set, which always contains sites of both
    parities.
    """
    visited = field.sites
    d = visited.shape[1] if d is None else d
    eye = np.eye(d, dtype=np.int64)
    moves = [np.zeros(d, dtype=np.int64)]
    moves += [s * eye[k] for k in range(d) for s in (1, -1)]
    moves += [s * eye[k] + t * eye[l] for k in range(d) for l in range(d)
              for s in (1, -1) for t in (1, -1) if k < l]
    moves += [2 * s * eye[k] for k in range(d) for s in (1, -1)]
    near = np.unique((visited[:, None, :] + np.asarray(moves)[None]).reshape(-1, d), axis=0)
    vis_keys = {tuple(r) for r in visited.tolist()}
    unvisited = np.array([r for r in near.tolist() if tuple(r) not in vis_keys], dtype=np.int64)
    par_v = _site_parity(visited)
    par_u = _site_parity(unvisited)
    Q = np.asarray(field.charge, dtype=float)
    sites, values, degen = {}, {}, {}
    for p in PARITIES:
        for eps in SIGNS:
            cand = np.concatenate([visited[par_v == p], unvisited[par_u == p]])
            val = np.concatenate([eps * Q[par_v == p], np.zeros(int((par_u == p).sum()))])
            top = val.max()
            hit = np.flatnonzero(val == top)
            k = hit[_lexmin(cand[hit])]
            sites[eps, p] = tuple(int(v) for v in cand[k])
            values[eps, p] = float(top)
            degen[eps, p] = len(hit) > 1
    return ArgmaxPoints(sites, values, degen)


def distance_to_optimality(q, field: OccupationField, points: ArgmaxPoints | None = None):
    """D_N = sum_{eps,p} Q_eps^p (Q_eps^p - eps Q^{x_eps^p})."""
    points = argmax_points(field) if points is None else points
    pss = parity_sign_sums(q)
    total = 0
    for (eps, p), v in points.values.items():
        Qe = pss.get(eps, p)
        total += Qe * (Qe - v)
    if is_integer_charges(q):
        return int(round(total))
    return float(total)


# ---------------------------------------------------------------------------
# optimal trajectories and maximal energies


def max_energy_formula(q):
    """sum over sign and parity of (Q_eps^p)^2."""
    return parity_sign_sums(q).max_energy()


def optimal_sites(d: int, q0_negative: bool = False) -> dict:
    """The four sites sigma_eps^p used by the optimal trajectory."""
    if d < 2:
        raise PreconditionError("optimal trajectory needs d >= 2")
    z = [0] * d

    def site(a, b):
        s = list(z)
        s[0], s[1] = a, b
        return tuple(s)

    out = {(1, 0): site(0, 0), (-1, 0): site(1, 1), (1, 1): site(0, 1), (-1, 1): site(1, 0)}
    if q0_negative:
        out[1, 0], out[-1, 0] = out[-1, 0], out[1, 0]
    return out


def optimal_trajectory(q, d: int) -> Walk:
    """Walk putting every monomer on the site of its sign and parity.

    It attains H = sum (Q_eps^p)^2.  Zero charges go to the ``+`` site.
    """
    q = np.asarray(q)
    sig = optimal_sites(d, q0_negative=bool(q[0] < 0))
    pos = np.array([sig[1 if qi >= 0 else -1, i % 2] for i, qi in enumerate(q)], dtype=np.int64)
    return Walk.from_positions(pos)


def d1_strategy(q, sign: int = 1) -> Walk:
    """One-dimensional folding strategy.

    Odd monomers sit at +1 or -1 by the sign of their charge.  An even
    monomer whose two neighbours share a site goes out to twice that site
    when its charge sign is ``sign`` and to the origin otherwise; even
    monomers between +1 and -1 stay at the origin.  The last monomer, with a
    single neighbour, follows the same rule.
    """
    q = np.asarray(q)
    N = len(q)
    s = np.zeros(N, dtype=np.int64)
    s[1::2] = np.where(q[1::2] >= 0, 1, -1)
    for i in range(2, N, 2):
        left = s[i - 1]
        right = s[i + 1] if i + 1 < N else left
        if left == right and (1 if q[i] >= 0 else -1) == sign:
            s[i] = 2 * left
    return Walk.from_positions(s[:, None])


def best_d1_strategy(q) -> tuple[Walk, int]:
    """The better of the two sign choices and its energy."""
    best = None
    for sign in SIGNS:
        w = d1_strategy(q, sign)
        h = energy(occupation(q, w))
        if best is None or h > best[1]:
            best = (w, h)
    return best


# ---------------------------------------------------------------------------
# Gamma / Lambda


def gamma_lambda(q) -> tuple[float, float]:
    """Empirical Gamma = min (Q_eps^p)^2 and Lambda = min over sign pairs of the pair sum."""
    pss = parity_sign_sums(q)
    gam = min(pss.get(e, p) ** 2 for e in SIGNS for p in PARITIES)
    lam = min(_pair_sum(q, pss, e, f) for e in SIGNS for f in SIGNS)
    return gam, lam


def _pair_sum(q, pss, eps_odd: int, eps_even: int):
    q = np.asarray(q)
    odd = np.arange(1, len(q), 2)
    a = pss.get(eps_odd, 1) * np.maximum(eps_odd * q[odd], 0)
    b = pss.get(eps_even, 0) * np.maximum(eps_even * q[odd - 1], 0)
    val = np.minimum(a, b).sum()
    return int(val) if is_integer_charges(q) else float(val)


def lambda_gap_bound(q, points: ArgmaxPoints):
    """Lower bound on D_N from a cross-parity argmax pair that is not adjacent.

    Returns ``(bound, (eps_odd, eps_even))`` for the first non-adjacent
    pair in the order (+,+), (+,-), (-,+), (-,-); raises
    :class:`PreconditionError` when all four pairs are adjacent.
    """
    pss = parity_sign_sums(q)
    for e in SIGNS:
        for f in SIGNS:
            xo, xe = np.array(points[e, 1]), np.array(points[f, 0])
            if np.abs(xo - xe).sum() != 1:
                return _pair_sum(q, pss, e, f), (e, f)
    raise PreconditionError("all cross-parity argmax pairs are adjacent")


def folded_charge_event(q, law_gamma: float, law_lambda: float, delta: float) -> bool:
    """(1+delta) Gamma/N^2 >= gamma/4 and (1+delta) Lambda/N^2 >= lambda/4."""
    N = len(q)
    gam, lam = gamma_lambda(q)
    return (1 + delta) * gam / N ** 2 >= law_gamma / 4 and (1 + delta) * lam / N ** 2 >= law_lambda / 4


# ---------------------------------------------------------------------------
# unit squares and events


@dataclass(frozen=True)
class UnitSquare:
    corner: tuple
    axes: tuple

    @property
    def sites(self) -> tuple:
        i, j = self.axes
        v = np.array(self.corner)
        ei = np.eye(len(v), dtype=np.int64)[i]
        ej = np.eye(len(v), dtype=np.int64)[j]
        return tuple(tuple(int(c) for c in s) for s in (v, v + ei, v + ei + ej, v + ej))

    def contains(self, x) -> bool:
        return tuple(int(c) for c in x) in self.sites


@dataclass(frozen=True)
class EventRecord:
    S: bool
    C: bool
    square: UnitSquare | None
    R: int
    degenerate: bool


def _encode(pos: np.ndarray, base: int, off: int) -> np.ndarray:
    d = pos.shape[-1]
    key = np.zeros(pos.shape[:-1], dtype=np.int64)
    for k in range(d - 1, -1, -1):
        key = key * base + (pos[..., k] + off)
    return key


def event_batch(q, positions: np.ndarray, alpha: float, want_square: bool = False) -> dict:
    """S_alpha, C_alpha and R_alpha for a batch of paths shaped ``(P, N, d)``.

    Returns arrays ``S``, ``C`` (bool) and ``R`` (int); with
    ``want_square`` also ``corner`` (P, d) and ``axes`` (P, 2), -1 rows
    where S fails.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    positions = np.asarray(positions, dtype=np.int64)
    if positions.ndim == 2:
        positions = positions[None]
    P, N, d = positions.shape
    if d < 2:
        raise PreconditionError("unit squares need d >= 2")
    q = np.asarray(q, dtype=float)
    off = N + 1
    base = 2 * N + 4
    K = base ** d
    if P * K >= 2 ** 62:
        raise ValueError("batch too large for packed site keys")
    pid = np.repeat(np.arange(P, dtype=np.int64), N)
    keys = pid * K + _encode(positions, base, off).reshape(-1)
    uk, inv = np.unique(keys, return_inverse=True)
    inv = inv.reshape(-1)
    absq = np.tile(np.abs(q), P)
    mass = np.bincount(inv, weights=absq, minlength=len(uk))
    charge = np.bincount(inv, weights=np.tile(q, P), minlength=len(uk))
    upath = uk // K
    total = np.abs(q).sum()

    # candidate squares: every square having a visited site as a corner
    unit = np.array([base ** k for k in range(d)], dtype=np.int64)
    pairs = list(combinations(range(d), 2))
    cand = []
    for pi, (i, j) in enumerate(pairs):
        for delta in (0, unit[i], unit[j], unit[i] + unit[j]):
            cand.append((uk - delta) * len(pairs) + pi)
    cand = np.unique(np.concatenate(cand))
    corner = cand // len(pairs)
    pair_idx = cand % len(pairs)
    pi_arr = np.array([unit[i] for i, _ in pairs])[pair_idx]
    pj_arr = np.array([unit[j] for _, j in pairs])[pair_idx]
    cmass = np.zeros(len(cand))
    for delta in (0, pi_arr, pj_arr, pi_arr + pj_arr):
        kk = corner + delta
        at = np.searchsorted(uk, kk)
        at = np.minimum(at, len(uk) - 1)
        cmass += np.where(uk[at] == kk, mass[at], 0.0)
    ok = 2 * (total - cmass) <= (1 - alpha) * total * (1 + _REL) + 1e-300
    cpath = corner // K
    n_ok = np.bincount(cpath[ok], minlength=P)
    S = n_ok == 1
    first_ok = np.full(P, -1, dtype=np.int64)
    idx_ok = np.flatnonzero(ok)
    first_ok[cpath[idx_ok][::-1]] = idx_ok[::-1]

    # R: first monomer on the square
    R = np.full(P, N, dtype=np.int64)
    sq = first_ok[S]
    if sq.size:
        ck = corner[sq]
        c4 = np.stack([ck, ck + pi_arr[sq], ck + pj_arr[sq], ck + pi_arr[sq] + pj_arr[sq]], axis=1)
        pk = keys.reshape(P, N)[S]
        on = (pk[:, :, None] == c4[:, None, :]).any(axis=2)
        R[S] = np.where(on.any(axis=1), on.argmax(axis=1), N)

    # C: unique positive maximizers on a unit square carrying enough charge
    pss = parity_sign_sums(q)
    upar = (np.abs(_decode(uk % K, base, off, d)).sum(axis=1)) % 2
    starts = np.flatnonzero(np.r_[True, upath[1:] != upath[:-1]])
    C = np.ones(P, dtype=bool)
    xsite = {}
    for p in PARITIES:
        for eps in SIGNS:
            val = np.where(upar == p, eps * charge, -np.inf)
            top = np.maximum.reduceat(val, starts)
            is_top = val == top[upath]
            n_top = np.bincount(upath[is_top], minlength=P)
            need = 0.5 * (1 + alpha) * pss.get(eps, p)
            C &= (n_top == 1) & (top > 0) & (top >= need * (1 - _REL))
            where = np.zeros(P, dtype=np.int64)
            hit = np.flatnonzero(is_top)
            where[upath[hit][::-1]] = uk[hit][::-1]
            xsite[eps, p] = _decode(where % K, base, off, d)
    for e in SIGNS:
        for f in SIGNS:
            C &= np.abs(xsite[e, 1] - xsite[f, 0]).sum(axis=1) == 1
    out = {"S": S, "C": C, "R": R}
    if want_square:
        crn = np.full((P, d), -1, dtype=np.int64)
        axs = np.full((P, 2), -1, dtype=np.int64)
        if sq.size:
            crn[S] = _decode(corner[sq] % K, base, off, d)
            axs[S] = np.array(pairs)[pair_idx[sq]]
        out["corner"], out["axes"] = crn, axs
    return out


def _decode(key: np.ndarray, base: int, off: int, d: int) -> np.ndarray:
    out = np.empty(key.shape + (d,), dtype=np.int64)
    k = key.copy()
    for a in range(d):
        out[..., a] = k % base - off
        k //= base
    return out


def detect_events(q, walk: Walk, alpha: float, field: OccupationField | None = None) -> EventRecord:
    """S_alpha, C_alpha, the folded square and R_alpha for one path."""
    res = event_batch(q, walk.positions[None], alpha, want_square=True)
    sq = None
    if res["S"][0]:
        sq = UnitSquare(tuple(int(v) for v in res["corner"][0]), tuple(int(v) for v in res["axes"][0]))
    field = occupation(q, walk) if field is None else field
    degenerate = argmax_points(field, walk.d).any_degenerate
    return EventRecord(bool(res["S"][0]), bool(res["C"][0]), sq, int(res["R"][0]), degenerate)


def diam_bound(q, beta: float, alpha: float, L: int, d: int) -> float:
    """N^2 exp(L [ln 2d - 2 beta alpha sqrt(Gamma) qbar_L / N]), capped at +inf."""
    N = len(q)
    if L == 0:
        return float(N ** 2)
    gam, _ = gamma_lambda(q)
    expo = L * (math.log(2 * d) - 2 * beta * alpha * math.sqrt(gam) * qbar(q, L) / N)
    return N ** 2 * math.exp(expo) if expo < 700 else math.inf


def diam_bound_check(q, walks_or_freq, beta: float, alpha: float, L: int, d: int) -> dict:
    """Compare an observed P(Diam >= L+1, C_alpha) with its upper bound.

    ``walks_or_freq`` is either the observed frequency or a list of sampled
    walks.  Reporting only: ``informative`` is False when the bound is >= 1.
    """
    if isinstance(walks_or_freq, (int, float)):
        freq = float(walks_or_freq)
    else:
        walks = list(walks_or_freq)
        from .model import diameter
        pos = np.stack([w.positions for w in walks])
        Cs = event_batch(q, pos, alpha)["C"]
        freq = float(np.mean([(diameter(w) >= L + 1) and c for w, c in zip(walks, Cs)]))
    bound = diam_bound(q, beta, alpha, L, d)
    return {"L": L, "observed": freq, "bound": bound, "holds": freq <= bound,
            "informative": bound < 1}
