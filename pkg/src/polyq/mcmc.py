"""Metropolis sampling of the quenched (and pulled) polymer measure.

The workhorse move replaces one increment and rigidly translates the rest
of the walk.  An optional rewire move sends a window of non-optimal
monomers onto the four argmax sites, paired with its exact reverse
(re-expanding an optimal window into a uniformly chosen non-optimal bridge)
so the target measure is preserved.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import (GibbsSpec, Walk, direction_vectors, energy, is_integer_charges, occupation,
                    positions_from_steps, diameter_batch)
from .stats import Estimate, autocorr_time, batch_means, estimate
from .structure import argmax_points, event_batch, optimal_trajectory, best_d1_strategy

REWIRE_RATE = 0.05
REWIRE_MEAN_LENGTH = 8
REWIRE_MAX_LENGTH = 40


def _charges_f64(q) -> np.ndarray:
    return np.ascontiguousarray(q, dtype=np.float64)


def initial_walk(spec: GibbsSpec, q, init, rng: np.random.Generator) -> Walk:
    """``'hot'`` (uniform random walk), ``'cold'`` (folded), ``'straight'`` or a Walk."""
    if isinstance(init, Walk):
        return init
    if init == "hot":
        return Walk.random(spec.d, spec.N, rng)
    if init == "cold":
        if spec.d >= 2:
            return optimal_trajectory(q, spec.d)
        return best_d1_strategy(q)[0]
    if init == "straight":
        return Walk.straight(spec.d, spec.N)
    raise ValueError(f"unknown initial state {init!r}")


# ---------------------------------------------------------------------------
# moves as pure functions (reference implementations used by tests)


def suffix_shift(walk: Walk, i: int, new: int) -> Walk:
    """Walk with increment ``i`` replaced by direction ``new``."""
    if not 0 <= i < walk.N - 1:
        raise ValueError("increment index out of range")
    steps = walk.steps.copy()
    steps[i] = new
    return Walk(walk.d, steps)


def suffix_shift_delta(q, walk: Walk, i: int, new: int):
    """Energy change of a suffix shift, touching only the moved monomers."""
    q = np.asarray(q)
    pos = walk.positions
    shift = direction_vectors(walk.d)[new] - direction_vectors(walk.d)[walk.steps[i]]
    fld = occupation(q, walk)
    Q = {tuple(s): c for s, c in zip(fld.sites.tolist(), fld.charge.tolist())}
    dH = 0
    for j in range(i + 1, walk.N):
        x = tuple(pos[j].tolist())
        dH += -2 * q[j] * Q[x] + q[j] * q[j]
        Q[x] -= q[j]
    for j in range(i + 1, walk.N):
        x = tuple((pos[j] + shift).tolist())
        c = Q.get(x, 0)
        dH += 2 * q[j] * c + q[j] * q[j]
        Q[x] = c + q[j]
    return int(dH) if is_integer_charges(q) else float(dH)


def propose_suffix_shift(q, walk: Walk, i: int, new: int):
    """Candidate walk and its incremental energy change."""
    return suffix_shift(walk, i, new), suffix_shift_delta(q, walk, i, new)


def _target_sites(q, points) -> list:
    """Per monomer, the set of sites at which it counts as optimal."""
    out = []
    for i, qi in enumerate(np.asarray(q)):
        p = i % 2
        if qi > 0:
            out.append({points[1, p]})
        elif qi < 0:
            out.append({points[-1, p]})
        else:
            out.append({points[1, p], points[-1, p]})
    return out


def optimal_monomers(q, walk: Walk, points=None) -> np.ndarray:
    points = argmax_points(occupation(q, walk), walk.d) if points is None else points
    tgt = _target_sites(q, points)
    return np.array([tuple(x) in t for x, t in zip(walk.positions.tolist(), tgt)])


def _window_context(q, walk: Walk, window: tuple[int, int], alpha: float):
    """Argmax points and optimality flags when the window's neighbours allow a rewire."""
    a, b = window
    N = walk.N
    if not 1 <= a <= b <= N - 1:
        raise ValueError("window must lie inside 1..N-1")
    if not event_batch(q, walk.positions[None], alpha)["C"][0]:
        return None
    pts = argmax_points(occupation(q, walk), walk.d)
    opt = optimal_monomers(q, walk, pts)
    if not opt[a - 1] or (b + 1 < N and not opt[b + 1]):
        return None
    return pts, opt


def rewire_map(q, walk: Walk, window: tuple[int, int], alpha: float) -> Walk | None:
    """Send every window monomer to the argmax site of its sign and parity.

    Returns None when the walk fails C_alpha or a monomer adjacent to the
    window is not optimal.
    """
    ctx = _window_context(q, walk, window, alpha)
    if ctx is None:
        return None
    pts, _ = ctx
    q = np.asarray(q)
    a, b = window
    pos = walk.positions.copy()
    for i in range(a, b + 1):
        pos[i] = pts[1 if q[i] >= 0 else -1, i % 2]
    return Walk.from_positions(pos)


def rewire_gain_bound(q, window: tuple[int, int], alpha: float) -> float:
    """2 alpha sum_{eps,p} Q_eps^p sum_{i in I, i = p mod 2} q_i^eps."""
    from .model import parity_sign_sums
    q = np.asarray(q, dtype=float)
    pss = parity_sign_sums(q)
    a, b = window
    total = 0.0
    for i in range(a, b + 1):
        eps = 1 if q[i] >= 0 else -1
        total += pss.get(eps, i % 2) * abs(q[i])
    return 2 * alpha * total


def _bridge_counts(start, end, forbidden: list, d: int):
    """Forward counts of window paths avoiding forbidden sites.

    ``forbidden[k]`` is the set of sites monomer ``a+k`` may not occupy.
    Returns (counts per window monomer on a box grid, box origin, total).
    """
    ell = len(forbidden)
    side = 2 * ell + 3
    origin = np.asarray(start) - (ell + 1)
    shape = (side,) * d
    cur = np.zeros(shape)
    cur[(ell + 1,) * d] = 1.0
    layers = []
    for k in range(ell):
        nxt = np.zeros(shape)
        for ax in range(d):
            sl_a = [slice(None)] * d
            sl_b = [slice(None)] * d
            sl_a[ax], sl_b[ax] = slice(1, None), slice(None, -1)
            nxt[tuple(sl_a)] += cur[tuple(sl_b)]
            nxt[tuple(sl_b)] += cur[tuple(sl_a)]
        for x in forbidden[k]:
            idx = tuple(np.asarray(x) - origin)
            if all(0 <= v < side for v in idx):
                nxt[idx] = 0.0
        layers.append(nxt)
        cur = nxt
    last = layers[-1]
    if end is None:
        total = float(last.sum())
    else:
        total = 0.0
        for e in direction_vectors(d):
            idx = tuple(np.asarray(end) + e - origin)
            if all(0 <= v < side for v in idx):
                total += last[idx]
    return layers, origin, total


def _sample_bridge(layers, origin, end, d: int, rng: np.random.Generator) -> np.ndarray:
    side = layers[0].shape[0]
    ell = len(layers)
    out = np.zeros((ell, d), dtype=np.int64)
    dirs = direction_vectors(d)

    def pick(cands, weights):
        w = np.asarray(weights, dtype=float)
        c = np.cumsum(w)
        u = rng.random() * c[-1]
        return cands[int(np.searchsorted(c, u, side="right"))]

    if end is None:
        flat = layers[-1].reshape(-1)
        c = np.cumsum(flat)
        u = rng.random() * c[-1]
        k = int(np.searchsorted(c, u, side="right"))
        out[-1] = np.array(np.unravel_index(k, layers[-1].shape)) + origin
    else:
        cands = [np.asarray(end) + e for e in dirs]
        w = [layers[-1][tuple(c - origin)] if all(0 <= v < side for v in c - origin) else 0.0
             for c in cands]
        out[-1] = pick(cands, w)
    for k in range(ell - 2, -1, -1):
        cands = [out[k + 1] + e for e in dirs]
        w = [layers[k][tuple(c - origin)] if all(0 <= v < side for v in c - origin) else 0.0
             for c in cands]
        out[k] = pick(cands, w)
    return out


def _rewire_kind(q, walk, window, alpha):
    """('collapse', ctx), ('expand', ctx) or (None, None)."""
    ctx = _window_context(q, walk, window, alpha)
    if ctx is None:
        return None, None
    _, opt = ctx
    a, b = window
    w = opt[a:b + 1]
    if not w.any():
        return "collapse", ctx
    if w.all():
        return "expand", ctx
    return None, None


def _expand_setup(q, walk, window, pts):
    a, b = window
    tgt = _target_sites(q, pts)
    pos = walk.positions
    end = tuple(pos[b + 1]) if b + 1 < walk.N else None
    return _bridge_counts(pos[a - 1], end, tgt[a:b + 1], walk.d), end


def _proposal_prob(q, X: Walk, Y: Walk, window, alpha) -> float:
    """Probability that the rewire move from X on ``window`` proposes Y."""
    kind, ctx = _rewire_kind(q, X, window, alpha)
    if kind is None:
        return 0.0
    pts, _ = ctx
    a, b = window
    if kind == "collapse":
        return 1.0 if rewire_map(q, X, window, alpha) == Y else 0.0
    if not (np.array_equal(X.positions[:a], Y.positions[:a])
            and np.array_equal(X.positions[b + 1:], Y.positions[b + 1:])):
        return 0.0
    tgt = _target_sites(q, pts)
    if any(tuple(x) in t for x, t in zip(Y.positions[a:b + 1].tolist(), tgt[a:b + 1])):
        return 0.0
    (layers, origin, total), _ = _expand_setup(q, X, window, pts)
    return 1.0 / total if total > 0 else 0.0


def propose_rewire(q, walk: Walk, window: tuple[int, int], alpha: float, rng: np.random.Generator):
    """One rewire proposal: ``(candidate, log proposal ratio)`` or None.

    The log ratio is ``ln q(candidate -> walk) - ln q(walk -> candidate)``;
    it is ``-inf`` when the reverse move cannot return.
    """
    kind, ctx = _rewire_kind(q, walk, window, alpha)
    if kind is None:
        return None
    pts, _ = ctx
    a, b = window
    if kind == "collapse":
        cand = rewire_map(q, walk, window, alpha)
        fwd = 1.0
    else:
        (layers, origin, total), end = _expand_setup(q, walk, window, pts)
        if total <= 0:
            return None
        pos = walk.positions.copy()
        pos[a:b + 1] = _sample_bridge(layers, origin, end, walk.d, rng)
        cand = Walk.from_positions(pos)
        fwd = 1.0 / total
    rev = _proposal_prob(q, cand, walk, window, alpha)
    return cand, (math.log(rev) - math.log(fwd)) if rev > 0 else -math.inf


# ---------------------------------------------------------------------------
# chains


@dataclass
class MoveStats:
    proposed: int = 0
    accepted: int = 0
    inapplicable: int = 0

    @property
    def rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


class Chain:
    """A Metropolis chain at fixed charges.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``.  The
    suffix-shift stream and the rewire stream are spawned from it
    separately, so enabling rewires never perturbs the suffix-shift draws
    between rewire attempts.
    """

    def __init__(self, spec: GibbsSpec, q, seed, init="hot", rewire: bool = False,
                 alpha: float = 0.5, impl=None):
        self.spec = spec
        self.q = np.asarray(q)
        if self.q.shape != (spec.N,):
            raise ValueError(f"need {spec.N} charges")
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        core_ss, move_ss, init_ss = ss.spawn(3)
        self.bitgen = np.random.PCG64(core_ss)
        self.move_rng = np.random.Generator(np.random.PCG64(move_ss))
        walk0 = initial_walk(spec, self.q, init, np.random.default_rng(init_ss))
        mod = impl or kernels
        self.core = mod.ChainCore(_charges_f64(self.q), spec.d, walk0.steps, spec.beta,
                                  list(spec.pull), self.bitgen)
        self.rewire = rewire and spec.d >= 2 and spec.N >= 3
        self.alpha = alpha
        self.rewire_stats = MoveStats()
        self.sweeps_done = 0

    @property
    def walk(self) -> Walk:
        return Walk(self.spec.d, self.core.get_steps())

    @property
    def H(self):
        h = self.core.energy()
        return int(round(h)) if is_integer_charges(self.q) else h

    @property
    def shift_stats(self) -> MoveStats:
        return MoveStats(self.core.proposed, self.core.accepted)

    def set_beta(self, beta: float):
        self.spec = self.spec.with_beta(beta)
        self.core.set_beta(beta)

    def check_energy(self) -> bool:
        """Cached energy agrees with a full recomputation."""
        h = energy(occupation(self.q, self.walk))
        if is_integer_charges(self.q):
            return self.core.energy() == h
        return abs(self.core.energy() - h) <= 1e-6 * max(1.0, abs(h))

    def _rewire_attempt(self):
        N = self.spec.N
        ell = min(int(self.move_rng.geometric(1.0 / REWIRE_MEAN_LENGTH)), N - 1, REWIRE_MAX_LENGTH)
        a = int(self.move_rng.integers(1, N - ell + 1))
        window = (a, a + ell - 1)
        walk = self.walk
        prop = propose_rewire(self.q, walk, window, self.alpha, self.move_rng)
        if prop is None:
            self.rewire_stats.inapplicable += 1
            return
        cand, log_ratio = prop
        self.rewire_stats.proposed += 1
        if log_ratio == -math.inf:
            return
        h0 = energy(occupation(self.q, walk))
        h1 = energy(occupation(self.q, cand))
        pull = np.asarray(self.spec.pull)
        drift = float(pull @ (cand.positions[-1] - walk.positions[-1]))
        a_log = self.spec.beta * (h1 - h0) / N + drift + log_ratio
        if a_log >= 0 or self.move_rng.random() < math.exp(a_log):
            self.rewire_stats.accepted += 1
            self.core.set_steps(cand.steps)

    def run(self, nsweeps: int, record_steps: bool = False):
        """Advance ``nsweeps`` sweeps; returns (H, L*, steps) per sweep."""
        if not self.rewire:
            out = self.core.run(nsweeps, record_steps)
            self.sweeps_done += nsweeps
            return out
        attempts = np.flatnonzero(self.move_rng.random(nsweeps) < REWIRE_RATE)
        Hs, ls, rec = [], [], []
        done = 0
        for t in list(attempts) + [nsweeps]:
            if t > done:
                h, l, r = self.core.run(t - done, record_steps)
                Hs.append(h), ls.append(l), rec.append(r)
                done = t
            if t < nsweeps:
                self._rewire_attempt()
                h, l, r = self.core.run(1, record_steps)
                Hs.append(h), ls.append(l), rec.append(r)
                done = t + 1
        self.sweeps_done += nsweeps
        n1 = self.spec.N - 1
        return (np.concatenate(Hs) if Hs else np.empty(0),
                np.concatenate(ls) if ls else np.empty(0, np.int32),
                np.concatenate(rec) if rec else np.empty((0, n1), np.int8))


# ---------------------------------------------------------------------------
# observables on recorded samples


def _unique_rows(steps: np.ndarray):
    if steps.shape[1] == 0:
        return steps[:1], np.zeros(len(steps), dtype=np.int64)
    v = np.ascontiguousarray(steps).view(np.dtype((np.void, steps.shape[1])))
    _, first, inv = np.unique(v.reshape(-1), return_index=True, return_inverse=True)
    return steps[first], inv.reshape(-1)


def sample_observable(name: str, spec: GibbsSpec, q, H, lstar, steps) -> np.ndarray:
    """Per-sample values of a named observable."""
    N, d = spec.N, spec.d
    if name == "H/N2":
        return np.asarray(H, dtype=float) / N ** 2
    if name == "Lstar/N":
        return np.asarray(lstar, dtype=float) / N
    if steps is None or len(steps) != len(H):
        raise ValueError(f"observable {name!r} needs recorded walks")
    uniq, inv = _unique_rows(steps)
    pos = np.zeros((len(uniq), N, d), dtype=np.int64)
    if N > 1:
        pos[:, 1:] = np.cumsum(direction_vectors(d)[uniq], axis=1)
    base, _, arg = name.partition("@")
    if name == "diameter":
        vals = diameter_batch(pos).astype(float)
    elif name == "S1=e1":
        vals = (uniq[:, 0] == 0).astype(float) if N > 1 else np.zeros(len(uniq))
    elif name.startswith("endpoint"):
        axis = int(arg) if arg else 0
        vals = pos[:, -1, axis].astype(float)
    elif base in ("S_alpha", "C_alpha", "R_alpha"):
        alpha = float(arg) if arg else 0.5
        vals = np.empty(len(uniq))
        key = {"S_alpha": "S", "C_alpha": "C", "R_alpha": "R"}[base]
        chunk = max(1, 200000 // (N * max(1, d)))
        for s in range(0, len(uniq), chunk):
            vals[s:s + chunk] = event_batch(q, pos[s:s + chunk], alpha)[key]
    elif base == "diam>=":
        vals = (diameter_batch(pos) >= float(arg)).astype(float)
    else:
        raise ValueError(f"unknown observable {name!r}")
    return vals[inv]


def _parse_lstar_threshold(name, lstar, N):
    _, _, arg = name.partition("@")
    return (np.asarray(lstar) >= float(arg) * N).astype(float)


@dataclass
class RunResult:
    estimates: dict
    flags: tuple
    tau_H: float
    burn_in: int
    sweeps: int
    acceptance: float
    rewire: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)
    final_walk: Walk | None = None

    def to_dict(self) -> dict:
        return {"estimates": {k: v.to_dict() for k, v in self.estimates.items()},
                "flags": list(self.flags), "tau_H": self.tau_H, "burn_in": self.burn_in,
                "sweeps": self.sweeps, "acceptance": self.acceptance, "rewire": self.rewire}


POSITIONAL = ("diameter", "S1=e1", "endpoint", "S_alpha", "C_alpha", "R_alpha", "diam>=")


def _needs_steps(observables) -> bool:
    return any(str(o).startswith(POSITIONAL) for o in observables)


def metropolis_run(spec: GibbsSpec, q, sweeps: int, burn_in: int | None = None,
                   observables=("H/N2", "Lstar/N"), seed=0, init="hot", rewire: bool = False,
                   alpha: float = 0.5, chain: Chain | None = None, keep_samples: bool = False,
                   thin: int = 1, impl=None) -> RunResult:
    """Sample the Gibbs measure and estimate the requested observables.

    One sweep is ``N-1`` suffix-shift proposals.  Without an explicit
    ``burn_in`` a pilot run estimates the autocorrelation time of H and the
    chain is burned in for ten of them.  The ``unconverged`` flag is raised
    when the measured autocorrelation time exceeds ``sweeps/50``.
    """
    if sweeps < 1:
        raise ValueError("need at least one sweep")
    if chain is None:
        chain = Chain(spec, q, seed, init=init, rewire=rewire, alpha=alpha, impl=impl)
    elif chain.spec.beta != spec.beta:
        chain.set_beta(spec.beta)
    if burn_in is None:
        pilot = max(50, sweeps // 20)
        h, _, _ = chain.run(pilot)
        extra = max(0, math.ceil(10 * autocorr_time(h)) - pilot)
        if extra:
            chain.run(extra)
        burn = pilot + extra
    else:
        chain.run(burn_in) if burn_in else None
        burn = burn_in
    p0, a0, c0 = chain.core.proposed, chain.core.accepted, chain.core.changed
    rw_acc0 = chain.rewire_stats.accepted
    need = _needs_steps(observables)
    H, ls, steps = chain.run(sweeps, record_steps=need)
    if thin > 1:
        H, ls, steps = H[::thin], ls[::thin], steps[::thin] if need else steps
    flags = []
    tau = autocorr_time(H)
    if tau > sweeps / 50:
        flags.append("unconverged")
    if chain.core.changed == c0 and chain.rewire_stats.accepted == rw_acc0:
        flags.append("frozen")
    est, samples = {}, {}
    for name in observables:
        if str(name).startswith("Lstar>="):
            x = _parse_lstar_threshold(name, ls, spec.N)
        else:
            x = sample_observable(name, spec, chain.q, H, ls, steps if need else None)
        est[name] = estimate(x, flags=flags)
        if keep_samples:
            samples[name] = x
    if keep_samples and need:
        samples["steps"] = steps
    prop = chain.core.proposed - p0
    acc = (chain.core.accepted - a0) / prop if prop else float("nan")
    rw = vars(chain.rewire_stats).copy() if chain.rewire else {}
    return RunResult(est, tuple(flags), tau, burn, sweeps, acc, rw, samples, chain.walk)


def event_frequency(spec: GibbsSpec, q, event: str, sweeps: int, seed=0, **kw) -> Estimate:
    """Stationary frequency of ``S_alpha@a``, ``C_alpha@a``, ``Lstar>=@x`` or ``diam>=@L``."""
    return metropolis_run(spec, q, sweeps, observables=(event,), seed=seed, **kw).estimates[event]


def r_alpha(q, steps: np.ndarray, spec: GibbsSpec, alpha: float) -> Estimate:
    """Estimate of E[R_alpha] from recorded walks (rows of direction codes)."""
    x = sample_observable(f"R_alpha@{alpha}", spec, q, np.zeros(len(steps)), None, steps)
    return estimate(x)


# ---------------------------------------------------------------------------
# free energy


@dataclass
class FreeEnergyCurve:
    betas: np.ndarray
    F: np.ndarray
    F_stderr: np.ndarray
    dF: list                  # Estimates of E[H/N^2]
    extra: dict = field(default_factory=dict)   # observable -> list of Estimates
    flags: tuple = ()


def free_energy_ti(spec: GibbsSpec, q, betas, sweeps: int, seed=0, burn_in: int | None = None,
                   observables=(), init="hot", rewire: bool = False, alpha: float = 0.5,
                   impl=None) -> FreeEnergyCurve:
    """F_N(beta) = int_0^beta E[H/N^2] by the trapezoid rule.

    One chain walks the grid in order, warm-starting each point from the
    previous state.  Standard errors of the derivative estimates are
    combined as independent.
    """
    betas = np.asarray(betas, dtype=float)
    if len(betas) == 0 or betas[0] != 0:
        raise ValueError("the beta grid must start at 0")
    if np.any(np.diff(betas) <= 0):
        raise ValueError("the beta grid must increase")
    chain = Chain(spec.with_beta(0.0), q, seed, init=init, rewire=rewire, alpha=alpha, impl=impl)
    obs = ("H/N2",) + tuple(o for o in observables if o != "H/N2")
    dF, extra, flags = [], {o: [] for o in obs[1:]}, set()
    for b in betas:
        res = metropolis_run(spec.with_beta(float(b)), q, sweeps, burn_in=burn_in,
                             observables=obs, chain=chain)
        dF.append(res.estimates["H/N2"])
        for o in obs[1:]:
            extra[o].append(res.estimates[o])
        flags.update(res.flags)
    m = np.array([e.mean for e in dF])
    s = np.array([e.stderr for e in dF])
    F = np.zeros(len(betas))
    var = np.zeros(len(betas))
    w = np.zeros(len(betas))
    for k in range(1, len(betas)):
        h = betas[k] - betas[k - 1]
        F[k] = F[k - 1] + 0.5 * h * (m[k - 1] + m[k])
        w[k - 1] += 0.5 * h
        w[k] = 0.5 * h
        var[k] = float(np.sum((w[: k + 1] * s[: k + 1]) ** 2))
    return FreeEnergyCurve(betas, F, np.sqrt(var), dF, extra, tuple(sorted(flags)))


# ---------------------------------------------------------------------------
# independent chains


def chain_seeds(seed, n: int) -> list:
    """Per-chain seeds; chain i's seed does not depend on n."""
    return np.random.SeedSequence(seed).spawn(n)


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get("POLYQ_THREADS", "1")))
    except ValueError:
        return 1


def run_chains(spec: GibbsSpec, q, n_chains: int, sweeps: int, seed=0, **kw) -> list:
    """Independent chains in parallel, one seed stream each."""
    seeds = chain_seeds(seed, n_chains)
    work = lambda s: metropolis_run(spec, q, sweeps, seed=s, **kw)
    threads = min(max_threads(), n_chains)
    if threads == 1:
        return [work(s) for s in seeds]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(work, seeds))


def merge_estimates(parts: list) -> Estimate:
    """Inverse-variance-free merge: mean of chain means with the spread as error."""
    means = np.array([e.mean for e in parts])
    n = sum(e.n_samples for e in parts)
    if len(parts) == 1:
        return parts[0]
    se_within = math.sqrt(sum(e.stderr ** 2 for e in parts)) / len(parts)
    se_between = float(means.std(ddof=1) / math.sqrt(len(parts)))
    flags = tuple(sorted({f for e in parts for f in e.flags}))
    return Estimate(float(means.mean()), max(se_within, se_between), n,
                    float(np.mean([e.tau for e in parts])), "mcmc-merged", flags)
