"""Large deviations of the local time at the origin.

For the simple walk, P{L_N^0 > eps N} decays like exp(-N I(eps)).  With
phi(u) = E exp(-u tau) for the first return time tau, g = -phi'/phi and
R(u) = -ln phi(u) - u g(u), the rate is I(eps) = eps R(g^{-1}(1/eps)):
the event needs about eps N returns, each costing R at the tilt that makes
the mean excursion 1/eps long.

phi comes from the lattice Green function
    green(u) = (2 pi)^-d int dxi / (1 - G(xi) e^-u),  G = (1/d) sum cos xi_j,
through the renewal identity green = 1 / (1 - phi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special, stats

from .stats import Estimate, clopper_pearson

U_MIN = 1e-4
DEFAULT_ORDER = {1: 4096, 2: 512, 3: 96}


def quadrature_order(d: int) -> int:
    return DEFAULT_ORDER.get(d, 32)


@lru_cache(maxsize=16)
def _G_grid(d: int, M: int) -> np.ndarray:
    """G(xi) on the tensor midpoint grid, flattened."""
    xi = -math.pi + (np.arange(M) + 0.5) * (2 * math.pi / M)
    c = np.cos(xi)
    G = np.zeros((M,) * d)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = M
        G = G + c.reshape(shape)
    out = (G / d).reshape(-1)
    out.setflags(write=False)
    return out


def _green_minus_one(u: float, d: int, M: int) -> float:
    # green - 1 = mean of G e^-u / (1 - G e^-u); since mean(G) = 0 this equals
    # mean of G^2 e^-2u / (1 - G e^-u), which avoids cancellation at large u
    G = _G_grid(d, M)
    z = G * math.exp(-u)
    return float(np.mean(z * z / (1.0 - z)))


def green_function(u: float, d: int, M: int | None = None, with_error: bool = False):
    """Lattice Green function at killing rate u (midpoint rule, M points per axis).

    With ``with_error`` returns ``(value, |value(M) - value(2M)|)``.
    """
    if not u > 0:
        raise ValueError("green function needs u > 0")
    M = M or quadrature_order(d)
    val = 1.0 + _green_minus_one(u, d, M)
    if not with_error:
        return val
    return val, abs(val - (1.0 + _green_minus_one(u, d, 2 * M)))


def phi(u: float, d: int, M: int | None = None) -> float:
    """E exp(-u tau_1) = 1 - 1/green(u), evaluated as (green-1)/green."""
    gm1 = _green_minus_one(u, d, M or quadrature_order(d)) if u > 0 else None
    if gm1 is None:
        raise ValueError("phi needs u > 0")
    return gm1 / (1.0 + gm1)


def phi_prime_analytic(u: float, d: int, M: int | None = None) -> float:
    """phi'(u) = green'(u) / green(u)^2 with green' differentiated under the integral."""
    M = M or quadrature_order(d)
    G = _G_grid(d, M)
    z = G * math.exp(-u)
    green = 1.0 + float(np.mean(z * z / (1.0 - z)))
    dgreen = -float(np.mean(z / (1.0 - z) ** 2))
    return dgreen / green ** 2


def phi_prime(u: float, d: int, M: int | None = None) -> float:
    """Five-point central difference with step 1e-3 min(u, 1).

    The step shrinks with u because phi has a sqrt(u) singularity at 0
    in d <= 2, so higher derivatives grow like negative powers of u.
    """
    h = 1e-3 * min(u, 1.0)
    f = lambda x: phi(x, d, M)
    return (8 * (f(u + h) - f(u - h)) - (f(u + 2 * h) - f(u - 2 * h))) / (12 * h)


def g_fn(u: float, d: int, M: int | None = None) -> float:
    """Mean excursion length under the tilt u: -phi'/phi."""
    return -phi_prime(u, d, M) / phi(u, d, M)


def R_fn(u: float, d: int, M: int | None = None) -> float:
    """Cost per return at tilt u: -ln phi(u) - u g(u)."""
    return -math.log(phi(u, d, M)) - u * g_fn(u, d, M)


def phi_at_zero(d: int) -> float:
    """Return probability P{tau_1 < inf}: 1 for d <= 2, 1 - 1/green(0) otherwise."""
    if d <= 2:
        return 1.0
    # sum_n P{S_n = 0} t^n / n! = I_0(t/d)^d, so green(0) = int_0^inf (e^{-t/d} I_0(t/d))^d dt
    val, _ = integrate.quad(lambda t: special.i0e(t / d) ** d, 0, np.inf, limit=400,
                            epsabs=1e-13, epsrel=1e-12)
    return 1.0 - 1.0 / val


@dataclass(frozen=True)
class RateValue:
    eps: float
    value: float
    u: float
    per_return: float        # R(u), the rate per return
    flags: tuple = ()


def _invert_g(target: float, d: int, M: int | None):
    """u with g(u) = target by bracketing; the bracket grows geometrically."""
    f = lambda u: g_fn(u, d, M) - target
    lo, hi = 0.5, 1.0
    while f(hi) > 0:
        lo, hi = hi, 2 * hi
        if hi > 200:
            raise ArithmeticError("g inversion bracket failed at large u")
    while f(lo) < 0:
        hi, lo = lo, lo / 2
        if lo < U_MIN:
            return None
    return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-12)


def rate_I(eps: float, d: int, M: int | None = None) -> RateValue:
    """Rate of P{L_N^0 > eps N}, eps in (0, 1/2)."""
    if not 0 < eps < 0.5:
        raise ValueError("rate function is finite only for 0 < eps < 1/2")
    target = 1.0 / eps
    flags = []
    if d >= 3:
        g0 = g_fn(U_MIN, d, M)
        if target >= g0:
            p0 = phi_at_zero(d)
            R0 = -math.log(p0)
            return RateValue(eps, eps * R0, 0.0, R0, ("u=0",))
    u = _invert_g(target, d, M)
    if u is None:
        return _extrapolate_small_eps(eps, d, M)
    R = R_fn(u, d, M)
    return RateValue(eps, eps * R, u, R, tuple(flags))


def _extrapolate_small_eps(eps: float, d: int, M: int | None) -> RateValue:
    """Power-law continuation of I below the smallest resolvable eps."""
    u0 = 2 * U_MIN
    e0 = 1.0 / g_fn(u0, d, M)
    e1 = 1.0 / g_fn(4 * u0, d, M)
    I0 = e0 * R_fn(u0, d, M)
    I1 = e1 * R_fn(4 * u0, d, M)
    k = math.log(I1 / I0) / math.log(e1 / e0)
    val = I0 * (eps / e0) ** k
    return RateValue(eps, val, float("nan"), val / eps, ("extrapolated",))


def per_return_rate(eps: float, d: int, M: int | None = None) -> float:
    """R(g^{-1}(1/eps)) without the factor eps: the cost of one return."""
    return rate_I(eps, d, M).per_return


def rate_curve(eps_grid, d: int, M: int | None = None) -> list[RateValue]:
    return [rate_I(float(e), d, M) for e in eps_grid]


# ---------------------------------------------------------------------------
# return probabilities and excursions


def return_probabilities(d: int, nmax: int) -> np.ndarray:
    """u_n = P{S_n = 0} for n = 0..nmax, exactly up to rounding.

    One axis: C(n, n/2) 2^-n.  Adding an axis splits the n steps binomially.
    """
    n = np.arange(nmax + 1)
    a = np.zeros(nmax + 1)
    even = n % 2 == 0
    m = n[even] // 2
    a[even] = np.exp(special.gammaln(2 * m + 1) - 2 * special.gammaln(m + 1) - 2 * m * math.log(2))
    u = a.copy()
    for k in range(2, d + 1):
        nxt = np.zeros(nmax + 1)
        for t in range(nmax + 1):
            j = np.arange(t + 1)
            w = stats.binom.pmf(j, t, 1.0 / k)
            nxt[t] = float(np.dot(w * a[j], u[t - j]))
        u = nxt
    return u


def first_return_law(d: int, nmax: int) -> np.ndarray:
    """f_n = P{tau_1 = n} for n = 0..nmax from u_n = sum_k f_k u_{n-k}."""
    u = return_probabilities(d, nmax)
    f = np.zeros(nmax + 1)
    for t in range(1, nmax + 1):
        f[t] = u[t] - float(np.dot(f[1:t], u[t - 1:0:-1]))
    return np.maximum(f, 0.0)


def _returns_needed(N: int, eps: float) -> int:
    """L_N^0 > eps N holds iff there are at least this many returns by time N-1."""
    return math.floor(eps * N)


def _tail_impossible(N: int, eps: float) -> bool:
    # returns happen at even times only, so L_N^0 <= ceil(N/2)
    return math.floor(eps * N) + 1 > (N + 1) // 2


def exact_tail(d: int, N: int, eps: float) -> float:
    """P{L_N^0 > eps N} from the first-return law by repeated convolution."""
    if _tail_impossible(N, eps):
        return 0.0
    m = _returns_needed(N, eps)
    if m <= 0:
        return 1.0
    f = first_return_law(d, N - 1)
    # log-scaled powers of the excursion law, truncated at N-1
    dist = np.zeros(N)
    dist[0] = 1.0
    logscale = 0.0
    base, e = f[:N].copy(), m
    result, rscale = None, 0.0
    while e:
        if e & 1:
            if result is None:
                result, rscale = base.copy(), logscale
            else:
                result = np.convolve(result, base)[:N]
                rscale += logscale
                s = result.max()
                result /= s
                rscale += math.log(s)
        e >>= 1
        if e:
            base = np.convolve(base, base)[:N]
            logscale *= 2
            s = base.max()
            base /= s
            logscale += math.log(s)
    return math.exp(rscale + math.log(result.sum()))


def mc_tail_oracle(d: int, N: int, eps: float, samples: int, seed, method: str = "auto",
                   tilt: float | None = None, pull=None) -> Estimate:
    """Monte Carlo estimate of P{L_N^0 > eps N}.

    ``walk`` simulates walks step by step; ``renewal`` draws excursion
    lengths from the exact first-return law (same law for L_N^0, much
    faster); ``importance`` tilts the excursion lengths by exp(-theta k)
    and reweights, for tails too small for plain sampling.  Plain methods
    report a Clopper-Pearson interval in ``flags``.  A nonzero ``pull``
    samples the tilted walk and forces the ``walk`` method.
    """
    if _tail_impossible(N, eps):
        return Estimate(0.0, 0.0, max(samples, 1), method="exact-zero")
    m = _returns_needed(N, eps)
    rng = np.random.default_rng(seed)
    probs = None
    if pull is not None and np.any(np.asarray(pull, dtype=float) != 0):
        probs = _step_probs(pull, d)
        method = "walk"
    if method == "auto":
        method = "renewal" if d <= 2 else "walk"
    if method == "walk":
        hits = _simulate_walks(d, N, eps, samples, rng, probs)
        return _binomial_estimate(hits, samples, "mc-walk")
    f = first_return_law(d, N - 1)[: N]
    if method == "renewal":
        cdf = np.cumsum(f)
        hits = 0
        chunk = max(1, 2_000_000 // max(m, 1))
        for s in range(0, samples, chunk):
            n = min(chunk, samples - s)
            if m == 0:
                hits += n
                continue
            k = np.searchsorted(cdf, rng.random((n, m)), side="right")  # == N means too long
            hits += int((k.sum(axis=1) <= N - 1).sum())
        return _binomial_estimate(hits, samples, "mc-renewal")
    if method == "importance":
        ks = np.arange(N)
        if tilt is None:
            tilt = _tail_tilt(f, (N - 1) / m)
        w = f * np.exp(-tilt * ks)
        Z = w.sum()
        cdf = np.cumsum(w / Z)
        cdf[-1] = 1.0
        vals = []
        chunk = max(1, 2_000_000 // m)
        for s in range(0, samples, chunk):
            n = min(chunk, samples - s)
            k = np.searchsorted(cdf, rng.random((n, m)), side="right")
            tot = k.sum(axis=1)
            logw = m * math.log(Z) + tilt * tot
            vals.append(np.where(tot <= N - 1, np.exp(logw), 0.0))
        x = np.concatenate(vals)
        mean = float(x.mean())
        se = float(x.std(ddof=1) / math.sqrt(len(x)))
        return Estimate(mean, se, len(x), method="mc-importance", flags=(f"tilt={tilt:.6g}",))
    raise ValueError(f"unknown method {method!r}")


def _tail_tilt(f: np.ndarray, mean_len: float) -> float:
    """theta >= 0 making the tilted, truncated excursion mean equal mean_len."""
    ks = np.arange(len(f))

    def mean(theta):
        w = f * np.exp(-theta * (ks - ks[1]))
        return float((w * ks).sum() / w.sum())

    if mean(0.0) <= mean_len:
        return 0.0
    hi = 1.0
    while mean(hi) > mean_len:
        hi *= 2
    return optimize.brentq(lambda t: mean(t) - mean_len, 0.0, hi, xtol=1e-12)


def _step_probs(pull, d: int) -> np.ndarray:
    """Tilted step law in the direction order (+e1, -e1, +e2, ...)."""
    lam = np.broadcast_to(np.asarray(pull, dtype=float), (d,))
    w = np.empty(2 * d)
    w[0::2] = np.exp(lam)
    w[1::2] = np.exp(-lam)
    return w / w.sum()


def _simulate_walks(d: int, N: int, eps: float, samples: int, rng, probs=None) -> int:
    hits = 0
    chunk = max(1, 4_000_000 // max(N, 1))
    need = eps * N
    for s in range(0, samples, chunk):
        n = min(chunk, samples - s)
        pos = np.zeros((n, d), dtype=np.int64)
        L = np.ones(n, dtype=np.int64)
        for _ in range(N - 1):
            if probs is None:
                k = rng.integers(0, 2 * d, size=n)
            else:
                k = rng.choice(2 * d, size=n, p=probs)
            np.add.at(pos, (np.arange(n), k // 2), 1 - 2 * (k % 2))
            L += ~pos.any(axis=1)
        hits += int((L > need).sum())
    return hits


def _binomial_estimate(hits: int, n: int, method: str) -> Estimate:
    p = hits / n
    lo, hi = clopper_pearson(hits, n)
    se = math.sqrt(max(p * (1 - p), 0.0) / n)
    return Estimate(p, se, n, method=method, flags=(f"cp95=[{lo:.6g},{hi:.6g}]",))


def empirical_rate(prob: float, N: int) -> float:
    """-(1/N) ln prob."""
    return -math.log(prob) / N if prob > 0 else math.inf


def mc_phi(u: float, d: int, samples: int, seed, cap: int | None = None) -> tuple[float, float, float]:
    """Direct MC of E exp(-u tau_1) with tau_1 capped.

    Returns (estimate, stderr, bound on the neglected mass exp(-u cap)).
    """
    cap = cap or max(2, math.ceil(30 / u))
    rng = np.random.default_rng(seed)
    acc = np.zeros(samples)
    pos = np.zeros((samples, d), dtype=np.int64)
    alive = np.ones(samples, dtype=bool)
    for t in range(1, cap + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        k = rng.integers(0, 2 * d, size=idx.size)
        pos[idx, k // 2] += 1 - 2 * (k % 2)
        back = ~pos[idx].any(axis=1)
        acc[idx[back]] = math.exp(-u * t)
        alive[idx[back]] = False
    return float(acc.mean()), float(acc.std(ddof=1) / math.sqrt(samples)), math.exp(-u * cap)


def pulled_rate_bound(lam, alpha: float, d: int) -> float:
    """Lower bound alpha ln E exp(lam . S_1) on the tilted local-time rate."""
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (d,))
    return float(alpha * math.log(np.cosh(lam).mean()))
