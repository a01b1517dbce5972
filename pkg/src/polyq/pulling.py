"""Polymers pulled at the free end by a constant force lambda.

The reference walk becomes P_lambda, whose steps have probabilities
proportional to exp(lambda . e); the Gibbs weight exp(beta H / N) is
unchanged, and Z_N(beta, lambda) = E_lambda exp(beta H / N).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import exact, mcmc, rate
from .exact import ExactGibbs, _merge_log, check_budget, iter_batches
from .model import ChargeLaw, GibbsSpec, KappaUnboundedError, charge_moments, direction_vectors
from .stats import Estimate


class UnsupportedLawError(ValueError):
    """The charge law lacks the moments a bound needs."""


def _as_pull(lam, d: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.size == 1 and d > 1:
        lam = np.full(d, float(lam[0]))
    if lam.size != d:
        raise ValueError(f"pulling vector must have {d} components")
    return lam


def step_normalizer(lam, d: int) -> float:
    """E exp(lambda . S_1) = (1/d) sum_j cosh(lambda_j)."""
    return float(np.cosh(_as_pull(lam, d)).mean())


def tilted_step_law(lam, d: int) -> dict:
    """Map from unit step (as a tuple) to its probability under P_lambda."""
    lam = _as_pull(lam, d)
    if not np.any(lam):
        p = 1.0 / (2 * d)
        return {tuple(int(x) for x in e): p for e in direction_vectors(d)}
    Z = 2 * d * step_normalizer(lam, d)
    return {tuple(int(x) for x in e): math.exp(float(lam @ e)) / Z for e in direction_vectors(d)}


def _log_step_norm_total(lam: np.ndarray, d: int) -> float:
    return math.log(2 * d * step_normalizer(lam, d))


def log_tilted_partition(spec: GibbsSpec, q, budget: int | None = None) -> float:
    """ln Z_N(beta, lambda) by exhaustive enumeration."""
    if not spec.pulled:
        return ExactGibbs(spec, q, budget).log_Z
    d, N = spec.d, spec.N
    check_budget(d, N, budget)
    lam = np.asarray(spec.pull)
    parts = []
    for b in iter_batches(q, d, N, budget):
        lw = spec.beta * b.H / N + b.endpoints @ lam
        m = float(lw.max())
        parts.append((m, math.fsum(np.exp(lw - m))))
    return _merge_log(parts) - (N - 1) * _log_step_norm_total(lam, d)


def tilted_partition(spec: GibbsSpec, q, method: str = "exact", budget: int | None = None,
                     sweeps: int = 20000, betas=None, seed=None):
    """Z_N(beta, lambda).

    ``exact`` returns a float; at lambda = 0 it is the unpulled quenched
    partition function.  ``mcmc`` integrates E[H/N] over a beta grid
    from 0 and returns an Estimate of Z.
    """
    if method == "exact":
        return math.exp(log_tilted_partition(spec, q, budget))
    if method != "mcmc":
        raise ValueError(f"unknown method {method!r}")
    if seed is None:
        raise ValueError("mcmc needs an explicit seed")
    if spec.beta == 0:
        return Estimate(1.0, 0.0, 1, method="exact")
    if betas is None:
        betas = np.linspace(0.0, spec.beta, 9)
    curve = mcmc.free_energy_ti(spec, q, betas, sweeps, seed=seed)
    logZ = spec.N * curve.F[-1]
    se = spec.N * curve.F_stderr[-1]
    Z = math.exp(logZ)
    return Estimate(Z, Z * se, sum(e.n_samples for e in curve.dF), method="mcmc-ti", flags=curve.flags)


@dataclass(frozen=True)
class BetaCBounds:
    lower: float
    upper: float
    metadata: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return self.lower <= self.upper


def beta_c_bounds(lam, law: ChargeLaw, d: int) -> BetaCBounds:
    """Lower and upper bounds on the critical inverse temperature under a pull."""
    lam = _as_pull(lam, d)
    if not np.all(np.isfinite(lam)):
        raise ValueError("pull must be finite")
    mom_ok = True
    try:
        mom = charge_moments(law)
    except KappaUnboundedError as exc:
        mom_ok, err = False, exc
    ep, em = law.mean_part(1), law.mean_part(-1)
    denom = ep ** 2 + em ** 2
    if not (math.isfinite(denom) and denom > 0):
        raise UnsupportedLawError("E q^+ and E q^- must be finite and not both zero")
    upper = (2 * math.log(2 * d) * (2 if d == 1 else 1) + 4 * float(np.abs(lam).max())) / denom
    meta = {"note": "lower bound uses kappa^(-1/2) * max(sqrt(.), kappa^(-1/2)) as written; "
                    "the two kappa factors do not scale alike"}
    if not mom_ok:
        meta["lower_unsupported"] = str(err)
        return BetaCBounds(float("nan"), upper, meta)
    k = mom.kappa
    if mom.kappa_approximate:
        meta["kappa_approximate"] = True
    inner = math.sqrt(max(math.log(step_normalizer(lam, d)), 0.0) / denom)
    lower = k ** -0.5 * max(inner, k ** -0.5)
    meta["kappa"] = k
    return BetaCBounds(lower, upper, meta)


def lipschitz_gap(lam, mu, beta_c: float, law: ChargeLaw, d: int) -> float:
    """Upper bound on beta_c(lambda + mu) - beta_c(lambda) given an estimate of beta_c(lambda)."""
    mu = _as_pull(mu, d)
    norm = float(np.abs(mu).max())
    if norm == 0:
        return 0.0
    if not beta_c > 0:
        raise ValueError("beta_c estimate must be positive")
    kappa = charge_moments(law).kappa
    eps = 1.0 / (2 * kappa * beta_c)
    if not eps < 0.5:
        return math.inf
    Irate = rate.pulled_rate_bound(lam, eps, d)
    if Irate <= 0:
        return math.inf
    return 2 * norm * beta_c / Irate


@dataclass(frozen=True)
class BetaCScan:
    betas: np.ndarray
    F_excess: np.ndarray
    F_stderr: np.ndarray
    bracket: tuple | None     # (last beta not detected, first beta detected)
    flags: tuple = ()


def beta_c_scan(spec: GibbsSpec, q, betas, sweeps: int, seed, k: float = 3.0) -> BetaCScan:
    """Scan the finite-N free energy in excess of the trivial beta sum(q^2)/N^2.

    The first grid beta whose excess exceeds ``k`` standard errors closes
    the reported bracket.  At finite N this only says where the excess
    becomes detectable.
    """
    curve = mcmc.free_energy_ti(spec, q, betas, sweeps, seed=seed)
    trivial = curve.betas * float(np.dot(q, q)) / spec.N ** 2
    excess = curve.F - trivial
    bracket = None
    for i in range(1, len(excess)):
        if excess[i] > k * curve.F_stderr[i]:
            bracket = (float(curve.betas[i - 1]), float(curve.betas[i]))
            break
    return BetaCScan(curve.betas, excess, curve.F_stderr, bracket, curve.flags)


def mean_origin_local_time(d: int, N: int, lam, samples: int, seed) -> Estimate:
    """MC estimate of E_lambda L_N^0, the visits to the origin by time N-1."""
    lam = _as_pull(lam, d)
    probs = rate._step_probs(lam, d)
    rng = np.random.default_rng(seed)
    E = direction_vectors(d)
    out = np.empty(samples)
    chunk = max(1, 2_000_000 // max(N, 1))
    for s in range(0, samples, chunk):
        n = min(chunk, samples - s)
        k = rng.choice(2 * d, size=(n, N - 1), p=probs)
        pos = np.cumsum(E[k], axis=1)
        out[s:s + n] = 1 + (~pos.any(axis=2)).sum(axis=1)
    return Estimate(float(out.mean()), float(out.std(ddof=1) / math.sqrt(samples)), samples,
                    method="mc")
