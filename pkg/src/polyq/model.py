"""Domain types and deterministic observables of the charged-polymer model.

Charges are plain numpy arrays (``int64`` for integer-valued laws, ``float64``
otherwise).  A walk is stored as a sequence of direction codes: code ``k``
is the unit step along axis ``k // 2`` with sign ``+`` for even ``k`` and
``-`` for odd ``k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import integrate, special

__all__ = [
    "ChargeLaw", "ChargeMoments", "Walk", "OccupationField", "ParitySignSums",
    "GibbsSpec", "KappaUnboundedError", "sample_charges", "charge_moments",
    "occupation", "energy", "interaction_energy", "parity_sign_sums",
    "diameter", "qbar", "direction_vectors", "positions_from_steps",
    "is_integer_charges",
]

SQRT3 = math.sqrt(3.0)


class KappaUnboundedError(ValueError):
    """The grid supremum defining kappa did not settle inside the grid."""


def direction_vectors(d: int) -> np.ndarray:
    """The ``2d`` unit steps, ordered by direction code."""
    e = np.zeros((2 * d, d), dtype=np.int64)
    for k in range(2 * d):
        e[k, k // 2] = 1 if k % 2 == 0 else -1
    return e


def positions_from_steps(d: int, steps: np.ndarray) -> np.ndarray:
    steps = np.asarray(steps)
    pos = np.zeros((steps.shape[-1] + 1, d), dtype=np.int64)
    if steps.size:
        pos[1:] = np.cumsum(direction_vectors(d)[steps], axis=0)
    return pos


def is_integer_charges(q) -> bool:
    return np.asarray(q).dtype.kind in "iu"


# ---------------------------------------------------------------------------
# Charge laws


@dataclass(frozen=True)
class ChargeLaw:
    """A centred, unit-variance charge distribution.

    Use the constructors :meth:`rademacher`, :meth:`gaussian`,
    :meth:`uniform` and :meth:`discrete`.  Discrete laws are standardized at
    construction.
    """

    kind: str
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("rademacher", "gaussian", "uniform-symmetric", "discrete"):
            raise ValueError(f"unknown charge law {self.kind!r}")
        if self.kind == "discrete":
            if len(self.values) != len(self.probs) or not self.values:
                raise ValueError("discrete law needs matching values and probabilities")

    @classmethod
    def rademacher(cls) -> "ChargeLaw":
        return cls("rademacher")

    @classmethod
    def gaussian(cls) -> "ChargeLaw":
        return cls("gaussian")

    @classmethod
    def uniform(cls) -> "ChargeLaw":
        """Uniform on ``[-sqrt(3), sqrt(3)]``."""
        return cls("uniform-symmetric")

    @classmethod
    def discrete(cls, values: Sequence[float], probs: Sequence[float]) -> "ChargeLaw":
        v = np.asarray(values, dtype=float)
        p = np.asarray(probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("values and probabilities must be 1-d of equal length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        keep = p > 0
        v, p = v[keep], p[keep]
        mean = float(np.dot(p, v))
        var = float(np.dot(p, (v - mean) ** 2))
        if var <= 0:
            raise ValueError("discrete law has zero variance")
        z = (v - mean) / math.sqrt(var)
        zr = np.round(z)
        if np.all(np.abs(z - zr) < 1e-12):
            z = zr
        order = np.argsort(z)
        return cls("discrete", tuple(float(x) for x in z[order]), tuple(float(x) for x in p[order]))

    @classmethod
    def from_name(cls, name: str) -> "ChargeLaw":
        """Parse ``rademacher``, ``gaussian``, ``uniform`` or ``discrete:v=p,v=p,...``."""
        name = name.strip().lower()
        if name in ("rademacher", "gaussian"):
            return cls(name)
        if name in ("uniform", "uniform-symmetric"):
            return cls.uniform()
        if name.startswith("discrete:"):
            pairs = [item.split("=") for item in name[len("discrete:"):].split(",") if item]
            try:
                values = [float(a) for a, _ in pairs]
                probs = [float(b) for _, b in pairs]
            except ValueError as exc:
                raise ValueError(f"malformed discrete law {name!r}") from exc
            return cls.discrete(values, probs)
        raise ValueError(f"unknown charge law {name!r}")

    @property
    def name(self) -> str:
        if self.kind != "discrete":
            return self.kind
        return "discrete:" + ",".join(f"{v:g}={p:g}" for v, p in zip(self.values, self.probs))

    @property
    def is_integer(self) -> bool:
        if self.kind == "rademacher":
            return True
        if self.kind == "discrete":
            return all(float(v).is_integer() for v in self.values)
        return False

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("need at least one charge")
        if self.kind == "rademacher":
            return 2 * rng.integers(0, 2, size=n, dtype=np.int64) - 1
        if self.kind == "gaussian":
            return rng.standard_normal(n)
        if self.kind == "uniform-symmetric":
            return rng.uniform(-SQRT3, SQRT3, size=n)
        idx = rng.choice(len(self.values), size=n, p=np.asarray(self.probs))
        vals = np.asarray(self.values)[idx]
        return vals.astype(np.int64) if self.is_integer else vals

    # Moment data ---------------------------------------------------------

    def mean_part(self, sign: int) -> float:
        """E q^+ (``sign=+1``) or E q^- (``sign=-1``)."""
        if self.kind == "rademacher":
            return 0.5
        if self.kind == "gaussian":
            return 1.0 / math.sqrt(2.0 * math.pi)
        if self.kind == "uniform-symmetric":
            return SQRT3 / 4.0
        v = np.asarray(self.values)
        return float(np.dot(self.probs, np.maximum(sign * v, 0.0)))

    def survival_part(self, sign: int, z: float) -> float:
        """P{q^sign > z} for z >= 0."""
        if self.kind == "rademacher":
            return 0.5 if z < 1 else 0.0
        if self.kind == "gaussian":
            return 0.5 * math.erfc(z / math.sqrt(2.0))
        if self.kind == "uniform-symmetric":
            return max(SQRT3 - z, 0.0) / (2 * SQRT3)
        v = sign * np.asarray(self.values)
        return float(np.sum(np.asarray(self.probs)[v > z]))

    def log_mgf(self, t: np.ndarray) -> np.ndarray:
        """ln E exp(t q), vectorized."""
        t = np.asarray(t, dtype=float)
        if self.kind == "rademacher":
            a = np.abs(t)
            return a + np.log1p(np.exp(-2 * a)) - math.log(2.0)
        if self.kind == "gaussian":
            return t ** 2 / 2
        if self.kind == "uniform-symmetric":
            x = SQRT3 * np.abs(t)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = x + np.log1p(-np.exp(-2 * x)) - math.log(2.0) - np.log(x)
            return np.where(x < 1e-6, x ** 2 / 6, out)
        v = np.asarray(self.values)
        return special.logsumexp(np.outer(t, v), b=np.asarray(self.probs), axis=1)

    def mean_exp_abs(self, c: float) -> float:
        """E exp(-c |q|)."""
        if self.kind == "rademacher":
            return math.exp(-c)
        if self.kind == "gaussian":
            return float(special.erfcx(c / math.sqrt(2.0)))
        if self.kind == "uniform-symmetric":
            x = c * SQRT3
            return 1.0 if x == 0 else -math.expm1(-x) / x
        return float(np.dot(self.probs, np.exp(-c * np.abs(self.values))))


@dataclass(frozen=True)
class ChargeMoments:
    kappa: float
    kappa_approximate: bool
    eq_plus: float
    eq_minus: float
    gamma: float
    lam: float

    @property
    def max_energy_density(self) -> float:
        """((E q^+)^2 + (E q^-)^2) / 2, the d >= 2 limit of max H / N^2."""
        return (self.eq_plus ** 2 + self.eq_minus ** 2) / 2

    def beta_alpha(self, alpha: float, d: int) -> float:
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gamma <= 0 or self.lam <= 0:
            raise ValueError("beta_alpha is infinite for this law (gamma or lambda vanishes)")
        return math.log(2 * d) * max(8.0 / ((1 - alpha) * self.gamma), 4.0 / self.lam)

    def rho(self, beta: float, alpha: float, d: int, law: ChargeLaw) -> float:
        return 2 * d * law.mean_exp_abs(beta * alpha * math.sqrt(self.gamma))


def _kappa(law: ChargeLaw, t_min=1e-3, t_max=50.0, points=400) -> tuple[float, bool]:
    if law.kind in ("rademacher", "gaussian", "uniform-symmetric"):
        return 1.0, False
    t = np.geomspace(t_min, t_max, points)
    t = np.concatenate([-t[::-1], t])
    ratio = 2 * law.log_mgf(t) / t ** 2
    k = int(np.argmax(ratio))
    if k in (0, len(t) - 1):
        raise KappaUnboundedError(f"kappa grid supremum sits at the grid edge t={t[k]:g}")
    # the t -> 0 limit equals the variance, 1
    return max(1.0, float(ratio[k])), True


def _lambda_constant(law: ChargeLaw) -> float:
    """min over sign pairs of E min((E q^e) q_0^e, (E q^e') q_1^e')."""
    best = math.inf
    for e1 in (1, -1):
        for e2 in (1, -1):
            a, b = law.mean_part(e1), law.mean_part(e2)
            if law.kind == "rademacher":
                val = 0.125  # (1/2) P{q_0 = q_1 = 1}
            elif law.kind == "discrete":
                v = np.asarray(law.values)
                p = np.asarray(law.probs)
                x = a * np.maximum(e1 * v, 0)
                y = b * np.maximum(e2 * v, 0)
                val = float(p @ np.minimum.outer(x, y) @ p)
            else:
                f = lambda z: law.survival_part(e1, z / a) * law.survival_part(e2, z / b)
                upper = SQRT3 * max(a, b) if law.kind == "uniform-symmetric" else np.inf
                val = integrate.quad(f, 0, upper, epsabs=1e-13, epsrel=1e-11)[0]
            best = min(best, val)
    return best


def charge_moments(law: ChargeLaw) -> ChargeMoments:
    kappa, approx = _kappa(law)
    ep, em = law.mean_part(1), law.mean_part(-1)
    return ChargeMoments(
        kappa=kappa, kappa_approximate=approx, eq_plus=ep, eq_minus=em,
        gamma=min(ep, em) ** 2, lam=_lambda_constant(law),
    )


def sample_charges(law: ChargeLaw, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. charges; ``seed`` is anything ``np.random.default_rng`` accepts."""
    return law.sample(n, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# Walks and occupation fields


@dataclass(frozen=True, eq=False)
class Walk:
    """Nearest-neighbour path on Z^d anchored at the origin."""

    d: int
    steps: np.ndarray

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        steps = np.asarray(self.steps, dtype=np.int8).reshape(-1)
        if steps.size and (steps.min() < 0 or steps.max() >= 2 * self.d):
            raise ValueError("direction codes must lie in [0, 2d)")
        steps.setflags(write=False)
        object.__setattr__(self, "steps", steps)

    @classmethod
    def from_positions(cls, positions, reanchor: bool = False) -> "Walk":
        pos = np.asarray(positions, dtype=np.int64)
        if pos.ndim == 1:
            pos = pos[:, None]
        if reanchor:
            pos = pos - pos[0]
        elif np.any(pos[0] != 0):
            raise ValueError("walk must start at the origin")
        inc = np.diff(pos, axis=0)
        nz = inc != 0
        if inc.size and (np.any(nz.sum(axis=1) != 1) or np.any(np.abs(inc).sum(axis=1) != 1)):
            raise ValueError("every increment must be a signed unit vector")
        axis = np.argmax(nz, axis=1)
        sign = inc[np.arange(len(inc)), axis]
        steps = 2 * axis + (sign < 0)
        return cls(pos.shape[1], steps)

    @classmethod
    def straight(cls, d: int, n: int) -> "Walk":
        return cls(d, np.zeros(n - 1, dtype=np.int8))

    @classmethod
    def random(cls, d: int, n: int, rng: np.random.Generator) -> "Walk":
        return cls(d, rng.integers(0, 2 * d, size=n - 1))

    @property
    def N(self) -> int:
        return self.steps.size + 1

    @cached_property
    def positions(self) -> np.ndarray:
        pos = positions_from_steps(self.d, self.steps)
        pos.setflags(write=False)
        return pos

    def suffix(self, start: int) -> "Walk":
        """The walk ``S_{start+i} - S_start``."""
        return Walk(self.d, self.steps[start:])

    def prefix(self, n: int) -> "Walk":
        return Walk(self.d, self.steps[: n - 1])

    def to_json(self) -> list:
        return self.positions.tolist()

    def __eq__(self, other):
        return isinstance(other, Walk) and self.d == other.d and np.array_equal(self.steps, other.steps)

    def __hash__(self):
        return hash((self.d, self.steps.tobytes()))

    def __repr__(self):
        return f"Walk(d={self.d}, N={self.N})"


@dataclass(frozen=True, eq=False)
class OccupationField:
    """Visited sites with their local times and total charges."""

    sites: np.ndarray
    local_time: np.ndarray
    charge: np.ndarray
    site_of: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.local_time)

    @property
    def N(self) -> int:
        return int(self.local_time.sum())

    @property
    def max_local_time(self) -> int:
        return int(self.local_time.max())

    def as_dict(self) -> dict:
        qs = self.charge.tolist()
        return {tuple(s): (int(l), c) for s, l, c in zip(self.sites.tolist(), self.local_time, qs)}

    def charge_at(self, x) -> float:
        hit = np.all(self.sites == np.asarray(x), axis=1)
        return self.charge[hit][0] if hit.any() else self.charge.dtype.type(0)


def occupation(q, walk: Walk) -> OccupationField:
    q = np.asarray(q)
    if q.shape != (walk.N,):
        raise ValueError(f"need {walk.N} charges, got {q.shape}")
    sites, inv, counts = np.unique(walk.positions, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    if is_integer_charges(q):
        charge = np.zeros(len(sites), dtype=np.int64)
        np.add.at(charge, inv, q)
    else:
        charge = np.bincount(inv, weights=q, minlength=len(sites))
    return OccupationField(sites, counts.astype(np.int64), charge, inv)


def energy(fld: OccupationField):
    """H_N = sum_x (Q^x)^2, exact for integer charges."""
    if fld.charge.dtype.kind in "iu":
        return int(np.dot(fld.charge, fld.charge))
    return float(np.dot(fld.charge, fld.charge))


def interaction_energy(q, walk: Walk):
    """sum_{i<j} q_i q_j 1{S_i = S_j}, accumulated monomer by monomer."""
    q = np.asarray(q)
    fld = occupation(q, walk)
    order = np.argsort(fld.site_of, kind="stable")
    grp = fld.site_of[order]
    qq = q[order]
    csum = np.cumsum(qq)
    start = np.searchsorted(grp, grp, side="left")
    before = csum - qq - np.where(start > 0, csum[start - 1], 0)
    val = np.dot(qq, before)
    return int(val) if is_integer_charges(q) else float(val)


@dataclass(frozen=True)
class ParitySignSums:
    plus_even: float
    minus_even: float
    plus_odd: float
    minus_odd: float

    def get(self, sign: int, parity: int):
        """``parity`` is 0 for even, 1 for odd."""
        if parity == 0:
            return self.plus_even if sign > 0 else self.minus_even
        return self.plus_odd if sign > 0 else self.minus_odd

    def max_energy(self):
        return self.plus_even ** 2 + self.minus_even ** 2 + self.plus_odd ** 2 + self.minus_odd ** 2


def parity_sign_sums(q) -> ParitySignSums:
    q = np.asarray(q)
    conv = int if is_integer_charges(q) else float
    ev, od = q[0::2], q[1::2]
    return ParitySignSums(
        conv(np.maximum(ev, 0).sum()), conv(np.maximum(-ev, 0).sum()),
        conv(np.maximum(od, 0).sum()), conv(np.maximum(-od, 0).sum()),
    )


def diameter(walk: Walk) -> int:
    """L1 diameter of the visited set."""
    return int(diameter_batch(walk.positions[None])[0])


def diameter_batch(positions: np.ndarray) -> np.ndarray:
    """L1 diameters of a batch of paths shaped ``(P, N, d)``."""
    d = positions.shape[-1]
    signs = np.array(np.meshgrid(*[[1, -1]] * d, indexing="ij")).reshape(d, -1)
    proj = positions @ signs
    return (proj.max(axis=1) - proj.min(axis=1)).max(axis=1)


def qbar(q, window: int) -> float:
    """Smallest mean of |q| over contiguous windows of length at least ``window``.

    Window lengths run over ``[window, N-1]`` (the full vector when
    ``window == N``).  A minimizing window always has length below
    ``2 * window``, which bounds the search.
    """
    a = np.abs(np.asarray(q, dtype=float))
    n = a.size
    if window < 1 or window > n:
        raise ValueError(f"bad window {window} for {n} charges")
    if window == n:
        return float(a.mean())
    c = np.concatenate([[0.0], np.cumsum(a)])
    best = math.inf
    for ell in range(window, min(2 * window - 1, n - 1) + 1):
        best = min(best, float((c[ell:] - c[:-ell]).min()) / ell)
    return best


@dataclass(frozen=True)
class GibbsSpec:
    """Everything that fixes an experiment, apart from the charges themselves."""

    d: int
    N: int
    beta: float
    law: ChargeLaw = field(default_factory=ChargeLaw.rademacher)
    pull: tuple[float, ...] | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.N < 1 or self.d < 1:
            raise ValueError("need N >= 1 and d >= 1")
        pull = tuple(float(x) for x in (self.pull or (0.0,) * self.d))
        if len(pull) != self.d:
            raise ValueError("pulling vector must have d components")
        object.__setattr__(self, "pull", pull)

    @property
    def pulled(self) -> bool:
        return any(x != 0 for x in self.pull)

    def with_beta(self, beta: float) -> "GibbsSpec":
        return GibbsSpec(self.d, self.N, beta, self.law, self.pull, self.seed)

    def with_N(self, n: int) -> "GibbsSpec":
        return GibbsSpec(self.d, n, self.beta, self.law, self.pull, self.seed)

    def charges(self, seed=None) -> np.ndarray:
        s = self.seed if seed is None else seed
        if s is None:
            raise ValueError("a seed is required to sample charges")
        return sample_charges(self.law, self.N, s)

    def to_dict(self) -> dict:
        return {"d": self.d, "N": self.N, "beta": self.beta, "charges": self.law.name,
                "pull": list(self.pull), "seed": self.seed}
