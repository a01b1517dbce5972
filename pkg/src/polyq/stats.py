"""Error bars for correlated Monte Carlo series."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n_samples: int
    tau: float = 1.0          # integrated autocorrelation time, in samples
    method: str = "mcmc"
    flags: tuple = ()

    def __post_init__(self):
        if self.stderr < 0 or not self.n_samples >= 1:
            raise ValueError("stderr must be >= 0 and n_samples >= 1")

    @property
    def value(self) -> float:
        return self.mean

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr

    def to_dict(self) -> dict:
        out = asdict(self)
        out["flags"] = list(self.flags)
        return out


def batch_means(x, batch_size: int | None = None) -> tuple[float, float]:
    """Mean and batch-means standard error (batch size floor(sqrt(n)) by default)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("empty series")
    if n < 4:
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    b = batch_size or int(math.isqrt(n))
    nb = n // b
    means = x[: nb * b].reshape(nb, b).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(nb))


def autocorr_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return 1.0
    y = x - x.mean()
    var = float(np.dot(y, y)) / n
    if var == 0:
        return 1.0
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, m)
    acf = np.fft.irfft(f * np.conj(f), m)[:n] / (n * var)
    tau = 2 * np.cumsum(acf) - 1
    win = np.arange(n) >= c * tau
    k = int(np.argmax(win)) if win.any() else n - 1
    return float(max(tau[k], 1.0))


def estimate(x, method: str = "mcmc", flags=()) -> Estimate:
    x = np.asarray(x, dtype=float)
    m, se = batch_means(x)
    return Estimate(m, se, len(x), autocorr_time(x), method, tuple(flags))


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval."""
    from scipy.stats import beta as beta_dist
    a = (1 - level) / 2
    lo = 0.0 if k == 0 else float(beta_dist.ppf(a, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - a, k + 1, n - k))
    return lo, hi
