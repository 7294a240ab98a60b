"""Censored survival data with mismeasured covariates.

Event times are drawn by inverse transform: with E ~ Exp(1),
T = H_gamma^{-1}(E / f_beta(Z)) has hazard eta_gamma(t) f_beta(Z) exactly.
When the cumulative baseline is bounded and the drawn level is unreachable the
event time is +inf (the subject survives every horizon); criteria clamp all
path integrals at tau, so such values are bookkeeping only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import truncnorm

from .errors import ConfigError
from .families import (
    Baseline,
    ErrorDensity,
    RelativeRisk,
    Theta,
    WeightFunction,
    UnitWeight,
)

__all__ = [
    "CovariateLaw",
    "UniformCovariate",
    "TruncGaussianCovariate",
    "TwoPointCovariate",
    "CensorLaw",
    "UniformCensor",
    "ExpCensor",
    "NoCensor",
    "StudyConfig",
    "Dataset",
    "sample_dataset",
]


# ---------------------------------------------------------------------------
# Covariate laws (compact support)


class CovariateLaw:
    support: tuple

    def sample(self, rng, size):
        raise NotImplementedError

    def quad_nodes(self, k=96):
        """(nodes, weights) with sum(weights)=1 so E[h(Z)] = sum w h(node)."""
        raise NotImplementedError


class UniformCovariate(CovariateLaw):
    def __init__(self, lo=-1.0, hi=1.0):
        if not hi > lo:
            raise ConfigError("UniformCovariate needs hi > lo")
        self.lo, self.hi = float(lo), float(hi)
        self.support = (self.lo, self.hi)

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    def quad_nodes(self, k=96):
        x, w = leggauss(k)
        mid, half = 0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo)
        return mid + half * x, 0.5 * w


class TruncGaussianCovariate(CovariateLaw):
    def __init__(self, mu=0.0, sigma=1.0, lo=-2.0, hi=2.0):
        if not (hi > lo and sigma > 0):
            raise ConfigError("TruncGaussian needs hi > lo and sigma > 0")
        self.mu, self.sigma = float(mu), float(sigma)
        self.lo, self.hi = float(lo), float(hi)
        self.support = (self.lo, self.hi)
        self._a = (self.lo - self.mu) / self.sigma
        self._b = (self.hi - self.mu) / self.sigma

    def sample(self, rng, size):
        return truncnorm.rvs(
            self._a, self._b, loc=self.mu, scale=self.sigma, size=size, random_state=rng
        )

    def quad_nodes(self, k=96):
        x, w = leggauss(k)
        mid, half = 0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo)
        z = mid + half * x
        dens = truncnorm.pdf(z, self._a, self._b, loc=self.mu, scale=self.sigma)
        wt = half * w * dens
        return z, wt / wt.sum()


class TwoPointCovariate(CovariateLaw):
    """P(Z = z1) = p, P(Z = z2) = 1 - p; degenerate when p = 1."""

    def __init__(self, z1, z2, p=0.5):
        if not 0.0 <= p <= 1.0:
            raise ConfigError("TwoPoint needs p in [0,1]")
        self.z1, self.z2, self.p = float(z1), float(z2), float(p)
        self.support = (min(self.z1, self.z2), max(self.z1, self.z2))

    def sample(self, rng, size):
        return np.where(rng.random(size) < self.p, self.z1, self.z2)

    def quad_nodes(self, k=96):
        return np.array([self.z1, self.z2]), np.array([self.p, 1.0 - self.p])


# ---------------------------------------------------------------------------
# Censoring laws (independent of covariates by construction)


class CensorLaw:
    def sample(self, rng, size):
        raise NotImplementedError

    def survival(self, t):
        raise NotImplementedError


class UniformCensor(CensorLaw):
    def __init__(self, c_max):
        if c_max <= 0:
            raise ConfigError("UniformCensor needs c_max > 0")
        self.c_max = float(c_max)

    def sample(self, rng, size):
        return rng.uniform(0.0, self.c_max, size)

    def survival(self, t):
        return np.clip(1.0 - np.asarray(t, float) / self.c_max, 0.0, 1.0)


class ExpCensor(CensorLaw):
    def __init__(self, rate):
        if rate <= 0:
            raise ConfigError("ExpCensor needs rate > 0")
        self.rate = float(rate)

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def survival(self, t):
        return np.exp(-self.rate * np.asarray(t, float))


class NoCensor(CensorLaw):
    """No censoring: X = T (event indicator means 'event by tau')."""

    def sample(self, rng, size):
        return np.full(size, np.inf)

    def survival(self, t):
        return np.ones_like(np.asarray(t, float))


# ---------------------------------------------------------------------------
# Study configuration and dataset container


@dataclass
class StudyConfig:
    n: int
    tau: float
    theta0: Theta
    risk: RelativeRisk
    baseline: Baseline
    covariate: CovariateLaw
    error: ErrorDensity
    censor: CensorLaw = field(default_factory=NoCensor)
    weight: WeightFunction = field(default_factory=UnitWeight)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be positive")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        beta0, gamma0 = self.theta0
        self.risk.check_beta(beta0)
        self.baseline.check_gamma(gamma0)
        if not self.baseline.positive_on(gamma0, self.tau):
            raise ConfigError(
                f"baseline {self.baseline.name} not positive on [0, {self.tau:g}] "
                f"at gamma0={gamma0}"
            )
        lo, hi = self.covariate.support
        probe = np.linspace(lo, hi, 257)
        if np.any(self.risk.value(beta0, probe) <= 0.0):
            raise ConfigError(
                f"risk {self.risk.name} not positive on the covariate support "
                f"at beta0={beta0}"
            )

    def replace(self, **kw) -> "StudyConfig":
        from dataclasses import replace as _replace

        return _replace(self, **kw)


@dataclass
class Dataset:
    x: np.ndarray
    d: np.ndarray
    u: np.ndarray
    tau: float
    z: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, float)
        self.d = np.asarray(self.d, np.int8)
        self.u = np.asarray(self.u, float)
        if self.z is not None:
            self.z = np.asarray(self.z, float)
        if not (self.x.shape == self.d.shape == self.u.shape):
            raise ConfigError("x, d, u must share a common length")

    def __len__(self):
        return self.x.size

    def without_z(self) -> "Dataset":
        return Dataset(self.x, self.d, self.u, self.tau, None)

    # -- CSV round trip (17 significant digits, '.' decimals, LF endings) ----
    def to_csv(self, path_or_buf, with_z=True):
        buf = path_or_buf if hasattr(path_or_buf, "write") else None
        fh = buf or open(path_or_buf, "w", encoding="utf-8", newline="\n")
        try:
            fh.write("x,d,u,z\n")
            zcol = self.z if (with_z and self.z is not None) else None
            for i in range(len(self)):
                zs = "" if zcol is None else f"{zcol[i]:.17g}"
                fh.write(f"{self.x[i]:.17g},{int(self.d[i])},{self.u[i]:.17g},{zs}\n")
        finally:
            if buf is None:
                fh.close()

    @classmethod
    def from_csv(cls, path_or_buf, tau) -> "Dataset":
        fh = (
            path_or_buf
            if hasattr(path_or_buf, "read")
            else open(path_or_buf, "r", encoding="utf-8")
        )
        try:
            header = fh.readline().strip()
            if header != "x,d,u,z":
                raise ConfigError(f"unexpected dataset header {header!r}")
            xs, ds, us, zs = [], [], [], []
            any_z = False
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                px, pd, pu, pz = line.split(",")
                xs.append(float(px))
                ds.append(int(pd))
                us.append(float(pu))
                if pz == "":
                    zs.append(np.nan)
                else:
                    zs.append(float(pz))
                    any_z = True
            z = np.asarray(zs) if any_z else None
            return cls(np.asarray(xs), np.asarray(ds), np.asarray(us), float(tau), z)
        finally:
            if fh is not path_or_buf:
                fh.close()


# ---------------------------------------------------------------------------
# Sampling


def sample_dataset(cfg: StudyConfig, rng=None, keep_z=True) -> Dataset:
    """One dataset under cfg; bit-identical for a given seed.

    Draw order per dataset is fixed (Z, eps, E, C) so that the same seed always
    yields the same observations regardless of how replicates are scheduled.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    n = cfg.n
    beta0, gamma0 = cfg.theta0
    z = cfg.covariate.sample(rng, n)
    eps = cfg.error.sample(rng, n)
    u = z + eps
    e = rng.exponential(1.0, n)
    level = e / cfg.risk.value(beta0, z)
    t = np.asarray(cfg.baseline.cum_inv(gamma0, level), float)
    c = cfg.censor.sample(rng, n)
    if isinstance(cfg.censor, NoCensor):
        x = t
        d = t <= cfg.tau
    else:
        x = np.minimum(t, c)
        d = t <= c
    return Dataset(x, d.astype(np.int8), u, cfg.tau, z if keep_z else None)
