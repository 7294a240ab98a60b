"""Theoretical convergence rates phi_n^2 for the smoothed estimator.

The rate depends on how the Fourier transform of the weighted risk decays,
|psi*(u)| ~ |u|^{-a} exp(-d |u|^r), against the noise decay
|f_eps*(t)| ~ |t|^{-alpha} exp(-delta |t|^rho).  Every admissible pairing maps
to exactly one regime; the map and the closed-form rates follow the published
rate table for this estimator family, with boundary ties resolved toward the
faster cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError
from .families import ErrorDensity, NoiseSmoothness, SmoothnessClass

__all__ = [
    "RateSpec",
    "rate_exponent_A",
    "classify_rate",
    "rate_lookup",
    "parametric_rate_predicate",
]


def _neg_part(x: float) -> float:
    return max(-x, 0.0)


def rate_exponent_A(a: float, r: float, rho: float) -> float:
    """A(a, r, rho) = (-2a + 1 - r + (1 - r)_-) / rho."""
    if rho <= 0:
        raise ConfigError("A(a, r, rho) needs rho > 0")
    return (-2.0 * a + 1.0 - r + _neg_part(1.0 - r)) / rho


def _as_noise(err) -> NoiseSmoothness:
    if isinstance(err, ErrorDensity):
        return err.smoothness
    if isinstance(err, NoiseSmoothness):
        return err
    alpha, delta, rho = err
    return NoiseSmoothness(float(alpha), float(delta), float(rho))


@dataclass(frozen=True)
class RateSpec:
    """One resolved rate regime with everything needed to evaluate phi_n^2."""

    psi_class: SmoothnessClass
    err_class: NoiseSmoothness
    regime: str
    log_exponent: float  # exponent on log n
    poly_exponent: float  # exponent on n
    stretch_coef: float = 0.0  # c in exp{-c (log n / (2 delta))^{r/rho}}
    stretch_power: float = 0.0

    def phi2(self, n) -> float:
        n = float(n)
        if n < 3:
            raise ConfigError("rate evaluation needs n >= 3")
        ln = math.log(n)
        out = ln**self.log_exponent * n**self.poly_exponent
        if self.stretch_coef != 0.0:
            out *= math.exp(
                -self.stretch_coef * (ln / (2.0 * self.err_class.delta)) ** self.stretch_power
            )
        return out

    @property
    def parametric(self) -> bool:
        return self.regime.endswith("parametric") and self.log_exponent == 0.0


def classify_rate(cls: SmoothnessClass, err) -> RateSpec:
    """Assign the (psi, noise) pair to its rate regime."""
    noise = _as_noise(err)
    a, d, r = cls.a, cls.d, cls.r
    alpha, delta, rho = noise.alpha, noise.delta, noise.rho
    if min(a, alpha) < 0 or min(d, delta, r, rho) < 0:
        raise ConfigError("smoothness parameters must be nonnegative")
    if r > 0 and d <= 0:
        raise ConfigError("exponential psi decay (r > 0) needs d > 0")
    if rho > 0 and delta <= 0:
        raise ConfigError("supersmooth noise (rho > 0) needs delta > 0")

    def spec(regime, log_exp, poly_exp, sc=0.0, sp=0.0):
        return RateSpec(cls, noise, regime, log_exp, poly_exp, sc, sp)

    if rho == 0.0:
        if r == 0.0:
            if a >= alpha + 0.5:
                return spec("ordinary-sobolev-parametric", 0.0, -1.0)
            if alpha == 0.0:
                raise ConfigError(
                    "no convergence rate: ordinary-smooth exponents alpha = 0 "
                    "and a < 1/2 leave the variance unbounded"
                )
            return spec("ordinary-sobolev-slow", 0.0, -(2.0 * a - 1.0) / (2.0 * alpha))
        return spec("ordinary-smooth-parametric", 0.0, -1.0)

    # supersmooth noise
    if r == 0.0:
        return spec("supersmooth-sobolev-log", -(2.0 * a - 1.0) / rho, 0.0)
    if r < rho:
        return spec(
            "supersmooth-intermediate",
            rate_exponent_A(a, r, rho),
            0.0,
            2.0 * d,
            r / rho,
        )
    if r == rho:
        if d < delta:
            return spec(
                "matched-sub-polylog",
                rate_exponent_A(a, r, rho) + 2.0 * alpha * d / (delta * r),
                -d / delta,
            )
        if d == delta:
            if a < alpha + 0.5:
                return spec(
                    "matched-critical-logparametric",
                    (2.0 * alpha - 2.0 * a + 1.0) / r,
                    -1.0,
                )
            return spec("matched-critical-parametric", 0.0, -1.0)
        return spec("matched-super-parametric", 0.0, -1.0)
    return spec("psi-smoother-parametric", 0.0, -1.0)


def rate_lookup(cls: SmoothnessClass, err, n) -> tuple:
    """(regime tag, phi_n^2 value) for the pair at sample size n."""
    rs = classify_rate(cls, err)
    return rs.regime, rs.phi2(n)


def parametric_rate_predicate(cls: SmoothnessClass, err) -> bool:
    """True when phi_n^2 = n^{-1} exactly (no logarithmic loss)."""
    return classify_rate(cls, err).parametric
