"""Fourier-domain machinery: deconvolution smoothing, norms, bandwidths.

The band-limited kernel is fixed to K*(t) = 1{|t| <= 1}.  The deconvolution
smoother evaluated at u is

    (psi * K_{n,Cn})(u) = (1/2pi) int_{-Cn}^{Cn} psi*(t) e^{-itu} / conj(feps*(t)) dt,

and the error-free smoother (psi * K_{Cn})(z) drops the characteristic-function
divisor.  All shipped error laws are symmetric, so feps* is real and even and
the conjugate-symmetric integrand folds onto the half-grid [0, Cn]:

    result = (1/pi) int_0^{Cn} [Re psi*(t) cos(tu) + Im psi*(t) sin(tu)] / feps*(t) dt.

Quadrature is composite Gauss-Legendre with panel length bounded by the
oscillation rule min(0.5, pi/(4(1+|u|))); on these analytic integrands each
8-node panel is accurate far beyond the 1e-8 refinement-invariance target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .errors import ConfigError, QuadratureError
from .families import ErrorDensity, NoiseSmoothness, SmoothnessClass

__all__ = [
    "DeconvKernelSpec",
    "half_grid",
    "deconv_smooth",
    "kernel_smooth",
    "bias_variance_norms",
    "default_bandwidth",
]

_NODES_PER_PANEL = 8
_TRUNC_PROBE_CN = 12.0  # only probe for an effective support beyond this


@dataclass(frozen=True)
class DeconvKernelSpec:
    """Bandwidth and quadrature controls for the SincBand kernel."""

    cn: float
    kernel: str = "SincBand"
    step: float | None = None  # panel length; None = oscillation rule
    max_points: int = 400_000

    def __post_init__(self):
        if not self.cn > 0:
            raise ConfigError("bandwidth cn must be positive")
        if self.kernel != "SincBand":
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.step is not None and not self.step > 0:
            raise ConfigError("quadrature step must be positive")


def half_grid(cn, u_max, step=None, max_points=400_000):
    """Gauss-Legendre nodes/weights for int_0^cn, panels sized for e^{itu} terms."""
    rule = min(0.5, math.pi / (4.0 * (1.0 + abs(u_max))))
    panel = min(step if step is not None else rule, rule)
    n_panels = max(1, int(math.ceil(cn / panel)))
    if n_panels * _NODES_PER_PANEL > max_points:
        raise QuadratureError(
            f"quadrature grid needs {n_panels * _NODES_PER_PANEL} points "
            f"(> {max_points}); widen step or lower cn"
        )
    edges = np.linspace(0.0, cn, n_panels + 1)
    x, w = leggauss(_NODES_PER_PANEL)
    mids = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    t = (mids[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t, wt


def _effective_cn(psi, cn, err=None):
    """Shrink the integration range when the integrand has died long before cn."""
    if cn <= _TRUNC_PROBE_CN:
        return cn
    probe = np.linspace(0.0, cn, 257)
    mag = np.abs(psi.fourier(probe))
    if err is not None:
        mag = mag / np.abs(np.asarray(err.cf(probe), float))
    peak = float(mag.max())
    if peak == 0.0:
        return min(cn, 1.0)
    alive = np.maximum.accumulate(mag[::-1])[::-1] > 1e-16 * peak
    idx = int(np.nonzero(alive)[0].max()) if alive.any() else 0
    return min(cn, max(probe[idx] + cn / 256.0, 1.0))


def _fold_smooth(psi, u, k: DeconvKernelSpec, err: ErrorDensity | None):
    u_arr = np.atleast_1d(np.asarray(u, float))
    if u_arr.size == 0:
        return np.zeros_like(u_arr)
    cn_eff = _effective_cn(psi, k.cn, err)
    t, wt = half_grid(cn_eff, float(np.abs(u_arr).max()), k.step, k.max_points)
    ft = psi.fourier(t)
    if err is not None:
        fe = np.asarray(err.cf(t), float)
        if np.any(fe == 0.0):
            raise QuadratureError("feps* vanishes on the integration grid")
        wr = wt * ft.real / fe
        wi = wt * ft.imag / fe
    else:
        wr = wt * ft.real
        wi = wt * ft.imag
    out = np.empty_like(u_arr, dtype=float)
    block = max(1, int(4_000_000 // max(t.size, 1)))
    for i0 in range(0, u_arr.size, block):
        uc = u_arr[i0 : i0 + block]
        tu = np.outer(t, uc)
        out[i0 : i0 + block] = (wr @ np.cos(tu) + wi @ np.sin(tu)) / math.pi
    return out


def deconv_smooth(psi, u, k: DeconvKernelSpec, err: ErrorDensity):
    """(psi * K_{n,Cn})(u): noise-corrected smoothing of psi evaluated at U-points."""
    out = _fold_smooth(psi, u, k, err)
    return float(out[0]) if np.isscalar(u) or np.ndim(u) == 0 else out


def kernel_smooth(psi, z, k: DeconvKernelSpec):
    """(psi * K_{Cn})(z): plain band-limited smoothing at Z-points."""
    out = _fold_smooth(psi, z, k, None)
    return float(out[0]) if np.isscalar(z) or np.ndim(z) == 0 else out


def bias_variance_norms(psi, k: DeconvKernelSpec, err: ErrorDensity, q: int):
    """(||psi*(K*-1)||_q^2, ||psi* K* / conj feps*||_q^2) for the SincBand kernel.

    The bias integrand lives on |t| > cn, the variance integrand on |t| <= cn;
    |psi*| is even, so both are twice their half-line integrals.  Adaptive
    quadrature here is deliberately a different scheme from the panel grid used
    by the smoothers, so the two Fourier paths cross-check each other in tests.
    """
    if q not in (1, 2):
        raise ConfigError("q must be 1 or 2")
    cn = k.cn

    def mag(t):
        return float(np.abs(psi.fourier(np.asarray(t, float))))

    bias_half, _ = quad(lambda t: mag(t) ** q, cn, np.inf, limit=400)
    var_half, _ = quad(
        lambda t: (mag(t) / abs(float(np.asarray(err.cf(t), float)))) ** q,
        0.0,
        cn,
        limit=400,
    )
    bias = (2.0 * bias_half) ** (2.0 / q)
    var = (2.0 * var_half) ** (2.0 / q)
    return bias, var


def default_bandwidth(cls: SmoothnessClass, err, n: int) -> float:
    """Rate-motivated bandwidth C_n for a weighted-risk class against a noise law.

    Ordinary-smooth noise (rho = 0): C_n = n^{1/(2 alpha + 1)}.  Super-smooth
    noise dominating the function class: the explicit log-corrected formula.
    Function class at least as smooth as the noise (r > rho, or r = rho with
    d > delta): C_n solves 2 d C^r - 2 delta C^rho = log n, which balances the
    variance inflation against 1/n.  Always floored at 1.
    """
    sm = err.smoothness if isinstance(err, ErrorDensity) else err
    if not isinstance(sm, NoiseSmoothness):
        sm = NoiseSmoothness(*sm)
    if n < 2:
        raise ConfigError("bandwidth selection needs n >= 2")
    a, d, r = cls.a, cls.d, cls.r
    alpha, delta, rho = sm.alpha, sm.delta, sm.rho
    if not (0.0 <= r <= 2.0 and 0.0 <= rho <= 2.0):
        raise ConfigError(f"smoothness exponents out of range: r={r}, rho={rho}")
    logn = math.log(n)
    if rho == 0.0:
        return float(n) ** (1.0 / (2.0 * alpha + 1.0))
    if r < rho or (r == rho and d <= delta):
        neg_part = max(-(1.0 - rho), 0.0)
        lead = logn / (2.0 * delta)
        corr = (2.0 * alpha + neg_part) / (2.0 * delta * rho) * math.log(max(lead, 1e-300))
        return max(lead - corr, 1.0) ** (1.0 / rho)

    def gap(c):
        return 2.0 * d * c**r - 2.0 * delta * c**rho - logn

    lo = 1.0
    if gap(lo) >= 0.0:
        return 1.0
    hi = 2.0
    while gap(hi) < 0.0:
        hi *= 2.0
        if hi > 1e9:
            raise QuadratureError("bandwidth bisection failed to bracket")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
