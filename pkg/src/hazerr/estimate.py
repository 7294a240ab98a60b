"""Estimators for the mismeasured-covariate hazard model.

Four fitting paths share one optimizer front end:

    oracle  - complete-data criterion (needs Z)
    naive   - Z replaced by U, no correction (biased benchmark)
    theta1  - deconvolution-smoothed criterion with a spectral cutoff
    theta2  - correction-function criterion (exact unbiased covariate factors)

Correction functions come in three constructions.  The moment route divides
exp(beta u) by the noise mgf; the trigonometric route divides each cosine
frequency by the noise characteristic function; the spectral route evaluates
the full-line deconvolution integral of (f_beta^q W), truncated where the
integrand has provably decayed.  All satisfy E[Phi_q(U) | Z] = (f_beta^q W)(Z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize
from scipy.stats import qmc

from .criteria import (
    CorrectionEvaluator,
    EmpiricalCriterion,
    FourierCriterion,
    ModelSpec,
    PointwiseEvaluator,
    SmoothedEvaluator,
)
from .deconv import DeconvKernelSpec, default_bandwidth
from .errors import (
    ConfigError,
    NonIntegrableError,
    OptimizationError,
    SingularHessianError,
    UnsupportedPairError,
)
from .families import (
    CosineRisk,
    ExponentialRisk,
    IndicatorRisk,
    LaplaceKinkRisk,
    Theta,
    UnitWeight,
    WeightedRiskSpec,
    classify_weighted_risk,
)
from .simulate import Dataset

__all__ = [
    "ThetaBox",
    "default_box",
    "EstimateResult",
    "minimize",
    "CorrectionFunctions",
    "MgfCorrections",
    "TrigCorrections",
    "DeconvCorrections",
    "build_corrections",
    "estimate_oracle",
    "estimate_naive",
    "estimate_theta1",
    "estimate_theta2",
    "sandwich_covariance",
]


# ---------------------------------------------------------------------------
# Parameter box and optimizer


@dataclass(frozen=True)
class ThetaBox:
    """Rectangular constraint set in the free coordinates (beta_free, gamma)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigError("box bounds must be 1-d arrays of equal length")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ConfigError("box bounds must be finite")
        if not np.all(lo < hi):
            raise ConfigError("box is empty: need lower < upper componentwise")

    @property
    def dim(self) -> int:
        return self.lower.size

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, float), self.lower, self.upper)

    def contains(self, x, atol=1e-9) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def on_boundary(self, x, rtol=1e-4) -> bool:
        """True when any coordinate sits within rtol of the box width of a face."""
        x = np.asarray(x, float)
        atol = rtol * (self.upper - self.lower)
        return bool(np.any(x - self.lower <= atol) or np.any(self.upper - x <= atol))


_GAMMA_BOXES = {
    "Constant": ([0.02], [10.0]),
    "AffinePositive": ([0.02, -4.0], [10.0, 10.0]),
    "LogLinear": ([-3.0, -2.0], [3.0, 2.0]),
}

_BETA_CAPS = {
    # families whose relative risk degenerates outside these limits
    "Cauchy1": (-3.0, 0.95),
    "LaplaceKink": (-3.0, 0.95),
    "Indicator": (-0.95, 0.95),
}


def default_box(model: ModelSpec, beta_bounds=None, gamma_bounds=None) -> ThetaBox:
    """Compact box around the usual simulation truths.

    ``beta_bounds``/``gamma_bounds`` override the per-family defaults; each is
    a (lower, upper) pair of sequences in the free coordinates.
    """
    kb = model.beta_dim
    if beta_bounds is not None:
        blo, bhi = (np.asarray(b, float) for b in beta_bounds)
    else:
        lo, hi = _BETA_CAPS.get(model.risk.name.split("(")[0], (-3.0, 3.0))
        blo, bhi = np.full(kb, lo), np.full(kb, hi)
    if gamma_bounds is not None:
        glo, ghi = (np.asarray(g, float) for g in gamma_bounds)
    else:
        name = model.baseline.name
        if name not in _GAMMA_BOXES:
            raise ConfigError(f"no default gamma box for baseline {name}")
        glo, ghi = (np.asarray(g, float) for g in _GAMMA_BOXES[name])
    return ThetaBox(np.concatenate([blo, glo]), np.concatenate([bhi, ghi]))


@dataclass
class EstimateResult:
    theta_hat: Theta
    criterion_value: float
    iterations: int
    restarts_used: int
    converged: bool
    covariance: np.ndarray | None = None
    standard_errors: np.ndarray | None = None
    x: np.ndarray = field(default=None, repr=False)


def minimize(criterion, box: ThetaBox, starts: int = 5, seed: int = 0, model: ModelSpec | None = None) -> EstimateResult:
    """Multistart Nelder-Mead over the box; returns the best local minimum.

    Start points are ``starts`` Latin-hypercube draws plus the box center.
    Non-finite criterion values at a start disqualify that start; if every
    start is disqualified or every run ends NaN, OptimizationError is raised.

    A minimizer pinned to a box face is reported with ``converged=False``:
    the smooth estimating-equation theory needs an interior stationary point,
    and a boundary fit means the empirical criterion kept decreasing into the
    constraint, which happens on noisy replicates and must be flagged rather
    than silently treated as a regular estimate.
    """
    fn = criterion.value if hasattr(criterion, "value") else criterion
    if starts < 1:
        raise ConfigError("need at least one start")
    sampler = qmc.LatinHypercube(d=box.dim, seed=int(seed))
    pts = box.lower + sampler.random(starts) * (box.upper - box.lower)
    start_pts = [box.center()] + [pts[i] for i in range(starts)]

    best = None
    total_restarts = 0
    for x0 in start_pts:
        v0 = fn(np.asarray(x0, float))
        if not np.isfinite(v0):
            continue
        total_restarts += 1
        res = _scipy_minimize(
            fn,
            x0,
            method="Nelder-Mead",
            bounds=list(zip(box.lower, box.upper)),
            options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 4000, "maxfev": 8000},
        )
        if not np.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise OptimizationError("all optimizer starts were non-finite")
    xh = box.clip(best.x)
    theta = model.unpack(xh) if model is not None else Theta(xh.copy(), np.empty(0))
    return EstimateResult(
        theta_hat=theta,
        criterion_value=float(fn(xh)),
        iterations=int(best.nit),
        restarts_used=total_restarts,
        converged=bool(best.success) and not box.on_boundary(xh),
        x=xh,
    )


# ---------------------------------------------------------------------------
# Correction functions


class CorrectionFunctions:
    """Evaluator pair (Phi_1, Phi_2) with free-beta derivatives to order 2.

    Subclasses implement ``pair_values/pair_grads/pair_hesses`` against the
    observed U; each satisfies E[Phi_q(U) | Z] = (f_beta^q W)(Z).
    """

    tag = "?"

    def pair_values(self, beta_full, u):
        raise NotImplementedError

    def pair_grads(self, beta_full, u):
        raise NotImplementedError

    def pair_hesses(self, beta_full, u):
        raise NotImplementedError


class MgfCorrections(CorrectionFunctions):
    """Exponential risk, unit weight: Phi_q(u) = exp(q beta u) / E exp(q beta eps)."""

    tag = "mgf"

    def __init__(self, err, beta_bound=3.0):
        if err.mgf_radius <= 0.0:
            raise UnsupportedPairError(f"{err.name} has no moment generating function")
        if 2.0 * beta_bound >= err.mgf_radius:
            raise UnsupportedPairError(
                f"{err.name}: mgf radius {err.mgf_radius:g} does not cover 2|beta| "
                f"on the box (|beta| <= {beta_bound:g})"
            )
        self.err = err

    def _cgf_derivs(self, s):
        """(psi(s), psi'(s)) for psi = (log mgf)'."""
        err = self.err
        if hasattr(err, "sigma"):  # Gaussian
            return err.sigma**2 * s, err.sigma**2
        if hasattr(err, "b"):  # Laplace
            b2 = err.b**2
            den = 1.0 - b2 * s * s
            return 2.0 * b2 * s / den, 2.0 * b2 * (1.0 + b2 * s * s) / den**2
        h = 1e-5 * (1.0 + abs(s))
        lm = lambda v: math.log(float(err.mgf(v)))
        psi = (lm(s + h) - lm(s - h)) / (2 * h)
        psi2 = (lm(s + h) - 2 * lm(s) + lm(s - h)) / (h * h)
        return psi, psi2

    def _one(self, q, beta, u):
        s = q * beta
        m = float(self.err.mgf(s))
        phi = np.exp(s * u) / m
        psi, dpsi = self._cgf_derivs(s)
        d1 = phi * (q * u - q * psi)
        d2 = phi * ((q * u - q * psi) ** 2 - q * q * dpsi)
        return phi, d1, d2

    def pair_values(self, beta_full, u):
        b = float(np.atleast_1d(beta_full)[0])
        return self._one(1, b, u)[0], self._one(2, b, u)[0]

    def pair_grads(self, beta_full, u):
        b = float(np.atleast_1d(beta_full)[0])
        return self._one(1, b, u)[1][None], self._one(2, b, u)[1][None]

    def pair_hesses(self, beta_full, u):
        b = float(np.atleast_1d(beta_full)[0])
        return self._one(1, b, u)[2][None, None], self._one(2, b, u)[2][None, None]


class TrigCorrections(CorrectionFunctions):
    """Cosine-series risk, unit weight: each frequency divided by f_eps*(l).

    chat_l(u) = Re[exp(i l u) / f_eps*(l)] satisfies E[chat_l(U)|Z] = cos(l Z);
    chat_0 = 1.  Phi_1 is the beta-weighted sum over the series frequencies,
    Phi_2 uses the product-to-sum expansion of f_beta^2.
    """

    tag = "trig"

    def __init__(self, risk: CosineRisk, err):
        self.risk = risk
        self.err = err
        self.m = risk.m
        self._cache = {}

    def _chat(self, u):
        key = (u.shape, u.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            ls = np.arange(0, 2 * self.m + 1)
            cf = np.asarray(self.err.cf(ls.astype(float)), complex)
            if np.any(np.abs(cf) < 1e-300):
                raise UnsupportedPairError(
                    f"{self.err.name}: characteristic function vanishes at an "
                    "integer frequency"
                )
            hit = np.real(np.exp(1j * np.outer(ls, u)) / cf[:, None])
            hit[0] = 1.0
            self._cache = {key: hit}
        return hit

    def _full_derivs(self, beta_full, u):
        beta = self.risk.check_beta(beta_full)
        c = self._chat(np.asarray(u, float))
        m = self.m
        phi1 = np.tensordot(beta, c[1 : m + 1], axes=1)
        g1 = c[1 : m + 1]
        # pairwise frequency mixing for the squared series
        h2 = np.empty((m, m, u.size))
        for j in range(1, m + 1):
            for k in range(1, m + 1):
                h2[j - 1, k - 1] = c[j + k] + c[abs(j - k)]
        g2 = np.tensordot(beta, h2, axes=1)
        phi2 = 0.5 * np.tensordot(beta, g2, axes=1)
        return phi1, phi2, g1, g2, h2

    def pair_values(self, beta_full, u):
        phi1, phi2, *_ = self._full_derivs(beta_full, u)
        return phi1, phi2

    def pair_grads(self, beta_full, u):
        _, _, g1, g2, _ = self._full_derivs(beta_full, u)
        jac = self.risk.free_jacobian()
        return np.tensordot(jac.T, g1, axes=1), np.tensordot(jac.T, g2, axes=1)

    def pair_hesses(self, beta_full, u):
        *_, h2 = self._full_derivs(beta_full, u)
        jac = self.risk.free_jacobian()
        kb = jac.shape[1]
        h1 = np.zeros((kb, kb, np.asarray(u).size))
        hf = np.einsum("aj,abn,bk->jkn", jac, h2, jac)
        return h1, hf


class DeconvCorrections(CorrectionFunctions):
    """Full-line deconvolution integrals of (f_beta^q W), any damped family.

    Phi_q(u) inverts the Fourier quotient psi_q*(t)/f_eps*(t) over the whole
    line, truncated at a horizon T where the quotient (including all the
    derivative integrands needed downstream) has decayed below 1e-12 of its
    peak for every beta in the box.  Exists only when the quotient is
    integrable; the constructor refuses pairs where it is not.
    """

    tag = "deconv"

    def __init__(self, risk, err, weight, beta_bound=3.0, step=None):
        self.risk = risk
        self.err = err
        self.weight = weight
        self.horizon = _correction_horizon(risk, err, weight, beta_bound)
        self.kspec = DeconvKernelSpec(cn=self.horizon, step=step)
        self._cache = {}

    def _smoother(self, u):
        key = (u.shape, u.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            model = ModelSpec(self.risk, None, self.weight, 0.0)
            hit = SmoothedEvaluator(model, u, self.kspec, self.err)
            self._cache = {key: hit}
        return hit

    def pair_values(self, beta_full, u):
        return self._smoother(np.asarray(u, float)).c1c2(beta_full)

    def pair_grads(self, beta_full, u):
        return self._smoother(np.asarray(u, float)).grads(beta_full)

    def pair_hesses(self, beta_full, u):
        return self._smoother(np.asarray(u, float)).hesses(beta_full)


def _probe_betas(risk, beta_bound):
    kb = risk.free_dim
    probes = [np.zeros(kb)]
    for j in range(kb):
        for s in (-beta_bound, beta_bound):
            v = np.zeros(kb)
            v[j] = s
            probes.append(v)
    return [risk.free_to_full(p) for p in probes]


def _correction_horizon(risk, err, weight, beta_bound, tol=1e-12, t_max=512.0):
    """Smallest dyadic T with |psi_q*/f_eps*| < tol x peak beyond T.

    Probes every integrand the criterion machinery will request (both powers,
    all first and second free-beta directions) at coordinate-extreme betas.
    Raises UnsupportedPairError when the quotient grows or never decays.
    """
    specs = []
    kb = risk.free_dim
    for beta in _probe_betas(risk, beta_bound):
        for power in (1, 2):
            base = WeightedRiskSpec(risk, beta, weight, power)
            specs.append(base)
            for j in range(kb):
                specs.append(base.with_free_dir(j))
                for l in range(j, kb):
                    specs.append(base.with_free_dir(j).with_free_dir(l))

    def band_max(lo, hi):
        t = np.linspace(lo, hi, 65)
        fe = np.abs(np.asarray(err.cf(t), float))
        out = 0.0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for s in specs:
                vals = np.abs(s.fourier(t)) / fe
                vals = np.where(np.isnan(vals), np.inf, vals)
                out = max(out, float(np.max(vals)))
        return out

    try:
        peak = band_max(0.0, 8.0)
        T = 8.0
        prev = peak
        while True:
            tail = band_max(T / 2.0, T)
            peak = max(peak, tail)
            if tail < tol * peak:
                return T
            if T >= 64.0 and tail > prev:
                raise UnsupportedPairError(
                    f"deconvolution corrections do not exist for {risk.name} with "
                    f"{weight.name} weight under {err.name}: Fourier quotient grows"
                )
            if T >= t_max:
                raise UnsupportedPairError(
                    f"deconvolution corrections for {risk.name}/{weight.name}/"
                    f"{err.name}: quotient has not decayed by t = {t_max:g}"
                )
            prev = tail
            T *= 2.0
    except NonIntegrableError as exc:
        raise UnsupportedPairError(str(exc)) from exc


def build_corrections(risk, err, weight=None, route="auto", beta_bound=3.0) -> CorrectionFunctions:
    """Select a correction construction for the (risk, noise, weight) triple.

    ``route`` forces a construction: "mgf" (exponential risk, unit weight),
    "trig" (cosine risk, unit weight), or "deconv" (any damped pair).
    """
    weight = UnitWeight() if weight is None else weight
    unit = isinstance(weight, UnitWeight)
    if route == "auto":
        if isinstance(risk, ExponentialRisk) and unit:
            route = "mgf"
        elif isinstance(risk, CosineRisk) and unit:
            route = "trig"
        else:
            route = "deconv"
    if route == "mgf":
        if not (isinstance(risk, ExponentialRisk) and unit):
            raise UnsupportedPairError("mgf corrections need exponential risk and unit weight")
        return MgfCorrections(err, beta_bound)
    if route == "trig":
        if not (isinstance(risk, CosineRisk) and unit):
            raise UnsupportedPairError("trig corrections need cosine risk and unit weight")
        return TrigCorrections(risk, err)
    if route == "deconv":
        if unit and isinstance(risk, (ExponentialRisk, IndicatorRisk, LaplaceKinkRisk)):
            raise UnsupportedPairError(
                f"{risk.name} with unit weight has no integrable Fourier quotient; "
                "use a damping weight"
            )
        return DeconvCorrections(risk, err, weight, beta_bound)
    raise ConfigError(f"unknown correction route {route!r}")


# ---------------------------------------------------------------------------
# Fitting fronts


def _fit(model, dataset, evaluator_or_crit, box, starts, seed):
    if isinstance(evaluator_or_crit, (EmpiricalCriterion, FourierCriterion)):
        crit = evaluator_or_crit
    else:
        crit = EmpiricalCriterion(model, dataset, evaluator_or_crit)
    box = default_box(model) if box is None else box
    if box.dim != model.dim:
        raise ConfigError(f"box dimension {box.dim} != model dimension {model.dim}")
    res = minimize(crit, box, starts=starts, seed=seed, model=model)
    res._criterion = crit
    return res


def estimate_oracle(dataset: Dataset, model: ModelSpec, box=None, starts=5, seed=0) -> EstimateResult:
    if dataset.z is None:
        raise ConfigError("oracle estimation needs a dataset that retains z")
    return _fit(model, dataset, PointwiseEvaluator(model, dataset.z), box, starts, seed)


def estimate_naive(dataset: Dataset, model: ModelSpec, box=None, starts=5, seed=0) -> EstimateResult:
    return _fit(model, dataset, PointwiseEvaluator(model, dataset.u), box, starts, seed)


def _smoothed_criterion(model, dataset, kspec, err):
    try:
        return FourierCriterion(model, dataset, kspec, err)
    except ConfigError:
        return EmpiricalCriterion(model, dataset, SmoothedEvaluator(model, dataset.u, kspec, err))


def estimate_theta1(dataset: Dataset, model: ModelSpec, err, k="auto", box=None, starts=5, seed=0) -> EstimateResult:
    """Spectral-cutoff estimator; k="auto" derives the cutoff from the classes."""
    if k == "auto":
        cls = classify_weighted_risk(model.risk, model.weight)
        cn = default_bandwidth(cls, err, len(dataset))
        k = DeconvKernelSpec(cn=cn)
    elif not isinstance(k, DeconvKernelSpec):
        k = DeconvKernelSpec(cn=float(k))
    res = _fit(model, dataset, _smoothed_criterion(model, dataset, k, err), box, starts, seed)
    res.kspec = k
    return res


def estimate_theta2(dataset: Dataset, model: ModelSpec, corrections: CorrectionFunctions, box=None, starts=5, seed=0) -> EstimateResult:
    """Correction-function estimator."""
    if isinstance(corrections, DeconvCorrections):
        crit = _smoothed_criterion(model, dataset, corrections.kspec, corrections.err)
    else:
        crit = EmpiricalCriterion(model, dataset, CorrectionEvaluator(corrections, dataset.u))
    return _fit(model, dataset, crit, box, starts, seed)


# ---------------------------------------------------------------------------
# Sandwich covariance


def _provider_evaluator(model, dataset, provider, err=None):
    if isinstance(provider, DeconvCorrections):
        return SmoothedEvaluator(model, dataset.u, provider.kspec, provider.err)
    if isinstance(provider, CorrectionFunctions):
        return CorrectionEvaluator(provider, dataset.u)
    if isinstance(provider, DeconvKernelSpec):
        if err is None:
            raise ConfigError("a deconvolution provider needs the error density")
        return SmoothedEvaluator(model, dataset.u, provider, err)
    if provider == "oracle":
        if dataset.z is None:
            raise ConfigError("oracle covariance needs a dataset that retains z")
        return PointwiseEvaluator(model, dataset.z)
    if provider == "naive":
        return PointwiseEvaluator(model, dataset.u)
    raise ConfigError(f"unrecognized score provider {provider!r}")


def sandwich_covariance(dataset: Dataset, theta_hat, model: ModelSpec, provider, err=None, cond_limit=1e12):
    """Plug-in covariance H^{-1} S0 H^{-1} of the criterion minimizer.

    H is the mean per-observation Hessian of the criterion summand and S0 the
    mean outer product of per-observation gradients, both at theta_hat (free
    coordinates).  Returns (Sigma, se) with se_j = sqrt(Sigma_jj / n).
    """
    crit = EmpiricalCriterion(model, dataset, _provider_evaluator(model, dataset, provider, err))
    x = model.pack(theta_hat if isinstance(theta_hat, Theta) else Theta(*theta_hat))
    H = crit.hessian_mean(x)
    cond = float(np.linalg.cond(H))
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularHessianError(cond)
    s = crit.scores(x)
    s0 = (s.T @ s) / len(dataset)
    hinv_s = np.linalg.solve(H, s0)
    sigma = np.linalg.solve(H, hinv_s.T).T
    sigma = 0.5 * (sigma + sigma.T)
    se = np.sqrt(np.maximum(np.diag(sigma), 0.0) / len(dataset))
    return sigma, se
