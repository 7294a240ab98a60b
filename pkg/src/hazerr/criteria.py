"""Least-squares criteria for the hazard-regression model.

Every empirical criterion is an average of per-observation summands

    s_i(theta) = -2 c1_i(beta) a_i(gamma) + c2_i(beta) b_i(gamma),

with path integrals a_i = D_i eta_gamma(X_i) 1{X_i <= tau} and
b_i = int_0^{min(X_i,tau)} eta_gamma^2.  The four criteria differ only in the
covariate-side factors (c1, c2):

    oracle:  (f_beta W)(Z_i),        (f_beta^2 W)(Z_i)
    naive:   (f_beta W)(U_i),        (f_beta^2 W)(U_i)
    s1:      deconvolution-smoothed  (f_beta W) and (f_beta^2 W) at U_i
    s2:      correction functions    Phi_1(U_i), Phi_2(U_i)

The batched engine below exploits that, for constant and affine baselines,
(a_i, b_i) are short gamma-polynomial combinations of fixed per-observation
features, and the smoothed factors are quadrature sums over a fixed t-grid;
the (observation x grid) trigonometric matrices then contract once at setup
and every optimizer iteration costs O(grid), independent of n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .deconv import DeconvKernelSpec, half_grid
from .errors import ConfigError, PositivityError
from .families import Theta, WeightedRiskSpec
from .simulate import Dataset, StudyConfig, UniformCensor

__all__ = [
    "ModelSpec",
    "PathIntegrals",
    "path_integrals",
    "PointwiseEvaluator",
    "SmoothedEvaluator",
    "CorrectionEvaluator",
    "EmpiricalCriterion",
    "FourierCriterion",
    "oracle_criterion",
    "naive_criterion",
    "s1_criterion",
    "s2_criterion",
    "population_criterion",
    "population_hessian",
]


# ---------------------------------------------------------------------------
# Model bundle and parameter bookkeeping


@dataclass
class ModelSpec:
    """Risk + baseline + weight + horizon; owns the free-parameter layout."""

    risk: object
    baseline: object
    weight: object
    tau: float

    @property
    def beta_dim(self) -> int:
        return self.risk.free_dim

    @property
    def gamma_dim(self) -> int:
        return self.baseline.dim

    @property
    def dim(self) -> int:
        return self.beta_dim + self.gamma_dim

    def split(self, x):
        """Free vector -> (full beta, gamma)."""
        x = np.asarray(x, float)
        if x.shape != (self.dim,):
            raise ConfigError(f"parameter vector has length {x.size}, expected {self.dim}")
        beta_full = self.risk.free_to_full(x[: self.beta_dim])
        return beta_full, x[self.beta_dim :]

    def pack(self, theta: Theta):
        beta, gamma = theta
        return np.concatenate([self.risk.full_to_free(beta), np.asarray(gamma, float)])

    def unpack(self, x) -> Theta:
        beta_full, gamma = self.split(x)
        return Theta(beta_full, gamma)


# ---------------------------------------------------------------------------
# Path integrals


@dataclass
class PathIntegrals:
    """a_i, b_i and their gamma-derivatives, vectorized over observations."""

    a: np.ndarray
    b: np.ndarray
    a_grad: np.ndarray  # (p, n)
    b_grad: np.ndarray  # (p, n)
    a_hess: np.ndarray  # (p, p, n)
    b_hess: np.ndarray  # (p, p, n)


def _paths_arrays(x, d, baseline, gamma, tau):
    x = np.atleast_1d(np.asarray(x, float))
    d = np.atleast_1d(np.asarray(d, float))
    x_eff = np.minimum(x, tau)
    ind = (x <= tau).astype(float)
    live = d * ind
    a = live * baseline.value(gamma, x_eff)
    b = baseline.cum2(gamma, x_eff)
    a_grad = live * baseline.value_grad(gamma, x_eff)
    b_grad = baseline.cum2_grad(gamma, x_eff)
    a_hess = live * baseline.value_hess(gamma, x_eff)
    b_hess = baseline.cum2_hess(gamma, x_eff)
    return PathIntegrals(a, b, a_grad, b_grad, a_hess, b_hess)


def path_integrals(obs, baseline, gamma, tau) -> PathIntegrals:
    """Counting-process integrals for one observation or a whole dataset.

    ``obs`` is a Dataset or an (x, d) pair.  The public entry point checks
    baseline positivity on the observation window, as the model requires;
    internal optimizer trials bypass the check (the criterion remains a
    well-defined smooth function of gamma either way).
    """
    if isinstance(obs, Dataset):
        x, d = obs.x, obs.d
    else:
        x, d = obs
    x_arr = np.atleast_1d(np.asarray(x, float))
    t_end = float(np.minimum(x_arr, tau).max()) if x_arr.size else 0.0
    if not baseline.positive_on(gamma, t_end):
        raise PositivityError(
            f"{baseline.name}: not positive on [0, {t_end:g}] for gamma={gamma}"
        )
    return _paths_arrays(x, d, baseline, gamma, tau)


# ---------------------------------------------------------------------------
# Covariate-side evaluators (c1, c2 and their free-beta derivatives)


class PointwiseEvaluator:
    """c1 = (f W)(pts), c2 = (f^2 W)(pts): oracle (pts=Z) and naive (pts=U)."""

    def __init__(self, model: ModelSpec, points):
        self.risk = model.risk
        self.points = np.asarray(points, float)
        self.w = model.weight.value(self.points)

    def c1c2(self, beta_full):
        f = self.risk.value(beta_full, self.points)
        return f * self.w, f * f * self.w

    def grads(self, beta_full):
        f = self.risk.value(beta_full, self.points)
        g = self.risk.grad_free(beta_full, self.points)
        return g * self.w, 2.0 * f * g * self.w

    def hesses(self, beta_full):
        f = self.risk.value(beta_full, self.points)
        g = self.risk.grad_free(beta_full, self.points)
        h = self.risk.hess_free(beta_full, self.points)
        outer = np.einsum("in,jn->ijn", g, g)
        return h * self.w, 2.0 * (outer + f * h) * self.w


class SmoothedEvaluator:
    """Deconvolution-smoothed factors shared across optimizer iterations.

    Precomputes the t-grid and 1/feps* weights, then evaluates any weighted-
    risk derivative spec by one Fourier evaluation on the grid plus a
    trigonometric contraction against the observed U.  The (grid x n) cosine
    and sine matrices are materialized only when they fit a fixed element
    budget; beyond that the contraction streams over observation blocks.
    """

    _MAX_ELEMENTS = 4_000_000

    def __init__(self, model: ModelSpec, u, kspec: DeconvKernelSpec, err):
        self.model = model
        self.u = np.asarray(u, float)
        self.kspec = kspec
        self.err = err
        u_max = float(np.abs(self.u).max()) if self.u.size else 0.0
        self.t, wt = half_grid(kspec.cn, u_max, kspec.step, kspec.max_points)
        fe = np.asarray(err.cf(self.t), float)
        self.wt_over_fe = wt / (fe * math.pi)
        self.block = max(1, self._MAX_ELEMENTS // max(1, self.t.size))
        if self.u.size <= self.block:
            tu = np.outer(self.t, self.u)
            self.cos_tu = np.cos(tu)
            self.sin_tu = np.sin(tu)
        else:
            self.cos_tu = self.sin_tu = None

    def blocks(self):
        """Yield (slice, cos(t x u_block), sin(t x u_block)) without exceeding memory."""
        if self.cos_tu is not None:
            yield slice(0, self.u.size), self.cos_tu, self.sin_tu
            return
        for lo in range(0, self.u.size, self.block):
            sl = slice(lo, min(lo + self.block, self.u.size))
            tu = np.outer(self.t, self.u[sl])
            yield sl, np.cos(tu), np.sin(tu)

    def _spec(self, beta_full, power, dirs=()):
        spec = WeightedRiskSpec(self.model.risk, beta_full, self.model.weight, power)
        for j in dirs:
            spec = spec.with_free_dir(j)
        return spec

    def grid_weights(self, beta_full, power, dirs=()):
        """(wr, wi): quadrature weights folding psi*, 1/feps*, and 1/pi."""
        ft = self._spec(beta_full, power, dirs).fourier(self.t)
        return ft.real * self.wt_over_fe, ft.imag * self.wt_over_fe

    def _smooth(self, beta_full, power, dirs=()):
        wr, wi = self.grid_weights(beta_full, power, dirs)
        if self.cos_tu is not None:
            return wr @ self.cos_tu + wi @ self.sin_tu
        out = np.empty(self.u.size)
        for sl, c, s in self.blocks():
            out[sl] = wr @ c + wi @ s
        return out

    def c1c2(self, beta_full):
        return self._smooth(beta_full, 1), self._smooth(beta_full, 2)

    def grads(self, beta_full):
        kb = self.model.beta_dim
        g1 = np.stack([self._smooth(beta_full, 1, (j,)) for j in range(kb)]) if kb else np.zeros((0, self.u.size))
        g2 = np.stack([self._smooth(beta_full, 2, (j,)) for j in range(kb)]) if kb else np.zeros((0, self.u.size))
        return g1, g2

    def hesses(self, beta_full):
        kb = self.model.beta_dim
        n = self.u.size
        h1 = np.zeros((kb, kb, n))
        h2 = np.zeros((kb, kb, n))
        for j in range(kb):
            for l in range(j, kb):
                h1[j, l] = h1[l, j] = self._smooth(beta_full, 1, (j, l))
                h2[j, l] = h2[l, j] = self._smooth(beta_full, 2, (j, l))
        return h1, h2


class CorrectionEvaluator:
    """Adapter for correction-function pairs (Phi_1, Phi_2) evaluated at U."""

    def __init__(self, corr, u):
        self.corr = corr
        self.u = np.asarray(u, float)

    def c1c2(self, beta_full):
        return self.corr.pair_values(beta_full, self.u)

    def grads(self, beta_full):
        return self.corr.pair_grads(beta_full, self.u)

    def hesses(self, beta_full):
        return self.corr.pair_hesses(beta_full, self.u)


# ---------------------------------------------------------------------------
# Generic empirical criterion


class EmpiricalCriterion:
    """Mean of s_i(theta) with analytic first and second derivatives."""

    def __init__(self, model: ModelSpec, dataset: Dataset, evaluator):
        self.model = model
        self.dataset = dataset
        self.evaluator = evaluator
        if len(dataset) == 0:
            raise ConfigError("criterion needs a non-empty dataset")
        self._path_cache = {}

    def paths(self, gamma) -> PathIntegrals:
        key = np.asarray(gamma, float).tobytes()
        hit = self._path_cache.get(key)
        if hit is None:
            hit = _paths_arrays(
                self.dataset.x, self.dataset.d, self.model.baseline, gamma, self.model.tau
            )
            if len(self._path_cache) > 64:
                self._path_cache.clear()
            self._path_cache[key] = hit
        return hit

    def value(self, x) -> float:
        beta_full, gamma = self.model.split(x)
        pi = self.paths(gamma)
        c1, c2 = self.evaluator.c1c2(beta_full)
        return float(np.mean(-2.0 * c1 * pi.a + c2 * pi.b))

    def gradient(self, x) -> np.ndarray:
        beta_full, gamma = self.model.split(x)
        pi = self.paths(gamma)
        c1, c2 = self.evaluator.c1c2(beta_full)
        g1, g2 = self.evaluator.grads(beta_full)
        gb = np.mean(-2.0 * g1 * pi.a + g2 * pi.b, axis=1)
        gg = np.mean(-2.0 * c1 * pi.a_grad + c2 * pi.b_grad, axis=1)
        return np.concatenate([gb, gg])

    def scores(self, x) -> np.ndarray:
        """Per-observation gradients of s_i, shape (n, dim)."""
        beta_full, gamma = self.model.split(x)
        pi = self.paths(gamma)
        c1, c2 = self.evaluator.c1c2(beta_full)
        g1, g2 = self.evaluator.grads(beta_full)
        sb = -2.0 * g1 * pi.a + g2 * pi.b
        sg = -2.0 * c1 * pi.a_grad + c2 * pi.b_grad
        return np.concatenate([sb, sg]).T

    def hessian_mean(self, x) -> np.ndarray:
        """Mean of per-observation Hessians of s_i, shape (dim, dim)."""
        beta_full, gamma = self.model.split(x)
        pi = self.paths(gamma)
        kb, p = self.model.beta_dim, self.model.gamma_dim
        c1, c2 = self.evaluator.c1c2(beta_full)
        g1, g2 = self.evaluator.grads(beta_full)
        h1, h2 = self.evaluator.hesses(beta_full)
        out = np.zeros((kb + p, kb + p))
        out[:kb, :kb] = np.mean(-2.0 * h1 * pi.a + h2 * pi.b, axis=2)
        cross = np.einsum("in,jn->ijn", -2.0 * g1, pi.a_grad) + np.einsum(
            "in,jn->ijn", g2, pi.b_grad
        )
        out[:kb, kb:] = cross.mean(axis=2)
        out[kb:, :kb] = out[:kb, kb:].T
        out[kb:, kb:] = np.mean(-2.0 * c1 * pi.a_hess + c2 * pi.b_hess, axis=2)
        return out


# ---------------------------------------------------------------------------
# Batched Fourier criterion (study hot path)


class FourierCriterion:
    """Smoothed criterion whose per-iteration cost is independent of n.

    Requires a baseline with a finite path basis (constant or affine).  The
    observation sums are contracted against the trigonometric matrices once;
    afterwards a criterion value needs two Fourier evaluations on the t-grid
    and O(grid x basis) arithmetic.
    """

    def __init__(self, model: ModelSpec, dataset: Dataset, kspec: DeconvKernelSpec, err):
        self.model = model
        self.dataset = dataset
        self.smoother = SmoothedEvaluator(model, dataset.u, kspec, err)
        x_eff = np.minimum(dataset.x, model.tau)
        live = dataset.d * (dataset.x <= model.tau)
        basis = model.baseline.path_basis(x_eff, live.astype(float))
        if basis is None:
            raise ConfigError(
                f"baseline {model.baseline.name} has no finite path basis; "
                "use the generic criterion"
            )
        self.feat_a, self.feat_b, coef_fns = basis
        (self.coef_a, self.coef_a_grad, self.coef_a_hess,
         self.coef_b, self.coef_b_grad, self.coef_b_hess) = coef_fns
        # (grid, basis) contractions of the observation sums, streamed so the
        # trigonometric matrices never exceed the evaluator's element budget
        g = self.smoother.t.size
        self.MCa = np.zeros((g, self.feat_a.shape[0]))
        self.MSa = np.zeros((g, self.feat_a.shape[0]))
        self.MCb = np.zeros((g, self.feat_b.shape[0]))
        self.MSb = np.zeros((g, self.feat_b.shape[0]))
        for sl, c, s in self.smoother.blocks():
            self.MCa += c @ self.feat_a[:, sl].T
            self.MSa += s @ self.feat_a[:, sl].T
            self.MCb += c @ self.feat_b[:, sl].T
            self.MSb += s @ self.feat_b[:, sl].T
        self.n = len(dataset)
        self._generic = EmpiricalCriterion(model, dataset, self.smoother)

    def _axis_sums(self, beta_full, power, dirs=()):
        """v_k = sum_i c_i(beta) feat_k(i) for the a- or b-side features."""
        wr, wi = self.smoother.grid_weights(beta_full, power, dirs)
        if power == 1:
            return wr @ self.MCa + wi @ self.MSa
        return wr @ self.MCb + wi @ self.MSb

    def value(self, x) -> float:
        beta_full, gamma = self.model.split(x)
        va = self._axis_sums(beta_full, 1)
        vb = self._axis_sums(beta_full, 2)
        total = -2.0 * float(self.coef_a(gamma) @ va) + float(self.coef_b(gamma) @ vb)
        return total / self.n

    def gradient(self, x) -> np.ndarray:
        beta_full, gamma = self.model.split(x)
        va = self._axis_sums(beta_full, 1)
        vb = self._axis_sums(beta_full, 2)
        kb = self.model.beta_dim
        gb = np.empty(kb)
        for j in range(kb):
            gb[j] = (
                -2.0 * float(self.coef_a(gamma) @ self._axis_sums(beta_full, 1, (j,)))
                + float(self.coef_b(gamma) @ self._axis_sums(beta_full, 2, (j,)))
            ) / self.n
        gg = (-2.0 * self.coef_a_grad(gamma) @ va + self.coef_b_grad(gamma) @ vb) / self.n
        return np.concatenate([gb, gg])

    # Score/Hessian extraction falls back to the generic per-observation path
    # (needed only once per fit, at theta_hat).
    def scores(self, x) -> np.ndarray:
        return self._generic.scores(x)

    def hessian_mean(self, x) -> np.ndarray:
        return self._generic.hessian_mean(x)


# ---------------------------------------------------------------------------
# Functional criterion fronts


def oracle_criterion(theta, dataset: Dataset, model: ModelSpec) -> float:
    """Complete-data criterion using the true covariates Z."""
    if dataset.z is None:
        raise ConfigError("oracle criterion needs a dataset that retains z")
    crit = EmpiricalCriterion(model, dataset, PointwiseEvaluator(model, dataset.z))
    return crit.value(model.pack(theta if isinstance(theta, Theta) else Theta(*theta)))


def naive_criterion(theta, dataset: Dataset, model: ModelSpec) -> float:
    """Z replaced by the mismeasured U: biased under measurement error."""
    crit = EmpiricalCriterion(model, dataset, PointwiseEvaluator(model, dataset.u))
    return crit.value(model.pack(theta if isinstance(theta, Theta) else Theta(*theta)))


def s1_criterion(theta, dataset: Dataset, model: ModelSpec, k: DeconvKernelSpec, err) -> float:
    """Deconvolution-smoothed criterion."""
    crit = EmpiricalCriterion(model, dataset, SmoothedEvaluator(model, dataset.u, k, err))
    return crit.value(model.pack(theta if isinstance(theta, Theta) else Theta(*theta)))


def s2_criterion(theta, dataset: Dataset, model: ModelSpec, corr) -> float:
    """Correction-function criterion."""
    crit = EmpiricalCriterion(model, dataset, CorrectionEvaluator(corr, dataset.u))
    return crit.value(model.pack(theta if isinstance(theta, Theta) else Theta(*theta)))


# ---------------------------------------------------------------------------
# Population criterion and Hessian (quadrature oracles)


def _time_nodes(cfg: StudyConfig, n_t):
    """Composite Gauss-Legendre nodes on [0, tau], split at censor kinks."""
    edges = [0.0, cfg.tau]
    if isinstance(cfg.censor, UniformCensor) and cfg.censor.c_max < cfg.tau:
        edges.insert(1, cfg.censor.c_max)
    x, w = leggauss(max(8, n_t // (len(edges) - 1)))
    ts, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        ts.append(mid + half * x)
        ws.append(half * w)
    return np.concatenate(ts), np.concatenate(ws)


def _population_parts(cfg: StudyConfig, n_z, n_t):
    z, wz = cfg.covariate.quad_nodes(n_z)
    t, wt = _time_nodes(cfg, n_t)
    beta0, gamma0 = cfg.theta0
    f0 = cfg.risk.value(beta0, z)
    h0 = cfg.baseline.cum(gamma0, t)
    eta0 = cfg.baseline.value(gamma0, t)
    surv = np.exp(-np.outer(f0, h0)) * cfg.censor.survival(t)[None, :]
    return z, wz, t, wt, f0, eta0, surv


def population_criterion(theta, cfg: StudyConfig, n_z=96, n_t=192) -> float:
    """S_{theta0,g}(theta) by nested quadrature over the covariate and time.

    Uses E[Y(t) | Z=z] = exp(-f0(z) H0(t)) S_C(t) and the intensity
    eta0(t) f0(z) for the dN-side expectation.
    """
    if not isinstance(theta, Theta):
        theta = Theta(*theta)
    z, wz, t, wt, f0, eta0, surv = _population_parts(cfg, n_z, n_t)
    beta, gamma = theta
    w = cfg.weight.value(z)
    f = cfg.risk.value(beta, z)
    eta = cfg.baseline.value(gamma, t)
    int_y = surv @ (wt * eta * eta)  # per z: int eta^2 E[Y] dt
    int_n = surv @ (wt * eta * eta0)  # per z: int eta eta0 E[Y] dt
    term_y = float(np.sum(wz * f * f * w * int_y))
    term_n = float(np.sum(wz * f * w * f0 * int_n))
    return term_y - 2.0 * term_n


def population_hessian(cfg: StudyConfig, theta=None, n_z=96, n_t=192) -> np.ndarray:
    """Second derivative of the population criterion in the free coordinates."""
    model = ModelSpec(cfg.risk, cfg.baseline, cfg.weight, cfg.tau)
    theta = cfg.theta0 if theta is None else (theta if isinstance(theta, Theta) else Theta(*theta))
    z, wz, t, wt, f0, eta0, surv = _population_parts(cfg, n_z, n_t)
    beta, gamma = theta
    w = cfg.weight.value(z)
    f = cfg.risk.value(beta, z)
    g = cfg.risk.grad_free(beta, z)  # (kb, nz)
    h = cfg.risk.hess_free(beta, z)  # (kb, kb, nz)
    eta = cfg.baseline.value(gamma, t)
    etag = cfg.baseline.value_grad(gamma, t)  # (p, nt)
    etah = cfg.baseline.value_hess(gamma, t)  # (p, p, nt)
    kb, p = model.beta_dim, model.gamma_dim

    int_y = surv @ (wt * eta * eta)
    int_n = surv @ (wt * eta * eta0)
    int_y_g = np.stack([surv @ (wt * 2.0 * eta * etag[j]) for j in range(p)])
    int_n_g = np.stack([surv @ (wt * etag[j] * eta0) for j in range(p)])

    out = np.zeros((kb + p, kb + p))
    # beta-beta block
    d2f2 = 2.0 * (np.einsum("in,jn->ijn", g, g) + f * h)
    out[:kb, :kb] = np.einsum("n,ijn->ij", wz * w * int_y, d2f2) - 2.0 * np.einsum(
        "n,ijn->ij", wz * w * f0 * int_n, h
    )
    # beta-gamma block
    for j in range(p):
        col = np.einsum("n,in->i", wz * w * 2.0 * f * int_y_g[j], g) - 2.0 * np.einsum(
            "n,in->i", wz * w * f0 * int_n_g[j], g
        )
        out[:kb, kb + j] = col
        out[kb + j, :kb] = col
    # gamma-gamma block
    d2eta2 = 2.0 * (np.einsum("in,jn->ijn", etag, etag) + eta * etah)
    int_y_h = np.einsum("zn,ijn->ijz", surv * wt[None, :] * 1.0, d2eta2)
    int_n_h = np.einsum("zn,ijn->ijz", surv * wt[None, :] * 1.0, etah * eta0)
    out[kb:, kb:] = np.einsum("z,ijz->ij", wz * w * f * f, int_y_h) - 2.0 * np.einsum(
        "z,ijz->ij", wz * w * f * f0, int_n_h
    )
    return out
