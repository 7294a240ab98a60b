"""Monte-Carlo harness: replicate runner, summaries, and diagnostics.

run_study drives the estimators over a (n, replicate) grid with reproducible
per-replicate seed streams, records every raw estimate (failures included),
and aggregates bias/variance/MSE/coverage per estimator, sample size, and
parameter component.  rate_regression and normality_check turn a finished
study into the empirical rate and limit-law diagnostics; lemma_a1_check is
the stand-alone smoothing-identity test E[(K_deconv psi)(U) | Z] = (K psi)(Z).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .criteria import ModelSpec
from .deconv import DeconvKernelSpec, deconv_smooth, kernel_smooth
from .errors import ConfigError, HazerrError, SingularHessianError, StudyFailureError
from .estimate import (
    ThetaBox,
    build_corrections,
    default_box,
    estimate_naive,
    estimate_oracle,
    estimate_theta1,
    estimate_theta2,
    sandwich_covariance,
)
from .simulate import StudyConfig, sample_dataset

__all__ = [
    "EstimatorSpec",
    "StudySummary",
    "NormalityReport",
    "run_study",
    "rate_regression",
    "normality_check",
    "lemma_a1_check",
]

_Z95 = float(sps.norm.ppf(0.975))

_KINDS = ("oracle", "naive", "theta1", "theta2")


@dataclass(frozen=True)
class EstimatorSpec:
    """One estimator column of a study.

    kind: "oracle" | "naive" | "theta1" | "theta2".
    bandwidth: theta1 cutoff ("auto", a float cn, or a DeconvKernelSpec).
    route: theta2 correction construction ("auto", "mgf", "trig", "deconv").
    with_se: attach sandwich standard errors to converged replicates.
    """

    kind: str
    bandwidth: object = "auto"
    route: str = "auto"
    with_se: bool = True
    starts: int = 5
    label: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown estimator kind {self.kind!r}")

    @property
    def name(self) -> str:
        return self.label if self.label is not None else self.kind


@dataclass
class StudySummary:
    """Raw records plus per-(estimator, n, component) aggregate rows.

    rows: dicts with keys estimator, n, component, mean, bias, variance, mse,
    stderr, coverage, n_total, n_converged.  variance uses the population
    (ddof=0) convention so that mse = bias^2 + variance holds exactly; stderr
    is the ddof=1 Monte-Carlo standard error of the mean.  Aggregates are
    computed over converged replicates; failures stay in ``records`` and in
    the converged masks.
    """

    theta0: np.ndarray
    n_list: list
    R: int
    master_seed: int
    labels: list
    rows: list = field(default_factory=list)
    records: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)   # (label, n) -> (R, dim)
    ses: dict = field(default_factory=dict)         # (label, n) -> (R, dim)
    converged: dict = field(default_factory=dict)   # (label, n) -> (R,) bool
    covariances: dict = field(default_factory=dict)  # (label, n) -> list

    def row(self, estimator, n, component) -> dict:
        for r in self.rows:
            if (
                r["estimator"] == estimator
                and r["n"] == n
                and r["component"] == component
            ):
                return r
        raise KeyError((estimator, n, component))

    def trace_mse(self, estimator) -> dict:
        """n -> summed-over-components MSE for one estimator."""
        out = {}
        for n in self.n_list:
            out[n] = sum(
                self.row(estimator, n, j)["mse"] for j in range(self.theta0.size)
            )
        return out

    def to_jsonl(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")

    def to_csv(self, path):
        cols = (
            "estimator,n,component,mean,bias,variance,mse,stderr,coverage,"
            "n_total,n_converged"
        )
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(cols + "\n")
            for r in self.rows:
                cov = "" if r["coverage"] is None else f"{r['coverage']:.17g}"
                fh.write(
                    f"{r['estimator']},{r['n']},{r['component']},"
                    f"{r['mean']:.17g},{r['bias']:.17g},{r['variance']:.17g},"
                    f"{r['mse']:.17g},{r['stderr']:.17g},{cov},"
                    f"{r['n_total']},{r['n_converged']}\n"
                )


def _study_model(cfg: StudyConfig) -> ModelSpec:
    return ModelSpec(cfg.risk, cfg.baseline, cfg.weight, cfg.tau)


def _fit_one(spec: EstimatorSpec, dataset, model, cfg, box, corrections, seed):
    if spec.kind == "oracle":
        return estimate_oracle(dataset, model, box=box, starts=spec.starts, seed=seed)
    if spec.kind == "naive":
        return estimate_naive(dataset, model, box=box, starts=spec.starts, seed=seed)
    if spec.kind == "theta1":
        return estimate_theta1(
            dataset, model, cfg.error, k=spec.bandwidth, box=box,
            starts=spec.starts, seed=seed,
        )
    return estimate_theta2(
        dataset, model, corrections, box=box, starts=spec.starts, seed=seed
    )


def _se_provider(spec: EstimatorSpec, res, corrections):
    if spec.kind == "oracle":
        return "oracle"
    if spec.kind == "naive":
        return "naive"
    if spec.kind == "theta1":
        return res.kspec
    return corrections


def run_study(
    cfg: StudyConfig,
    estimators,
    n_list=None,
    R=200,
    master_seed=0,
    out_dir=None,
    box: ThetaBox | None = None,
    max_failure_rate=0.05,
) -> StudySummary:
    """Run R replicates of every estimator at every n; aggregate and persist.

    Replicate r at sample size n draws its dataset from the stream
    SeedSequence(master_seed, spawn_key=(n, r)), so any cell can be reproduced
    in isolation.  All estimators see the same dataset within a cell.  A
    replicate whose optimizer fails or ends on the box boundary is recorded
    with converged=False and excluded from the aggregates; if an estimator
    fails on more than ``max_failure_rate`` of the replicates at some n the
    study aborts with diagnostics.
    """
    if R < 2:
        raise ConfigError("a study needs R >= 2 replicates")
    specs = list(estimators)
    if not specs:
        raise ConfigError("no estimators given")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError(f"estimator labels must be unique, got {names}")
    n_list = [int(cfg.n)] if n_list is None else [int(n) for n in n_list]
    if not n_list:
        raise ConfigError("empty n list")

    model = _study_model(cfg)
    box = default_box(model) if box is None else box
    beta_bound = float(
        np.max(np.abs(np.concatenate([box.lower[: model.beta_dim],
                                      box.upper[: model.beta_dim]])))
    ) if model.beta_dim else 3.0
    corrections = {}
    for s in specs:
        if s.kind == "theta2":
            corrections[s.name] = build_corrections(
                cfg.risk, cfg.error, weight=cfg.weight, route=s.route,
                beta_bound=beta_bound,
            )

    theta0 = model.pack(cfg.theta0)
    dim = theta0.size
    summary = StudySummary(
        theta0=theta0, n_list=n_list, R=int(R), master_seed=int(master_seed),
        labels=names,
    )
    for key in ((nm, n) for n in n_list for nm in names):
        summary.estimates[key] = np.full((R, dim), np.nan)
        summary.ses[key] = np.full((R, dim), np.nan)
        summary.converged[key] = np.zeros(R, bool)
        summary.covariances[key] = [None] * R

    for n in n_list:
        cfg_n = cfg.replace(n=n)
        for r in range(R):
            rng = np.random.default_rng(
                np.random.SeedSequence(master_seed, spawn_key=(n, r))
            )
            dataset = sample_dataset(cfg_n, rng=rng)
            for s in specs:
                key = (s.name, n)
                theta = se = cov = None
                ok = False
                try:
                    res = _fit_one(
                        s, dataset, model, cfg_n, box,
                        corrections.get(s.name), seed=r,
                    )
                    theta = model.pack(res.theta_hat)
                    ok = bool(res.converged)
                    if ok and s.with_se:
                        cov, se = sandwich_covariance(
                            dataset, res.theta_hat, model,
                            _se_provider(s, res, corrections.get(s.name)),
                            err=cfg.error,
                        )
                except (HazerrError, np.linalg.LinAlgError):
                    ok = False
                if theta is not None:
                    summary.estimates[key][r] = theta
                if se is not None:
                    summary.ses[key][r] = se
                summary.converged[key][r] = ok
                summary.covariances[key][r] = cov
                summary.records.append(
                    {
                        "n": n,
                        "r": r,
                        "estimator": s.name,
                        "theta_hat": None if theta is None else [float(v) for v in theta],
                        "converged": ok,
                        "se": None if se is None else [float(v) for v in se],
                    }
                )
        for s in specs:
            key = (s.name, n)
            n_failed = int(R - summary.converged[key].sum())
            if n_failed > max_failure_rate * R:
                bad = np.nonzero(~summary.converged[key])[0][:10]
                raise StudyFailureError(
                    f"estimator {s.name!r} failed {n_failed}/{R} replicates at "
                    f"n={n} (limit {max_failure_rate:.0%}); failed r: {bad.tolist()}"
                )

    for n in n_list:
        for s in specs:
            key = (s.name, n)
            mask = summary.converged[key]
            est = summary.estimates[key][mask]
            ses = summary.ses[key][mask]
            rc = int(mask.sum())
            if rc == 0:
                for j in range(dim):
                    summary.rows.append(
                        {
                            "estimator": s.name, "n": n, "component": j,
                            "mean": np.nan, "bias": np.nan, "variance": np.nan,
                            "mse": np.nan, "stderr": np.nan, "coverage": None,
                            "n_total": R, "n_converged": 0,
                        }
                    )
                continue
            for j in range(dim):
                col = est[:, j]
                mean = float(col.mean())
                bias = mean - float(theta0[j])
                var = float(col.var())
                mse = float(np.mean((col - theta0[j]) ** 2))
                stderr = float(col.std(ddof=1) / math.sqrt(rc)) if rc > 1 else np.nan
                cover = None
                if s.with_se and np.isfinite(ses[:, j]).all():
                    hit = np.abs(col - theta0[j]) <= _Z95 * ses[:, j]
                    cover = float(hit.mean())
                summary.rows.append(
                    {
                        "estimator": s.name,
                        "n": n,
                        "component": j,
                        "mean": mean,
                        "bias": bias,
                        "variance": var,
                        "mse": mse,
                        "stderr": stderr,
                        "coverage": cover,
                        "n_total": R,
                        "n_converged": rc,
                    }
                )

    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        summary.to_jsonl(os.path.join(out_dir, "raw_estimates.jsonl"))
        summary.to_csv(os.path.join(out_dir, "summary.csv"))
    return summary


def rate_regression(summary, estimator=None):
    """OLS slope of log MSE against log n, with its standard error.

    Accepts a StudySummary (MSE summed over components per n for the chosen
    estimator) or a plain {n: mse} mapping.
    """
    if isinstance(summary, StudySummary):
        if estimator is None:
            if len(summary.labels) != 1:
                raise ConfigError("several estimators in study; name one")
            estimator = summary.labels[0]
        if estimator not in summary.labels:
            raise ConfigError(
                f"estimator {estimator!r} not in study (have {summary.labels})"
            )
        mse_by_n = summary.trace_mse(estimator)
    else:
        mse_by_n = {int(n): float(v) for n, v in dict(summary).items()}
    ns = sorted(mse_by_n)
    if len(ns) < 3:
        raise ConfigError("rate regression needs at least 3 distinct n values")
    y = np.array([mse_by_n[n] for n in ns], float)
    if np.any(~np.isfinite(y)) or np.any(y <= 0.0):
        raise ConfigError("MSE values must be positive and finite")
    lx = np.log(np.asarray(ns, float))
    ly = np.log(y)
    lx0 = lx - lx.mean()
    sxx = float(lx0 @ lx0)
    slope = float(lx0 @ ly) / sxx
    resid = ly - ly.mean() - slope * lx0
    dof = len(ns) - 2
    sigma2 = float(resid @ resid) / dof
    return slope, math.sqrt(sigma2 / sxx)


@dataclass
class NormalityReport:
    """Componentwise limit-law diagnostics of standardized estimates."""

    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    ks: np.ndarray
    n_used: int


def normality_check(estimates, theta0, covariances, n) -> NormalityReport:
    """Standardize sqrt(n)(theta_hat - theta0) by Sigma^{-1/2}; report moments.

    ``covariances`` is one (dim, dim) asymptotic covariance shared by all
    replicates or a length-R sequence of per-replicate matrices.  Reports
    componentwise skewness, excess kurtosis, and the Kolmogorov-Smirnov
    distance to N(0, 1).
    """
    est = np.asarray(estimates, float)
    if est.ndim != 2:
        raise ConfigError("estimates must be an (R, dim) array")
    R, dim = est.shape
    if R < 200:
        raise ConfigError(f"normality check needs R >= 200 replicates, got {R}")
    theta0 = np.asarray(theta0, float).reshape(dim)
    covs = np.asarray(covariances, float)
    if covs.ndim == 2:
        covs = np.broadcast_to(covs, (R, dim, dim))
    if covs.shape != (R, dim, dim):
        raise ConfigError("covariances must be (dim, dim) or (R, dim, dim)")

    y = np.empty_like(est)
    root_n = math.sqrt(float(n))
    for r in range(R):
        w, v = np.linalg.eigh(0.5 * (covs[r] + covs[r].T))
        if w.min() <= 1e-12 * max(w.max(), 1.0):
            raise SingularHessianError(
                f"singular covariance in replicate {r}", cond=float(w.max() / max(w.min(), 1e-300)),
            )
        inv_root = (v / np.sqrt(w)) @ v.T
        y[r] = root_n * (inv_root @ (est[r] - theta0))

    skew = np.array([float(sps.skew(y[:, j])) for j in range(dim)])
    kurt = np.array([float(sps.kurtosis(y[:, j])) for j in range(dim)])
    ks = np.array([float(sps.kstest(y[:, j], "norm").statistic) for j in range(dim)])
    return NormalityReport(skew, kurt, ks, R)


def lemma_a1_check(phi, psi, cfg: StudyConfig, n, kspec: DeconvKernelSpec | None = None):
    """Monte-Carlo check of the deconvolution smoothing identity.

    Returns the means of phi(X, Z) * (psi * K_deconv)(U) and of
    phi(X, Z) * (psi * K)(Z) over one simulated sample of size n, together
    with the paired standard error of their difference.  ``psi`` is any
    object exposing ``fourier(t)``; ``phi`` is a vectorized callable of
    (x, z).  The identity holds for every bandwidth, so ``kspec`` defaults
    to the mild cutoff cn = log n.
    """
    if n < 10_000:
        raise ConfigError("identity check needs n >= 10^4")
    if kspec is None:
        kspec = DeconvKernelSpec(cn=max(1.0, math.log(float(n))))
    dataset = sample_dataset(cfg.replace(n=int(n)))
    w = np.asarray(phi(dataset.x, dataset.z), float)
    if not np.all(np.isfinite(w)):
        raise ConfigError("phi must be finite on the study support")
    lhs_i = w * deconv_smooth(psi, dataset.u, kspec, cfg.error)
    rhs_i = w * kernel_smooth(psi, dataset.z, kspec)
    diff = lhs_i - rhs_i
    stderr = float(diff.std(ddof=1) / math.sqrt(n))
    return float(lhs_i.mean()), float(rhs_i.mean()), stderr
