"""Config-driven command line: simulate, estimate, study, rates, check, report.

All run parameters live in one JSON config (see CONFIG_SCHEMA below or
``hazerr --help``); flags override the handful of scalars people sweep.
Every subcommand validates the whole config before touching the filesystem,
writes its artifacts plus a ``manifest.json`` (config hash, seed, library
version), and exits 0 on success, 2 on a configuration error, 3 on a
numerical failure.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys

import click
import numpy as np

from . import __version__
from .criteria import ModelSpec, population_criterion, population_hessian
from .deconv import DeconvKernelSpec
from .errors import ConfigError, HazerrError
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
from .families import (
    AffineBaseline,
    BumpWeight,
    CauchyError,
    CauchyRisk,
    ConstantBaseline,
    CosineRisk,
    ExponentialRisk,
    GaussianError,
    GaussianWeight,
    IndicatorRisk,
    LaplaceError,
    LaplaceKinkRisk,
    LogLinearBaseline,
    PolyGaussianWeight,
    PolygonalRisk,
    PolynomialRisk,
    ScaledCauchyRisk,
    ScaledCosineRisk,
    ScaledPolynomialRisk,
    SmoothnessClass,
    Theta,
    UnitWeight,
    WeightedRiskSpec,
)
from .mc import EstimatorSpec, lemma_a1_check, run_study
from .rates import rate_lookup
from .simulate import (
    Dataset,
    ExpCensor,
    NoCensor,
    StudyConfig,
    TruncGaussianCovariate,
    TwoPointCovariate,
    UniformCensor,
    UniformCovariate,
    sample_dataset,
)

CONFIG_SCHEMA = """\
Config layout (JSON; unknown keys anywhere are rejected):

  model:      risk / baseline / weight family blocks ({"family": NAME, params...}
              or just "NAME"), theta0 {"beta": [...], "gamma": [...]},
              optional theta_box {"lower": [...], "upper": [...]}.
              Risk families: Exponential, Polynomial(m), Cosine(m), Cauchy,
              LaplaceKink, Indicator, Polygonal(a,b), ScaledPolynomial(coeffs),
              ScaledCosine(coeffs), ScaledCauchy.
              Baselines: Constant, Affine, LogLinear.  Weights: One,
              GaussianDamp(delta), PolyGaussianDamp(delta), BumpSum(segments).
  noise:      {"family": "Gaussian"|"Laplace"|"Cauchy", params...}.
  study:      n or n_list, tau, R (studies), seed, optional covariate
              (Uniform(lo,hi) | TruncGaussian(mu,sigma,lo,hi) |
              TwoPoint(z1,z2,p); default Uniform(-1,1)) and censoring
              (None | Uniform(c_max) | Exp(rate); default None).
  estimators: list of "oracle"|"naive"|"theta1"|"theta2" or
              {"kind": ..., "bandwidth": ..., "route": ..., "with_se": ...,
               "starts": ..., "label": ...}.
  bandwidth:  {"auto": true} or {"value": cn} - default cutoff for theta1
              estimators that do not set their own.
  rates:      {"classes": [{"a","d","r"}], "noises": [{"alpha","delta","rho"}],
               "n": [...]} - only read by the `rates` subcommand.
  output:     {"dir": PATH, "formats": ["csv","jsonl"]}.
"""


# ---------------------------------------------------------------------------
# Config parsing (strict: unknown keys are errors, messages carry the path)


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _expect_map(obj, path, allowed, required=()):
    if not isinstance(obj, dict):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    for key in obj:
        if key not in allowed:
            _fail(f"{path}.{key}", "unknown key")
    for key in required:
        if key not in obj:
            _fail(path, f"missing required key {key!r}")
    return obj


def _family_block(obj, path):
    """Accept {"family": NAME, ...params} or the bare string NAME."""
    if isinstance(obj, str):
        return obj, {}
    if not isinstance(obj, dict) or "family" not in obj:
        _fail(path, 'expected a family name or {"family": ..., params}')
    params = {k: v for k, v in obj.items() if k != "family"}
    return obj["family"], params


def _build_from(registry, obj, path):
    family, params = _family_block(obj, path)
    if family not in registry:
        _fail(path, f"unknown family {family!r}; choose from {sorted(registry)}")
    ctor, allowed = registry[family]
    for key in params:
        if key not in allowed:
            _fail(f"{path}.{key}", f"unknown parameter for {family}")
    try:
        return ctor(**params)
    except HazerrError:
        raise
    except (TypeError, ValueError) as exc:
        _fail(path, str(exc))


_RISKS = {
    "Exponential": (ExponentialRisk, ()),
    "Polynomial": (PolynomialRisk, ("m",)),
    "Cosine": (CosineRisk, ("m",)),
    "Cauchy": (CauchyRisk, ()),
    "LaplaceKink": (LaplaceKinkRisk, ()),
    "Indicator": (IndicatorRisk, ()),
    "Polygonal": (PolygonalRisk, ("a", "b")),
    "ScaledPolynomial": (ScaledPolynomialRisk, ("coeffs",)),
    "ScaledCosine": (ScaledCosineRisk, ("coeffs",)),
    "ScaledCauchy": (ScaledCauchyRisk, ()),
}

_BASELINES = {
    "Constant": (ConstantBaseline, ()),
    "Affine": (AffineBaseline, ()),
    "LogLinear": (LogLinearBaseline, ()),
}

_WEIGHTS = {
    "One": (UnitWeight, ()),
    "GaussianDamp": (GaussianWeight, ("delta",)),
    "PolyGaussianDamp": (PolyGaussianWeight, ("delta",)),
    "BumpSum": (lambda segments=((-2.0, 2.0, 1.0),): BumpWeight(
        tuple(tuple(s) for s in segments)
    ), ("segments",)),
}

_NOISES = {
    "Gaussian": (GaussianError, ("sigma",)),
    "Laplace": (LaplaceError, ("b",)),
    "Cauchy": (CauchyError, ("s",)),
}

_COVARIATES = {
    "Uniform": (UniformCovariate, ("lo", "hi")),
    "TruncGaussian": (TruncGaussianCovariate, ("mu", "sigma", "lo", "hi")),
    "TwoPoint": (TwoPointCovariate, ("z1", "z2", "p")),
}

_CENSORS = {
    "None": (NoCensor, ()),
    "Uniform": (UniformCensor, ("c_max",)),
    "Exp": (ExpCensor, ("rate",)),
}


class ParsedConfig:
    """Validated config with the built model/study objects attached."""

    def __init__(self, doc):
        _expect_map(
            doc, "config",
            allowed=("model", "noise", "study", "estimators", "bandwidth",
                     "rates", "output"),
            required=("model", "noise", "study"),
        )
        model = _expect_map(
            doc["model"], "model",
            allowed=("risk", "baseline", "weight", "theta0", "theta_box"),
            required=("risk", "baseline", "theta0"),
        )
        self.risk = _build_from(_RISKS, model["risk"], "model.risk")
        self.baseline = _build_from(_BASELINES, model["baseline"], "model.baseline")
        self.weight = (
            _build_from(_WEIGHTS, model["weight"], "model.weight")
            if "weight" in model
            else UnitWeight()
        )
        t0 = _expect_map(model["theta0"], "model.theta0",
                         allowed=("beta", "gamma"), required=("beta", "gamma"))
        try:
            self.theta0 = Theta(np.asarray(t0["beta"], float),
                                np.asarray(t0["gamma"], float))
        except (TypeError, ValueError) as exc:
            _fail("model.theta0", str(exc))

        self.noise = _build_from(_NOISES, doc["noise"], "noise")

        study = _expect_map(
            doc["study"], "study",
            allowed=("n", "n_list", "tau", "covariate", "censoring", "R", "seed"),
            required=("tau",),
        )
        if ("n" in study) == ("n_list" in study):
            _fail("study", "give exactly one of n / n_list")
        self.n_list = (
            [int(study["n"])] if "n" in study else [int(v) for v in study["n_list"]]
        )
        self.tau = float(study["tau"])
        self.R = int(study.get("R", 100))
        self.seed = int(study.get("seed", 0))
        self.covariate = (
            _build_from(_COVARIATES, study["covariate"], "study.covariate")
            if "covariate" in study
            else UniformCovariate()
        )
        self.censor = (
            _build_from(_CENSORS, study["censoring"], "study.censoring")
            if "censoring" in study
            else NoCensor()
        )

        self.model = ModelSpec(self.risk, self.baseline, self.weight, self.tau)
        if "theta_box" in model:
            tb = _expect_map(model["theta_box"], "model.theta_box",
                             allowed=("lower", "upper"), required=("lower", "upper"))
            self.box = ThetaBox(np.asarray(tb["lower"], float),
                                np.asarray(tb["upper"], float))
            if self.box.dim != self.model.dim:
                _fail("model.theta_box",
                      f"dimension {self.box.dim} != model dimension {self.model.dim}")
        else:
            self.box = default_box(self.model)

        bw = doc.get("bandwidth", {"auto": True})
        _expect_map(bw, "bandwidth", allowed=("auto", "value"))
        if "value" in bw:
            self.default_bandwidth = float(bw["value"])
        elif bw.get("auto", True):
            self.default_bandwidth = "auto"
        else:
            _fail("bandwidth", 'use {"auto": true} or {"value": cn}')

        self.estimators = [
            self._estimator(e, f"estimators[{i}]")
            for i, e in enumerate(doc.get("estimators", ["oracle"]))
        ]

        self.rates = doc.get("rates")
        out = _expect_map(doc.get("output", {}), "output",
                          allowed=("dir", "formats"))
        self.out_dir = str(out.get("dir", "."))
        formats = out.get("formats", ["csv", "jsonl"])
        for f in formats:
            if f not in ("csv", "jsonl"):
                _fail("output.formats", f"unknown format {f!r}")
        self.formats = list(formats)
        self.doc = doc

    def _estimator(self, e, path) -> EstimatorSpec:
        if isinstance(e, str):
            e = {"kind": e}
        _expect_map(e, path,
                    allowed=("kind", "bandwidth", "route", "with_se", "starts",
                             "label"),
                    required=("kind",))
        kw = dict(e)
        if kw["kind"] == "theta1" and "bandwidth" not in kw:
            kw["bandwidth"] = self.default_bandwidth
        return EstimatorSpec(**kw)

    def study_config(self, n=None, seed=None) -> StudyConfig:
        return StudyConfig(
            n=int(self.n_list[0] if n is None else n),
            tau=self.tau,
            theta0=self.theta0,
            risk=self.risk,
            baseline=self.baseline,
            covariate=self.covariate,
            error=self.noise,
            censor=self.censor,
            weight=self.weight,
            seed=self.seed if seed is None else int(seed),
        )


def _load_config(path) -> ParsedConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ParsedConfig(doc)


# ---------------------------------------------------------------------------
# Manifest and guarded execution


def _write_manifest(out_dir, cfg: ParsedConfig, command, outputs, seed=None):
    digest = hashlib.sha256(
        json.dumps(cfg.doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    manifest = {
        "command": command,
        "config_sha256": digest,
        "seed": cfg.seed if seed is None else int(seed),
        "version": __version__,
        "outputs": sorted(os.path.basename(p) for p in outputs),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _guarded(fn):
    try:
        fn()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except HazerrError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(3)
    sys.exit(0)


def _out_dir(cfg, override):
    d = override if override is not None else cfg.out_dir
    os.makedirs(d, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# Commands


@click.group(help="Hazard regression with noisy covariates.\n\n" + CONFIG_SCHEMA)
@click.version_option(__version__)
def main():
    pass


_cfg_opt = click.option(
    "--config", "-c", "config_path", required=True,
    type=click.Path(dir_okay=False), help="JSON run configuration.",
)
_out_opt = click.option(
    "--out-dir", "-o", "out_override", default=None,
    type=click.Path(file_okay=False), help="Override output.dir.",
)
_seed_opt = click.option("--seed", type=int, default=None,
                         help="Override study.seed.")


@main.command(help="Draw one dataset and write it as CSV.")
@_cfg_opt
@_out_opt
@_seed_opt
@click.option("--with-z/--without-z", default=True,
              help="Keep the latent covariate column (oracle runs need it).")
def simulate(config_path, out_override, seed, with_z):
    def run():
        cfg = _load_config(config_path)
        if seed is not None:
            cfg.seed = seed
        dataset = sample_dataset(cfg.study_config())
        out = _out_dir(cfg, out_override)
        path = os.path.join(out, "dataset.csv")
        dataset.to_csv(path, with_z=with_z)
        _write_manifest(out, cfg, "simulate", [path])
        click.echo(f"wrote {path} (n={len(dataset)})")

    _guarded(run)


def _run_single_estimator(cfg: ParsedConfig, spec: EstimatorSpec, dataset):
    model = cfg.model
    if spec.kind == "oracle":
        res = estimate_oracle(dataset, model, box=cfg.box, starts=spec.starts)
        provider = "oracle"
    elif spec.kind == "naive":
        res = estimate_naive(dataset, model, box=cfg.box, starts=spec.starts)
        provider = "naive"
    elif spec.kind == "theta1":
        res = estimate_theta1(dataset, model, cfg.noise, k=spec.bandwidth,
                              box=cfg.box, starts=spec.starts)
        provider = res.kspec
    else:
        kb = model.beta_dim
        bound = float(np.max(np.abs(np.r_[cfg.box.lower[:kb], cfg.box.upper[:kb]])))
        corr = build_corrections(cfg.risk, cfg.noise, weight=cfg.weight,
                                 route=spec.route, beta_bound=bound)
        res = estimate_theta2(dataset, model, corr, box=cfg.box,
                              starts=spec.starts)
        provider = corr
    se = None
    if spec.with_se and res.converged:
        _, se = sandwich_covariance(dataset, res.theta_hat, model, provider,
                                    err=cfg.noise)
    return res, se


@main.command(help="Estimate one dataset; writes an estimate JSON.")
@_cfg_opt
@_out_opt
@click.option("--data", "data_path", required=True,
              type=click.Path(dir_okay=False, exists=False),
              help="Dataset CSV produced by `simulate`.")
@click.option("--estimator", "which", default=None,
              help="Label/kind of the configured estimator to run "
                   "(default: the first one).")
def estimate(config_path, out_override, data_path, which):
    def run():
        cfg = _load_config(config_path)
        specs = cfg.estimators
        if which is not None:
            specs = [s for s in cfg.estimators if s.name == which]
            if not specs:
                raise ConfigError(
                    f"estimators: no estimator labelled {which!r} in config"
                )
        spec = specs[0]
        try:
            dataset = Dataset.from_csv(data_path, tau=cfg.tau)
        except OSError as exc:
            raise ConfigError(f"cannot read dataset {data_path}: {exc}") from exc
        res, se = _run_single_estimator(cfg, spec, dataset)
        beta, gamma = res.theta_hat
        out = _out_dir(cfg, out_override)
        path = os.path.join(out, f"estimate_{spec.name}.json")
        payload = {
            "estimator": spec.name,
            "n": len(dataset),
            "theta_hat": {"beta": list(map(float, beta)),
                          "gamma": list(map(float, gamma))},
            "criterion_value": res.criterion_value,
            "converged": bool(res.converged),
            "iterations": int(res.iterations),
            "restarts_used": int(res.restarts_used),
            "se": None if se is None else list(map(float, se)),
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        _write_manifest(out, cfg, "estimate", [path])
        click.echo(f"wrote {path} (converged={payload['converged']})")

    _guarded(run)


@main.command(help="Run the configured Monte-Carlo study.")
@_cfg_opt
@_out_opt
@_seed_opt
@click.option("--replicates", "-R", "R", type=int, default=None,
              help="Override study.R.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Upper bound on worker parallelism (the current runner "
                   "executes replicates sequentially).")
def study(config_path, out_override, seed, R, threads):
    def run():
        cfg = _load_config(config_path)
        if threads < 1:
            raise ConfigError("threads: must be >= 1")
        master = cfg.seed if seed is None else seed
        summary = run_study(
            cfg.study_config(),
            cfg.estimators,
            n_list=cfg.n_list,
            R=cfg.R if R is None else R,
            master_seed=master,
            box=cfg.box,
        )
        out = _out_dir(cfg, out_override)
        outputs = []
        if "jsonl" in cfg.formats:
            p = os.path.join(out, "raw_estimates.jsonl")
            summary.to_jsonl(p)
            outputs.append(p)
        if "csv" in cfg.formats:
            p = os.path.join(out, "summary.csv")
            summary.to_csv(p)
            outputs.append(p)
        _write_manifest(out, cfg, "study", outputs, seed=master)
        click.echo(
            f"study done: {len(summary.records)} records, "
            f"files in {out}"
        )

    _guarded(run)


@main.command(help="Evaluate the rate table on a grid of smoothness classes.")
@_cfg_opt
@_out_opt
def rates(config_path, out_override):
    def run():
        cfg = _load_config(config_path)
        if cfg.rates is None:
            raise ConfigError("rates: section missing from config")
        sec = _expect_map(cfg.rates, "rates",
                          allowed=("classes", "noises", "n"),
                          required=("classes", "noises", "n"))
        classes = [
            SmoothnessClass(**_expect_map(c, f"rates.classes[{i}]",
                                          allowed=("a", "d", "r"),
                                          required=("a", "d", "r")))
            for i, c in enumerate(sec["classes"])
        ]
        noises = [
            _expect_map(m, f"rates.noises[{i}]",
                        allowed=("alpha", "delta", "rho"),
                        required=("alpha", "delta", "rho"))
            for i, m in enumerate(sec["noises"])
        ]
        ns = [int(v) for v in sec["n"]]
        out = _out_dir(cfg, out_override)
        path = os.path.join(out, "rates.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("a,d,r,alpha,delta,rho,regime,n,phi2\n")
            for c in classes:
                for m in noises:
                    noise = (m["alpha"], m["delta"], m["rho"])
                    for n in ns:
                        regime, val = rate_lookup(c, noise, n)
                        fh.write(
                            f"{c.a:g},{c.d:g},{c.r:g},{m['alpha']:g},"
                            f"{m['delta']:g},{m['rho']:g},{regime},{n},"
                            f"{val:.17g}\n"
                        )
        _write_manifest(out, cfg, "rates", [path])
        click.echo(f"wrote {path}")

    _guarded(run)


@main.command(help="Run the smoothing-identity and population-argmin checks.")
@_cfg_opt
@_out_opt
@click.option("--n", "n_check", type=int, default=20_000, show_default=True,
              help="Sample size for the identity check.")
@click.option("--grid", "grid_pts", type=int, default=11, show_default=True,
              help="Points per axis of the population argmin scan.")
def check(config_path, out_override, n_check, grid_pts):
    def run():
        cfg = _load_config(config_path)
        study_cfg = cfg.study_config()
        beta0, _ = cfg.theta0
        psi = WeightedRiskSpec(cfg.risk, beta0, cfg.weight, power=1)
        kspec = (
            DeconvKernelSpec(cn=cfg.default_bandwidth)
            if cfg.default_bandwidth != "auto"
            else None
        )
        lhs, rhs, stderr = lemma_a1_check(
            lambda x, z: np.ones_like(x), psi, study_cfg, n_check, kspec
        )
        identity_ok = abs(lhs - rhs) <= 3.0 * max(stderr, 1e-300)

        x0 = cfg.model.pack(cfg.theta0)
        lo = np.maximum(cfg.box.lower, x0 - 0.5)
        hi = np.minimum(cfg.box.upper, x0 + 0.5)
        axes = [np.linspace(lo[j], hi[j], grid_pts) for j in range(x0.size)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, x0.size)
        vals = np.array([population_criterion(p, study_cfg) for p in pts])
        val0 = population_criterion(x0, study_cfg)
        at_truth = np.all(np.isclose(pts, x0, atol=1e-12), axis=1)
        best_other = float(vals[~at_truth].min())
        best_pt = pts[int(vals.argmin())]
        margin = best_other - val0
        hess = population_hessian(study_cfg)
        min_eig = float(np.linalg.eigvalsh(hess).min())
        argmin_ok = margin > 0.0 and min_eig > 0.0

        out = _out_dir(cfg, out_override)
        path = os.path.join(out, "check.json")
        payload = {
            "identity": {"lhs": lhs, "rhs": rhs, "stderr": stderr,
                         "pass": bool(identity_ok)},
            "population_argmin": {
                "argmin": [float(v) for v in best_pt],
                "theta0": [float(v) for v in x0],
                "margin_vs_theta0": float(margin),
                "hessian_min_eigenvalue": min_eig,
                "pass": bool(argmin_ok),
            },
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        _write_manifest(out, cfg, "check", [path])
        click.echo(f"identity: {'pass' if identity_ok else 'FAIL'}  "
                   f"argmin: {'pass' if argmin_ok else 'FAIL'}  ({path})")
        if not (identity_ok and argmin_ok):
            raise HazerrError("check failed; see check.json")

    _guarded(run)


@main.command(help="Render figures for a finished study directory.")
@click.option("--study-dir", "-d", required=True,
              type=click.Path(file_okay=False),
              help="Directory holding summary.csv and raw_estimates.jsonl.")
@_out_opt
def report(study_dir, out_override):
    def run():
        from .plots import render_report

        try:
            written = render_report(study_dir, out_override)
        except OSError as exc:
            raise ConfigError(f"cannot read study outputs: {exc}") from exc
        for p in written:
            click.echo(f"wrote {p}")

    _guarded(run)


if __name__ == "__main__":
    main()
