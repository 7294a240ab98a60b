"""Study harness: reproducibility, aggregates, rate fits, diagnostics."""

import csv
import math

import numpy as np
import pytest

from hazerr.deconv import DeconvKernelSpec
from hazerr.errors import ConfigError, SingularHessianError, StudyFailureError
from hazerr.estimate import ThetaBox
from hazerr.families import (
    ConstantBaseline,
    ExponentialRisk,
    GaussianError,
    GaussianWeight,
    LaplaceError,
    PolynomialRisk,
    Theta,
    UnitWeight,
)
from hazerr.mc import (
    EstimatorSpec,
    lemma_a1_check,
    normality_check,
    rate_regression,
    run_study,
)
from hazerr.simulate import NoCensor, StudyConfig, UniformCovariate


def cox_config(**kw):
    base = dict(
        n=300,
        tau=3.0,
        theta0=Theta([1.0], [1.0]),
        risk=ExponentialRisk(),
        baseline=ConstantBaseline(),
        covariate=UniformCovariate(-1.0, 1.0),
        error=GaussianError(0.5),
        censor=NoCensor(),
        weight=UnitWeight(),
        seed=0,
    )
    base.update(kw)
    return StudyConfig(**base)


SMOKE_BOX = ThetaBox([-2.0, 0.02], [2.0, 10.0])


def smoke_study(tmp_path=None, master_seed=5):
    cfg = cox_config(weight=GaussianWeight(0.35))
    ests = [EstimatorSpec("oracle", with_se=False),
            EstimatorSpec("theta2", route="deconv", with_se=False)]
    out = None if tmp_path is None else str(tmp_path / "study")
    # generous failure budget: two replicates at n=300 are a bookkeeping
    # smoke test, not an efficiency benchmark
    return run_study(cfg, ests, R=2, master_seed=master_seed, out_dir=out,
                     box=SMOKE_BOX, max_failure_rate=0.6)


def test_smoke_study_shapes_and_aggregates(tmp_path):
    summ = smoke_study(tmp_path)
    assert summ.labels == ["oracle", "theta2"]
    assert summ.n_list == [300]
    for lab in summ.labels:
        est = summ.estimates[(lab, 300)]
        assert est.shape == (2, 2)
        assert summ.converged[(lab, 300)].all()
        for j in range(2):
            r = summ.row(lab, 300, j)
            # mse = bias^2 + variance holds exactly with the ddof=0 convention
            assert r["mse"] == pytest.approx(r["bias"] ** 2 + r["variance"],
                                             abs=1e-15)
            assert r["mean"] == pytest.approx(est[:, j].mean())
    # every replicate appears in the raw records
    assert len(summ.records) == 2 * 2
    assert (tmp_path / "study" / "raw_estimates.jsonl").exists()


def test_summary_csv_round_trip(tmp_path):
    summ = smoke_study(tmp_path)
    with open(tmp_path / "study" / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(summ.rows)
    for got in rows:
        want = summ.row(got["estimator"], int(got["n"]), int(got["component"]))
        assert float(got["mse"]) == want["mse"]
        assert float(got["bias"]) == want["bias"]
        assert int(got["n_converged"]) == want["n_converged"]


def test_study_reruns_bit_identical():
    a = smoke_study(master_seed=9)
    b = smoke_study(master_seed=9)
    c = smoke_study(master_seed=10)
    for key, est in a.estimates.items():
        np.testing.assert_array_equal(est, b.estimates[key])
        assert not np.array_equal(est, c.estimates[key])


def test_estimators_share_replicate_datasets():
    # oracle and naive see the same draw, so their gamma estimates correlate
    cfg = cox_config(n=400)
    summ = run_study(cfg, [EstimatorSpec("oracle", with_se=False),
                           EstimatorSpec("naive", with_se=False)],
                     R=8, master_seed=3, box=SMOKE_BOX)
    go = summ.estimates[("oracle", 400)][:, 1]
    gn = summ.estimates[("naive", 400)][:, 1]
    assert np.corrcoef(go, gn)[0, 1] > 0.5


def test_study_aborts_on_mass_failures():
    # a box that excludes the truth pins every fit to the boundary
    bad_box = ThetaBox([-2.0, 3.0], [2.0, 10.0])
    with pytest.raises(StudyFailureError):
        run_study(cox_config(), [EstimatorSpec("oracle", with_se=False)],
                  R=4, master_seed=0, box=bad_box, max_failure_rate=0.25)


def test_rate_regression_recovers_exact_slopes():
    ns = [500, 1000, 2000, 4000]
    slope, se = rate_regression({n: 3.7 / n for n in ns})
    assert slope == pytest.approx(-1.0, abs=1e-12)
    assert se == pytest.approx(0.0, abs=1e-10)
    slope, _ = rate_regression({n: 0.2 * n ** -0.8 for n in ns})
    assert slope == pytest.approx(-0.8, abs=1e-12)
    with pytest.raises(ConfigError):
        rate_regression({500: 1.0, 1000: 0.5})
    with pytest.raises(ConfigError):
        rate_regression({500: 1.0, 1000: 0.5, 2000: -0.1})


def test_rate_regression_from_study_summary():
    cfg = cox_config(n=200)
    summ = run_study(cfg, [EstimatorSpec("oracle", with_se=False)],
                     n_list=[200, 400, 800], R=30, master_seed=12, box=SMOKE_BOX)
    slope, se = rate_regression(summ)
    assert -1.6 < slope < -0.4
    with pytest.raises(ConfigError):
        rate_regression(summ, estimator="nope")


# ---------------------------------------------------------------------------
# normality diagnostics


def test_normality_check_null_calibration():
    rng = np.random.default_rng(0)
    sigma = np.array([[2.0, 0.6], [0.6, 1.0]])
    n = 500
    L = np.linalg.cholesky(sigma / n)
    est = np.array([1.0, 2.0]) + rng.standard_normal((400, 2)) @ L.T
    rep = normality_check(est, np.array([1.0, 2.0]), sigma, n)
    assert np.all(np.abs(rep.skewness) < 0.3)
    assert np.all(np.abs(rep.excess_kurtosis) < 0.6)
    assert np.all(rep.ks < 0.08)
    # a covariance off by 4x shows up immediately in the KS distance
    rep_bad = normality_check(est, np.array([1.0, 2.0]), 4.0 * sigma, n)
    assert np.all(rep_bad.ks > 0.15)


def test_normality_check_rejections():
    est = np.zeros((250, 2))
    good = np.eye(2)
    with pytest.raises(ConfigError):
        normality_check(est[:100], np.zeros(2), good, 100)
    with pytest.raises(ConfigError):
        normality_check(est[:, 0], np.zeros(1), np.eye(1), 100)
    with pytest.raises(SingularHessianError):
        normality_check(est, np.zeros(2), np.zeros((2, 2)), 100)


# ---------------------------------------------------------------------------
# smoothing identity


class _GaussPsi:
    def fourier(self, t):
        return np.exp(-0.5 * np.asarray(t, float) ** 2)


def test_lemma_identity_within_paired_stderr():
    cfg = cox_config(n=100_000, error=LaplaceError(0.5),
                     weight=GaussianWeight(0.5))
    phi = lambda x, z: np.minimum(x, 3.0)
    lhs, rhs, se = lemma_a1_check(phi, _GaussPsi(), cfg, 100_000)
    assert abs(lhs - rhs) <= 3.0 * se
    assert se < 0.05


def test_lemma_identity_holds_for_any_bandwidth():
    cfg = cox_config(n=20_000)
    phi = lambda x, z: np.ones_like(x)
    for cn in (2.0, 6.0):
        lhs, rhs, se = lemma_a1_check(phi, _GaussPsi(), cfg, 20_000,
                                      kspec=DeconvKernelSpec(cn=cn))
        assert abs(lhs - rhs) <= 3.0 * se


def test_lemma_check_rejections():
    cfg = cox_config()
    with pytest.raises(ConfigError):
        lemma_a1_check(lambda x, z: x, _GaussPsi(), cfg, 5_000)
    with pytest.raises(ConfigError):
        lemma_a1_check(lambda x, z: np.full_like(x, np.inf), _GaussPsi(), cfg,
                       10_000)


def test_estimator_spec_validation():
    with pytest.raises(ConfigError):
        run_study(cox_config(), [EstimatorSpec("wrong")], R=2, master_seed=0)
    with pytest.raises(ConfigError):
        run_study(cox_config(), [], R=2, master_seed=0)
    with pytest.raises(ConfigError):
        run_study(cox_config(), [EstimatorSpec("oracle")], R=0, master_seed=0)
    # duplicate labels would silently overwrite each other's records
    with pytest.raises(ConfigError):
        run_study(cox_config(), [EstimatorSpec("oracle"), EstimatorSpec("oracle")],
                  R=2, master_seed=0)


def test_oracle_unbiased_naive_attenuated_benchmark():
    cfg = cox_config(n=2000)
    summ = run_study(cfg, [EstimatorSpec("oracle", with_se=False),
                           EstimatorSpec("naive", with_se=False)],
                     R=100, master_seed=31, box=SMOKE_BOX)
    for j in (0, 1):
        r = summ.row("oracle", 2000, j)
        assert abs(r["bias"]) <= 3.0 * r["stderr"]
    # measurement error sigma=0.5 drags both components far off truth
    for j in (0, 1):
        r = summ.row("naive", 2000, j)
        assert abs(r["bias"]) > 5.0 * r["stderr"]


def test_theta2_trace_mse_decays_at_root_n_rate():
    cfg = cox_config(error=GaussianError(0.3), weight=GaussianWeight(0.1))
    summ = run_study(cfg, [EstimatorSpec("theta2", route="deconv", with_se=False)],
                     n_list=[500, 1000, 2000, 4000], R=80, master_seed=23,
                     box=SMOKE_BOX)
    slope, se = rate_regression(summ)
    assert -1.3 < slope < -0.7
    assert se < 0.2
    mse = summ.trace_mse("theta2")
    assert mse[4000] < mse[500]


def test_naive_mse_does_not_shrink_with_n():
    cfg = cox_config(n=2000)
    summ = run_study(cfg, [EstimatorSpec("naive", with_se=False)],
                     n_list=[500, 1000, 2000, 4000], R=60, master_seed=17,
                     box=SMOKE_BOX)
    mse_beta = {n: summ.row("naive", n, 0)["mse"] for n in (500, 1000, 2000, 4000)}
    slope, se = rate_regression(mse_beta)
    # squared attenuation bias dominates: the log-log slope hugs zero
    assert -0.3 < slope < 0.15
    assert mse_beta[4000] > 0.1


def test_lemma_check_zero_psi_is_exact():
    class _ZeroPsi:
        def __call__(self, u):
            return np.zeros_like(np.asarray(u, dtype=float))

        def fourier(self, t):
            t = np.asarray(t, dtype=float)
            return np.zeros_like(t, dtype=complex)

    cfg = cox_config(n=20_000)
    phi = lambda x, z: np.minimum(x, 2.0)
    lhs, rhs, se = lemma_a1_check(phi, _ZeroPsi(), cfg, 20_000)
    assert lhs == pytest.approx(0.0, abs=1e-12)
    assert rhs == pytest.approx(0.0, abs=1e-12)
