"""Gaussian-process distance emulator: kernel, likelihood, fit, prediction."""

import numpy as np
import pytest
from scipy import stats

import gravtsir as g
from gravtsir.emulator import (DistanceEmulator, GpHyper, fit_emulator,
                               gp_covariance, gp_log_likelihood)
from gravtsir.errors import NumericalError


def _dense_pieces(x, y, hyper):
    """Trend GLS fit and residual precision from the dense covariance."""
    n = x.shape[0]
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    cov = hyper.sigma2 * np.exp(-hyper.phi ** 2 * d2) + hyper.nugget * np.eye(n)
    f = np.hstack([np.ones((n, 1)), x])
    cov_inv = np.linalg.inv(cov)
    beta = np.linalg.solve(f.T @ cov_inv @ f, f.T @ cov_inv @ y)
    return f, cov, cov_inv, beta


def test_hyper_validation():
    with pytest.raises(ValueError):
        GpHyper(sigma2=0.0, nugget=0.1, phi=1.0)
    with pytest.raises(ValueError):
        GpHyper(sigma2=1.0, nugget=-0.1, phi=1.0)
    with pytest.raises(ValueError):
        GpHyper(sigma2=1.0, nugget=0.1, phi=0.0)


def test_covariance_hand_values():
    hyper = GpHyper(sigma2=2.0, nugget=0.5, phi=1.0)
    a = np.array([0.0, 0.0, 0.0, 0.0])
    b = np.array([1.0, 0.0, 0.0, 0.0])
    assert gp_covariance(a, b, hyper) == pytest.approx(
        0.7357588823428847, rel=1e-15)  # 2 * exp(-1)
    assert gp_covariance(a, a, hyper) == 2.0  # distinct indices: no nugget
    assert gp_covariance(a, a, hyper, same_index=True) == 2.5
    assert gp_covariance(a, b, hyper, same_index=True) == 2.5


def test_covariance_decays_with_distance_and_range():
    hyper_short = GpHyper(1.0, 0.0, phi=4.0)
    hyper_long = GpHyper(1.0, 0.0, phi=0.25)
    a = np.zeros(4)
    b = np.full(4, 0.5)
    assert gp_covariance(a, b, hyper_short) < gp_covariance(a, b, hyper_long)


def test_log_likelihood_matches_multivariate_normal_oracle():
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 2, (7, 4))
    y = rng.uniform(0, 3, 7)
    hyper = GpHyper(sigma2=1.3, nugget=0.2, phi=0.8)
    f, cov, _, beta = _dense_pieces(x, y, hyper)
    got = gp_log_likelihood(x, y, hyper, beta)
    want = stats.multivariate_normal.logpdf(y, mean=f @ beta, cov=cov)
    assert got == pytest.approx(want, rel=1e-10)


def test_log_likelihood_raises_on_singular_covariance():
    x = np.zeros((6, 4))  # six identical points
    y = np.arange(6.0)
    hyper = GpHyper(sigma2=1.0, nugget=0.0, phi=1.0)
    with pytest.raises(NumericalError):
        gp_log_likelihood(x, y, hyper, np.zeros(5))


def test_predictions_match_dense_conditional_normal_oracle():
    rng = np.random.default_rng(12)
    x = rng.uniform(0, 2, (10, 4))
    y = rng.uniform(0.5, 3.0, 10)
    hyper = GpHyper(sigma2=0.8, nugget=0.02, phi=0.9)
    em = DistanceEmulator(hyper=hyper, standardize=False, jitter=0.0)
    em.fit(x, y)
    f, cov, cov_inv, beta = _dense_pieces(x, y, hyper)
    resid = y - f @ beta
    for point in rng.uniform(0, 2, (6, 4)):
        kvec = 0.8 * np.exp(-0.81 * ((x - point) ** 2).sum(-1))
        mean_oracle = np.concatenate([[1.0], point]) @ beta + kvec @ cov_inv @ resid
        var_oracle = 0.8 + 0.02 - kvec @ cov_inv @ kvec
        mean, var = em.predictive(point)
        assert mean == pytest.approx(mean_oracle, abs=1e-8)
        assert var == pytest.approx(var_oracle, abs=1e-8)


def test_zero_nugget_fit_interpolates_training_data():
    rng = np.random.default_rng(12)
    x = rng.uniform(0, 2, (10, 4))
    y = rng.uniform(0.5, 3.0, 10)
    em = DistanceEmulator(hyper=GpHyper(0.8, 0.0, 0.9), standardize=False,
                          jitter=0.0).fit(x, y)
    assert np.abs(em.predict(x) - y).max() < 1e-8
    # and the predictive variance collapses at a training point
    _, var = em.predictive(x[3])
    assert abs(var) < 1e-8


def test_duplicated_design_points_average_through_the_gls_trend():
    rng = np.random.default_rng(9)
    x = rng.uniform(0, 2, (8, 4))
    y = rng.uniform(1, 3, 8)
    x2, y2 = np.vstack([x, x]), np.concatenate([y, y])
    hyper = GpHyper(sigma2=1.0, nugget=0.05, phi=1.2)
    em = DistanceEmulator(hyper=hyper, standardize=False, jitter=0.0)
    em.fit(x2, y2)
    _, _, _, beta = _dense_pieces(x2, y2, hyper)
    assert np.abs(em.trend_ - beta).max() < 1e-8


def test_fit_recovers_known_hyperparameters_from_a_gp_draw():
    rng = np.random.default_rng(5)
    x = rng.uniform(0.0, 1.0, (200, 4))
    truth = GpHyper(sigma2=1.0, nugget=0.01, phi=2.0)
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    cov = truth.sigma2 * np.exp(-truth.phi ** 2 * d2)
    cov += truth.nugget * np.eye(200)
    slope = np.array([1.0, 0.5, -0.3, 0.2, 0.1])
    mean = slope[0] + x @ slope[1:]
    y = mean + np.linalg.cholesky(cov) @ rng.standard_normal(200)
    em = DistanceEmulator(standardize=False, random_state=0).fit(x, y)
    assert 0.5 <= em.hyper_.sigma2 / truth.sigma2 <= 1.5
    assert 0.5 <= em.hyper_.nugget / truth.nugget <= 1.5
    assert 0.5 <= em.hyper_.phi / truth.phi <= 1.5
    # standardized leave-one-out residuals look standard normal
    loo = em.loo_residuals()
    assert abs(loo.mean()) < 0.2
    assert 0.5 < loo.var() < 2.0
    assert np.isfinite(em.loglik_)
    assert len(em.optimizer_diagnostics_) >= 1  # one record per start


def test_fit_is_deterministic_given_random_state():
    rng = np.random.default_rng(14)
    x = rng.uniform(0, 2, (30, 4))
    y = np.sin(x[:, 0] * 3) + 0.1 * rng.normal(size=30)
    a = DistanceEmulator(random_state=3).fit(x, y)
    b = DistanceEmulator(random_state=3).fit(x, y)
    assert a.hyper_ == b.hyper_
    assert np.array_equal(a.trend_, b.trend_)


def test_fit_emulator_consumes_a_training_set():
    rng = np.random.default_rng(15)
    grid = g.make_grid({"theta_prime": 4, "rho": 3},
                       pinned={"tau1": 1.0, "tau2": 1.0})
    training = g.TrainingSet(points=grid.points,
                             distances=rng.uniform(0.5, 2.0, 12),
                             kind="zero_proportion", replicates=1,
                             root_seed=5, observed_hash="abc", pinned={})
    em = fit_emulator(training, n_starts=2, random_state=1)
    assert em.X_train_.shape == (12, 4)
    assert np.array_equal(em.y_train_, training.distances)
    assert isinstance(em.training_hash(), str) and em.training_hash()
    mean, var = em.predictive(grid.points[0])
    assert np.isfinite(mean) and var > 0.0


def test_save_load_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(12)
    x = rng.uniform(0, 2, (10, 4))
    y = rng.uniform(0.5, 3.0, 10)
    em = DistanceEmulator(n_starts=2, random_state=0).fit(x, y)
    path = tmp_path / "emulator.txt"
    em.save(path)
    loaded = DistanceEmulator.load(path)
    assert loaded.hyper_ == em.hyper_
    assert np.array_equal(loaded.X_train_, em.X_train_)
    point = np.array([0.3, 1.1, 0.4, 1.9])
    assert loaded.predictive(point) == em.predictive(point)
    assert loaded.training_hash() == em.training_hash()


def test_load_rejects_corrupted_files(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not an emulator file\n")
    with pytest.raises((ValueError, g.SchemaError)):
        DistanceEmulator.load(path)
