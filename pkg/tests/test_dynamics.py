"""Particle transport, Langevin refreshes, resampling."""

import numpy as np
import pytest

from ttflow.basis import make_fourier_h2
from ttflow.dynamics import (ParticleEnsemble, langevin_step, ode_solve,
                             resampling_step)
from ttflow.field import FttVectorField
from ttflow.targets import gaussian_energy
from ttflow.tt import TensorTrain


def univariate_field(target_fn, basis, fit_interval):
    """Project a scalar function onto the feature basis by least squares
    over the region the test particles occupy."""
    grid = np.linspace(*fit_interval, 400)
    vals, _ = basis.eval_features_batch(grid)
    coef, *_ = np.linalg.lstsq(vals, target_fn(grid), rcond=None)
    return TensorTrain([np.reshape(coef, (1, basis.size, 1))])


def test_log_density_tracking_linear_field():
    """v(x) = x over time tau contracts log-density by exactly d * tau."""
    basis = make_fourier_h2((-5.0, 5.0), 24)
    tt = univariate_field(lambda x: x, basis, (-0.8, 0.8))
    field = FttVectorField(tt=tt, basis=basis, domain=(-5.0, 5.0))
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.5, 0.5, size=(40, 1))
    ens = ParticleEnsemble(points=pts, log_density=np.zeros(40))
    tau = 0.2
    out = ode_solve(ens, field, 0.0, tau, substeps=8)
    np.testing.assert_allclose(out.log_density, -1.0 * tau * np.ones(40),
                               atol=1e-6)
    np.testing.assert_allclose(out.points, pts * np.exp(tau), atol=1e-4)


def test_ode_freezes_escaping_particles():
    basis = make_fourier_h2((-1.0, 1.0), 16)
    # constant drift large enough to leave the 10x safety box within t=1
    tt = univariate_field(lambda x: np.full_like(x, 60.0), basis,
                          (-1.0, 1.0))
    field = FttVectorField(tt=tt, basis=basis, domain=(-1.0, 1.0))
    pts = np.array([[0.9], [1e-4]])
    ens = ParticleEnsemble(points=pts, log_density=np.zeros(2))
    out = ode_solve(ens, field, 0.0, 1.0, substeps=50)
    assert out.num_frozen >= 1
    assert np.all(np.isfinite(out.points))


def test_langevin_reaches_gaussian_stationarity():
    energy = gaussian_energy(np.array([1.0, -1.0]), 0.5)
    rng = np.random.default_rng(9)
    pts = rng.standard_normal((4000, 2)) * 0.5 + np.array([1.0, -1.0])
    ens = ParticleEnsemble(points=pts, log_density=np.zeros(4000))
    out = langevin_step(ens, energy, h=1e-3, steps=200, rng=rng)
    np.testing.assert_allclose(out.points.mean(axis=0), [1.0, -1.0],
                               atol=0.05)
    np.testing.assert_allclose(out.points.var(axis=0), [0.25, 0.25],
                               atol=0.02)
    # tracked log-density is deliberately left untouched
    np.testing.assert_array_equal(out.log_density, ens.log_density)


def test_langevin_rejects_nonfinite_gradient():
    bad = gaussian_energy(np.zeros(1), 1.0)
    bad = type(bad)(dim=1, value=bad.value,
                    grad=lambda x: np.full_like(x, np.nan))
    ens = ParticleEnsemble(points=np.zeros((3, 1)),
                           log_density=np.zeros(3))
    with pytest.raises(FloatingPointError):
        langevin_step(ens, bad, h=1e-2, steps=1,
                      rng=np.random.default_rng(0))


def test_resampling_concentrates_on_high_weight_points():
    pts = np.array([[0.0], [10.0]])
    ens = ParticleEnsemble(points=np.repeat(pts, 50, axis=0),
                           log_density=np.zeros(100))
    target = lambda x: np.where(x[:, 0] > 5, 0.0, -50.0)
    out, ess = resampling_step(ens, target, np.random.default_rng(0))
    assert np.all(out.points[:, 0] == 10.0)
    assert ess == pytest.approx(50.0, rel=1e-6)


def test_resampling_sets_log_density_to_target():
    rng = np.random.default_rng(4)
    pts = rng.standard_normal((200, 2))
    ens = ParticleEnsemble(points=pts, log_density=np.zeros(200))
    target = lambda x: -0.5 * np.sum(x ** 2, axis=1)
    out, _ = resampling_step(ens, target, rng)
    np.testing.assert_allclose(out.log_density, target(out.points),
                               atol=1e-12)


def test_resampling_skips_above_ess_floor():
    pts = np.random.default_rng(1).standard_normal((100, 1))
    logq = -0.5 * pts[:, 0] ** 2
    ens = ParticleEnsemble(points=pts, log_density=logq)
    target = lambda x: -0.5 * x[:, 0] ** 2  # perfect weights, ESS = N
    out, ess = resampling_step(ens, target, np.random.default_rng(2),
                               ess_floor=0.5)
    np.testing.assert_array_equal(out.points, ens.points)
    assert ess == pytest.approx(100.0)


def test_systematic_resampling_deterministic_given_rng():
    rng_a = np.random.default_rng(7)
    rng_b = np.random.default_rng(7)
    pts = np.random.default_rng(3).standard_normal((50, 2))
    ens = ParticleEnsemble(points=pts, log_density=np.zeros(50))
    target = lambda x: -np.sum(x ** 2, axis=1)
    out_a, _ = resampling_step(ens, target, rng_a, scheme="systematic")
    out_b, _ = resampling_step(ens, target, rng_b, scheme="systematic")
    np.testing.assert_array_equal(out_a.points, out_b.points)


def test_resampling_raises_on_degenerate_weights():
    ens = ParticleEnsemble(points=np.zeros((10, 1)),
                           log_density=np.zeros(10))
    target = lambda x: np.full(x.shape[0], -np.inf)
    with pytest.raises(FloatingPointError):
        resampling_step(ens, target, np.random.default_rng(0))
