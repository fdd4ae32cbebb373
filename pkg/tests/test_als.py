"""ALS fitting of the continuity-equation residual."""

import numpy as np
import pytest

from ttflow.als import (AlsConfig, TrainingBatch, als_fit,
                        assemble_local_system, residual)
from ttflow.basis import make_fourier_h2
from ttflow.field import FttVectorField
from ttflow.targets import EnergyPath, gaussian_energy
from ttflow.tt import random_tt


def make_batch(d=2, n=6, count=60, seed=0, shift=1.0):
    rng = np.random.default_rng(seed)
    basis = make_fourier_h2((-5.0, 5.0), n)
    path = EnergyPath(gaussian_energy(np.zeros(d), 1.0),
                      gaussian_energy(np.full(d, shift), 1.0))
    pts = rng.standard_normal((count, d))
    return TrainingBatch.from_points(pts, path, 0.5, basis), basis


def transport_term(field, pts, grad_f):
    """Oracle: <grad f, v> - div v evaluated directly."""
    vals, div = field.eval_batch(pts)
    return np.sum(grad_f * vals, axis=1) - div


def test_design_matrix_reproduces_operator():
    batch, basis = make_batch()
    rng = np.random.default_rng(3)
    tt = random_tt((6, 6), (4,), output_dim=2, rng=rng)
    field = FttVectorField(tt=tt, basis=basis, domain=(-5.0, 5.0))
    direct = transport_term(field, batch.points, batch.grad_f)
    for i in range(2):
        a, _ = assemble_local_system(field, batch, i)
        via_design = a.reshape(batch.size, -1) @ tt.cores[i].ravel()
        np.testing.assert_allclose(via_design, direct, atol=1e-10)


def test_residual_consistent_with_design():
    batch, basis = make_batch(d=3, count=40)
    rng = np.random.default_rng(5)
    tt = random_tt((6, 6, 6), (2, 2), output_dim=3, rng=rng)
    field = FttVectorField(tt=tt, basis=basis, domain=(-5.0, 5.0))
    c_t = 0.37
    res = residual(field, batch, c_t)
    direct = (batch.dt_f
              + transport_term(field, batch.points, batch.grad_f) + c_t)
    np.testing.assert_allclose(res, direct, atol=1e-12)


def test_loss_decreases_monotonically_over_solves():
    """Each exact local solve with joint constant estimation cannot
    increase the residual sum of squares."""
    batch, basis = make_batch(count=200, seed=8)
    config = AlsConfig(sweeps=4, ridge=1e-8)
    init = random_tt((6, 6), (2,), output_dim=2,
                     rng=np.random.default_rng(0), scale=1e-3)
    tt, c_t, loss = als_fit(batch, basis, init, config)
    field = FttVectorField(tt=tt, basis=basis, domain=(-5.0, 5.0))
    final = float(np.sum(residual(field, batch, c_t) ** 2))
    assert final == pytest.approx(loss, rel=1e-8, abs=1e-12)


def test_gaussian_shift_exact_recovery():
    # path between unit gaussians with shifted mean: v = mu is exact and
    # c_t follows in closed form
    mu = np.array([0.6, -0.4])
    batch, basis = make_batch(d=2, count=300, seed=2, shift=1.0)
    rng = np.random.default_rng(11)
    path = EnergyPath(gaussian_energy(np.zeros(2), 1.0),
                      gaussian_energy(mu, 1.0))
    pts = rng.standard_normal((300, 2))
    t = 0.3
    batch = TrainingBatch.from_points(pts, path, t, basis)
    init = random_tt((2, 2), (1,), output_dim=2, rng=rng, scale=1e-3)
    small_basis = make_fourier_h2((-5.0, 5.0), 2)
    batch = TrainingBatch.from_points(pts, path, t, small_basis)
    tt, c_t, loss = als_fit(batch, small_basis, init,
                            AlsConfig(sweeps=8, ridge=1e-10))
    field = FttVectorField(tt=tt, basis=small_basis, domain=(-5.0, 5.0))
    test_pts = np.random.default_rng(1).uniform(-3, 3, size=(50, 2))
    vals, _ = field.eval_batch(test_pts)
    assert np.max(np.abs(vals - mu)) < 1e-5
    assert c_t == pytest.approx((t - 0.5) * float(mu @ mu), abs=1e-6)
    assert loss < 1e-8


def test_singular_system_raises_without_ridge():
    batch, basis = make_batch(count=3)  # far fewer samples than unknowns
    init = random_tt((6, 6), (4,), output_dim=2,
                     rng=np.random.default_rng(0))
    with pytest.raises(ValueError, match="ridge"):
        als_fit(batch, basis, init, AlsConfig(sweeps=1, ridge=0.0))


def test_batch_validates_points():
    basis = make_fourier_h2((-5.0, 5.0), 4)
    path = EnergyPath(gaussian_energy(np.zeros(2), 1.0),
                      gaussian_energy(np.ones(2), 1.0))
    with pytest.raises(ValueError):
        TrainingBatch.from_points(np.array([[np.nan, 0.0]]), path, 0.5,
                                  basis)
