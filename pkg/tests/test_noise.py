import math
from dataclasses import replace

import numpy as np
import pytest

from preytaxis.noise import (SHAPES, NoiseModel, SeedPolicy, brownian_increments,
                             check_noise_conditions, coarsen_increments, noise_matrices,
                             project_noise, sample_increments, sigma_coefficient,
                             standard_normals, tail_bound)
from preytaxis.spectral import SpectralState, reconstruct


def test_weights():
    m = NoiseModel(n_noise_modes=4, beta0=0.5, gamma=1.0)
    np.testing.assert_allclose(m.beta, [0.5, 0.25, 0.5 / 3, 0.125])
    assert m.summable
    assert m.c_sigma == pytest.approx(0.25 * math.pi**2 / 6, rel=1e-14)
    bad = NoiseModel(gamma=0.25)
    assert not bad.summable
    assert bad.c_sigma == pytest.approx(np.sum(bad.beta**2))


def test_validation():
    with pytest.raises(ValueError, match="shape"):
        NoiseModel(shape="cubic")
    with pytest.raises(ValueError):
        NoiseModel(beta0=-1.0)
    with pytest.raises(ValueError):
        NoiseModel(n_noise_modes=0)


def test_sigma_examples():
    lin = NoiseModel(beta0=0.5)
    for k in range(lin.n_noise_modes):
        assert sigma_coefficient(1, k, 0.0, 3.0, lin) == 0.0
    add = NoiseModel(shape="additive_bounded")
    for k in range(add.n_noise_modes):
        assert sigma_coefficient(2, k, 7.0, -1.0, add) == add.beta[k]
    with pytest.raises(IndexError):
        sigma_coefficient(1, 16, 0.0, 0.0, lin)


def test_summed_squares_example():
    """0.25 * sum k^-2: the retained partial sum and the full series 0.4112."""
    m = NoiseModel(beta0=0.5, gamma=1.0)
    total = sum(sigma_coefficient(1, k, 1.0, 1.0, m) ** 2 for k in range(16))
    partial = 0.25 * math.fsum(1.0 / k**2 for k in range(1, 17))
    assert total == pytest.approx(partial, rel=1e-13)
    assert partial == pytest.approx(0.3960866, abs=1e-7)
    big = NoiseModel(n_noise_modes=100_000, beta0=0.5, gamma=1.0)
    assert np.sum(big.beta**2) == pytest.approx(0.4112, abs=5e-5)
    assert m.c_sigma == pytest.approx(0.41123, abs=5e-6)


def test_project_noise_examples(basis16, rng):
    add = NoiseModel(shape="additive_bounded")
    c1, c2 = rng.standard_normal((2, 16))
    S = project_noise(SpectralState(0, c1, c2), basis16, add)
    assert S.shape == (2, 16, 16)
    # <1, e0> = sqrt(|Omega|) = 1 on the unit interval
    np.testing.assert_allclose(S[:, :, 0], np.stack([add.beta, add.beta]), atol=1e-14)
    np.testing.assert_allclose(S[:, :, 1:], 0.0, atol=1e-14)
    S2 = noise_matrices(2 * c1, -c2, basis16, add)
    np.testing.assert_allclose(S2, S, atol=1e-14)
    lin = NoiseModel()
    Z = project_noise(SpectralState(0, np.zeros(16), np.zeros(16)), basis16, lin)
    np.testing.assert_array_equal(Z, 0.0)


def test_linear_shape_projection_is_diagonal(basis16, rng):
    lin = NoiseModel(beta0=0.3)
    c1, c2 = rng.standard_normal((2, 16))
    S = noise_matrices(c1, c2, basis16, lin)
    np.testing.assert_allclose(S[0], np.outer(lin.beta, c1), atol=1e-13)
    np.testing.assert_allclose(S[1], np.outer(lin.beta, c2), atol=1e-13)
    coupled = replace(lin, shape="coupled")
    S = noise_matrices(c1, c2, basis16, coupled)
    np.testing.assert_allclose(S[0], np.outer(lin.beta, (c1 + c2) / 2), atol=1e-13)
    u = reconstruct(c1, basis16)
    assert lin.shape_values(1, u, u).shape == u.shape


@pytest.mark.parametrize("shape", SHAPES)
def test_shipped_shapes_admissible(shape):
    rep = check_noise_conditions(NoiseModel(shape=shape), samples=10_000)
    assert rep.passed, rep
    assert rep.samples == 10_000


def test_broken_model_rejected():
    rep = check_noise_conditions(NoiseModel(gamma=0.25), samples=10_000)
    assert not rep.passed
    assert not rep.summable and not rep.tail_ok


def test_tail_bound():
    m = NoiseModel(beta0=1.0, gamma=1.0)
    # sum_{k>n} k^-2 <= 1/n
    tail = math.fsum(1.0 / k**2 for k in range(17, 200_000))
    assert tail <= tail_bound(m, 16)
    assert tail_bound(NoiseModel(gamma=0.5), 16) == np.inf


def test_increments_deterministic():
    pol = SeedPolicy(7)
    m = NoiseModel()
    a = sample_increments(1e-3, 3, 11, pol, m)
    b = sample_increments(1e-3, 3, 11, pol, m)
    np.testing.assert_array_equal(a.dW1, b.dW1)
    np.testing.assert_array_equal(a.dW2, b.dW2)
    c = sample_increments(1e-3, 4, 11, pol, m)
    assert not np.array_equal(a.dW1, c.dW1)
    d = sample_increments(1e-3, 3, 11, SeedPolicy(8), m)
    assert not np.array_equal(a.dW1, d.dW1)


def test_increments_consistent_with_blocks():
    pol = SeedPolicy(1, chunk_size=100)
    z = standard_normals(pol, 0, 350, 4)
    w = standard_normals(pol, 0, 130, 4, start_step=170)
    np.testing.assert_array_equal(z[170:300], w)
    inc = sample_increments(0.01, 0, 250, pol, NoiseModel(n_noise_modes=4))
    np.testing.assert_allclose(inc.dW1, 0.1 * z[250, 0], rtol=1e-15)


def test_increment_statistics():
    dt = 1e-3
    n = 100_000
    dW = brownian_increments(SeedPolicy(0), 0, n, dt, NoiseModel(n_noise_modes=2))
    x = dW[:, 0, 0]
    assert abs(x.mean()) <= 4 * math.sqrt(dt / n)
    assert x.var(ddof=1) == pytest.approx(dt, rel=0.05)
    # independent streams per equation and mode
    corr = np.corrcoef(dW.reshape(n, -1).T)
    assert np.max(np.abs(corr - np.eye(4))) < 4 / math.sqrt(n)


def test_coarsen():
    dW = np.arange(24.0).reshape(6, 2, 2)
    c = coarsen_increments(dW, 3)
    assert c.shape == (2, 2, 2)
    np.testing.assert_array_equal(c[0], dW[:3].sum(0))
    with pytest.raises(ValueError):
        coarsen_increments(dW, 4)
    with pytest.raises(ValueError):
        brownian_increments(SeedPolicy(), 0, 3, 0.0, NoiseModel())


@pytest.mark.parametrize("gamma", [0.75, 1.0, 2.0])
def test_truncation_consistency(gamma):
    m = NoiseModel(n_noise_modes=16, beta0=0.3, gamma=gamma)
    doubled = replace(m, n_noise_modes=32)
    change = np.sum(doubled.beta**2) - np.sum(m.beta**2)
    assert 0 < change <= tail_bound(m, 16)
