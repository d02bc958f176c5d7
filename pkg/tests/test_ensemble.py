import numpy as np
import pytest

from preytaxis.diagnostics import fit_exponent
from preytaxis.ensemble import (EnsembleConfig, InadmissibleInitialCondition, InitialCondition,
                                check_admissible, dt_levels, perturbation, refinement_study,
                                run_ensemble, stability_experiment, stability_sweep)
from preytaxis.galerkin import StepConfig, integrate
from preytaxis.model import ModelParams
from preytaxis.noise import NoiseModel, brownian_increments
from preytaxis.spectral import Domain, SpectralState


@pytest.fixture(scope="module")
def small():
    return EnsembleConfig(n_modes=8, step=StepConfig(1e-4, 0.02, 20), n_traj=6, block_size=4,
                          master_seed=11)


def test_initial_conditions(basis16):
    p = ModelParams()
    bump = InitialCondition()
    c1, c2 = bump.coefficients(basis16)
    u1 = c1 @ basis16.values
    x = basis16.domain.points()[:, 0]
    np.testing.assert_allclose(u1, 0.8 + 0.2 * np.cos(np.pi * x), atol=1e-14)
    check_admissible(c1, c2, basis16, p)
    rnd = InitialCondition("random", (1.0, 2.0), (0.5, 0.5), seed=3)
    r1, _ = rnd.coefficients(basis16)
    assert np.max(np.abs(r1 @ basis16.values - 1.0)) == pytest.approx(0.5)
    const = InitialCondition("constant", (0.0, 4.0), (0.3, 0.3))
    k1, k2 = const.coefficients(basis16)
    np.testing.assert_allclose(k2 @ basis16.values, 4.0)
    check_admissible(k1, k2, basis16, p)
    with pytest.raises(InadmissibleInitialCondition, match="u1"):
        check_admissible(-k2, k2, basis16, p)
    with pytest.raises(ValueError):
        InitialCondition("spiky")


def test_single_trajectory_is_integrate(small):
    cfg = small.replace(n_traj=1)
    res = run_ensemble(cfg)
    c1, c2 = cfg.initial()
    single = integrate(SpectralState(0, c1, c2), cfg.step, cfg.system(), cfg.policy())
    assert res.batch.c1.tobytes() == single.c1[None].tobytes()
    assert len(res) == 1 and res.report.n_traj == 1


def test_seeding_contract(small):
    a = run_ensemble(small)
    b = run_ensemble(small)
    assert a.batch.c1.tobytes() == b.batch.c1.tobytes()
    assert not np.array_equal(a.batch.c1[0], a.batch.c1[1])
    other = run_ensemble(small.replace(master_seed=12))
    assert not np.array_equal(a.batch.c1[0], other.batch.c1[0])
    np.testing.assert_array_equal(a.batch.indices, np.arange(6))


def test_parallel_matches_serial(small):
    serial = run_ensemble(small, jobs=1)
    par = run_ensemble(small, jobs=2)
    assert serial.batch.c1.tobytes() == par.batch.c1.tobytes()
    assert serial.batch.c2.tobytes() == par.batch.c2.tobytes()
    np.testing.assert_array_equal(serial.report.sup_l2_sq, par.report.sup_l2_sq)


def test_report_stabilizes_with_more_paths():
    cfg = EnsembleConfig(step=StepConfig(1e-4, 0.1, 50), n_traj=64)
    a = run_ensemble(cfg).report
    b = run_ensemble(cfg.replace(n_traj=128)).report
    gap = np.abs(a.sup_l2_sq - b.sup_l2_sq)
    assert np.all(gap < 3 * b.sup_l2_sq_se), (gap, b.sup_l2_sq_se)


def test_stability_zero_gap(small):
    res = stability_experiment(small, 0.0)
    assert res.lhs == 0.0 and res.bitwise_identical
    assert np.isnan(res.ratio)


def test_stability_closed_form():
    """Heat flow with additive noise: the constant-mode gap never changes, so
    the ratio is the horizon T."""
    cfg = EnsembleConfig(n_modes=8, noise=NoiseModel(shape="additive_bounded"),
                         step=StepConfig(1e-3, 0.25, 5), n_traj=4, taxis=False, reaction=False)
    for eps in (1e-2, 5e-3):
        res = stability_experiment(cfg, eps, "constant")
        assert res.rhs == pytest.approx(2 * eps**2, rel=1e-12)
        assert res.ratio == pytest.approx(0.25, rel=1e-8)
        assert not res.bitwise_identical


def test_stability_sweep_ratios(small):
    out = stability_sweep(small, [1e-2, 5e-3], "first")
    assert [r.eps_ic for r in out] == [1e-2, 5e-3]
    assert all(np.isfinite(r.ratio) and r.ratio > 0 for r in out)
    assert out[0].ratio == pytest.approx(out[1].ratio, rel=0.25)


def test_stability_inadmissible(small):
    edge = small.replace(ic=InitialCondition("constant", (2.0, 1.0), (0, 0)))
    with pytest.raises(InadmissibleInitialCondition):
        stability_experiment(edge, 0.1)
    with pytest.raises(ValueError):
        perturbation(small.basis(), "diagonal")


def test_refinement_identical_levels(small):
    tab = refinement_study(small, "dt", levels=3, factor=1)
    np.testing.assert_array_equal(tab.gaps, 0.0)
    with pytest.raises(ValueError):
        refinement_study(small, "dt", levels=2)
    with pytest.raises(ValueError):
        refinement_study(small, "space", levels=3)


def test_refinement_modes_decrease():
    cfg = EnsembleConfig(n_modes=4, step=StepConfig(1e-4, 0.05, 500), n_traj=8)
    tab = refinement_study(cfg, "modes", levels=3)
    assert tab.axis == "modes"
    np.testing.assert_allclose(tab.values, [1 / 4, 1 / 8, 1 / 16])
    assert tab.gaps[0] > tab.gaps[1] > 0


def test_refinement_dt_shares_path():
    cfg = EnsembleConfig(n_modes=4, step=StepConfig(1e-3, 0.05, 5), n_traj=8)
    tab = refinement_study(cfg, "dt", levels=3)
    assert np.all(tab.gaps > 0) and tab.gaps[0] > tab.gaps[1]
    steps = [c.step.dt for c, _ in dt_levels(cfg, 3)]
    assert steps == [1e-3, 5e-4, 2.5e-4]


def test_em_strong_order_scalar_sde():
    """One constant mode with linear noise is geometric Brownian motion; the
    Euler-Maruyama endpoint error against the exact solution on the shared
    path decays with strong order about 1/2."""
    noise = NoiseModel(n_noise_modes=4, beta0=0.5)
    base = EnsembleConfig(domain=Domain.interval(1.0, 16), n_modes=1, noise=noise,
                          step=StepConfig(1 / 16, 1.0, 16), n_traj=2000, block_size=500,
                          ic=InitialCondition("constant", (1.0, 1.0), (0, 0)),
                          taxis=False, reaction=False)
    levels = dt_levels(base, 5)
    fine = levels[-1][0].step
    W = np.array([brownian_increments(base.policy(), j, fine.n_steps, fine.dt, noise).sum(0)
                  for j in range(base.n_traj)])
    exact = np.exp(W[:, 0] @ noise.beta - np.sum(noise.beta**2) / 2)
    errs, dts = [], []
    for cfg, sub in levels:
        end = cfg.replace(step=StepConfig(cfg.step.dt, 1.0, cfg.step.n_steps))
        final = run_ensemble(end, substeps=sub).batch.c1[:, -1, 0]
        errs.append(np.sqrt(np.mean((final - exact) ** 2)))
        dts.append(cfg.step.dt)
    order = fit_exponent(dts, errs)
    assert 0.4 <= order <= 1.0, (order, errs)


def test_stability_ratio_stable_under_dt_refinement():
    cfg = EnsembleConfig(n_modes=8, step=StepConfig(2e-4, 0.1, 10), n_traj=16)
    coarse = stability_experiment(cfg, 5e-3)
    fine = stability_experiment(cfg.replace(step=cfg.step.refined(2)), 5e-3)
    band = 2 * np.hypot(coarse.ratio_se, fine.ratio_se)
    assert abs(coarse.ratio - fine.ratio) <= band, (coarse.ratio, fine.ratio, band)
