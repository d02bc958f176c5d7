"""The acceptance checks, shared by the test suite and ``preytaxis verify``.

Each check returns a :class:`CheckResult` with the measured quantities and
a verdict.  Thresholds are fixed here; only the problem scale comes from
:class:`VerifySettings` and the base :class:`EnsembleConfig`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import spectral as sp
from .diagnostics import fit_exponent, positivity_scan, translation_scan, weak_form_residual
from .ensemble import (EnsembleConfig, InitialCondition, dt_levels, run_ensemble,
                       stability_sweep)
from .galerkin import (GalerkinSystem, StepConfig, check_coercivity, check_monotonicity,
                       integrate)
from .noise import SHAPES, NoiseModel, check_noise_conditions

TITLES = {
    1: "nonnegativity",
    2: "predator L-infinity ceiling",
    3: "energy estimates uniform in n",
    4: "moment bound uniform in n",
    5: "time-translation exponent",
    6: "coercivity and local monotonicity",
    7: "pathwise stability",
    8: "weak-form residual",
    9: "noise admissibility",
    10: "exactness micro-oracles",
}


@dataclass(frozen=True)
class VerifySettings:
    """Problem sizes used by the checks (thresholds are not configurable)."""

    n_sweep: tuple = (8, 16, 32)
    dt_levels: int = 3
    moment_q: float = 4.0
    translation_lags: tuple = (4, 8, 16, 32)
    structural_modes: int = 8
    structural_samples: int = 1000
    structural_radius: float = 4.0
    structural_seeds: tuple = (0, 1)
    stability_eps: tuple = (1e-2, 5e-3, 2.5e-3)
    stability_direction: str = "constant"
    residual_traj: int = 8
    residual_tests: int = 5
    replay_strides: tuple = (2, 4, 8)
    noise_samples: int = 10_000
    logistic_u0: float = 0.5

    def __post_init__(self):
        for name in ("n_sweep", "translation_lags", "structural_seeds", "stability_eps",
                     "replay_strides"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


@dataclass
class CheckResult:
    number: int
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)

    @property
    def title(self):
        return TITLES[self.number]

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} [{verdict}] {self.title}: {self.detail}"


def _rel_spread(values):
    v = np.abs(np.asarray(values, dtype=float))
    if np.all(v == 0):
        return 0.0
    return float((v.max() - v.min()) / v.min()) if v.min() > 0 else np.inf


class Verifier:
    """Runs the checks on one base configuration, sharing expensive runs."""

    def __init__(self, cfg=None, settings=None, jobs=1):
        self.cfg = cfg or EnsembleConfig()
        self.settings = settings or VerifySettings()
        self.jobs = jobs
        self._cache = {}

    # shared runs ----------------------------------------------------------
    def base_run(self):
        """Base ensemble recorded at every step, with increments."""
        if "base" not in self._cache:
            cfg = self.cfg.replace(step=replace(self.cfg.step, record_every=1))
            self._cache["base"] = run_ensemble(cfg, self.jobs, record_increments=True,
                                               q=self.settings.moment_q)
        return self._cache["base"]

    def dt_sweep(self):
        """Final-time positivity reports over the dt levels (shared noise)."""
        if "dt" not in self._cache:
            out = []
            for cfg, sub in dt_levels(self.cfg, self.settings.dt_levels):
                end = cfg.replace(step=replace(cfg.step, record_every=cfg.step.n_steps))
                run = run_ensemble(end, self.jobs, substeps=sub)
                out.append((cfg.step.dt, positivity_scan(run.batch)))
            self._cache["dt"] = out
        return self._cache["dt"]

    def n_sweep(self):
        if "n" not in self._cache:
            out = []
            for n in self.settings.n_sweep:
                cfg = self.cfg.replace(n_modes=n)
                out.append((n, run_ensemble(cfg, self.jobs, q=self.settings.moment_q).report))
            self._cache["n"] = out
        return self._cache["n"]

    # criteria -------------------------------------------------------------
    def _bound_check(self, number, key, equations, bound_names):
        rows = self.dt_sweep()
        ok = True
        parts = []
        metrics = {"dt": [dt for dt, _ in rows]}
        for i in equations:
            mass = np.array([getattr(rep, key)[-1, i] for _, rep in rows])
            norm = np.array([rep.l2_sq[-1, i] for _, rep in rows])
            small = bool(np.all(mass <= 1e-6 * norm))
            if np.all(mass == 0):
                refine_ok, note = True, "0 at every level"
            else:
                factors = mass[:-1] / np.where(mass[1:] > 0, mass[1:], np.nan)
                factors = np.where(mass[1:] == 0, np.inf, factors)
                order = fit_exponent(metrics["dt"], mass)
                refine_ok = bool(np.all(factors >= 1.5) and (order >= 0.5 or np.isnan(order)))
                note = f"factors {np.round(factors, 3).tolist()}, order {order:.3g}"
            ok &= small and refine_ok
            metrics[f"{key}_{i + 1}"] = mass.tolist()
            metrics[f"l2_sq_{i + 1}"] = norm.tolist()
            parts.append(f"{bound_names[i]}(T) = {mass[0]:.3g} vs 1e-6*E||u{i + 1}||^2 = "
                         f"{1e-6 * norm[0]:.3g} ({note})")
        return CheckResult(number, ok, "; ".join(parts), metrics)

    def check_1(self):
        return self._bound_check(1, "neg_mass_sq", (0, 1), ("E||u1^-||^2", "E||u2^-||^2"))

    def check_2(self):
        if self.cfg.params.M1 != self.cfg.params.u_m:
            return CheckResult(2, False, "needs M1 = u_m in the configuration")
        return self._bound_check(2, "excess_mass_sq", (0,), ("E||(M1-u1)^-||^2",))

    def _n_stability(self, number, fields, limit):
        rows = self.n_sweep()
        ok = True
        parts = []
        metrics = {"n": [n for n, _ in rows]}
        for name in fields:
            vals = np.array([getattr(rep, name) for _, rep in rows])     # (levels, 2)
            for i in range(2):
                spread = _rel_spread(vals[:, i])
                finite = bool(np.all(np.isfinite(vals[:, i])))
                ok &= finite and spread < limit
                metrics[f"{name}_{i + 1}"] = vals[:, i].tolist()
                parts.append(f"{name}[u{i + 1}] spread {spread:.2e}")
        return CheckResult(number, ok, ", ".join(parts) + f" (limit {limit:g})", metrics)

    def check_3(self):
        return self._n_stability(3, ("sup_l2_sq", "grad_energy"), 0.20)

    def check_4(self):
        return self._n_stability(4, ("moment_q",), 0.25)

    def check_5(self):
        run = self.base_run()
        deltas = np.array(self.settings.translation_lags) * self.cfg.step.dt
        rep = translation_scan(run.batch, deltas)
        expo = rep.fitted_exponent
        ok = bool(np.all((expo >= 0.4) & (expo <= 1.1)))
        metrics = {"deltas": deltas.tolist(), "stat_1": rep.stat[:, 0].tolist(),
                   "stat_2": rep.stat[:, 1].tolist(), "exponent": expo.tolist()}
        return CheckResult(5, ok, f"exponents u1 {expo[0]:.3f}, u2 {expo[1]:.3f} "
                                  f"(band [0.4, 1.1])", metrics)

    def check_6(self):
        s = self.settings
        cfg = self.cfg.replace(n_modes=s.structural_modes)
        system = cfg.system()
        coer, mono = [], []
        for seed in s.structural_seeds:
            coer.append(check_coercivity(s.structural_samples, system,
                                         radius=s.structural_radius, seed=seed))
            mono.append(check_monotonicity(s.structural_samples, s.structural_radius,
                                           system, seed=seed))
        kc = [r.K for r in coer]
        km = [r.K for r in mono]
        finite = all(r.finite for r in coer + mono)
        sc, sm = _rel_spread(kc), _rel_spread(km)
        ok = bool(finite and sc < 0.10 and sm < 0.10)
        detail = (f"K = {np.round(kc, 4).tolist()} (spread {sc:.2%}), "
                  f"K(r={s.structural_radius:g}) = {np.round(km, 2).tolist()} "
                  f"(spread {sm:.2%}); limit 10%")
        return CheckResult(6, ok, detail, {"K": kc, "K_r": km})

    def check_7(self):
        s = self.settings
        results = stability_sweep(self.cfg, (0.0,) + s.stability_eps,
                                  s.stability_direction, self.jobs)
        zero, rest = results[0], results[1:]
        ratios = [r.ratio for r in rest]
        spread = _rel_spread(ratios)
        ok = bool(zero.lhs == 0.0 and zero.bitwise_identical
                  and np.all(np.isfinite(ratios)) and spread < 0.25)
        detail = (f"ratios {np.round(ratios, 5).tolist()} (spread {spread:.2%}, limit 25%); "
                  f"eps=0 gap {zero.lhs!r}, bitwise identical: {zero.bitwise_identical}")
        return CheckResult(7, ok, detail, {"eps": list(s.stability_eps), "ratio": ratios,
                                           "zero_lhs": zero.lhs})

    def check_8(self):
        s = self.settings
        run = self.base_run()
        n = run.batch.system.n_modes
        rng = np.random.default_rng(2024)
        tests = [rng.standard_normal(n) / (1.0 + np.arange(n)) for _ in range(s.residual_tests)]
        m = min(s.residual_traj, len(run.batch))
        own = 0.0
        coarse = {k: [] for k in s.replay_strides}
        for j in range(m):
            traj = run.batch[j]
            for t, phi in enumerate(tests):
                eq = 1 + t % 2
                own = max(own, float(np.max(weak_form_residual(traj, phi, eq))))
                for k in s.replay_strides:
                    coarse[k].append(weak_form_residual(traj.thin(k), phi, eq)[-1])
        h = np.array(s.replay_strides) * self.cfg.step.dt
        means = np.array([np.mean(coarse[k]) for k in s.replay_strides])
        order = fit_exponent(h, means)
        ok = bool(own <= 1e-10 and np.all(np.diff(means) > 0) and order >= 0.5)
        detail = (f"own-resolution max {own:.2e} (limit 1e-10); coarse replay "
                  f"{[f'{v:.3e}' for v in means]} at strides "
                  f"{list(s.replay_strides)}, order {order:.3f} (limit 0.5)")
        return CheckResult(8, ok, detail, {"own": own, "coarse": means.tolist(),
                                           "order": order})

    def check_9(self):
        base = self.cfg.noise
        parts = []
        ok = True
        for shape in SHAPES:
            rep = check_noise_conditions(replace(base, shape=shape), self.settings.noise_samples)
            ok &= rep.passed
            parts.append(f"{shape} {'ok' if rep.passed else 'FAILED'} "
                         f"(growth {rep.growth_ratio:.3f}, lipschitz {rep.lipschitz_ratio:.3f})")
        broken = check_noise_conditions(replace(base, gamma=0.25), self.settings.noise_samples)
        ok &= not broken.passed
        parts.append("gamma=0.25 " + ("rejected" if not broken.passed else "NOT rejected"))
        return CheckResult(9, ok, "; ".join(parts))

    def check_10(self):
        errors = micro_oracle_errors()
        worst = max(errors.values())
        logistic = logistic_error(self.cfg, self.settings.logistic_u0)
        ok = bool(worst <= 1e-10 and logistic <= 1e-3)
        detail = (f"worst spectral error {worst:.2e} (limit 1e-10); logistic error at t=1 "
                  f"{logistic:.2e} (limit 1e-3)")
        return CheckResult(10, ok, detail, {**errors, "logistic": logistic})

    def run(self, numbers=None, callback=None):
        out = []
        for k in numbers or range(1, 11):
            res = getattr(self, f"check_{k}")()
            if callback is not None:
                callback(res)
            out.append(res)
        return out


def micro_oracle_errors(seed=0):
    """Maximum errors of the exact spectral identities (1D and 2D)."""
    rng = np.random.default_rng(seed)
    errs = {}
    cases = {"1d": (sp.Domain.interval(1.0, 128), 16), "2d": (sp.Domain.rectangle(1.0, 1.0, 64), 16)}
    for tag, (dom, n) in cases.items():
        b = sp.build_basis(dom, n)
        c = rng.standard_normal((4, n))
        errs[f"roundtrip_{tag}"] = float(np.max(np.abs(sp.project(sp.reconstruct(c, b), b) - c)))
        w = rng.standard_normal(n)
        N = sp.solve_neumann_poisson(w, b)
        back = -sp.laplacian_coeffs(N, b)
        back[0] += w[0]
        errs[f"poisson_{tag}"] = float(np.max(np.abs(back - w)))
        gram = (b.values * b.weights) @ b.values.T
        errs[f"gram_{tag}"] = float(np.max(np.abs(gram - np.eye(n))))
    b = sp.build_basis(sp.Domain.interval(1.0, 128), 3)
    errs["eigen_1d"] = float(np.max(np.abs(b.eigenvalues - np.array([0, 1, 4]) * np.pi**2)))
    x = b.domain.points()[:, 0]
    exact = -np.sqrt(2.0) * 2 * np.pi * np.sin(2 * np.pi * x)
    errs["gradient_1d"] = float(np.max(np.abs(b.gradients[0, 2] - exact)))
    b2 = sp.build_basis(sp.Domain.rectangle(1.0, 1.0, 64), 4)
    errs["eigen_2d"] = float(np.max(np.abs(b2.eigenvalues - np.array([0, 1, 1, 2]) * np.pi**2)))
    return errs


def logistic_error(cfg, u0=0.5, t_end=1.0, dt=1e-4):
    """Zero-noise run with no predators against the logistic closed form."""
    params = cfg.params
    basis = cfg.basis()
    system = GalerkinSystem(basis, params, NoiseModel(beta0=0.0))
    ic = InitialCondition("constant", (0.0, u0), (0.0, 0.0))
    c1, c2 = ic.coefficients(basis)
    traj = integrate(sp.SpectralState(0.0, c1, c2), StepConfig(dt, t_end, int(round(t_end / dt))),
                     system)
    u2 = traj.c2[-1] @ basis.values
    K, r = params.K, params.r
    exact = K * u0 / (u0 + (K - u0) * np.exp(-r * t_end))
    return float(np.max(np.abs(u2 - exact)))


def run_checks(cfg=None, settings=None, jobs=1, numbers=None, callback=None):
    """Run the selected checks (all by default) and return their results."""
    return Verifier(cfg, settings, jobs).run(numbers, callback)


__all__ = ["CheckResult", "TITLES", "Verifier", "VerifySettings",
           "logistic_error", "micro_oracle_errors", "run_checks"]
