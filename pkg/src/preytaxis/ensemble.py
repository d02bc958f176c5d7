"""Monte Carlo ensembles, paired stability runs and refinement studies.

Trajectories are integrated in fixed blocks of consecutive indices.  Each
block draws its noise from the streams of its own trajectory indices, so
the result does not depend on how blocks are scheduled or on the number of
worker processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.integrate import trapezoid

from .diagnostics import EstimateReport, mean_se, energy_scan, fit_exponent
from .galerkin import GalerkinSystem, StepConfig, TrajectoryBatch, integrate_batch
from .model import ModelParams
from .noise import NoiseModel, SeedPolicy
from .spectral import Domain, build_basis

IC_KINDS = ("constant", "bump", "random")
DIRECTIONS = ("constant", "first")


class InadmissibleInitialCondition(ValueError):
    """An initial condition leaves the box ``0 <= u_i <= M_i`` on the grid."""


@lru_cache(maxsize=32)
def cached_basis(domain, n_modes):
    return build_basis(domain, n_modes)


@dataclass(frozen=True)
class InitialCondition:
    """Deterministic initial data shared by every trajectory of an ensemble.

    ``constant``
        ``u_i = levels[i]``.
    ``bump``
        ``u_i = levels[i] + amplitudes[i] * e_1 / max|e_1|``, a single
        cosine of the first nonconstant mode.
    ``random``
        ``levels[i]`` plus a random combination of the nonconstant modes
        (coefficients decaying like ``1/(1+lambda)``, drawn from ``seed``)
        rescaled to the sup-norm ``amplitudes[i]``.
    """

    kind: str = "bump"
    levels: tuple = (0.8, 2.0)
    amplitudes: tuple = (0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in IC_KINDS:
            raise ValueError(f"unknown initial condition {self.kind!r}; expected one of {IC_KINDS}")
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        object.__setattr__(self, "amplitudes", tuple(float(v) for v in self.amplitudes))
        if len(self.levels) != 2 or len(self.amplitudes) != 2:
            raise ValueError("levels and amplitudes need one entry per species")

    def coefficients(self, basis):
        """Coefficient vectors ``(c1, c2)`` on ``basis``."""
        n = basis.n_modes
        e0 = basis.values[0, 0]
        out = []
        rng = np.random.default_rng(self.seed)
        for level, amp in zip(self.levels, self.amplitudes):
            c = np.zeros(n)
            c[0] = level / e0
            if self.kind == "bump" and n > 1 and amp:
                c[1] = amp / np.max(np.abs(basis.values[1]))
            elif self.kind == "random" and n > 1 and amp:
                r = rng.standard_normal(n - 1) / (1.0 + basis.eigenvalues[1:])
                sup = np.max(np.abs(r @ basis.values[1:]))
                c[1:] = amp * r / sup
            out.append(c)
        return out[0], out[1]


def check_admissible(c1, c2, basis, params, tol=1e-12):
    """Raise :class:`InadmissibleInitialCondition` unless ``0 <= u_i <= M_i`` on the grid."""
    for i, (c, bound) in enumerate(((c1, params.M1), (c2, params.M2)), start=1):
        u = np.asarray(c) @ basis.values
        lo, hi = float(u.min()), float(u.max())
        if lo < -tol or hi > bound + tol:
            raise InadmissibleInitialCondition(
                f"u{i} initial data spans [{lo:.6g}, {hi:.6g}], outside [0, M{i}={bound:g}]")


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything needed to reproduce an ensemble run."""

    params: ModelParams = field(default_factory=ModelParams)
    domain: Domain = field(default_factory=Domain.interval)
    n_modes: int = 16
    noise: NoiseModel = field(default_factory=NoiseModel)
    step: StepConfig = field(default_factory=StepConfig)
    n_traj: int = 64
    master_seed: int = 0
    ic: InitialCondition = field(default_factory=InitialCondition)
    taxis: bool = True
    reaction: bool = True
    block_size: int = 16

    def __post_init__(self):
        if int(self.n_traj) < 1:
            raise ValueError("n_traj must be at least 1")
        if int(self.block_size) < 1:
            raise ValueError("block_size must be at least 1")

    def basis(self):
        return cached_basis(self.domain, int(self.n_modes))

    def system(self):
        return GalerkinSystem(self.basis(), self.params, self.noise, self.taxis, self.reaction)

    def policy(self):
        return SeedPolicy(int(self.master_seed))

    def initial(self):
        """Admissible initial coefficients ``(c1, c2)``."""
        c1, c2 = self.ic.coefficients(self.basis())
        check_admissible(c1, c2, self.basis(), self.params)
        return c1, c2

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(eq=False)
class EnsembleResult:
    batch: TrajectoryBatch
    report: EstimateReport
    config: EnsembleConfig

    def __len__(self):
        return len(self.batch)

    def __iter__(self):
        return iter(self.batch)

    def __getitem__(self, i):
        return self.batch[i]


def _run_block(cfg, indices, initial, record_increments, substeps):
    system = cfg.system()
    c1, c2 = initial
    B = len(indices)
    batch = integrate_batch(np.tile(c1, (B, 1)), np.tile(c2, (B, 1)), cfg.step, system,
                            cfg.policy(), indices, record_increments=record_increments,
                            substeps=substeps)
    return batch.c1, batch.c2, batch.increments


def run_ensemble(cfg, jobs=1, record_increments=False, q=4.0, initial=None, substeps=1):
    """Integrate ``cfg.n_traj`` trajectories and attach their energy report.

    Parameters
    ----------
    cfg : EnsembleConfig
    jobs : int
        Worker processes; ``1`` runs in-process.  The output does not depend
        on this value.
    record_increments : bool
        Keep the Wiener increments (needed for weak-form residuals).
    q : float
        Moment order of the attached :class:`EstimateReport`.
    initial : tuple of arrays, optional
        Explicit initial coefficients overriding ``cfg.ic``; checked for
        admissibility.
    substeps : int
        Draw the noise on a grid this many times finer than ``cfg.step.dt``.
    """
    system = cfg.system()
    cfg.step.check(system)
    if initial is None:
        initial = cfg.initial()
    else:
        initial = tuple(np.asarray(c, dtype=float) for c in initial)
        check_admissible(*initial, cfg.basis(), cfg.params)
    bs = int(cfg.block_size)
    blocks = [np.arange(s, min(s + bs, cfg.n_traj)) for s in range(0, cfg.n_traj, bs)]
    args = [(cfg, idx, initial, record_increments, substeps) for idx in blocks]
    if jobs and jobs > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=int(jobs)) as pool:
            parts = list(pool.map(_run_block, *zip(*args)))
    else:
        parts = [_run_block(*a) for a in args]
    step = cfg.step
    times = np.arange(step.n_records) * (step.dt * step.record_every)
    inc = np.concatenate([p[2] for p in parts]) if record_increments else None
    batch = TrajectoryBatch(times, np.concatenate([p[0] for p in parts]),
                            np.concatenate([p[1] for p in parts]), step.dt,
                            step.record_every, system, np.arange(cfg.n_traj),
                            int(cfg.master_seed), inc)
    return EnsembleResult(batch, energy_scan(batch, q), cfg)


# -- pathwise stability -------------------------------------------------------

@dataclass
class StabilityResult:
    """Both sides of the L2 stability estimate for one initial gap.

    ``lhs`` is ``sum_i E int_0^T ||u_i - v_i||^2 dt`` and ``rhs``
    ``sum_i E ||u_i(0) - v_i(0)||^2``.  ``ratio`` is ``nan`` when ``rhs`` is 0.
    ``bitwise_identical`` records whether the paired runs agree exactly.
    """

    eps_ic: float
    lhs: float
    rhs: float
    ratio: float
    lhs_se: float
    ratio_se: float
    direction: str
    n_traj: int
    bitwise_identical: bool = False


def perturbation(basis, direction):
    """Unit coefficient vector of the perturbation ``direction``."""
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}; expected one of {DIRECTIONS}")
    e = np.zeros(basis.n_modes)
    slot = 0 if direction == "constant" else 1
    if slot >= basis.n_modes:
        raise ValueError("the first nonconstant mode needs at least 2 modes")
    e[slot] = 1.0
    return e


def _perturbed(cfg, eps_ic, direction):
    if not eps_ic >= 0:
        raise ValueError("eps_ic must be nonnegative")
    base = cfg.initial()
    e = perturbation(cfg.basis(), direction)
    pert = (base[0] + eps_ic * e, base[1] + eps_ic * e)
    check_admissible(*pert, cfg.basis(), cfg.params)
    return base, pert


def _compare(a, b, base_ic, pert_ic, eps_ic, direction):
    gap = np.sum((a.c1 - b.c1) ** 2, axis=-1) + np.sum((a.c2 - b.c2) ** 2, axis=-1)
    if len(a.times) > 1:
        lhs_j = trapezoid(gap, a.times, axis=1)
    else:
        lhs_j = np.zeros(len(a))
    rhs = float(np.sum((pert_ic[0] - base_ic[0]) ** 2) + np.sum((pert_ic[1] - base_ic[1]) ** 2))
    lhs, lhs_se = (float(v) for v in mean_se(lhs_j))
    ratio = lhs / rhs if rhs > 0 else np.nan
    ratio_se = lhs_se / rhs if rhs > 0 else np.nan
    same = bool(np.array_equal(a.c1, b.c1) and np.array_equal(a.c2, b.c2))
    return StabilityResult(float(eps_ic), lhs, rhs, ratio, lhs_se, ratio_se, direction,
                           len(a), same)


def stability_experiment(cfg, eps_ic, direction="constant", jobs=1):
    """Paired runs from ``u0`` and ``u0 + eps_ic * e`` driven by the same noise.

    The perturbation is added to both species and must keep the data in the
    admissible box (:class:`InadmissibleInitialCondition` otherwise).  Both
    runs use identical batch layouts, so at ``eps_ic = 0`` they agree bit
    for bit.
    """
    return stability_sweep(cfg, [eps_ic], direction, jobs)[0]


def stability_sweep(cfg, eps_values, direction="constant", jobs=1):
    """:func:`stability_experiment` for several gaps, sharing the base run."""
    pairs = [_perturbed(cfg, eps, direction) for eps in eps_values]
    if not pairs:
        return []
    a = run_ensemble(cfg, jobs, initial=pairs[0][0]).batch
    out = []
    for eps, (base, pert) in zip(eps_values, pairs):
        b = run_ensemble(cfg, jobs, initial=pert).batch
        out.append(_compare(a, b, base, pert, eps, direction))
    return out


# -- refinement ---------------------------------------------------------------

@dataclass
class RefinementTable:
    """Final-time gaps between consecutive refinement levels.

    ``gaps[k]`` is the root-mean-square L2 distance at ``T`` between level
    ``k`` and ``k+1``; ``observed_order`` is the log-log slope of the gaps
    against ``values[:-1]`` (time steps, or ``1/n`` on the modes axis).
    """

    axis: str
    values: np.ndarray
    gaps: np.ndarray
    gaps_se: np.ndarray
    observed_order: float


def dt_levels(cfg, levels, factor=2):
    """Configurations and noise substeps sharing the finest Brownian path."""
    out = []
    for k in range(levels):
        f = factor**k
        step = StepConfig(cfg.step.dt / f, cfg.step.t_end, cfg.step.record_every * f,
                          cfg.step.clip_negative_in_chi)
        out.append((cfg.replace(step=step), factor ** (levels - 1 - k)))
    return out


def _final_states(cfg, jobs, substeps):
    n = cfg.step.n_steps
    end_only = cfg.replace(step=replace(cfg.step, record_every=max(n, 1)))
    batch = run_ensemble(end_only, jobs, substeps=substeps).batch
    return np.stack([batch.c1[:, -1], batch.c2[:, -1]], axis=1)


def refinement_study(cfg, axis="dt", levels=3, factor=2, jobs=1):
    """Rerun ``cfg`` on ``levels`` successively refined discretisations.

    ``axis='dt'`` divides the time step by ``factor`` per level with the
    noise drawn on the finest grid; ``axis='modes'`` multiplies the number
    of modes by ``factor`` (the Wiener processes do not depend on it).
    ``factor=1`` repeats one level and gives zero gaps.
    """
    if levels < 3:
        raise ValueError("a refinement study needs at least 3 levels")
    if axis == "dt":
        runs = dt_levels(cfg, levels, factor)
        finals = [_final_states(c, jobs, s) for c, s in runs]
        values = np.array([c.step.dt for c, _ in runs])
    elif axis == "modes":
        finals, values = [], []
        for k in range(levels):
            n = int(cfg.n_modes) * factor**k
            finals.append(_final_states(cfg.replace(n_modes=n), jobs, 1))
            values.append(1.0 / n)
        values = np.array(values)
    else:
        raise ValueError(f"unknown refinement axis {axis!r}; expected 'dt' or 'modes'")
    gaps, ses = [], []
    for lo, hi in zip(finals[:-1], finals[1:]):
        n = max(lo.shape[-1], hi.shape[-1])
        pad = lambda x: np.pad(x, [(0, 0), (0, 0), (0, n - x.shape[-1])])  # noqa: E731
        sq = np.sum((pad(lo) - pad(hi)) ** 2, axis=(-2, -1))
        m, se = mean_se(sq)
        gaps.append(np.sqrt(m))
        ses.append(se / (2 * np.sqrt(m)) if m > 0 else 0.0)
    gaps = np.array(gaps)
    return RefinementTable(axis, values, gaps, np.array(ses), fit_exponent(values[:-1], gaps))
