"""Galerkin SDE system and its Euler-Maruyama integration.

For coefficient vectors ``c1, c2`` the drift is

    dc1_l = -d1 lam_l c1_l + <chi(u1) grad u2, grad e_l> + <F1(u1, u2), e_l>
    dc2_l = -d2 lam_l c2_l + <F2(u1, u2), e_l>

with the nonlinear pairings evaluated pseudospectrally (reconstruct on the
grid, apply pointwise, project back).  The noise enters as
``sum_k <sigma_{i,k}(u1, u2), e_l> dW_{i,k}``.

All kernels accept leading batch axes, so a whole ensemble advances in one
vectorised step.  Trajectories stay independent because every trajectory
owns its own increment streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as _model
from .noise import NoiseModel, SeedPolicy, noise_matrices, standard_normals
from .spectral import SpectralState


class IntegrationDiverged(FloatingPointError):
    """Raised when a step produces non-finite coefficients."""

    def __init__(self, step, time, trajectory=None):
        self.step = step
        self.time = time
        self.trajectory = trajectory
        where = "" if trajectory is None else f" in trajectory {trajectory}"
        super().__init__(f"integration diverged at step {step} (t={time:g}){where}")


class StepSizeError(ValueError):
    """Raised when ``dt`` exceeds the explicit-diffusion stability ceiling."""

    def __init__(self, dt, ceiling):
        self.dt = dt
        self.ceiling = ceiling
        super().__init__(
            f"dt={dt:g} exceeds the stability ceiling {ceiling:.6g} "
            f"(0.5 / (max(d1, d2) * lambda_max))")


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    """Drift and diffusion of the Galerkin system on a fixed basis.

    ``taxis`` and ``reaction`` switch the corresponding terms off, which is
    how the reduced test problems (pure diffusion, logistic-only) are built.
    """

    basis: object
    params: _model.ModelParams
    noise: NoiseModel
    taxis: bool = True
    reaction: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        b = self.basis
        w = b.weights
        self._cache["V"] = b.values
        self._cache["VW"] = np.ascontiguousarray((b.values * w).T)
        self._cache["G"] = [np.ascontiguousarray(g) for g in b.gradients]
        self._cache["GW"] = [np.ascontiguousarray((g * w).T) for g in b.gradients]
        self._cache["decay"] = np.stack([self.params.d1 * b.eigenvalues,
                                         self.params.d2 * b.eigenvalues])

    @property
    def n_modes(self):
        return self.basis.n_modes

    def dt_ceiling(self):
        """Largest admissible time step ``0.5 / (max(d1, d2) * lambda_max)``."""
        lam = self.basis.lambda_max
        if lam == 0:
            return np.inf
        return 0.5 / (max(self.params.d1, self.params.d2) * lam)

    def _fields(self, C):
        return C @ self._cache["V"]

    def _drift_and_shapes(self, C):
        """Drift ``(..., 2, n)`` and projected noise shapes ``(..., 2, n)``."""
        p = self.params
        U = self._fields(C)
        u1 = U[..., 0, :]
        u2 = U[..., 1, :]
        to_project = []
        if self.reaction:
            to_project += list(_model.reactions(u1, u2, p))
        to_project += [self.noise.shape_values(1, u1, u2), self.noise.shape_values(2, u1, u2)]
        P = np.stack(np.broadcast_arrays(*to_project), axis=-2) @ self._cache["VW"]
        drift = -self._cache["decay"] * C
        if self.reaction:
            drift = drift + P[..., :2, :]
        if self.taxis:
            drift[..., 0, :] += self._taxis(C[..., 1, :], u1)
        return drift, P[..., -2:, :]

    def _taxis(self, c2, u1):
        sens = _model.chi(u1, self.params)
        out = 0.0
        for g, gw in zip(self._cache["G"], self._cache["GW"]):
            out = out + (sens * (c2 @ g)) @ gw
        return out

    def jacobian(self, C):
        """Drift Jacobian ``(..., 2n, 2n)`` in the ordering ``[c1, c2]``.

        Derivatives of the kinked nonlinearities are taken branchwise.
        """
        p = self.params
        V = self._cache["V"]
        w = self.basis.weights
        C = np.asarray(C, float)
        U = C @ V
        u1 = U[..., 0, :]
        u2 = U[..., 1, :]
        n = self.n_modes
        J = np.zeros(C.shape[:-2] + (2 * n, 2 * n))
        J[..., :n, :n] -= np.diag(self._cache["decay"][0])
        J[..., n:, n:] -= np.diag(self._cache["decay"][1])
        Vw = V * w

        def sandwich(left, d, right):
            return (left * d[..., None, :]) @ right.T

        if self.reaction:
            d11, d12, d21, d22 = _model.reaction_jacobian(u1, u2, p)
            J[..., :n, :n] += sandwich(Vw, d11, V)
            J[..., :n, n:] += sandwich(Vw, d12, V)
            J[..., n:, :n] += sandwich(Vw, d21, V)
            J[..., n:, n:] += sandwich(Vw, d22, V)
        if self.taxis:
            sens = _model.chi(u1, p)
            dsens = _model.chi_derivative(u1, p)
            for g in self._cache["G"]:
                grad2 = C[..., 1, :] @ g
                J[..., :n, :n] += sandwich(g * w, dsens * grad2, V)
                J[..., :n, n:] += sandwich(g * w, sens, g)
        return J

    def noise_jacobian(self):
        """Jacobian ``(2n, 2n)`` of the projected noise shapes (state independent)."""
        V = self._cache["V"]
        gram = (V * self.basis.weights) @ V.T
        return np.kron(self.noise.shape_jacobian(), gram)

    def drift(self, c1, c2):
        """Drift coefficients ``(A1, A2)`` of both equations."""
        C = np.stack(np.broadcast_arrays(np.asarray(c1, float), np.asarray(c2, float)), axis=-2)
        d, _ = self._drift_and_shapes(C)
        return d[..., 0, :], d[..., 1, :]

    def diffusion(self, c1, c2):
        """Noise matrices ``(..., 2, n_noise_modes, n_modes)``."""
        return noise_matrices(c1, c2, self.basis, self.noise)

    def increment(self, C, dt, dW):
        """Euler-Maruyama update ``drift*dt + Gamma dW`` for stacked ``C``.

        ``C`` has shape ``(..., 2, n)`` and ``dW`` ``(..., 2, n_noise_modes)``.
        """
        drift, shapes = self._drift_and_shapes(C)
        xi = dW @ self.noise.beta
        return drift * dt + xi[..., None] * shapes


def assemble_drift(state, basis, params, noise=None, taxis=True, reaction=True):
    """Drift coefficients for a :class:`SpectralState`."""
    _check_state(state, basis)
    system = GalerkinSystem(basis, params, noise or NoiseModel(), taxis, reaction)
    return system.drift(state.c1, state.c2)


def assemble_diffusion(state, basis, noise_model):
    """Per-equation noise matrices mapping increments to coefficient updates."""
    _check_state(state, basis)
    return noise_matrices(state.c1, state.c2, basis, noise_model)


def _check_state(state, basis):
    if state.n_modes != basis.n_modes:
        raise ValueError(
            f"state has {state.n_modes} modes but basis has {basis.n_modes}")


def em_step(state, dt, increments, basis, params, noise_model, taxis=True, reaction=True):
    """One Euler-Maruyama step of the Galerkin system.

    ``increments`` is a :class:`~preytaxis.noise.WienerIncrements` (or any
    object with ``dW1`` and ``dW2``) drawn with the same ``dt``.
    """
    _check_state(state, basis)
    system = GalerkinSystem(basis, params, noise_model, taxis, reaction)
    C = np.stack([state.c1, state.c2], axis=-2)
    dW = np.stack([np.asarray(increments.dW1, float), np.asarray(increments.dW2, float)])
    with np.errstate(over="ignore", invalid="ignore"):
        new = C + system.increment(C, dt, dW)
    if not np.all(np.isfinite(new)):
        raise IntegrationDiverged(0, state.time + dt)
    return SpectralState(state.time + dt, new[..., 0, :], new[..., 1, :])


# -- time integration ---------------------------------------------------------

@dataclass(frozen=True)
class StepConfig:
    """Time discretisation: step, horizon and recording stride."""

    dt: float = 1e-4
    t_end: float = 0.5
    record_every: int = 1
    clip_negative_in_chi: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be positive")
        if not (np.isfinite(self.t_end) and self.t_end >= 0):
            raise ValueError("t_end must be nonnegative")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be at least 1")
        object.__setattr__(self, "record_every", int(self.record_every))
        n = self.n_steps
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        if n % self.record_every:
            raise ValueError(
                f"{n} steps are not a multiple of record_every={self.record_every}")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    @property
    def n_records(self):
        return self.n_steps // self.record_every + 1

    def check(self, system):
        """Raise :class:`StepSizeError` if ``dt`` is above the ceiling."""
        ceiling = system.dt_ceiling()
        if self.dt > ceiling:
            raise StepSizeError(self.dt, ceiling)

    def refined(self, factor):
        """Same horizon with ``dt / factor`` and the same recorded times."""
        return StepConfig(self.dt / factor, self.t_end, self.record_every * factor,
                          self.clip_negative_in_chi)


@dataclass(eq=False)
class Trajectory:
    """Recorded states of one path, optionally with its Wiener increments.

    ``c1`` and ``c2`` have shape ``(n_records, n_modes)``; ``increments``,
    when kept, has shape ``(n_steps, 2, n_noise_modes)`` at step resolution.
    """

    times: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    dt: float
    record_every: int
    system: GalerkinSystem
    index: int = 0
    master_seed: int | None = None
    increments: np.ndarray | None = None

    def __len__(self):
        return len(self.times)

    @property
    def states(self):
        return [SpectralState(t, a, b) for t, a, b in zip(self.times, self.c1, self.c2)]

    @property
    def record_dt(self):
        return self.dt * self.record_every

    def thin(self, factor):
        """Keep every ``factor``-th recorded state (a coarser replay grid)."""
        factor = int(factor)
        if (len(self.times) - 1) % factor:
            raise ValueError(f"{len(self.times) - 1} intervals not divisible by {factor}")
        return Trajectory(self.times[::factor], self.c1[::factor], self.c2[::factor],
                          self.dt, self.record_every * factor, self.system, self.index,
                          self.master_seed, self.increments)


@dataclass(eq=False)
class TrajectoryBatch:
    """A stack of trajectories sharing system, times and step configuration.

    ``c1`` and ``c2`` have shape ``(n_traj, n_records, n_modes)``.
    """

    times: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    dt: float
    record_every: int
    system: GalerkinSystem
    indices: np.ndarray
    master_seed: int | None = None
    increments: np.ndarray | None = None

    def __len__(self):
        return self.c1.shape[0]

    def __getitem__(self, i):
        inc = None if self.increments is None else self.increments[i]
        return Trajectory(self.times, self.c1[i], self.c2[i], self.dt, self.record_every,
                          self.system, int(self.indices[i]), self.master_seed, inc)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_trajectories(cls, trajs):
        trajs = list(trajs)
        if not trajs:
            raise ValueError("need at least one trajectory")
        first = trajs[0]
        inc = None
        if all(t.increments is not None for t in trajs):
            inc = np.stack([t.increments for t in trajs])
        return cls(first.times, np.stack([t.c1 for t in trajs]),
                   np.stack([t.c2 for t in trajs]), first.dt, first.record_every,
                   first.system, np.array([t.index for t in trajs]), first.master_seed, inc)

    @classmethod
    def concatenate(cls, batches):
        batches = list(batches)
        first = batches[0]
        inc = None
        if all(b.increments is not None for b in batches):
            inc = np.concatenate([b.increments for b in batches])
        return cls(first.times, np.concatenate([b.c1 for b in batches]),
                   np.concatenate([b.c2 for b in batches]), first.dt, first.record_every,
                   first.system, np.concatenate([b.indices for b in batches]),
                   first.master_seed, inc)


def as_batch(trajs):
    """Accept a :class:`TrajectoryBatch`, one :class:`Trajectory` or a list of them."""
    if isinstance(trajs, TrajectoryBatch):
        return trajs
    if isinstance(trajs, Trajectory):
        return TrajectoryBatch.from_trajectories([trajs])
    return TrajectoryBatch.from_trajectories(trajs)


class IncrementSource:
    """Wiener increments for a set of trajectories, generated block by block.

    With ``substeps > 1`` the normals are drawn on the finer grid
    ``dt / substeps`` and summed, so runs at different ``dt`` share one
    Brownian path.
    """

    def __init__(self, policy, trajectories, noise, dt, substeps=1):
        self.policy = policy
        self.trajectories = [int(t) for t in trajectories]
        self.noise = noise
        self.dt = float(dt)
        self.substeps = int(substeps)

    def __call__(self, start, n):
        s = self.substeps
        K = self.noise.n_noise_modes
        out = np.empty((len(self.trajectories), n, 2, K))
        for j, traj in enumerate(self.trajectories):
            z = standard_normals(self.policy, traj, n * s, K, start_step=start * s)
            if s > 1:
                z = z.reshape(n, s, 2, K).sum(axis=1)
            out[j] = z
        return out * np.sqrt(self.dt / s)


def integrate_batch(c1_0, c2_0, cfg, system, policy=None, trajectories=None,
                    increments=None, record_increments=False, substeps=1, block=4096):
    """Integrate a batch of initial states in lock step.

    Parameters
    ----------
    c1_0, c2_0 : array, shape (B, n_modes)
        Initial coefficients.
    cfg : StepConfig
    system : GalerkinSystem
    policy : SeedPolicy, optional
        Seeds the increments when ``increments`` is not given.
    trajectories : sequence of int, optional
        Stream index of each batch member (default ``0..B-1``).
    increments : array or callable, optional
        Explicit increments ``(B, n_steps, 2, K)`` or a callable
        ``(start, n) -> (B, n, 2, K)``.
    record_increments : bool
        Keep the increments in the result (needed for weak-form replay).
    substeps : int
        Draw the noise on a grid ``substeps`` times finer and aggregate it.
    """
    cfg.check(system)
    C = np.stack([np.atleast_2d(np.asarray(c1_0, float)),
                  np.atleast_2d(np.asarray(c2_0, float))], axis=-2)
    B, _, n = C.shape
    if n != system.n_modes:
        raise ValueError(f"initial state has {n} modes but system has {system.n_modes}")
    if trajectories is None:
        trajectories = np.arange(B)
    trajectories = np.asarray(trajectories, dtype=int)
    policy = policy or SeedPolicy()
    if increments is None:
        source = IncrementSource(policy, trajectories, system.noise, cfg.dt, substeps)
    elif callable(increments):
        source = increments
    else:
        arr = np.asarray(increments, dtype=float)
        if arr.shape[:2] != (B, cfg.n_steps):
            raise ValueError(f"increments must have shape (B, n_steps, 2, K), got {arr.shape}")
        source = lambda start, m: arr[:, start:start + m]  # noqa: E731

    n_steps = cfg.n_steps
    every = cfg.record_every
    records = np.empty((B, cfg.n_records, 2, n))
    records[:, 0] = C
    kept = np.empty((B, n_steps, 2, system.noise.n_noise_modes)) if record_increments else None
    dt = cfg.dt
    step = 0
    # divergence is reported below; silence the overflow warnings it causes
    with np.errstate(over="ignore", invalid="ignore"):
        while step < n_steps:
            m = min(block, n_steps - step)
            dW = source(step, m)
            if kept is not None:
                kept[:, step:step + m] = dW
            for j in range(m):
                C = C + system.increment(C, dt, dW[:, j])
                step += 1
                if step % every == 0:
                    if not np.all(np.isfinite(C)):
                        bad = int(np.flatnonzero(~np.all(np.isfinite(C), axis=(1, 2)))[0])
                        raise IntegrationDiverged(step, step * dt, int(trajectories[bad]))
                    records[:, step // every] = C
    if not np.all(np.isfinite(records)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(records), axis=(1, 2, 3)))[0])
        raise IntegrationDiverged(n_steps, n_steps * dt, int(trajectories[bad]))
    times = np.arange(cfg.n_records) * (dt * every)
    return TrajectoryBatch(times, records[:, :, 0], records[:, :, 1], dt, every, system,
                           trajectories, int(policy.master_seed), kept)


def integrate(initial, cfg, system, policy=None, trajectory=0, increments=None,
              record_increments=False, substeps=1):
    """Integrate one trajectory from ``initial`` (a :class:`SpectralState`)."""
    inc = increments
    if inc is not None and not callable(inc):
        inc = np.asarray(inc, dtype=float)[None]
    batch = integrate_batch(initial.c1[None], initial.c2[None], cfg, system, policy,
                            [trajectory], inc, record_increments, substeps)
    traj = batch[0]
    traj.times = traj.times + initial.time
    return traj


# -- structural checks on the drift ------------------------------------------

def _ball(rng, shape, radius):
    """Uniform samples in the ball of given radius along the last axis."""
    x = rng.standard_normal(shape)
    x /= np.linalg.norm(x, axis=-1, keepdims=True)
    dim = shape[-1]
    rad = radius * rng.uniform(size=shape[:-1] + (1,)) ** (1.0 / dim)
    return x * rad


def _squash(z, radius):
    # smooth map from R^n onto the open ball of the given radius
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    return radius * z / np.sqrt(1.0 + norm**2)


def _unsquash(c, radius):
    c = np.asarray(c, float) / radius
    norm2 = np.sum(c**2, axis=-1, keepdims=True)
    norm2 = np.minimum(norm2, 1.0 - 1e-9)
    return c / np.sqrt(1.0 - norm2)


def coercivity_terms(system, C):
    """Left side ``2(M(C), C) + ||Gamma(C)||^2`` for stacked states ``(..., 2, n)``."""
    drift, shapes = system._drift_and_shapes(C)
    b2 = np.sum(system.noise.beta**2)
    return 2.0 * np.sum(drift * C, axis=(-2, -1)) + b2 * np.sum(shapes**2, axis=(-2, -1))


def monotonicity_terms(system, C1, C2):
    """``2(M(C1)-M(C2), C1-C2) + ||Gamma(C1)-Gamma(C2)||^2`` and ``||C1-C2||^2``."""
    d1, s1 = system._drift_and_shapes(C1)
    d2, s2 = system._drift_and_shapes(C2)
    D = C1 - C2
    b2 = np.sum(system.noise.beta**2)
    lhs = 2.0 * np.sum((d1 - d2) * D, axis=(-2, -1)) + b2 * np.sum((s1 - s2) ** 2, axis=(-2, -1))
    return lhs, np.sum(D**2, axis=(-2, -1))


@dataclass
class ConstantReport:
    """Sampled and locally refined bound constant of a structural inequality."""

    K: float
    sampled_max: float
    ratios: np.ndarray = field(repr=False)
    argmax: np.ndarray = field(repr=False)
    radius: float
    samples: int

    @property
    def max_ratio(self):
        return self.sampled_max

    @property
    def finite(self):
        return bool(np.isfinite(self.K) and np.all(np.isfinite(self.ratios)))


def _ascend(objective, starts, radius, maxiter):
    """Local maximisation of ``objective`` from several starts.

    Every row along the last axis of a state is kept inside the ball of
    ``radius`` through a smooth change of variables.
    """
    from scipy.optimize import minimize

    best_val, best_x = -np.inf, None
    for x0 in starts:
        shape = x0.shape

        def neg(z):
            return -float(objective(_squash(z.reshape(shape), radius)[None])[0])

        res = minimize(neg, _unsquash(x0, radius).ravel(), method="L-BFGS-B",
                       options={"maxiter": maxiter})
        if np.isfinite(res.fun) and -res.fun > best_val:
            best_val, best_x = -res.fun, _squash(res.x.reshape(shape), radius)
    return best_val, best_x


def check_coercivity(samples, system, radius=4.0, seed=0, refine=8, maxiter=200):
    """Estimate the coercivity constant ``K`` over random states.

    States are drawn uniformly with ``||c_i|| <= radius``; the ratio
    ``[2(M(C),C) + ||Gamma(C)||^2] / (1 + ||C||^2)`` is evaluated for each
    and the best ``refine`` samples seed a local ascent inside the ball.
    ``K`` is the largest ratio found.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = np.random.default_rng(seed)
    n = system.n_modes
    C = _ball(rng, (samples, 2, n), radius)

    def objective(S):
        return coercivity_terms(system, S) / (1.0 + np.sum(S**2, axis=(-2, -1)))

    ratios = objective(C)
    order = np.argsort(ratios)[::-1]
    best, arg = float(ratios[order[0]]), C[order[0]]
    if refine:
        val, x = _ascend(objective, [C[i] for i in order[:refine]], radius, maxiter)
        if val > best:
            best, arg = float(val), x
    return ConstantReport(best, float(ratios[order[0]]), ratios, arg, radius, samples)


def _clip_components(x, radius):
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x * np.minimum(1.0, radius / np.maximum(norms, 1e-300))


def local_monotonicity_rate(system, C):
    """Largest eigenvalue of ``J + J^T + |beta|^2 Js^T Js`` at states ``(..., 2, n)``.

    Over a convex set of states the supremum of this rate equals the
    supremum of the monotonicity quotient over pairs, since the quotient of
    a pair is an average of the rate along the segment joining them.
    """
    J = system.jacobian(C)
    Js = system.noise_jacobian()
    b2 = np.sum(system.noise.beta**2)
    S = J + np.swapaxes(J, -1, -2) + b2 * (Js.T @ Js)
    return np.linalg.eigvalsh(S)[..., -1]


def check_monotonicity(samples, radius, system, seed=0, maxiter=600, popsize=15):
    """Estimate the local monotonicity constant ``K(r)``.

    Pairs ``(C1, C2)`` with every component in the ball of radius ``r`` are
    sampled at separations spread log-uniformly from ``1e-3 r`` to ``2r``
    and their quotients
    ``[2(M1-M2, C1-C2) + ||Gamma1-Gamma2||^2] / ||C1-C2||^2`` recorded.
    The supremum itself is found by maximising
    :func:`local_monotonicity_rate` over the ball with differential
    evolution (``maxiter=0`` keeps only the sampled pairs).  ``K`` is the
    larger of the two.
    """
    from scipy.optimize import differential_evolution

    if not radius > 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    n = system.n_modes
    C1 = _ball(rng, (samples, 2, n), radius)
    D = rng.standard_normal((samples, 2, n))
    D /= np.linalg.norm(D, axis=(-2, -1), keepdims=True)
    scale = radius * 10.0 ** rng.uniform(-3.0, np.log10(2.0), size=(samples, 1, 1))
    C2 = _clip_components(C1 + scale * D, radius)
    lhs, dist = monotonicity_terms(system, C1, C2)
    ratios = np.where(dist > 0, lhs / np.where(dist > 0, dist, 1.0), 0.0)
    i = int(np.argmax(ratios))
    best, arg = float(ratios[i]), np.stack([C1[i], C2[i]])
    if maxiter:
        def neg_rate(X):
            S = _clip_components(X.T.reshape(-1, 2, n), radius)
            return -local_monotonicity_rate(system, S)

        res = differential_evolution(
            neg_rate, [(-radius, radius)] * (2 * n), seed=seed, vectorized=True,
            updating="deferred", maxiter=maxiter, popsize=popsize, tol=0, polish=False)
        if -res.fun > best:
            best = float(-res.fun)
            arg = _clip_components(res.x.reshape(2, n), radius)
    return ConstantReport(best, float(ratios[i]), ratios, arg, radius, samples)
