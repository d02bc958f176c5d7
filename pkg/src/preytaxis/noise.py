"""Truncated cylindrical Wiener noise and its amplitude coefficients.

Each equation ``i`` is driven by ``n_noise_modes`` independent scalar
Brownian motions ``W_{i,k}``.  The amplitude of mode ``k`` is
``sigma_{i,k}(u1, u2) = beta_k * g_i(u1, u2)`` with decaying weights
``beta_k = beta0 * k**(-gamma)`` (``k = 1, 2, ...``) and a shape function
``g_i`` chosen from:

``linear``
    ``g_i = u_i`` -- multiplicative, vanishes where the species is absent.
``coupled``
    ``g_i = (u1 + u2) / 2`` -- multiplicative but not vanishing at ``u_i = 0``.
``additive_bounded``
    ``g_i = 1`` -- state independent.

Wiener increments are generated from counter-based Philox streams keyed by
``(master_seed, trajectory, equation, mode)`` so that any block of steps
can be reproduced without replaying the ones before it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import zeta

from .spectral import project, reconstruct

SHAPES = ("linear", "coupled", "additive_bounded")


@dataclass(frozen=True)
class NoiseModel:
    """Weights and shape of the truncated noise.

    ``c_sigma`` is the constant in the linear-growth and Lipschitz
    conditions on the amplitudes.  For summable weights (``gamma > 1/2``) it
    is ``beta0**2 * zeta(2*gamma)``, which bounds every truncation; otherwise
    it falls back to the partial sum over the retained modes, and
    :func:`check_noise_conditions` flags the model as inadmissible.
    """

    n_noise_modes: int = 16
    beta0: float = 0.1
    gamma: float = 1.0
    shape: str = "linear"

    def __post_init__(self):
        if int(self.n_noise_modes) < 1:
            raise ValueError("n_noise_modes must be at least 1")
        object.__setattr__(self, "n_noise_modes", int(self.n_noise_modes))
        if self.shape not in SHAPES:
            raise ValueError(f"unknown noise shape {self.shape!r}; expected one of {SHAPES}")
        if not (np.isfinite(self.beta0) and self.beta0 >= 0):
            raise ValueError("beta0 must be finite and nonnegative")
        if not np.isfinite(self.gamma):
            raise ValueError("gamma must be finite")

    @property
    def beta(self):
        k = np.arange(1, self.n_noise_modes + 1, dtype=float)
        return self.beta0 * k ** (-self.gamma)

    @property
    def summable(self):
        return self.gamma > 0.5

    @property
    def c_sigma(self):
        if self.summable:
            return float(self.beta0**2 * zeta(2.0 * self.gamma))
        return float(np.sum(self.beta**2))

    def shape_values(self, equation, u1, u2):
        """Shape function ``g_i`` evaluated pointwise."""
        u1 = np.asarray(u1, dtype=float)
        u2 = np.asarray(u2, dtype=float)
        if equation not in (1, 2):
            raise ValueError(f"equation must be 1 or 2, got {equation!r}")
        if self.shape == "linear":
            return np.array(u1 if equation == 1 else u2, dtype=float)
        if self.shape == "coupled":
            return 0.5 * (u1 + u2)
        return np.ones(np.broadcast(u1, u2).shape)

    def shape_jacobian(self):
        """Constant ``2x2`` matrix ``dg_i/du_j`` (every shipped shape is affine)."""
        if self.shape == "linear":
            return np.eye(2)
        if self.shape == "coupled":
            return np.full((2, 2), 0.5)
        return np.zeros((2, 2))

    def to_dict(self):
        return {"n_noise_modes": self.n_noise_modes, "beta0": self.beta0,
                "gamma": self.gamma, "shape": self.shape}


def sigma_coefficient(i, k, u1, u2, model):
    """Amplitude ``sigma_{i,k}(u1, u2)`` of noise mode ``k`` (0-based)."""
    if not 0 <= k < model.n_noise_modes:
        raise IndexError(f"noise mode {k} outside [0, {model.n_noise_modes})")
    return model.beta[k] * model.shape_values(i, u1, u2)


def noise_matrices(c1, c2, basis, model):
    """Galerkin noise coefficients for both equations.

    Returns an array of shape ``(..., 2, n_noise_modes, n_modes)`` whose
    entry ``[i-1, k, l]`` is ``<sigma_{i,k}(u1, u2), e_l>``.
    """
    u1 = reconstruct(c1, basis)
    u2 = reconstruct(c2, basis)
    beta = model.beta
    rows = []
    for i in (1, 2):
        g = project(model.shape_values(i, u1, u2), basis)
        rows.append(beta[:, None] * g[..., None, :])
    return np.stack(rows, axis=-3)


def project_noise(state, basis, model):
    """Per-equation matrices ``sigma_{u_i,k,l}`` for a :class:`SpectralState`."""
    if state.n_modes != basis.n_modes:
        raise ValueError(
            f"state has {state.n_modes} modes but basis has {basis.n_modes}")
    return noise_matrices(state.c1, state.c2, basis, model)


@dataclass(frozen=True)
class NoiseCheck:
    """Outcome of the sampled noise-admissibility checks."""

    c_sigma: float
    growth_ratio: float
    lipschitz_ratio: float
    summable: bool
    tail_ok: bool
    samples: int

    @property
    def passed(self):
        return (self.summable and self.tail_ok
                and self.growth_ratio <= 1.0 and self.lipschitz_ratio <= 1.0)


def tail_bound(model, n):
    """Upper bound on ``sum_{k>n} beta_k**2`` (``inf`` for non-summable weights)."""
    s = 2.0 * model.gamma
    if s <= 1.0:
        return np.inf
    return model.beta0**2 * n ** (1.0 - s) / (s - 1.0)


def check_noise_conditions(model, samples=10_000, box=10.0, seed=0, doublings=10):
    """Sample the growth and Lipschitz conditions with the stored constant.

    Growth: ``sum_k sigma_{i,k}(u)^2 <= c_sigma (1 + u1^2 + u2^2)``.
    Lipschitz: ``sum_k |sigma_{i,k}(u) - sigma_{i,k}(v)|^2 <= c_sigma |u - v|^2``.
    Both are checked for ``i = 1, 2`` at ``samples`` random points in
    ``[-box, box]^2``.  The reported ratios are the worst left/right quotients,
    so a value ``<= 1`` means the inequality held everywhere.  The summability
    check doubles the truncation ``doublings`` times and requires the partial
    sums of ``beta_k**2`` to stay below ``c_sigma``.
    """
    rng = np.random.default_rng(seed)
    u = rng.uniform(-box, box, size=(samples, 2))
    v = rng.uniform(-box, box, size=(samples, 2))
    c = model.c_sigma
    b2 = np.sum(model.beta**2)
    growth = 0.0
    lip = 0.0
    for i in (1, 2):
        gu = model.shape_values(i, u[:, 0], u[:, 1])
        gv = model.shape_values(i, v[:, 0], v[:, 1])
        lhs = b2 * gu**2
        growth = max(growth, float(np.max(lhs / (c * (1.0 + np.sum(u**2, axis=1))))))
        dist = np.sum((u - v) ** 2, axis=1)
        lhs = b2 * (gu - gv) ** 2
        lip = max(lip, float(np.max(lhs / (c * dist))))

    tail_ok = True
    n = model.n_noise_modes
    for _ in range(doublings):
        n *= 2
        k = np.arange(1, n + 1, dtype=float)
        if np.sum((model.beta0 * k ** (-model.gamma)) ** 2) > c:
            tail_ok = False
            break
    return NoiseCheck(c, growth, lip, model.summable, tail_ok, samples)


# -- seeded increments -------------------------------------------------------

@dataclass(frozen=True)
class SeedPolicy:
    """Reproducible derivation of Wiener increments.

    Every ``(trajectory, equation, mode)`` triple owns a Philox key derived
    from ``master_seed``; steps are grouped in blocks of ``chunk_size`` and
    the block number sits in a high word of the Philox counter, so blocks
    never share random bits.
    """

    master_seed: int = 0
    chunk_size: int = 4096

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if int(self.chunk_size) < 1:
            raise ValueError("chunk_size must be positive")


@lru_cache(maxsize=4096)
def _normal_block(master_seed, trajectory, equation, mode, block, chunk_size):
    ss = np.random.SeedSequence(entropy=master_seed,
                                spawn_key=(trajectory, equation, mode))
    key = ss.generate_state(2, dtype=np.uint64)
    counter = np.array([0, block, 0, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key, counter=counter))
    out = gen.standard_normal(chunk_size)
    out.setflags(write=False)
    return out


def standard_normals(policy, trajectory, n_steps, n_noise_modes, start_step=0):
    """Unit-variance normals for steps ``[start, start + n_steps)``.

    Returns an array of shape ``(n_steps, 2, n_noise_modes)``.
    """
    cs = int(policy.chunk_size)
    out = np.empty((n_steps, 2, n_noise_modes))
    if n_steps == 0:
        return out
    first = start_step // cs
    last = (start_step + n_steps - 1) // cs
    for eq in (0, 1):
        for k in range(n_noise_modes):
            blocks = [_normal_block(int(policy.master_seed), int(trajectory), eq, k, b, cs)
                      for b in range(first, last + 1)]
            seq = np.concatenate(blocks) if len(blocks) > 1 else blocks[0]
            offset = start_step - first * cs
            out[:, eq, k] = seq[offset:offset + n_steps]
    return out


def brownian_increments(policy, trajectory, n_steps, dt, model, start_step=0):
    """Wiener increments ``N(0, dt)`` of shape ``(n_steps, 2, n_noise_modes)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    z = standard_normals(policy, trajectory, n_steps, model.n_noise_modes, start_step)
    return np.sqrt(dt) * z


def coarsen_increments(dW, factor):
    """Sum consecutive groups of ``factor`` increments (shared Brownian path)."""
    dW = np.asarray(dW)
    factor = int(factor)
    n = dW.shape[-3]
    if n % factor:
        raise ValueError(f"{n} steps cannot be grouped by {factor}")
    shape = dW.shape[:-3] + (n // factor, factor) + dW.shape[-2:]
    return dW.reshape(shape).sum(axis=-3)


@dataclass(frozen=True)
class WienerIncrements:
    """Increments of both cylindrical Wiener processes over one step."""

    dt: float
    dW1: np.ndarray
    dW2: np.ndarray


def sample_increments(dt, trajectory, step, policy, model):
    """Increments for a single step; identical on every call with the same indices."""
    dW = brownian_increments(policy, trajectory, 1, dt, model, start_step=step)[0]
    return WienerIncrements(float(dt), dW[0].copy(), dW[1].copy())
