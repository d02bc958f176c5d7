"""Model constants and pointwise nonlinearities of the predator-prey system.

``u1`` is the predator density and ``u2`` the prey density.  Every function
here is vectorised over numpy arrays and defined on the whole real line,
using the sign extension of the reaction terms so that the Galerkin system
is globally Lipschitz.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the predator-prey-taxis system.

    Parameters
    ----------
    d1, d2 : float
        Diffusion coefficients of predators and prey.
    e : float
        Conversion rate from prey to predator.
    a : float
        Predator decay rate.
    r, K : float
        Logistic growth rate and carrying capacity of the prey.
    p, q : float
        Holling type II predation: ``p*u2 / (1 + q*u2)``.
    u_m : float
        Predator density above which the taxis sensitivity vanishes.
    M1, M2 : float
        Expected L-infinity bounds for ``u1`` and ``u2``.
    """

    d1: float = 0.1
    d2: float = 0.1
    e: float = 1.0
    a: float = 0.25
    r: float = 2.0
    K: float = 4.0
    p: float = 1.0
    q: float = 1.0
    u_m: float = 2.0
    M1: float = 2.0
    M2: float = 4.0

    def __post_init__(self):
        for name in ("d1", "d2", "e", "a", "r", "K", "p", "u_m", "M2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"ModelParams.{name} must be positive, got {value!r}")
        if not (np.isfinite(self.q) and self.q >= 0):
            raise ValueError(f"ModelParams.q must be nonnegative, got {self.q!r}")
        if not self.M1 >= self.u_m:
            raise ValueError(
                f"ModelParams.M1={self.M1!r} must be >= u_m={self.u_m!r}")

    @property
    def bounds(self):
        """``(M1, M2)`` as a tuple."""
        return (self.M1, self.M2)

    def to_dict(self):
        return asdict(self)


def predation_rate(u2, params):
    """Holling type II rate ``p*u2/(1+q*u2)``; zero for negative prey."""
    u2 = np.asarray(u2, dtype=float)
    pos = np.maximum(u2, 0.0)
    return params.p * pos / (1.0 + params.q * pos)


def logistic_growth(u2, params):
    """Logistic prey growth ``r*u2*(1 - u2/K)``."""
    u2 = np.asarray(u2, dtype=float)
    return params.r * u2 * (1.0 - u2 / params.K)


def chi(u1, params):
    """Taxis sensitivity ``u1*(u_m - u1)`` on ``[0, u_m]``, zero elsewhere."""
    u1 = np.asarray(u1, dtype=float)
    # the product is negative exactly outside [0, u_m]
    return np.maximum(u1 * (params.u_m - u1), 0.0)


def reaction_f1(u1, u2, params):
    """Predator reaction term with its sign extension.

    ``e*pi(u2)*u1 - a*u1`` for nonnegative densities, ``-a*u1`` when only
    the prey is negative and ``0`` whenever ``u1 < 0``.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    # predation_rate already vanishes for u2 < 0, which gives the -a*u1 branch
    value = params.e * predation_rate(u2, params) * u1 - params.a * u1
    return np.where(u1 >= 0.0, value, 0.0)


def reaction_f2(u1, u2, params):
    """Prey reaction term with its sign extension.

    ``k(u2) - pi(u2)*u1`` for nonnegative densities, ``k(u2)`` when the
    predator is negative and ``0`` whenever ``u2 < 0``.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    consumed = predation_rate(u2, params) * np.maximum(u1, 0.0)
    value = logistic_growth(u2, params) - consumed
    return np.where(u2 >= 0.0, value, 0.0)


def reactions(u1, u2, params):
    """``(F1, F2)`` together, sharing the predation-rate evaluation."""
    shape = np.broadcast(np.asarray(u1), np.asarray(u2)).shape
    # in-place masking below needs real arrays, not numpy scalars
    u1, u2 = (np.broadcast_to(np.asarray(v, dtype=float), shape or (1,)) for v in (u1, u2))
    pos2 = np.maximum(u2, 0.0)
    rate = pos2 * params.p
    rate /= 1.0 + params.q * pos2
    f1 = params.e * rate - params.a
    f1 *= u1
    f1[u1 < 0.0] = 0.0
    f2 = 1.0 - u2 / params.K
    f2 *= params.r * u2
    f2 -= rate * np.maximum(u1, 0.0)
    f2[u2 < 0.0] = 0.0
    return f1.reshape(shape), f2.reshape(shape)


def reaction_jacobian(u1, u2, params):
    """Partial derivatives ``(dF1/du1, dF1/du2, dF2/du1, dF2/du2)``.

    Taken branchwise, with the one-sided value on the branch boundaries.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    on1 = u1 >= 0.0
    on2 = u2 >= 0.0
    pos2 = np.maximum(u2, 0.0)
    rate = params.p * pos2 / (1.0 + params.q * pos2)
    drate = np.where(on2, params.p / (1.0 + params.q * pos2) ** 2, 0.0)
    pos1 = np.maximum(u1, 0.0)
    f1_1 = np.where(on1, params.e * rate - params.a, 0.0)
    f1_2 = np.where(on1, params.e * drate * u1, 0.0)
    f2_1 = np.where(on1 & on2, -rate, 0.0)
    f2_2 = np.where(on2, params.r * (1.0 - 2.0 * u2 / params.K) - drate * pos1, 0.0)
    return f1_1, f1_2, f2_1, f2_2


def chi_derivative(u1, params):
    """Derivative of :func:`chi`, zero outside ``[0, u_m]``."""
    u1 = np.asarray(u1, dtype=float)
    inside = (u1 >= 0.0) & (u1 <= params.u_m)
    return np.where(inside, params.u_m - 2.0 * u1, 0.0)
