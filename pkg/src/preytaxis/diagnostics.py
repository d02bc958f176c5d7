"""Statistics computed from recorded trajectories.

Every expectation is an ensemble mean reported together with its standard
error.  Norms are evaluated from spectral coefficients, which for the
cosine eigenbasis coincide with quadrature norms of the reconstructed
fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from . import model as _model
from .galerkin import as_batch


def mean_se(x, axis=0):
    """Ensemble mean and standard error along ``axis``."""
    x = np.asarray(x, dtype=float)
    m = x.shape[axis]
    mean = x.mean(axis=axis)
    if m < 2:
        return mean, np.zeros_like(mean)
    return mean, x.std(axis=axis, ddof=1) / np.sqrt(m)


# -- Stampacchia truncation ---------------------------------------------------

def stampacchia_s(w, eps):
    """Twice differentiable approximation of ``(w^-)^2`` and its derivatives.

    Parameters
    ----------
    w : array_like
        Evaluation points.
    eps : float
        Width of the quartic transition layer ``[-eps, 0)``.

    Returns
    -------
    value, first, second : ndarray
        ``S``, ``S'`` and ``S''`` at ``w``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    w = np.asarray(w, dtype=float)
    outer = w < -eps
    layer = (w >= -eps) & (w < 0.0)
    value = np.where(outer, w**2 - eps**2 / 6.0,
                     np.where(layer, -w**4 / (2 * eps**2) - 4 * w**3 / (3 * eps), 0.0))
    first = np.where(outer, 2.0 * w,
                     np.where(layer, -2 * w**3 / eps**2 - 4 * w**2 / eps, 0.0))
    second = np.where(outer, 2.0,
                      np.where(layer, -6 * w**2 / eps**2 - 8 * w / eps, 0.0))
    return value, first, second


# -- positivity and upper bounds ----------------------------------------------

@dataclass
class PositivityReport:
    """Ensemble means of negative parts over the recorded times.

    Arrays have shape ``(n_records, 2)`` (equation on the last axis).
    ``excess_*`` refer to ``(M_i - u_i)^-``, the part above the bound.
    """

    times: np.ndarray
    neg_mass_sq: np.ndarray
    excess_mass_sq: np.ndarray
    neg_smoothed: np.ndarray
    excess_smoothed: np.ndarray
    l2_sq: np.ndarray
    neg_se: np.ndarray = field(repr=False)
    excess_se: np.ndarray = field(repr=False)
    stampacchia_eps: float = 1e-3
    n_traj: int = 1

    def at_end(self):
        """``(neg, excess, l2_sq)`` at the final recorded time."""
        return self.neg_mass_sq[-1], self.excess_mass_sq[-1], self.l2_sq[-1]


def field_masses(u, bound, weights, eps):
    """Quadratures of ``(u^-)^2``, ``((bound-u)^-)^2`` and their smoothed forms."""
    neg = np.minimum(u, 0.0)
    over = np.minimum(bound - u, 0.0)
    s_neg = stampacchia_s(u, eps)[0]
    s_over = stampacchia_s(bound - u, eps)[0]
    return tuple(np.sum(a * weights, axis=-1) for a in (neg**2, over**2, s_neg, s_over))


def positivity_scan(trajs, eps=1e-3, basis=None, params=None):
    """Negative and excess masses of ``u1, u2`` at every recorded time.

    ``basis`` and ``params`` default to those of the trajectories' system;
    the bounds are ``params.M1`` and ``params.M2``.
    """
    batch = as_batch(trajs)
    if len(batch.times) == 0:
        raise ValueError("trajectory is empty")
    basis = basis or batch.system.basis
    params = params or batch.system.params
    w = basis.weights
    out = {k: [] for k in ("neg", "over", "s_neg", "s_over", "l2")}
    for c, bound in ((batch.c1, params.M1), (batch.c2, params.M2)):
        u = c @ basis.values
        neg, over, s_neg, s_over = field_masses(u, bound, w, eps)
        out["neg"].append(neg)
        out["over"].append(over)
        out["s_neg"].append(s_neg)
        out["s_over"].append(s_over)
        out["l2"].append(np.sum(c**2, axis=-1))
    stats = {k: mean_se(np.stack(v, axis=-1)) for k, v in out.items()}
    return PositivityReport(
        batch.times.copy(), stats["neg"][0], stats["over"][0], stats["s_neg"][0],
        stats["s_over"][0], stats["l2"][0], stats["neg"][1], stats["over"][1],
        float(eps), len(batch))


# -- energy estimates ---------------------------------------------------------

@dataclass
class EstimateReport:
    """Monte Carlo energy functionals per equation (last axis has length 2).

    ``sup_l2_sq`` is ``E sup_t ||u_i||^2``, ``mean_l2_sq_at`` the curve
    ``E ||u_i(t)||^2`` on the recorded times, ``grad_energy``
    ``E int_0^T ||grad u_i||^2 dt`` and ``moment_q`` ``E sup_t ||u_i||^q``.
    """

    times: np.ndarray
    sup_l2_sq: np.ndarray
    mean_l2_sq_at: np.ndarray
    grad_energy: np.ndarray
    moment_q: np.ndarray
    q: float
    sup_l2_sq_se: np.ndarray = field(repr=False)
    grad_energy_se: np.ndarray = field(repr=False)
    moment_q_se: np.ndarray = field(repr=False)
    mean_l2_sq_se: np.ndarray = field(repr=False)
    n_traj: int = 1

    def summary(self):
        return {"sup_l2_sq": self.sup_l2_sq, "grad_energy": self.grad_energy,
                "moment_q": self.moment_q}


def energy_scan(trajs, q=4.0):
    """Energy and moment functionals of an ensemble.

    Time integrals use the trapezoid rule on the recorded times.
    """
    if not q >= 2:
        raise ValueError("moment order q must be at least 2")
    batch = as_batch(trajs)
    lam = batch.system.basis.eigenvalues
    l2 = np.stack([np.sum(batch.c1**2, -1), np.sum(batch.c2**2, -1)], axis=-1)
    h1 = np.stack([np.sum(lam * batch.c1**2, -1), np.sum(lam * batch.c2**2, -1)], axis=-1)
    if len(batch.times) > 1:
        grad = trapezoid(h1, batch.times, axis=1)
    else:
        grad = np.zeros(h1.shape[::2])
    sup = l2.max(axis=1)
    mom = sup ** (q / 2.0)
    s, s_se = mean_se(sup)
    g, g_se = mean_se(grad)
    m, m_se = mean_se(mom)
    curve, curve_se = mean_se(l2)
    return EstimateReport(batch.times.copy(), s, curve, g, m, float(q), s_se, g_se, m_se,
                          curve_se, len(batch))


# -- time translations --------------------------------------------------------

@dataclass
class TranslationReport:
    """Translation statistic ``stat[d, i]`` for each ``delta`` and equation."""

    deltas: np.ndarray
    stat: np.ndarray
    stat_se: np.ndarray
    fitted_exponent: np.ndarray
    lags: np.ndarray = field(repr=False)


def fit_exponent(x, y):
    """Least-squares slope of ``log y`` against ``log x`` (``nan`` if any ``y <= 0``)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 2 or np.any(y <= 0):
        return np.nan
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def translation_scan(trajs, deltas):
    """Dual-norm modulus of continuity in time.

    For each ``delta`` the statistic averages, over start times ``t`` with
    ``t + delta <= T`` and over the ensemble, the largest
    ``||u_i(t + tau) - u_i(t)||_{(H^1)*}`` for recorded ``0 < tau <= delta``.
    Every ``delta`` must be a positive multiple of the recording interval.
    """
    batch = as_batch(trajs)
    step = float(batch.times[1] - batch.times[0]) if len(batch.times) > 1 else np.inf
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    lags = np.rint(deltas / step).astype(int) if np.isfinite(step) else np.zeros(len(deltas), int)
    for d, lag in zip(deltas, lags):
        if lag < 1 or abs(lag * step - d) > 1e-9 * max(d, step):
            raise ValueError(
                f"delta={d:g} is not a positive multiple of the recording interval {step:g}")
        if lag >= len(batch.times):
            raise ValueError(f"delta={d:g} exceeds the recorded horizon")
    weight = 1.0 / np.sqrt(1.0 + batch.system.basis.eigenvalues)
    C = np.stack([batch.c1, batch.c2], axis=-2) * weight    # (B, R, 2, n)
    R = C.shape[1]
    order = np.argsort(lags)
    stat = np.empty((len(deltas), 2))
    se = np.empty((len(deltas), 2))
    running = np.zeros((C.shape[0], R, 2))
    lag_done = 0
    for j in order:
        for tau in range(lag_done + 1, lags[j] + 1):
            diff = np.linalg.norm(C[:, tau:] - C[:, :-tau], axis=-1)
            running[:, :R - tau] = np.maximum(running[:, :R - tau], diff)
        lag_done = max(lag_done, lags[j])
        per_traj = running[:, :R - lags[j]].mean(axis=1)
        stat[j], se[j] = mean_se(per_traj)
    expo = np.array([fit_exponent(deltas, stat[:, i]) for i in range(2)])
    return TranslationReport(deltas, stat, se, expo, lags)


# -- weak-form residual -------------------------------------------------------

def weak_form_residual(traj, test_fn, equation):
    """Residual of the integrated weak identity along a recorded trajectory.

    At each recorded time ``t_j`` this is the absolute value of

        <u_i(t_j) - u_i(0), phi> + sum_k h [d_i <grad u_i, grad phi>
            - <taxis flux, grad phi> - <F_i, phi>](t_k)
            - sum_k sum_m <sigma_{i,m}(t_k), phi> dW_{i,m,k}

    with left-point sums over the recorded intervals (the taxis flux
    ``chi(u1) grad u2`` appears only for ``i = 1``).  Every pairing is a
    grid quadrature of physical fields.  The Wiener increments stored at
    step resolution are aggregated to the recording interval, so a thinned
    trajectory gives the coarse replay of the same Brownian path.
    """
    if traj.increments is None:
        raise ValueError("trajectory has no recorded increments")
    if equation not in (1, 2):
        raise ValueError(f"equation must be 1 or 2, got {equation!r}")
    system = traj.system
    basis = system.basis
    params = system.params
    noise = system.noise
    phi = np.asarray(test_fn, dtype=float)
    if phi.shape != (basis.n_modes,):
        raise ValueError(f"test function needs {basis.n_modes} coefficients")
    w = basis.weights
    V = basis.values
    u1 = traj.c1 @ V
    u2 = traj.c2 @ V
    ui = u1 if equation == 1 else u2
    phi_x = phi @ V
    grad_phi = np.einsum("l,dlg->dg", phi, basis.gradients)
    grad_ui = np.einsum("rl,dlg->rdg", traj.c1 if equation == 1 else traj.c2, basis.gradients)

    pairing = np.sum(ui * phi_x * w, axis=-1)
    d = params.d1 if equation == 1 else params.d2
    rate = -d * np.sum(np.sum(grad_ui * grad_phi, axis=1) * w, axis=-1)
    if system.reaction:
        f = _model.reaction_f1(u1, u2, params) if equation == 1 else \
            _model.reaction_f2(u1, u2, params)
        rate = rate + np.sum(f * phi_x * w, axis=-1)
    if equation == 1 and system.taxis:
        grad_u2 = np.einsum("rl,dlg->rdg", traj.c2, basis.gradients)
        flux = _model.chi(u1, params)[:, None, :] * grad_u2
        rate = rate + np.sum(np.sum(flux * grad_phi, axis=1) * w, axis=-1)
    shape = noise.shape_values(equation, u1, u2)
    amp = np.sum(shape * phi_x * w, axis=-1)[:, None] * noise.beta    # (R, K)

    stride = int(traj.record_every)
    inc = np.asarray(traj.increments)[:, equation - 1, :]
    n_int = len(traj.times) - 1
    if inc.shape[0] != n_int * stride:
        raise ValueError("recorded increments do not cover the recorded times")
    dW = inc.reshape(n_int, stride, -1).sum(axis=1)
    h = traj.dt * stride
    det = np.concatenate([[0.0], np.cumsum(rate[:-1] * h)])
    sto = np.concatenate([[0.0], np.cumsum(np.sum(amp[:-1] * dW, axis=-1))])
    return np.abs(pairing - pairing[0] - det - sto)
