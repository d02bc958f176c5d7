"""Neumann cosine eigenbasis on intervals and rectangles.

The basis functions are the eigenfunctions of the Neumann Laplacian on a
box, ``e(x) = prod_a phi_{k_a}(x_a)`` with ``phi_0 = 1/sqrt(L)`` and
``phi_k = sqrt(2/L) cos(k pi x / L)``.  Because the basis diagonalises the
Laplacian, diffusion, the Neumann-Poisson solve and the dual ``(H^1)*``
norm are all closed-form on the coefficient vectors.

Fields live on a uniform tensor grid that includes the end points.  The
trapezoid rule on that grid integrates products of cosines (and products
of sines) exactly as long as the summed wave index stays below
``2*(grid_points - 1)``, which is what makes projection and reconstruction
exact inverses on the span.

Coefficient arrays have shape ``(..., n_modes)`` and grid fields have shape
``(..., G)`` where ``G`` is the total number of grid points (flattened in C
order for 2D); any leading batch axes are carried through.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Domain:
    """An interval (``dim=1``) or rectangle (``dim=2``) with its grid.

    Parameters
    ----------
    lengths : tuple of float
        Extent of the box along each axis; the box is ``[0, L_a]``.
    grid_points : tuple of int
        Number of quadrature points per axis, end points included.
    """

    lengths: tuple
    grid_points: tuple

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        points = np.atleast_1d(self.grid_points)
        if len(points) == 1 and len(lengths) > 1:
            points = np.repeat(points, len(lengths))
        points = tuple(int(v) for v in points)
        if len(lengths) not in (1, 2):
            raise ValueError("only 1D intervals and 2D rectangles are supported")
        if len(points) != len(lengths):
            raise ValueError("grid_points must give one count per axis")
        if any(not (np.isfinite(v) and v > 0) for v in lengths):
            raise ValueError(f"lengths must be positive, got {lengths}")
        if any(v < 4 for v in points):
            raise ValueError(f"need at least 4 grid points per axis, got {points}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "grid_points", points)

    @classmethod
    def interval(cls, length=1.0, grid_points=128):
        return cls((length,), (grid_points,))

    @classmethod
    def rectangle(cls, lx=1.0, ly=1.0, grid_points=64):
        return cls((lx, ly), grid_points)

    @property
    def dim(self):
        return len(self.lengths)

    @property
    def shape(self):
        return self.grid_points

    @property
    def size(self):
        return int(np.prod(self.grid_points))

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    def axes(self):
        """Grid coordinates along each axis."""
        return [np.linspace(0.0, L, n) for L, n in zip(self.lengths, self.grid_points)]

    def axis_weights(self):
        """Trapezoid weights along each axis (half weight at the end points)."""
        out = []
        for L, n in zip(self.lengths, self.grid_points):
            w = np.full(n, L / (n - 1))
            w[0] *= 0.5
            w[-1] *= 0.5
            out.append(w)
        return out

    def points(self):
        """Grid points as an array of shape ``(G, dim)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def weights(self):
        """Tensor-product quadrature weights, shape ``(G,)``."""
        w = self.axis_weights()
        out = w[0]
        for wa in w[1:]:
            out = np.multiply.outer(out, wa)
        return out.ravel()

    def as_grid(self, values):
        """Reshape a flat field ``(..., G)`` to ``(..., *shape)``."""
        values = np.asarray(values)
        return values.reshape(values.shape[:-1] + self.shape)


def _cosine_factor(k, L, x):
    x = np.asarray(x, dtype=float)
    if k == 0:
        return np.full_like(x, 1.0 / np.sqrt(L))
    return np.sqrt(2.0 / L) * np.cos(k * np.pi * x / L)


def _cosine_factor_derivative(k, L, x):
    x = np.asarray(x, dtype=float)
    if k == 0:
        return np.zeros_like(x)
    return -np.sqrt(2.0 / L) * (k * np.pi / L) * np.sin(k * np.pi * x / L)


@dataclass(frozen=True, eq=False)
class BasisSet:
    """First ``n_modes`` Neumann eigenfunctions sampled on the domain grid.

    Attributes
    ----------
    eigenvalues : ndarray, shape (n_modes,)
        Eigenvalues of ``-Laplacian``, nondecreasing, starting at 0.
    mode_indices : ndarray of int, shape (n_modes, dim)
        Wave index per axis of each mode.
    values : ndarray, shape (n_modes, G)
        Basis functions on the grid.
    gradients : ndarray, shape (dim, n_modes, G)
        Analytic gradients of the basis functions on the grid.
    weights : ndarray, shape (G,)
        Quadrature weights.
    """

    domain: Domain
    n_modes: int
    eigenvalues: np.ndarray = field(repr=False)
    mode_indices: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    gradients: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def lambda_max(self):
        return float(self.eigenvalues[-1])

    def evaluate(self, coeffs, points):
        """Evaluate the expansion at arbitrary points of shape ``(P, dim)``."""
        return np.asarray(coeffs) @ self._functions_at(points, None)

    def evaluate_gradient(self, coeffs, points):
        """Gradient of the expansion at arbitrary points, shape ``(..., dim, P)``."""
        coeffs = np.asarray(coeffs)
        grads = [coeffs @ self._functions_at(points, a) for a in range(self.domain.dim)]
        return np.stack(grads, axis=-2)

    def _functions_at(self, points, derivative_axis):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[-1] != self.domain.dim:
            raise ValueError(f"points must have {self.domain.dim} columns")
        out = np.ones((self.n_modes, pts.shape[0]))
        for m, idx in enumerate(self.mode_indices):
            for a, (k, L) in enumerate(zip(idx, self.domain.lengths)):
                if a == derivative_axis:
                    out[m] *= _cosine_factor_derivative(k, L, pts[:, a])
                else:
                    out[m] *= _cosine_factor(k, L, pts[:, a])
        return out


def build_basis(domain, n_modes):
    """Build the ``n_modes`` lowest Neumann eigenfunctions on ``domain``.

    Modes are sorted by eigenvalue, ties broken lexicographically by wave
    index.  Raises ``ValueError`` when a required wave index reaches half the
    grid resolution on its axis (the products in the Galerkin pairings would
    alias).
    """
    n_modes = int(n_modes)
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    limits = [n // 2 for n in domain.grid_points]
    candidates = []
    for idx in itertools.product(*(range(m) for m in limits)):
        lam = sum((k * np.pi / L) ** 2 for k, L in zip(idx, domain.lengths))
        candidates.append((lam, idx))
    candidates.sort()
    if n_modes > len(candidates):
        raise ValueError(
            f"n_modes={n_modes} exceeds what the grid {domain.grid_points} resolves "
            f"without aliasing ({len(candidates)} modes with wave index < grid_points/2)")
    chosen = candidates[:n_modes]
    eigenvalues = np.array([lam for lam, _ in chosen])
    indices = np.array([idx for _, idx in chosen], dtype=int)

    pts = domain.points()
    values = np.ones((n_modes, pts.shape[0]))
    gradients = np.ones((domain.dim, n_modes, pts.shape[0]))
    for m, idx in enumerate(indices):
        for a, (k, L) in enumerate(zip(idx, domain.lengths)):
            f = _cosine_factor(k, L, pts[:, a])
            values[m] *= f
            for b in range(domain.dim):
                if b == a:
                    gradients[b, m] *= _cosine_factor_derivative(k, L, pts[:, a])
                else:
                    gradients[b, m] *= f
    for arr in (eigenvalues, indices, values, gradients):
        arr.setflags(write=False)
    weights = domain.weights()
    weights.setflags(write=False)
    return BasisSet(domain, n_modes, eigenvalues, indices, values, gradients, weights)


@dataclass(frozen=True)
class SpectralState:
    """Coefficients of the predator/prey pair at one time."""

    time: float
    c1: np.ndarray
    c2: np.ndarray

    def __post_init__(self):
        c1 = np.asarray(self.c1, dtype=float)
        c2 = np.asarray(self.c2, dtype=float)
        if c1.shape != c2.shape:
            raise ValueError(f"c1 and c2 shapes differ: {c1.shape} vs {c2.shape}")
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "c2", c2)
        object.__setattr__(self, "time", float(self.time))

    @property
    def n_modes(self):
        return self.c1.shape[-1]

    @classmethod
    def from_fields(cls, u1, u2, basis, time=0.0):
        """Project grid fields onto the basis."""
        return cls(time, project(u1, basis), project(u2, basis))


def _flat_field(field_values, basis):
    f = np.asarray(field_values, dtype=float)
    shape = basis.domain.shape
    if basis.domain.dim > 1 and f.shape[-len(shape):] == shape:
        f = f.reshape(f.shape[:-len(shape)] + (basis.domain.size,))
    if f.shape[-1:] != (basis.domain.size,):
        raise ValueError(
            f"field with trailing shape {f.shape[-1:]} does not match the grid "
            f"of {basis.domain.size} points")
    return f


def _check_coeffs(coeffs, basis):
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-1:] != (basis.n_modes,):
        raise ValueError(
            f"expected {basis.n_modes} coefficients, got trailing shape {c.shape[-1:]}")
    return c


def project(field_values, basis):
    """L2 projection onto the span: ``(<f, e_l>)_l`` by grid quadrature."""
    f = _flat_field(field_values, basis)
    return (f * basis.weights) @ basis.values.T


def reconstruct(coeffs, basis):
    """Evaluate ``sum_l c_l e_l`` on the grid, shape ``(..., G)``."""
    return _check_coeffs(coeffs, basis) @ basis.values


def gradient_field(coeffs, basis):
    """Exact gradient of the expansion on the grid, shape ``(..., dim, G)``."""
    c = _check_coeffs(coeffs, basis)
    return np.stack([c @ g for g in basis.gradients], axis=-2)


def laplacian_coeffs(coeffs, basis):
    """Spectral Laplacian ``-lambda_l * c_l``."""
    return -basis.eigenvalues * _check_coeffs(coeffs, basis)


def weak_pairing(flux, basis):
    """Weak divergence pairing ``(<F, grad e_l>)_l`` of a vector field.

    ``flux`` has shape ``(..., dim, G)``.  This is the vector that replaces
    ``-div F`` in the Galerkin equations, so the divergence is never
    formed pointwise.
    """
    F = np.asarray(flux, dtype=float)
    dim = basis.domain.dim
    if F.shape[-2:] != (dim, basis.domain.size):
        raise ValueError(
            f"flux must have trailing shape {(dim, basis.domain.size)}, got {F.shape[-2:]}")
    out = 0.0
    for a in range(dim):
        out = out + (F[..., a, :] * basis.weights) @ basis.gradients[a].T
    return out


def solve_neumann_poisson(w_coeffs, basis):
    """Zero-mean solution of ``-Laplacian N = w - mean(w)`` with Neumann BC."""
    w = _check_coeffs(w_coeffs, basis)
    lam = basis.eigenvalues
    inv = np.zeros_like(lam)
    inv[lam > 0] = 1.0 / lam[lam > 0]
    return w * inv


def norms(coeffs, basis):
    """Return ``(l2, h1_semi, h1_dual)`` norms of a coefficient vector.

    ``h1_dual`` is the exact ``(H^1)*`` norm in the eigenbasis,
    ``sqrt(sum c_l^2 / (1 + lambda_l))``.
    """
    c = _check_coeffs(coeffs, basis)
    lam = basis.eigenvalues
    l2 = np.sqrt(np.sum(c**2, axis=-1))
    h1_semi = np.sqrt(np.sum(lam * c**2, axis=-1))
    h1_dual = np.sqrt(np.sum(c**2 / (1.0 + lam), axis=-1))
    return l2, h1_semi, h1_dual


def mean_value(coeffs, basis):
    """Spatial mean of the expansion (only the constant mode contributes)."""
    c = _check_coeffs(coeffs, basis)
    return c[..., 0] / np.sqrt(basis.domain.volume)


def quadrature_integral(field_values, basis):
    """Integral of a grid field over the domain."""
    return _flat_field(field_values, basis) @ basis.weights
