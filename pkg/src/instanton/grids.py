"""Time grids, spatial domains and spectral bases.

Fields are plain numpy arrays of shape ``(n_components, n_points)``; a
trajectory stacks fields along a leading time axis, ``(n_steps + 1,
n_components, n_points)``.  Point (0D) systems use ``n_points = 1`` so every
array in the package has the same rank.

Conventions fixed here and relied on everywhere else:

* time integrals use the trapezoid rule on the collocation nodes
  ``t_k = k * dt``;
* spatial inner products use the rectangle rule (periodic), the trapezoid
  rule (Neumann, closed grid including both endpoints) or the plain
  Euclidean dot (point systems);
* the periodic basis is the real FFT, the Neumann basis the type-I cosine
  transform, both diagonalising constant-coefficient operators exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "TimeGrid",
    "SpatialDomain",
    "SpectralBasis",
    "build_basis",
    "inner_product",
    "time_quadrature",
    "path_inner",
    "path_norm",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform collocation grid on [0, T] with ``n_steps`` intervals."""

    total_time: float
    n_steps: int

    def __post_init__(self):
        if not self.total_time > 0.0:
            raise ValueError("total_time must be positive")
        if self.n_steps < 2:
            raise ValueError("need at least two time steps")

    @property
    def dt(self) -> float:
        return self.total_time / self.n_steps

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.total_time, self.n_steps + 1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights on the nodes."""
        w = np.full(self.n_steps + 1, self.dt)
        w[0] = 0.5 * self.dt
        w[-1] = 0.5 * self.dt
        return w

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.total_time, self.n_steps * factor)


@dataclass(frozen=True)
class SpatialDomain:
    """Spatial discretisation: 'periodic', 'neumann' or 'point'.

    Periodic grids store ``n_points`` equispaced nodes with the right
    endpoint omitted; Neumann grids include both endpoints (closed grid);
    point systems carry a single dummy node and a Euclidean inner product.
    """

    kind: str
    length: float = 0.0
    n_points: int = 1

    def __post_init__(self):
        if self.kind not in ("periodic", "neumann", "point"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "point":
            if self.n_points != 1:
                raise ValueError("point domains have exactly one node")
        else:
            if not self.length > 0.0:
                raise ValueError("spatial domains need a positive length")
            if self.n_points < 4:
                raise ValueError("spatial domains need at least 4 nodes")

    @cached_property
    def x(self) -> np.ndarray:
        if self.kind == "periodic":
            return np.arange(self.n_points) * (self.length / self.n_points)
        if self.kind == "neumann":
            return np.linspace(0.0, self.length, self.n_points)
        return np.zeros(1)

    @property
    def dx(self) -> float:
        if self.kind == "periodic":
            return self.length / self.n_points
        if self.kind == "neumann":
            return self.length / (self.n_points - 1)
        return 1.0

    @cached_property
    def quad_weights(self) -> np.ndarray:
        if self.kind == "periodic":
            return np.full(self.n_points, self.dx)
        if self.kind == "neumann":
            w = np.full(self.n_points, self.dx)
            w[0] = 0.5 * self.dx
            w[-1] = 0.5 * self.dx
            return w
        return np.ones(1)

    def refined(self, factor: int) -> "SpatialDomain":
        if self.kind == "point":
            return self
        if self.kind == "periodic":
            return SpatialDomain(self.kind, self.length, self.n_points * factor)
        # keep the closed-grid structure: double the number of intervals
        return SpatialDomain(self.kind, self.length, (self.n_points - 1) * factor + 1)


def inner_product(f: np.ndarray, g: np.ndarray, domain: SpatialDomain) -> float:
    """Quadrature inner product, summed over components."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch {f.shape} vs {g.shape}")
    if f.shape[-1] != domain.n_points:
        raise ValueError("last axis must match the spatial grid")
    return float(np.sum(f * g * domain.quad_weights))


def time_quadrature(series: np.ndarray, tgrid: TimeGrid) -> float | np.ndarray:
    """Trapezoid integral over the time axis (axis 0)."""
    series = np.asarray(series)
    if series.shape[0] != tgrid.n_steps + 1:
        raise ValueError("series length must match the time grid")
    return np.tensordot(tgrid.weights, series, axes=(0, 0))


def path_inner(u: np.ndarray, v: np.ndarray, tgrid: TimeGrid, domain: SpatialDomain) -> float:
    """Space-time inner product sum_k w_k <u_k, v_k> over a trajectory."""
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    return float(np.einsum("k,knx,knx,x->", tgrid.weights, u, v, domain.quad_weights))


def path_norm(u: np.ndarray, tgrid: TimeGrid, domain: SpatialDomain) -> float:
    return float(np.sqrt(max(path_inner(u, u, tgrid, domain), 0.0)))


@dataclass(frozen=True)
class SpectralBasis:
    """Diagonalising basis for constant-coefficient operators.

    ``eigenvalues`` are the Laplacian symbols per mode; ``first_deriv`` is
    the d/dx symbol (periodic only, Nyquist zeroed so odd-derivative
    operators stay real on real fields).  ``analyze``/``synthesize`` are an
    exact transform pair; symbols act diagonally between them.
    """

    kind: str
    domain: SpatialDomain
    n_modes: int
    eigenvalues: np.ndarray = field(repr=False)
    first_deriv: np.ndarray | None = field(repr=False, default=None)

    def analyze(self, values: np.ndarray) -> np.ndarray:
        if self.kind == "periodic":
            return sfft.rfft(values, axis=-1)
        return sfft.dct(values, type=1, axis=-1)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        if self.kind == "periodic":
            return sfft.irfft(coeffs, n=self.domain.n_points, axis=-1)
        return sfft.idct(coeffs, type=1, axis=-1)

    def apply_symbol(self, symbol: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Apply the diagonal operator with the given per-mode symbol."""
        return self.synthesize(self.analyze(values) * symbol)

    # --- series representations -------------------------------------------------

    @cached_property
    def mode_norms(self) -> np.ndarray:
        """Discrete quadrature norms <e_k, e_k> of the basis functions.

        Only defined for the Neumann cosine basis, where the trapezoid rule
        on the closed grid reproduces the discrete orthogonality of the
        type-I cosine transform exactly.
        """
        if self.kind != "neumann":
            raise ValueError("mode_norms is specific to the Neumann basis")
        ln = np.full(self.n_modes, 0.5 * self.domain.length)
        ln[0] = self.domain.length
        ln[-1] = self.domain.length
        return ln

    def series_coefficients(self, values: np.ndarray) -> np.ndarray:
        """Amplitudes a_k of the plain cosine series f = sum_k a_k cos(k pi x / L)."""
        if self.kind != "neumann":
            raise ValueError("series_coefficients is specific to the Neumann basis")
        n = self.domain.n_points
        raw = sfft.dct(values, type=1, axis=-1) / (2.0 * (n - 1))
        scale = np.full(self.n_modes, 2.0)
        scale[0] = 1.0
        scale[-1] = 1.0
        return raw * scale

    def from_series(self, amplitudes: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`series_coefficients`."""
        if self.kind != "neumann":
            raise ValueError("from_series is specific to the Neumann basis")
        n = self.domain.n_points
        scale = np.full(self.n_modes, 2.0)
        scale[0] = 1.0
        scale[-1] = 1.0
        return sfft.idct(np.asarray(amplitudes) * (2.0 * (n - 1)) / scale, type=1, axis=-1)

    def parseval_norm_sq(self, values: np.ndarray) -> float:
        """Quadrature norm^2 of a field, evaluated from its coefficients."""
        if self.kind == "periodic":
            c = self.analyze(values)
            n = self.domain.n_points
            w = np.full(self.n_modes, 2.0)
            w[0] = 1.0
            if n % 2 == 0:
                w[-1] = 1.0
            return float(self.domain.dx / n * np.sum(w * np.abs(c) ** 2))
        a = self.series_coefficients(values)
        return float(np.sum(self.mode_norms * a**2))


def build_basis(domain: SpatialDomain) -> SpectralBasis:
    """Construct the spectral basis matching the domain boundary conditions."""
    if domain.kind == "periodic":
        n = domain.n_points
        k = np.arange(n // 2 + 1)
        kappa = 2.0 * np.pi * k / domain.length
        lam = -(kappa**2)
        deriv = 1j * kappa
        if n % 2 == 0:
            deriv = deriv.copy()
            deriv[-1] = 0.0  # odd derivatives drop the Nyquist mode
        return SpectralBasis("periodic", domain, n // 2 + 1, lam, deriv)
    if domain.kind == "neumann":
        k = np.arange(domain.n_points)
        lam = -((np.pi * k / domain.length) ** 2)
        return SpectralBasis("neumann", domain, domain.n_points, lam, None)
    raise ValueError("point systems have no spectral basis")
