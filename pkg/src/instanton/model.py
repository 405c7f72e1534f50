"""Model interface: drift pieces, noise covariance and endpoint filters.

A model supplies its drift split into a constant-coefficient linear part L
(given per component as a spectral symbol) and a pointwise part N, together
with the noise covariance a(u) = sigma(u)* sigma(u) and the derivative of the
covariance quadratic form.  All callbacks act on fields of shape
``(n_components, n_points)`` and return fields of the same shape.

Degenerate noise is the normal case here: unforced components simply carry
zero rows through ``sigma_apply`` and ``covariance_apply``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .grids import SpatialDomain, SpectralBasis, build_basis, inner_product

__all__ = [
    "Model",
    "EndpointFilter",
    "basis_for",
    "drift",
    "hamiltonian",
    "filter_residual",
    "covariance_quadratic",
]


@lru_cache(maxsize=32)
def basis_for(domain: SpatialDomain) -> SpectralBasis | None:
    """Cached spectral basis for a domain; None for point systems."""
    if domain.kind == "point":
        return None
    return build_basis(domain)


@dataclass(frozen=True)
class Model:
    """A stochastic evolution equation du = (L u + N(u)) dt + sqrt(eps) sigma(u) dW.

    Attributes
    ----------
    linear_symbols : callable(basis) -> (n_components, n_modes) array
        Per-mode symbols of L (complex for advection terms).  None for
        point systems, where the whole drift lives in ``nonlinear``.
    nonlinear : callable(u) -> field
        Pointwise drift part N(u).
    nonlinear_jacobian_adjoint : callable(u, v) -> field
        Action of (dN/du)^T on v; pointwise, hence self-consistent with any
        diagonal spatial quadrature.
    sigma_apply : callable(u, w) -> field or None
        Noise operator sigma(u) acting on w.  None when only the covariance
        is available in closed form (boundary noise).
    covariance_apply : callable(u, v) -> field
        a(u) v with a = sigma* sigma.
    covariance_variation : callable(u, v, w) -> field or None
        Gradient in u of <v, a(u) w>; None means additive noise (zero).
    forced_components : which rows the noise actually drives (documentation
        and test hook for the degeneracy structure).
    """

    name: str
    component_names: tuple[str, ...]
    domain: SpatialDomain
    parameters: dict = field(repr=False)
    nonlinear: Callable = field(repr=False)
    nonlinear_jacobian_adjoint: Callable = field(repr=False)
    covariance_apply: Callable = field(repr=False)
    linear_symbols: Callable | None = field(repr=False, default=None)
    sigma_apply: Callable | None = field(repr=False, default=None)
    covariance_variation: Callable | None = field(repr=False, default=None)
    forced_components: tuple[bool, ...] = ()
    equations: str = ""

    @property
    def n_components(self) -> int:
        return len(self.component_names)

    @property
    def is_point(self) -> bool:
        return self.domain.kind == "point"

    def field_shape(self) -> tuple[int, int]:
        return (self.n_components, self.domain.n_points)

    def zero_field(self) -> np.ndarray:
        return np.zeros(self.field_shape())

    def covariance_variation_or_zero(self, u, v, w) -> np.ndarray:
        if self.covariance_variation is None:
            return np.zeros_like(u)
        return self.covariance_variation(u, v, w)


def drift(model: Model, u: np.ndarray, basis: SpectralBasis | None = None) -> np.ndarray:
    """Full deterministic drift b(u) = L u + N(u)."""
    b = model.nonlinear(u)
    if model.linear_symbols is not None:
        if basis is None:
            basis = basis_for(model.domain)
        sym = model.linear_symbols(basis)
        b = b + basis.apply_symbol(sym, u)
    return b


def hamiltonian(model: Model, u: np.ndarray, p: np.ndarray,
                basis: SpectralBasis | None = None) -> float:
    """H(u, p) = <b(u), p> + 1/2 <p, a(u) p> in the domain inner product."""
    b = drift(model, u, basis)
    ap = model.covariance_apply(u, p)
    return inner_product(b, p, model.domain) + 0.5 * inner_product(p, ap, model.domain)


def covariance_quadratic(model: Model, u: np.ndarray, v: np.ndarray) -> float:
    """<v, a(u) v>, the squared noise-space norm of v (nonnegative)."""
    return max(inner_product(v, model.covariance_apply(u, v), model.domain), 0.0)


@dataclass(frozen=True)
class EndpointFilter:
    """Self-adjoint idempotent endpoint observation operator.

    Either the identity or the indicator of an interval, applied as a
    pointwise mask to all components.
    """

    kind: str
    interval: tuple[float, float] | None = None
    mask: np.ndarray | None = field(repr=False, default=None)

    @staticmethod
    def identity() -> "EndpointFilter":
        return EndpointFilter("identity")

    @staticmethod
    def indicator(domain: SpatialDomain, lo: float, hi: float) -> "EndpointFilter":
        if domain.kind == "point":
            raise ValueError("indicator filters need a spatial domain")
        if not lo < hi:
            raise ValueError("empty filter interval")
        mask = ((domain.x >= lo) & (domain.x <= hi)).astype(float)
        return EndpointFilter("indicator", (lo, hi), mask)

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return v
        return v * self.mask

    def describe(self) -> str:
        if self.kind == "identity":
            return "identity (full endpoint enforced)"
        lo, hi = self.interval
        return f"indicator of [{lo:g}, {hi:g}] (windowed endpoint)"


def filter_residual(endpoint_filter: EndpointFilter, phi_end: np.ndarray,
                    u_target: np.ndarray, domain: SpatialDomain) -> float:
    """Quadrature norm of F(phi(T) - uT)."""
    r = endpoint_filter.apply(phi_end - u_target)
    return float(np.sqrt(max(inner_product(r, r, domain), 0.0)))
