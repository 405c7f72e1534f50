"""Forward integration of the first Hamilton equation.

The controlled state equation

    d phi / dt = L phi + N(phi) + a(phi) theta,    phi(0) = u0,

is integrated with a first-order exponential (mild-solution) step in the
diagonalising basis,

    c_{k+1} = exp(L dt) c_k + dt phi1(L dt) * transform(N(phi_k) + a(phi_k) theta_k),

with phi1(z) = (exp(z) - 1)/z.  Point (0D) systems instead use implicit
Euler on the drift with the forcing frozen at the old node,

    phi_{k+1} = phi_k + dt b(phi_{k+1}) + dt a(phi_k) theta_k,

solved by Newton iteration on the (small, dense) component system.  The
backward (adjoint) sweep in :mod:`instanton.adjoint` is the exact transpose
of these maps, which is what makes the reduced gradient match finite
differences to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowupError, FixedPointError
from .grids import SpectralBasis, TimeGrid
from .model import Model, basis_for

__all__ = ["Propagator", "integrate_forward", "phi1"]

BLOWUP_LIMIT = 1.0e12
FIXED_POINT_TOL = 1.0e-12
FIXED_POINT_MAX_ITERS = 50


def _solve_small(a: np.ndarray, r: np.ndarray) -> np.ndarray | None:
    """Direct solve sized for point systems; None on a singular matrix."""
    n = a.shape[0]
    if n == 1:
        return None if a[0, 0] == 0.0 else r / a[0, 0]
    if n == 2:
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        if det == 0.0:
            return None
        return np.array([(a[1, 1] * r[0] - a[0, 1] * r[1]) / det,
                         (a[0, 0] * r[1] - a[1, 0] * r[0]) / det])
    try:
        return np.linalg.solve(a, r)
    except np.linalg.LinAlgError:
        return None


def phi1(z: np.ndarray) -> np.ndarray:
    """(exp(z) - 1) / z with a series branch near zero."""
    z = np.asarray(z)
    out = np.empty_like(z)
    small = np.abs(z) < 1.0e-4
    zs = np.where(small, z, 0.0)
    out[small] = (1.0 + zs / 2.0 + zs**2 / 6.0 + zs**3 / 24.0)[small]
    zb = np.where(small, 1.0, z)
    out[~small] = (np.expm1(zb) / zb)[~small]
    return out


@dataclass
class Propagator:
    """Precomputed step operators for one (model, time grid) pair."""

    model: Model
    tgrid: TimeGrid
    basis: SpectralBasis | None
    exp_dt: np.ndarray | None      # exp(dt * symbol), per component and mode
    phi1_dt: np.ndarray | None     # dt * phi1(dt * symbol)

    @property
    def is_point(self) -> bool:
        return self.basis is None

    def __post_init__(self):
        if self.basis is None:
            n = self.model.n_components
            # batched unit probes: one broadcast call assembles the Jacobian
            self._probes = np.eye(n)[:, :, None]

    def step_forward(self, phi_k: np.ndarray, theta_k: np.ndarray, k: int) -> np.ndarray:
        forcing = self.model.covariance_apply(phi_k, theta_k)
        if self.is_point:
            return self._implicit_step(phi_k, self.tgrid.dt * forcing, k)
        force = self.model.nonlinear(phi_k) + forcing
        c = self.exp_dt * self.basis.analyze(phi_k) + self.phi1_dt * self.basis.analyze(force)
        return self.basis.synthesize(c)

    def _jacobian_adjoint_matrix(self, u: np.ndarray) -> np.ndarray:
        """Dense J_N(u)^T of a point system; row j of the call is J^T e_j."""
        return self.model.nonlinear_jacobian_adjoint(u, self._probes)[..., 0].T

    def _implicit_step(self, phi_k: np.ndarray, forcing: np.ndarray, k: int) -> np.ndarray:
        dt = self.tgrid.dt
        base = phi_k + forcing
        x = base + dt * self.model.nonlinear(phi_k)

        def residual(z):
            return z - base - dt * self.model.nonlinear(z)

        r = residual(x)
        res = float(np.abs(r).max())
        for _ in range(FIXED_POINT_MAX_ITERS):
            if not np.isfinite(res):
                raise BlowupError(k, (k + 1) * dt, "implicit step iterate")
            if res < FIXED_POINT_TOL * (1.0 + float(np.abs(x).max())):
                return x
            a = -dt * self._jacobian_adjoint_matrix(x).T
            a.flat[:: a.shape[0] + 1] += 1.0
            delta = _solve_small(a, r.ravel())
            if delta is None:
                raise FixedPointError(k, res, FIXED_POINT_MAX_ITERS)
            delta = delta.reshape(x.shape)
            # Newton with halving on the residual norm; the cubic drifts
            # overshoot badly from far-out predictors without it
            step = 1.0
            for _ in range(40):
                x_try = x - step * delta
                r_try = residual(x_try)
                res_try = float(np.abs(r_try).max())
                if np.isfinite(res_try) and res_try < res:
                    break
                step *= 0.5
            else:
                raise FixedPointError(k, res, FIXED_POINT_MAX_ITERS)
            x, r, res = x_try, r_try, res_try
        raise FixedPointError(k, res, FIXED_POINT_MAX_ITERS)

    def solve_implicit_adjoint(self, phi_k: np.ndarray, rhs: np.ndarray, k: int) -> np.ndarray:
        """Solve (I - dt J_N(phi_k)^T) p = rhs directly (the system is linear)."""
        a = -self.tgrid.dt * self._jacobian_adjoint_matrix(phi_k)
        a.flat[:: a.shape[0] + 1] += 1.0
        p = _solve_small(a, rhs.ravel())
        if p is None:
            raise FixedPointError(k, float("nan"), 1)
        return p.reshape(rhs.shape)


def make_propagator(model: Model, tgrid: TimeGrid) -> Propagator:
    if model.is_point:
        return Propagator(model, tgrid, None, None, None)
    basis = basis_for(model.domain)
    if model.linear_symbols is None:
        sym = np.zeros((model.n_components, basis.n_modes))
    else:
        sym = np.asarray(model.linear_symbols(basis))
        if sym.shape != (model.n_components, basis.n_modes):
            raise ValueError("linear_symbols must return one symbol row per component")
    z = tgrid.dt * sym
    return Propagator(model, tgrid, basis, np.exp(z), tgrid.dt * phi1(z))


def integrate_forward(model: Model, theta: np.ndarray, u0: np.ndarray,
                      tgrid: TimeGrid, prop: Propagator | None = None) -> np.ndarray:
    """Integrate the controlled state equation; returns (n_steps+1, n, nx)."""
    if prop is None:
        prop = make_propagator(model, tgrid)
    nt = tgrid.n_steps
    shape = model.field_shape()
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (nt + 1, *shape):
        raise ValueError(f"theta must have shape {(nt + 1, *shape)}, got {theta.shape}")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != shape:
        raise ValueError(f"u0 must have shape {shape}, got {u0.shape}")

    phi = np.empty((nt + 1, *shape))
    phi[0] = u0
    for k in range(nt):
        nxt = prop.step_forward(phi[k], theta[k], k)
        m = float(np.abs(nxt).max())
        if not np.isfinite(m) or m > BLOWUP_LIMIT:
            raise BlowupError(k, (k + 1) * tgrid.dt)
        phi[k + 1] = nxt
    return phi
