"""Backward integration of the adjoint (second Hamilton) equation.

The multiplier enforces the state equation inside the penalised cost

    J = 1/2 int <theta, a(phi) theta> dt  +  lambda/2 ||F(phi(T) - uT)||^2,

and the reduced gradient comes out as dJ/dtheta_k = a(phi_k)(theta_k - mu_k).
The sweep below is the exact transpose (KKT stationarity in phi) of the
discrete forward map, so that identity holds to roundoff rather than to
O(dt).  Structurally it is the forward scheme run backward with the adjoint
symbol: terminal multiplier from the endpoint penalty, then per step the
drift-Jacobian transpose plus the covariance-variation source

    (d/d phi)[ <mu, a(phi) theta> - 1/2 <theta, a(phi) theta> ],

which is the familiar combination of the second Hamilton equation
-(db/dphi)^T mu - 1/2 cv(mu, mu) and the mismatch ("error") term
+1/2 cv(theta - mu, theta - mu).

Node placement, fixed by the transposition rather than by choice:

* the multiplier entering the gradient at node k is the later-time adjoint
  state filtered through the step operator, mu_k = (dt/w_k) P* p_{k+1},
  where w_k are the trapezoid weights (so the first node carries a factor
  2 = dt/w_0);
* theta at the final node never influences the path, so it contributes to
  the gradient only through the action term; the trajectory returned here
  carries the physical terminal multiplier mu(T) = lambda F*F(uT - phi(T))
  at node n_steps, which balances the endpoint penalty at stationarity.
"""

from __future__ import annotations

import numpy as np

from .grids import TimeGrid
from .model import EndpointFilter, Model
from .forward import Propagator, make_propagator

__all__ = ["integrate_backward"]


def terminal_multiplier(model: Model, phi_end: np.ndarray, u_target: np.ndarray,
                        penalty: float, endpoint_filter: EndpointFilter) -> np.ndarray:
    """Physical terminal multiplier lambda * F*F(uT - phi(T))."""
    f = endpoint_filter
    return penalty * f.apply(f.apply(u_target - phi_end))


def integrate_backward(model: Model, phi: np.ndarray, theta: np.ndarray,
                       penalty: float, endpoint_filter: EndpointFilter,
                       u_target: np.ndarray, tgrid: TimeGrid,
                       prop: Propagator | None = None) -> np.ndarray:
    """Backward sweep; returns the multiplier trajectory (n_steps+1, n, nx).

    Nodes 0 .. n_steps-1 hold the gradient-consistent multipliers (the ones
    for which a(phi_k)(theta_k - mu_k) is the exact discrete gradient with
    trapezoid pairing); node n_steps holds the physical terminal multiplier.
    """
    if prop is None:
        prop = make_propagator(model, tgrid)
    nt = tgrid.n_steps
    dt = tgrid.dt
    shape = model.field_shape()
    if phi.shape != (nt + 1, *shape) or theta.shape != (nt + 1, *shape):
        raise ValueError("phi and theta must be full trajectories")

    mu = np.empty_like(phi)
    mu[nt] = terminal_multiplier(model, phi[nt], u_target, penalty, endpoint_filter)

    # Terminal adjoint state: the penalty gradient plus the trapezoid tail of
    # the action term (the latter vanishes for additive noise).
    p = mu[nt] - 0.25 * dt * model.covariance_variation_or_zero(phi[nt], theta[nt], theta[nt])

    if prop.is_point:
        p = prop.solve_implicit_adjoint(phi[nt], p, nt)
        for k in range(nt - 1, 0, -1):
            mu[k] = p
            rhs = p + dt * model.covariance_variation_or_zero(phi[k], p - 0.5 * theta[k], theta[k])
            p = prop.solve_implicit_adjoint(phi[k], rhs, k)
        mu[0] = 2.0 * p
        return mu

    basis = prop.basis
    exp_adj = np.conj(prop.exp_dt)
    phi1_adj = np.conj(prop.phi1_dt)
    for k in range(nt - 1, -1, -1):
        mu_k = basis.synthesize(phi1_adj * basis.analyze(p)) / dt
        if k == 0:
            mu[0] = 2.0 * mu_k
            break
        mu[k] = mu_k
        source = model.nonlinear_jacobian_adjoint(phi[k], mu_k) \
            + model.covariance_variation_or_zero(phi[k], mu_k - 0.5 * theta[k], theta[k])
        p = basis.synthesize(exp_adj * basis.analyze(p)) + dt * source
    return mu
