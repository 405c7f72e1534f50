"""Reduced objective J(theta), its exact gradient, and noise diagnostics.

Model callbacks are written with component indexing on axis -2, so they
broadcast over a leading time axis; everything here exploits that to
evaluate whole trajectories in single vectorised calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import integrate_backward
from .forward import Propagator, integrate_forward, make_propagator
from .grids import TimeGrid, inner_product, path_norm, time_quadrature
from .model import EndpointFilter, Model, filter_residual

__all__ = [
    "ObjectiveReport",
    "InstantonObjective",
    "action",
    "reduced_objective",
    "optimal_noise",
]


@dataclass
class ObjectiveReport:
    """Value and first-order information of the penalised action at one theta."""

    j: float
    action: float
    penalty: float
    endpoint_error: float
    grad: np.ndarray | None
    grad_norm: float | None
    phi: np.ndarray
    mu: np.ndarray | None


def action(model: Model, phi: np.ndarray, theta: np.ndarray, tgrid: TimeGrid) -> float:
    """Weighted action 1/2 int <theta, a(phi) theta> dt along a trajectory."""
    atheta = model.covariance_apply(phi, theta)
    dens = 0.5 * np.einsum("...nx,...nx,x->...", theta, atheta, model.domain.quad_weights)
    return float(time_quadrature(dens, tgrid))


def gradient_mismatch(theta: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """theta - mu with the gradient convention at the last node.

    theta at the final node does not influence the path, so its multiplier
    in the gradient is zero there (the stored mu[-1] is the physical
    terminal multiplier instead).
    """
    v = theta - mu
    v[-1] = theta[-1]
    return v


class InstantonObjective:
    """Penalised Freidlin-Wentzell action as a function of the momentum theta.

    Holds the propagator and endpoint data so repeated evaluations inside
    the optimiser do not rebuild step operators.
    """

    def __init__(self, model: Model, u0: np.ndarray, u_target: np.ndarray,
                 penalty: float, endpoint_filter: EndpointFilter, tgrid: TimeGrid):
        self.model = model
        self.tgrid = tgrid
        self.u0 = np.asarray(u0, dtype=float)
        self.u_target = np.asarray(u_target, dtype=float)
        self.penalty = float(penalty)
        self.endpoint_filter = endpoint_filter
        self.prop: Propagator = make_propagator(model, tgrid)

    def theta_shape(self) -> tuple[int, ...]:
        return (self.tgrid.n_steps + 1, *self.model.field_shape())

    def zero_theta(self) -> np.ndarray:
        return np.zeros(self.theta_shape())

    def evaluate(self, theta: np.ndarray, need_grad: bool = True,
                 debug: bool = False) -> ObjectiveReport:
        model, tgrid = self.model, self.tgrid
        # aggressive line-search trials may overflow before the blow-up guard
        # trips; the guard turns them into SolverError, so silence the noise
        with np.errstate(over="ignore", invalid="ignore"):
            phi = integrate_forward(model, theta, self.u0, tgrid, self.prop)
            act = action(model, phi, theta, tgrid)
            res = filter_residual(self.endpoint_filter, phi[-1], self.u_target,
                                  model.domain)
            pen = 0.5 * self.penalty * res**2
            j = act + pen
            if not need_grad:
                return ObjectiveReport(j, act, pen, res, None, None, phi, None)
            mu = integrate_backward(model, phi, theta, self.penalty,
                                    self.endpoint_filter, self.u_target, tgrid,
                                    self.prop)
            grad = model.covariance_apply(phi, gradient_mismatch(theta, mu))
            gnorm = path_norm(grad, tgrid, model.domain)
        if debug:
            self._check_enforcer(phi, theta, mu, j)
        return ObjectiveReport(j, act, pen, res, grad, gnorm, phi, mu)

    def _check_enforcer(self, phi, theta, mu, j):
        """The forward solve must satisfy its own scheme to roundoff, so the
        state-equation enforcer term of the cost vanishes identically."""
        total = 0.0
        for k in range(self.tgrid.n_steps):
            res_k = phi[k + 1] - self.prop.step_forward(phi[k], theta[k], k)
            total += inner_product(mu[k], res_k, self.model.domain)
        if abs(total) > 1.0e-8 * (1.0 + abs(j)):
            raise AssertionError(
                f"state-equation enforcer not satisfied: {total:.3e} vs J = {j:.6g}")


def reduced_objective(model: Model, theta: np.ndarray, u0: np.ndarray,
                      u_target: np.ndarray, penalty: float,
                      endpoint_filter: EndpointFilter, tgrid: TimeGrid,
                      debug: bool = False) -> ObjectiveReport:
    """One-shot evaluation of J, its parts and the reduced gradient."""
    obj = InstantonObjective(model, u0, u_target, penalty, endpoint_filter, tgrid)
    return obj.evaluate(np.asarray(theta, dtype=float), debug=debug)


def optimal_noise(model: Model, phi: np.ndarray, mu: np.ndarray) -> tuple[np.ndarray, str]:
    """Realised optimal forcing along the path.

    Returns sigma(phi) mu when the model exposes sigma, otherwise a(phi) mu
    with the kind flag saying so (boundary-noise models define the noise
    only through its covariance).
    """
    if model.sigma_apply is not None:
        return model.sigma_apply(phi, mu), "sigma_mu"
    return model.covariance_apply(phi, mu), "cov_mu"


def noise_mismatch_norm(model: Model, phi: np.ndarray, theta: np.ndarray,
                        mu: np.ndarray, tgrid: TimeGrid) -> float:
    """Quadrature norm of sigma(phi)(theta - mu), via the covariance form."""
    v = gradient_mismatch(theta.copy(), mu)
    av = model.covariance_apply(phi, v)
    dens = np.einsum("...nx,...nx,x->...", v, av, model.domain.quad_weights)
    return float(np.sqrt(max(float(time_quadrature(np.maximum(dens, 0.0), tgrid)), 0.0)))
