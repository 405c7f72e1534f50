"""Excitable medium with additive noise on the voltage component only.

The pair (U, V) on a periodic interval follows

    dU = (nu1 U_xx + U - U^3/3 - V) dt + sigma0 dW
    dV = (nu2 V_xx + delta (U - gamma1 V + gamma2)) dt,

the classic excitable kinetics with a slow linear recovery variable that
carries no noise at all.  The rest state is the unique spatially uniform
root of the kinetics; the transition target is a developed travelling
pulse, manufactured by kicking the rest state with a localised voltage
bump and letting the excitation run until the pulse shape has detached
from its ignition transient.  The pulse is only steady in its co-moving
frame, so the target is a snapshot, and a computed transition ends in a
pulse at the position the optimisation finds convenient.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..grids import SpatialDomain, TimeGrid
from ..model import Model
from . import ModelPreset, register
from ._steady import evolve

LENGTH = 100.0


def rest_state(gamma1: float = 0.8, gamma2: float = 0.7) -> tuple[float, float]:
    """The uniform steady state (both nullclines, single real root)."""
    # U - U^3/3 = V and U - gamma1 V + gamma2 = 0 merge into a cubic in U
    coeffs = [gamma1 / 3.0, 0.0, 1.0 - gamma1, gamma2]
    roots = np.roots(coeffs)
    real = roots[np.abs(roots.imag) < 1.0e-12].real
    if len(real) != 1:
        raise RuntimeError("expected a unique uniform rest state")
    u = float(real[0])
    return u, (u + gamma2) / gamma1


def make_fitzhugh_nagumo(nx: int = 256, nu1: float = 1.0, nu2: float = 0.1,
                         delta: float = 0.08, gamma1: float = 0.8,
                         gamma2: float = 0.7, sigma0: float = 0.5) -> Model:
    domain = SpatialDomain("periodic", LENGTH, nx)
    s2 = sigma0 ** 2

    def nonlinear(u):
        uu = u[..., 0, :]
        vv = u[..., 1, :]
        return np.stack([-uu ** 3 / 3.0 - vv, delta * (uu + gamma2)], axis=-2)

    def jacobian_adjoint(u, v):
        uu = u[..., 0, :]
        va = v[..., 0, :]
        vb = v[..., 1, :]
        return np.stack([-uu ** 2 * va + delta * vb, -va], axis=-2)

    def linear_symbols(basis):
        lam = basis.eigenvalues
        return np.stack([nu1 * lam + 1.0, nu2 * lam - delta * gamma1])

    def sigma_apply(u, w):
        out = np.zeros(np.broadcast_shapes(u.shape, w.shape))
        out[..., 0, :] = sigma0 * w[..., 0, :]
        return out

    def covariance_apply(u, v):
        out = np.zeros(np.broadcast_shapes(u.shape, v.shape))
        out[..., 0, :] = s2 * v[..., 0, :]
        return out

    return Model(
        name="fitzhugh_nagumo",
        component_names=("U", "V"),
        domain=domain,
        parameters={"nu1": nu1, "nu2": nu2, "delta": delta,
                    "gamma1": gamma1, "gamma2": gamma2, "sigma0": sigma0},
        nonlinear=nonlinear,
        nonlinear_jacobian_adjoint=jacobian_adjoint,
        covariance_apply=covariance_apply,
        linear_symbols=linear_symbols,
        sigma_apply=sigma_apply,
        covariance_variation=None,
        forced_components=(True, False),
        equations=(
            "dU = (nu1 U_xx + U - U^3/3 - V) dt + sigma0 dW\n"
            "dV = (nu2 V_xx + delta (U - gamma1 V + gamma2)) dt"
        ),
    )


@lru_cache(maxsize=8)
def _pulse_state(nx: int, nu1: float, nu2: float, delta: float,
                 gamma1: float, gamma2: float):
    """A developed travelling pulse, grown from a localised voltage kick.

    A bare voltage kick on an excitable background ignites a pair of
    counter-propagating pulses; a patch of elevated recovery variable on
    the left makes that side refractory, so only the right-moving pulse
    survives.  120 time units lets the ignition remnant in V (which decays
    at rate delta * gamma1) die to below the integrator floor; past t=80
    the profile translates at fixed speed with shape change per unit time
    at the O(dt) level of the stepping.
    """
    model = make_fitzhugh_nagumo(nx=nx, nu1=nu1, nu2=nu2, delta=delta,
                                 gamma1=gamma1, gamma2=gamma2)
    u_rest, v_rest = rest_state(gamma1, gamma2)
    x = model.domain.x
    u = np.full(nx, u_rest) + 2.5 * np.exp(-0.5 * ((x - 25.0) / 3.0) ** 2)
    v = np.full(nx, v_rest) + 1.2 * np.exp(-0.5 * ((x - 15.0) / 5.0) ** 2)
    return evolve(model, np.stack([u, v]), duration=120.0, dt=0.02)


@register("fitzhugh_nagumo")
def fitzhugh_nagumo_preset(nx=None, nt=None, nu1=1.0, nu2=0.1, delta=0.08,
                           gamma1=0.8, gamma2=0.7, sigma0=0.5,
                           total_time=60.0, penalty=0.5, tol=5.0e-4,
                           max_iters=4000) -> ModelPreset:
    nx = nx or 256
    model = make_fitzhugh_nagumo(nx=nx, nu1=nu1, nu2=nu2, delta=delta,
                                 gamma1=gamma1, gamma2=gamma2, sigma0=sigma0)
    u_rest, v_rest = rest_state(gamma1, gamma2)
    u0 = np.stack([np.full(nx, u_rest), np.full(nx, v_rest)])
    u_target = _pulse_state(nx, nu1, nu2, delta, gamma1, gamma2).copy()
    return ModelPreset(
        name="fitzhugh_nagumo", model=model,
        tgrid=TimeGrid(total_time, nt or 1200),
        u0=u0, u_target=u_target, penalty=penalty, tol=tol,
        max_iters=max_iters,
        description="pulse ignition with additive noise on the voltage only",
    )
