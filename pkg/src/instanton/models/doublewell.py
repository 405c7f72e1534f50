"""Double-well benchmark systems.

``doublewell2d`` is a planar SDE whose stable states sit at +-(0.5, 0.5) on
the diagonal with a saddle at the origin.  Stochastic forcing acts on the
first coordinate only, with state-dependent amplitude x1 - x2 + 0.2 that
vanishes along a line; the transition path has to route around the dead
zone and recruit the deterministic coupling to move the unforced
coordinate.  This makes it the smallest system that exercises both
degeneracy and multiplicativity.

``doublewell1d`` is the scalar gradient diffusion du = (u - u^3) dt + dW.
Between the well u = -1 and the barrier top u = 0 the minimal action has a
closed form in the long-time limit: twice the potential difference,
2 (V(0) - V(-1)) = 1/2 for V(u) = u^4/4 - u^2/2.  We use it as a
quantitative regression target.
"""

from __future__ import annotations

import numpy as np

from ..grids import SpatialDomain, TimeGrid
from ..model import Model
from . import ModelPreset, register

_POINT = SpatialDomain("point")


def _dw2_nonlinear(u):
    x1 = u[..., 0, :]
    x2 = u[..., 1, :]
    s3 = (x1 + x2) ** 3
    out = np.empty(u.shape)
    out[..., 0, :] = 2.0 * x2 - s3
    out[..., 1, :] = 2.0 * x1 - s3
    return out


def _dw2_jacobian_adjoint(u, v):
    # the Jacobian [[-q, 2-q], [2-q, -q]] with q = 3 (x1+x2)^2 is symmetric
    q = 3.0 * (u[..., 0, :] + u[..., 1, :]) ** 2
    v1 = v[..., 0, :]
    v2 = v[..., 1, :]
    out = np.empty(np.broadcast_shapes(u.shape, v.shape))
    out[..., 0, :] = -q * v1 + (2.0 - q) * v2
    out[..., 1, :] = (2.0 - q) * v1 - q * v2
    return out


def _dw2_amplitude(u):
    return u[..., 0, :] - u[..., 1, :] + 0.2


def _dw2_sigma(u, w):
    out = np.zeros(np.broadcast_shapes(u.shape, w.shape))
    out[..., 0, :] = _dw2_amplitude(u) * w[..., 0, :]
    return out


def _dw2_covariance(u, v):
    out = np.zeros(np.broadcast_shapes(u.shape, v.shape))
    out[..., 0, :] = _dw2_amplitude(u) ** 2 * v[..., 0, :]
    return out


def _dw2_covariance_variation(u, v, w):
    # grad_u of amp(u)^2 v1 w1, with d(amp)/du = (1, -1)
    g = 2.0 * _dw2_amplitude(u) * v[..., 0, :] * w[..., 0, :]
    out = np.empty(np.broadcast_shapes(u.shape, v.shape, w.shape))
    out[..., 0, :] = g
    out[..., 1, :] = -g
    return out


def make_doublewell2d() -> Model:
    return Model(
        name="doublewell2d",
        component_names=("x1", "x2"),
        domain=_POINT,
        parameters={"noise_offset": 0.2},
        nonlinear=_dw2_nonlinear,
        nonlinear_jacobian_adjoint=_dw2_jacobian_adjoint,
        covariance_apply=_dw2_covariance,
        sigma_apply=_dw2_sigma,
        covariance_variation=_dw2_covariance_variation,
        forced_components=(True, False),
        equations=(
            "dx1 = (2 x2 - (x1+x2)^3) dt + (x1 - x2 + 0.2) dW\n"
            "dx2 = (2 x1 - (x1+x2)^3) dt"
        ),
    )


@register("doublewell2d")
def doublewell2d_preset(nx=None, nt=None, total_time=10.0, penalty=5.0,
                        tol=1.0e-4, max_iters=3500) -> ModelPreset:
    if nx is not None and nx != 1:
        raise ValueError("doublewell2d is a point system; nx is fixed at 1")
    model = make_doublewell2d()
    u0 = np.array([[-0.5], [-0.5]])
    u_target = np.array([[0.5], [0.5]])
    return ModelPreset(
        name="doublewell2d", model=model,
        tgrid=TimeGrid(total_time, nt or 500),
        u0=u0, u_target=u_target, penalty=penalty, tol=tol,
        max_iters=max_iters,
        # at the production penalty the no-transition branch is a local
        # minimum reachable from zero momentum; a stiff warm-up stage makes
        # leaving the initial basin cheaper than paying the endpoint penalty
        continuation=(100.0 * penalty,),
        description="planar double well, degenerate multiplicative noise on x1",
    )


def _dw1_nonlinear(u):
    return u - u ** 3


def _dw1_jacobian_adjoint(u, v):
    return (1.0 - 3.0 * u ** 2) * v


def _dw1_identity_cov(u, v):
    return np.broadcast_to(v, np.broadcast_shapes(u.shape, v.shape)).copy()


def make_doublewell1d() -> Model:
    return Model(
        name="doublewell1d_validation",
        component_names=("u",),
        domain=_POINT,
        parameters={},
        nonlinear=_dw1_nonlinear,
        nonlinear_jacobian_adjoint=_dw1_jacobian_adjoint,
        covariance_apply=_dw1_identity_cov,
        sigma_apply=_dw1_identity_cov,
        covariance_variation=None,
        forced_components=(True,),
        equations="du = (u - u^3) dt + dW",
    )


@register("doublewell1d_validation")
def doublewell1d_preset(nx=None, nt=None, total_time=20.0, penalty=10.0,
                        tol=1.0e-5, max_iters=2000) -> ModelPreset:
    if nx is not None and nx != 1:
        raise ValueError("doublewell1d_validation is a point system; nx is fixed at 1")
    model = make_doublewell1d()
    return ModelPreset(
        name="doublewell1d_validation", model=model,
        tgrid=TimeGrid(total_time, nt or 400),
        u0=np.array([[-1.0]]), u_target=np.array([[0.0]]),
        penalty=penalty, tol=tol, max_iters=max_iters,
        description="scalar gradient double well; barrier-crossing action 1/2",
    )
