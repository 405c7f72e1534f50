"""Activator-inhibitor dynamics with multiplicative noise on the inhibitor.

The pair (A, H) on [0, 1] with homogeneous Neumann conditions follows

    dA = (d^2 A_xx - A + A^2 / H) dt
    dH = (1/tau) (D H_xx - H + A^2) dt + sigma0 H dW,

so only the inhibitor is forced, and the forcing dies wherever H does.
The deterministic system sustains stable spike patterns; transitions of
interest move between spike counts (two spikes merging into one).  Both
endpoint states are manufactured here by relaxing seeded bumps to numerical
steadiness, which makes them exact fixed points of the discrete stepping
(see :mod:`instanton.models._steady`).

The inhibitor enters the activator equation through A^2 / H; a small floor
keeps transient negative or vanishing H values during optimisation from
poisoning the drift, and the Jacobian adjoint is written against the same
floored field so gradient checks stay exact.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..grids import SpatialDomain, TimeGrid
from ..model import Model
from . import ModelPreset, register
from ._steady import evolve, steady_newton

H_FLOOR = 1.0e-6


def make_gierer_meinhardt(nx: int = 128, d: float = 0.06, big_d: float = 0.04,
                          tau: float = 0.5, sigma0: float = 0.5) -> Model:
    domain = SpatialDomain("neumann", 1.0, nx)
    s2 = sigma0 ** 2

    def nonlinear(u):
        a = u[..., 0, :]
        hf = np.maximum(u[..., 1, :], H_FLOOR)
        return np.stack([a ** 2 / hf, a ** 2 / tau], axis=-2)

    def jacobian_adjoint(u, v):
        a = u[..., 0, :]
        h = u[..., 1, :]
        hf = np.maximum(h, H_FLOOR)
        va = v[..., 0, :]
        vh = v[..., 1, :]
        row_a = (2.0 * a / hf) * va + (2.0 * a / tau) * vh
        row_h = -(a ** 2 / hf ** 2) * va * (h > H_FLOOR)
        return np.stack([row_a, row_h], axis=-2)

    def linear_symbols(basis):
        lam = basis.eigenvalues
        return np.stack([d ** 2 * lam - 1.0, (big_d * lam - 1.0) / tau])

    def sigma_apply(u, w):
        out = np.zeros(np.broadcast_shapes(u.shape, w.shape))
        out[..., 1, :] = sigma0 * u[..., 1, :] * w[..., 1, :]
        return out

    def covariance_apply(u, v):
        out = np.zeros(np.broadcast_shapes(u.shape, v.shape))
        out[..., 1, :] = s2 * u[..., 1, :] ** 2 * v[..., 1, :]
        return out

    def covariance_variation(u, v, w):
        out = np.zeros(np.broadcast_shapes(u.shape, v.shape, w.shape))
        out[..., 1, :] = 2.0 * s2 * u[..., 1, :] * v[..., 1, :] * w[..., 1, :]
        return out

    return Model(
        name="gierer_meinhardt",
        component_names=("A", "H"),
        domain=domain,
        parameters={"d": d, "D": big_d, "tau": tau, "sigma0": sigma0},
        nonlinear=nonlinear,
        nonlinear_jacobian_adjoint=jacobian_adjoint,
        covariance_apply=covariance_apply,
        linear_symbols=linear_symbols,
        sigma_apply=sigma_apply,
        covariance_variation=covariance_variation,
        forced_components=(False, True),
        equations=(
            "dA = (d^2 A_xx - A + A^2/H) dt\n"
            "dH = (1/tau)(D H_xx - H + A^2) dt + sigma0 H dW"
        ),
    )


def _bump(x: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((x - center) / width) ** 2)


@lru_cache(maxsize=8)
def _spike_states(nx: int, d: float, big_d: float, tau: float):
    """(two-spike, one-spike) steady states, cached per grid.

    Seeds place activator bumps of the natural widths (d for A, sqrt(D)
    for H) at the spike centers.  A short relaxation enters the basin and
    a dense Newton polish lands on the equilibrium itself; the relaxation
    is re-symmetrised between chunks because the two-spike pattern, while
    an exact steady state, is weakly unstable to the antisymmetric mode
    that slides both spikes the same way, and letting roundoff grow
    through it would merge the spikes long before the drift residual
    reaches steady-state levels.
    """
    model = make_gierer_meinhardt(nx=nx, d=d, big_d=big_d, tau=tau)
    x = model.domain.x

    def seeded(centers):
        a = 1.0 + sum(3.0 * _bump(x, c, d) for c in centers)
        h = 1.0 + sum(1.0 * _bump(x, c, np.sqrt(big_d)) for c in centers)
        state = np.stack([a, h])
        for _ in range(4):
            state = evolve(model, state, 15.0, 0.01)
            state = 0.5 * (state + state[:, ::-1])
        state, res = steady_newton(model, state)
        if res > 1.0e-9:
            raise RuntimeError(
                f"spike relaxation stalled at drift residual {res:.2e}")
        return state

    return seeded((0.25, 0.75)), seeded((0.5,))


@register("gierer_meinhardt")
def gierer_meinhardt_preset(nx=None, nt=None, d=0.06, big_d=0.04, tau=0.5,
                            sigma0=0.5, total_time=200.0, penalty=20.0,
                            tol=1.0e-4, max_iters=4000) -> ModelPreset:
    nx = nx or 128
    model = make_gierer_meinhardt(nx=nx, d=d, big_d=big_d, tau=tau, sigma0=sigma0)
    two_spike, one_spike = _spike_states(nx, d, big_d, tau)
    return ModelPreset(
        name="gierer_meinhardt", model=model,
        tgrid=TimeGrid(total_time, nt or 4000),
        u0=two_spike.copy(), u_target=one_spike.copy(),
        penalty=penalty, tol=tol, max_iters=max_iters,
        description="spike merging under inhibitor-only multiplicative noise",
    )
