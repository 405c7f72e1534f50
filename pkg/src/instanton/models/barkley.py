"""Pipe-flow turbulence proxy: localised puffs with energy-borne noise.

The pair (q, u) on a periodic interval of length 150 follows, in a frame
co-moving with the advection,

    dq = (D q_xx + xi2 q_x + q (u + r - 1 - (r + delta)(q - 1)^2)) dt
         + sigma0 q dW
    du = ((xi2 - xi1) u_x + eps1 (1 - u) - eps2 u q) dt,

where q is a turbulence intensity and u a centerline velocity.  The
laminar state (q, u) = (0, 1) is absorbing for the noise, which is
proportional to q itself and acts on q only; forcing can therefore never
ignite turbulence in a quiescent region, only reshape existing puffs.

The preset's initial state is a single steadied puff grown from a bell
seed.  The target is a split pair, manufactured by superposing the puff
with a rotated copy of itself partway through its evolution and letting
the pair settle into two separated puffs; the endpoint filter then pins
only the window around the newborn trailing puff, leaving the leading
puff free.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..grids import SpatialDomain, TimeGrid
from ..model import EndpointFilter, Model, basis_for
from . import ModelPreset, register
from ._steady import evolve, relax

LENGTH = 150.0


def rotate(domain: SpatialDomain, field: np.ndarray, c: float) -> np.ndarray:
    """Rotate a periodic field to the right by c, spectrally (exact)."""
    basis = basis_for(domain)
    k = 2.0 * np.pi * np.arange(basis.n_modes) / domain.length
    return basis.synthesize(basis.analyze(field) * np.exp(-1j * k * c))


def make_barkley(nx: int = 512, big_d: float = 0.5, r: float = 0.6,
                 delta: float = 0.1, eps1: float = 0.1, eps2: float = 0.2,
                 xi1: float = 0.8, xi2: float = 0.8,
                 sigma0: float = 0.5) -> Model:
    domain = SpatialDomain("periodic", LENGTH, nx)
    s2 = sigma0 ** 2

    def nonlinear(w):
        q = w[..., 0, :]
        u = w[..., 1, :]
        row_q = q * (u + r - 1.0 - (r + delta) * (q - 1.0) ** 2)
        row_u = eps1 * (1.0 - u) - eps2 * u * q
        return np.stack([row_q, row_u], axis=-2)

    def jacobian_adjoint(w, v):
        q = w[..., 0, :]
        u = w[..., 1, :]
        vq = v[..., 0, :]
        vu = v[..., 1, :]
        dq = u + r - 1.0 - (r + delta) * (q - 1.0) * (3.0 * q - 1.0)
        row_q = dq * vq - eps2 * u * vu
        row_u = q * vq - (eps1 + eps2 * q) * vu
        return np.stack([row_q, row_u], axis=-2)

    def linear_symbols(basis):
        lam = basis.eigenvalues
        ik = basis.first_deriv
        return np.stack([big_d * lam + xi2 * ik, (xi2 - xi1) * ik])

    def sigma_apply(w, z):
        out = np.zeros(np.broadcast_shapes(w.shape, z.shape))
        out[..., 0, :] = sigma0 * w[..., 0, :] * z[..., 0, :]
        return out

    def covariance_apply(w, v):
        out = np.zeros(np.broadcast_shapes(w.shape, v.shape))
        out[..., 0, :] = s2 * w[..., 0, :] ** 2 * v[..., 0, :]
        return out

    def covariance_variation(w, v, z):
        out = np.zeros(np.broadcast_shapes(w.shape, v.shape, z.shape))
        out[..., 0, :] = 2.0 * s2 * w[..., 0, :] * v[..., 0, :] * z[..., 0, :]
        return out

    return Model(
        name="barkley",
        component_names=("q", "u"),
        domain=domain,
        parameters={"D": big_d, "r": r, "delta": delta, "eps1": eps1,
                    "eps2": eps2, "xi1": xi1, "xi2": xi2, "sigma0": sigma0},
        nonlinear=nonlinear,
        nonlinear_jacobian_adjoint=jacobian_adjoint,
        covariance_apply=covariance_apply,
        linear_symbols=linear_symbols,
        sigma_apply=sigma_apply,
        covariance_variation=covariance_variation,
        forced_components=(True, False),
        equations=(
            "dq = (D q_xx + xi2 q_x + q (u + r - 1 - (r+delta)(q-1)^2)) dt"
            " + sigma0 q dW\n"
            "du = ((xi2 - xi1) u_x + eps1 (1 - u) - eps2 u q) dt"
        ),
    )


@lru_cache(maxsize=4)
def _puff_states(nx: int, big_d: float, r: float, delta: float, eps1: float,
                 eps2: float, xi1: float, xi2: float):
    """(single puff, split pair) states, cached per grid and parameters."""
    model = make_barkley(nx=nx, big_d=big_d, r=r, delta=delta, eps1=eps1,
                         eps2=eps2, xi1=xi1, xi2=xi2)
    x = model.domain.x
    q = 1.2 * np.exp(-0.5 * ((x - 75.0) / 5.0) ** 2)
    u = 1.0 - 0.4 * np.exp(-0.5 * ((x - 75.0) / 5.0) ** 2)
    puff, res = relax(model, np.stack([q, u]), dt=0.02, drift_tol=1.0e-8,
                      chunk=25.0, max_time=1500.0)
    if res > 1.0e-6:
        raise RuntimeError(f"puff relaxation stalled at drift residual {res:.2e}")

    # restart the dynamics from the puff superposed with a rotated copy of
    # itself; the pair settles into two separated puffs
    mid = evolve(model, puff, duration=70.0, dt=0.02)
    shifted = rotate(model.domain, mid, LENGTH / 7.0)
    pair = np.stack([mid[0] + shifted[0], mid[1] + shifted[1] - 1.0])
    split = evolve(model, pair, duration=30.0, dt=0.02)
    return puff, split


@register("barkley")
def barkley_preset(nx=None, nt=None, big_d=0.5, r=0.6, delta=0.1, eps1=0.1,
                   eps2=0.2, xi1=0.8, xi2=0.8, sigma0=0.5, total_time=100.0,
                   penalty=200.0, tol=1.0e-2, max_iters=4000,
                   filter_window=(50.0, 70.0)) -> ModelPreset:
    nx = nx or 512
    model = make_barkley(nx=nx, big_d=big_d, r=r, delta=delta, eps1=eps1,
                         eps2=eps2, xi1=xi1, xi2=xi2, sigma0=sigma0)
    puff, split = _puff_states(nx, big_d, r, delta, eps1, eps2, xi1, xi2)
    return ModelPreset(
        name="barkley", model=model,
        tgrid=TimeGrid(total_time, nt or 2000),
        u0=puff.copy(), u_target=split.copy(),
        penalty=penalty, tol=tol, max_iters=max_iters,
        endpoint_filter=EndpointFilter.indicator(model.domain, *filter_window),
        description="puff splitting; noise proportional to turbulence intensity",
    )
