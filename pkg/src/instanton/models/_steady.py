"""Deterministic evolution helpers for manufacturing endpoint states.

Several presets need steady or developed states of the unforced dynamics
(spike patterns, pulses, localised structures).  Evolving with zero
momentum through the same propagator the solver uses has a useful side
effect: a state that the exponential step maps onto itself satisfies the
semi-discrete steady equation exactly, for any dt, so relaxed endpoints are
genuine fixed points of the discrete dynamics rather than approximations.
"""

from __future__ import annotations

import numpy as np

from ..forward import make_propagator
from ..grids import TimeGrid
from ..model import Model, basis_for, drift

__all__ = ["evolve", "relax"]


def evolve(model: Model, u: np.ndarray, duration: float, dt: float) -> np.ndarray:
    """Integrate the unforced equation for ``duration``; returns the end state."""
    n = max(2, int(round(duration / dt)))
    tg = TimeGrid(duration, n)
    prop = make_propagator(model, tg)
    zero = np.zeros(model.field_shape())
    x = np.array(u, dtype=float, copy=True)
    for k in range(n):
        x = prop.step_forward(x, zero, k)
    return x


def relax(model: Model, u: np.ndarray, dt: float, drift_tol: float = 1.0e-9,
          chunk: float = 20.0, max_time: float = 2000.0):
    """Evolve until the drift vanishes numerically.

    Returns (state, residual); the residual is the max-norm of the full
    drift at the returned state, so callers can assert actual steadiness
    instead of trusting the time cap.
    """
    x = np.array(u, dtype=float, copy=True)
    basis = basis_for(model.domain)
    elapsed = 0.0
    res = float(np.max(np.abs(drift(model, x, basis))))
    while res > drift_tol and elapsed < max_time:
        x = evolve(model, x, chunk, dt)
        elapsed += chunk
        res = float(np.max(np.abs(drift(model, x, basis))))
    return x, res


def _linear_apply(model: Model, basis, v: np.ndarray) -> np.ndarray:
    if model.linear_symbols is None:
        return np.zeros_like(v)
    sym = np.asarray(model.linear_symbols(basis))
    return basis.synthesize(sym * basis.analyze(v))


def steady_newton(model: Model, u: np.ndarray, tol: float = 1.0e-11,
                  max_iters: int = 25):
    """Polish a near-steady state to a root of the full drift.

    Assembles the dense drift Jacobian (linear symbols plus the transpose
    of the nonlinear Jacobian adjoint) and iterates damped Newton.  The
    linear solve falls back to least squares, which keeps translation-type
    null modes (periodic domains) from derailing the update: the
    minimum-norm correction simply does not move along them.

    Returns (state, residual).  Intended for endpoint manufacture after a
    short relaxation has entered the right basin; cost is one dense solve
    of size n_components * n_points per iteration.
    """
    basis = None if model.is_point else basis_for(model.domain)
    x = np.array(u, dtype=float, copy=True)
    shape = x.shape
    size = x.size

    def residual(z):
        return drift(model, z, basis)

    r = residual(x)
    res = float(np.max(np.abs(r)))
    for _ in range(max_iters):
        if res <= tol:
            break
        jt_nonlin = np.empty((size, size))
        lin = np.zeros((size, size))
        probe = np.zeros(shape)
        flat = probe.reshape(-1)
        for i in range(size):
            flat[i] = 1.0
            jt_nonlin[:, i] = model.nonlinear_jacobian_adjoint(x, probe).ravel()
            if basis is not None:
                lin[:, i] = _linear_apply(model, basis, probe).ravel()
            flat[i] = 0.0
        # transpose only the nonlinear part; the linear columns are already
        # forward applications (advection symbols are not symmetric)
        jac = jt_nonlin.T + lin
        try:
            delta = np.linalg.solve(jac, r.ravel())
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(jac, r.ravel(), rcond=None)[0]
        if not np.all(np.isfinite(delta)):
            delta = np.linalg.lstsq(jac, r.ravel(), rcond=None)[0]
        step = 1.0
        for _ in range(30):
            x_try = x - step * delta.reshape(shape)
            r_try = residual(x_try)
            res_try = float(np.max(np.abs(r_try)))
            if np.isfinite(res_try) and res_try < res:
                break
            step *= 0.5
        else:
            break  # no decrease in any damped direction: return best so far
        x, r, res = x_try, r_try, res_try
    return x, res
