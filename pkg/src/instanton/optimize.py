"""Limited-memory BFGS over the conjugate momentum, with strong Wolfe steps.

The search space is the whole theta trajectory; all inner products are taken
in the space-time quadrature metric, so the stopping norm matches the
duality pairing used by the reduced gradient.  The line search follows the
bracket/zoom scheme of Wright & Nocedal (Numerical Optimization, sec. 3.5)
and treats non-finite objective values (forward blow-up on an aggressive
trial step) as failed sufficient decrease, which keeps the bracket shrinking
instead of crashing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .errors import SolverError
from .grids import TimeGrid, path_inner
from .model import EndpointFilter, Model
from .objective import InstantonObjective, ObjectiveReport

__all__ = ["OptimizerConfig", "InstantonResult", "lbfgs_minimize", "solve_instanton"]


@dataclass(frozen=True)
class OptimizerConfig:
    tol: float = 1.0e-4
    max_iters: int = 1000
    memory: int = 10
    c1: float = 1.0e-4
    c2: float = 0.9
    max_linesearch: int = 40
    penalty_schedule: tuple[float, ...] = ()   # optional continuation stages
    stage_iters: int = 300          # iteration cap per non-final stage
    stage_tol_factor: float = 100.0  # looser tolerance for continuation stages
    translation_moves: bool = True   # interleave 1-d time-shift descents
    shift_interval: int = 1500       # final-stage iterations between shift scans
    shift_rounds: int = 8            # at most this many applied shifts
    checkpoint_interval: int = 0


@dataclass
class HistoryRow:
    iteration: int
    j: float
    grad_norm: float
    action: float
    endpoint_error: float

    def as_tuple(self):
        return (self.iteration, self.j, self.grad_norm, self.action, self.endpoint_error)


@dataclass
class InstantonResult:
    status: str                      # converged | max_iters | linesearch_failure
    theta: np.ndarray
    phi: np.ndarray
    mu: np.ndarray
    j: float
    action: float
    penalty_term: float
    endpoint_error: float
    grad_norm: float
    iterations: int
    n_evaluations: int
    history: list[HistoryRow]
    time_shift_sensitivity: float = float("nan")
    wall_time: float = 0.0
    penalty: float = 0.0
    n_shift_moves: int = 0


class _LineSearchFailure(Exception):
    pass


def _finite(x: float) -> bool:
    return np.isfinite(x)


class _Lbfgs:
    """Two-loop recursion state in a caller-supplied inner product."""

    def __init__(self, memory: int, dot: Callable):
        self.memory = memory
        self.dot = dot
        self.s: list[np.ndarray] = []
        self.y: list[np.ndarray] = []

    def push(self, s: np.ndarray, y: np.ndarray) -> bool:
        sy = self.dot(s, y)
        if sy <= 1.0e-10 * np.sqrt(self.dot(s, s) * self.dot(y, y)):
            return False  # curvature condition failed, skip the pair
        self.s.append(s)
        self.y.append(y)
        if len(self.s) > self.memory:
            self.s.pop(0)
            self.y.pop(0)
        return True

    def direction(self, grad: np.ndarray) -> np.ndarray:
        q = -grad.copy()
        if not self.s:
            return q
        alphas = []
        rhos = [1.0 / self.dot(y, s) for s, y in zip(self.s, self.y)]
        for i in range(len(self.s) - 1, -1, -1):
            a = rhos[i] * self.dot(self.s[i], q)
            alphas.append(a)
            q -= a * self.y[i]
        gamma = self.dot(self.s[-1], self.y[-1]) / self.dot(self.y[-1], self.y[-1])
        q *= gamma
        for i, a in zip(range(len(self.s)), reversed(alphas)):
            b = rhos[i] * self.dot(self.y[i], q)
            q += (a - b) * self.s[i]
        return q

    def reset(self):
        self.s.clear()
        self.y.clear()

    def export(self):
        return {"s": list(self.s), "y": list(self.y)}

    def load(self, state):
        self.s = [np.asarray(a) for a in state["s"]]
        self.y = [np.asarray(a) for a in state["y"]]


def _interp_step(lo: float, hi: float) -> float:
    return 0.5 * (lo + hi)


def lbfgs_minimize(evaluate: Callable, x0: np.ndarray, dot: Callable,
                   config: OptimizerConfig,
                   on_iteration: Callable | None = None,
                   state: dict | None = None):
    """Minimise a smooth functional with L-BFGS and a strong Wolfe search.

    Parameters
    ----------
    evaluate : callable(x, need_grad) -> (j, grad_or_None, extra)
        Must return j = +inf (not raise) on evaluation failure.
    dot : callable(u, v) -> float
        Inner product defining gradients, norms and the stopping rule.
    on_iteration : callable(info_dict), invoked after each accepted step
        (used for history recording and checkpointing).
    state : optional dict from a previous run's checkpoint to resume from.

    Returns (x, status, iterations, n_evals, last_eval_extra, memory_state).
    """
    mem = _Lbfgs(config.memory, dot)
    x = np.array(x0, dtype=float, copy=True)
    start_iter = 0
    if state is not None:
        x = np.asarray(state["x"], dtype=float).copy()
        start_iter = int(state["iteration"])
        mem.load(state["lbfgs"])

    n_evals = 0

    def full_eval(z, need_grad=True):
        nonlocal n_evals
        n_evals += 1
        return evaluate(z, need_grad)

    j, g, extra = full_eval(x)
    if not _finite(j):
        raise SolverError("objective not finite at the initial point")
    gnorm = float(np.sqrt(max(dot(g, g), 0.0)))
    status = "max_iters"
    it = start_iter
    if on_iteration is not None:
        on_iteration({"iteration": it, "x": x, "j": j, "grad_norm": gnorm,
                      "extra": extra, "lbfgs": mem.export()})

    while True:
        if gnorm <= config.tol:
            status = "converged"
            break
        if it >= config.max_iters:
            status = "max_iters"
            break

        d = mem.direction(g)
        dphi0 = dot(g, d)
        if dphi0 >= 0.0:  # not a descent direction: restart from steepest descent
            mem.reset()
            d = -g.copy()
            dphi0 = dot(g, d)

        alpha_init = 1.0 if mem.s else min(1.0, 10.0 / max(gnorm, 1.0e-30))
        try:
            alpha, j_new, g_new, extra_new = _wolfe_search(
                full_eval, dot, x, d, j, dphi0, alpha_init, config)
        except _LineSearchFailure:
            if mem.s:
                # retry once along steepest descent with fresh memory
                mem.reset()
                d = -g.copy()
                dphi0 = dot(g, d)
                try:
                    alpha, j_new, g_new, extra_new = _wolfe_search(
                        full_eval, dot, x, d, j, dphi0,
                        min(1.0, 10.0 / max(gnorm, 1.0e-30)), config)
                except _LineSearchFailure:
                    status = "linesearch_failure"
                    break
            else:
                status = "linesearch_failure"
                break

        s = alpha * d
        y = g_new - g
        mem.push(s, y)
        x = x + s
        j, g, extra = j_new, g_new, extra_new
        gnorm = float(np.sqrt(max(dot(g, g), 0.0)))
        it += 1
        if on_iteration is not None:
            on_iteration({"iteration": it, "x": x, "j": j, "grad_norm": gnorm,
                          "extra": extra, "lbfgs": mem.export()})

    return x, status, it, n_evals, (j, g, gnorm, extra), mem.export()


def _wolfe_search(full_eval, dot, x, d, phi0, dphi0, alpha_init, config):
    """Strong Wolfe bracket + zoom; raises _LineSearchFailure on budget end."""
    c1, c2 = config.c1, config.c2
    budget = [config.max_linesearch]

    def probe(alpha):
        if budget[0] <= 0:
            raise _LineSearchFailure
        budget[0] -= 1
        j, g, extra = full_eval(x + alpha * d)
        dphi = dot(g, d) if g is not None else np.nan
        return j, dphi, g, extra

    alpha_prev, phi_prev, dphi_prev = 0.0, phi0, dphi0
    alpha = alpha_init
    result_prev = None
    for i in range(config.max_linesearch):
        j, dphi, g, extra = probe(alpha)
        if (not _finite(j)) or j > phi0 + c1 * alpha * dphi0 or (i > 0 and j >= phi_prev):
            return _zoom(probe, alpha_prev, phi_prev, dphi_prev, alpha, j, dphi,
                         phi0, dphi0, c1, c2, d)
        if abs(dphi) <= -c2 * dphi0:
            return alpha, j, g, extra
        if dphi >= 0.0:
            return _zoom(probe, alpha, j, dphi, alpha_prev, phi_prev, dphi_prev,
                         phi0, dphi0, c1, c2, d)
        alpha_prev, phi_prev, dphi_prev = alpha, j, dphi
        result_prev = (alpha, j, g, extra)
        if alpha >= 1.0e8:
            break
        alpha = min(2.0 * alpha, 1.0e8)
    if result_prev is not None:
        # budget exhausted while still descending; accept the best point seen
        return result_prev
    raise _LineSearchFailure


def _zoom(probe, lo, phi_lo, dphi_lo, hi, phi_hi, dphi_hi, phi0, dphi0, c1, c2, d):
    """Shrink [lo, hi] until a strong Wolfe point is found."""
    for _ in range(60):
        alpha = _interp_step(lo, hi)
        if not (min(lo, hi) < alpha < max(lo, hi)) or abs(hi - lo) < 1.0e-16 * max(1.0, abs(lo)):
            raise _LineSearchFailure
        j, dphi, g, extra = probe(alpha)
        if (not _finite(j)) or j > phi0 + c1 * alpha * dphi0 or j >= phi_lo:
            hi, phi_hi, dphi_hi = alpha, j, dphi
        else:
            if abs(dphi) <= -c2 * dphi0:
                return alpha, j, g, extra
            if dphi * (hi - lo) >= 0.0:
                hi, phi_hi, dphi_hi = lo, phi_lo, dphi_lo
            lo, phi_lo, dphi_lo = alpha, j, dphi
    raise _LineSearchFailure


def _shift_theta(theta: np.ndarray, s: float) -> np.ndarray:
    """Translate the momentum profile by s nodes, repeating the edge values.

    Integer shifts move samples exactly; fractional shifts interpolate
    linearly between neighbours, which is essentially lossless when the
    profile varies over many nodes.
    """
    n = theta.shape[0]
    if float(s) == int(s):
        s = int(s)
        out = np.empty_like(theta)
        if s == 0:
            out[:] = theta
        elif s > 0:
            out[s:] = theta[:-s]
            out[:s] = theta[0]
        else:
            out[:s] = theta[-s:]
            out[s:] = theta[-1]
        return out
    idx = np.clip(np.arange(n, dtype=float) - s, 0.0, n - 1.0)
    i0 = np.minimum(idx.astype(int), n - 2)
    frac = (idx - i0).reshape((n,) + (1,) * (theta.ndim - 1))
    return (1.0 - frac) * theta[i0] + frac * theta[i0 + 1]


def _best_shift(eval_j: Callable, theta: np.ndarray, n_steps: int, j0: float):
    """Coarse-to-fine scan of J over whole-path time translations.

    In metastable problems the cost is nearly flat under moving the
    transition event in time, which makes plain descent crawl; a direct 1-d
    search over translations jumps along that valley at the price of one
    forward solve per probe.  The scan ends with two sub-node refinement
    levels because descent is equally bad at building the last fraction of
    a node.  Returns (shift, value, n_probes).
    """
    probes = {0.0: j0}

    def at(s):
        key = round(float(s), 6)
        if key not in probes:
            probes[key] = eval_j(_shift_theta(theta, key))
        return probes[key]

    half = n_steps // 2
    step = max(1, n_steps // 20)
    for s in range(-half, half + 1, step):
        at(s)
    best = min(probes, key=lambda k: probes[k])
    while step > 1:
        step = max(1, step // 5)
        for s in range(int(best) - 4 * step, int(best) + 4 * step + 1, step):
            if -n_steps < s < n_steps:
                at(s)
        best = min(probes, key=lambda k: probes[k])
    for fstep in (0.25, 0.05):
        for i in range(-4, 5):
            s = best + i * fstep
            if -n_steps < s < n_steps:
                at(s)
        best = min(probes, key=lambda k: probes[k])
    return best, probes[best], len(probes) - 1


def _shift_sensitivity(obj: InstantonObjective, theta: np.ndarray, act: float) -> float:
    """Action change under a one-node time shift of theta (flatness probe)."""
    try:
        rep = obj.evaluate(_shift_theta(theta, 1), need_grad=False)
    except SolverError:
        return float("nan")
    return abs(rep.action - act)


def solve_instanton(model: Model, u0: np.ndarray, u_target: np.ndarray,
                    tgrid: TimeGrid, penalty: float | tuple[float, ...],
                    endpoint_filter: EndpointFilter | None = None,
                    config: OptimizerConfig | None = None,
                    theta0: np.ndarray | None = None,
                    on_iteration: Callable | None = None,
                    resume_state: dict | None = None) -> InstantonResult:
    """Minimise the penalised action over theta.

    ``penalty`` may be a single value or a continuation schedule ending at
    the production penalty; each stage warm-starts from the previous
    momentum.  Within the final stage, L-BFGS runs are interleaved with
    one-dimensional descents over time translations of theta (see
    :func:`_best_shift`), which cut through the nearly flat valley that the
    localised-in-time transition creates.
    """
    if endpoint_filter is None:
        endpoint_filter = EndpointFilter.identity()
    if config is None:
        config = OptimizerConfig()
    stages = config.penalty_schedule if config.penalty_schedule else \
        (tuple(penalty) if isinstance(penalty, (tuple, list)) else (float(penalty),))

    t0 = time.perf_counter()
    dot = lambda u, v: path_inner(u, v, tgrid, model.domain)
    history: list[HistoryRow] = []
    theta = np.zeros((tgrid.n_steps + 1, *model.field_shape())) if theta0 is None \
        else np.array(theta0, dtype=float, copy=True)

    stage_offset = 0
    resume_stage = 0
    if resume_state is not None:
        resume_stage = int(resume_state.get("stage", 0))
        history = [HistoryRow(*row) for row in resume_state.get("history", [])]
        if history:
            stage_offset = history[-1].iteration - int(resume_state["iteration"])

    status = "max_iters"
    it_total = 0
    n_evals = 0
    n_shifts = 0
    final_eval: tuple = ()
    obj: InstantonObjective | None = None

    for stage_idx, lam in enumerate(stages):
        if resume_state is not None and stage_idx < resume_stage:
            continue
        is_final = stage_idx == len(stages) - 1
        obj = InstantonObjective(model, u0, u_target, lam, endpoint_filter, tgrid)

        def evaluate(th, need_grad=True):
            try:
                rep = obj.evaluate(th, need_grad=need_grad)
            except SolverError:
                return float("inf"), None, None
            return rep.j, rep.grad, rep

        def eval_j(th):
            j, _, _ = evaluate(th, need_grad=False)
            return j

        def record(info, _stage=stage_idx):
            gi = stage_offset + info["iteration"]
            if history and history[-1].iteration >= gi:
                return  # duplicate row (stage handoff or resumed checkpoint)
            rep: ObjectiveReport = info["extra"]
            history.append(HistoryRow(gi, info["j"], info["grad_norm"],
                                      rep.action, rep.endpoint_error))
            if on_iteration is not None:
                info = dict(info)
                info["stage"] = _stage
                info["history"] = [h.as_tuple() for h in history]
                on_iteration(info)

        state = None
        if resume_state is not None and stage_idx == resume_stage:
            state = resume_state

        stage_tol = config.tol if is_final else config.tol * config.stage_tol_factor
        while True:
            remaining = config.max_iters - it_total
            if remaining <= 0:
                status = "max_iters"
                break
            cap = remaining
            if not is_final:
                cap = min(config.stage_iters, remaining)
            elif config.translation_moves:
                cap = min(config.shift_interval, remaining)
            sub = replace(config, tol=stage_tol, max_iters=cap)
            theta, status, its, evals, final_eval, mem_state = lbfgs_minimize(
                evaluate, theta, dot, sub, on_iteration=record, state=state)
            # carry the curvature pairs into the next round by default; a
            # shift move invalidates them (different point), see below
            state = {"x": theta, "iteration": 0, "lbfgs": mem_state}
            it_total = stage_offset + its
            stage_offset = it_total
            n_evals += evals
            if not is_final:
                break  # continuation stages get a single capped run
            if not config.translation_moves:
                break
            shifts_allowed = n_shifts < config.shift_rounds
            if shifts_allowed:
                j_here = final_eval[0]
                s, j_shifted, probes = _best_shift(eval_j, theta, tgrid.n_steps, j_here)
                n_evals += probes
                # only move for a meaningful gain: sub-noise shifts throw the
                # curvature memory away for nothing and stall the descent
                if s != 0.0 and j_shifted < j_here - 1.0e-6 * (1.0 + abs(j_here)):
                    theta = _shift_theta(theta, s)
                    state = None
                    n_shifts += 1
                    it_total += 1          # a shift counts as one iterate
                    stage_offset = it_total
                    continue               # resume descent from the moved point
            if status != "max_iters":
                break  # converged (or stuck) with no useful translation left
            # plain iteration budget left: keep optimising

    j, g, gnorm, rep = final_eval
    if rep is None or rep.grad is None:
        rep = obj.evaluate(theta)
        gnorm = rep.grad_norm
    result = InstantonResult(
        status=status, theta=theta, phi=rep.phi, mu=rep.mu, j=rep.j,
        action=rep.action, penalty_term=rep.penalty,
        endpoint_error=rep.endpoint_error, grad_norm=gnorm,
        iterations=it_total, n_evaluations=n_evals, history=history,
        penalty=stages[-1], wall_time=time.perf_counter() - t0,
        n_shift_moves=n_shifts)
    result.time_shift_sensitivity = _shift_sensitivity(obj, theta, rep.action)
    return result
