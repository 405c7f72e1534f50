"""Run artifact writing: binary trajectories, plotting CSVs, checkpoints.

All files are written atomically (temp file in the destination directory,
then rename) so a killed run never leaves a half-written artifact.  Binary
trajectory files are raw little-endian float64 in (time, component, space)
order, each with a JSON sidecar naming the dimensions; reruns of the same
configuration reproduce them bit for bit.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Mapping

import numpy as np

from .grids import TimeGrid
from .model import Model
from .objective import optimal_noise
from .validation import hamiltonian_series

__all__ = ["write_atomic_bytes", "write_json", "write_array", "write_run_outputs",
           "save_checkpoint", "load_checkpoint", "CHECKPOINT_NAME"]

CHECKPOINT_NAME = "checkpoint.npz"
MAX_CSV_CELLS = 200


def write_atomic_bytes(path: str, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, payload: Mapping) -> None:
    write_atomic_bytes(path, (json.dumps(payload, indent=2, sort_keys=True)
                              + "\n").encode())


def write_array(path: str, arr: np.ndarray, dims: tuple[str, ...]) -> None:
    """Raw little-endian float64 dump plus a .shape.json sidecar."""
    a = np.ascontiguousarray(arr, dtype="<f8")
    write_atomic_bytes(path, a.tobytes())
    write_json(path + ".shape.json",
               {"shape": list(a.shape), "dims": list(dims),
                "dtype": "<f8", "order": "C"})


def _downsample_indices(n: int, cap: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    # even stride that always keeps the first and last entries
    return np.unique(np.round(np.linspace(0, n - 1, cap)).astype(int))


def _csv_table(path: str, table: np.ndarray) -> None:
    rows = _downsample_indices(table.shape[0], MAX_CSV_CELLS)
    cols = _downsample_indices(table.shape[1], MAX_CSV_CELLS)
    sub = table[np.ix_(rows, cols)]
    lines = [",".join(f"{v:.10g}" for v in row) for row in sub]
    write_atomic_bytes(path, ("\n".join(lines) + "\n").encode())


def _plot_csvs(outdir: str, stem: str, traj: np.ndarray, model: Model) -> None:
    """Plot-ready tables capped at MAX_CSV_CELLS per side.

    Point systems get one ``stem.csv`` with a column per component; fields
    get a time-by-space table per component, suffixed with the component
    name when there is more than one.
    """
    if model.is_point:
        _csv_table(os.path.join(outdir, f"{stem}.csv"), traj[:, :, 0])
        return
    for i, name in enumerate(model.component_names):
        suffix = f"_{name}" if model.n_components > 1 else ""
        _csv_table(os.path.join(outdir, f"{stem}{suffix}.csv"), traj[:, i, :])


def write_run_outputs(outdir: str, result, model: Model, tgrid: TimeGrid,
                      config_echo: Mapping) -> None:
    """Emit the full artifact set for a finished (or interrupted) run."""
    os.makedirs(outdir, exist_ok=True)
    j = os.path.join

    write_array(j(outdir, "phi.bin"), result.phi, ("time", "component", "space"))
    write_array(j(outdir, "theta.bin"), result.theta, ("time", "component", "space"))
    write_array(j(outdir, "mu.bin"), result.mu, ("time", "component", "space"))
    noise, noise_kind = optimal_noise(model, result.phi, result.mu)
    write_array(j(outdir, "noise.bin"), noise, ("time", "component", "space"))

    _plot_csvs(outdir, "phi", result.phi, model)
    _plot_csvs(outdir, "mu", result.mu, model)

    rows = ["iter,j,grad_norm,action,endpoint_error"]
    rows += [f"{h.iteration},{h.j:.12g},{h.grad_norm:.12g},"
             f"{h.action:.12g},{h.endpoint_error:.12g}" for h in result.history]
    write_atomic_bytes(j(outdir, "convergence.csv"), ("\n".join(rows) + "\n").encode())

    ham = hamiltonian_series(model, result.phi, result.mu)
    rows = ["t,H"] + [f"{t:.12g},{v:.12g}" for t, v in zip(tgrid.nodes, ham)]
    write_atomic_bytes(j(outdir, "hamiltonian.csv"), ("\n".join(rows) + "\n").encode())

    write_json(j(outdir, "meta.json"), {
        "config": dict(config_echo),
        "noise_kind": noise_kind,
        "status": result.status,
        "action": result.action,
        "j": result.j,
        "penalty": result.penalty,
        "penalty_term": result.penalty_term,
        "endpoint_error": result.endpoint_error,
        "grad_norm": result.grad_norm,
        "iterations": result.iterations,
        "n_evaluations": result.n_evaluations,
        "n_shift_moves": result.n_shift_moves,
        "time_shift_sensitivity": result.time_shift_sensitivity,
        "wall_time": result.wall_time,
    })


def save_checkpoint(outdir: str, info: Mapping) -> None:
    """Persist optimizer state mid-run (theta, curvature pairs, history)."""
    payload = {
        "x": info["x"],
        "iteration": np.asarray(int(info["iteration"])),
        "stage": np.asarray(int(info.get("stage", 0))),
        "j": np.asarray(float(info["j"])),
        "history": np.asarray(info.get("history", []), dtype=float),
        "n_s": np.asarray(len(info["lbfgs"]["s"])),
    }
    for i, (s, y) in enumerate(zip(info["lbfgs"]["s"], info["lbfgs"]["y"])):
        payload[f"s{i}"] = s
        payload[f"y{i}"] = y
    d = os.path.abspath(outdir)
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".npz")
    try:
        with os.fdopen(fd, "wb") as f:
            np.savez(f, **payload)
        os.replace(tmp, os.path.join(d, CHECKPOINT_NAME))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(outdir: str) -> dict | None:
    path = os.path.join(outdir, CHECKPOINT_NAME)
    if not os.path.exists(path):
        return None
    with np.load(path) as z:
        n = int(z["n_s"])
        return {
            "x": z["x"],
            "iteration": int(z["iteration"]),
            "stage": int(z["stage"]),
            "j": float(z["j"]),
            "history": [(int(row[0]),) + tuple(row[1:]) for row in z["history"]],
            "lbfgs": {"s": [z[f"s{i}"] for i in range(n)],
                      "y": [z[f"y{i}"] for i in range(n)]},
        }
