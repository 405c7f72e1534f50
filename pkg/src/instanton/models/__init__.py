"""Built-in model presets.

Each preset bundles a :class:`~instanton.model.Model` with the grids,
endpoint states, penalty and stopping tolerance that make a complete,
runnable transition problem.  Presets are constructed lazily through
``preset(name)`` so that models whose endpoint states require a relaxation
or time evolution only pay that cost when actually requested.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..grids import TimeGrid
from ..model import EndpointFilter, Model

__all__ = ["ModelPreset", "preset", "available", "register"]


@dataclass
class ModelPreset:
    """A fully specified transition-path problem.

    ``continuation`` lists penalty values for warm-up stages run before the
    production ``penalty``; stiffly penalised warm-up stages steer the
    optimiser into the transition branch when plain descent from zero
    momentum would settle for staying in the initial basin.
    """

    name: str
    model: Model
    tgrid: TimeGrid
    u0: np.ndarray
    u_target: np.ndarray
    penalty: float
    tol: float
    max_iters: int
    endpoint_filter: EndpointFilter = field(default_factory=EndpointFilter.identity)
    continuation: tuple[float, ...] = ()
    description: str = ""

    def penalty_stages(self) -> tuple[float, ...]:
        return tuple(self.continuation) + (self.penalty,)

    def with_grid(self, nt: int) -> "ModelPreset":
        return replace(self, tgrid=TimeGrid(self.tgrid.total_time, nt))


_FACTORIES: dict[str, Callable[..., ModelPreset]] = {}


def register(name: str):
    def deco(fn):
        _FACTORIES[name] = fn
        return fn
    return deco


def available() -> tuple[str, ...]:
    _load_all()
    return tuple(sorted(_FACTORIES))


def preset(name: str, nx: int | None = None, nt: int | None = None, **params) -> ModelPreset:
    """Build a named preset, optionally overriding grid sizes or parameters.

    Unknown parameter names raise ValueError rather than being ignored.
    """
    _load_all()
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; available: {', '.join(available())}") from None
    return factory(nx=nx, nt=nt, **params)


_LOADED = False


def _load_all():
    global _LOADED
    if _LOADED:
        return
    from . import allencahn, barkley, doublewell, fitzhugh_nagumo, gierer_meinhardt  # noqa: F401
    _LOADED = True
