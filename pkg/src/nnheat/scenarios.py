"""Named initial data and forcing for simulations.

Every callable takes an array of points with shape (..., 2); time-dependent
ones take ``(t, points)``. Velocities vanish on the boundary of the unit
square and are exactly divergence free (curls of stream functions).
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Scenario:
    name: str
    u0: Callable
    theta0: Callable
    force: Optional[Callable] = None
    theta_source: Optional[Callable] = None
    theta_min: float = 0.0
    description: str = ""


def bump_stream_velocity(points, amplitude=1.0):
    """Curl of ``amplitude * sin^2(pi x) sin^2(pi y)``."""
    x, y = points[..., 0], points[..., 1]
    sx, sy = np.sin(np.pi * x), np.sin(np.pi * y)
    s2x, s2y = np.sin(2 * np.pi * x), np.sin(2 * np.pi * y)
    ux = amplitude * np.pi * sx**2 * s2y
    uy = -amplitude * np.pi * s2x * sy**2
    return np.stack([ux, uy], axis=-1)


def cellular_stream_velocity(points, amplitude=1.0):
    """Curl of ``amplitude * sin^2(2 pi x) sin^2(pi y)``: a two-cell flow."""
    x, y = points[..., 0], points[..., 1]
    ux = amplitude * np.pi * np.sin(2 * np.pi * x) ** 2 * np.sin(2 * np.pi * y)
    uy = -amplitude * 2 * np.pi * np.sin(4 * np.pi * x) * np.sin(np.pi * y) ** 2
    return np.stack([ux, uy], axis=-1)


def _rest_u(points):
    return np.zeros(points.shape)


def _unit_theta(points):
    return np.ones(points.shape[:-1])


def _bump_theta(points):
    x, y = points[..., 0], points[..., 1]
    return 1.0 + 0.5 * np.sin(np.pi * x) * np.sin(np.pi * y)


_BUILTIN = {
    "rest": Scenario(
        "rest", _rest_u, _unit_theta, theta_min=1.0, description="fluid at rest, unit temperature"
    ),
    "decay": Scenario(
        "decay",
        bump_stream_velocity,
        _bump_theta,
        theta_min=1.0,
        description="unforced decay of a single vortex; temperature 1 + sin(pi x) sin(pi y)/2",
    ),
}


def scenario_names():
    from .mms import MMS_CASES

    return sorted(_BUILTIN) + sorted(MMS_CASES)


def get_scenario(name):
    """Built-in scenario, or the data of a manufactured-solution case."""
    if name in _BUILTIN:
        return _BUILTIN[name]
    from .mms import MMS_CASES, mms_case

    if name in MMS_CASES:
        return mms_case(name).scenario()
    raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(scenario_names())}")
