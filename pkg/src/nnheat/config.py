"""Plain-text run configuration: one ``section.key = value`` per line.

``#`` starts a comment; blank lines are ignored. Unknown keys are rejected.
Example::

    mesh.nx = 32
    model.kind = power_law
    model.r = 2
    time.T = 0.2
    time.tau = 0.01
    scenario.name = decay
"""

from dataclasses import dataclass, field
import math
from pathlib import Path

from .constitutive import Coefficient, ConductivityLaw, ConstitutiveModel
from .errors import ConfigError
from .scenarios import get_scenario
from .stepper import RunConfig


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _float(text):
    t = text.strip().lower()
    if t in ("inf", "infinity", "+inf"):
        return math.inf
    return float(t)


_KEYS = {
    "mesh.nx": _int,
    "mesh.ny": _int,
    "mesh.level": _int,
    "mesh.file": str,
    "model.kind": str,
    "model.r": _float,
    "model.K": _float,
    "model.alpha": _float,
    "model.alpha_slope": _float,
    "model.beta": _float,
    "model.beta_slope": _float,
    "model.gamma": _float,
    "model.gamma_slope": _float,
    "model.tau_y": _float,
    "model.eps_reg": _float,
    "conductivity.kind": str,
    "conductivity.c1": _float,
    "conductivity.c2": _float,
    "conductivity.cap": _float,
    "time.T": _float,
    "time.tau": _float,
    "penalty.k": _float,
    "penalty.r_star": _float,
    "solver.picard_tol": _float,
    "solver.picard_max": _int,
    "solver.damping": _float,
    "solver.mass_lumping": _bool,
    "scenario.name": str,
    "output.dir": str,
    "output.vtk_every": _int,
    "checks.seed": _int,
    "checks.n_samples": _int,
    "wsu.theta_scale": _float,
}

KNOWN_KEYS = tuple(_KEYS)


@dataclass
class Config:
    """Validated configuration: the run parameters plus checker and experiment settings."""

    run: RunConfig
    seed: int = 0
    n_samples: int = 10_000
    theta_scale: float = 1.0
    values: dict = field(default_factory=dict)


def parse_text(text, source="<string>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return build_config(values)


def parse_config(path):
    """Read and validate a configuration file.

    Raises
    ------
    ConfigError
        Missing file, malformed line, unknown key or a value outside its domain.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    return parse_text(p.read_text(), str(path))


def _coefficient(values, name):
    return Coefficient(values.get(f"model.{name}", 1.0), values.get(f"model.{name}_slope", 0.0))


def build_config(values):
    """Turn a ``{"section.key": value}`` mapping into a validated :class:`Config`."""
    try:
        model = ConstitutiveModel(
            kind=values.get("model.kind", "power_law"),
            r=values.get("model.r", 2.0),
            alpha=_coefficient(values, "alpha"),
            beta=_coefficient(values, "beta"),
            gamma=_coefficient(values, "gamma"),
            K=values.get("model.K", 1.0),
            tau_y=values.get("model.tau_y", 0.0),
            eps_reg=values.get("model.eps_reg", 0.1),
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None
    try:
        law = ConductivityLaw(
            kind=values.get("conductivity.kind", "constant"),
            c1=values.get("conductivity.c1", 1.0),
            c2=values.get("conductivity.c2", 1.0),
            cap=values.get("conductivity.cap", 1e3),
        )
    except ValueError as exc:
        raise ConfigError(f"conductivity: {exc}") from None

    nx = values.get("mesh.nx")
    if "mesh.level" in values:
        if nx is not None or "mesh.ny" in values:
            raise ConfigError("mesh.level cannot be combined with mesh.nx / mesh.ny")
        if values["mesh.level"] < 0:
            raise ConfigError(f"mesh.level must be >= 0, got {values['mesh.level']}")
        nx = 2 ** values["mesh.level"]
    nx = 16 if nx is None else nx

    run = RunConfig(
        nx=nx,
        ny=values.get("mesh.ny"),
        mesh_file=values.get("mesh.file"),
        model=model,
        law=law,
        T=values.get("time.T", 0.1),
        tau=values.get("time.tau", 0.01),
        k=values.get("penalty.k", math.inf),
        r_star=values.get("penalty.r_star"),
        picard_tol=values.get("solver.picard_tol", 1e-8),
        picard_max=values.get("solver.picard_max", 50),
        damping=values.get("solver.damping", 1.0),
        mass_lumping=values.get("solver.mass_lumping", False),
        scenario=values.get("scenario.name", "decay"),
        output_dir=values.get("output.dir"),
        vtk_every=values.get("output.vtk_every", 0),
    )
    get_scenario(run.scenario)
    if run.vtk_every < 0:
        raise ConfigError(f"output.vtk_every must be >= 0, got {run.vtk_every}")
    n_samples = values.get("checks.n_samples", 10_000)
    if n_samples < 2:
        raise ConfigError(f"checks.n_samples must be >= 2, got {n_samples}")
    theta_scale = values.get("wsu.theta_scale", 1.0)
    return Config(run, values.get("checks.seed", 0), n_samples, theta_scale, dict(values))
