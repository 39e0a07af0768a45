"""Experiment configuration: defaults, validation, strict file format.

Config files are flat ``key = value`` text with section headers.  Parsing is
strict: unknown sections or keys are errors, so a saved ``config.echo`` is
always a complete, loadable record of a run.  Floats are echoed with 17
significant digits; rerunning from an echo reproduces the run byte for byte.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields, replace

PDE_KINDS = ("heat", "burgers")
MODEL_PATHS = ("full", "dmdc")
DISTURBANCE_KINDS = ("sin", "const", "none")
B_ACCESS_CHOICES = ("auto", "known", "simulator")
LAMBDA_UNITS = ("amplitude", "state")
INNOVATIONS = ("averaged", "literal")
BOUNDARY_CHOICES = ("periodic", "dirichlet")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # experiment
    pde: str = "heat"
    model: str = "full"
    nu: float = 0.002
    p: int = 100
    L: float = 1.0
    m: int = 8
    bc: str = "periodic"
    T_sim: float = 0.1
    dt_sim: float = 1e-3
    n_trials: int = 100
    seed: int = 0
    # cost weights, scaled identities
    q: float = 1.0
    r_input: float = 1.0
    g: float = 1.0
    # robust term
    lam: float = 0.2
    r_robust: float = 0.002
    b_access: str = "auto"
    lambda_units: str = "amplitude"
    # dual EnKF
    enkf_particles: int = 10000
    enkf_T: float | None = None  # None = auto
    enkf_dt: float | None = None  # None = auto
    innovation: str = "averaged"
    # disturbance
    dist_kind: str = "sin"
    d0: float = 0.1
    channel: tuple[float, ...] | None = None
    # reduced model
    dmdc_order: int = 10
    dmdc_trajectories: int = 20
    dmdc_steps: int = 150
    dmdc_amplitude: float = 0.5
    # grid sweep
    grid_d0: tuple[float, ...] = (0.0, 0.05, 0.1, 0.2)
    grid_lambda: tuple[float, ...] = (0.0, 0.1, 0.2, 0.4)
    grid_kinds: tuple[str, ...] = ("sin", "const")

    def validate(self) -> "ExperimentConfig":
        def expect(cond, msg):
            if not cond:
                raise ConfigError(msg)

        expect(self.pde in PDE_KINDS, f"pde must be one of {PDE_KINDS}")
        expect(self.model in MODEL_PATHS, f"model must be one of {MODEL_PATHS}")
        expect(self.bc in BOUNDARY_CHOICES, f"bc must be one of {BOUNDARY_CHOICES}")
        expect(self.dist_kind in DISTURBANCE_KINDS, f"disturbance kind must be one of {DISTURBANCE_KINDS}")
        expect(self.b_access in B_ACCESS_CHOICES, f"b_access must be one of {B_ACCESS_CHOICES}")
        expect(self.lambda_units in LAMBDA_UNITS, f"lambda_units must be one of {LAMBDA_UNITS}")
        expect(self.innovation in INNOVATIONS, f"innovation must be one of {INNOVATIONS}")
        expect(self.nu > 0, "nu must be positive")
        expect(self.p >= 3, "p must be at least 3")
        expect(self.L > 0, "L must be positive")
        expect(1 <= self.m <= self.p, "need 1 <= m <= p")
        expect(self.T_sim > 0 and self.dt_sim > 0, "T_sim and dt_sim must be positive")
        expect(self.n_trials >= 1, "n_trials must be at least 1")
        expect(self.q > 0 and self.r_input > 0 and self.g > 0, "weights must be positive")
        expect(self.lam >= 0, "lambda must be nonnegative")
        expect(self.r_robust > 0, "robust r must be positive")
        expect(self.enkf_particles >= 2, "need at least 2 particles")
        expect(self.enkf_T is None or self.enkf_T > 0, "enkf T must be positive")
        expect(self.enkf_dt is None or self.enkf_dt > 0, "enkf dt must be positive")
        expect(self.d0 >= 0, "d0 must be nonnegative")
        if self.channel is not None:
            expect(len(self.channel) == self.m, "channel weights must have length m")
        expect(1 <= self.dmdc_order <= self.p, "dmdc order must be in [1, p]")
        expect(self.dmdc_trajectories >= 1 and self.dmdc_steps >= 1, "dmdc snapshot counts must be positive")
        expect(len(self.grid_d0) > 0 and len(self.grid_lambda) > 0 and len(self.grid_kinds) > 0,
               "grid lists must be nonempty")
        for kind in self.grid_kinds:
            expect(kind in DISTURBANCE_KINDS, f"grid kind {kind!r} unknown")
        return self


def heat_config(**overrides) -> ExperimentConfig:
    """Heat-equation defaults: p=100, m=8, nu=0.002, T=0.1, N=10^4, Q=G=R=I."""
    return replace(ExperimentConfig(), **overrides).validate()


def burgers_config(**overrides) -> ExperimentConfig:
    """Burgers defaults: p=128, m=10, T=3, N=10^3, Q=G=I, R=0.1 I."""
    base = ExperimentConfig(
        pde="burgers",
        nu=0.02,
        p=128,
        m=10,
        T_sim=3.0,
        r_input=0.1,
        enkf_particles=1000,
    )
    return replace(base, **overrides).validate()


def default_config(pde: str, **overrides) -> ExperimentConfig:
    if pde == "heat":
        return heat_config(**overrides)
    if pde == "burgers":
        return burgers_config(**overrides)
    raise ConfigError(f"pde must be one of {PDE_KINDS}, got {pde!r}")


# --- file format ------------------------------------------------------------

def _parse_float(s: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"expected a number, got {s!r}") from None


def _parse_int(s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"expected an integer, got {s!r}") from None


def _parse_opt_float(s: str):
    if s.strip().lower() == "auto":
        return None
    return _parse_float(s)


def _parse_float_list(s: str) -> tuple[float, ...]:
    return tuple(_parse_float(v) for v in s.split(",") if v.strip())


def _parse_str_list(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _parse_opt_float_list(s: str):
    if s.strip().lower() == "none":
        return None
    return _parse_float_list(s)


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


# section -> {file key: (dataclass field, parser)}
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "experiment": {
        "pde": ("pde", str),
        "model": ("model", str),
        "nu": ("nu", _parse_float),
        "p": ("p", _parse_int),
        "L": ("L", _parse_float),
        "m": ("m", _parse_int),
        "bc": ("bc", str),
        "T_sim": ("T_sim", _parse_float),
        "dt_sim": ("dt_sim", _parse_float),
        "n_trials": ("n_trials", _parse_int),
        "seed": ("seed", _parse_int),
    },
    "weights": {
        "q": ("q", _parse_float),
        "r": ("r_input", _parse_float),
        "g": ("g", _parse_float),
    },
    "robust": {
        "lambda": ("lam", _parse_float),
        "r": ("r_robust", _parse_float),
        "b_access": ("b_access", str),
        "lambda_units": ("lambda_units", str),
    },
    "enkf": {
        "particles": ("enkf_particles", _parse_int),
        "T": ("enkf_T", _parse_opt_float),
        "dt": ("enkf_dt", _parse_opt_float),
        "innovation": ("innovation", str),
    },
    "disturbance": {
        "kind": ("dist_kind", str),
        "d0": ("d0", _parse_float),
        "channel": ("channel", _parse_opt_float_list),
    },
    "dmdc": {
        "order": ("dmdc_order", _parse_int),
        "trajectories": ("dmdc_trajectories", _parse_int),
        "steps": ("dmdc_steps", _parse_int),
        "amplitude": ("dmdc_amplitude", _parse_float),
    },
    "grid": {
        "d0_list": ("grid_d0", _parse_float_list),
        "lambda_list": ("grid_lambda", _parse_float_list),
        "kinds": ("grid_kinds", _parse_str_list),
    },
}


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the strict sectioned key=value format into a config."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None

    raw: dict[str, object] = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in cp[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            field_name, parser = _SCHEMA[section][key]
            raw[field_name] = parser(value)

    pde = raw.pop("pde", "heat")
    return default_config(str(pde), **raw)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def render_config(cfg: ExperimentConfig) -> str:
    """Canonical text form of a config; loading it back reproduces the run."""
    by_field = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    out = io.StringIO()
    for si, (section, keys) in enumerate(_SCHEMA.items()):
        if si:
            out.write("\n")
        out.write(f"[{section}]\n")
        for key, (field_name, _) in keys.items():
            value = by_field[field_name]
            if field_name == "channel" and value is None:
                text = "none"
            else:
                text = _fmt(value)
            out.write(f"{key} = {text}\n")
    return out.getvalue()


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(render_config(cfg))
