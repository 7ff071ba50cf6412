"""Configuration management for GReg."""
import logging
import os
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Mapping, Optional

from dotenv import dotenv_values, load_dotenv

from utils.errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)


@dataclass
class GridConfig:
    """Synthetic grid size and interface band."""
    n: int = 64
    band_width: Optional[float] = None  # domain units; None means 4 cells


@dataclass
class InertiaConfig:
    """Inertia operator settings."""
    kind: str = "gaussian_kernel"
    sigma: float = 0.05
    alpha: float = 0.01
    gamma: float = 1.0
    order: int = 1
    regularized: bool = True
    nugget: float = 1e-4  # identity weight added to the Gaussian smoother


@dataclass
class RegistrationConfig:
    """Energy settings."""
    steps: int = 10
    sim_kind: str = "lncc"
    lncc_window: float = 5.0
    reg_weight: float = 1.0


@dataclass
class OptimizerConfig:
    """Relaxation optimizer settings."""
    iters: int = 50
    step_size: float = 1.0
    line_search: bool = True
    tol: float = 1e-4
    multires: bool = False
    armijo_c: float = 1e-4
    max_halvings: int = 30


@dataclass
class AppConfig:
    """Process-level settings."""
    threads: int = 1
    seed: int = 0
    log_level: str = "INFO"


@dataclass
class Config:
    grid: GridConfig = field(default_factory=GridConfig)
    inertia: InertiaConfig = field(default_factory=InertiaConfig)
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    app: AppConfig = field(default_factory=AppConfig)


# key in config files and CLI overrides -> (section, attribute)
SETTING_KEYS = {
    "n": ("grid", "n"),
    "band_width": ("grid", "band_width"),
    "inertia_kind": ("inertia", "kind"),
    "sigma": ("inertia", "sigma"),
    "alpha": ("inertia", "alpha"),
    "gamma": ("inertia", "gamma"),
    "order": ("inertia", "order"),
    "regularized": ("inertia", "regularized"),
    "nugget": ("inertia", "nugget"),
    "steps": ("registration", "steps"),
    "sim_kind": ("registration", "sim_kind"),
    "lncc_window": ("registration", "lncc_window"),
    "reg_weight": ("registration", "reg_weight"),
    "iters": ("optimizer", "iters"),
    "step_size": ("optimizer", "step_size"),
    "line_search": ("optimizer", "line_search"),
    "tol": ("optimizer", "tol"),
    "multires": ("optimizer", "multires"),
    "armijo_c": ("optimizer", "armijo_c"),
    "max_halvings": ("optimizer", "max_halvings"),
    "threads": ("app", "threads"),
    "seed": ("app", "seed"),
    "log_level": ("app", "log_level"),
}

ENV_KEYS = {
    "GREG_THREADS": "threads",
    "GREG_SEED": "seed",
    "GREG_LOG_LEVEL": "log_level",
    "GREG_STEPS": "steps",
    "GREG_SIGMA": "sigma",
    "GREG_REG_WEIGHT": "reg_weight",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _field_type(section: Any, name: str) -> Any:
    for f in fields(section):
        if f.name == name:
            return f.type
    raise ConfigError(f"unknown setting {name!r}")


def _coerce(value: Any, type_name: Any, key: str) -> Any:
    if not isinstance(value, str):
        return value
    text = value.strip()
    type_name = str(type_name)
    try:
        if "Optional" in type_name and text.lower() in ("", "none"):
            return None
        if "bool" in type_name:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if "int" in type_name:
            return int(text)
        if "float" in type_name:
            return float(text)
    except ValueError:
        raise ConfigError(f"invalid value {value!r} for {key}")
    return text


def apply_settings(config: Config, settings: Mapping[str, Any], source: str = "overrides") -> Config:
    """
    Apply flat ``key -> value`` settings onto ``config`` in place.

    Raises:
        ConfigError: Unknown key or a value that cannot be parsed
    """
    for key, value in settings.items():
        if value is None:
            continue
        if key not in SETTING_KEYS:
            raise ConfigError(f"unknown configuration key {key!r} in {source}")
        section_name, attr = SETTING_KEYS[key]
        section = getattr(config, section_name)
        setattr(section, attr, _coerce(value, _field_type(section, attr), key))
    return config


def load_config_file(path: str) -> Dict[str, Optional[str]]:
    """Read a ``key = value`` configuration file."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    unknown = sorted(k for k in values if k not in SETTING_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration key(s) {', '.join(unknown)} in {path}")
    return dict(values)


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> Config:
    """
    Load configuration: defaults, then environment, then the config file, then overrides.

    Args:
        path: Optional ``key = value`` config file
        overrides: Flat settings that win over everything else (CLI flags)

    Returns:
        Populated Config
    """
    config = Config()
    env = {key: os.getenv(var) for var, key in ENV_KEYS.items() if os.getenv(var) is not None}
    apply_settings(config, env, "environment")
    if path:
        apply_settings(config, load_config_file(path), path)
    if overrides:
        apply_settings(config, overrides)
    return config


def validate_config(config: Config) -> List[str]:
    """Return human-readable problems with ``config``; an empty list means valid."""
    problems = []
    if config.grid.n < 4:
        problems.append(f"n must be >= 4 (got {config.grid.n})")
    if config.grid.band_width is not None and config.grid.band_width <= 0:
        problems.append("band_width must be positive")
    if config.inertia.kind not in ("gaussian_kernel", "helmholtz"):
        problems.append(f"unknown inertia kind {config.inertia.kind!r}")
    if config.inertia.sigma <= 0:
        problems.append("sigma must be positive")
    if config.inertia.nugget <= 0:
        problems.append("nugget must be positive")
    if config.inertia.alpha <= 0 or config.inertia.gamma <= 0 or config.inertia.order < 1:
        problems.append("helmholtz needs alpha > 0, gamma > 0 and order >= 1")
    if config.registration.steps < 1:
        problems.append("steps must be >= 1")
    if config.registration.sim_kind not in ("lncc", "ssd"):
        problems.append(f"unknown sim_kind {config.registration.sim_kind!r}")
    if config.registration.lncc_window < 2:
        problems.append("lncc_window must be >= 2 pixels")
    if config.registration.reg_weight <= 0:
        problems.append("reg_weight must be positive")
    if config.optimizer.iters < 0:
        problems.append("iters must be >= 0")
    if config.optimizer.step_size <= 0:
        problems.append("step_size must be positive")
    if config.optimizer.tol < 0:
        problems.append("tol must be >= 0")
    if config.app.threads < 1:
        problems.append("threads must be >= 1")
    if config.app.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        problems.append(f"unknown log level {config.app.log_level!r}")
    return problems
