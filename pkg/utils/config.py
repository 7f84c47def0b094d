"""
Configuration management utilities.

Environment settings come from the process environment and an optional .env
file. Run configurations come from a flat ``key = value`` file with ``#``
comments, or from JSON, and are validated completely at load time.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from dotenv import load_dotenv

from core.models import GridSpec, ProblemParams
from utils.exceptions import ArtifactIOError, ConfigurationError


class Settings:
    """Environment settings of the fracbump process."""

    def __init__(self, env_file: Optional[str] = None):
        """Initialize settings.

        Args:
            env_file: Path to .env file (optional)
        """
        if env_file:
            load_dotenv(env_file)
        else:
            load_dotenv()

    @property
    def log_level(self) -> str:
        """Logging level from FRACBUMP_LOG."""
        return os.getenv("FRACBUMP_LOG", "info")

    @property
    def threads(self) -> Optional[int]:
        """FFT worker count, or None for the library default."""
        value = os.getenv("FRACBUMP_THREADS")
        return int(value) if value else None

    @property
    def cache_dir(self) -> str:
        """Directory of the ground-state cache."""
        return os.getenv("FRACBUMP_CACHE_DIR", ".fracbump_cache")

    def get(self, key: str, default: Any = None) -> Any:
        """Get an environment value by key.

        Args:
            key: Environment variable name
            default: Default value if key not found

        Returns:
            Environment value
        """
        return os.getenv(key, default)

    def to_dict(self) -> Dict[str, Any]:
        """Convert settings to dictionary."""
        return {
            "log_level": self.log_level,
            "threads": self.threads,
            "cache_dir": self.cache_dir,
        }


TASKS = ("ground-state", "coeffs", "ansatz", "reduce", "construct", "sweep")

_INT_KEYS = {"N", "M", "max_iter", "dealias", "fp_max_iter", "k", "seed", "threads"}
_FLOAT_KEYS = {"s", "p", "a", "m", "sigma", "C0", "L", "tol", "damping", "fp_tol", "krylov_tol"}


@dataclass
class RunConfig:
    """Problem parameters, numerics and output settings of one run."""

    N: int = 2
    s: float = 0.5
    p: float = 2.0
    a: float = 1.0
    m: float = 1.0
    sigma: float = 0.05
    C0: float = 4.0
    L: float = 32.0
    M: int = 256
    tol: float = 1e-9
    max_iter: int = 2000
    damping: float = 0.9
    dealias: int = 1
    fp_tol: float = 1e-8
    fp_max_iter: int = 50
    krylov_tol: float = 1e-8
    k: int = 8
    k_list: List[int] = field(default_factory=lambda: [6, 8, 12])
    r: Union[float, str] = "opt"
    task: Optional[str] = None
    out: str = "out"
    seed: int = 0
    threads: Optional[int] = None
    cache_dir: Optional[str] = None
    ground_L: Optional[float] = None
    ground_M: Optional[int] = None

    @property
    def params(self) -> ProblemParams:
        return ProblemParams(self.N, self.s, self.p, self.a, self.m, self.sigma, self.C0)

    @property
    def grid(self) -> GridSpec:
        """Grid of the ring construction."""
        return GridSpec(self.N, self.L, self.M)

    @property
    def ground_grid(self) -> GridSpec:
        """Grid of the ground state; the construction grid unless overridden."""
        return GridSpec(self.N, self.ground_L or self.L, self.ground_M or self.M)

    @property
    def optimal_r(self) -> bool:
        return isinstance(self.r, str) and self.r.lower() == "opt"

    def validate(self) -> None:
        """Check every constraint, quoting the first one that fails."""
        GridSpec(self.N, self.L, self.M)
        GridSpec(self.N, self.ground_L or self.L, self.ground_M or self.M)
        self.params.validate()
        for name in ("tol", "fp_tol", "krylov_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.damping <= 1:
            raise ConfigurationError(f"damping must lie in (0, 1], got {self.damping}")
        if self.dealias < 1:
            raise ConfigurationError(f"dealias must be >= 1, got {self.dealias}")
        if self.k < 1 or any(k < 1 for k in self.k_list):
            raise ConfigurationError("spike counts must be positive")
        if not self.optimal_r and not float(self.r) > 0:
            raise ConfigurationError(f"r must be positive or 'opt', got {self.r}")
        self.check_ring_radius(self.k)
        if self.task is not None and self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}; expected one of {', '.join(TASKS)}")

    def check_ring_radius(self, k: int) -> None:
        """Reject r = opt on a flat potential for more than one spike.

        Without a/r^m there is no optimal radius, and placing k > 1 spikes at
        the origin makes their constraint fields coincide.

        Args:
            k: Spike count of the run

        Raises:
            ConfigurationError: a = 0, r = opt and k > 1
        """
        if self.a == 0.0 and self.optimal_r and k > 1:
            raise ConfigurationError(
                f"a = 0 has no optimal radius; give r explicitly for k = {k} spikes",
                details={"a": self.a, "k": k},
            )

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Copy with the non-None overrides applied."""
        values = {key: value for key, value in overrides.items() if value is not None}
        return replace(self, **values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _coerce(key: str, value: Any) -> Any:
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key == "k_list":
            if isinstance(value, str):
                return [int(item) for item in value.replace(",", " ").split()]
            return [int(item) for item in value]
        if key == "r":
            if isinstance(value, str) and value.strip().lower() == "opt":
                return "opt"
            return float(value)
        if key in ("ground_L",):
            return float(value)
        if key in ("ground_M",):
            return int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid value for {key}: {value!r}") from exc
    return value


def parse_key_value(text: str) -> Dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    record = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {number}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        record[key] = value
    return record


def run_config_from_dict(record: Dict[str, Any]) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(record) - known)
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
    values = {key: _coerce(key, value) for key, value in record.items()}
    config = RunConfig(**values)
    config.validate()
    return config


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Load and validate a run configuration (key-value text or JSON)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            record = json.loads(text)
        except ValueError as exc:
            raise ConfigurationError(f"invalid JSON config {path}: {exc}") from exc
    else:
        record = parse_key_value(text)
    return run_config_from_dict(record)


# Global settings instance
settings = Settings()
