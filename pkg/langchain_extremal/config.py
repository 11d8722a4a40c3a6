"""Run configuration for the command-line surface."""
import json
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .documents import ReportFormat, digest
from .errors import ExtremalError

DEFAULT_TOL = 1e-9


def load_environment() -> None:
    """Read ``.env`` into the process environment without overriding it."""
    load_dotenv(override=False)


def default_tol() -> float:
    return float(os.getenv("EXTREMAL_DEFAULT_TOL", str(DEFAULT_TOL)))


def log_level() -> str:
    return os.getenv("EXTREMAL_LOG_LEVEL", "WARNING").upper()


class Command(str, Enum):
    CLASSIFY = "classify"
    DECOMPOSE = "decompose"
    PIN_CHECK = "pin-check"
    URYSOHN = "urysohn"
    PIN_VIOLATE = "pin-violate"
    ORACLE = "oracle"
    POINTS = "points"
    PF_PROBE = "pf-probe"
    POROSITY = "porosity"
    LIPSCHITZ = "lipschitz"
    SCHEMA = "schema"


SEEDED_COMMANDS = {Command.POROSITY, Command.LIPSCHITZ}


class RunConfig(BaseModel):
    command: Command = Field(..., description="Subcommand to run")
    inputs: List[str] = Field(
        default_factory=list, description="Paths of mapping documents, in order"
    )
    tol: float = Field(default_factory=default_tol, gt=0, description="Numerical tolerance")
    seed: Optional[int] = Field(
        default=None, ge=0, lt=2**64, description="Seed of the counter-based generator"
    )
    q: float = Field(default=0.25, gt=0, lt=0.5, description="Weight window [q, 1-q]")
    epsilon: float = Field(default=0.5, gt=0, description="Porosity search radius")
    lambda_step: float = Field(default=1e-3, gt=0, lt=0.5, description="Step of lambda scans")
    probes: int = Field(default=1000, ge=1, description="Probe count of ball certification")
    samples: int = Field(default=256, ge=2, description="Sample budget of sampled bounds")
    search_iterations: int = Field(default=64, ge=1, description="Bisection budget of pair search")
    format: ReportFormat = Field(default=ReportFormat.JSON)
    params: Dict[str, Any] = Field(
        default_factory=dict, description="Command-specific vectors and options"
    )

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def seed_for_randomized_commands(self) -> "RunConfig":
        if self.command in SEEDED_COMMANDS and self.seed is None:
            raise ValueError(f"seed is mandatory for the {self.command.value} command")
        return self

    def config_hash(self) -> str:
        return digest(self.model_dump(mode="json"))


def load_config(path: Optional[str] = None, **overrides: Any) -> RunConfig:
    """Config file values, overridden by every non-None keyword."""
    data: Dict[str, Any] = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ExtremalError(f"Invalid config file {path}: {str(e)}")
        if not isinstance(data, dict):
            raise ExtremalError(f"Invalid config file {path}: expected a JSON object")
    data.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return RunConfig(**data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ExtremalError(f"Invalid run configuration at {location}: {first['msg']}")


__all__ = [
    "Command",
    "RunConfig",
    "default_tol",
    "load_config",
    "load_environment",
    "log_level",
]
