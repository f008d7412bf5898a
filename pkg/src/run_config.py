"""
Run plans for the command line.

A RunConfig is assembled from an optional --config file (JSON or YAML) with
command-line flags laid over it, then validated once by pydantic.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import Config
from errors import ConfigurationError
from models import MODEL_PARAMETERS

COMMANDS = (
    "gap-scan",
    "vol-scan",
    "decompose",
    "swt",
    "commuting-check",
    "quench",
    "spectrum",
    "filter-tables",
    "scaling-study",
)

# commands that need no model
MODEL_FREE = ("filter-tables", "scaling-study")


class RunConfig(BaseModel):
    """Validated plan for one CLI command"""

    model_config = ConfigDict(extra="forbid")

    command: Literal[COMMANDS]  # type: ignore[valid-type]
    out: str = Field(default_factory=lambda: str(Path(Config.RUNS_DIR) / "latest"))

    # model and lattice
    model: Optional[str] = None
    N: Optional[int] = Field(default=None, ge=1)
    lx: Optional[int] = Field(default=None, ge=1)
    ly: Optional[int] = Field(default=None, ge=1)
    periodic: Optional[bool] = None
    params: Dict[str, Any] = Field(default_factory=dict)
    state: Optional[str] = None

    # scans
    rmax: int = Field(default=4, ge=0)
    vmax: int = Field(default=4, ge=1)
    boundary: Literal["product", "open", "periodic"] = "product"
    anchor: str = "all"
    solver: Literal["dense", "iterative"] = "dense"
    translation_invariant: bool = False

    # decomposition
    r: int = Field(default=1, ge=0)
    kappa1: float = 0.0
    alpha: float = 1.0
    mu: float = 0.0
    probe_r: Optional[int] = None

    # filters and SWT
    delta: Optional[float] = Field(default=None, gt=0)
    n_max: Optional[int] = Field(default=None, ge=100)
    k_max: int = Field(default=3, ge=1)
    size_cutoff: Optional[int] = Field(default=None, ge=1)

    # commuting checks
    volume_cap: int = Field(default=3, ge=1)
    d_scale: float = 0.0

    # dynamics
    t_max: float = Field(default=100.0, ge=0)
    dt: float = Field(default=0.5, gt=0)
    k_lowest: int = Field(default=60, ge=1)
    entanglement: bool = False

    # scaling study
    eps_list: List[float] = Field(default_factory=lambda: [0.10, 0.15, 0.20, 0.25])
    offset: float = 3.0
    overlap_threshold: float = Field(default=0.5, gt=0, lt=1)

    threads: int = Field(default_factory=lambda: Config.THREADS, ge=1)
    seed: int = Field(default_factory=lambda: Config.DEFAULT_SEED)

    @field_validator("model")
    @classmethod
    def _known_model(cls, value):
        if value is not None and value not in MODEL_PARAMETERS:
            raise ValueError(f"unknown model '{value}' (choose from {', '.join(MODEL_PARAMETERS)})")
        return value

    @model_validator(mode="after")
    def _model_needed(self):
        if self.command not in MODEL_FREE and self.model is None:
            raise ValueError(f"command {self.command} needs --model")
        if self.model is not None:
            unknown = set(self.params) - set(MODEL_PARAMETERS[self.model])
            if unknown:
                raise ValueError(f"unknown parameter(s) {sorted(unknown)} for model {self.model}")
        return self

    def model_mapping(self) -> Dict:
        """Mapping accepted by ModelSpec.from_config"""
        mapping: Dict[str, Any] = {"model": self.model, **self.params}
        for key in ("N", "lx", "ly", "periodic"):
            value = getattr(self, key)
            if value is not None:
                mapping[key] = value
        return mapping

    def echo(self) -> Dict:
        return self.model_dump(mode="json")


def load_config_file(path: str) -> Dict:
    """JSON or YAML mapping (JSON parses as YAML)"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}")
    except yaml.YAMLError as e:
        raise ConfigurationError(f"config file {path} is not valid JSON/YAML: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a mapping")
    return data


def build_run_config(command: str, overrides: Dict, config_path: Optional[str] = None) -> RunConfig:
    """File values first, flags (non-None overrides) on top"""
    data = load_config_file(config_path) if config_path else {}
    data = dict(data)
    file_params = dict(data.pop("params", {}) or {})
    flag_params = {k: v for k, v in (overrides.pop("params", {}) or {}).items() if v is not None}
    data.update({k: v for k, v in overrides.items() if v is not None})
    data["command"] = command
    data["params"] = {**file_params, **flag_params}
    if data.get("model") is not None:
        allowed = MODEL_PARAMETERS.get(data["model"], {})
        # flags shared by several commands only reach the model when it takes them
        data["params"] = {k: v for k, v in data["params"].items() if k in allowed or k in file_params}
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid run configuration: {e}")


def output_dir(run: RunConfig) -> Path:
    path = Path(run.out)
    path.mkdir(parents=True, exist_ok=True)
    return path
