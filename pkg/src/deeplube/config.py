"""Run configuration: one JSON document, overridable path by path."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .dataio import WEEK_TRAIN_FRACTION
from .metrics import CwcConfig
from .network import NetworkDims
from .training import LossConfig, OptimizerConfig, TrainConfig


class DataSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: str | None = None
    column: int | str = -1
    time_column: int | str | None = None
    header: bool | None = None
    normalization: Literal["minmax", "none"] = "minmax"
    lags: int = Field(9, ge=1)
    train_fraction: float = Field(WEEK_TRAIN_FRACTION, gt=0, lt=1)


class MetricsSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # range of the target variable; None means max(y) - min(y) of the evaluated set
    target_range: float | None = Field(None, gt=0)
    normalized_units: bool = False
    record_time: bool = False


class RunConfig(BaseModel):
    """Everything needed to replay a run. ``train.seed`` seeds both init and shuffling."""

    model_config = ConfigDict(extra="forbid")

    data: DataSection = DataSection()
    network: NetworkDims = NetworkDims()
    loss: LossConfig = LossConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    train: TrainConfig = TrainConfig()
    cwc: CwcConfig = CwcConfig()
    metrics: MetricsSection = MetricsSection()
    out: str | None = None

    @property
    def seed(self) -> int:
        return self.train.seed

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True) + "\n"


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  {p}" for p in problems))
        self.problems = problems


def set_path(doc: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError([f"{dotted}: {k} is not a section"])
    node[keys[-1]] = value


def parse_value(text: str) -> Any:
    """JSON literal if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_config(base: dict | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    doc = json.loads(json.dumps(base or {}))
    for path, value in (overrides or {}).items():
        set_path(doc, path, value)
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        problems = [f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()]
        raise ConfigError(problems) from None


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    base = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError([f"config file not found: {path}"])
        try:
            base = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: {exc}"]) from None
    return build_config(base, overrides)
