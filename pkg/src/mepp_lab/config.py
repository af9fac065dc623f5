"""Experiment configuration schema (one static file per run)."""
from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FamilySpec(_Strict):
    family: Literal["uniform", "vmf", "tilt", "mixture", "tabulated"]
    name: Optional[str] = None
    physical: Optional[bool] = None
    indistinguishable: bool = False
    kappa: Optional[float] = Field(default=None, ge=0)
    direction: Optional[Any] = None
    index: Optional[int] = Field(default=None, ge=0)
    slope: Optional[float] = None
    weights: Optional[list[float]] = None
    components: Optional[list["FamilySpec"]] = None
    path: Optional[str] = None
    table_seed: Optional[int] = None

    @model_validator(mode="after")
    def _required_params(self):
        need = {"vmf": ["kappa"], "tilt": ["slope"], "mixture": ["components"]}.get(self.family, [])
        missing = [k for k in need if getattr(self, k) is None]
        if missing:
            raise ValueError(f"family {self.family!r} requires {', '.join(missing)}")
        if self.direction is not None and not (
            self.direction in ("first-axis", "diagonal") or isinstance(self.direction, list)
        ):
            raise ValueError("direction must be 'first-axis', 'diagonal' or a list of numbers")
        for c in self.components or []:
            if c.family not in ("uniform", "vmf", "tilt"):
                raise ValueError(f"mixture components must be uniform, vmf or tilt, not {c.family!r}")
        if self.weights is not None and self.components is not None and len(self.weights) != len(self.components):
            raise ValueError("mixture needs one weight per component")
        return self

    def as_spec(self) -> dict:
        return self.model_dump(exclude_none=True)


class FlowBlock(_Strict):
    grid_size: int = Field(16, ge=4, le=64)
    nu: float = Field(..., ge=0)
    dt: float = Field(..., gt=0)
    t_end: float = Field(..., gt=0)
    preset: Literal["single-mode", "taylor-green", "random-solenoidal", "csv"] = "random-solenoidal"
    amplitude: float = 1.0
    wavevector: list[int] = [0, 0, 1]
    energy: float = Field(0.5, gt=0)
    k_max: float = Field(3.0, gt=0)
    coefficients_csv: Optional[str] = None
    sample_times: Optional[list[float]] = None
    n_samples: int = Field(6, ge=1)
    cylinder_dim: int = Field(3, ge=1)
    dealiasing: Literal["two-thirds"] = "two-thirds"

    @field_validator("nu", mode="before")
    @classmethod
    def _constant_viscosity(cls, v):
        if isinstance(v, (list, dict)):
            raise ValueError("spatially varying viscosity is out of scope; nu must be a constant")
        return v

    @model_validator(mode="after")
    def _csv_path(self):
        if self.preset == "csv" and not self.coefficients_csv:
            raise ValueError("preset 'csv' requires coefficients_csv")
        return self

    def times(self) -> list[float]:
        if self.sample_times is not None:
            return list(self.sample_times)
        if self.n_samples == 1:
            return [0.0]
        step = self.t_end / (self.n_samples - 1)
        return [i * step for i in range(self.n_samples)]


class _Run(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int


class Prop1Block(_Strict):
    n_max: int = Field(10, ge=1, le=20)
    count: int = Field(20_000, ge=100)


class Prop2Block(_Strict):
    dims: list[int] = [1, 2, 3, 5, 6]
    energy: float = Field(0.5, gt=0)
    count: int = Field(200_000, ge=100)
    functionals: list[Literal["one", "norm_sq", "x1_sq", "exp_x1_over_r"]] = ["one", "norm_sq", "x1_sq", "exp_x1_over_r"]


class Prop3Block(_Strict):
    dims: list[int] = [1, 2, 3, 5, 10]
    energy: float = Field(0.5, gt=0)
    count: int = Field(1_000_000, ge=100)


class Prop4Block(_Strict):
    dims: list[int] = [2, 3, 5]
    energy: float = Field(0.5, gt=0)
    count: int = Field(100_000, ge=100)
    random_candidates: int = Field(50, ge=0)
    families: list[FamilySpec] = []


class Prop5Block(_Strict):
    boxes: list[float] = [0.0, 1.0, 2.0]
    n_max: int = Field(20, ge=1)


class VerifyConfig(_Run):
    props: list[Literal[1, 2, 3, 4, 5]] = [1, 3, 4, 5]
    estimator: Literal["uniform-sampling", "importance-sampling"] = "uniform-sampling"
    prop1: Prop1Block = Prop1Block()
    prop2: Prop2Block = Prop2Block()
    prop3: Prop3Block = Prop3Block()
    prop4: Prop4Block = Prop4Block()
    prop5: Prop5Block = Prop5Block()


class EntropyConfig(_Run):
    dim: int = Field(..., ge=1)
    energy: float = Field(..., gt=0)
    count: int = Field(100_000, ge=100)
    estimator: Literal["uniform-sampling", "importance-sampling"] = "uniform-sampling"
    family: FamilySpec
    mass: float = Field(1.0, gt=0)


class RestrictConfig(_Run):
    dims: list[int] = [1, 2, 3, 5, 6]
    energy: float = Field(0.5, gt=0)
    count: int = Field(200_000, ge=100)
    rel_step: float = Field(1e-3, gt=0, lt=0.5)
    functionals: list[Literal["one", "norm_sq", "x1_sq", "exp_x1_over_r"]] = ["one", "norm_sq", "x1_sq", "exp_x1_over_r"]


class FlowConfig(_Run):
    flow: FlowBlock
    dump_coefficients: bool = False


class SelectConfig(_Run):
    count: int = Field(100_000, ge=100)
    estimator: Literal["uniform-sampling", "importance-sampling"] = "uniform-sampling"
    flow: FlowBlock
    families: list[FamilySpec] = Field(..., min_length=1)


SCHEMAS: dict[str, type[_Run]] = {
    "verify": VerifyConfig,
    "entropy": EntropyConfig,
    "restrict": RestrictConfig,
    "flow": FlowConfig,
    "select": SelectConfig,
}


def default_config_text(command: str) -> str:
    return resources.files("mepp_lab.data").joinpath(f"{command}.yaml").read_text()


def load_raw(path: str | Path | None, command: str) -> dict:
    try:
        text = default_config_text(command) if path is None else Path(path).read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at top level")
    return data


def validate(command: str, raw: dict):
    """Validate a raw mapping; ValidationError is re-raised as ConfigError with field diagnostics."""
    try:
        return SCHEMAS[command].model_validate(raw)
    except ValidationError as exc:
        err = ConfigError(f"invalid {command} config")
        err.issues = [
            {"field": ".".join(str(p) for p in e["loc"]), "message": e["msg"], "type": e["type"]}
            for e in exc.errors()
        ]
        raise err from exc


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(resolved: dict, threads: int) -> str:
    payload = canonical_json({"config": resolved, "threads": threads})
    return hashlib.sha256(payload.encode()).hexdigest()
