"""Run configuration: YAML text validated against a strict schema.

Every violation is collected and reported together (``ConfigError.violations``).
Unknown keys are rejected at every level.
"""

from typing import List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .hazard import DEFAULT_GRID_WIDTH, DEFAULT_SEGMENTS
from .posterior import PriorSpec
from .simulate import MASK_2F


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataBlock(_Strict):
    dir: Optional[str] = None
    long: Optional[str] = None
    surv: Optional[str] = None
    items: Optional[List[str]] = None


class ModelBlock(_Strict):
    K: int = Field(4, ge=1)
    p: int = Field(2, ge=1)
    mask: Optional[List[List[int]]] = None
    baseline: Literal["constant", "weibull", "piecewise"] = "constant"
    segments: int = Field(DEFAULT_SEGMENTS, ge=1)
    cutpoints: Optional[List[float]] = None
    # null means no filler points (grid = measurement times plus 0 and the event time)
    grid_width: Optional[float] = DEFAULT_GRID_WIDTH

    @field_validator("p")
    @classmethod
    def _p_two(cls, v):
        if v != 2:
            raise ValueError("constraints implemented for p = 2 only")
        return v

    @field_validator("grid_width")
    @classmethod
    def _width(cls, v):
        if v is not None and not v > 0:
            raise ValueError("grid width must be positive")
        return v

    @model_validator(mode="after")
    def _mask_shape(self):
        if self.mask is None:
            default = np.asarray(MASK_2F, dtype=int)
            if (self.K, self.p) == default.shape:
                self.mask = default.tolist()
            else:
                raise ValueError("mask is required unless K = 4 and p = 2")
        if len(self.mask) != self.K or any(len(r) != self.p for r in self.mask):
            raise ValueError(f"mask must be {self.K} x {self.p}")
        if any(sorted(r) != [0] * (self.p - 1) + [1] for r in self.mask):
            raise ValueError("each mask row needs exactly one 1 and zeros elsewhere")
        if self.cutpoints is not None and len(self.cutpoints) != self.segments + 1:
            raise ValueError("cutpoints must have segments + 1 entries")
        return self


class PriorBlock(_Strict):
    theta_sd: float = Field(PriorSpec.theta_sd, gt=0)
    rho_bound: float = Field(PriorSpec.rho_bound, gt=0, lt=1)
    lambda_mean: float = PriorSpec.lambda_mean
    sigma_lambda_scale: float = Field(PriorSpec.sigma_lambda_scale, gt=0)
    sigma_u_scale: float = Field(PriorSpec.sigma_u_scale, gt=0)
    sigma_eps_scale: float = Field(PriorSpec.sigma_eps_scale, gt=0)
    beta0_sd: float = Field(PriorSpec.beta0_sd, gt=0)
    beta_sd: float = Field(PriorSpec.beta_sd, gt=0)
    alpha_sd: float = Field(PriorSpec.alpha_sd, gt=0)
    sigma_beta_scale: float = Field(PriorSpec.sigma_beta_scale, gt=0)
    weibull_shape_scale: float = Field(PriorSpec.weibull_shape_scale, gt=0)
    weibull_scale_scale: float = Field(PriorSpec.weibull_scale_scale, gt=0)

    def spec(self):
        return PriorSpec(**self.model_dump())


class SamplerBlock(_Strict):
    chains: int = Field(1, ge=1)
    iterations: int = Field(2000, ge=1)
    warmup: int = Field(1000, ge=0)
    target_accept: float = Field(0.8, gt=0, lt=1)
    max_leapfrog: int = Field(32, ge=1)
    parallel: bool = False

    @model_validator(mode="after")
    def _warmup(self):
        if self.warmup >= self.iterations:
            raise ValueError("warmup must be smaller than iterations")
        return self


class InitBlock(_Strict):
    mode: Literal["two-stage", "fixed", "file"] = "two-stage"
    path: Optional[str] = None
    stage1_method: Literal["map", "sample"] = "map"

    @model_validator(mode="after")
    def _path(self):
        if self.mode == "file" and not self.path:
            raise ValueError("init mode 'file' needs a path")
        return self


class SimulateBlock(_Strict):
    setting: int = 1
    pattern: Literal["1", "2", "4", "file"] = "1"
    n: int = Field(200, ge=1)
    timing_file: Optional[str] = None

    @field_validator("pattern", mode="before")
    @classmethod
    def _pattern_str(cls, v):
        return str(v)

    @field_validator("setting")
    @classmethod
    def _setting(cls, v):
        if v not in (1, 2):
            raise ValueError("setting must be 1 or 2")
        return v


class GofBlock(_Strict):
    n_curves: int = Field(100, ge=1)
    dt_max: float = Field(3.0, gt=0)
    dt_points: int = Field(61, ge=2)
    band: List[float] = [0.25, 0.75]


class RunConfig(_Strict):
    seed: int = 0
    data: DataBlock = Field(default_factory=DataBlock)
    model: ModelBlock = Field(default_factory=ModelBlock)
    priors: PriorBlock = Field(default_factory=PriorBlock)
    sampler: SamplerBlock = Field(default_factory=SamplerBlock)
    init: InitBlock = Field(default_factory=InitBlock)
    simulate: SimulateBlock = Field(default_factory=SimulateBlock)
    gof: GofBlock = Field(default_factory=GofBlock)

    def items(self):
        if self.data.items is not None:
            return list(self.data.items)
        return [f"y{k + 1}" for k in range(self.model.K)]


def _violations(exc):
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        out.append(f"{loc}: {msg}")
    return out


def validate(data):
    """Validate a mapping; raises :class:`ConfigError` listing all violations."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a mapping of sections"])
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_violations(exc)) from None
    extra = []
    if cfg.data.items is not None and len(cfg.data.items) != cfg.model.K:
        extra.append(f"data.items: expected {cfg.model.K} labels, got {len(cfg.data.items)}")
    if extra:
        raise ConfigError(extra)
    return cfg


def parse_config(text: Union[str, bytes]):
    """Parse YAML text into a :class:`RunConfig`."""
    try:
        data = yaml.safe_load(text) if text else {}
    except yaml.YAMLError as exc:
        raise ConfigError([f"<root>: not valid YAML ({exc})"]) from None
    return validate(data)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg):
    return yaml.safe_dump(cfg.model_dump(), sort_keys=True)
