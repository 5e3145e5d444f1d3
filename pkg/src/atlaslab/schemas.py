"""Pydantic request/response models for the HTTP service.

These mirror the core dataclasses closely enough that the CLI can stay a
thin client: every knob it exposes is a field here, validated once, and
the service hands the values straight to the library.
"""

from __future__ import annotations

from pydantic import BaseModel, Field, field_validator

from .experiments import TAGS


class StefanRequest(BaseModel):
    lams: list[float] = Field(default=[1.0], min_length=1)
    t: float = Field(default=1.0, gt=0.0)
    xs: list[float] = []  # profile evaluation points; empty skips profiles

    @field_validator("lams")
    @classmethod
    def _positive(cls, v):
        if any(lam <= 0.0 for lam in v):
            raise ValueError("every lambda must be positive")
        return v


class StefanRow(BaseModel):
    lam: float
    kappa: float
    c1: float
    c2: float
    front: float  # y*(t) at the requested t


class StefanResponse(BaseModel):
    t: float
    rows: list[StefanRow]
    # per-lambda profile values u*(t, x) aligned with the request xs
    profiles: dict[str, list[float]] = {}


class FdSolveRequest(BaseModel):
    lam: float = Field(gt=0.0)
    t_end: float = Field(default=1.0, gt=0.0)
    dxi: float = Field(default=0.0125, gt=0.0)
    domain_length: float = Field(default=50.0, ge=50.0)
    dt_factor: float = Field(default=0.4, gt=0.0)
    t0: float = Field(default=1e-3, gt=0.0)
    scheme: str = "ftcs"
    n_checkpoints: int = Field(default=200, ge=2)
    include_profile: bool = False


class FdSolveResponse(BaseModel):
    lam: float
    kappa_boot: float
    y_final: float
    t_final: float
    front_speed: float
    gradient_at_front: float
    excess_mass: float
    envelope_excess: float
    history_times: list[float]
    history_y: list[float]
    profile_x: list[float] = []
    profile_u: list[float] = []


class SimulateRequest(BaseModel):
    lam: float = Field(default=1.0, gt=0.0)
    n: int = Field(default=1000, ge=1)
    dt: float = Field(default=1e-3, gt=0.0)
    horizon: float = Field(gt=0.0)
    seed: int = 0
    engine: str = "exact"
    init: str = "poisson"  # poisson | spacings
    rates: list[float] = []  # spacings init: per-gap rates, last one extends
    gamma: list[float] = [1.0]
    sample_times: list[float] = []
    quantiles: list[float] = []
    include_state: bool = False

    @field_validator("init")
    @classmethod
    def _known_init(cls, v):
        if v not in ("poisson", "spacings"):
            raise ValueError("init must be poisson or spacings")
        return v

    @field_validator("quantiles")
    @classmethod
    def _unit_fractions(cls, v):
        if any(not 0.0 <= q <= 1.0 for q in v):
            raise ValueError("quantile fractions must lie in [0, 1]")
        return v


class SimulateResponse(BaseModel):
    n: int
    sim_time: float
    leftmost: float
    drift_total: float
    trajectory_times: list[float]
    trajectory_leftmost: list[float]
    trajectory_quantiles: list[list[float]]
    quantile_fractions: list[float]
    positions: list[float] = []  # ranked; only when include_state


class VerifyRequest(BaseModel):
    tag: str
    lam: float = Field(default=1.0, gt=0.0)
    seed: int = 20260814
    # optional overrides of the frozen criterion configuration
    n: int | None = Field(default=None, ge=1)
    dt: float | None = Field(default=None, gt=0.0)
    b: float | None = Field(default=None, gt=0.0, le=1.0)
    replicas: int | None = Field(default=None, ge=1)
    times: list[float] | None = None
    x_bins: list[float] | None = None
    out_dir: str | None = None

    @field_validator("tag")
    @classmethod
    def _known_tag(cls, v):
        if v not in TAGS:
            raise ValueError(f"tag must be one of {', '.join(TAGS)}")
        return v

    def overrides(self) -> dict:
        out = {}
        for name in ("n", "dt", "b", "replicas", "out_dir"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val
        if self.times is not None:
            out["times"] = tuple(self.times)
        if self.x_bins is not None:
            out["x_bins"] = tuple(self.x_bins)
        return out


class ClaimModel(BaseModel):
    claim_id: str
    anchor: str
    statistic: float
    tolerance: float
    passed: bool
    replicas: int
    seeds: str
    detail: str = ""


class ReportModel(BaseModel):
    tag: str
    config: dict
    config_hash: str
    created: str
    passed: bool
    records: list[ClaimModel]


class RenderRequest(BaseModel):
    report: ReportModel
    fmt: str = "markdown"
    out_dir: str | None = None

    @field_validator("fmt")
    @classmethod
    def _known_fmt(cls, v):
        if v not in ("json", "csv", "markdown"):
            raise ValueError("fmt must be json, csv, or markdown")
        return v


class RenderResponse(BaseModel):
    path: str
    content: str


class HealthResponse(BaseModel):
    status: str
    version: str
