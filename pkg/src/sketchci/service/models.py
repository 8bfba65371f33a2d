"""Request/response schemas for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field


class GenerateRequest(BaseModel):
    family: Literal["zipf", "pyp"] = "zipf"
    a: float = 1.5
    lam: float = 5000.0
    sigma: float = 0.0
    n: int = Field(gt=0)
    seed: int = 0


class GenerateResponse(BaseModel):
    tokens: list[str]


class SketchRequest(BaseModel):
    tokens: list[str]
    kind: Literal["cms", "cmscu"] = "cmscu"
    d: int = Field(default=3, ge=1)
    w: int = Field(default=1000, ge=2)
    seed: int = 0
    m0: int = Field(gt=0, description="warm-up length (tracked exactly)")


class SketchSummary(BaseModel):
    sketch_id: str
    kind: str
    d: int
    w: int
    seed: int
    m_total: int
    m0: int
    m_sketched: int
    distinct_warmup: int


class ImportRequest(BaseModel):
    snapshot_b64: str
    counts_tsv: str


class ExportResponse(BaseModel):
    snapshot_b64: str
    counts_tsv: str


class QueryRequest(BaseModel):
    tokens: list[str]
    alpha: float = Field(default=0.05, gt=0, lt=1)
    regime: Literal["marginal", "conditional", "unique"] = "marginal"
    score: Literal["fixed", "adaptive"] = "fixed"
    L: int = Field(default=5, ge=1, description="frequency bins (conditional)")
    m_prime: int = Field(default=100, ge=1, description="group size (unique)")
    m0_train: int = Field(default=-1, description="-1: 0 fixed / half adaptive")
    seed: int = 0
    two_sided: bool = False
    exact_warmup: bool = False
    return_calibration: bool = False


class IntervalOut(BaseModel):
    token: str
    lower: int
    upper: int
    bound: int
    warmup: int


class QueryResponse(BaseModel):
    intervals: list[IntervalOut]
    threshold: int | None
    sentinel: bool
    upper_threshold: int | None = None
    n_calibration: int
    alpha: float
    regime: str
    score: str
    calibration_b64: str | None = None
    model_b64: str | None = None


class ExperimentRequest(BaseModel):
    config_text: str


class ExperimentResponse(BaseModel):
    csv: str


class TheoryRequest(BaseModel):
    op: str
    args: dict[str, Any] = Field(default_factory=dict)


class TheoryResponse(BaseModel):
    op: str
    inputs: dict[str, Any]
    outputs: dict[str, float]
    csv: str
