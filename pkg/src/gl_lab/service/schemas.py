"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict

from ..runner.config import (
    BeurlingConfig,
    BlConfig,
    CltConfig,
    CouplingConfig,
    DgffConfig,
    EntropyConfig,
    GibbsConfig,
    HsConfig,
    MeanHarmConfig,
    SampleConfig,
)


class HealthResponse(BaseModel):
    status: str
    version: str


class PotentialInfo(BaseModel):
    name: str
    a_lower: float
    a_upper: float
    lipschitz: float
    max_stable_dt: float


class ExperimentInfo(BaseModel):
    name: str
    config_schema: dict


class RunResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    subcommand: str
    passed: bool
    verdicts: dict[str, bool]
    summary: dict
    manifest: dict
    artifacts: Optional[dict[str, str]] = None  # filename -> CSV text, on request


class RunRequestOptions(BaseModel):
    include_artifacts: bool = False


# explicit request models so each endpoint documents its own schema
class SampleRequest(RunRequestOptions):
    config: SampleConfig


class DgffRequest(RunRequestOptions):
    config: DgffConfig


class HsRequest(RunRequestOptions):
    config: HsConfig


class GibbsRequest(RunRequestOptions):
    config: GibbsConfig


class CltRequest(RunRequestOptions):
    config: CltConfig


class CouplingRequest(RunRequestOptions):
    config: CouplingConfig


class MeanHarmRequest(RunRequestOptions):
    config: MeanHarmConfig


class EntropyRequest(RunRequestOptions):
    config: EntropyConfig


class BlRequest(RunRequestOptions):
    config: BlConfig


class BeurlingRequest(RunRequestOptions):
    config: BeurlingConfig
