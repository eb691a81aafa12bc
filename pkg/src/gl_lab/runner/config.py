"""Run configurations: pydantic models shared by the CLI and the HTTP service.

Every experiment has its own config model; unknown keys are rejected, and all
numeric parameters are validated against module preconditions (notably the
step-size stability cap 1/(8 * a_upper)) before any computation starts.
"""

from __future__ import annotations

import os
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..errors import ConfigError
from ..harmonic import as_boundary_array
from ..lattice import LatticeDomain, build_disk, build_from_mask, build_rectangle
from ..potentials import Potential, by_name


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainSpec(StrictModel):
    shape: Literal["rectangle", "disk", "mask"] = "rectangle"
    width: int = 16
    height: int = 16
    radius: float = 8.0
    mask_path: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> "DomainSpec":
        """rect:WxH | disk:R | mask:PATH"""
        kind, _, rest = text.partition(":")
        if kind in ("rect", "rectangle"):
            w, _, h = rest.partition("x")
            return cls(shape="rectangle", width=int(w), height=int(h or w))
        if kind == "disk":
            return cls(shape="disk", radius=float(rest))
        if kind == "mask":
            return cls(shape="mask", mask_path=rest)
        raise ConfigError(f"cannot parse domain spec {text!r}")

    def build(self) -> LatticeDomain:
        if self.shape == "rectangle":
            return build_rectangle(self.width, self.height)
        if self.shape == "disk":
            return build_disk(self.radius)
        if not self.mask_path or not os.path.exists(self.mask_path):
            raise ConfigError(f"mask file not found: {self.mask_path!r}")
        with open(self.mask_path) as fh:
            return build_from_mask(fh.read())

    @model_validator(mode="after")
    def _check(self):
        if self.shape == "rectangle" and (self.width < 1 or self.height < 1):
            raise ConfigError("rectangle dimensions must be >= 1")
        if self.shape == "disk" and self.radius < 1:
            raise ConfigError("disk radius must be >= 1")
        return self


class BoundarySpec(StrictModel):
    kind: Literal["zero", "tilt", "sine", "file"] = "zero"
    u: tuple[float, float] = (0.0, 0.0)
    amplitude: float = 0.5
    waves: int = 1
    path: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> "BoundarySpec":
        """zero | tilt:u1,u2 | sine:amp[,waves] | file:PATH"""
        kind, _, rest = text.partition(":")
        if kind == "zero":
            return cls(kind="zero")
        if kind == "tilt":
            u1, _, u2 = rest.partition(",")
            return cls(kind="tilt", u=(float(u1), float(u2 or 0.0)))
        if kind == "sine":
            amp, _, waves = rest.partition(",")
            return cls(kind="sine", amplitude=float(amp), waves=int(waves or 1))
        if kind == "file":
            return cls(kind="file", path=rest)
        raise ConfigError(f"cannot parse boundary spec {text!r}")

    def values(self, domain: LatticeDomain) -> np.ndarray:
        sites = domain.boundary_sites
        if self.kind == "zero":
            return np.zeros(domain.n_boundary)
        if self.kind == "tilt":
            return self.u[0] * sites[:, 0] + self.u[1] * sites[:, 1]
        if self.kind == "sine":
            span = max(int(domain.interior_sites[:, 0].max() - domain.interior_sites[:, 0].min()) + 1, 1)
            return self.amplitude * np.sin(2.0 * np.pi * self.waves * sites[:, 0] / span)
        if not self.path or not os.path.exists(self.path):
            raise ConfigError(f"boundary file not found: {self.path!r}")
        table = {}
        with open(self.path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                i, j, v = line.split(",")
                table[(int(i), int(j))] = float(v)
        return as_boundary_array(domain, table)


class BaseRunConfig(StrictModel):
    seed: int = Field(default=0, ge=0, lt=2**64)
    out: Optional[str] = None
    threads: int = Field(default=1, ge=1, le=64)
    potential: str = "cosine"
    domain: DomainSpec = Field(default_factory=DomainSpec)
    dt: Optional[float] = Field(default=None, gt=0)

    def potential_obj(self) -> Potential:
        try:
            return by_name(self.potential)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    @model_validator(mode="after")
    def _stability(self):
        p = self.potential_obj()
        if self.dt is not None and self.dt > p.max_stable_dt * (1 + 1e-12):
            raise ConfigError(
                f"dt={self.dt} violates the stability cap 1/(8*A_V)={p.max_stable_dt:.6g} "
                f"for potential {self.potential!r}"
            )
        return self


class SampleConfig(BaseRunConfig):
    boundary: BoundarySpec = Field(default_factory=BoundarySpec)
    burn_multiplier: float = Field(default=20.0, ge=0)
    thin_steps: Optional[int] = Field(default=None, ge=1)
    n_samples: int = Field(default=16, ge=1)


class DgffConfig(BaseRunConfig):
    potential: str = "quadratic"
    boundary: BoundarySpec = Field(default_factory=BoundarySpec)
    n_samples: int = Field(default=50_000, ge=2)
    n_cov_pairs: int = Field(default=10, ge=0)


class HsConfig(BaseRunConfig):
    mode: Literal["mean", "cov"] = "cov"
    boundary: BoundarySpec = Field(default_factory=BoundarySpec)
    x: Optional[tuple[int, int]] = None
    y: Optional[tuple[int, int]] = None
    walks: int = Field(default=20_000, ge=1)
    traj: int = Field(default=8, ge=1)
    r_nodes: int = Field(default=8, ge=2)
    burn_multiplier: float = Field(default=20.0, ge=0)


class GibbsConfig(BaseRunConfig):
    n: int = Field(default=32, ge=8)
    u: tuple[float, float] = (0.0, 0.0)
    burn_multiplier: float = Field(default=20.0, ge=0)
    samples: int = Field(default=500, ge=2)
    thin_steps: Optional[int] = Field(default=None, ge=1)
    reflection_axis: Literal["horizontal", "vertical"] = "horizontal"
    with_reflection: bool = True


class CltConfig(BaseRunConfig):
    n: int = Field(default=32, ge=8)
    u: tuple[float, float] = (0.0, 0.0)
    boundary: BoundarySpec = Field(default_factory=BoundarySpec)
    n_samples: int = Field(default=5000, ge=100)
    functions: list[tuple[int, int]] = Field(default_factory=lambda: [(1, 1), (2, 1)])
    a: Optional[tuple[float, float]] = None  # None: quadratic -> (1,1); else estimated
    a_torus_side: int = Field(default=16, ge=8)
    a_samples: int = Field(default=200, ge=2)
    burn_multiplier: float = Field(default=0.5, ge=0)
    thin_steps: Optional[int] = Field(default=None, ge=1)
    groups: int = Field(default=8, ge=1)
    chains_per_group: int = Field(default=2, ge=1)
    skew_tol: float = 0.1
    kurt_tol: float = 0.25
    ratio_tol: float = 0.10


class CouplingConfig(BaseRunConfig):
    boundary: BoundarySpec = Field(default_factory=lambda: BoundarySpec(kind="sine", amplitude=1.0))
    boundary_tilde: BoundarySpec = Field(default_factory=BoundarySpec)
    r_fraction: float = Field(default=0.25, gt=0, lt=0.5)
    eps_factor: float = Field(default=0.1, gt=0)
    snapshots: int = Field(default=40, ge=1)
    burn_multiplier: float = Field(default=0.5, ge=0)
    thin_steps: Optional[int] = Field(default=None, ge=1)


class MeanHarmConfig(BaseRunConfig):
    boundary: BoundarySpec = Field(default_factory=lambda: BoundarySpec(kind="sine", amplitude=0.5))
    u: tuple[float, float] = (0.0, 0.0)
    r_fraction: float = Field(default=0.25, gt=0, lt=0.5)
    n_samples: int = Field(default=2000, ge=10)
    segments: int = Field(default=5, ge=2)
    burn_multiplier: float = Field(default=0.5, ge=0)
    thin_steps: Optional[int] = Field(default=None, ge=1)
    groups: int = Field(default=8, ge=1)
    chains_per_group: int = Field(default=2, ge=1)


class EntropyConfig(BaseRunConfig):
    boundary: BoundarySpec = Field(default_factory=lambda: BoundarySpec(kind="sine", amplitude=0.2))
    boundary_tilde: BoundarySpec = Field(default_factory=BoundarySpec)
    n_samples: int = Field(default=200, ge=2)
    burn_multiplier: float = Field(default=0.5, ge=0)
    thin_steps: Optional[int] = Field(default=None, ge=1)


class BlConfig(BaseRunConfig):
    boundary: BoundarySpec = Field(default_factory=BoundarySpec)
    n_vectors: int = Field(default=5, ge=1)
    n_samples: int = Field(default=800, ge=10)
    burn_multiplier: float = Field(default=0.5, ge=0)
    thin_steps: Optional[int] = Field(default=None, ge=1)
    groups: int = Field(default=8, ge=1)
    chains_per_group: int = Field(default=2, ge=1)


class BeurlingConfig(BaseRunConfig):
    r: float = Field(default=64.0, gt=0)
    d_list: list[int] = Field(default_factory=lambda: [2, 4, 8, 16])
    walks: int = Field(default=20_000, ge=100)
    beta: tuple[float, float] = (1.0, 1.0)
    convention: Literal["horizontal", "updown"] = "horizontal"

    @model_validator(mode="after")
    def _check_d(self):
        for d in self.d_list:
            if not (1 <= d <= self.r):
                raise ConfigError(f"obstacle distance {d} must lie in [1, r={self.r}]")
        return self


CONFIG_TYPES = {
    "sample": SampleConfig,
    "dgff": DgffConfig,
    "hs": HsConfig,
    "gibbs": GibbsConfig,
    "clt": CltConfig,
    "coupling": CouplingConfig,
    "mean-harm": MeanHarmConfig,
    "entropy": EntropyConfig,
    "bl": BlConfig,
    "beurling": BeurlingConfig,
}


def parse_config(subcommand: str, file_values: dict | None = None, overrides: dict | None = None):
    """Resolve a config from file values plus flag overrides (flags win).

    Unknown keys and out-of-range values raise ConfigError.
    """
    if subcommand not in CONFIG_TYPES:
        raise ConfigError(f"unknown subcommand {subcommand!r}; known: {sorted(CONFIG_TYPES)}")
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return CONFIG_TYPES[subcommand](**merged)
    except ConfigError:
        raise
    except Exception as e:  # pydantic ValidationError and friends
        raise ConfigError(f"invalid {subcommand} config: {e}") from e
