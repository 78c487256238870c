"""Experiment configuration documents.

One JSON document per run.  Every model forbids unknown keys so that a
manifest (which echoes the resolved config) always round-trips.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator, model_validator

from .integrator import Scheme
from .spectrum import DomainKind


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpectrumConfig(_Strict):
    experiment: Literal["spectrum"] = "spectrum"
    output_dir: str = "out"
    domain: DomainKind = DomainKind.SPHERE
    d: int = Field(2, ge=1)
    s: float = Field(..., gt=0.5)
    cutoff: int = Field(..., ge=0)


class ScanExperiment(_Strict):
    experiment: Literal["scan"] = "scan"
    output_dir: str = "out"
    domain: DomainKind = DomainKind.TORUS
    d: int = Field(1, ge=1)
    K: int = Field(..., ge=1)
    N: int = Field(..., ge=1)
    J_max: Optional[int] = None
    gamma: float = Field(1e-4, gt=0)
    alpha: Optional[float] = None
    s_grid: Optional[list[float]] = None
    s_range: Optional[tuple[float, float]] = None
    step: Optional[float] = Field(None, gt=0)
    refine_step: float = Field(1e-3, gt=0)
    max_refine_per_point: int = Field(50, ge=1)
    lemma_K: Optional[int] = Field(None, ge=1, le=12)

    @model_validator(mode="after")
    def _grid(self):
        if (self.s_grid is None) == (self.s_range is None):
            raise ValueError("give exactly one of s_grid or s_range (+ step)")
        if self.s_range is not None and self.step is None:
            raise ValueError("s_range needs a step")
        grid = self.grid()
        if not grid:
            raise ValueError("the s grid is empty")
        if any(s <= 0.5 for s in grid):
            raise ValueError("every s must exceed 1/2")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("s_grid must be strictly increasing")
        if self.J_max is not None and self.J_max < self.N:
            raise ValueError("J_max must be >= N")
        return self

    def grid(self) -> list[float]:
        if self.s_grid is not None:
            return list(self.s_grid)
        lo, hi = self.s_range
        n = int(np.floor((hi - lo) / self.step + 1e-9))
        # rounding keeps nodes such as 1.0 exact
        return [round(lo + i * self.step, 12) for i in range(n + 1)]

    @property
    def j_max(self) -> int:
        return self.N if self.J_max is None else self.J_max


class _Dynamics(_Strict):
    s: float = Field(..., gt=0.5)
    taylor: list[float] = Field(default_factory=lambda: [1.0])
    N: int = Field(..., ge=0)
    r: float = Field(4.0, ge=0)
    dt: float = Field(1e-2, gt=0)
    observer_stride: int = Field(100, ge=1)
    scheme: Scheme = Scheme.STRANG


class SimulateConfig(_Dynamics):
    experiment: Literal["simulate"] = "simulate"
    output_dir: str = "out"
    eps: float = Field(0.1, ge=0)
    seed: int = 1
    T_end: float = Field(..., ge=0)
    blowup_factor: float = Field(1e6, gt=1)
    compare_s: Optional[float] = Field(None, gt=0.5)
    initial_state: Optional[str] = None
    max_steps: int = Field(10**8, ge=1)


class NormalFormConfig(_Strict):
    experiment: Literal["normalform"] = "normalform"
    output_dir: str = "out"
    s: float = Field(..., gt=0.5)
    taylor: list[float] = Field(default_factory=lambda: [1.0])
    N: int = Field(..., ge=0, le=6)
    K: int = Field(2, ge=1)
    threshold: float = Field(1e-10, gt=0)
    window: int = Field(2, ge=0)
    term_cap: int = Field(10**6, ge=1)


class ExitTimeConfig(_Dynamics):
    experiment: Literal["exit_time"] = "exit_time"
    output_dir: str = "out"
    eps: list[float]
    seeds: list[int] = Field(default_factory=lambda: [1, 2, 3])
    T_max: float = Field(..., gt=0)
    K: int = Field(3, ge=1)
    scan_N: int = Field(16, ge=1)
    J_max: Optional[int] = None
    gamma: float = Field(1e-4, gt=0)
    alpha: Optional[float] = None
    resonant_probe: bool = False

    @field_validator("eps")
    @classmethod
    def _decreasing(cls, v):
        if not v:
            raise ValueError("eps list is empty")
        if any(e <= 0 for e in v):
            raise ValueError("eps values must be positive")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("eps list must be strictly decreasing")
        return v


ExperimentConfig = Annotated[
    Union[SpectrumConfig, ScanExperiment, SimulateConfig, NormalFormConfig, ExitTimeConfig],
    Field(discriminator="experiment"),
]
_ADAPTER = TypeAdapter(ExperimentConfig)

KIND_OF_COMMAND = {
    "spectrum": "spectrum",
    "scan": "scan",
    "simulate": "simulate",
    "normalform": "normalform",
    "exit-time": "exit_time",
}


def parse_config(data: dict, kind: Optional[str] = None):
    """Validate a config mapping; ``kind`` fills in or cross-checks the experiment key."""
    data = dict(data)
    if kind is not None:
        if data.setdefault("experiment", kind) != kind:
            raise ValueError(f"config is for experiment {data['experiment']!r}, not {kind!r}")
    return _ADAPTER.validate_python(data)


def load_config(path: str | Path, kind: Optional[str] = None):
    with open(path) as fh:
        return parse_config(json.load(fh), kind)
