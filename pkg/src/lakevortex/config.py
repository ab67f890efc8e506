"""Experiment configuration (a single JSON document)."""

from __future__ import annotations

import json
import math
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .depth import DepthField
from .grid import Grid


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DepthBlock(_Block):
    family: Literal["constant", "radial-gaussian-bump", "anisotropic-bump"] = "radial-gaussian-bump"
    params: list[float] = Field(default_factory=lambda: [0.5, 1.0])
    gamma: float = 1.0

    def field(self) -> DepthField:
        return DepthField(self.family, tuple(self.params), self.gamma)


class GridBlock(_Block):
    n: int = 256
    L: float = 8.0

    def geometry(self) -> Grid:
        return Grid(self.n, self.L)


class KernelBlock(_Block):
    m: int = 17
    tol: float = 1e-10
    max_iter: int = 200
    theta: float = 1.0


class EpsilonAlpha(_Block):
    epsilon: float


class SimBlock(_Block):
    N: int = 64
    T: float = 1.0
    dt: Optional[float] = None
    regime: Literal["physical", "rescaled"] = "physical"
    alpha: Union[float, EpsilonAlpha, None] = None
    sample_every: Optional[int] = None
    sample_interval: float = 0.05
    seed: int = 0
    sampling: Literal["quadrature", "iid"] = "quadrature"
    positions: Optional[list[tuple[float, float]]] = None

    @field_validator("N")
    @classmethod
    def _positive(cls, v):
        if v < 1:
            raise ValueError("N must be >= 1")
        return v

    @model_validator(mode="after")
    def _check(self):
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sample_every is not None and self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        if self.positions is not None and len(self.positions) != self.N:
            raise ValueError("positions must list exactly N points")
        return self

    def alpha_for(self, N: int) -> float:
        from .dynamics import alpha_from_epsilon
        if isinstance(self.alpha, EpsilonAlpha):
            return alpha_from_epsilon(self.alpha.epsilon, N)
        if self.alpha is None:
            return math.log(N) if self.regime == "rescaled" else 0.0
        return float(self.alpha)


class Omega0Block(_Block):
    family: Literal["bump", "uniform-square"] = "bump"
    radius: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)


class ContinuumBlock(_Block):
    enabled: bool = True
    M: Optional[int] = None
    omega0: Omega0Block = Field(default_factory=Omega0Block)
    alpha: Optional[float] = None
    dt: float = 0.01


class DiagnosticsBlock(_Block):
    eta: Optional[float] = None
    s: float = -2.0
    eps_close: Optional[float] = None
    cutoff: Optional[float] = None

    @field_validator("s")
    @classmethod
    def _sob(cls, v):
        if v >= -1:
            raise ValueError("s must be < -1")
        return v


class ExperimentConfig(_Block):
    depth: DepthBlock = Field(default_factory=DepthBlock)
    grid: GridBlock = Field(default_factory=GridBlock)
    kernel: KernelBlock = Field(default_factory=KernelBlock)
    sim: SimBlock = Field(default_factory=SimBlock)
    continuum: ContinuumBlock = Field(default_factory=ContinuumBlock)
    diagnostics: DiagnosticsBlock = Field(default_factory=DiagnosticsBlock)
    output_dir: str = "out"
    kernel_cache: Optional[str] = None

    @model_validator(mode="after")
    def _domain(self):
        # construct the domain objects so their own checks run before any compute
        self.depth.field()
        g = self.grid.geometry()
        m = self.kernel.m
        if m < 2 or g.n % (2 * (m - 1)):
            raise ValueError(f"kernel.m={m} needs grid.n divisible by 2*(m-1)")
        return self


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return ExperimentConfig.model_validate(data)
