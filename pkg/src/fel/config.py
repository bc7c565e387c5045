"""
Experiment configuration
========================

A JSON document validated by pydantic; unknown keys are rejected at every
level. ``config_hash`` is the SHA-256 of the canonical JSON of the validated
model, so equivalent spellings of one config hash identically.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .grid import PeriodicGrid, field_from_json
from .zoo import (
    ImmersionField, check_immersion, clifford, fourier_perturb, rotational_conformal,
    rotational_grid, twisted_figure_eight,
)

COMMANDS = ("energy", "bound", "gradcheck", "minimize", "conservation", "classify", "sweep")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSpec(_Strict):
    n1: int = Field(64, ge=8, le=1024)
    n2: Optional[int] = Field(None, ge=8, le=1024)
    tau: Optional[tuple[float, float]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.n1 % 2 or (self.n2 or self.n1) % 2:
            raise ValueError("grid sizes must be even")
        if self.tau is not None and not self.tau[1] > 0:
            raise ValueError("tau2 must be positive")
        return self


class ImmersionSpec(_Strict):
    kind: Literal["clifford", "rotational", "figure8", "fourier", "file"]
    R: float = math.sqrt(2.0)
    r: float = 1.0
    scale: float = 1.0
    radius: float = 3.0
    twists: int = 1
    base: Optional["ImmersionSpec"] = None
    seed: Optional[int] = None
    amplitude: float = 0.05
    max_mode: int = Field(3, ge=1, le=16)
    path: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "file" and not self.path:
            raise ValueError("kind 'file' needs a path")
        if self.kind == "rotational" and not self.R > self.r > 0:
            raise ValueError("rotational torus needs R > r > 0")
        return self


class Tolerances(_Strict):
    rel_tol: float = 1e-6
    allowance: float = 0.0
    decomposition: float = 1e-8
    willmore_gap: float = 1e-6
    fenchel: float = 1e-6
    gradcheck: float = 1e-4
    coefficient: float = 1e-6
    critical: float = 0.1
    consistency_factor: float = 10.0
    discretization: float = 1e-6


class GradcheckSpec(_Strict):
    pairs: int = Field(4, ge=0)
    h: float = 1e-3
    coefficient_h: float = 1e-4
    gauge_tol: float = 1e-6
    modes: list[tuple[int, int, int, Literal["cos", "sin"]]] = [
        (0, 1, 0, "cos"), (1, 0, 1, "sin"), (2, 1, -1, "cos"), (2, 2, 1, "sin")]


class Range(_Strict):
    start: float
    stop: float
    num: int = Field(ge=0)

    def values(self) -> list[float]:
        return [float(v) for v in np.linspace(self.start, self.stop, self.num)]


class SweepSpec(_Strict):
    quantity: Literal["f", "energy"] = "f"
    parameters: dict[str, Union[Range, list[float]]] = {}

    def axes(self) -> list[tuple[str, list[float]]]:
        out = []
        for name in sorted(self.parameters):
            spec = self.parameters[name]
            out.append((name, spec.values() if isinstance(spec, Range) else [float(v) for v in spec]))
        return out

    @model_validator(mode="after")
    def _check(self):
        if self.quantity == "f" and set(self.parameters) != {"tau2", "theta"}:
            raise ValueError("an f sweep takes exactly the parameters tau2 and theta")
        if self.quantity == "energy":
            allowed = {"R", "r", "scale", "radius", "amplitude", "seed"}
            bad = set(self.parameters) - allowed
            if bad:
                raise ValueError(f"energy sweep parameters must be among {sorted(allowed)}, got {sorted(bad)}")
        return self


class OutputSpec(_Strict):
    dir: str = "out"
    report: str = "report.json"
    table: str = "table.csv"
    field: str = "field.json"


class ExperimentConfig(_Strict):
    command: Literal["energy", "bound", "gradcheck", "minimize", "conservation", "classify", "sweep"]
    immersion: Optional[ImmersionSpec] = None
    grid: GridSpec = GridSpec()
    tolerances: Tolerances = Tolerances()
    seed: int = 0
    count: int = Field(1, ge=0)
    descent: dict = {}
    gradcheck: GradcheckSpec = GradcheckSpec()
    sweep: Optional[SweepSpec] = None
    expect: Optional[Literal["standard", "nonstandard"]] = None
    minimize_first: bool = False
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _check(self):
        if self.command == "sweep":
            if self.sweep is None:
                raise ValueError("command 'sweep' needs a sweep section")
            if self.sweep.quantity == "energy" and self.immersion is None:
                raise ValueError("an energy sweep needs an immersion")
        elif self.immersion is None:
            raise ValueError(f"command {self.command!r} needs an immersion")
        if self.descent:
            from .variation import DescentOptions
            DescentOptions.from_dict(self.descent)
        return self

    def canonical(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def load_config(source) -> ExperimentConfig:
    """Parse a path, JSON string or mapping. Raises ``ValidationError`` or ``ValueError``."""
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") else str(source)
        doc = json.loads(text)
    return ExperimentConfig.model_validate(doc)


def make_grid(spec: GridSpec, default_tau=(0.0, 1.0)) -> PeriodicGrid:
    return PeriodicGrid(spec.n1, spec.n2 or spec.n1, tuple(spec.tau) if spec.tau is not None else default_tau)


def build(spec: ImmersionSpec, grid: GridSpec, seed: int = 0) -> ImmersionField:
    """Immersion described by ``spec``; ``seed`` is used when the spec has none."""
    if spec.kind == "file":
        doc = json.loads(Path(spec.path).read_text())
        x, g = field_from_json(doc)
        return check_immersion(ImmersionField(x, g, doc.get("label", "file")))
    if spec.kind == "clifford":
        return clifford(make_grid(grid))
    if spec.kind == "rotational":
        if grid.tau is not None:
            return rotational_conformal(spec.R, spec.r, make_grid(grid))
        return rotational_conformal(spec.R, spec.r, rotational_grid(spec.R, spec.r, grid.n1, grid.n2))
    if spec.kind == "figure8":
        return twisted_figure_eight(make_grid(grid), spec.scale, spec.radius, spec.twists)
    base = build(spec.base or ImmersionSpec(kind="rotational"), grid, seed)
    s = spec.seed if spec.seed is not None else seed
    return fourier_perturb(base, s, spec.amplitude, spec.max_mode)


__all__ = ["COMMANDS", "ExperimentConfig", "GridSpec", "ImmersionSpec", "Tolerances", "SweepSpec",
           "Range", "ValidationError", "build", "load_config", "make_grid"]
