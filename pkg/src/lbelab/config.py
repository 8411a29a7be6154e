"""Scenario configuration files.

A scenario is a JSON document with an ``experiment`` tag, a ``physics`` block
listing every physical parameter explicitly, an optional ``cross_section``
block and an experiment-specific ``numerics`` block.  Unknown keys are
rejected everywhere.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, model_validator

from .physics import CrossSectionModel, PhysicalParams

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config", "EXPERIMENTS"]


class ConfigError(ValueError):
    """Scenario file could not be read or validated."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PhysicsBlock(_Strict):
    test_mass: float = Field(gt=0)
    gas_mass: float = Field(gt=0)
    beta: float = Field(gt=0)
    density: float = Field(gt=0)
    hbar: float = Field(ge=0)

    def build(self) -> PhysicalParams:
        return PhysicalParams(self.test_mass, self.gas_mass, self.beta, self.density, self.hbar)


class CrossSectionBlock(_Strict):
    kind: Literal["constant", "gaussian", "tabulated"] = "constant"
    sigma0: float = Field(1.0, ge=0)
    width: float | None = Field(None, gt=0)
    table_q: list[float] = []
    table_sigma: list[float] = []

    @model_validator(mode="after")
    def _complete(self):
        try:
            self.build()
        except ValueError as exc:
            raise ValueError(str(exc)) from None
        return self

    def build(self) -> CrossSectionModel:
        return CrossSectionModel(self.kind, self.sigma0, self.width, tuple(self.table_q), tuple(self.table_sigma))


class PhaseGridBlock(_Strict):
    x_min: float = -20.0
    x_max: float = 20.0
    n_x: int = Field(128, ge=4)
    p_max: float = Field(6.0, gt=0)
    n_p: int = Field(64, ge=8)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        return self


class GaussianInitBlock(_Strict):
    x0: float = 0.0
    var_x: float = Field(1.0, gt=0)
    p0: float = 0.0
    var_p: float | None = Field(None, gt=0)


class CoefficientsNumerics(_Strict):
    rtol: float = Field(1e-10, gt=0, lt=1e-3)


class McInitBlock(_Strict):
    kind: Literal["delta", "maxwell", "shifted_maxwell"] = "delta"
    p0: tuple[float, float, float] = (0.0, 0.0, 2.0)
    x0: tuple[float, float, float] = (0.0, 0.0, 0.0)


class McRelaxNumerics(_Strict):
    n_traj: int = Field(10000, ge=2)
    # None: 2.5/eta and t_end/50, so the run spans the relaxation at any mass ratio
    t_end: float | None = Field(None, gt=0)
    dt_record: float | None = Field(None, gt=0)
    form: Literal["mb", "brownian"] = "mb"
    block_size: int = Field(1024, ge=1)
    initial: McInitBlock = McInitBlock()
    fit_t_max: float | None = Field(None, gt=0)
    rate_rtol: float = Field(0.05, gt=0)
    equipartition_se: float = Field(3.0, gt=0)


class KramersNumerics(_Strict):
    grid: PhaseGridBlock = PhaseGridBlock()
    initial: GaussianInitBlock = GaussianInitBlock()
    t_end: float = Field(5.0, ge=0)
    dt: float | None = Field(None, gt=0)
    eta: float | None = Field(None, gt=0)
    transport: Literal["upwind", "limited", "spectral"] = "limited"
    record_every: int = Field(1, ge=1)
    maxwell_initial: bool = False
    stationarity_tol: float = Field(1e-6, gt=0)


class QuantumKramersNumerics(KramersNumerics):
    grid: PhaseGridBlock = PhaseGridBlock(x_min=-40.0, x_max=40.0, n_x=256)
    transport: Literal["upwind", "limited", "spectral"] = "spectral"
    compare_classical: bool = True
    excess_rtol: float = Field(0.01, gt=0)
    late_slope_rtol: float = Field(0.02, gt=0)
    late_fraction: float = Field(0.2, gt=0, le=1)


class PositionGridBlock(_Strict):
    x_min: float = -20.0
    x_max: float = 20.0
    n_x: int = Field(256, ge=4)


class SmoluchowskiNumerics(_Strict):
    grid: PositionGridBlock = PositionGridBlock()
    x0: float = 0.0
    var_x: float = Field(1.0, gt=0)
    # None: run until the standard deviation is a tenth of the period
    t_end: float | None = Field(None, gt=0)
    dt: float | None = Field(None, gt=0)
    eta: float | None = Field(None, gt=0)
    growth_rtol: float = Field(0.005, gt=0)
    ratio_rtol: float = Field(0.01, gt=0)


class HighFrictionNumerics(_Strict):
    grid: PhaseGridBlock = PhaseGridBlock(n_x=256)
    var_x: float = Field(1.0, gt=0)
    etas: list[Annotated[float, Field(gt=0)]] = [1.0, 2.0, 4.0, 8.0]
    t_end: float = Field(5.0, gt=0)
    transport: Literal["upwind", "limited", "spectral"] = "spectral"
    dt_fraction: float = Field(1.0, gt=0, le=1)

    @model_validator(mode="after")
    def _enough(self):
        if len(self.etas) < 2:
            raise ValueError("etas needs at least two values")
        return self


class GaussianStateBlock(_Strict):
    mean_x: float = 0.0
    mean_p: float = 0.0
    sxx: float | None = Field(None, gt=0)
    sxp: float = 0.0
    spp: float = Field(1.0, gt=0)


class GaussianLindbladNumerics(_Strict):
    initial: GaussianStateBlock = GaussianStateBlock()
    t_end: float = Field(500.0, gt=0)
    eta: float | None = Field(None, gt=0)
    n_record: int = Field(401, ge=2)
    position_diffusion: bool = True
    slope_rtol: float = Field(1e-3, gt=0)


class NalbeNumerics(_Strict):
    n_p: int = Field(32, ge=2)
    p_max: float = Field(5.0, gt=0)
    initial: Literal["thermal", "wavepacket", "superposition"] = "wavepacket"
    p0: float = 2.0
    width: float = Field(0.5, gt=0)
    pair: tuple[int, int] = (3, 4)
    t_end: float | None = Field(None, gt=0)
    dt: float | None = Field(None, gt=0)
    form: Literal["mb", "brownian"] = "mb"
    boundary: Literal["conserving", "leaky"] = "conserving"
    record_every: int = Field(10, ge=1)
    maxwell_l1_tol: float = Field(1e-3, gt=0)


class WignerNumerics(_Strict):
    length: float = Field(20.0, gt=0)
    n_x: int = Field(32, ge=2)
    n_p: int = Field(32, ge=2)
    p_max: float = Field(5.0, gt=0)
    modulation: float = Field(0.5, ge=0, lt=1)
    p0: float = 1.0
    t_end: float = Field(5.0, gt=0)
    dt: float = Field(0.5, gt=0)
    mode: Literal["quantum", "classical"] = "quantum"
    boundary: Literal["conserving", "leaky"] = "conserving"
    hbar_sweep: list[Annotated[float, Field(gt=0)]] = [0.4, 0.2, 0.1]
    min_order: float = 1.8


class _Base(_Strict):
    physics: PhysicsBlock
    cross_section: CrossSectionBlock = CrossSectionBlock()
    seed: int = Field(0, ge=0)
    output_dir: str = "out"

    @property
    def params(self) -> PhysicalParams:
        return self.physics.build()

    @property
    def xs(self) -> CrossSectionModel:
        return self.cross_section.build()


class CoefficientsConfig(_Base):
    experiment: Literal["coefficients"]
    numerics: CoefficientsNumerics = CoefficientsNumerics()


class McRelaxConfig(_Base):
    experiment: Literal["mc-relax"]
    numerics: McRelaxNumerics = McRelaxNumerics()


class KramersConfig(_Base):
    experiment: Literal["kramers"]
    numerics: KramersNumerics = KramersNumerics()


class QuantumKramersConfig(_Base):
    experiment: Literal["quantum-kramers"]
    numerics: QuantumKramersNumerics = QuantumKramersNumerics()


class SmoluchowskiConfig(_Base):
    experiment: Literal["smoluchowski"]
    numerics: SmoluchowskiNumerics = SmoluchowskiNumerics()


class HighFrictionConfig(_Base):
    experiment: Literal["high-friction-sweep"]
    numerics: HighFrictionNumerics = HighFrictionNumerics()


class GaussianLindbladConfig(_Base):
    experiment: Literal["gaussian-lindblad"]
    numerics: GaussianLindbladNumerics = GaussianLindbladNumerics()


class NalbeConfig(_Base):
    experiment: Literal["nalbe-grid"]
    numerics: NalbeNumerics = NalbeNumerics()


class WignerConfig(_Base):
    experiment: Literal["wigner-spectral"]
    numerics: WignerNumerics = WignerNumerics()


ScenarioConfig = Annotated[
    Union[CoefficientsConfig, McRelaxConfig, KramersConfig, QuantumKramersConfig, SmoluchowskiConfig,
          HighFrictionConfig, GaussianLindbladConfig, NalbeConfig, WignerConfig],
    Field(discriminator="experiment"),
]
_ADAPTER = TypeAdapter(ScenarioConfig)

EXPERIMENTS = ("coefficients", "mc-relax", "kramers", "quantum-kramers", "smoluchowski",
               "high-friction-sweep", "gaussian-lindblad", "nalbe-grid", "wigner-spectral")


def _key_line(text: str, key) -> int | None:
    needle = f'"{key}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


def _describe(exc: ValidationError, text: str) -> str:
    lines = []
    for err in exc.errors():
        loc = [str(part) for part in err["loc"]]
        # drop the union tag pydantic inserts as the first location element
        if loc and loc[0] in EXPERIMENTS:
            loc = loc[1:]
        path = ".".join(loc) or "<root>"
        where = ""
        if loc:
            line = _key_line(text, loc[-1])
            if line is not None:
                where = f" (line {line})"
        lines.append(f"{path}{where}: {err['msg']}")
    return "\n".join(lines)


def parse_config(text: str):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    tag = data.get("experiment")
    if tag is None:
        raise ConfigError("experiment: field required")
    if tag not in EXPERIMENTS:
        raise ConfigError(f"experiment (line {_key_line(text, 'experiment')}): unknown tag {tag!r}; "
                          f"expected one of {', '.join(EXPERIMENTS)}")
    try:
        return _ADAPTER.validate_python(data)
    except ValidationError as exc:
        raise ConfigError(_describe(exc, text)) from None


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)
