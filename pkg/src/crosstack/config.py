# src/crosstack/config.py
from __future__ import annotations

"""Run configuration: the sectioned config file as validated pydantic models.

Every section of the file maps onto one field of :class:`RunConfig`, and
every key onto a field of that section's model. Missing keys keep their
defaults, which reproduce the reference 10x10x2 fabric::

    [fabric]
    mode = deepnet
    re_layer1 = false

    [transient]
    trials = 50

Unknown sections or keys are rejected with the list of valid names, and
range violations name the invariant that failed.
"""

import logging
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .cell import TransistorParams
from .device import DeviceParams
from .engine import CELL_BITS, AdcModel, QuantScheme
from .errors import ConfigError
from .fabric import FabricGeometry
from .modes import ModeState
from .parsers import Document, parse_document, parse_override, render_value
from .pipeline import TimingParams

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class FabricSettings(FabricGeometry):
    """Fabric geometry plus the read-enable level of each layer."""

    re_layer0: bool = True
    re_layer1: bool = True

    def geometry(self) -> FabricGeometry:
        return FabricGeometry(**self.model_dump(exclude={"re_layer0", "re_layer1"}))

    def mode_state(self) -> ModeState:
        return ModeState(mode=self.mode, re_layer0=self.re_layer0, re_layer1=self.re_layer1)


class QuantSettings(_Section):
    bits_per_cell: float = 1.0
    cells_per_weight: int = 8

    @model_validator(mode="after")
    def _check_invariants(self) -> "QuantSettings":
        if self.bits_per_cell not in CELL_BITS:
            raise ValueError(f"invariant bits_per_cell in {CELL_BITS} violated")
        if self.cells_per_weight < 1:
            raise ValueError("invariant cells_per_weight >= 1 violated")
        return self

    def scheme(self, params: DeviceParams) -> QuantScheme:
        return QuantScheme.for_device(params, self.bits_per_cell, self.cells_per_weight)


class RunSettings(_Section):
    seed: int = 7
    output_dir: str = "crosstack-out"

    @model_validator(mode="after")
    def _check_invariants(self) -> "RunSettings":
        if not 0 <= self.seed < 2**64:
            raise ValueError("invariant 0 <= seed < 2**64 violated")
        return self


class IrDropSettings(_Section):
    """Worst-case IR drop: every device set, every row at the write voltage.

    ``row_lead_cells`` is the driver lead of the measured topology.
    ``routed_lead_cells`` is a longer lead reported alongside it, and
    ``target_reduction`` +/- ``tolerance`` is the reference band the
    result is compared against without gating on it.
    """

    rows: int = 10
    cols: int = 10
    r_wire_per_cell: float = 3.2
    row_lead_cells: int = 1
    routed_lead_cells: int = 11
    min_reduction: float = 0.0
    v_bias: float = 1.2
    device_state: float = 1.0
    target_reduction: float = 0.22
    tolerance: float = 0.08

    @model_validator(mode="after")
    def _check_invariants(self) -> "IrDropSettings":
        if self.rows < 1 or self.cols < 1:
            raise ValueError("invariant rows, cols >= 1 violated")
        if self.row_lead_cells < 0 or self.routed_lead_cells < 0:
            raise ValueError("invariant lead cells >= 0 violated")
        if not 0.0 <= self.device_state <= 1.0:
            raise ValueError("invariant 0 <= device_state <= 1 violated")
        return self


class LeakageSettings(_Section):
    trials: int = 200
    v_write: float = 1.2
    device_state: float = 1.0
    cells_per_column: int = 10
    read_voltage: float = 4e-3
    sweep_max: float = 1.2
    sweep_points: int = 13
    target_leak: float = 2.5e-12
    target_column_leak: float = 25e-12
    leak_tolerance: float = 0.10
    target_read_current: float = 39.6e-9
    read_current_tolerance: float = 0.005
    target_ratio: float = 6.3e-4
    ratio_tolerance: float = 0.05

    @model_validator(mode="after")
    def _check_invariants(self) -> "LeakageSettings":
        if self.trials < 2:
            raise ValueError("invariant trials >= 2 violated")
        if self.cells_per_column < 1 or self.sweep_points < 2:
            raise ValueError("invariant cells_per_column >= 1 and sweep_points >= 2 violated")
        return self


class TransientSettings(_Section):
    """Read cycle of a DeepNet cell pair while the partner layer is written."""

    trials: int = 200
    input_bits: int = 7
    v_read_max: float = 0.5
    input_codes: tuple[int, ...] = (0, 1, 2, 1, 0, 2, 1, 0)
    device_state: float = 0.0
    v_write: float = 1.2
    target_deviation: float = 0.08
    tolerance: float = 0.015
    target_bits: float = 3.5
    target_lsb: float = 4e-3
    lsb_tolerance: float = 0.03
    speedup_layers: int = 10
    target_speedup: float = 0.29
    speedup_tolerance: float = 0.01

    @field_validator("input_codes", mode="before")
    @classmethod
    def _listify(cls, value: Any) -> Any:
        return [value] if isinstance(value, int) else value

    @model_validator(mode="after")
    def _check_invariants(self) -> "TransientSettings":
        if self.trials < 1:
            raise ValueError("invariant trials >= 1 violated")
        if not self.input_codes:
            raise ValueError("invariant input_codes non-empty violated")
        if any(code < 0 or code >= 2**self.input_bits for code in self.input_codes):
            raise ValueError("invariant 0 <= input code < 2**input_bits violated")
        if self.speedup_layers < 1:
            raise ValueError("invariant speedup_layers >= 1 violated")
        return self


class PowerSettings(_Section):
    devices: int = 200
    v_bias: float = 1.2
    target_power: float = 2.9e-3
    tolerance: float = 0.02

    @model_validator(mode="after")
    def _check_invariants(self) -> "PowerSettings":
        if self.devices < 1:
            raise ValueError("invariant devices >= 1 violated")
        return self


class HysteresisSettings(_Section):
    amplitude: float = 1.2
    frequency: float = 50.0
    samples_per_period: int = 2000
    periods: int = 3
    initial_state: float = 0.0
    pinch_limit: float = 1e-18
    area_floor: float = 1e-15

    @model_validator(mode="after")
    def _check_invariants(self) -> "HysteresisSettings":
        if self.frequency <= 0 or self.periods < 1:
            raise ValueError("invariant frequency > 0 and periods >= 1 violated")
        if self.samples_per_period < 4 or self.samples_per_period % 2:
            raise ValueError("invariant samples_per_period even and >= 4 violated")
        return self


class RunConfig(_Section):
    """Complete simulator configuration, one field per config section."""

    device: DeviceParams = Field(default_factory=DeviceParams)
    read_switch: TransistorParams = Field(default_factory=TransistorParams)
    write_switch: TransistorParams = Field(default_factory=TransistorParams)
    fabric: FabricSettings = Field(default_factory=FabricSettings)
    timing: TimingParams = Field(default_factory=TimingParams)
    quant: QuantSettings = Field(default_factory=QuantSettings)
    adc: AdcModel = Field(default_factory=AdcModel)
    run: RunSettings = Field(default_factory=RunSettings)
    ir_drop: IrDropSettings = Field(default_factory=IrDropSettings)
    leakage: LeakageSettings = Field(default_factory=LeakageSettings)
    transient: TransientSettings = Field(default_factory=TransientSettings)
    power: PowerSettings = Field(default_factory=PowerSettings)
    hysteresis: HysteresisSettings = Field(default_factory=HysteresisSettings)

    @model_validator(mode="after")
    def _check_read_bias(self) -> "RunConfig":
        if self.adc.v_read_max > self.device.v_th and not self.adc.allow_read_disturb:
            raise ValueError(
                f"invariant v_read_max <= v_th violated "
                f"(v_read_max={self.adc.v_read_max!r}, v_th={self.device.v_th!r}); "
                "set adc.allow_read_disturb = true to read above threshold"
            )
        return self

    def to_text(self) -> str:
        """The configuration in config-file syntax; parses back to an equal object."""
        lines = ["# CrossStack effective configuration"]
        for section in type(self).model_fields:
            model = getattr(self, section)
            lines.append(f"[{section}]")
            for key in type(model).model_fields:
                raw = getattr(model, key)
                lines.append(f"{key} = {render_value(raw.value if isinstance(raw, Enum) else raw)}")
            lines.append("")
        return "\n".join(lines)

    def with_run(self, *, seed: int | None = None, output_dir: str | None = None) -> "RunConfig":
        run = self.run.model_copy(
            update={
                key: value
                for key, value in (("seed", seed), ("output_dir", output_dir))
                if value is not None
            }
        )
        return _validate({**self.model_dump(), "run": run.model_dump()})


def _valid_sections() -> dict[str, type[BaseModel]]:
    return {name: info.annotation for name, info in RunConfig.model_fields.items()}  # type: ignore[misc]


def _check_known(section: str, key: str | None = None) -> None:
    sections = _valid_sections()
    if section not in sections:
        raise ConfigError(
            f"unknown section [{section}]; valid sections: {', '.join(sections)}"
        )
    if key is not None and key not in sections[section].model_fields:
        valid = ", ".join(sections[section].model_fields)
        raise ConfigError(f"unknown key {section}.{key}; valid keys: {valid}")


def _validate(data: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = []
        for error in exc.errors():
            where = ".".join(str(part) for part in error["loc"])
            message = error["msg"].removeprefix("Value error, ")
            problems.append(f"{where}: {message}" if where else message)
        raise ConfigError("invalid configuration: " + "; ".join(problems)) from exc


def config_from_document(document: Document) -> RunConfig:
    for section, entries in document.items():
        _check_known(section)
        for key in entries:
            _check_known(section, key)
    config = _validate(dict(document))
    logger.debug("loaded configuration with sections %s", sorted(document))
    return config


def parse_config_text(text: str) -> RunConfig:
    """Parse configuration *text*; an empty text gives the defaults."""
    return config_from_document(parse_document(text))


def parse_config(path: str | Path) -> RunConfig:
    """Parse the configuration file at *path*.

    Raises:
        ConfigError: The file cannot be read, names an unknown key or
            violates an invariant.
        ConfigSyntaxError: The file is not well formed.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(path)!r}: {exc}") from exc
    return parse_config_text(text)


def apply_overrides(config: RunConfig, overrides: Iterable[str]) -> RunConfig:
    """Apply ``section.key=value`` overrides and re-validate."""
    data = config.model_dump()
    changed = False
    for text in overrides:
        section, key, raw = parse_override(text)
        _check_known(section, key)
        data[section][key] = raw
        changed = True
        logger.debug("override %s.%s = %r", section, key, raw)
    return _validate(data) if changed else config
