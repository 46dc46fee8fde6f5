# src/crosstack/engine.py
from __future__ import annotations

"""Weight mapping, programming and digitized read-out.

Weights are unipolar, normalized to ``[0, 1]``. They reach the fabric either
through the analog map :func:`weights_to_conductance` or through
:func:`quantize`, which slices each weight across ``cells_per_weight``
multi-level cells with positional significance. Programming is modelled as a
row-sequential, column-parallel controller that gates one full-voltage pulse
per cell; read-out solves the fabric and runs an ideal uniform ADC.
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .device import DeviceParams, apply_pulse, conductance, program_pulse
from .errors import InvalidArgumentError, ModeViolationError, ReadDisturbError
from .fabric import Fabric, SolveResult
from .modes import Mode

logger = logging.getLogger(__name__)

#: Allowed bits per cell; 3.5 bits means round(2 ** 3.5) = 11 levels.
CELL_BITS = (1.0, 2.0, 3.0, 3.5)

#: Relative slack when checking a target against the nominal conductance range.
_RANGE_SLACK = 1e-9

#: States closer than this to the target need no pulse.
_STATE_TOLERANCE = 1e-12

PROGRAM_RULE = "a layer must be write-biased (RE low) to be programmed"
READ_RULE = "read-out needs at least one read-enabled (RE high) layer"


def input_lsb(v_read_max: float, input_bits: int) -> float:
    """DAC step ``v_read_max / 2 ** input_bits``."""
    if input_bits <= 0:
        raise InvalidArgumentError(f"input_bits must be >= 1, got {input_bits!r}")
    if v_read_max <= 0:
        raise InvalidArgumentError(f"v_read_max must be > 0, got {v_read_max!r}")
    return v_read_max / 2**input_bits


def effective_bits(rel_error: float) -> float:
    """``log2(1 / rel_error)`` rounded down to the nearest half bit."""
    if not 0 < rel_error < 1:
        raise InvalidArgumentError(f"relative error must lie in (0, 1), got {rel_error!r}")
    return math.floor(2.0 * math.log2(1.0 / rel_error)) / 2.0


def level_count(bits_per_cell: float) -> int:
    return round(2**bits_per_cell)


class QuantScheme(BaseModel):
    """Conductance levels of one cell and the number of cells per weight."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    bits_per_cell: float
    cells_per_weight: int
    g_levels: tuple[float, ...]

    @model_validator(mode="after")
    def _check_invariants(self) -> "QuantScheme":
        if self.bits_per_cell not in CELL_BITS:
            raise ValueError(f"invariant bits_per_cell in {CELL_BITS} violated")
        if self.cells_per_weight < 1:
            raise ValueError("invariant cells_per_weight >= 1 violated")
        if len(self.g_levels) != level_count(self.bits_per_cell):
            raise ValueError(
                "invariant len(g_levels) == round(2 ** bits_per_cell) violated "
                f"({len(self.g_levels)} levels for {self.bits_per_cell} bits)"
            )
        if any(b <= a for a, b in zip(self.g_levels, self.g_levels[1:])):
            raise ValueError("invariant g_levels strictly increasing violated")
        return self

    @classmethod
    def for_device(
        cls, params: DeviceParams, bits_per_cell: float = 1.0, cells_per_weight: int = 1
    ) -> "QuantScheme":
        """Levels evenly spaced in conductance from ``1/r_reset`` to ``1/r_set``."""
        levels = np.linspace(
            1.0 / params.r_reset, 1.0 / params.r_set, level_count(bits_per_cell)
        )
        return cls(
            bits_per_cell=bits_per_cell,
            cells_per_weight=cells_per_weight,
            g_levels=tuple(float(g) for g in levels),
        )

    @property
    def levels(self) -> int:
        return len(self.g_levels)


@dataclass(frozen=True, slots=True)
class SliceAssignment:
    """Per-weight cell codes, most significant first, shape ``(n, m, k)``."""

    codes: np.ndarray
    conductances: np.ndarray
    reconstructed: np.ndarray


def _check_weights(weights: np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
    values = np.asarray(weights, dtype=float)
    if values.ndim != 2:
        raise InvalidArgumentError(f"weights must be a matrix, got shape {values.shape}")
    if not np.all((values >= 0.0) & (values <= 1.0)):
        raise InvalidArgumentError("weights must lie in [0, 1]")
    return values


def reconstruct(codes: np.ndarray, scheme: QuantScheme) -> np.ndarray:
    """Weights represented by per-cell *codes*."""
    digits = np.asarray(codes)
    k = digits.shape[-1]
    if k != scheme.cells_per_weight:
        raise InvalidArgumentError(
            f"expected {scheme.cells_per_weight} cells per weight, got {k}"
        )
    base = scheme.levels
    significance = base ** np.arange(k - 1, -1, -1, dtype=float) / float(base) ** k
    return digits @ significance


def quantize(
    weights: np.ndarray | Sequence[Sequence[float]], scheme: QuantScheme
) -> SliceAssignment:
    """Slice each weight into ``cells_per_weight`` base-``L`` digits.

    The digit string is the one whose reconstruction is nearest the weight;
    weights above the top representable value saturate to it.
    """
    values = _check_weights(weights)
    base, k = scheme.levels, scheme.cells_per_weight
    top = base**k - 1
    steps = np.clip(np.rint(values * base**k), 0, top).astype(np.int64)

    codes = np.empty((*values.shape, k), dtype=np.int64)
    remainder = steps
    for position in range(k - 1, -1, -1):
        codes[..., position] = remainder % base
        remainder = remainder // base

    conductances = np.asarray(scheme.g_levels)[codes]
    return SliceAssignment(
        codes=codes, conductances=conductances, reconstructed=reconstruct(codes, scheme)
    )


def weights_to_conductance(
    weights: np.ndarray | Sequence[Sequence[float]], params: DeviceParams
) -> np.ndarray:
    """Linear map of ``[0, 1]`` onto ``[1/r_reset, 1/r_set]``."""
    values = _check_weights(weights)
    g_reset, g_set = 1.0 / params.r_reset, 1.0 / params.r_set
    return g_reset + values * (g_set - g_reset)


class ProgramReport(BaseModel):
    """Outcome of programming one layer."""

    model_config = ConfigDict(frozen=True)

    layer: int
    rows_programmed: int
    total_time: float
    total_energy: float
    pulses: int
    max_relative_error: float
    achieved: list[list[float]]


def program(
    fabric: Fabric,
    targets: np.ndarray | Sequence[Sequence[float]],
    *,
    layer: int = 0,
    t_write: float | None = None,
) -> ProgramReport:
    """Program *layer* of *fabric* to the target conductances.

    Rows are written one after another, each taking ``t_write`` (the
    device's full-switch time by default) regardless of how far its cells
    move. Every cell that needs a change gets one full-voltage pulse whose
    width sets the new state. Targets a sampled device cannot reach are
    clamped to its range and show up in ``max_relative_error``.

    Raises:
        ModeViolationError: *layer* is read-biased.
        InvalidArgumentError: Wrong target shape or a target outside
            ``[1/r_reset, 1/r_set]``.
    """
    geometry = fabric.geometry
    if not 0 <= layer < geometry.layers:
        raise InvalidArgumentError(f"layer {layer!r} does not exist")
    if fabric.re[layer]:
        raise ModeViolationError(geometry.mode.value, fabric.re, PROGRAM_RULE)

    goal = np.asarray(targets, dtype=float)
    if goal.shape != (geometry.rows, geometry.cols):
        raise InvalidArgumentError(
            f"targets shape {goal.shape} does not match layer {geometry.rows}x{geometry.cols}"
        )

    energy = 0.0
    pulses = 0
    worst = 0.0
    achieved = np.empty_like(goal)
    for i in range(geometry.rows):
        for j in range(geometry.cols):
            device = fabric.device(layer, i, j)
            params = device.params
            g_low, g_high = 1.0 / params.r_reset, 1.0 / params.r_set
            target = goal[i, j]
            if not g_low * (1 - _RANGE_SLACK) <= target <= g_high * (1 + _RANGE_SLACK):
                raise InvalidArgumentError(
                    f"target {target!r} S at ({i}, {j}) outside [{g_low!r}, {g_high!r}]"
                )

            x_target = (target - device.g_reset) / (device.g_set - device.g_reset)
            x_target = min(1.0, max(0.0, x_target))
            if abs(x_target - device.x) > _STATE_TOLERANCE:
                g_before = conductance(device)
                v, dt = program_pulse(device, x_target)
                device = apply_pulse(device, v, dt)
                energy += v * v * dt * (g_before + conductance(device)) / 2.0
                pulses += 1
                fabric.set_device(layer, i, j, device)

            achieved[i, j] = conductance(device)
            worst = max(worst, abs(achieved[i, j] - target) / target)

    row_time = fabric.device(layer, 0, 0).params.t_write_full if t_write is None else t_write
    report = ProgramReport(
        layer=layer,
        rows_programmed=geometry.rows,
        total_time=geometry.rows * row_time,
        total_energy=energy,
        pulses=pulses,
        max_relative_error=worst,
        achieved=achieved.tolist(),
    )
    logger.debug(
        "programmed layer %d: %d pulses, %.3g J, max error %.3g",
        layer,
        pulses,
        energy,
        worst,
    )
    return report


class AdcModel(BaseModel):
    """Input DAC and output ADC of the sense path."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    input_bits: int = 7
    v_read_max: float = 0.39
    output_bits: int = 8
    full_scale: float = 10e-6
    allow_read_disturb: bool = False

    @model_validator(mode="after")
    def _check_invariants(self) -> "AdcModel":
        if self.input_bits < 1 or self.output_bits < 1:
            raise ValueError("invariant input_bits, output_bits >= 1 violated")
        if self.v_read_max <= 0:
            raise ValueError("invariant v_read_max > 0 violated")
        if self.full_scale <= 0:
            raise ValueError("invariant full_scale > 0 violated")
        return self

    @property
    def lsb(self) -> float:
        return input_lsb(self.v_read_max, self.input_bits)

    def dac(self, codes: Sequence[int] | np.ndarray) -> np.ndarray:
        """Input voltages for integer *codes*."""
        values = np.asarray(codes)
        if np.any(values < 0) or np.any(values >= 2**self.input_bits):
            raise InvalidArgumentError(f"input codes must lie in [0, {2**self.input_bits - 1}]")
        return values * self.lsb

    def quantize(self, currents: Sequence[float] | np.ndarray) -> np.ndarray:
        """Uniform ``output_bits`` codes of *currents* against ``full_scale``."""
        top = 2**self.output_bits - 1
        scaled = np.clip(np.asarray(currents, dtype=float) / self.full_scale, 0.0, 1.0)
        return np.rint(scaled * top).astype(np.int64)


def sense(
    fabric: Fabric,
    v_inputs: Sequence[float] | np.ndarray,
    adc: AdcModel,
    write_inputs: Sequence[float] | np.ndarray | None = None,
) -> SolveResult:
    """Solve the fabric for a read, enforcing the read-voltage rules.

    *v_inputs* drives the read-enabled layers (layer-major). In DeepNet mode
    the write-biased layer's rows take *write_inputs* (zeros by default).

    Raises:
        ModeViolationError: No layer is read-enabled.
        ReadDisturbError: A read input exceeds a read layer's threshold.
        InvalidArgumentError: A read input exceeds ``adc.v_read_max`` or has
            the wrong length.
    """
    geometry = fabric.geometry
    read_layers = [layer for layer, high in enumerate(fabric.re) if high]
    if not read_layers:
        raise ModeViolationError(geometry.mode.value, fabric.re, READ_RULE)

    volts = np.asarray(v_inputs, dtype=float).ravel()
    expected = len(read_layers) * geometry.rows
    if volts.shape[0] != expected:
        raise InvalidArgumentError(f"expected {expected} read inputs, got {volts.shape[0]}")

    peak = float(np.max(np.abs(volts))) if volts.size else 0.0
    v_th = min(fabric.device(layer, 0, 0).params.v_th for layer in read_layers)
    if peak > v_th and not adc.allow_read_disturb:
        raise ReadDisturbError(peak, v_th)
    if peak > adc.v_read_max:
        raise InvalidArgumentError(
            f"read input {peak!r} V exceeds v_read_max={adc.v_read_max!r} V"
        )

    full = np.zeros(geometry.driven_rows)
    read_iter = iter(volts.reshape(len(read_layers), geometry.rows))
    write_rows = np.zeros(geometry.rows) if write_inputs is None else np.asarray(write_inputs, dtype=float)
    if write_rows.shape != (geometry.rows,):
        raise InvalidArgumentError(f"expected {geometry.rows} write inputs")
    for layer, high in enumerate(fabric.re):
        block = slice(layer * geometry.rows, (layer + 1) * geometry.rows)
        if high:
            full[block] = next(read_iter)
        elif geometry.mode is Mode.DEEPNET:
            full[block] = write_rows
    return fabric.solve(full)


def readout(
    fabric: Fabric,
    v_inputs: Sequence[float] | np.ndarray,
    adc: AdcModel,
    write_inputs: Sequence[float] | np.ndarray | None = None,
) -> np.ndarray:
    """Digitized column currents of a read; device states are untouched."""
    return adc.quantize(sense(fabric, v_inputs, adc, write_inputs).column_currents)
