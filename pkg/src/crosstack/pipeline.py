# src/crosstack/pipeline.py
from __future__ import annotations

"""Mode control, inference scheduling and throughput accounting.

The baseline (planar or expansion) runs every network layer as a strict
write-then-read sequence. DeepNet mode alternates network layers between the
two physical layers: while layer ``k`` is read on one, layer ``k + 1`` is
already being programmed on the other, so each read hides behind the next
write.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .engine import AdcModel, ProgramReport, program, readout, weights_to_conductance
from .errors import InvalidArgumentError, ModeViolationError
from .fabric import Fabric, FabricGeometry
from .modes import DEEPNET_RULE, EXPANSION_RULE, Mode, ModeState, validate_mode

__all__ = [
    "DEEPNET_RULE",
    "EXPANSION_RULE",
    "Event",
    "EventKind",
    "InferenceResult",
    "Mode",
    "ModeState",
    "TimingParams",
    "Timeline",
    "asymptotic_speedup",
    "check_timeline",
    "effective_rows",
    "infer",
    "plan",
    "speedup",
    "timeline_csv",
    "validate_mode",
]

logger = logging.getLogger(__name__)

TIMELINE_HEADER = ("t_start_ns", "t_end_ns", "kind", "physical_layer", "network_layer")


class TimingParams(BaseModel):
    """Read and write durations used for scheduling."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    t_read: float = 10e-9
    t_write_unit: float = 25e-9
    t_write_full: float = 250e-9

    @model_validator(mode="after")
    def _check_invariants(self) -> "TimingParams":
        if min(self.t_read, self.t_write_unit, self.t_write_full) <= 0:
            raise ValueError("invariant all times > 0 violated")
        if not self.t_read < self.t_write_unit:
            raise ValueError(
                f"invariant t_read < t_write_unit violated "
                f"(t_read={self.t_read!r}, t_write_unit={self.t_write_unit!r})"
            )
        return self


class EventKind(str, Enum):
    READ = "read"
    WRITE = "write"


@dataclass(frozen=True, slots=True)
class Event:
    t_start: float
    t_end: float
    kind: EventKind
    physical_layer: int
    network_layer: int


@dataclass(slots=True)
class Timeline:
    mode: Mode
    events: list[Event] = field(default_factory=list)

    @property
    def total(self) -> float:
        if not self.events:
            return 0.0
        return max(e.t_end for e in self.events) - min(e.t_start for e in self.events)

    @property
    def network_layers(self) -> int:
        return len({e.network_layer for e in self.events})


def plan(mode: Mode, num_network_layers: int, timing: TimingParams) -> Timeline:
    """Schedule the write/read events of an inference over *num_network_layers*.

    Events are half-open intervals ``[t_start, t_end)``.
    """
    if isinstance(num_network_layers, bool) or num_network_layers < 1:
        raise InvalidArgumentError(
            f"number of network layers must be >= 1, got {num_network_layers!r}"
        )
    t_w, t_r = timing.t_write_unit, timing.t_read
    timeline = Timeline(mode=mode)

    if mode is not Mode.DEEPNET:
        for k in range(num_network_layers):
            start = k * (t_w + t_r)
            timeline.events.append(Event(start, start + t_w, EventKind.WRITE, 0, k))
            timeline.events.append(Event(start + t_w, start + t_w + t_r, EventKind.READ, 0, k))
        return timeline

    # a layer is free once its previous read ends; writes never overlap each other
    layer_free = [0.0, 0.0]
    write_end = 0.0
    read_end = 0.0
    for k in range(num_network_layers):
        layer = k % 2
        w_start = max(layer_free[layer], write_end)
        write_end = w_start + t_w
        r_start = max(write_end, read_end)
        read_end = r_start + t_r
        layer_free[layer] = read_end
        timeline.events.append(Event(w_start, write_end, EventKind.WRITE, layer, k))
        timeline.events.append(Event(r_start, read_end, EventKind.READ, layer, k))

    timeline.events.sort(key=lambda e: (e.t_start, e.physical_layer))
    logger.debug("planned %d layers in %s mode: %.3g s", num_network_layers, mode.value, timeline.total)
    return timeline


def check_timeline(timeline: Timeline) -> None:
    """Raise if events collide on a layer or break complementary RE.

    Raises:
        ModeViolationError: Two events overlap on one physical layer, or (in
            DeepNet mode) both layers read or both write at the same instant.
    """
    by_layer: dict[int, list[Event]] = {}
    for event in timeline.events:
        by_layer.setdefault(event.physical_layer, []).append(event)
    for layer, events in by_layer.items():
        events = sorted(events, key=lambda e: e.t_start)
        for first, second in zip(events, events[1:]):
            if second.t_start < first.t_end:
                raise ModeViolationError(
                    timeline.mode.value, (), f"overlapping events on physical layer {layer}"
                )

    if timeline.mode is not Mode.DEEPNET:
        return
    for kind in EventKind:
        spans = [e for e in timeline.events if e.kind is kind]
        for a in spans:
            for b in spans:
                if a.physical_layer != b.physical_layer and a.t_start < b.t_end and b.t_start < a.t_end:
                    raise ModeViolationError(timeline.mode.value, (True, True), DEEPNET_RULE)


def speedup(deepnet: Timeline, baseline: Timeline) -> float:
    """Fractional time saved by *deepnet* over *baseline*."""
    if baseline.total <= 0:
        raise InvalidArgumentError("baseline timeline has zero duration")
    if deepnet.network_layers != baseline.network_layers:
        raise InvalidArgumentError(
            f"timelines cover different networks "
            f"({deepnet.network_layers} vs {baseline.network_layers} layers)"
        )
    return 1.0 - deepnet.total / baseline.total


def asymptotic_speedup(timing: TimingParams) -> float:
    return timing.t_read / (timing.t_write_unit + timing.t_read)


def effective_rows(mode: Mode, geometry: FabricGeometry) -> int:
    """Inputs summed into each column current."""
    if geometry.mode is not mode:
        raise InvalidArgumentError(
            f"geometry is laid out for {geometry.mode.value}, not {mode.value}"
        )
    return 2 * geometry.rows if mode is Mode.EXPANSION else geometry.rows


def timeline_csv(timeline: Timeline) -> list[tuple[float, float, str, int, int]]:
    """Rows matching :data:`TIMELINE_HEADER`, times in nanoseconds."""
    return [
        (e.t_start * 1e9, e.t_end * 1e9, e.kind.value, e.physical_layer, e.network_layer)
        for e in sorted(timeline.events, key=lambda e: (e.t_start, e.physical_layer))
    ]


@dataclass(slots=True)
class InferenceResult:
    outputs: np.ndarray
    layer_codes: list[np.ndarray]
    timeline: Timeline
    reports: list[ProgramReport]


def infer(
    fabric: Fabric,
    layer_weights: Sequence[np.ndarray],
    input_codes: Sequence[int] | np.ndarray,
    adc: AdcModel,
    timing: TimingParams,
) -> InferenceResult:
    """Run a feed-forward network through a DeepNet fabric.

    Network layer ``k`` is programmed into physical layer ``k % 2`` while the
    other layer holds the read bias, then read with the previous layer's
    output codes as DAC inputs. Output codes wider than the DAC saturate.
    Each weight matrix is ``rows x cols`` with ``cols <= rows``; shorter
    outputs are zero-padded to the next layer's rows.
    """
    geometry = fabric.geometry
    if geometry.mode is not Mode.DEEPNET:
        raise ModeViolationError(
            geometry.mode.value, fabric.re, "inference pipelining needs a DeepNet fabric"
        )
    if not layer_weights:
        raise InvalidArgumentError("at least one network layer is required")
    if geometry.cols > geometry.rows and len(layer_weights) > 1:
        raise InvalidArgumentError("chained layers need cols <= rows")

    codes = np.asarray(input_codes, dtype=np.int64)
    if codes.shape != (geometry.rows,):
        raise InvalidArgumentError(f"expected {geometry.rows} input codes")

    params = fabric.device(0, 0, 0).params
    dac_top = 2**adc.input_bits - 1
    reports: list[ProgramReport] = []
    layer_codes: list[np.ndarray] = []
    for k, weights in enumerate(layer_weights):
        matrix = np.asarray(weights, dtype=float)
        if matrix.shape != (geometry.rows, geometry.cols):
            raise InvalidArgumentError(
                f"layer {k} weights shape {matrix.shape} does not match "
                f"{geometry.rows}x{geometry.cols}"
            )
        layer = k % 2
        write_re = [True, True]
        write_re[layer] = False
        fabric.set_re(write_re)
        reports.append(
            program(fabric, weights_to_conductance(matrix, params), layer=layer, t_write=timing.t_write_unit)
        )

        read_re = [False, False]
        read_re[layer] = True
        fabric.set_re(read_re)
        out = readout(fabric, adc.dac(codes), adc)
        layer_codes.append(out)
        codes = np.zeros(geometry.rows, dtype=np.int64)
        codes[: geometry.cols] = np.minimum(out, dac_top)

    timeline = plan(Mode.DEEPNET, len(layer_weights), timing)
    logger.debug("inference over %d layers finished at %.3g s", len(layer_weights), timeline.total)
    return InferenceResult(
        outputs=layer_codes[-1], layer_codes=layer_codes, timeline=timeline, reports=reports
    )
