# src/crosstack/experiments.py
from __future__ import annotations

"""Reproducible cell and fabric measurements with pass/fail tolerances.

Each experiment takes a :class:`~crosstack.config.RunConfig`, returns an
:class:`ExperimentReport` and, when given an output directory, writes
``<name>.report.json`` next to its CSV data files. Written files are
deterministic for a fixed seed; the runtime stays on the in-memory report.
"""

import logging
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field

from .cell import CellInstance, branch_currents, column_leakage, read_current
from .config import RunConfig
from .device import (
    apply_pulse,
    conductance,
    dissipation,
    iv_trace,
    loop_area,
    nominal_device,
    sample_devices,
    sinusoid,
)
from .engine import effective_bits, input_lsb
from .errors import InvalidArgumentError
from .fabric import Fabric, FabricGeometry, IrDropMetric, ir_drop_metric
from .modes import Mode
from .outputs import write_csv, write_json
from .pipeline import asymptotic_speedup, plan, speedup

logger = logging.getLogger(__name__)

Check = Literal["abs", "rel", "at_most", "at_least", "info"]


class Measurement(BaseModel):
    """One reported quantity and the comparison that decides whether it passes.

    ``abs`` passes when ``|value - target| <= tolerance``, ``rel`` when
    ``|value - target| <= tolerance * |target|``; ``at_most``/``at_least``
    bound the value by ``target``; ``info`` is never compared.
    """

    model_config = ConfigDict(frozen=True)

    name: str
    value: float
    unit: str = ""
    target: float | None = None
    tolerance: float | None = None
    check: Check = "info"

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        if self.check == "info" or self.target is None:
            return True
        if self.check == "at_most":
            return self.value <= self.target
        if self.check == "at_least":
            return self.value >= self.target
        allowed = self.tolerance or 0.0
        if self.check == "rel":
            allowed *= abs(self.target)
        return abs(self.value - self.target) <= allowed


class ExperimentReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    seed: int
    runtime_s: float = Field(exclude=True)
    measurements: list[Measurement]
    notes: list[str] = []
    files: list[str] = []

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.measurements)

    def measurement(self, name: str) -> Measurement:
        for item in self.measurements:
            if item.name == name:
                return item
        raise KeyError(name)


class ExperimentSummary(BaseModel):
    name: str
    passed: bool
    report: str | None = None


class Summary(BaseModel):
    passed: bool
    seed: int
    experiments: list[ExperimentSummary]


class _Recorder:
    """Collects measurements, notes and CSV files for one experiment run."""

    def __init__(self, name: str, config: RunConfig, out_dir: Path | None) -> None:
        self.name = name
        self.seed = config.run.seed
        self.out_dir = out_dir
        self.measurements: list[Measurement] = []
        self.notes: list[str] = []
        self.files: list[str] = []
        self._started = time.perf_counter()

    def measure(self, name: str, value: float, unit: str = "", **comparison: Any) -> None:
        self.measurements.append(Measurement(name=name, value=float(value), unit=unit, **comparison))

    def table(self, suffix: str, header: tuple[str, ...], rows: Iterable[Sequence[Any]]) -> None:
        if self.out_dir is None:
            return
        filename = f"{self.name}.{suffix}.csv"
        write_csv(self.out_dir / filename, header, rows)
        self.files.append(filename)

    def report(self) -> ExperimentReport:
        report = ExperimentReport(
            name=self.name,
            seed=self.seed,
            runtime_s=time.perf_counter() - self._started,
            measurements=self.measurements,
            notes=self.notes,
            files=self.files,
        )
        if self.out_dir is not None:
            write_json(self.out_dir / f"{self.name}.report.json", report)
        logger.debug("%s: %s in %.2f s", self.name, "pass" if report.passed else "FAIL", report.runtime_s)
        return report


_Profiles = dict[str, tuple[np.ndarray, np.ndarray, IrDropMetric]]


def _ir_profiles(config: RunConfig, lead_cells: int) -> tuple[_Profiles, float]:
    """Column currents, ideal currents and losses of both fabrics, plus the dense mismatch."""
    s = config.ir_drop
    common = dict(
        cols=s.cols,
        r_wire_per_cell=s.r_wire_per_cell,
        row_lead_cells=lead_cells,
        v_dd=config.fabric.v_dd,
    )
    fabrics = {
        "planar": FabricGeometry(rows=2 * s.rows, layers=1, mode=Mode.PLANAR, **common),
        "expansion": FabricGeometry(rows=s.rows, layers=2, mode=Mode.EXPANSION, **common),
    }

    profiles: _Profiles = {}
    mismatch = 0.0
    for label, geometry in fabrics.items():
        v = np.full(geometry.driven_rows, s.v_bias)
        fabric = Fabric.build(
            geometry, config.device, config.read_switch, config.write_switch, state=s.device_state
        )
        ideal_geometry = geometry.model_copy(update={"r_wire_per_cell": 0.0})
        ideal_fabric = Fabric.build(
            ideal_geometry, config.device, config.read_switch, config.write_switch, state=s.device_state
        )
        actual = fabric.solve(v)
        ideal = ideal_fabric.solve(v).column_currents
        dense = fabric.solve(v, method="dense").column_currents
        mismatch = max(mismatch, float(np.max(np.abs(actual.column_currents - dense) / np.abs(dense))))
        profiles[label] = (actual.column_currents, ideal, ir_drop_metric(actual, ideal))
    return profiles, mismatch


def _reduction(profiles: _Profiles) -> float | None:
    planar, expansion = profiles["planar"][2], profiles["expansion"][2]
    if planar.worst <= 0:
        return None
    return 1.0 - expansion.worst / planar.worst


def ir_drop_experiment(config: RunConfig, out_dir: Path | None = None) -> ExperimentReport:
    """Worst-case column current loss of an expansion fabric and its planar control.

    Both fabrics hold the same number of inputs per column (``2n``). Losses
    are measured against the same fabric solved without wire resistance.
    The gate is that stacking never loses more than the control; the
    reference reduction and a longer row lead are reported for comparison.
    """
    rec = _Recorder("ir_drop", config, out_dir)
    s = config.ir_drop
    profiles, mismatch = _ir_profiles(config, s.row_lead_cells)

    planar, expansion = profiles["planar"][2], profiles["expansion"][2]
    rec.measure("planar_worst_loss", planar.worst)
    rec.measure("expansion_worst_loss", expansion.worst)
    reduction = _reduction(profiles)
    if reduction is None:
        rec.measure("reduction", 0.0)
        rec.notes.append("no IR loss in the planar control; reduction reported as 0")
    else:
        rec.measure("reduction", reduction, target=s.min_reduction, check="at_least")
        rec.measure("reference_gap", reduction - s.target_reduction)
        inside = abs(reduction - s.target_reduction) <= s.tolerance
        rec.notes.append(
            f"reduction {reduction:.3f} with a {s.row_lead_cells}-pitch row lead is "
            f"{'inside' if inside else 'outside'} the reference band "
            f"{s.target_reduction:.2f} +/- {s.tolerance:.2f}"
        )
    rec.measure("dense_oracle_mismatch", mismatch, target=1e-9, check="at_most")

    routed = _reduction(_ir_profiles(config, s.routed_lead_cells)[0])
    if routed is not None:
        rec.measure("reduction_routed_lead", routed)
        rec.notes.append(
            f"a {s.routed_lead_cells}-pitch row lead adds the same row-wire loss to both "
            f"fabrics while only the column wire is shortened, so the reduction moves to {routed:.3f}"
        )
    rec.notes.append(f"rows driven at {s.v_bias!r} V, devices at x={s.device_state!r}")

    rec.table(
        "columns",
        (
            "column",
            "planar_current_A",
            "planar_ideal_A",
            "planar_loss",
            "expansion_current_A",
            "expansion_ideal_A",
            "expansion_loss",
        ),
        (
            (j, profiles["planar"][0][j], profiles["planar"][1][j], planar.losses[j],
             profiles["expansion"][0][j], profiles["expansion"][1][j], expansion.losses[j])
            for j in range(s.cols)
        ),
    )
    return rec.report()


def leakage_mc(config: RunConfig, out_dir: Path | None = None) -> ExperimentReport:
    """Monte Carlo of off-state column leakage from cells under write bias."""
    rec = _Recorder("leakage_mc", config, out_dir)
    s = config.leakage
    n1, n2, v_dd = config.read_switch, config.write_switch, config.fabric.v_dd

    devices = [replace(d, x=s.device_state) for d in sample_devices(config.device, s.trials, config.run.seed)]
    cells = [CellInstance(device, n1, n2, row_index=k) for k, device in enumerate(devices)]
    leaks = np.array([branch_currents(c, s.v_write, 0.0, re_high=False, v_dd=v_dd).i_leak for c in cells])

    k = s.cells_per_column
    if len(cells) >= k:
        columns = [cells[g * k : (g + 1) * k] for g in range(len(cells) // k)]
    else:
        columns = [[cells[i % len(cells)] for i in range(k)]]
    column_totals = np.array([column_leakage(column, s.v_write, v_dd) for column in columns])

    i_read = read_current(nominal_device(config.device, 0.0), s.read_voltage, n1, n2, v_dd)
    column_mean = float(column_totals.mean())

    rec.measure(
        "read_current", i_read, "A",
        target=s.target_read_current, tolerance=s.read_current_tolerance, check="rel",
    )
    rec.measure("leak_per_cell_mean", leaks.mean(), "A", target=s.target_leak, tolerance=s.leak_tolerance, check="rel")
    rec.measure("leak_per_cell_std", leaks.std(ddof=1), "A")
    rec.measure(
        "column_leakage", column_mean, "A",
        target=s.target_column_leak, tolerance=s.leak_tolerance, check="rel",
    )
    rec.measure(
        "leakage_ratio", column_mean / i_read, "",
        target=s.target_ratio, tolerance=s.ratio_tolerance, check="rel",
    )

    rec.table(
        "trials",
        ("trial", "r_set_ohm", "leak_A"),
        ((t, d.sampled_r_set, leak) for t, (d, leak) in enumerate(zip(devices, leaks))),
    )
    sweep = []
    for v in np.linspace(0.0, s.sweep_max, s.sweep_points):
        at_v = np.array([branch_currents(c, float(v), 0.0, re_high=False, v_dd=v_dd).i_leak for c in cells])
        sweep.append((float(v), at_v.mean(), at_v.std(ddof=1), at_v.min(), at_v.max()))
    rec.table("sweep", ("v_write_V", "leak_mean_A", "leak_std_A", "leak_min_A", "leak_max_A"), sweep)
    return rec.report()


def transient_read(config: RunConfig, out_dir: Path | None = None) -> ExperimentReport:
    """Read-cycle current of a DeepNet cell pair across a sampled population.

    The read layer holds a reset device driven by the input code sequence;
    the partner layer is being set at the write voltage at the same time.
    Each step is a DC solve followed by the write layer's state update.
    """
    rec = _Recorder("transient_read", config, out_dir)
    s = config.transient
    codes = np.asarray(s.input_codes, dtype=np.int64)
    if not np.any(codes > 0):
        raise InvalidArgumentError("input sequence needs at least one non-zero code")

    lsb = input_lsb(s.v_read_max, s.input_bits)
    read_seed, write_seed = np.random.SeedSequence(config.run.seed).generate_state(2)
    read_devices = sample_devices(config.device, s.trials, int(read_seed))
    write_devices = sample_devices(config.device, s.trials, int(write_seed))
    geometry = FabricGeometry(
        rows=1,
        cols=1,
        layers=2,
        mode=Mode.DEEPNET,
        r_wire_per_cell=config.fabric.r_wire_per_cell,
        row_lead_cells=config.fabric.row_lead_cells,
        v_dd=config.fabric.v_dd,
        mirrored_layers=config.fabric.mirrored_layers,
    )

    v_read = codes * lsb
    nominal = v_read * conductance(nominal_device(config.device, s.device_state))
    reading = codes > 0
    dt = config.timing.t_read
    currents = np.empty((s.trials, len(codes)))
    for trial in range(s.trials):
        fabric = Fabric.build(
            geometry,
            config.device,
            config.read_switch,
            config.write_switch,
            devices=[replace(read_devices[trial], x=s.device_state), write_devices[trial]],
            re=(True, False),
        )
        for step, v in enumerate(v_read):
            currents[trial, step] = fabric.solve([v, s.v_write]).column_currents[0]
            fabric.set_device(1, 0, 0, apply_pulse(fabric.device(1, 0, 0), s.v_write, dt))

    deviation = np.abs(currents[:, reading] - nominal[reading]) / nominal[reading]
    worst = deviation.max(axis=1)
    mean_worst = float(worst.mean())

    rec.measure(
        "worst_case_deviation", mean_worst, "",
        target=s.target_deviation, tolerance=s.tolerance, check="abs",
    )
    rec.measure("max_deviation", worst.max())
    if 0 < mean_worst < 1:
        rec.measure("effective_bits", effective_bits(mean_worst), "bit", target=s.target_bits, tolerance=0.0, check="abs")
    else:
        rec.notes.append("effective bits undefined for a deviation outside (0, 1)")
    rec.measure("input_lsb", lsb, "V", target=s.target_lsb, tolerance=s.lsb_tolerance, check="rel")

    deepnet = plan(Mode.DEEPNET, s.speedup_layers, config.timing)
    baseline = plan(Mode.PLANAR, s.speedup_layers, config.timing)
    t_w, t_r = config.timing.t_write_unit, config.timing.t_read
    layers = s.speedup_layers
    rec.measure(
        f"speedup_l{layers}", speedup(deepnet, baseline), "",
        target=1.0 - (layers * t_w + t_r) / (layers * (t_w + t_r)), tolerance=1e-9, check="abs",
    )
    rec.measure(
        "speedup_asymptotic", asymptotic_speedup(config.timing), "",
        target=s.target_speedup, tolerance=s.speedup_tolerance, check="abs",
    )
    rec.notes.append(
        "deviation is the population mean of each trial's worst relative offset "
        "from the nominal read current; max_deviation is the population maximum"
    )

    rec.table(
        "trace",
        ("step", "t_ns", "code", "v_read_V", "i_nominal_A", "i_mean_A", "i_min_A", "i_max_A"),
        (
            (step, step * dt * 1e9, codes[step], v_read[step], nominal[step],
             currents[:, step].mean(), currents[:, step].min(), currents[:, step].max())
            for step in range(len(codes))
        ),
    )
    rec.table(
        "trials",
        ("trial", "r_reset_ohm", "worst_deviation"),
        ((t, read_devices[t].sampled_r_reset, worst[t]) for t in range(s.trials)),
    )
    return rec.report()


def power_worst_case(config: RunConfig, out_dir: Path | None = None) -> ExperimentReport:
    """Static dissipation with every row at the write voltage."""
    rec = _Recorder("power_worst_case", config, out_dir)
    s = config.power
    reset = [nominal_device(config.device, 0.0)] * s.devices
    set_ = [nominal_device(config.device, 1.0)] * s.devices
    p_reset = dissipation(reset, s.v_bias)
    p_set = dissipation(set_, s.v_bias)

    rec.measure("power_all_reset", p_reset, "W", target=s.target_power, tolerance=s.tolerance, check="rel")
    rec.measure("power_all_set", p_set, "W")
    rec.notes.append(
        "the reference worst-case figure matches the all-reset array; "
        "an all-set array dissipates ten times more"
    )
    rec.table(
        "states",
        ("state", "devices", "v_bias_V", "power_W"),
        [("reset", s.devices, s.v_bias, p_reset), ("set", s.devices, s.v_bias, p_set)],
    )
    return rec.report()


def hysteresis_experiment(config: RunConfig, out_dir: Path | None = None) -> ExperimentReport:
    """Pinched I-V loop of one nominal device under a sinusoidal drive."""
    rec = _Recorder("hysteresis", config, out_dir)
    s = config.hysteresis
    wave = sinusoid(s.amplitude, s.frequency, s.periods, s.samples_per_period)
    trace = iv_trace(nominal_device(config.device, s.initial_state), wave)

    spp = s.samples_per_period
    zero = trace[:, 0] == 0.0
    pinch = float(np.max(np.abs(trace[zero, 1])))
    area = loop_area(trace[: spp + 1])

    rec.measure("pinch_current", pinch, "A", target=s.pinch_limit, check="at_most")
    if s.amplitude > config.device.v_th:
        rec.measure("loop_area", area, "A*V", target=s.area_floor, check="at_least")
    else:
        rec.measure("loop_area", area, "A*V", target=s.area_floor, check="at_most")
    if s.periods >= 3:
        second = trace[spp : 2 * spp + 1, 1]
        third = trace[2 * spp : 3 * spp + 1, 1]
        scale = max(float(np.max(np.abs(second))), np.finfo(float).tiny)
        rec.measure(
            "limit_cycle_mismatch", float(np.max(np.abs(second - third))) / scale, "",
            target=1e-9, check="at_most",
        )
    else:
        rec.notes.append("fewer than three periods; limit cycle not checked")

    rec.table(
        "loop",
        ("t_s", "v_V", "i_A"),
        ((t, v, i) for (t, _), (v, i) in zip(wave, trace)),
    )
    return rec.report()


EXPERIMENTS: dict[str, Callable[[RunConfig, Path | None], ExperimentReport]] = {
    "ir_drop": ir_drop_experiment,
    "leakage_mc": leakage_mc,
    "transient_read": transient_read,
    "power_worst_case": power_worst_case,
    "hysteresis": hysteresis_experiment,
}


def run_all(
    config: RunConfig, out_dir: Path | None = None, names: list[str] | None = None
) -> list[ExperimentReport]:
    """Run the named experiments (all by default) and write ``summary.json``."""
    selected = list(EXPERIMENTS) if names is None else names
    unknown = [name for name in selected if name not in EXPERIMENTS]
    if unknown:
        raise InvalidArgumentError(
            f"unknown experiment(s) {unknown}; choose from {', '.join(EXPERIMENTS)}"
        )

    reports = [EXPERIMENTS[name](config, out_dir) for name in selected]
    if out_dir is not None:
        summary = Summary(
            passed=all(r.passed for r in reports),
            seed=config.run.seed,
            experiments=[
                ExperimentSummary(
                    name=r.name, passed=r.passed, report=f"{r.name}.report.json"
                )
                for r in reports
            ],
        )
        write_json(out_dir / "summary.json", summary)
    return reports
