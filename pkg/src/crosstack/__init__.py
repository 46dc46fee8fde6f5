# src/crosstack/__init__.py
from __future__ import annotations

"""CrossStack package root.

A circuit-level simulator of a two-layer stacked memristor crossbar. The
public surface covers the device and cell models, the fabric netlist and DC
solver, weight mapping and read-out, inference scheduling, the reproducible
experiments and configuration loading.
"""

from .cell import BranchCurrents, CellInstance, TransistorParams, branch_currents, column_leakage
from .config import RunConfig, apply_overrides, parse_config, parse_config_text
from .device import (
    DeviceInstance,
    DeviceParams,
    apply_pulse,
    conductance,
    iv_trace,
    sample_devices,
)
from .engine import (
    AdcModel,
    ProgramReport,
    QuantScheme,
    effective_bits,
    input_lsb,
    program,
    quantize,
    readout,
)
from .errors import (
    ConfigError,
    ConfigSyntaxError,
    CrossStackError,
    InvalidArgumentError,
    ModeViolationError,
    ReadDisturbError,
    SolverError,
)
from .experiments import (
    ExperimentReport,
    hysteresis_experiment,
    ir_drop_experiment,
    leakage_mc,
    power_worst_case,
    run_all,
    transient_read,
)
from .fabric import Fabric, FabricGeometry, Netlist, SolveResult, build_netlist, ideal_mvm, ir_drop_metric, solve_dc
from .modes import Mode, ModeState, validate_mode
from .pipeline import Timeline, TimingParams, effective_rows, infer, plan, speedup

__all__: list[str] = [
    "AdcModel",
    "BranchCurrents",
    "CellInstance",
    "ConfigError",
    "ConfigSyntaxError",
    "CrossStackError",
    "DeviceInstance",
    "DeviceParams",
    "ExperimentReport",
    "Fabric",
    "FabricGeometry",
    "InvalidArgumentError",
    "Mode",
    "ModeState",
    "ModeViolationError",
    "Netlist",
    "ProgramReport",
    "QuantScheme",
    "ReadDisturbError",
    "RunConfig",
    "SolveResult",
    "SolverError",
    "Timeline",
    "TimingParams",
    "TransistorParams",
    "apply_overrides",
    "apply_pulse",
    "branch_currents",
    "build_netlist",
    "column_leakage",
    "conductance",
    "effective_bits",
    "effective_rows",
    "hysteresis_experiment",
    "ideal_mvm",
    "infer",
    "input_lsb",
    "ir_drop_experiment",
    "ir_drop_metric",
    "iv_trace",
    "leakage_mc",
    "parse_config",
    "parse_config_text",
    "plan",
    "power_worst_case",
    "program",
    "quantize",
    "readout",
    "run_all",
    "sample_devices",
    "solve_dc",
    "speedup",
    "transient_read",
    "validate_mode",
]
