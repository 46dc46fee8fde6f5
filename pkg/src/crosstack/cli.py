# src/crosstack/cli.py
from __future__ import annotations

"""Command-line front end.

::

    crosstack {experiment,mvm,plan,validate-config} ...
              [--config PATH] [--out DIR] [--seed N] [--override SECTION.KEY=VALUE]... [-v]

The global options may also come before the command. Exit status is 0 on
success, 1 when an experiment misses its target and 2 on a configuration,
usage or model error.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel

from .config import RunConfig, apply_overrides, parse_config
from .engine import ProgramReport, program, quantize, reconstruct, sense, weights_to_conductance
from .errors import CrossStackError, InvalidArgumentError
from .experiments import EXPERIMENTS, run_all
from .fabric import Fabric, FabricGeometry, ideal_mvm
from .modes import Mode, validate_mode
from .outputs import atomic_write_text, write_csv, write_json
from .pipeline import TIMELINE_HEADER, plan, speedup, timeline_csv

logger = logging.getLogger(__name__)

OUTPUT_ENV = "CROSSTACK_OUT"
EFFECTIVE_CONFIG = "effective.cfg"

# RE levels while programming, then while reading
_MVM_RE: dict[Mode, tuple[tuple[bool, ...], tuple[bool, ...]]] = {
    Mode.PLANAR: ((False,), (True,)),
    Mode.EXPANSION: ((False, False), (True, True)),
    Mode.DEEPNET: ((False, True), (True, False)),
}


class MvmProgramming(BaseModel):
    """Programming outcome of one ``mvm`` run, one report per written layer."""

    mode: Mode
    quantized: bool
    total_time: float
    total_energy: float
    reports: list[ProgramReport]


def _add_global_options(parser: argparse.ArgumentParser, *, nested: bool) -> None:
    # after the command, options only set what is given there
    unset = argparse.SUPPRESS if nested else None
    parser.add_argument("--config", type=Path, default=unset, help="configuration file (defaults apply when omitted)")
    parser.add_argument(
        "--out", type=Path, default=unset, help=f"output directory (falls back to ${OUTPUT_ENV}, then run.output_dir)"
    )
    parser.add_argument("--seed", type=int, default=unset, help="random seed, overrides run.seed")
    parser.add_argument(
        "--override",
        action="append",
        dest="late_override" if nested else "override",
        default=argparse.SUPPRESS if nested else [],
        metavar="SECTION.KEY=VALUE",
        help="override one configuration value (repeatable)",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", default=unset if nested else False, help="log debug output to stderr"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crosstack",
        description="Two-layer stacked memristor crossbar simulator.",
    )
    _add_global_options(parser, nested=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_global_options(common, nested=True)

    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    experiment = commands.add_parser("experiment", parents=[common], help="run one experiment or all of them")
    experiment.add_argument("name", choices=[*EXPERIMENTS, "all"])

    modes = [mode.value for mode in Mode]
    mvm = commands.add_parser("mvm", parents=[common], help="program a weight matrix and read it out once")
    mvm.add_argument("--weights", type=Path, required=True, help="CSV of weights in [0, 1]")
    mvm.add_argument("--inputs", type=Path, required=True, help="CSV of read voltages")
    mvm.add_argument("--mode", choices=modes, required=True)
    mvm.add_argument(
        "--quantized",
        action="store_true",
        help="slice each weight over quant.cells_per_weight columns using the [quant] scheme",
    )

    timing = commands.add_parser("plan", parents=[common], help="schedule an inference and report its duration")
    timing.add_argument("--layers", type=int, required=True, help="number of network layers")
    timing.add_argument("--mode", choices=modes, required=True)

    commands.add_parser("validate-config", parents=[common], help="check the configuration and print it")
    return parser


def _load_config(args: argparse.Namespace) -> tuple[RunConfig, Path]:
    config = parse_config(args.config) if args.config is not None else RunConfig()
    config = apply_overrides(config, [*args.override, *getattr(args, "late_override", [])])
    if args.out is not None:
        out = str(args.out)
    else:
        out = os.environ.get(OUTPUT_ENV) or config.run.output_dir
    config = config.with_run(seed=args.seed, output_dir=out)
    return config, Path(config.run.output_dir)


def _load_csv(path: Path, ndmin: int) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=ndmin, dtype=float)
    except (OSError, ValueError) as exc:
        raise InvalidArgumentError(f"cannot read {str(path)!r}: {exc}") from exc


def _experiment(args: argparse.Namespace, config: RunConfig, out_dir: Path) -> int:
    names = list(EXPERIMENTS) if args.name == "all" else [args.name]
    reports = run_all(config, out_dir, names)
    for report in reports:
        print(f"{report.name:<18} {'PASS' if report.passed else 'FAIL'}  ({report.runtime_s:.2f} s)")
        for item in report.measurements:
            if not item.passed:
                print(f"    {item.name} = {item.value!r} {item.unit} (target {item.target!r}, {item.check})")
    return 0 if all(report.passed for report in reports) else 1


def _mvm(args: argparse.Namespace, config: RunConfig, out_dir: Path) -> int:
    weights = _load_csv(args.weights, ndmin=2)
    inputs = _load_csv(args.inputs, ndmin=1).ravel()
    mode = Mode(args.mode)

    total_rows, cols = weights.shape
    if mode is Mode.EXPANSION and total_rows % 2:
        raise InvalidArgumentError("expansion mode splits the weight rows over two layers; need an even count")
    rows = total_rows // 2 if mode is Mode.EXPANSION else total_rows
    if inputs.shape[0] != total_rows:
        raise InvalidArgumentError(f"expected {total_rows} inputs, got {inputs.shape[0]}")

    # sliced weights take k adjacent columns, most significant first
    scheme = config.quant.scheme(config.device) if args.quantized else None
    if scheme is None:
        targets = weights_to_conductance(weights, config.device)
    else:
        sliced = quantize(weights, scheme)
        targets = sliced.conductances.reshape(total_rows, cols * scheme.cells_per_weight)
    physical_cols = targets.shape[1]

    base = config.fabric
    geometry = FabricGeometry(
        rows=rows,
        cols=physical_cols,
        layers=mode.layers,
        mode=mode,
        r_wire_per_cell=base.r_wire_per_cell,
        row_lead_cells=base.row_lead_cells,
        v_dd=base.v_dd,
        mirrored_layers=base.mirrored_layers,
    )
    fabric = Fabric.build(geometry, config.device, config.read_switch, config.write_switch)
    blocks = [targets[:rows], targets[rows:]] if mode is Mode.EXPANSION else [targets]

    write_re, read_re = _MVM_RE[mode]
    fabric.set_re(write_re)
    reports = [program(fabric, block, layer=layer) for layer, block in enumerate(blocks)]
    fabric.set_re(read_re)
    programmed = np.vstack([fabric.conductance_matrix(layer) for layer in range(len(blocks))])

    result = sense(fabric, inputs, config.adc)
    currents = result.column_currents
    codes = config.adc.quantize(currents)
    ideal = ideal_mvm(inputs, programmed)

    print(f"{'column':>6} {'current_A':>14} {'ideal_A':>14} {'code':>5}")
    for j, (current, expected, code) in enumerate(zip(currents, ideal, codes)):
        print(f"{j:>6} {current:>14.6e} {expected:>14.6e} {code:>5}")

    programming = MvmProgramming(
        mode=mode,
        quantized=scheme is not None,
        total_time=sum(report.total_time for report in reports),
        total_energy=sum(report.total_energy for report in reports),
        reports=reports,
    )
    print(
        f"programmed {sum(report.pulses for report in reports)} cell(s) in "
        f"{programming.total_time * 1e6:.3f} us using {programming.total_energy:.3e} J"
    )

    write_csv(
        out_dir / "mvm.currents.csv",
        ("column", "current_A", "ideal_A"),
        zip(range(physical_cols), currents, ideal),
    )
    write_csv(out_dir / "mvm.codes.csv", ("column", "code"), zip(range(physical_cols), codes))
    write_csv(
        out_dir / "mvm.conductances.csv",
        ("layer", "row", "column", "target_S", "achieved_S"),
        (
            (report.layer, i, j, blocks[report.layer][i, j], g)
            for report in reports
            for i, row in enumerate(report.achieved)
            for j, g in enumerate(row)
        ),
    )
    write_json(out_dir / "mvm.program.json", programming)
    if scheme is not None:
        k = scheme.cells_per_weight
        combined = reconstruct(currents.reshape(cols, k), scheme)
        combined_ideal = reconstruct(ideal.reshape(cols, k), scheme)
        write_csv(
            out_dir / "mvm.sliced.csv",
            ("column", "combined_A", "ideal_combined_A"),
            zip(range(cols), combined, combined_ideal),
        )
    atomic_write_text(out_dir / "mvm.netlist.txt", result.netlist.to_text())
    return 0


def _plan(args: argparse.Namespace, config: RunConfig, out_dir: Path) -> int:
    mode = Mode(args.mode)
    timeline = plan(mode, args.layers, config.timing)
    baseline = plan(Mode.PLANAR, args.layers, config.timing)
    print(f"{mode.value}: {args.layers} layer(s) in {timeline.total * 1e9:.3f} ns")
    if mode is Mode.DEEPNET:
        print(f"baseline: {baseline.total * 1e9:.3f} ns, speedup {speedup(timeline, baseline):.2%}")
    write_csv(out_dir / f"plan.{mode.value}.timeline.csv", TIMELINE_HEADER, timeline_csv(timeline))
    return 0


def run(argv: Sequence[str] | None = None) -> int:
    """Execute one command line and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        config, out_dir = _load_config(args)
        if args.command == "validate-config":
            validate_mode(config.fabric.mode_state())
            print("configuration ok")
            print(config.to_text(), end="")
            return 0

        validate_mode(config.fabric.mode_state())
        handlers = {"experiment": _experiment, "mvm": _mvm, "plan": _plan}
        status = handlers[args.command](args, config, out_dir)
        atomic_write_text(out_dir / EFFECTIVE_CONFIG, config.to_text())
        return status
    except CrossStackError as exc:
        logger.debug("command failed", exc_info=True)
        print(f"crosstack: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
