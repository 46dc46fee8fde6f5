# src/crosstack/fabric.py
from __future__ import annotations

"""Two-layer crossbar fabric: netlist construction and DC nodal solve.

Every row and column wire is cut into one resistive segment per cell pitch.
Driven row inputs, column outputs (held at virtual ground by the sense
amplifiers) and ground are fixed-potential nodes; every other node is an
unknown of a sparse nodal system ``G v = b``.

Node names follow one scheme throughout::

    in:L{layer}:R{row}            row driver
    row:L{layer}:R{row}:C{col}    row wire at a cell
    col:C{col}:P{position}        shared column wire at a row position
    out:C{col}                    column sense node (0 V)
    cell:L{layer}:R{row}:C{col}   memristor/transistor junction
    gnd                           ground

Both layers of a stacked fabric share their column wires: the cell at row
``i`` of either layer meets its column at position ``i``.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .cell import CellInstance, TransistorParams
from .device import DeviceInstance, DeviceParams, conductance, mirrored, nominal_device
from .errors import InvalidArgumentError, SolverError
from .modes import Mode, ModeState, default_re, validate_mode

logger = logging.getLogger(__name__)

SolveMethod = Literal["sparse", "dense"]

#: A solve counts as converged when its relative residual is below this.
CONVERGENCE_TOLERANCE = 1e-9


class FabricGeometry(BaseModel):
    """Array dimensions, wire resistance and operating mode.

    ``rows`` is counted per layer. ``row_lead_cells`` is the length, in cell
    pitches, of the wire between a row driver and the first cell.
    ``mirrored_layers`` says whether the upper active layer is fabricated
    upside down, which makes both layers switch the same way for the same
    row voltage.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    rows: int = 10
    cols: int = 10
    layers: int = 2
    r_wire_per_cell: float = 3.2
    mode: Mode = Mode.EXPANSION
    row_lead_cells: int = 1
    v_dd: float = 1.8
    mirrored_layers: bool = True

    @model_validator(mode="after")
    def _check_invariants(self) -> "FabricGeometry":
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"invariant rows, cols >= 1 violated ({self.rows}x{self.cols})")
        if self.layers not in (1, 2):
            raise ValueError(f"invariant layers in {{1, 2}} violated (layers={self.layers})")
        if self.layers != self.mode.layers:
            raise ValueError(
                f"invariant {self.mode.value} mode uses {self.mode.layers} layer(s) "
                f"violated (layers={self.layers})"
            )
        if self.r_wire_per_cell < 0:
            raise ValueError("invariant r_wire_per_cell >= 0 violated")
        if self.row_lead_cells < 0:
            raise ValueError("invariant row_lead_cells >= 0 violated")
        if self.v_dd <= 0:
            raise ValueError("invariant v_dd > 0 violated")
        return self

    @property
    def driven_rows(self) -> int:
        return self.layers * self.rows


def _wire_conductance(resistance: float) -> float:
    return math.inf if resistance == 0 else 1.0 / resistance


@dataclass(slots=True)
class Netlist:
    """Flat branch list of a fabric in one RE configuration.

    Branch ``k`` joins ``branch_a[k]`` to ``branch_b[k]`` with conductance
    ``branch_g[k]`` (``inf`` for an ideal short). Positive branch current
    flows from ``a`` to ``b``.
    """

    geometry: FabricGeometry
    re: tuple[bool, ...]
    node_names: list[str]
    branch_a: np.ndarray
    branch_b: np.ndarray
    branch_g: np.ndarray
    branch_kind: list[str]
    input_nodes: list[int]
    output_nodes: list[int]
    ground: int
    memristor_branches: np.ndarray
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def node(self, name: str) -> int:
        if not self._index:
            self._index.update((label, k) for k, label in enumerate(self.node_names))
        try:
            return self._index[name]
        except KeyError:
            raise InvalidArgumentError(f"no node named {name!r}") from None

    def to_text(self) -> str:
        """Plain-text branch list, one ``node_a node_b conductance kind`` per line."""
        lines = [f"# {len(self.node_names)} nodes, {len(self.branch_g)} branches"]
        for a, b, g, kind in zip(self.branch_a, self.branch_b, self.branch_g, self.branch_kind):
            lines.append(f"{self.node_names[a]} {self.node_names[b]} {float(g)!r} {kind}")
        return "\n".join(lines) + "\n"


class _NetlistBuilder:
    def __init__(self) -> None:
        self.names: list[str] = []
        self.a: list[int] = []
        self.b: list[int] = []
        self.g: list[float] = []
        self.kind: list[str] = []

    def node(self, name: str) -> int:
        self.names.append(name)
        return len(self.names) - 1

    def branch(self, a: int, b: int, g: float, kind: str) -> int:
        self.a.append(a)
        self.b.append(b)
        self.g.append(g)
        self.kind.append(kind)
        return len(self.g) - 1


def build_netlist(
    geometry: FabricGeometry,
    cells: Sequence[Sequence[Sequence[CellInstance]]],
    re: Sequence[bool],
) -> Netlist:
    """Expand *cells* (indexed ``[layer][row][col]``) into a netlist.

    Raises:
        InvalidArgumentError: *cells* does not match *geometry*.
        ModeViolationError: *re* breaks the mode's biasing rule.
    """
    levels = tuple(bool(level) for level in re)
    validate_mode(ModeState.from_re(geometry.mode, levels))
    if len(cells) != geometry.layers or any(
        len(layer) != geometry.rows or any(len(row) != geometry.cols for row in layer)
        for layer in cells
    ):
        raise InvalidArgumentError(
            f"cell grid does not match geometry "
            f"{geometry.layers}x{geometry.rows}x{geometry.cols}"
        )

    n, m = geometry.rows, geometry.cols
    g_wire = _wire_conductance(geometry.r_wire_per_cell)
    g_lead = _wire_conductance(geometry.r_wire_per_cell * geometry.row_lead_cells)

    net = _NetlistBuilder()
    ground = net.node("gnd")
    outputs = [net.node(f"out:C{j}") for j in range(m)]
    column = [[net.node(f"col:C{j}:P{p}") for p in range(n)] for j in range(m)]
    for j in range(m):
        for p in range(n - 1):
            net.branch(column[j][p], column[j][p + 1], g_wire, "wire")
        net.branch(column[j][n - 1], outputs[j], g_wire, "wire")

    inputs: list[int] = []
    memristors = np.empty((geometry.layers, n, m), dtype=np.int64)
    for layer, (layer_cells, read_enabled) in enumerate(zip(cells, levels)):
        for i in range(n):
            driver = net.node(f"in:L{layer}:R{i}")
            inputs.append(driver)
            previous = driver
            for j in range(m):
                row_node = net.node(f"row:L{layer}:R{i}:C{j}")
                net.branch(previous, row_node, g_lead if j == 0 else g_wire, "lead" if j == 0 else "wire")
                previous = row_node

                cell = layer_cells[i][j]
                junction = net.node(f"cell:L{layer}:R{i}:C{j}")
                memristors[layer, i, j] = net.branch(
                    row_node, junction, conductance(cell.device), "memristor"
                )
                net.branch(junction, column[j][i], cell.n1.switch_conductance(read_enabled), "n1")
                net.branch(junction, ground, cell.n2.switch_conductance(not read_enabled), "n2")

    logger.debug(
        "built netlist: %d nodes, %d branches (mode=%s, re=%s)",
        len(net.names),
        len(net.g),
        geometry.mode.value,
        levels,
    )
    return Netlist(
        geometry=geometry,
        re=levels,
        node_names=net.names,
        branch_a=np.asarray(net.a, dtype=np.int64),
        branch_b=np.asarray(net.b, dtype=np.int64),
        branch_g=np.asarray(net.g, dtype=float),
        branch_kind=net.kind,
        input_nodes=inputs,
        output_nodes=outputs,
        ground=ground,
        memristor_branches=memristors,
    )


@dataclass(slots=True)
class SolveResult:
    """Node voltages and terminal currents of one DC solve.

    ``column_currents[j]`` is the current delivered into the sense node of
    column ``j``; ``input_currents[k]`` is the current sourced by driver
    ``k`` (layer-major); ``device_currents[l, i, j]`` flows from row to
    junction through the memristor.
    """

    netlist: Netlist
    node_voltages: np.ndarray
    column_currents: np.ndarray
    input_currents: np.ndarray
    ground_current: float
    device_currents: np.ndarray
    residual_norm: float
    kcl_residual: float
    converged: bool

    def voltage(self, name: str) -> float:
        return float(self.node_voltages[self.netlist.node(name)])


def _into_group(
    target: int, group_a: np.ndarray, group_b: np.ndarray, currents: np.ndarray
) -> float:
    entering = (group_b == target) & (group_a != target)
    leaving = (group_a == target) & (group_b != target)
    return float(currents[entering].sum() - currents[leaving].sum())


def solve_dc(
    net: Netlist, v_inputs: Sequence[float] | np.ndarray, method: SolveMethod = "sparse"
) -> SolveResult:
    """Solve the DC operating point of *net* with row drivers at *v_inputs*.

    Ideal shorts merge their endpoints into one electrical node before the
    system is assembled.

    Raises:
        InvalidArgumentError: Wrong input length, an input beyond ``v_dd`` or
            an unknown *method*.
        SolverError: A floating subnetwork, an ideal short between two fixed
            terminals, or a singular system.
    """
    v_in = np.asarray(v_inputs, dtype=float).ravel()
    if v_in.shape[0] != len(net.input_nodes):
        raise InvalidArgumentError(
            f"expected {len(net.input_nodes)} input voltages, got {v_in.shape[0]}"
        )
    if not np.all(np.isfinite(v_in)) or np.any(np.abs(v_in) > net.geometry.v_dd):
        raise InvalidArgumentError(
            f"input voltages must be finite and within +/-v_dd={net.geometry.v_dd!r}"
        )
    if method not in ("sparse", "dense"):
        raise InvalidArgumentError(f"unknown solve method {method!r}")

    n_nodes = len(net.node_names)
    a, b, g = net.branch_a, net.branch_b, net.branch_g
    shorts = np.isinf(g)

    # merge ideal shorts into groups
    adjacency = coo_matrix(
        (np.ones(int(shorts.sum())), (a[shorts], b[shorts])), shape=(n_nodes, n_nodes)
    )
    n_groups, group = connected_components(adjacency, directed=False)

    fixed_nodes = np.array(
        [*net.input_nodes, *net.output_nodes, net.ground], dtype=np.int64
    )
    fixed_values = np.concatenate([v_in, np.zeros(len(net.output_nodes) + 1)])
    fixed_groups = group[fixed_nodes]
    unique_groups, counts = np.unique(fixed_groups, return_counts=True)
    if np.any(counts > 1):
        clash = unique_groups[counts > 1][0]
        names = [net.node_names[k] for k in fixed_nodes[fixed_groups == clash]]
        raise SolverError(f"ideal short between fixed terminals {names}", node=names[0])

    group_fixed = np.zeros(n_groups, dtype=bool)
    group_fixed[fixed_groups] = True
    group_voltage = np.zeros(n_groups)
    group_voltage[fixed_groups] = fixed_values

    unknown_groups = np.flatnonzero(~group_fixed)
    unknown_index = np.full(n_groups, -1, dtype=np.int64)
    unknown_index[unknown_groups] = np.arange(len(unknown_groups))

    group_a, group_b = group[a], group[b]
    active = ~shorts & (g > 0) & (group_a != group_b)
    ga, gb, gg = group_a[active], group_b[active], g[active]

    # every unknown group must reach a fixed potential through finite branches
    _, component = connected_components(
        coo_matrix((np.ones(len(gg)), (ga, gb)), shape=(n_groups, n_groups)),
        directed=False,
    )
    anchored = np.zeros(component.max() + 1, dtype=bool)
    anchored[component[group_fixed]] = True
    floating = unknown_groups[~anchored[component[unknown_groups]]]
    if len(floating):
        name = net.node_names[int(np.flatnonzero(group == floating[0])[0])]
        raise SolverError("floating node with no path to a fixed potential", node=name)

    size = len(unknown_groups)
    ua, ub = unknown_index[ga], unknown_index[gb]
    free_a, free_b = ua >= 0, ub >= 0
    both = free_a & free_b
    rows = np.concatenate([ua[free_a], ub[free_b], ua[both], ub[both]])
    cols = np.concatenate([ua[free_a], ub[free_b], ub[both], ua[both]])
    data = np.concatenate([gg[free_a], gg[free_b], -gg[both], -gg[both]])
    matrix = coo_matrix((data, (rows, cols)), shape=(size, size)).tocsc()

    rhs = np.zeros(size)
    only_a = free_a & ~free_b
    only_b = free_b & ~free_a
    np.add.at(rhs, ua[only_a], gg[only_a] * group_voltage[gb[only_a]])
    np.add.at(rhs, ub[only_b], gg[only_b] * group_voltage[ga[only_b]])

    if size:
        if method == "dense":
            try:
                solution = np.linalg.solve(matrix.toarray(), rhs)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"singular conductance matrix: {exc}") from exc
        else:
            solution = np.atleast_1d(spsolve(matrix, rhs))
        if not np.all(np.isfinite(solution)):
            raise SolverError("singular conductance matrix")
        residual = matrix @ solution - rhs
        scale = abs(matrix) @ np.abs(solution) + np.abs(rhs)
        kcl_residual = float(np.max(np.abs(residual)))
        residual_norm = kcl_residual / max(float(np.max(scale)), np.finfo(float).tiny)
        group_voltage[unknown_groups] = solution
    else:
        kcl_residual = residual_norm = 0.0

    node_voltages = group_voltage[group]
    finite_g = np.where(shorts, 0.0, g)
    currents = finite_g * (node_voltages[a] - node_voltages[b])

    column_currents = np.array(
        [_into_group(group[o], group_a, group_b, currents) for o in net.output_nodes]
    )
    input_currents = np.array(
        [-_into_group(group[k], group_a, group_b, currents) for k in net.input_nodes]
    )
    ground_current = _into_group(group[net.ground], group_a, group_b, currents)
    device_currents = currents[net.memristor_branches]

    converged = residual_norm < CONVERGENCE_TOLERANCE
    logger.debug(
        "solved %d unknowns (%s): relative residual %.3g", size, method, residual_norm
    )
    return SolveResult(
        netlist=net,
        node_voltages=node_voltages,
        column_currents=column_currents,
        input_currents=input_currents,
        ground_current=ground_current,
        device_currents=device_currents,
        residual_norm=residual_norm,
        kcl_residual=kcl_residual,
        converged=converged,
    )


def ideal_mvm(v: Sequence[float] | np.ndarray, conductances: np.ndarray) -> np.ndarray:
    """Wire-free column currents ``I_j = sum_i v_i * G_ij``."""
    volts = np.asarray(v, dtype=float).ravel()
    matrix = np.asarray(conductances, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != volts.shape[0]:
        raise InvalidArgumentError(
            f"cannot multiply {volts.shape[0]} inputs by a {matrix.shape} conductance matrix"
        )
    if np.any(matrix < 0):
        raise InvalidArgumentError("conductances must be non-negative")
    return volts @ matrix


@dataclass(frozen=True, slots=True)
class IrDropMetric:
    losses: np.ndarray
    worst: float
    worst_column: int


def ir_drop_metric(
    actual: SolveResult | Sequence[float] | np.ndarray,
    ideal: Sequence[float] | np.ndarray,
) -> IrDropMetric:
    """Fractional current loss per column, ``1 - actual / ideal``."""
    measured = actual.column_currents if isinstance(actual, SolveResult) else actual
    measured = np.asarray(measured, dtype=float).ravel()
    expected = np.asarray(ideal, dtype=float).ravel()
    if measured.shape != expected.shape:
        raise InvalidArgumentError(
            f"column count mismatch: {measured.shape[0]} vs {expected.shape[0]}"
        )
    if np.any(expected <= 0):
        raise InvalidArgumentError("ideal column currents must be positive")
    losses = 1.0 - measured / expected
    worst_column = int(np.argmax(losses))
    return IrDropMetric(losses=losses, worst=float(losses[worst_column]), worst_column=worst_column)


class Fabric:
    """Mutable cell grid with its current read-enable levels.

    Cells are indexed ``[layer][row][col]``. Solving builds a fresh netlist
    from the current devices, so programming between solves is visible.
    """

    def __init__(
        self,
        geometry: FabricGeometry,
        cells: Sequence[Sequence[Sequence[CellInstance]]],
        re: Sequence[bool] | None = None,
    ) -> None:
        self.geometry = geometry
        self._cells = [[list(row) for row in layer] for layer in cells]
        self._re: tuple[bool, ...] = ()
        self.set_re(default_re(geometry.mode) if re is None else re)

    @classmethod
    def build(
        cls,
        geometry: FabricGeometry,
        device_params: DeviceParams,
        read_switch: TransistorParams,
        write_switch: TransistorParams,
        *,
        devices: Sequence[DeviceInstance] | None = None,
        state: float = 0.0,
        re: Sequence[bool] | None = None,
    ) -> "Fabric":
        """Populate a fabric with nominal devices at *state*, or with *devices*.

        *devices* is flat and layer-major. Without mirrored layers, upper
        layer devices get the opposite polarity.
        """
        count = geometry.layers * geometry.rows * geometry.cols
        if devices is None:
            devices = [nominal_device(device_params, state) for _ in range(count)]
        elif len(devices) != count:
            raise InvalidArgumentError(f"expected {count} devices, got {len(devices)}")

        stream = iter(devices)
        cells = []
        for layer in range(geometry.layers):
            grid = []
            for i in range(geometry.rows):
                row = []
                for j in range(geometry.cols):
                    device = next(stream)
                    if layer and not geometry.mirrored_layers:
                        device = replace(device, params=mirrored(device.params))
                    row.append(CellInstance(device, read_switch, write_switch, i, j, layer))
                grid.append(row)
            cells.append(grid)
        return cls(geometry, cells, re)

    @property
    def re(self) -> tuple[bool, ...]:
        return self._re

    def set_re(self, re: Sequence[bool]) -> None:
        levels = tuple(bool(level) for level in re)
        validate_mode(ModeState.from_re(self.geometry.mode, levels))
        self._re = levels

    def cell(self, layer: int, row: int, col: int) -> CellInstance:
        return self._cells[layer][row][col]

    def device(self, layer: int, row: int, col: int) -> DeviceInstance:
        return self._cells[layer][row][col].device

    def set_device(self, layer: int, row: int, col: int, device: DeviceInstance) -> None:
        self._cells[layer][row][col] = replace(self._cells[layer][row][col], device=device)

    @property
    def cells(self) -> list[list[list[CellInstance]]]:
        return self._cells

    def conductance_matrix(self, layer: int) -> np.ndarray:
        return np.array(
            [[conductance(cell.device) for cell in row] for row in self._cells[layer]]
        )

    def netlist(self) -> Netlist:
        return build_netlist(self.geometry, self._cells, self._re)

    def solve(
        self, v_inputs: Sequence[float] | np.ndarray, method: SolveMethod = "sparse"
    ) -> SolveResult:
        return solve_dc(self.netlist(), v_inputs, method)
