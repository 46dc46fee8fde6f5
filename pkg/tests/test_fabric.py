# tests/test_fabric.py
from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from crosstack.cell import TransistorParams
from crosstack.device import DeviceParams, nominal_device, sample_devices
from crosstack.errors import InvalidArgumentError, ModeViolationError, SolverError
from crosstack.fabric import (
    Fabric,
    FabricGeometry,
    Netlist,
    build_netlist,
    ideal_mvm,
    ir_drop_metric,
    solve_dc,
)
from crosstack.modes import Mode


def _planar(rows: int, cols: int, **extra: object) -> FabricGeometry:
    return FabricGeometry(rows=rows, cols=cols, layers=1, mode=Mode.PLANAR, **extra)


def _random_fabric(
    geometry: FabricGeometry, params: DeviceParams, switch: TransistorParams, seed: int
) -> Fabric:
    count = geometry.layers * geometry.rows * geometry.cols
    rng = np.random.default_rng(seed)
    devices = [
        nominal_device(params, float(x)) for x in rng.uniform(0.0, 1.0, size=count)
    ]
    return Fabric.build(geometry, params, switch, switch, devices=devices)


def _dense_oracle(net: Netlist, v_inputs: np.ndarray) -> np.ndarray:
    """Full nodal analysis without any node merging; all branches finite."""
    size = len(net.node_names)
    matrix = np.zeros((size, size))
    for a, b, g in zip(net.branch_a, net.branch_b, net.branch_g):
        matrix[a, a] += g
        matrix[b, b] += g
        matrix[a, b] -= g
        matrix[b, a] -= g
    fixed = [*net.input_nodes, *net.output_nodes, net.ground]
    values = np.concatenate([v_inputs, np.zeros(len(net.output_nodes) + 1)])
    free = [k for k in range(size) if k not in set(fixed)]
    voltages = np.zeros(size)
    voltages[fixed] = values
    reduced = matrix[np.ix_(free, free)]
    rhs = -matrix[np.ix_(free, fixed)] @ values
    voltages[free] = np.linalg.solve(reduced, rhs)
    return voltages


def test_geometry_defaults_and_invariants() -> None:
    geometry = FabricGeometry()
    assert (geometry.rows, geometry.cols, geometry.layers) == (10, 10, 2)
    assert geometry.driven_rows == 20

    with pytest.raises(ValidationError, match="planar mode uses 1 layer"):
        FabricGeometry(mode=Mode.PLANAR)
    with pytest.raises(ValidationError, match="rows, cols >= 1"):
        FabricGeometry(rows=0)
    with pytest.raises(ValidationError, match="r_wire_per_cell >= 0"):
        FabricGeometry(r_wire_per_cell=-1.0)


def test_single_cell_matches_series_parallel_analysis(
    exact_params: DeviceParams, switch: TransistorParams
) -> None:
    r_wire = 50.0
    geometry = _planar(1, 1, r_wire_per_cell=r_wire)
    fabric = Fabric.build(geometry, exact_params, switch, switch, state=1.0)
    result = fabric.solve([0.3])

    g_m, g_1, g_2 = 1e-4, switch.g_on, switch.g_off
    g_in = 1.0 / (r_wire + 1.0 / g_m)
    g_out = 1.0 / (1.0 / g_1 + r_wire)
    v_junction = g_in * 0.3 / (g_in + g_out + g_2)

    assert result.voltage("cell:L0:R0:C0") == pytest.approx(v_junction, rel=1e-10)
    assert result.column_currents[0] == pytest.approx(g_out * v_junction, rel=1e-10)
    assert result.ground_current == pytest.approx(g_2 * v_junction, rel=1e-10)
    assert result.input_currents[0] == pytest.approx(
        result.column_currents[0] + result.ground_current, rel=1e-10
    )
    assert result.converged


@pytest.mark.parametrize("mode", [Mode.PLANAR, Mode.EXPANSION, Mode.DEEPNET])
def test_solver_matches_dense_nodal_oracle(
    exact_params: DeviceParams, switch: TransistorParams, mode: Mode
) -> None:
    geometry = FabricGeometry(rows=3, cols=4, layers=mode.layers, mode=mode, row_lead_cells=2)
    fabric = _random_fabric(geometry, exact_params, switch, seed=5)
    v_inputs = np.linspace(0.05, 0.35, geometry.driven_rows)

    net = fabric.netlist()
    expected = _dense_oracle(net, v_inputs)
    for method in ("sparse", "dense"):
        result = solve_dc(net, v_inputs, method=method)
        np.testing.assert_allclose(result.node_voltages, expected, rtol=1e-9, atol=1e-15)
        assert result.converged
        assert result.residual_norm < 1e-9


def test_terminal_currents_balance(params: DeviceParams, switch: TransistorParams) -> None:
    geometry = FabricGeometry(rows=4, cols=3)
    devices = sample_devices(params, geometry.driven_rows * geometry.cols, seed=2)
    fabric = Fabric.build(geometry, params, switch, switch, devices=devices)
    result = fabric.solve(np.full(geometry.driven_rows, 0.2))
    sourced = result.input_currents.sum()
    sunk = result.column_currents.sum() + result.ground_current
    assert sourced == pytest.approx(sunk, rel=1e-9)
    assert result.device_currents.shape == (2, 4, 3)


def test_ideal_wires_and_switches_reduce_to_ideal_product(
    exact_params: DeviceParams, ideal_switch: TransistorParams
) -> None:
    geometry = _planar(4, 3, r_wire_per_cell=0.0)
    fabric = _random_fabric(geometry, exact_params, ideal_switch, seed=9)
    v_inputs = np.array([0.1, 0.2, 0.0, 0.35])
    result = fabric.solve(v_inputs)
    expected = ideal_mvm(v_inputs, fabric.conductance_matrix(0))
    np.testing.assert_allclose(result.column_currents, expected, rtol=1e-12)
    assert result.residual_norm == 0.0


def test_expansion_equals_planar_of_twice_the_rows(
    exact_params: DeviceParams, ideal_switch: TransistorParams
) -> None:
    geometry = FabricGeometry(rows=3, cols=2, r_wire_per_cell=0.0)
    fabric = _random_fabric(geometry, exact_params, ideal_switch, seed=4)
    stacked = np.vstack([fabric.conductance_matrix(0), fabric.conductance_matrix(1)])
    v_inputs = np.array([0.1, 0.2, 0.3, 0.05, 0.15, 0.25])
    result = fabric.solve(v_inputs)
    np.testing.assert_allclose(result.column_currents, ideal_mvm(v_inputs, stacked), rtol=1e-12)


def test_expansion_loses_less_than_planar_of_equal_capacity(
    exact_params: DeviceParams, switch: TransistorParams
) -> None:
    planar = Fabric.build(_planar(20, 10), exact_params, switch, switch, state=1.0)
    stacked = Fabric.build(FabricGeometry(), exact_params, switch, switch, state=1.0)
    v_inputs = np.full(20, 0.3)

    def worst_loss(fabric: Fabric) -> float:
        g = np.vstack([fabric.conductance_matrix(k) for k in range(fabric.geometry.layers)])
        return ir_drop_metric(fabric.solve(v_inputs), ideal_mvm(v_inputs, g)).worst

    assert 0.0 < worst_loss(stacked) < worst_loss(planar)


def test_write_layer_contributes_only_leakage(
    exact_params: DeviceParams, switch: TransistorParams
) -> None:
    geometry = FabricGeometry(rows=2, cols=2, mode=Mode.DEEPNET, r_wire_per_cell=0.0)
    fabric = Fabric.build(geometry, exact_params, switch, switch, state=1.0)
    reading = fabric.solve([0.2, 0.2, 0.0, 0.0]).column_currents
    writing = fabric.solve([0.2, 0.2, 1.2, 1.2]).column_currents
    assert np.all(np.abs(writing - reading) < 1e-10)
    assert np.all(writing > reading)


def test_netlist_text_lists_every_branch(exact_params: DeviceParams, switch: TransistorParams) -> None:
    fabric = Fabric.build(_planar(1, 1), exact_params, switch, switch)
    lines = fabric.netlist().to_text().splitlines()
    assert lines[0] == "# 6 nodes, 5 branches"
    kinds = [line.split()[-1] for line in lines[1:]]
    assert sorted(kinds) == ["lead", "memristor", "n1", "n2", "wire"]
    assert "in:L0:R0 row:L0:R0:C0 0.3125 lead" in lines
    assert any(line.startswith("row:L0:R0:C0 cell:L0:R0:C0 ") for line in lines)


def test_netlist_node_lookup(exact_params: DeviceParams, switch: TransistorParams) -> None:
    net = Fabric.build(FabricGeometry(rows=2, cols=2), exact_params, switch, switch).netlist()
    assert net.node_names[net.node("gnd")] == "gnd"
    assert net.node_names[net.node("col:C1:P0")] == "col:C1:P0"
    with pytest.raises(InvalidArgumentError):
        net.node("row:L2:R0:C0")


def _hand_netlist(branches: list[tuple[int, int, float]], names: list[str]) -> Netlist:
    a, b, g = zip(*branches)
    return Netlist(
        geometry=_planar(1, 1),
        re=(True,),
        node_names=names,
        branch_a=np.array(a, dtype=np.int64),
        branch_b=np.array(b, dtype=np.int64),
        branch_g=np.array(g, dtype=float),
        branch_kind=["wire"] * len(g),
        input_nodes=[2],
        output_nodes=[1],
        ground=0,
        memristor_branches=np.zeros((0, 0, 0), dtype=np.int64),
    )


def test_floating_node_is_reported() -> None:
    net = _hand_netlist(
        [(2, 1, 1e-3), (3, 4, 1e-3), (3, 0, 0.0)],
        ["gnd", "out:C0", "in:L0:R0", "island", "island2"],
    )
    with pytest.raises(SolverError) as excinfo:
        solve_dc(net, [0.1])
    assert excinfo.value.node in ("island", "island2")
    assert "floating" in str(excinfo.value)


def test_short_between_fixed_terminals_is_reported() -> None:
    net = _hand_netlist(
        [(2, 3, 1e-3), (3, 1, float("inf")), (3, 0, float("inf"))],
        ["gnd", "out:C0", "in:L0:R0", "junction"],
    )
    with pytest.raises(SolverError, match="ideal short between fixed terminals"):
        solve_dc(net, [0.1])


def test_solve_rejects_bad_inputs(exact_params: DeviceParams, switch: TransistorParams) -> None:
    fabric = Fabric.build(_planar(2, 2), exact_params, switch, switch)
    with pytest.raises(InvalidArgumentError, match="expected 2 input voltages"):
        fabric.solve([0.1])
    with pytest.raises(InvalidArgumentError):
        fabric.solve([0.1, 2.0])
    with pytest.raises(InvalidArgumentError):
        fabric.solve([0.1, float("nan")])
    with pytest.raises(InvalidArgumentError, match="unknown solve method"):
        fabric.solve([0.1, 0.1], method="iterative")  # type: ignore[arg-type]


def test_zero_inputs_give_zero_currents(params: DeviceParams, switch: TransistorParams) -> None:
    fabric = Fabric.build(FabricGeometry(rows=3, cols=3), params, switch, switch, state=0.5)
    result = fabric.solve(np.zeros(6))
    assert np.all(result.column_currents == 0.0)
    assert np.all(result.node_voltages == 0.0)


def test_fabric_enforces_mode_rule(exact_params: DeviceParams, switch: TransistorParams) -> None:
    fabric = Fabric.build(FabricGeometry(rows=2, cols=2), exact_params, switch, switch)
    assert fabric.re == (True, True)
    fabric.set_re((False, False))
    with pytest.raises(ModeViolationError):
        fabric.set_re((True, False))
    assert fabric.re == (False, False)
    with pytest.raises(ModeViolationError):
        build_netlist(fabric.geometry, fabric.cells, (False, True))


def test_build_device_list_and_layer_polarity(params: DeviceParams, switch: TransistorParams) -> None:
    geometry = FabricGeometry(rows=2, cols=2)
    with pytest.raises(InvalidArgumentError, match="expected 8 devices"):
        Fabric.build(geometry, params, switch, switch, devices=[nominal_device(params)] * 3)

    same = Fabric.build(geometry, params, switch, switch)
    assert same.device(1, 0, 0).params.polarity == 1
    flipped = Fabric.build(
        geometry.model_copy(update={"mirrored_layers": False}), params, switch, switch
    )
    assert flipped.device(0, 0, 0).params.polarity == 1
    assert flipped.device(1, 1, 1).params.polarity == -1


def test_set_device_is_visible_to_the_next_solve(
    exact_params: DeviceParams, switch: TransistorParams
) -> None:
    fabric = Fabric.build(_planar(1, 2), exact_params, switch, switch, state=0.0)
    before = fabric.solve([0.2]).column_currents
    fabric.set_device(0, 0, 1, nominal_device(exact_params, 1.0))
    after = fabric.solve([0.2]).column_currents
    assert after[0] == pytest.approx(before[0], rel=1e-3)
    assert after[1] > 5 * before[1]
    assert fabric.conductance_matrix(0)[0, 1] == pytest.approx(1e-4)


def test_ideal_mvm_shape_and_sign_checks() -> None:
    np.testing.assert_allclose(ideal_mvm([1.0, 2.0], np.array([[1.0], [3.0]])), [7.0])
    with pytest.raises(InvalidArgumentError):
        ideal_mvm([1.0], np.ones((2, 2)))
    with pytest.raises(InvalidArgumentError):
        ideal_mvm([1.0], np.array([[-1.0]]))


def test_ir_drop_metric() -> None:
    metric = ir_drop_metric([0.9, 0.5, 1.0], [1.0, 1.0, 1.0])
    np.testing.assert_allclose(metric.losses, [0.1, 0.5, 0.0])
    assert metric.worst == pytest.approx(0.5)
    assert metric.worst_column == 1
    with pytest.raises(InvalidArgumentError):
        ir_drop_metric([1.0], [0.0])
    with pytest.raises(InvalidArgumentError):
        ir_drop_metric([1.0, 2.0], [1.0])


def test_solve_is_linear_in_inputs(params: DeviceParams, switch: TransistorParams) -> None:
    geometry = FabricGeometry(rows=4, cols=3)
    fabric = Fabric.build(
        geometry, params, switch, switch, devices=sample_devices(params, 24, seed=12)
    )
    rng = np.random.default_rng(12)
    v_a = rng.uniform(0.0, 0.3, size=8)
    v_b = rng.uniform(0.0, 0.3, size=8)
    combined = fabric.solve(0.5 * v_a + 1.5 * v_b).column_currents
    separate = 0.5 * fabric.solve(v_a).column_currents + 1.5 * fabric.solve(v_b).column_currents
    np.testing.assert_allclose(combined, separate, rtol=1e-9)


def test_expansion_doubles_current_of_identical_layers(
    exact_params: DeviceParams, ideal_switch: TransistorParams
) -> None:
    planar = Fabric.build(_planar(3, 3, r_wire_per_cell=0.0), exact_params, ideal_switch, ideal_switch, state=0.7)
    stacked = Fabric.build(
        FabricGeometry(rows=3, cols=3, r_wire_per_cell=0.0), exact_params, ideal_switch, ideal_switch, state=0.7
    )
    v_inputs = np.array([0.1, 0.2, 0.3])
    single = planar.solve(v_inputs).column_currents
    double = stacked.solve(np.concatenate([v_inputs, v_inputs])).column_currents
    np.testing.assert_allclose(double, 2.0 * single, rtol=1e-12)


def test_random_ideal_fabrics_match_ideal_product(
    exact_params: DeviceParams, ideal_switch: TransistorParams
) -> None:
    rng = np.random.default_rng(2024)
    for instance in range(100):
        rows, cols = int(rng.integers(1, 21)), int(rng.integers(1, 11))
        geometry = _planar(rows, cols, r_wire_per_cell=0.0)
        fabric = _random_fabric(geometry, exact_params, ideal_switch, seed=instance)
        v_inputs = rng.uniform(0.0, 0.3, size=rows)
        expected = ideal_mvm(v_inputs, fabric.conductance_matrix(0))
        np.testing.assert_allclose(fabric.solve(v_inputs).column_currents, expected, rtol=1e-9)


def test_column_currents_fall_as_wire_resistance_rises(
    exact_params: DeviceParams, switch: TransistorParams
) -> None:
    v_inputs = np.full(10, 0.3)
    currents = [
        Fabric.build(_planar(10, 10, r_wire_per_cell=r_wire), exact_params, switch, switch, state=1.0)
        .solve(v_inputs)
        .column_currents
        for r_wire in (0.0, 1.0, 3.2, 10.0, 30.0)
    ]
    for lower, higher in zip(currents, currents[1:]):
        assert np.all(higher <= lower * (1.0 + 1e-12))
        assert higher.sum() < lower.sum()
