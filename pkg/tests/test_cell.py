# tests/test_cell.py
from __future__ import annotations

import pytest
from pydantic import ValidationError

from crosstack.cell import (
    CALIBRATED_G_OFF,
    CellInstance,
    TransistorParams,
    branch_currents,
    calibrate_g_off,
    column_leakage,
    read_current,
)
from crosstack.device import DeviceParams, nominal_device
from crosstack.errors import InvalidArgumentError


def test_calibrated_off_conductance() -> None:
    assert CALIBRATED_G_OFF == pytest.approx(2.5e-12 / (1.2 * 1e3 / 11e3), rel=1e-15)
    assert CALIBRATED_G_OFF == pytest.approx(2.29e-11, rel=1e-3)
    with pytest.raises(InvalidArgumentError):
        calibrate_g_off(target_leak=0.0)


def test_transistor_invariants() -> None:
    with pytest.raises(ValidationError, match="g_off \\* r_on << 1"):
        TransistorParams(r_on=1e3, g_off=1e-3)
    with pytest.raises(ValidationError):
        TransistorParams(r_on=-1.0)


def test_read_current_of_reset_cell(exact_params: DeviceParams, switch: TransistorParams) -> None:
    current = read_current(nominal_device(exact_params, 0.0), 4e-3, switch, switch)
    assert current == pytest.approx(4e-3 / 101e3, rel=1e-6)
    assert current == pytest.approx(39.6e-9, rel=1e-3)


def test_write_biased_set_cell_leaks_calibrated_current(
    exact_params: DeviceParams, switch: TransistorParams
) -> None:
    cell = CellInstance(nominal_device(exact_params, 1.0), switch, switch)
    currents = branch_currents(cell, 1.2, 0.0, re_high=False)
    assert currents.i_leak == currents.i_col
    assert currents.i_leak == pytest.approx(2.5e-12, rel=1e-6)
    assert currents.v_node == pytest.approx(1.2 * 1e3 / 11e3, rel=1e-6)


@pytest.mark.parametrize("re_high", [True, False])
@pytest.mark.parametrize("v_row, v_col", [(1.2, 0.0), (0.3, 0.1), (-0.8, 0.05), (0.0, 0.0)])
def test_branch_currents_conserve_charge(
    exact_params: DeviceParams,
    switch: TransistorParams,
    re_high: bool,
    v_row: float,
    v_col: float,
) -> None:
    cell = CellInstance(nominal_device(exact_params, 0.6), switch, switch)
    c = branch_currents(cell, v_row, v_col, re_high)
    assert abs(c.i_row - c.i_col - c.i_gnd) < 1e-15
    assert c.i_leak == (c.i_gnd if re_high else c.i_col)


def test_ideal_switches(exact_params: DeviceParams, ideal_switch: TransistorParams) -> None:
    cell = CellInstance(nominal_device(exact_params, 1.0), ideal_switch, ideal_switch)
    read = branch_currents(cell, 0.2, 0.0, re_high=True)
    assert read.i_col == pytest.approx(0.2 * 1e-4)
    assert read.i_gnd == 0.0
    write = branch_currents(cell, 1.2, 0.0, re_high=False)
    assert write.i_leak == 0.0
    assert write.i_gnd == pytest.approx(1.2 * 1e-4)


def test_voltages_beyond_supply_rejected(exact_params: DeviceParams, switch: TransistorParams) -> None:
    cell = CellInstance(nominal_device(exact_params), switch, switch)
    with pytest.raises(InvalidArgumentError):
        branch_currents(cell, 2.0, 0.0, re_high=True)
    with pytest.raises(InvalidArgumentError):
        branch_currents(cell, 0.0, -1.9, re_high=True, v_dd=1.8)


def test_column_leakage_sums_cells(exact_params: DeviceParams, switch: TransistorParams) -> None:
    cells = [CellInstance(nominal_device(exact_params, 1.0), switch, switch, row_index=i) for i in range(10)]
    assert column_leakage(cells, 1.2) == pytest.approx(25e-12, rel=1e-6)
    assert column_leakage([], 1.2) == 0.0


@pytest.mark.parametrize("state", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("v_row", [0.2, 1.2])
def test_current_takes_one_path(
    exact_params: DeviceParams, switch: TransistorParams, state: float, v_row: float
) -> None:
    cell = CellInstance(nominal_device(exact_params, state), switch, switch)
    write = branch_currents(cell, v_row, 0.0, re_high=False)
    assert write.i_gnd >= 0.9999 * write.i_row
    read = branch_currents(cell, v_row, 0.0, re_high=True)
    assert read.i_col >= 0.9999 * read.i_row
