# src/crosstack/cell.py
from __future__ import annotations

"""The 1M2T cell: one memristor and two access transistors.

The memristor sits between the row line and an internal node. Transistor N1
joins the internal node to the shared column line and conducts when the
cell's read-enable (RE) is high. Transistor N2 joins the internal node to
ground and conducts when RE is low, so a cell that is being written dumps
its current to ground and leaves only N1's off-state leakage on the column.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable

from pydantic import BaseModel, ConfigDict, model_validator

from .device import DeviceInstance, conductance
from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)


def calibrate_g_off(
    target_leak: float = 2.5e-12,
    v_write: float = 1.2,
    r_set: float = 10e3,
    r_on: float = 1e3,
) -> float:
    """Off conductance that leaks *target_leak* through N1 of a writing cell.

    In a set cell under write bias the internal node divides down to
    ``v_write * r_on / (r_set + r_on)``; the off transistor sees that, not
    the full write voltage.
    """
    if min(target_leak, v_write, r_set, r_on) <= 0:
        raise InvalidArgumentError("calibration inputs must all be positive")
    return target_leak / (v_write * r_on / (r_set + r_on))


CALIBRATED_G_OFF = calibrate_g_off()


class TransistorParams(BaseModel):
    """Access transistor as a two-state conductance.

    ``r_on = 0`` models an ideal closed switch.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    r_on: float = 1e3
    g_off: float = CALIBRATED_G_OFF
    w_over_l: float = 2.5

    @model_validator(mode="after")
    def _check_invariants(self) -> "TransistorParams":
        if self.r_on < 0 or self.g_off < 0:
            raise ValueError("invariant r_on >= 0 and g_off >= 0 violated")
        if self.g_off * self.r_on > 1e-6:
            raise ValueError(
                f"invariant g_off * r_on << 1 violated (g_off * r_on = {self.g_off * self.r_on!r})"
            )
        if self.w_over_l <= 0:
            raise ValueError("invariant w_over_l > 0 violated")
        return self

    @property
    def g_on(self) -> float:
        return math.inf if self.r_on == 0 else 1.0 / self.r_on

    def switch_conductance(self, closed: bool) -> float:
        return self.g_on if closed else self.g_off


@dataclass(frozen=True, slots=True)
class CellInstance:
    device: DeviceInstance
    n1: TransistorParams
    n2: TransistorParams
    row_index: int = 0
    col_index: int = 0
    layer_index: int = 0


@dataclass(frozen=True, slots=True)
class BranchCurrents:
    """Currents out of one cell, in amperes.

    ``i_row`` enters from the row line; ``i_col`` leaves into the column and
    ``i_gnd`` into ground. ``i_leak`` is whichever of the two flows through
    the transistor that is off.
    """

    i_row: float
    i_col: float
    i_gnd: float
    i_leak: float
    v_node: float


def branch_currents(
    cell: CellInstance,
    v_row: float,
    v_col: float,
    re_high: bool,
    v_dd: float = 1.8,
) -> BranchCurrents:
    """Solve the single internal node of *cell* for the given terminal voltages."""
    if abs(v_row) > v_dd or abs(v_col) > v_dd:
        raise InvalidArgumentError(
            f"terminal voltages ({v_row!r}, {v_col!r}) exceed the supply v_dd={v_dd!r}"
        )

    g_m = conductance(cell.device)
    g_1 = cell.n1.switch_conductance(re_high)
    g_2 = cell.n2.switch_conductance(not re_high)

    if math.isinf(g_1):
        v_node = v_col
    elif math.isinf(g_2):
        v_node = 0.0
    else:
        v_node = (g_m * v_row + g_1 * v_col) / (g_m + g_1 + g_2)

    i_row = g_m * (v_row - v_node)
    if math.isinf(g_1):
        i_gnd = g_2 * v_node
        i_col = i_row - i_gnd
    elif math.isinf(g_2):
        i_col = g_1 * (v_node - v_col)
        i_gnd = i_row - i_col
    else:
        i_col = g_1 * (v_node - v_col)
        i_gnd = g_2 * v_node

    i_leak = i_gnd if re_high else i_col
    return BranchCurrents(i_row=i_row, i_col=i_col, i_gnd=i_gnd, i_leak=i_leak, v_node=v_node)


def column_leakage(
    cells: Iterable[CellInstance], v_write: float, v_dd: float = 1.8
) -> float:
    """Summed N1 leakage into a grounded column while every cell is written."""
    total = 0.0
    count = 0
    for cell in cells:
        total += branch_currents(cell, v_write, 0.0, re_high=False, v_dd=v_dd).i_leak
        count += 1
    logger.debug("column leakage over %d cells: %g A", count, total)
    return total


def read_current(
    device: DeviceInstance,
    v_row: float,
    n1: TransistorParams,
    n2: TransistorParams,
    v_dd: float = 1.8,
) -> float:
    """Column current of one read-enabled cell into a virtual-ground column."""
    cell = CellInstance(device=device, n1=n1, n2=n2)
    return branch_currents(cell, v_row, 0.0, re_high=True, v_dd=v_dd).i_col
