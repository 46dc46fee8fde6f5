# src/crosstack/modes.py
from __future__ import annotations

"""Operating modes and their read-enable (RE) biasing rules."""

from enum import Enum

from pydantic import BaseModel, ConfigDict

from .errors import ModeViolationError


class Mode(str, Enum):
    PLANAR = "planar"
    EXPANSION = "expansion"
    DEEPNET = "deepnet"

    @property
    def layers(self) -> int:
        return 1 if self is Mode.PLANAR else 2


EXPANSION_RULE = "the read-enable signal of all cells must be identical"
DEEPNET_RULE = "the two arrays must have complementary RE signals"


class ModeState(BaseModel):
    """A mode together with the RE level of each physical layer.

    Construction never checks the biasing rule; :func:`validate_mode` does.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: Mode
    re_layer0: bool = True
    re_layer1: bool = True

    @property
    def re(self) -> tuple[bool, ...]:
        if self.mode is Mode.PLANAR:
            return (self.re_layer0,)
        return (self.re_layer0, self.re_layer1)

    @classmethod
    def from_re(cls, mode: Mode, re: tuple[bool, ...] | list[bool]) -> "ModeState":
        levels = tuple(bool(level) for level in re)
        if len(levels) != mode.layers:
            raise ModeViolationError(
                mode.value, levels, f"{mode.value} mode drives exactly {mode.layers} RE signal(s)"
            )
        return cls(mode=mode, re_layer0=levels[0], re_layer1=levels[-1])


def validate_mode(state: ModeState) -> bool:
    """Return True when *state* obeys its mode's RE rule, raise otherwise.

    Raises:
        ModeViolationError: Expansion with unequal RE levels, or DeepNet with
            equal ones.
    """
    if state.mode is Mode.EXPANSION and state.re_layer0 != state.re_layer1:
        raise ModeViolationError(state.mode.value, state.re, EXPANSION_RULE)
    if state.mode is Mode.DEEPNET and state.re_layer0 == state.re_layer1:
        raise ModeViolationError(state.mode.value, state.re, DEEPNET_RULE)
    return True


def default_re(mode: Mode) -> tuple[bool, ...]:
    """Read-biased RE levels for *mode*; DeepNet reads layer 0 and writes layer 1."""
    if mode is Mode.PLANAR:
        return (True,)
    if mode is Mode.EXPANSION:
        return (True, True)
    return (True, False)
