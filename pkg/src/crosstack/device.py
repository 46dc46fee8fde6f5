# src/crosstack/device.py
from __future__ import annotations

"""Single TiO2/TiO2-x memristor model.

A device is a pair of sampled static resistances plus an internal state
``x`` in ``[0, 1]`` (1 = fully set). Conductance interpolates linearly in
``x`` between the reset and set conductances; state moves only when the
applied voltage exceeds the threshold, at a rate calibrated so that the
nominal write voltage held for ``t_write_full`` switches the device
completely. Every operation here is a pure function of its inputs.
"""

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.stats import truncnorm

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

#: Gaussian resistance samples are truncated to nominal * (1 +/- this).
TRUNCATION = 0.5


class DeviceParams(BaseModel):
    """Static and switching parameters of one memristor type.

    ``sigma_set``/``sigma_reset`` are one relative standard deviation of the
    sampled resistance ("10 kOhm +/- 7%" reads as sigma = 0.07).
    ``polarity`` is the orientation of the active layer relative to the row
    input voltage.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    r_set: float = 10e3
    r_reset: float = 100e3
    sigma_set: float = 0.07
    sigma_reset: float = 0.10
    v_th: float = 0.4
    v_write: float = 1.2
    t_write_full: float = 250e-9
    polarity: Literal[1, -1] = 1

    @model_validator(mode="after")
    def _check_invariants(self) -> "DeviceParams":
        if not self.r_reset > self.r_set > 0:
            raise ValueError(
                f"invariant r_reset > r_set > 0 violated "
                f"(r_set={self.r_set!r}, r_reset={self.r_reset!r})"
            )
        for name in ("sigma_set", "sigma_reset"):
            sigma = getattr(self, name)
            if not 0 <= sigma < 0.5:
                raise ValueError(f"invariant 0 <= {name} < 0.5 violated ({name}={sigma!r})")
        if not self.v_write > self.v_th > 0:
            raise ValueError(
                f"invariant v_write > v_th > 0 violated "
                f"(v_th={self.v_th!r}, v_write={self.v_write!r})"
            )
        if not self.t_write_full > 0:
            raise ValueError(f"invariant t_write_full > 0 violated ({self.t_write_full!r})")
        return self


@dataclass(frozen=True, slots=True)
class DeviceInstance:
    """One memristor: sampled resistances, state ``x`` and its parameters."""

    sampled_r_set: float
    sampled_r_reset: float
    x: float
    params: DeviceParams

    def __post_init__(self) -> None:
        if not 0.0 <= self.x <= 1.0:
            raise InvalidArgumentError(f"device state x={self.x!r} outside [0, 1]")
        if not self.sampled_r_reset > self.sampled_r_set > 0:
            raise InvalidArgumentError(
                "sampled resistances must satisfy r_reset > r_set > 0 "
                f"(got {self.sampled_r_set!r}, {self.sampled_r_reset!r})"
            )

    @property
    def g_set(self) -> float:
        return 1.0 / self.sampled_r_set

    @property
    def g_reset(self) -> float:
        return 1.0 / self.sampled_r_reset


def nominal_device(params: DeviceParams, x: float = 0.0) -> DeviceInstance:
    """A device sitting exactly at the nominal resistances."""
    return DeviceInstance(params.r_set, params.r_reset, float(x), params)


def mirrored(params: DeviceParams) -> DeviceParams:
    """The same device type with its active layer flipped."""
    return params.model_copy(update={"polarity": -params.polarity})


def _truncated_normal(
    rng: np.random.Generator, nominal: float, sigma: float, count: int
) -> np.ndarray:
    if sigma == 0:
        return np.full(count, nominal, dtype=float)
    bound = TRUNCATION / sigma
    return truncnorm.rvs(
        -bound, bound, loc=nominal, scale=sigma * nominal, size=count, random_state=rng
    )


def sample_devices(params: DeviceParams, count: int, seed: int) -> list[DeviceInstance]:
    """Draw *count* devices with Gaussian resistance variation.

    Set and reset resistances are sampled independently, truncated to
    ``[0.5, 1.5] * nominal``, from a generator seeded with *seed*. When the
    two windows overlap, pairs with ``r_set >= r_reset`` are redrawn from the
    same generator. All devices start fully reset (``x = 0``).
    """
    if count < 1:
        raise InvalidArgumentError(f"count must be >= 1, got {count!r}")
    if seed < 0 or seed >= 2**64:
        raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {seed!r}")

    rng = np.random.default_rng(seed)
    r_set = _truncated_normal(rng, params.r_set, params.sigma_set, count)
    r_reset = _truncated_normal(rng, params.r_reset, params.sigma_reset, count)
    inverted = np.flatnonzero(r_reset <= r_set)
    if inverted.size:
        logger.debug("redrawing %d inverted resistance pairs", inverted.size)
    while inverted.size:
        r_set[inverted] = _truncated_normal(rng, params.r_set, params.sigma_set, inverted.size)
        r_reset[inverted] = _truncated_normal(rng, params.r_reset, params.sigma_reset, inverted.size)
        inverted = inverted[r_reset[inverted] <= r_set[inverted]]
    logger.debug("sampled %d devices (seed=%d)", count, seed)
    return [
        DeviceInstance(float(rs), float(rr), 0.0, params)
        for rs, rr in zip(r_set, r_reset)
    ]


def conductance(inst: DeviceInstance) -> float:
    """Conductance at the current state, linear in ``x`` between g_reset and g_set."""
    return inst.x * inst.g_set + (1.0 - inst.x) * inst.g_reset


def apply_pulse(inst: DeviceInstance, v: float, dt: float) -> DeviceInstance:
    """Return the device after holding voltage *v* across it for *dt* seconds.

    At or below threshold the state is retained. Above it ``x`` drifts toward
    1 when ``polarity * v > 0`` and toward 0 otherwise, at a rate
    proportional to the overdrive ``|v| - v_th``.
    """
    if dt < 0:
        raise InvalidArgumentError(f"pulse duration must be >= 0, got {dt!r}")
    params = inst.params
    if abs(v) <= params.v_th or dt == 0:
        return inst

    # overdrive fraction times time fraction; both are exactly 1 for a full write
    overdrive = (abs(v) - params.v_th) / (params.v_write - params.v_th)
    delta = overdrive * (dt / params.t_write_full)
    direction = 1.0 if params.polarity * v > 0 else -1.0
    x = min(1.0, max(0.0, inst.x + direction * delta))
    return replace(inst, x=x)


def program_pulse(inst: DeviceInstance, target_x: float) -> tuple[float, float]:
    """Full-write-voltage pulse ``(v, dt)`` that moves ``x`` to *target_x*."""
    if not 0.0 <= target_x <= 1.0:
        raise InvalidArgumentError(f"target state {target_x!r} outside [0, 1]")
    params = inst.params
    step = target_x - inst.x
    if step == 0:
        return 0.0, 0.0
    v = params.polarity * params.v_write * (1.0 if step > 0 else -1.0)
    return v, abs(step) * params.t_write_full


def iv_trace(
    inst: DeviceInstance, waveform: Sequence[tuple[float, float]] | np.ndarray
) -> np.ndarray:
    """Drive the device with ``(time, voltage)`` samples; return ``(v, i)`` rows.

    Between consecutive samples the later sample's voltage is applied for the
    elapsed time, then the current ``v * conductance`` is recorded.
    """
    samples = np.asarray(waveform, dtype=float).reshape(-1, 2)
    if len(samples) == 0:
        return np.empty((0, 2))
    times, volts = samples[:, 0], samples[:, 1]
    if np.any(np.diff(times) <= 0):
        raise InvalidArgumentError("waveform times must be strictly increasing")

    trace = np.empty((len(samples), 2))
    state = inst
    previous_t = times[0]
    for index, (t, v) in enumerate(zip(times, volts)):
        if index:
            state = apply_pulse(state, float(v), float(t - previous_t))
            previous_t = t
        trace[index] = (v, v * conductance(state))
    return trace


def sinusoid(
    amplitude: float, frequency: float, periods: int = 1, samples_per_period: int = 2000
) -> np.ndarray:
    """Sampled ``amplitude * sin(2 pi f t)``; zero crossings are exactly zero."""
    if frequency <= 0 or periods < 1:
        raise InvalidArgumentError("sinusoid needs frequency > 0 and periods >= 1")
    if samples_per_period < 4 or samples_per_period % 2:
        raise InvalidArgumentError("samples_per_period must be even and >= 4")
    count = periods * samples_per_period + 1
    t = np.linspace(0.0, periods / frequency, count)
    v = amplitude * np.sin(2.0 * np.pi * frequency * t)
    v[:: samples_per_period // 2] = 0.0
    return np.column_stack((t, v))


def _shoelace(points: np.ndarray) -> float:
    v, i = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(v, np.roll(i, -1)) - np.dot(np.roll(v, -1), i))


def loop_area(trace: np.ndarray) -> float:
    """Enclosed I-V area in A*V, summing each voltage-sign lobe separately.

    The two lobes of a pinched loop wind in opposite directions, so a single
    signed area over the whole period would cancel.
    """
    points = np.asarray(trace, dtype=float).reshape(-1, 2)
    signs = np.sign(points[:, 0])
    area = 0.0
    start = 0
    for stop in range(1, len(points) + 1):
        if stop == len(points) or signs[stop] != signs[start]:
            if signs[start] != 0 and stop - start >= 3:
                area += abs(_shoelace(points[start:stop]))
            start = stop
    return area


def dissipation(devices: Iterable[DeviceInstance], v: float | Sequence[float]) -> float:
    """Total static power ``sum(v**2 * g)`` in watts."""
    conductances = np.array([conductance(device) for device in devices], dtype=float)
    volts = np.broadcast_to(np.asarray(v, dtype=float), conductances.shape)
    return float(np.sum(volts**2 * conductances))
