"""Blending-tank plant with cascaded PI control.

Two feeds (A and B) enter a tank and leave through an outlet valve. The tank
has two states, liquid level and mass fraction of reactant A. Five sensors
and three valves connect it to the controllers:

    sensors:   flow_a, flow_b, level, frac_a, flow_out
    actuators: u_a, u_b, u_out

A composition loop sets the setpoint of the feed-A flow loop, which drives
``u_a``. A level loop drives ``u_out``. ``u_b`` stays at a fixed opening.
Losing feed A (a disturbance) and forcing ``u_a`` shut (an attack) both make
the ``flow_a`` sensor collapse, which is the ambiguity the diagnosis layer
has to resolve.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .channel import TO_ACTUATOR, TO_CONTROLLER, AttackSpec, ChannelBank
from .errors import InputFault, SimulationFault

SENSOR_NAMES = ("flow_a", "flow_b", "level", "frac_a", "flow_out")
ACTUATOR_NAMES = ("u_a", "u_b", "u_out")
VARIABLE_NAMES = SENSOR_NAMES + ACTUATOR_NAMES

EPS_VOLUME = 1e-6  # m^3

FEED_A_LOSS = "FeedALoss"


@dataclass(frozen=True)
class PlantParams:
    """Physical constants. Flows in m^3/h, level in m, step in seconds.

    ``sensor_noise_sigma`` holds one standard deviation per sensor as a
    fraction of that sensor's value in ``nominal_sensors``.
    """

    tank_area: float = 2.0
    k_feed_a: float = 4.0
    k_feed_b: float = 4.0
    k_out: float = 6.0
    sensor_noise_sigma: tuple = (0.01, 0.01, 0.01, 0.01, 0.01)
    nominal_sensors: tuple = (3.0, 2.0, 1.5, 0.6, 5.0)
    step_size: float = 5.0
    supply_fluctuation: float = 0.006
    outlet_fluctuation: float = 0.008
    fluctuation_tau: float = 600.0

    def __post_init__(self):
        for name in ("tank_area", "k_feed_a", "k_feed_b", "k_out", "step_size"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InputFault(f"{name} must be finite and > 0, got {value}")
        object.__setattr__(self, "sensor_noise_sigma", tuple(float(s) for s in self.sensor_noise_sigma))
        object.__setattr__(self, "nominal_sensors", tuple(float(s) for s in self.nominal_sensors))
        if len(self.sensor_noise_sigma) != len(SENSOR_NAMES):
            raise InputFault("sensor_noise_sigma needs one entry per sensor")
        if len(self.nominal_sensors) != len(SENSOR_NAMES):
            raise InputFault("nominal_sensors needs one entry per sensor")
        if any(not (s >= 0) for s in self.sensor_noise_sigma):
            raise InputFault("sensor_noise_sigma entries must be >= 0")
        if not (self.supply_fluctuation >= 0 and self.outlet_fluctuation >= 0):
            raise InputFault("fluctuation levels must be >= 0")
        if not self.fluctuation_tau > 0:
            raise InputFault("fluctuation_tau must be > 0")

    @property
    def noise_scale(self):
        """Absolute noise standard deviation per sensor."""
        return tuple(s * abs(n) for s, n in zip(self.sensor_noise_sigma, self.nominal_sensors))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class PlantState:
    """Tank state plus the two slow supply fluctuations.

    ``feed_avail_a`` is the disturbance handle (1 = feed A fully available).
    ``supply_dev`` and ``outlet_dev`` are relative deviations of the feed-A
    supply pressure and of the outlet back-pressure; they follow a
    first-order autoregressive process and give the actuators something to
    regulate in normal operation.
    """

    level: float = 1.5
    frac_a: float = 0.6
    feed_avail_a: float = 1.0
    supply_dev: float = 0.0
    outlet_dev: float = 0.0

    def __post_init__(self):
        if not self.level >= 0:
            raise InputFault("level must be >= 0")
        if not 0 <= self.frac_a <= 1:
            raise InputFault("frac_a must lie in [0, 1]")
        if not 0 <= self.feed_avail_a <= 1:
            raise InputFault("feed_avail_a must lie in [0, 1]")


def _advance(level, frac_a, avail_a, u_a, u_b, u_out, out_gain, params):
    """Noise-free Euler step on plain floats.

    ``avail_a`` is the effective feed-A availability and ``out_gain`` the
    effective outlet gain factor. Returns ``(level, frac_a, flow_a, flow_b,
    flow_out)`` with flows evaluated at the start of the step.
    """
    dt_h = params.step_size / 3600.0
    flow_a = params.k_feed_a * u_a * avail_a
    flow_b = params.k_feed_b * u_b
    flow_out = params.k_out * out_gain * u_out * math.sqrt(level if level > 0.0 else 0.0)
    volume = params.tank_area * level
    new_level = level + (flow_a + flow_b - flow_out) * dt_h / params.tank_area
    new_frac = frac_a + (flow_a * (1.0 - frac_a) - flow_b * frac_a) * dt_h / (
        volume if volume > EPS_VOLUME else EPS_VOLUME
    )
    if new_level < 0.0:
        new_level = 0.0
    if new_frac < 0.0:
        new_frac = 0.0
    elif new_frac > 1.0:
        new_frac = 1.0
    return new_level, new_frac, flow_a, flow_b, flow_out


def _ar1(params):
    phi = math.exp(-params.step_size / params.fluctuation_tau)
    return phi, math.sqrt(1.0 - phi * phi)


def plant_step(state, applied_actuators, params, noise_draws=None):
    """Advance the plant by one step under the applied valve openings.

    Parameters
    ----------
    state : PlantState
    applied_actuators : sequence of 3 floats in [0, 1]
        Openings of ``u_a``, ``u_b`` and ``u_out`` as the valves see them.
    params : PlantParams
    noise_draws : sequence of 5 or 7 floats, optional
        Standard-normal draws: one per sensor, then optionally one each for
        the supply and outlet fluctuations. ``None`` means noise-free and
        frozen fluctuations.

    Returns
    -------
    (PlantState, tuple)
        New state and the five true sensor readings
        ``(flow_a, flow_b, level, frac_a, flow_out)``.
    """
    u_a, u_b, u_out = (float(u) for u in applied_actuators)
    for u in (u_a, u_b, u_out):
        if not 0.0 <= u <= 1.0:
            raise InputFault(f"valve opening {u} outside [0, 1]")
    level, frac_a, flow_a, flow_b, flow_out = _advance(
        state.level, state.frac_a, state.feed_avail_a * (1.0 + state.supply_dev),
        u_a, u_b, u_out, 1.0 + state.outlet_dev, params,
    )
    if not (math.isfinite(level) and math.isfinite(frac_a)):
        raise SimulationFault("non-finite plant state")
    sensors = [flow_a, flow_b, level, frac_a, flow_out]
    supply_dev, outlet_dev = state.supply_dev, state.outlet_dev
    if noise_draws is not None:
        noise_draws = list(noise_draws)
        for i, (z, s) in enumerate(zip(noise_draws[:5], params.noise_scale)):
            sensors[i] += s * z
        if len(noise_draws) >= 7:
            phi, gain = _ar1(params)
            supply_dev = phi * supply_dev + gain * params.supply_fluctuation * noise_draws[5]
            outlet_dev = phi * outlet_dev + gain * params.outlet_fluctuation * noise_draws[6]
    new_state = PlantState(level, frac_a, state.feed_avail_a, supply_dev, outlet_dev)
    return new_state, tuple(sensors)


@dataclass
class PiController:
    """Positional PI law with conditional-integration anti-windup.

    ``out = clamp(bias + kp * (e + integral_state / ti))`` where ``e`` is
    ``setpoint - measurement`` (or its negative when ``reverse_acting``).
    While the output sits on a clamp and the error pushes further out, the
    integral stops growing.
    With ``filter_tau > 0`` the measurement first passes a first-order
    low-pass filter with that time constant (s).
    """

    kp: float
    ti: float
    setpoint: float
    bias: float = 0.0
    output_clamp: tuple = (0.0, 1.0)
    reverse_acting: bool = False
    filter_tau: float = 0.0
    integral_state: float = 0.0
    filter_state: Optional[float] = None

    def __post_init__(self):
        if not (self.kp > 0 and self.ti > 0):
            raise InputFault("PI gains kp and ti must be > 0")

    def update(self, measurement, dt):
        if self.filter_tau > 0.0:
            if self.filter_state is None:
                self.filter_state = measurement
            else:
                self.filter_state += (measurement - self.filter_state) * dt / (self.filter_tau + dt)
            measurement = self.filter_state
        e = self.setpoint - measurement
        if self.reverse_acting:
            e = -e
        lo, hi = self.output_clamp
        integral = self.integral_state + e * dt
        out = self.bias + self.kp * (e + integral / self.ti)
        if out > hi and e > 0:
            # integrate only up to the value that puts the output on the clamp
            needed = ((hi - self.bias) / self.kp - e) * self.ti
            integral = max(self.integral_state, min(integral, needed))
        elif out < lo and e < 0:
            needed = ((lo - self.bias) / self.kp - e) * self.ti
            integral = min(self.integral_state, max(integral, needed))
        out = self.bias + self.kp * (e + integral / self.ti)
        out = hi if out > hi else (lo if out < lo else out)
        self.integral_state = integral
        return out


@dataclass
class ControlLoops:
    """The three loops of the plant plus the fixed feed-B opening."""

    composition: PiController
    feed_a: PiController
    level: PiController
    u_b: float = 0.5


def default_loops(params=None):
    """Loops tuned for the default operating point of :class:`PlantParams`."""
    params = params or PlantParams()
    flow_a0, flow_b0, level0, frac0, flow_out0 = params.nominal_sensors
    u_a0 = flow_a0 / params.k_feed_a
    u_b0 = flow_b0 / params.k_feed_b
    u_out0 = flow_out0 / (params.k_out * math.sqrt(level0))
    return ControlLoops(
        composition=PiController(
            kp=2.0, ti=1800.0, setpoint=frac0, bias=flow_a0,
            output_clamp=(0.0, params.k_feed_a),
        ),
        feed_a=PiController(kp=0.2 / params.k_feed_a, ti=10.0, setpoint=flow_a0, bias=u_a0),
        # the filter starts at the setpoint since the plant starts in steady state
        level=PiController(kp=0.4, ti=1800.0, setpoint=level0, bias=u_out0, reverse_acting=True,
                           filter_tau=300.0, filter_state=level0),
        u_b=u_b0,
    )


def controller_step(received_sensors, loops, step_size):
    """Compute valve commands from the sensor values the controller received.

    Mutates the integral state of ``loops`` and returns
    ``(commands, loops)`` with ``commands = (u_a, u_b, u_out)``.
    """
    flow_a, _flow_b, level, frac_a, _flow_out = received_sensors
    loops.feed_a.setpoint = loops.composition.update(frac_a, step_size)
    u_a = loops.feed_a.update(flow_a, step_size)
    u_out = loops.level.update(level, step_size)
    return (u_a, loops.u_b, u_out), loops


@dataclass(frozen=True)
class DisturbanceSpec:
    kind: str = FEED_A_LOSS
    magnitude: float = 0.0
    start: float = 0.0  # h

    def __post_init__(self):
        if self.kind != FEED_A_LOSS:
            raise InputFault(f"unknown disturbance kind {self.kind!r}")
        if not 0 <= self.magnitude < 1:
            raise InputFault("disturbance magnitude must lie in [0, 1)")
        if not self.start >= 0:
            raise InputFault("disturbance start must be >= 0")

    def to_dict(self):
        return {"kind": self.kind, "magnitude": self.magnitude, "start": self.start}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d.get("kind", FEED_A_LOSS), magnitude=float(d["magnitude"]), start=float(d["start"]))


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float = 24.0  # h
    seed: int = 0
    disturbances: tuple = ()
    attacks: tuple = ()
    onset: float = 10.0  # h

    def __post_init__(self):
        object.__setattr__(self, "disturbances", tuple(self.disturbances))
        object.__setattr__(self, "attacks", tuple(self.attacks))
        if not self.duration > 0:
            raise InputFault("duration must be > 0")
        if not self.onset < self.duration:
            raise InputFault("onset must be before the end of the run")

    def to_dict(self):
        return {
            "duration": self.duration,
            "seed": self.seed,
            "onset": self.onset,
            "disturbances": [d.to_dict() for d in self.disturbances],
            "attacks": [a.to_dict() for a in self.attacks],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            duration=float(d.get("duration", 24.0)),
            seed=int(d.get("seed", 0)),
            onset=float(d.get("onset", 10.0)),
            disturbances=tuple(DisturbanceSpec.from_dict(x) for x in d.get("disturbances", ())),
            attacks=tuple(AttackSpec.from_dict(x) for x in d.get("attacks", ())),
        )


@dataclass(frozen=True)
class RunRecord:
    """Both views of one run. Arrays are read-only.

    ``controller_view`` holds the sensor values the controllers received and
    the commands they sent; ``process_view`` holds the true sensor values and
    the openings the valves actually applied.
    """

    times: np.ndarray
    controller_view: np.ndarray
    process_view: np.ndarray
    variable_names: tuple = VARIABLE_NAMES
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.controller_view.shape != self.process_view.shape:
            raise InputFault("views must have identical shape")
        if self.controller_view.shape != (len(self.times), len(self.variable_names)):
            raise InputFault("view shape does not match times/variable names")
        for arr in (self.times, self.controller_view, self.process_view):
            arr.flags.writeable = False

    @property
    def n_steps(self):
        return len(self.times)

    def view(self, name):
        if name in ("controller", "c"):
            return self.controller_view
        if name in ("process", "p"):
            return self.process_view
        raise InputFault(f"unknown view {name!r}")


def _check_attack_targets(attacks):
    for a in attacks:
        if a.direction == TO_CONTROLLER and a.target not in SENSOR_NAMES:
            raise InputFault(f"{a.target!r} is not a sensor channel")
        if a.direction == TO_ACTUATOR and a.target not in ACTUATOR_NAMES:
            raise InputFault(f"{a.target!r} is not an actuator channel")


def simulate_run(config, params=None, loops=None, initial_state=None):
    """Run the closed loop and record both views at every step.

    Each step: true sensors cross the sensor channels, the controller
    computes commands, the commands cross the actuator channels, the row is
    recorded, then the plant advances under the applied openings. The
    arithmetic is the same as :func:`plant_step` and :func:`controller_step`,
    unrolled on plain floats for speed.
    """
    params = params or PlantParams()
    loops = copy.deepcopy(loops) if loops is not None else default_loops(params)
    state = initial_state or PlantState(
        level=params.nominal_sensors[2], frac_a=params.nominal_sensors[3]
    )
    _check_attack_targets(config.attacks)
    bank = ChannelBank(config.attacks)
    sensor_channels = [bank.channel(n, TO_CONTROLLER) for n in SENSOR_NAMES]
    actuator_channels = [bank.channel(n, TO_ACTUATOR) for n in ACTUATOR_NAMES]

    h = params.step_size
    n_steps = int(round(config.duration * 3600.0 / h))
    if n_steps < 1:
        raise InputFault("run shorter than one step")
    rng = np.random.default_rng(config.seed)
    draws = rng.standard_normal((n_steps, len(SENSOR_NAMES) + 2))
    sensor_noise = (draws[:, :5] * np.asarray(params.noise_scale)).tolist()
    phi, gain = _ar1(params)
    supply_kick = (draws[:, 5] * gain * params.supply_fluctuation).tolist()
    outlet_kick = (draws[:, 6] * gain * params.outlet_fluctuation).tolist()
    disturbances = sorted(config.disturbances, key=lambda d: d.start)

    times = np.arange(n_steps) * h
    ctrl = np.empty((n_steps, len(VARIABLE_NAMES)))
    proc = np.empty((n_steps, len(VARIABLE_NAMES)))

    level, frac_a, avail = state.level, state.frac_a, state.feed_avail_a
    sup, out = state.supply_dev, state.outlet_dev
    # sensors for step 0: plant at rest under the loops' nominal openings
    u_prev = (loops.feed_a.bias, loops.u_b, loops.level.bias)
    _, _, flow_a, flow_b, flow_out = _advance(
        level, frac_a, avail * (1.0 + sup), *u_prev, 1.0 + out, params
    )
    nz = sensor_noise[0]
    true = [flow_a + nz[0], flow_b + nz[1], level + nz[2], frac_a + nz[3], flow_out + nz[4]]

    comp, feed, lev = loops.composition, loops.feed_a, loops.level
    u_b = loops.u_b
    d_idx = 0
    for k in range(n_steps):
        t_h = times[k] / 3600.0
        while d_idx < len(disturbances) and disturbances[d_idx].start <= t_h:
            avail = disturbances[d_idx].magnitude
            d_idx += 1
        received = [ch.transmit(v, t_h) for ch, v in zip(sensor_channels, true)]
        feed.setpoint = comp.update(received[3], h)
        commanded = (feed.update(received[0], h), u_b, lev.update(received[2], h))
        applied = [ch.transmit(v, t_h) for ch, v in zip(actuator_channels, commanded)]
        # valves saturate whatever they are told
        applied = [0.0 if u < 0.0 else (1.0 if u > 1.0 else u) for u in applied]
        ctrl[k, :5] = received
        ctrl[k, 5:] = commanded
        proc[k, :5] = true
        proc[k, 5:] = applied
        level, frac_a, flow_a, flow_b, flow_out = _advance(
            level, frac_a, avail * (1.0 + sup), *applied, 1.0 + out, params
        )
        if not (math.isfinite(level) and math.isfinite(frac_a)):
            raise SimulationFault("non-finite plant state", step=k)
        sup = phi * sup + supply_kick[k]
        out = phi * out + outlet_kick[k]
        if k + 1 < n_steps:
            nz = sensor_noise[k + 1]
            true = [flow_a + nz[0], flow_b + nz[1], level + nz[2], frac_a + nz[3], flow_out + nz[4]]

    meta = {
        "scenario": config.to_dict(),
        "seed": config.seed,
        "onset_h": config.onset,
        "params": params.to_dict(),
    }
    return RunRecord(times=times, controller_view=ctrl, process_view=proc, meta=meta)
