"""Man-in-the-middle channels between the plant and its controllers.

Every variable crosses the network on a channel with a direction: sensors
travel ``to_controller`` and actuator commands travel ``to_actuator``. A
channel without an attack is the identity. An integrity attack replaces the
value with a constant inside its window; a DoS attack freezes the value at
the last sample transmitted before the attack started.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import InputFault

TO_CONTROLLER = "to_controller"
TO_ACTUATOR = "to_actuator"
DIRECTIONS = (TO_CONTROLLER, TO_ACTUATOR)

INTEGRITY = "integrity"
DOS = "dos"
KINDS = (INTEGRITY, DOS)


@dataclass(frozen=True)
class AttackSpec:
    """Manipulation of a single channel over one contiguous window.

    Times are in hours. The window is half-open, ``[start_h, end_h)``; an
    absent ``end_h`` keeps the attack active until the end of the run.
    """

    target: str
    direction: str
    kind: str
    start_h: float
    value: Optional[float] = None
    end_h: Optional[float] = None

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise InputFault(f"unknown direction {self.direction!r}")
        if self.kind not in KINDS:
            raise InputFault(f"unknown attack kind {self.kind!r}")
        if self.kind == INTEGRITY:
            if self.value is None or not math.isfinite(self.value):
                raise InputFault("integrity attack needs a finite replacement value")
        if not math.isfinite(self.start_h) or self.start_h < 0:
            raise InputFault("attack start must be finite and >= 0")
        if self.end_h is not None and not self.end_h > self.start_h:
            raise InputFault("attack end must be after its start")

    @property
    def channel_key(self):
        return (self.target, self.direction)

    def active(self, t_h):
        if t_h < self.start_h:
            return False
        return self.end_h is None or t_h < self.end_h

    def to_dict(self):
        d = {
            "target": self.target,
            "direction": self.direction,
            "kind": self.kind,
            "start_h": self.start_h,
        }
        if self.value is not None:
            d["value"] = self.value
        if self.end_h is not None:
            d["end_h"] = self.end_h
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"target", "direction", "kind", "value", "start_h", "end_h"}
        if unknown:
            raise InputFault(f"unknown attack fields: {sorted(unknown)}")
        try:
            return cls(
                target=str(d["target"]),
                direction=d["direction"],
                kind=d["kind"],
                start_h=float(d["start_h"]),
                value=None if d.get("value") is None else float(d["value"]),
                end_h=None if d.get("end_h") is None else float(d["end_h"]),
            )
        except KeyError as exc:
            raise InputFault(f"attack spec missing field {exc}") from None


@dataclass
class Channel:
    """One directed link. Holds the memory needed for DoS."""

    attack: Optional[AttackSpec] = None
    last_clean_value: Optional[float] = None
    _last_t: float = field(default=-math.inf, repr=False)

    def transmit(self, value, t_h):
        """Return what the receiver sees for ``value`` sent at hour ``t_h``."""
        if t_h < self._last_t:
            raise InputFault("channel time must be nondecreasing")
        self._last_t = t_h
        attack = self.attack
        if attack is None or not attack.active(t_h):
            self.last_clean_value = value
            return value
        if attack.kind == INTEGRITY:
            return attack.value
        # DoS before any clean sample: nothing was ever delivered, pass through
        if self.last_clean_value is None:
            self.last_clean_value = value
        return self.last_clean_value


class ChannelBank:
    """All channels of one run, keyed by ``(variable, direction)``.

    Channels are created lazily so that traffic on a variable/direction pair
    nobody attacks is a plain identity.
    """

    def __init__(self, attacks: Iterable[AttackSpec] = ()):
        self._channels = {}
        for attack in attacks:
            key = attack.channel_key
            if key in self._channels:
                raise InputFault(f"more than one attack on channel {key}")
            self._channels[key] = Channel(attack=attack)

    def channel(self, name, direction):
        key = (name, direction)
        ch = self._channels.get(key)
        if ch is None:
            ch = self._channels[key] = Channel()
        return ch

    def transmit(self, name, direction, value, t_h):
        return self.channel(name, direction).transmit(value, t_h)

    @property
    def attacked(self):
        return {k for k, ch in self._channels.items() if ch.attack is not None}
