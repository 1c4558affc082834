import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mspc_guard.channel import (
    DOS,
    INTEGRITY,
    TO_ACTUATOR,
    TO_CONTROLLER,
    AttackSpec,
    Channel,
    ChannelBank,
)
from mspc_guard.errors import InputFault

values = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


@st.composite
def timed_values(draw, min_size=1, max_size=60):
    """Nondecreasing times in hours paired with arbitrary values."""
    n = draw(st.integers(min_size, max_size))
    steps = draw(st.lists(st.floats(0, 2.0), min_size=n, max_size=n))
    times, t = [], 0.0
    for s in steps:
        t += s
        times.append(t)
    vals = draw(st.lists(values, min_size=n, max_size=n))
    return list(zip(times, vals))


class TestAttackSpec:
    def test_integrity_needs_value(self):
        with pytest.raises(InputFault):
            AttackSpec("u_a", TO_ACTUATOR, INTEGRITY, 10.0)

    def test_end_before_start_rejected(self):
        with pytest.raises(InputFault):
            AttackSpec("u_a", TO_ACTUATOR, DOS, 10.0, end_h=10.0)

    def test_negative_start_rejected(self):
        with pytest.raises(InputFault):
            AttackSpec("u_a", TO_ACTUATOR, DOS, -1.0)

    def test_unknown_kind_and_direction(self):
        with pytest.raises(InputFault):
            AttackSpec("u_a", TO_ACTUATOR, "replay", 1.0)
        with pytest.raises(InputFault):
            AttackSpec("u_a", "sideways", DOS, 1.0)

    def test_window_is_half_open(self):
        a = AttackSpec("u_a", TO_ACTUATOR, INTEGRITY, 10.0, value=0.0, end_h=12.0)
        assert not a.active(9.999)
        assert a.active(10.0)
        assert a.active(11.999)
        assert not a.active(12.0)

    def test_json_schema_round_trip(self):
        a = AttackSpec("flow_a", TO_CONTROLLER, INTEGRITY, 10.0, value=0.0, end_h=20.0)
        d = a.to_dict()
        assert set(d) == {"target", "direction", "kind", "value", "start_h", "end_h"}
        assert AttackSpec.from_dict(d) == a
        dos = AttackSpec("u_a", TO_ACTUATOR, DOS, 10.0)
        assert AttackSpec.from_dict(dos.to_dict()) == dos

    def test_from_dict_rejects_unknown_fields(self):
        with pytest.raises(InputFault):
            AttackSpec.from_dict({"target": "u_a", "direction": TO_ACTUATOR, "kind": DOS,
                                  "start_h": 1.0, "ramp": 2})


class TestChannel:
    def test_no_attack_is_identity(self):
        ch = Channel()
        assert ch.transmit(3.7, 0.0) == 3.7
        assert ch.transmit(3.7, 100.0) == 3.7

    def test_integrity_close_valve(self):
        ch = Channel(AttackSpec("u_a", TO_ACTUATOR, INTEGRITY, 10.0, value=0.0))
        assert ch.transmit(0.55, 9.0) == 0.55
        assert ch.transmit(0.55, 12.0) == 0.0

    def test_dos_holds_last_pre_attack_value(self):
        ch = Channel(AttackSpec("u_a", TO_ACTUATOR, DOS, 10.0))
        assert ch.transmit(0.50, 9.99) == 0.50
        assert ch.transmit(0.61, 10.01) == 0.50
        assert ch.transmit(0.99, 50.0) == 0.50
        assert ch.last_clean_value == 0.50

    def test_dos_without_history_passes_first_value(self):
        ch = Channel(AttackSpec("u_a", TO_ACTUATOR, DOS, 0.0))
        assert ch.transmit(0.4, 0.0) == 0.4
        assert ch.transmit(0.9, 1.0) == 0.4

    def test_identity_resumes_after_window(self):
        ch = Channel(AttackSpec("u_a", TO_ACTUATOR, INTEGRITY, 1.0, value=5.0, end_h=2.0))
        assert ch.transmit(1.0, 1.5) == 5.0
        assert ch.transmit(1.25, 2.0) == 1.25
        assert ch.last_clean_value == 1.25

    def test_time_must_not_decrease(self):
        ch = Channel()
        ch.transmit(1.0, 5.0)
        with pytest.raises(InputFault):
            ch.transmit(1.0, 4.0)

    @given(timed_values(), st.floats(0, 50), values)
    def test_integrity_property(self, seq, start, replacement):
        spec = AttackSpec("x", TO_CONTROLLER, INTEGRITY, start, value=replacement)
        ch = Channel(spec)
        for t, v in seq:
            out = ch.transmit(v, t)
            if t < start:
                assert out == v
            else:
                assert out == replacement

    @given(timed_values(), st.floats(0, 50))
    def test_dos_property(self, seq, start):
        ch = Channel(AttackSpec("x", TO_CONTROLLER, DOS, start))
        pre = [v for t, v in seq if t < start]
        outs = [(t, ch.transmit(v, t)) for t, v in seq]
        held = [o for t, o in outs if t >= start]
        if pre:
            assert all(o == pre[-1] for o in held)
        elif held:
            assert all(o == held[0] for o in held)
        assert [o for t, o in outs if t < start] == pre


class TestChannelBank:
    def test_attacks_are_direction_specific(self):
        bank = ChannelBank([AttackSpec("u_a", TO_CONTROLLER, INTEGRITY, 0.0, value=0.0)])
        assert bank.transmit("u_a", TO_ACTUATOR, 0.7, 1.0) == 0.7
        assert bank.transmit("u_a", TO_CONTROLLER, 0.7, 1.0) == 0.0

    def test_duplicate_attack_rejected(self):
        a = AttackSpec("u_a", TO_ACTUATOR, DOS, 1.0)
        with pytest.raises(InputFault):
            ChannelBank([a, a])

    def test_multiple_channels(self):
        bank = ChannelBank([
            AttackSpec("u_a", TO_ACTUATOR, DOS, 1.0),
            AttackSpec("flow_a", TO_CONTROLLER, INTEGRITY, 1.0, value=0.0),
        ])
        assert bank.attacked == {("u_a", TO_ACTUATOR), ("flow_a", TO_CONTROLLER)}
        bank.transmit("u_a", TO_ACTUATOR, 0.3, 0.5)
        assert bank.transmit("u_a", TO_ACTUATOR, 0.8, 1.5) == 0.3
        assert bank.transmit("flow_a", TO_CONTROLLER, 3.0, 1.5) == 0.0
        assert math.isclose(bank.transmit("level", TO_CONTROLLER, 1.5, 1.5), 1.5)
