import math

import pytest
from hypothesis import given, settings, strategies as st

from seedsim.errors import NoSource, SequenceViolation
from seedsim.power import (
    BatteryString, DisableLatch, IdealDiodeChannel, PowerConfig, PowerSystem,
    StateTrace, V_BAT1, V_BAT2, V_RXSM, diode_loss, radio_silence_sequence,
    select_sources, step_battery,
)


# -------------------------------------------------------------- source OR-ing

def test_external_supply_dominates():
    latches = DisableLatch()
    assert select_sources(8.40, 8.40, 28.0, latches) == (V_RXSM,)


def test_batteries_share_within_hysteresis():
    latches = DisableLatch()
    # post-ejection: 10 mV apart, inside the 20 mV window
    assert select_sources(8.40, 8.39, 0.0, latches) == (V_BAT1, V_BAT2)


def test_battery_outside_hysteresis_excluded():
    latches = DisableLatch()
    assert select_sources(8.4, 8.0, 0.0, latches) == (V_BAT1,)


def test_all_disabled_is_no_source():
    latches = DisableLatch()
    latches.pulse(True, True)
    with pytest.raises(NoSource):
        select_sources(8.4, 8.4, 0.0, latches)


def test_below_minimum_voltage_is_no_source():
    latches = DisableLatch()
    with pytest.raises(NoSource):
        select_sources(5.9, 5.5, 0.0, latches)


def test_negative_voltage_rejected():
    with pytest.raises(ValueError):
        select_sources(-0.1, 8.4, 0.0, DisableLatch())


@given(v1=st.floats(0, 40), v2=st.floats(0, 40), vr=st.floats(0, 40))
def test_max_enabled_source_always_conducts(v1, v2, vr):
    latches = DisableLatch()
    try:
        conducting = select_sources(v1, v2, vr, latches)
    except NoSource:
        assert max(v1, v2, vr) < 6.0
        return
    voltages = {V_BAT1: v1, V_BAT2: v2, V_RXSM: vr}
    vmax = max(voltages.values())
    assert all(voltages[name] >= vmax - 0.020 for name in conducting)
    assert any(voltages[name] == vmax for name in conducting)


# ------------------------------------------------------------ dissipation law

def test_diode_loss_zero_current():
    assert diode_loss("schottky", 0.0) == 0.0
    assert diode_loss("ideal-mosfet", 0.0) == 0.0


def test_diode_loss_at_2A():
    assert diode_loss("schottky", 2.0) == pytest.approx(0.8, rel=1e-12)
    assert diode_loss("ideal-mosfet", 2.0) == pytest.approx(0.04, rel=1e-12)


def test_diode_loss_at_5A_peak():
    assert diode_loss("schottky", 5.0) == pytest.approx(2.0, rel=1e-12)
    assert diode_loss("ideal-mosfet", 5.0) == pytest.approx(0.25, rel=1e-12)


# -------------------------------------------------------------- battery model

def test_step_battery_zero_current_no_change():
    s = BatteryString()
    s2, warnings = step_battery(s, 0.0, 10.0)
    assert s2.soc == s.soc and warnings == []


def test_full_discharge_by_coulomb_counting():
    s = BatteryString(capacity_ah=2.2, soc=1.0)
    s2, _ = step_battery(s, 2.2, 3600.0)
    assert s2.soc == pytest.approx(0.0, abs=1e-12)


def test_terminal_voltage_near_full_matches_cell_rating():
    # 3 cells x 2.8 V at the rated 250 mA reference current
    s = BatteryString(soc=0.98, internal_resistance=0.090)
    assert s.terminal_voltage(0.25) == pytest.approx(8.4, abs=0.05)


def test_current_limit_warnings():
    s = BatteryString()
    _, warn_cont = step_battery(s, 3.0, 1.0)
    assert any("continuous" in w for w in warn_cont)
    _, warn_peak = step_battery(s, 6.0, 1.0)
    assert any("peak" in w for w in warn_peak)


@given(st.floats(0.0, 5.0), st.floats(0.001, 100.0))
def test_terminal_voltage_never_increases_under_discharge(i, dt):
    s = BatteryString(soc=0.8)
    before = s.terminal_voltage(i)
    s2, _ = step_battery(s, i, dt)
    assert s2.terminal_voltage(i) <= before + 1e-12


# --------------------------------------------------------------- diode channel

def test_channel_never_conducts_when_latch_disabled():
    channel = IdealDiodeChannel(input=V_BAT1, latch_disabled=True)
    with pytest.raises(SequenceViolation):
        channel.set_conducting(True)
    assert not channel.conducting
    channel.set_conducting(False)  # switching off is always allowed


def test_channel_path_resistance_is_two_fets():
    channel = IdealDiodeChannel(input=V_BAT2, r_ds_on=0.005)
    assert channel.path_resistance == pytest.approx(0.010)


def test_system_channels_track_conducting_set():
    system = PowerSystem(v_rxsm=28.0)
    state = system.step(0.004, load_w=6.0)
    assert state.conducting == (V_RXSM,)
    assert system.channels[V_RXSM].conducting
    assert not system.channels[V_BAT1].conducting
    system.v_rxsm = 0.0
    state = system.step(0.004, load_w=6.0)
    assert system.channels[V_BAT1].conducting and system.channels[V_BAT2].conducting
    assert not system.channels[V_RXSM].conducting


def test_latched_channel_state_follows_flip_flops():
    system = PowerSystem(v_rxsm=0.0)
    system.latches.pulse(True, False)
    state = system.step(0.004, load_w=6.0)
    assert system.channels[V_BAT1].latch_disabled
    assert not system.channels[V_BAT1].conducting
    assert system.channels[V_BAT2].conducting
    assert state.conducting == (V_BAT2,)


# ---------------------------------------------------------------- bus solving

def test_equal_strings_split_current_equally():
    system = PowerSystem(v_rxsm=0.0)
    state = system.step(0.004, load_w=6.0)
    assert state.conducting == (V_BAT1, V_BAT2)
    assert state.i_bat1 == pytest.approx(state.i_bat2, rel=1e-9)
    assert state.i_bat1 > 0


def test_unequal_resistance_splits_by_divider():
    cfg = PowerConfig()
    system = PowerSystem(
        config=cfg,
        bat1=BatteryString(internal_resistance=0.27),
        bat2=BatteryString(internal_resistance=0.09),
        v_rxsm=0.0)
    state = system.step(0.004, load_w=6.0)
    r1 = 0.27 + 2 * cfg.r_ds_on
    r2 = 0.09 + 2 * cfg.r_ds_on
    # equal EMFs: current ratio is the inverse resistance ratio
    assert state.i_bat1 / state.i_bat2 == pytest.approx(r2 / r1, rel=1e-9)


def test_energy_balance():
    system = PowerSystem(v_rxsm=0.0)
    cfg = system.config
    state = system.step(0.004, load_w=6.0, servo_a=1.5)
    source_power = 0.0
    dissipation = 0.0
    for name, i, r_int in ((V_BAT1, state.i_bat1, 0.09), (V_BAT2, state.i_bat2, 0.09)):
        emf = state.v_bat1 if name == V_BAT1 else state.v_bat2
        r = r_int + 2 * cfg.r_ds_on
        source_power += emf * i
        dissipation += i * i * r
    bus_power = state.load_w + 1.5 * state.bus_voltage
    assert source_power == pytest.approx(bus_power + dissipation, rel=1e-9)


def test_no_reverse_current_with_mismatched_strings():
    # strings 10 mV apart conduct together only while both flow forward
    system = PowerSystem(
        bat1=BatteryString(soc=1.0),
        bat2=BatteryString(soc=0.05),  # knee region: lower EMF
        v_rxsm=0.0)
    state = system.step(0.004, load_w=1.0)
    assert state.i_bat1 >= 0.0 and state.i_bat2 >= 0.0


def test_bus_voltage_within_input_range_when_powered():
    system = PowerSystem(v_rxsm=28.0)
    state = system.step(0.004, load_w=10.0)
    assert 6.0 <= state.bus_voltage <= 40.0


# ------------------------------------------------- seamless ejection switchover

@given(st.integers(0, 2000))
@settings(max_examples=30, deadline=None)
def test_seamless_switchover_no_power_gap(eject_tick):
    system = PowerSystem(v_rxsm=28.0)
    for tick in range(0, 2001):
        if tick == eject_tick:
            system.v_rxsm = 0.0  # umbilical severed
        state = system.step(0.004, load_w=6.0)
        assert state.bus_voltage > 0.0
        assert state.i_bat1 >= 0.0 and state.i_bat2 >= 0.0
        if tick == eject_tick:
            assert state.conducting == (V_BAT1, V_BAT2)


# -------------------------------------------------------------- radio silence

def test_radio_silence_six_states_in_order():
    system = PowerSystem(v_rxsm=28.0)
    trace = radio_silence_sequence(system, load_w=6.0)
    assert [s.index for s in trace.steps] == [1, 2, 3, 4, 5, 6]
    assert trace.labels() == [
        "all-sources-supplying", "latches-set", "batteries-off-external-only",
        "external-cut-fully-off", "rocket-side-power-cut",
        "repowered-batteries-rearmed",
    ]
    for step in trace.steps:
        if 2 <= step.index <= 5:
            assert step.bus.i_bat1 == 0.0 and step.bus.i_bat2 == 0.0
        if step.index in (4, 5):
            assert step.bus.bus_voltage == 0.0
            assert step.q1 and step.q2  # latches hold while dark
    assert not trace.steps[-1].q1 and not trace.steps[-1].q2


def test_radio_silence_repower_rearms_both_strings():
    system = PowerSystem(v_rxsm=28.0)
    radio_silence_sequence(system, load_w=6.0)
    # simulated ejection right after re-arm: both strings must carry the load
    system.v_rxsm = 0.0
    state = system.step(0.004, load_w=6.0)
    assert state.conducting == (V_BAT1, V_BAT2)
    assert state.i_bat1 > 0 and state.i_bat2 > 0


def test_latch_needs_clock_edge():
    latches = DisableLatch()
    latches.apply(True, True, 0)   # levels set, no edge
    assert not latches.q1 and not latches.q2
    latches.apply(True, True, 1)   # rising edge latches
    assert latches.q1 and latches.q2
    latches.apply(False, False, 1)  # held high: no new edge, no change
    assert latches.q1 and latches.q2


def test_radio_silence_stalls_without_clock_edge():
    system = PowerSystem(v_rxsm=28.0)
    trace = radio_silence_sequence(system, load_w=6.0, clk_functional=False)
    assert trace.stalled
    assert [s.index for s in trace.steps] == [1]
    assert not system.latches.q1 and not system.latches.q2


def test_latched_battery_current_identically_zero_until_reenable():
    system = PowerSystem(v_rxsm=28.0)
    system.latches.pulse(True, True)
    for _ in range(100):
        state = system.step(0.004, load_w=8.0)
        assert state.i_bat1 == 0.0 and state.i_bat2 == 0.0
    system.v_rxsm = 0.0  # even with the external supply gone
    state = system.step(0.004, load_w=8.0)
    assert state.bus_voltage == 0.0
    assert state.i_bat1 == 0.0 and state.i_bat2 == 0.0
    system.latches.pulse(False, False)
    state = system.step(0.004, load_w=8.0)
    assert state.i_bat1 > 0 and state.i_bat2 > 0
