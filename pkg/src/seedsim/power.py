"""Seed power subsystem: battery strings, ideal-diode source OR-ing with
hysteresis, battery-disable flip-flops, the full-shutdown procedure and
dissipation accounting.

The electrical model is a resistive network: each enabled source is an EMF
behind (internal resistance + two MOSFET channel resistances); the conducting
set is chosen by the comparator rule, then bus voltage and per-source currents
follow from the node equation with the constant-power load. Reverse current
into a source is clamped to zero (back-to-back FETs block return charging).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import NoSource, SequenceViolation

V_BAT1 = "V_BAT1"
V_BAT2 = "V_BAT2"
V_RXSM = "V_RXSM"
SOURCE_ORDER = (V_BAT1, V_BAT2, V_RXSM)

MIN_BUS_VOLTAGE = 6.0
MAX_BUS_VOLTAGE = 40.0
SCHOTTKY_DROP_V = 0.4
DEFAULT_R_DS_ON = 0.005  # per FET; the channel uses two in series
DEFAULT_HYSTERESIS_V = 0.020

# Primary-cell limits used for trace warnings (per parallel leg).
CELL_CURRENT_CONT_A = 2.0
CELL_CURRENT_PEAK_A = 5.0

# Per-cell open-circuit voltage over state of charge. The chemistry has a
# famously flat discharge plateau; the endpoints below are the documented
# model assumption (plateau 2.8 V from 10% upward, knee down to 2.0 V empty).
OCV_POINTS = ((0.0, 2.0), (0.10, 2.8), (1.0, 2.8))


def _interp_ocv(soc: float) -> float:
    pts = OCV_POINTS
    if soc <= pts[0][0]:
        return pts[0][1]
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if soc <= x1:
            return y0 + (y1 - y0) * (soc - x0) / (x1 - x0)
    return pts[-1][1]


@dataclass(frozen=True)
class BatteryString:
    """One series string of primary cells (two strings form the 3S2P pack)."""
    cells_series: int = 3
    capacity_ah: float = 2.2
    legs_parallel: int = 1
    internal_resistance: float = 0.090
    soc: float = 1.0
    temperature_c: float = 20.0

    @property
    def open_circuit_voltage(self) -> float:
        return self.cells_series * _interp_ocv(self.soc)

    def terminal_voltage(self, i_a: float = 0.0) -> float:
        return self.open_circuit_voltage - i_a * self.internal_resistance


def step_battery(string: BatteryString, i_a: float, dt_s: float) -> tuple:
    """Discharge `string` by `i_a` for `dt_s`; returns (updated, warnings)."""
    if dt_s <= 0:
        raise ValueError("dt must be positive")
    warnings = []
    i_leg = i_a / string.legs_parallel
    if i_leg > CELL_CURRENT_PEAK_A:
        warnings.append(f"leg current {i_leg:.2f} A above peak rating {CELL_CURRENT_PEAK_A} A")
    elif i_leg > CELL_CURRENT_CONT_A:
        warnings.append(f"leg current {i_leg:.2f} A above continuous rating {CELL_CURRENT_CONT_A} A")
    capacity = string.capacity_ah * string.legs_parallel
    soc = max(0.0, string.soc - (i_a * dt_s / 3600.0) / capacity)
    return replace(string, soc=soc), warnings


def diode_loss(mode: str, i_load_a: float, r_ds_on: float = DEFAULT_R_DS_ON,
               drop_v: float = SCHOTTKY_DROP_V) -> float:
    """Conduction loss of one power-path element at `i_load_a`."""
    if i_load_a < 0:
        raise ValueError("load current must be non-negative")
    if mode == "schottky":
        return drop_v * i_load_a
    if mode == "ideal-mosfet":
        return 2.0 * i_load_a * i_load_a * r_ds_on
    raise ValueError(f"unknown diode mode {mode!r}")


@dataclass
class IdealDiodeChannel:
    """One back-to-back MOSFET power-path element and its controller state.

    Never conducts while latch-disabled; the pair orientation blocks any
    return charging current into the source regardless of bus voltage.
    """
    input: str
    r_ds_on: float = DEFAULT_R_DS_ON       # per FET; the path uses two in series
    hysteresis_v: float = DEFAULT_HYSTERESIS_V
    conducting: bool = False
    latch_disabled: bool = False

    @property
    def path_resistance(self) -> float:
        return 2.0 * self.r_ds_on

    def set_conducting(self, on: bool) -> None:
        if on and self.latch_disabled:
            raise SequenceViolation(
                f"{self.input} channel commanded on while latch-disabled")
        self.conducting = on


@dataclass
class DisableLatch:
    """The pair of battery-disable flip-flops. Outputs only move on a rising
    clock edge and are kept alive by their own battery string."""
    q1: bool = False
    q2: bool = False
    _clk: int = 0

    def apply(self, dis_bat1: bool, dis_bat2: bool, ff_clk: int) -> None:
        rising = self._clk == 0 and ff_clk == 1
        if rising:
            self.q1 = bool(dis_bat1)
            self.q2 = bool(dis_bat2)
        self._clk = 1 if ff_clk else 0

    def pulse(self, dis_bat1: bool, dis_bat2: bool) -> None:
        """Full clock cycle: drive D inputs, raise, then drop the clock."""
        self.apply(dis_bat1, dis_bat2, 0)
        self.apply(dis_bat1, dis_bat2, 1)
        self.apply(dis_bat1, dis_bat2, 0)

    def disabled(self, source: str) -> bool:
        if source == V_BAT1:
            return self.q1
        if source == V_BAT2:
            return self.q2
        return False


@dataclass(frozen=True)
class PowerBusState:
    v_bat1: float
    v_bat2: float
    v_rxsm: float
    bus_voltage: float
    conducting: tuple
    i_bat1: float
    i_bat2: float
    i_rxsm: float
    load_w: float

    def current(self, source: str) -> float:
        return {V_BAT1: self.i_bat1, V_BAT2: self.i_bat2, V_RXSM: self.i_rxsm}[source]

    def powered(self) -> bool:
        return self.bus_voltage > 0.0


def select_sources(v1: float, v2: float, vr: float, latches: DisableLatch,
                   hysteresis_v: float = DEFAULT_HYSTERESIS_V,
                   min_bus_v: float = MIN_BUS_VOLTAGE) -> tuple:
    """Comparator rule of the ideal-diode controllers.

    The highest enabled source conducts; any other enabled source conducts too
    if it sits within the comparator hysteresis of the maximum.
    """
    for v in (v1, v2, vr):
        if v < 0:
            raise ValueError("source voltages must be non-negative")
    enabled = {name: v for name, v in ((V_BAT1, v1), (V_BAT2, v2), (V_RXSM, vr))
               if not latches.disabled(name)}
    if not enabled:
        raise NoSource("all inputs latch-disabled")
    vmax = max(enabled.values())
    if vmax < min_bus_v:
        raise NoSource(f"best enabled input {vmax:.3f} V below {min_bus_v} V minimum")
    return tuple(name for name in SOURCE_ORDER
                 if name in enabled and enabled[name] >= vmax - hysteresis_v)


@dataclass
class PowerConfig:
    r_ds_on: float = DEFAULT_R_DS_ON
    hysteresis_v: float = DEFAULT_HYSTERESIS_V
    internal_resistance: float = 0.090
    rxsm_path_resistance: float = 0.050
    min_bus_v: float = MIN_BUS_VOLTAGE


@dataclass
class LoadProfile:
    """Electrical load: constant baseline plus scripted actuator pulses."""
    baseline_w: float = 6.0
    servo_pulses: tuple = ()  # (start_s, duration_s, amps) per pulse

    def __post_init__(self):
        if self.baseline_w < 0:
            raise ValueError("baseline load must be non-negative")
        for _, dur, amps in self.servo_pulses:
            if dur < 0 or amps < 0:
                raise ValueError("servo pulses must be non-negative")

    def servo_current(self, t_s: float) -> float:
        total = 0.0
        for start, dur, amps in self.servo_pulses:
            if start <= t_s < start + dur:
                total += amps
        return total


class PowerSystem:
    """Stateful wrapper stepping the two strings and the source selection."""

    def __init__(self, config: PowerConfig = None, bat1: BatteryString = None,
                 bat2: BatteryString = None, v_rxsm: float = 28.0):
        self.config = config or PowerConfig()
        r = self.config.internal_resistance
        self.bat1 = bat1 or BatteryString(internal_resistance=r)
        self.bat2 = bat2 or BatteryString(internal_resistance=r)
        self.v_rxsm = v_rxsm
        self.latches = DisableLatch()
        self.channels = {
            name: IdealDiodeChannel(input=name, r_ds_on=self.config.r_ds_on,
                                    hysteresis_v=self.config.hysteresis_v)
            for name in SOURCE_ORDER
        }
        self.warnings: list[str] = []

    # -- electrical solution -------------------------------------------------

    def _source_params(self, name: str) -> tuple:
        path = self.channels[name].path_resistance
        if name == V_BAT1:
            return self.bat1.open_circuit_voltage, self.bat1.internal_resistance + path
        if name == V_BAT2:
            return self.bat2.open_circuit_voltage, self.bat2.internal_resistance + path
        return self.v_rxsm, self.config.rxsm_path_resistance + path

    def _solve_bus(self, conducting, load_w: float, servo_a: float) -> tuple:
        """Bus voltage and per-source currents for a constant-power + constant-
        current load; sources whose current would reverse are dropped."""
        active = list(conducting)
        while active:
            g_sum = 0.0
            s_sum = 0.0
            for name in active:
                emf, r = self._source_params(name)
                g_sum += 1.0 / r
                s_sum += emf / r
            # g*v^2 - (s - i_servo)*v + p = 0
            b = s_sum - servo_a
            disc = b * b - 4.0 * g_sum * load_w
            if disc < 0:
                raise NoSource("load exceeds what the conducting sources can deliver")
            v_bus = (b + math.sqrt(disc)) / (2.0 * g_sum)
            currents = {}
            reversed_sources = []
            for name in active:
                emf, r = self._source_params(name)
                i = (emf - v_bus) / r
                if i < -1e-12:
                    reversed_sources.append(name)
                currents[name] = max(i, 0.0)
            if not reversed_sources:
                return v_bus, currents, active
            active = [n for n in active if n not in reversed_sources]
        raise NoSource("no source can carry the load")

    def step(self, dt_s: float, load: LoadProfile = None, t_s: float = 0.0,
             load_w: float = None, servo_a: float = None) -> PowerBusState:
        if load is not None:
            load_w = load.baseline_w
            servo_a = load.servo_current(t_s)
        load_w = 0.0 if load_w is None else load_w
        servo_a = 0.0 if servo_a is None else servo_a

        v1 = self.bat1.open_circuit_voltage
        v2 = self.bat2.open_circuit_voltage
        vr = self.v_rxsm
        self.channels[V_BAT1].latch_disabled = self.latches.q1
        self.channels[V_BAT2].latch_disabled = self.latches.q2
        try:
            selected = select_sources(v1, v2, vr, self.latches,
                                      self.config.hysteresis_v, self.config.min_bus_v)
            v_bus, currents, active = self._solve_bus(selected, load_w, servo_a)
            conducting = tuple(n for n in SOURCE_ORDER if n in active)
        except NoSource:
            for channel in self.channels.values():
                channel.set_conducting(False)
            return PowerBusState(v_bat1=v1, v_bat2=v2, v_rxsm=vr, bus_voltage=0.0,
                                 conducting=(), i_bat1=0.0, i_bat2=0.0, i_rxsm=0.0,
                                 load_w=load_w)
        for name, channel in self.channels.items():
            channel.set_conducting(name in conducting)
        i1 = currents.get(V_BAT1, 0.0)
        i2 = currents.get(V_BAT2, 0.0)
        if i1 > 0:
            self.bat1, warn = step_battery(self.bat1, i1, dt_s)
            self.warnings.extend(warn)
        if i2 > 0:
            self.bat2, warn = step_battery(self.bat2, i2, dt_s)
            self.warnings.extend(warn)
        return PowerBusState(v_bat1=v1, v_bat2=v2, v_rxsm=vr, bus_voltage=v_bus,
                             conducting=conducting, i_bat1=i1, i_bat2=i2,
                             i_rxsm=currents.get(V_RXSM, 0.0), load_w=load_w)


# --------------------------------------------------------------------------
# Full-shutdown ("radio silence") procedure
# --------------------------------------------------------------------------

RADIO_SILENCE_STATES = (
    "all-sources-supplying",
    "latches-set",
    "batteries-off-external-only",
    "external-cut-fully-off",
    "rocket-side-power-cut",
    "repowered-batteries-rearmed",
)


@dataclass(frozen=True)
class ShutdownStep:
    index: int
    label: str
    bus: PowerBusState
    q1: bool
    q2: bool
    rbc_powered: bool


@dataclass
class StateTrace:
    steps: list = field(default_factory=list)
    stalled: bool = False

    def labels(self) -> list:
        return [s.label for s in self.steps]


def radio_silence_sequence(system: PowerSystem, load_w: float = 6.0,
                           dt_s: float = 0.01, clk_functional: bool = True) -> StateTrace:
    """Drive the shutdown procedure end to end and record each state.

    Battery current must be identically zero from the moment the latches are
    set until they are cleared again; any violation raises SequenceViolation.
    """
    trace = StateTrace()
    v_external = system.v_rxsm if system.v_rxsm > 0 else 28.0

    def record(index: int, rbc_powered: bool) -> PowerBusState:
        bus = system.step(dt_s, load_w=load_w)
        step = ShutdownStep(index=index, label=RADIO_SILENCE_STATES[index - 1], bus=bus,
                            q1=system.latches.q1, q2=system.latches.q2,
                            rbc_powered=rbc_powered)
        trace.steps.append(step)
        return bus

    # 1. all three inputs available, experiment powered
    system.v_rxsm = v_external
    record(1, rbc_powered=True)

    # 2. shutdown requested: latch the battery-disable flip-flops
    if clk_functional:
        system.latches.pulse(True, True)
    else:
        system.latches.apply(True, True, system.latches._clk)  # no edge, no change
    if not (system.latches.q1 and system.latches.q2):
        trace.stalled = True
        return trace
    record(2, rbc_powered=True)

    # 3. battery channels off, external supply carries everything
    record(3, rbc_powered=True)

    # 4. external supply cut; the unit is fully dark, latches hold
    system.v_rxsm = 0.0
    record(4, rbc_powered=True)

    # 5. rocket-side computer also unpowered
    record(5, rbc_powered=False)

    # 6. external power reapplied; latches cleared, strings re-armed
    system.v_rxsm = v_external
    system.latches.pulse(False, False)
    record(6, rbc_powered=True)

    for step in trace.steps:
        if 2 <= step.index <= 5 and (step.bus.i_bat1 != 0.0 or step.bus.i_bat2 != 0.0):
            raise SequenceViolation(
                f"battery current during step {step.index} ({step.label}): "
                f"i1={step.bus.i_bat1} i2={step.bus.i_bat2}")
    return trace
