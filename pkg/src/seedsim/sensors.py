"""Flight profile generation, redundant sensor models and fault injection.

The trajectory is prescribed, not aerodynamically simulated: ascent is a
closed-form boost/coast arc tuned to the configured apogee, descent follows a
table of sink rate versus altitude (the rotor controller itself is out of
scope and appears only as scripted setpoints and an electrical load).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

from .errors import OutOfModel, PhaseError

G0 = 9.80665  # m/s^2


class MissionPhase(IntEnum):
    PreLaunch = 0
    RadioSilence = 1
    Ascent = 2
    Ejection = 3
    Descent = 4
    Landed = 5


PRE_EJECTION_PHASES = (MissionPhase.PreLaunch, MissionPhase.RadioSilence,
                       MissionPhase.Ascent)


# --------------------------------------------------------------------------
# Standard atmosphere, 0..86 km geometric altitude
# --------------------------------------------------------------------------

_R_EARTH = 6356766.0          # m, for geometric<->geopotential conversion
_R_SPECIFIC = 287.0528        # J/(kg K)
_P0_MBAR = 1013.25

# (base geopotential altitude m, base temperature K, lapse rate K/m)
_LAYERS = (
    (0.0, 288.15, -0.0065),
    (11000.0, 216.65, 0.0),
    (20000.0, 216.65, 0.001),
    (32000.0, 228.65, 0.0028),
    (47000.0, 270.65, 0.0),
    (51000.0, 270.65, -0.0028),
    (71000.0, 214.65, -0.002),
    (84852.0, 186.946, 0.0),
)


def _layer_base_pressures() -> tuple:
    pressures = [_P0_MBAR]
    for (h0, t0, lapse), (h1, _, _) in zip(_LAYERS, _LAYERS[1:]):
        p0 = pressures[-1]
        dh = h1 - h0
        if lapse == 0.0:
            p1 = p0 * math.exp(-G0 * dh / (_R_SPECIFIC * t0))
        else:
            p1 = p0 * (t0 / (t0 + lapse * dh)) ** (G0 / (_R_SPECIFIC * lapse))
        pressures.append(p1)
    return tuple(pressures)


_BASE_PRESSURES = _layer_base_pressures()
ATMOSPHERE_CEILING_M = 86000.0


def atmosphere(h_m: float, clamp: bool = True) -> float:
    """Static pressure in mbar at geometric altitude `h_m` (0..86 km)."""
    if h_m < 0:
        raise ValueError("altitude below model floor")
    if h_m > ATMOSPHERE_CEILING_M:
        if not clamp:
            raise OutOfModel(f"{h_m:.0f} m above the {ATMOSPHERE_CEILING_M:.0f} m ceiling")
        h_m = ATMOSPHERE_CEILING_M
    h_gp = _R_EARTH * h_m / (_R_EARTH + h_m)
    idx = 0
    for i, (base, _, _) in enumerate(_LAYERS):
        if h_gp >= base:
            idx = i
    h0, t0, lapse = _LAYERS[idx]
    p0 = _BASE_PRESSURES[idx]
    dh = h_gp - h0
    if lapse == 0.0:
        return p0 * math.exp(-G0 * dh / (_R_SPECIFIC * t0))
    return p0 * (t0 / (t0 + lapse * dh)) ** (G0 / (_R_SPECIFIC * lapse))


# --------------------------------------------------------------------------
# Flight profiles
# --------------------------------------------------------------------------

DEFAULT_SINK_TABLE = (
    # altitude m -> sink rate m/s; thin air first, slow autorotation near ground
    (80000.0, 280.0),
    (50000.0, 250.0),
    (30000.0, 160.0),
    (10000.0, 60.0),
    (2000.0, 30.0),
    (0.0, 25.0),
)


def _sink_rate(table, h_m: float) -> float:
    pts = sorted(table)
    if h_m <= pts[0][0]:
        return pts[0][1]
    if h_m >= pts[-1][0]:
        return pts[-1][1]
    for (h0, v0), (h1, v1) in zip(pts, pts[1:]):
        if h_m <= h1:
            return v0 + (v1 - v0) * (h_m - h0) / (h1 - h0)
    return pts[-1][1]


@dataclass(frozen=True)
class RotorStep:
    t_s: float
    setpoint_hz: float


@dataclass
class FlightProfile:
    name: str = "nominal"
    kind: str = "nominal"             # "nominal" | "windtunnel"
    launch_time_s: float = 60.0
    burn_time_s: float = 26.0
    apogee_m: float = 80000.0
    sink_table: tuple = DEFAULT_SINK_TABLE
    descent_drift_m_s: tuple = (4.0, 1.5)   # east, north wind drift
    descent_rotor_hz: float = 22.0
    rotor_spinup_s: float = 10.0
    # wind tunnel parameters
    airspeed_m_s: float = 15.0
    tunnel_altitude_m: float = 270.0
    rotor_steps: tuple = (RotorStep(0.0, 15.0), RotorStep(30.0, 20.0),
                          RotorStep(60.0, 25.0), RotorStep(90.0, 18.0))

    def __post_init__(self):
        # boost acceleration that lands the coast arc exactly on the apogee:
        # 0.5*a*tb^2 + (a*tb)^2/(2 g) = apogee
        tb = self.burn_time_s
        c2 = tb * tb / (2.0 * G0)
        c1 = 0.5 * tb * tb
        self.boost_accel = (-c1 + math.sqrt(c1 * c1 + 4.0 * c2 * self.apogee_m)) / (2.0 * c2)
        self.burnout_velocity = self.boost_accel * tb
        self.burnout_altitude = 0.5 * self.boost_accel * tb * tb
        self.coast_time_s = self.burnout_velocity / G0
        self.apogee_time_s = self.launch_time_s + tb + self.coast_time_s

    def rotor_setpoint(self, t_since_start: float) -> float:
        setpoint = self.rotor_steps[0].setpoint_hz
        for step in self.rotor_steps:
            if t_since_start >= step.t_s:
                setpoint = step.setpoint_hz
        return setpoint


@dataclass
class TrajectoryState:
    time_s: float = 0.0
    pos_m: tuple = (0.0, 0.0, 0.0)        # east, north, up in the launch frame
    vel_m_s: tuple = (0.0, 0.0, 0.0)
    body_accel_g: tuple = (0.0, 0.0, 1.0)  # specific force felt by the sensors
    rotor_rate_hz: float = 0.0
    body_spin_hz: float = 0.0
    phase: MissionPhase = MissionPhase.PreLaunch


def propagate(state: TrajectoryState, dt_s: float, profile: FlightProfile) -> TrajectoryState:
    """Advance the prescribed trajectory by `dt_s`."""
    if dt_s <= 0:
        raise ValueError("dt must be positive")
    if state.phase == MissionPhase.Landed:
        return replace(state, time_s=state.time_s + dt_s)
    t = state.time_s + dt_s

    if profile.kind == "windtunnel":
        setpoint = profile.rotor_setpoint(t)
        rate = state.rotor_rate_hz + (setpoint - state.rotor_rate_hz) * min(1.0, dt_s / 0.5)
        if abs(rate - setpoint) < 0.02:
            rate = setpoint  # controller holds the target once captured
        return replace(state, time_s=t,
                       pos_m=(0.0, 0.0, profile.tunnel_altitude_m),
                       vel_m_s=(profile.airspeed_m_s, 0.0, 0.0),
                       body_accel_g=(0.0, 0.0, 1.0),
                       rotor_rate_hz=rate,
                       phase=MissionPhase.PreLaunch)

    t0 = profile.launch_time_s
    if t < t0:
        return replace(state, time_s=t, pos_m=(0.0, 0.0, 0.0), vel_m_s=(0.0, 0.0, 0.0),
                       body_accel_g=(0.0, 0.0, 1.0), rotor_rate_hz=0.0,
                       phase=state.phase if state.phase == MissionPhase.RadioSilence
                       else MissionPhase.PreLaunch)
    if t < t0 + profile.burn_time_s:
        tau = t - t0
        a = profile.boost_accel
        return replace(state, time_s=t, pos_m=(0.0, 0.0, 0.5 * a * tau * tau),
                       vel_m_s=(0.0, 0.0, a * tau),
                       body_accel_g=(0.0, 0.0, (a + G0) / G0),
                       rotor_rate_hz=0.0, phase=MissionPhase.Ascent)
    if t < profile.apogee_time_s:
        tau = t - t0 - profile.burn_time_s
        v = profile.burnout_velocity - G0 * tau
        h = profile.burnout_altitude + profile.burnout_velocity * tau - 0.5 * G0 * tau * tau
        return replace(state, time_s=t, pos_m=(0.0, 0.0, h), vel_m_s=(0.0, 0.0, v),
                       body_accel_g=(0.0, 0.0, 0.0),  # coasting: near free fall
                       rotor_rate_hz=0.0, phase=MissionPhase.Ascent)

    # descent (the ejection instant is the first step past apogee)
    if state.phase in (MissionPhase.Ascent, MissionPhase.PreLaunch):
        h = profile.apogee_m
        phase = MissionPhase.Ejection
        pos = (state.pos_m[0], state.pos_m[1], h)
        vel = (0.0, 0.0, 0.0)
    else:
        phase = MissionPhase.Descent
        h = state.pos_m[2]
        sink = _sink_rate(profile.sink_table, h)
        h = h - sink * dt_s
        drift_e, drift_n = profile.descent_drift_m_s
        pos = (state.pos_m[0] + drift_e * dt_s, state.pos_m[1] + drift_n * dt_s, h)
        vel = (drift_e, drift_n, -sink)
        if h <= 0.0:
            return replace(state, time_s=t, pos_m=(pos[0], pos[1], 0.0),
                           vel_m_s=(0.0, 0.0, 0.0), body_accel_g=(0.0, 0.0, 1.0),
                           rotor_rate_hz=0.0, body_spin_hz=0.0,
                           phase=MissionPhase.Landed)

    t_desc = t - profile.apogee_time_s
    spin_frac = min(1.0, t_desc / profile.rotor_spinup_s)
    rotor = profile.descent_rotor_hz * spin_frac
    # specific force: weight support builds up as the rotor bites
    sink_here = _sink_rate(profile.sink_table, max(pos[2], 0.0))
    support = max(0.0, 1.0 - sink_here / 300.0)
    return replace(state, time_s=t, pos_m=pos, vel_m_s=vel,
                   body_accel_g=(0.0, 0.0, support), rotor_rate_hz=rotor,
                   body_spin_hz=0.0, phase=phase)


# --------------------------------------------------------------------------
# Fault injection
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FlatSpinFault:
    t0_s: float
    duration_s: float = 20.0
    magnitude_g: float = 115.0

    def active(self, t_s: float) -> bool:
        return self.t0_s <= t_s < self.t0_s + self.duration_s


def inject_flat_spin(profile: FlightProfile, t0_s: float, duration_s: float = 20.0,
                     magnitude_g: float = 115.0) -> FlatSpinFault:
    """Validate the injection point and return the fault descriptor."""
    if profile.kind == "nominal":
        landed_by = profile.apogee_time_s + 3600.0
        if not (profile.apogee_time_s < t0_s < landed_by):
            raise PhaseError(f"flat spin at t={t0_s:.1f}s is outside the descent")
    else:
        raise PhaseError("flat spin only applies to the descent of a flight profile")
    return FlatSpinFault(t0_s=t0_s, duration_s=duration_s, magnitude_g=magnitude_g)


def apply_flat_spin(state: TrajectoryState, fault: FlatSpinFault) -> TrajectoryState:
    if fault is None or not fault.active(state.time_s) or fault.magnitude_g <= 0.0:
        return state
    if state.phase != MissionPhase.Descent:
        return state
    az = state.body_accel_g[2]
    return replace(state,
                   body_accel_g=(fault.magnitude_g, 0.0, az),
                   rotor_rate_hz=state.rotor_rate_hz * 2.0,
                   body_spin_hz=8.0)


# --------------------------------------------------------------------------
# Sensor models
# --------------------------------------------------------------------------

@dataclass
class VibrationModel:
    """Rotor-induced vibration on the precise accelerometer's lateral axis.

    Harmonic amplitudes are a modeling input; the fourth harmonic dominates by
    default because the rotor has four blades.
    """
    amplitudes_g: dict = field(default_factory=lambda: {1: 0.10, 2: 0.05, 4: 0.30})

    def sample(self, t_s: float, rotor_hz: float) -> float:
        if rotor_hz <= 0.0:
            return 0.0
        return sum(a * math.sin(2.0 * math.pi * k * rotor_hz * t_s)
                   for k, a in self.amplitudes_g.items())


@dataclass
class SensorConfig:
    accel_precise_range_g: float = 16.0
    accel_precise_noise_g: float = 0.02
    accel_high_range_g: float = 400.0
    accel_high_noise_g: float = 0.5
    baro_precise_range_mbar: tuple = (10.0, 1200.0)
    baro_precise_accuracy_mbar: float = 2.5
    baro_wide_range_mbar: tuple = (0.0, 1200.0)
    baro_wide_accuracy_mbar: float = 10.0
    gps_max_altitude_m: float = 50000.0   # documented assumption, configurable
    gps_max_spin_hz: float = 2.0
    gps_noise_m: float = 0.05
    gps_rate_hz: float = 20.0
    tach_noise_hz: float = 0.05
    origin_lat_deg: float = 67.9
    origin_lon_deg: float = 21.1
    vibration: VibrationModel = field(default_factory=VibrationModel)


@dataclass(frozen=True)
class GpsFix:
    lat_deg: float
    lon_deg: float
    alt_m: float
    valid: bool
    fresh: bool


@dataclass(frozen=True)
class SensorSample:
    time_s: float
    accel_precise_g: tuple
    accel_high_g: tuple
    precise_saturated: bool
    baro_precise_mbar: float      # None when out of range
    baro_wide_mbar: float
    gps: GpsFix
    tach_hz: float


def _clipped_noise(rng, accuracy: float) -> float:
    """Zero-mean error bounded by the stated accuracy."""
    if rng is None or accuracy <= 0.0:
        return 0.0
    return float(min(max(rng.normal(0.0, accuracy / 3.0), -accuracy), accuracy))


def _clamp_vec(vec, limit: float) -> tuple:
    return tuple(min(max(v, -limit), limit) for v in vec)


def enu_to_geo(cfg: SensorConfig, east_m: float, north_m: float) -> tuple:
    lat = cfg.origin_lat_deg + north_m / 111320.0
    lon = cfg.origin_lon_deg + east_m / (111320.0 * math.cos(math.radians(cfg.origin_lat_deg)))
    return lat, lon


def sample_sensors(state: TrajectoryState, rng, cfg: SensorConfig,
                   last_fix: GpsFix = None, prev_time_s: float = None) -> SensorSample:
    """One 250 Hz sensor acquisition: truth plus per-sensor noise and limits."""
    vib = cfg.vibration.sample(state.time_s, state.rotor_rate_hz)
    truth = (state.body_accel_g[0] + vib, state.body_accel_g[1], state.body_accel_g[2])

    noise = lambda sigma: float(rng.normal(0.0, sigma)) if rng is not None and sigma > 0 else 0.0
    precise_raw = tuple(v + noise(cfg.accel_precise_noise_g) for v in truth)
    precise = _clamp_vec(precise_raw, cfg.accel_precise_range_g)
    saturated = precise != precise_raw
    high = _clamp_vec((v + noise(cfg.accel_high_noise_g) for v in truth),
                      cfg.accel_high_range_g)

    h = max(state.pos_m[2], 0.0)
    p_true = atmosphere(h)
    lo, hi = cfg.baro_precise_range_mbar
    p_precise = p_true + _clipped_noise(rng, cfg.baro_precise_accuracy_mbar)
    baro_precise = p_precise if lo <= p_true <= hi else None
    baro_wide = max(cfg.baro_wide_range_mbar[0],
                    p_true + _clipped_noise(rng, cfg.baro_wide_accuracy_mbar))

    gps_available = (h <= cfg.gps_max_altitude_m
                     and state.body_spin_hz <= cfg.gps_max_spin_hz)
    # receiver frame index at the configured update rate
    fresh = prev_time_s is None or (
        math.floor(state.time_s * cfg.gps_rate_hz) != math.floor(prev_time_s * cfg.gps_rate_hz))
    if gps_available and fresh:
        east = state.pos_m[0] + noise(cfg.gps_noise_m)
        north = state.pos_m[1] + noise(cfg.gps_noise_m)
        lat, lon = enu_to_geo(cfg, east, north)
        fix = GpsFix(lat_deg=lat, lon_deg=lon, alt_m=h + noise(cfg.gps_noise_m),
                     valid=True, fresh=True)
    elif gps_available and last_fix is not None and last_fix.valid:
        fix = replace(last_fix, fresh=False)
    else:
        fix = GpsFix(lat_deg=0.0, lon_deg=0.0, alt_m=0.0, valid=False, fresh=False)

    tach = max(0.0, state.rotor_rate_hz + noise(cfg.tach_noise_hz)) \
        if state.rotor_rate_hz > 0 else 0.0
    return SensorSample(time_s=state.time_s, accel_precise_g=precise,
                        accel_high_g=high, precise_saturated=saturated,
                        baro_precise_mbar=baro_precise, baro_wide_mbar=baro_wide,
                        gps=fix, tach_hz=tach)
