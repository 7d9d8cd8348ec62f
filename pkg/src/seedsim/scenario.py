"""Scenario configuration: JSON in, validated dataclasses out.

A scenario fixes everything a run depends on: the RNG seed, the node and link
population, the topic routing table, link parameters, the power setup, the
flight profile and any fault injections. Built-in scenarios double as the
documented examples of the file format (see scenarios/ in the repo root).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

from .kernel import NodeId, NodeKind, Unit, validate_node_set
from .middleware import Topic, TopicRegistry
from .power import LoadProfile, PowerConfig
from .protocols import MessageSchema
from .sensors import FlightProfile, RotorStep, SensorConfig

DEFAULT_CAN_IDS = {"RBC.Rocket": 0x10, "SBC.Seed1": 0x20, "SBC.Seed2": 0x21}

TOPIC_SENSORS = {Unit.Seed1: 1, Unit.Seed2: 2}
TOPIC_POWER_LOCAL = {Unit.Seed1: 3, Unit.Seed2: 4}
TOPIC_TELEMETRY_DOWN = 30
TOPIC_POWER_DOWN = 31
TOPIC_COMMAND_UP = 40
TOPIC_COMMAND_ACK = 41
TOPIC_RBC_POLL = 50


def default_schema() -> MessageSchema:
    with resources.files("seedsim.data").joinpath("messages.json").open() as fh:
        return MessageSchema.from_dict(json.load(fh))


@dataclass
class UartParams:
    bitrate: float = 115200.0
    byte_error_rate: float = 0.0


@dataclass
class CanParams:
    bitrate: float = 500000.0
    arbitration_ids: dict = field(default_factory=lambda: dict(DEFAULT_CAN_IDS))
    rocket_terminated_alone: bool = False


@dataclass
class LoRaParams:
    tx_power_dbm: float = 14.0
    path_loss_exponent: float = 2.7
    reference_loss_db: float = 40.0
    noise_sigma_db: float = 2.0
    sensitivity_dbm: float = -137.0
    data_rate_bps: float = 300.0
    beacon_interval_s: float = 5.0


@dataclass
class IridiumParams:
    loss_probability: float = 0.05
    latency_min_s: float = 10.0
    latency_max_s: float = 60.0
    sbd_interval_s: float = 5.0


@dataclass
class PowerScenario:
    config: PowerConfig = field(default_factory=PowerConfig)
    load: LoadProfile = field(default_factory=LoadProfile)
    bat1_resistance: float = None   # override per string
    bat2_resistance: float = None
    bat1_disabled: bool = False
    bat2_disabled: bool = False
    rxsm_attached: bool = True


@dataclass
class Scenario:
    name: str
    seed: int
    profile: FlightProfile
    nodes: list
    uart: UartParams = field(default_factory=UartParams)
    can: CanParams = field(default_factory=CanParams)
    lora: LoRaParams = field(default_factory=LoRaParams)
    iridium: IridiumParams = field(default_factory=IridiumParams)
    power: PowerScenario = field(default_factory=PowerScenario)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    faults: list = field(default_factory=list)   # raw dicts, applied by mission
    duration_s: float = None
    sensor_rate_hz: float = 250.0
    status_interval_s: float = 1.0
    rbc_poll_interval_s: float = 20.0
    logging: bool = True

    def __post_init__(self):
        validate_node_set(self.nodes)
        # the beacon link is low-rate by design: the interval must dwarf the
        # airtime or the channel model stops being a sequence of independent
        # receptions
        from .protocols import BEACON_LEN
        beacon_airtime = BEACON_LEN * 8 / self.lora.data_rate_bps
        if self.lora.beacon_interval_s < 10.0 * beacon_airtime:
            raise ValueError(
                f"beacon interval {self.lora.beacon_interval_s}s too short for "
                f"{beacon_airtime:.2f}s airtime at {self.lora.data_rate_bps} bit/s")
        schema = default_schema()
        seed_status_size = schema.by_name["seed_status"].size
        power_status_size = schema.by_name["power_status"].size
        command_size = schema.by_name["command"].size
        ack_size = schema.by_name["command_ack"].size
        topics = [
            Topic(TOPIC_SENSORS[Unit.Seed1], "sensors.Seed1", seed_status_size, "uart.Seed1"),
            Topic(TOPIC_SENSORS[Unit.Seed2], "sensors.Seed2", seed_status_size, "uart.Seed2"),
            Topic(TOPIC_POWER_LOCAL[Unit.Seed1], "power.Seed1", power_status_size, "uart.Seed1"),
            Topic(TOPIC_POWER_LOCAL[Unit.Seed2], "power.Seed2", power_status_size, "uart.Seed2"),
            Topic(TOPIC_TELEMETRY_DOWN, "telemetry.down", seed_status_size, "can.main"),
            Topic(TOPIC_POWER_DOWN, "power.down", power_status_size, "can.main"),
            Topic(TOPIC_COMMAND_UP, "command.up", command_size, "can.main"),
            Topic(TOPIC_COMMAND_ACK, "command.ack", ack_size, "can.main"),
            Topic(TOPIC_RBC_POLL, "rbc.poll", 4, "can.main"),
        ]
        self.topics = TopicRegistry(topics)
        self.schema = schema


def _default_nodes() -> list:
    return [
        NodeId(NodeKind.RBC, Unit.Rocket),
        NodeId(NodeKind.SBC, Unit.Seed1),
        NodeId(NodeKind.COP, Unit.Seed1),
        NodeId(NodeKind.SBC, Unit.Seed2),
        NodeId(NodeKind.COP, Unit.Seed2),
        NodeId(NodeKind.GroundBackend, Unit.Ground),
    ]


def _nominal_descent_pulses(profile: FlightProfile) -> tuple:
    # pitch-change actuation every 12 s of the descent
    pulses = []
    t = profile.apogee_time_s + 15.0
    while t < profile.apogee_time_s + 700.0:
        pulses.append((t, 0.8, 2.0))
        t += 12.0
    return tuple(pulses)


def nominal_scenario(seed: int = 2029, apogee_m: float = 80000.0,
                     launch_time_s: float = 10.0,
                     sensor_rate_hz: float = 250.0) -> Scenario:
    profile = FlightProfile(name="nominal", kind="nominal", apogee_m=apogee_m,
                            launch_time_s=launch_time_s)
    power = PowerScenario(load=LoadProfile(
        baseline_w=6.0, servo_pulses=_nominal_descent_pulses(profile)))
    return Scenario(name="nominal", seed=seed, profile=profile,
                    nodes=_default_nodes(), power=power,
                    sensor_rate_hz=sensor_rate_hz)


def windtunnel_scenario(seed: int = 71, duration_s: float = 120.0,
                        imbalanced: bool = False,
                        bat2_disabled: bool = False) -> Scenario:
    profile = FlightProfile(
        name="windtunnel", kind="windtunnel", airspeed_m_s=15.0,
        rotor_steps=(RotorStep(0.0, 15.0), RotorStep(30.0, 20.0),
                     RotorStep(60.0, 25.0), RotorStep(90.0, 18.0)))
    pulses = tuple((t - 0.5, 1.5, 3.0) for t in (30.0, 60.0, 90.0))
    power = PowerScenario(
        load=LoadProfile(baseline_w=6.0, servo_pulses=pulses),
        bat1_resistance=0.27 if imbalanced else None,
        bat2_disabled=bat2_disabled,
        rxsm_attached=False)
    name = "windtunnel_imbalanced" if imbalanced else "windtunnel"
    return Scenario(name=name, seed=seed, profile=profile, nodes=_default_nodes(),
                    power=power, duration_s=duration_s)


BUILTINS = {
    "nominal": nominal_scenario,
    "windtunnel": windtunnel_scenario,
    "windtunnel_imbalanced": lambda **kw: windtunnel_scenario(imbalanced=True, **kw),
}


def from_dict(spec: dict) -> Scenario:
    base = spec.get("base")
    if base:
        scenario = BUILTINS[base]()
    else:
        scenario = nominal_scenario()
    scenario.name = spec.get("name", scenario.name)
    scenario.seed = spec.get("seed", scenario.seed)
    prof = spec.get("flight_profile", {})
    if prof:
        kind = prof.get("kind", scenario.profile.kind)
        kwargs = {}
        for key in ("launch_time_s", "burn_time_s", "apogee_m", "airspeed_m_s",
                    "tunnel_altitude_m", "descent_rotor_hz"):
            if key in prof:
                kwargs[key] = prof[key]
        if "rotor_steps" in prof:
            kwargs["rotor_steps"] = tuple(RotorStep(*s) for s in prof["rotor_steps"])
        scenario.profile = FlightProfile(name=prof.get("name", kind), kind=kind, **kwargs)
    if "nodes" in spec:
        scenario.nodes = [NodeId.parse(n) for n in spec["nodes"]]
        validate_node_set(scenario.nodes)
    links = spec.get("links", {})
    if "uart" in links:
        scenario.uart = UartParams(**links["uart"])
    if "can" in links:
        scenario.can = CanParams(**links["can"])
    if "lora" in links:
        scenario.lora = LoRaParams(**links["lora"])
    if "iridium" in links:
        scenario.iridium = IridiumParams(**links["iridium"])
    if "power" in spec:
        p = dict(spec["power"])
        load = p.pop("load", None)
        cfg_keys = {k: p.pop(k) for k in list(p)
                    if k in ("r_ds_on", "hysteresis_v", "internal_resistance",
                             "rxsm_path_resistance", "min_bus_v")}
        scenario.power = PowerScenario(config=PowerConfig(**cfg_keys), **p)
        if load:
            scenario.power.load = LoadProfile(
                baseline_w=load.get("baseline_w", 6.0),
                servo_pulses=tuple(tuple(x) for x in load.get("servo_pulses", ())))
    for key in ("duration_s", "sensor_rate_hz", "status_interval_s",
                "rbc_poll_interval_s", "logging"):
        if key in spec:
            setattr(scenario, key, spec[key])
    scenario.faults = list(spec.get("faults", []))
    scenario.__post_init__()
    return scenario


def load_scenario(source) -> Scenario:
    """Accepts a builtin name, a path to a JSON file, or a dict."""
    if isinstance(source, dict):
        return from_dict(source)
    if source in BUILTINS:
        return BUILTINS[source]()
    with open(source) as fh:
        return from_dict(json.load(fh))
