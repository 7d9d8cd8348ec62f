"""Full-mission wiring: flight software behaviors bound to the kernel.

Each seed runs a 250 Hz acquisition/logging tick plus a 1 Hz status tick; the
rocket computer forwards telemetry to the ground over the umbilical path and
relays uplinked commands onto the CAN bus. After ejection the seeds switch
their downlink to the satellite service, and the rocket segment of the CAN
bus is left unterminated, so late transmissions from the rocket computer fail.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

from . import flashlog, protocols, scenario as scenario_mod
from .kernel import NodeId, NodeKind, Simulator, Unit, us
from .middleware import Gateway, PubSub
from .power import BatteryString, PowerSystem, radio_silence_sequence
from .protocols import Frame, FrameSigner, SbdRecord, encode_sbd
from .sensors import (
    FlatSpinFault, MissionPhase, TrajectoryState, apply_flat_spin,
    inject_flat_spin, propagate, sample_sensors,
)
from .transports import CanBus, IridiumService, UartLink, UmbilicalLink

LINK_KEY = bytes.fromhex("7365656473696d2d6c696e6b2d6b6579")

SEED_IDS = {Unit.Seed1: 1, Unit.Seed2: 2}


class RecordingBridge:
    """Offline ground segment: collects what would have been transmitted."""

    def __init__(self, uplink_frames=()):
        self.frames: list[bytes] = []
        self.sbd_payloads: list[bytes] = []
        self._uplink = list(uplink_frames)

    def send_frame(self, data: bytes) -> None:
        self.frames.append(bytes(data))

    def send_sbd(self, payload: bytes) -> None:
        self.sbd_payloads.append(bytes(payload))

    def poll_uplink(self) -> list:
        pending, self._uplink = self._uplink, []
        return pending

    def push_uplink(self, data: bytes) -> None:
        self._uplink.append(bytes(data))


class HttpBridge:
    """Live ground segment: a running backend reached over HTTP and TCP."""

    def __init__(self, http_base: str, sbd_host: str, sbd_port: int):
        self.http_base = http_base.rstrip("/")
        self.sbd_host = sbd_host
        self.sbd_port = sbd_port
        self._uplink_since = 0

    def send_frame(self, data: bytes) -> None:
        import urllib.request
        req = urllib.request.Request(self.http_base + "/ingest/rxsm", data=data,
                                     method="POST")
        urllib.request.urlopen(req, timeout=10.0).read()

    def send_sbd(self, payload: bytes) -> None:
        from .backend.server import send_sbd_over_tcp
        send_sbd_over_tcp(self.sbd_host, self.sbd_port, payload)

    def poll_uplink(self) -> list:
        import json
        import urllib.request
        url = f"{self.http_base}/uplink?since={self._uplink_since}"
        with urllib.request.urlopen(url, timeout=10.0) as resp:
            body = json.load(resp)
        self._uplink_since = body["next_since"]
        return [bytes.fromhex(f["frame"]) for f in body["frames"]]


@dataclass
class SeedArtifacts:
    unit: Unit
    flash_a: str = None
    flash_b: str = None
    power_csv: str = None
    shutdown_traces: list = field(default_factory=list)
    record_count: int = 0


class SeedSoftware:
    """SBC + COP behavior for one free-falling unit."""

    def __init__(self, sim: Simulator, sc, unit: Unit, pubsub: PubSub,
                 iridium: IridiumService, umbilical: UmbilicalLink, out_dir=None):
        self.sim = sim
        self.sc = sc
        self.unit = unit
        self.seed_id = SEED_IDS[unit]
        self.pubsub = pubsub
        self.iridium = iridium
        self.umbilical = umbilical
        self.sbc = NodeId(NodeKind.SBC, unit)
        self.cop = NodeId(NodeKind.COP, unit)

        p = sc.power
        r1 = p.bat1_resistance if p.bat1_resistance is not None else p.config.internal_resistance
        r2 = p.bat2_resistance if p.bat2_resistance is not None else p.config.internal_resistance
        self.power = PowerSystem(
            config=p.config,
            bat1=BatteryString(internal_resistance=r1),
            bat2=BatteryString(internal_resistance=r2),
            v_rxsm=umbilical.v_rxsm if p.rxsm_attached else 0.0)
        if p.bat1_disabled or p.bat2_disabled:
            self.power.latches.pulse(p.bat1_disabled, p.bat2_disabled)

        self.state = TrajectoryState()
        self.last_bus = self.power.step(1e-6, load_w=0.0)
        self.last_fix = None
        self.prev_sample_time = None
        self.status_counter = 0
        self.cop_sensor_feed_count = 0
        self.sbc_power_feed_count = 0
        self.last_status_payload = None
        self.flat_spin: FlatSpinFault = None
        self.ejected = False
        self.artifacts = SeedArtifacts(unit=unit)
        self._writer = None
        self._power_rows = []
        self._flash_seq = 0
        self._rng = sim.rng.stream(f"sensors.{unit.value}")
        if out_dir is not None and sc.logging:
            self.artifacts.flash_a = os.path.join(out_dir, f"flash_{unit.value}_a.bin")
            self.artifacts.flash_b = os.path.join(out_dir, f"flash_{unit.value}_b.bin")
            self.artifacts.power_csv = os.path.join(out_dir, f"power_{unit.value}.csv")
            self._writer = flashlog.FlashLogWriter(self.artifacts.flash_a,
                                                   self.artifacts.flash_b)

    # -- periodic work -------------------------------------------------------

    def acquisition_tick(self, sim: Simulator) -> None:
        dt = 1.0 / self.sc.sensor_rate_hz
        self.state = propagate(self.state, dt, self.sc.profile)
        self.state = apply_flat_spin(self.state, self.flat_spin)
        sample = sample_sensors(self.state, self._rng, self.sc.sensors,
                                last_fix=self.last_fix,
                                prev_time_s=self.prev_sample_time)
        self.prev_sample_time = self.state.time_s
        if sample.gps.valid:
            self.last_fix = sample.gps
        t_s = sim.now_us / 1e6
        self.power.v_rxsm = self.umbilical.v_rxsm if self.sc.power.rxsm_attached else 0.0
        bus = self.power.step(dt, load=self.sc.power.load, t_s=t_s)
        self.last_bus = bus
        if self._writer is not None:
            self._log_record(sim, sample, bus, t_s)

    def _log_record(self, sim, sample, bus, t_s) -> None:
        conducting = 0
        for bit, name in ((flashlog.CONDUCT_BAT1, "V_BAT1"),
                          (flashlog.CONDUCT_BAT2, "V_BAT2"),
                          (flashlog.CONDUCT_RXSM, "V_RXSM")):
            if name in bus.conducting:
                conducting |= bit
        latches = (flashlog.LATCH_BAT1 if self.power.latches.q1 else 0) | \
                  (flashlog.LATCH_BAT2 if self.power.latches.q2 else 0)
        validity = 0
        if sample.gps.valid:
            validity |= flashlog.VALID_GPS
        if sample.gps.fresh:
            validity |= flashlog.GPS_FRESH
        if sample.baro_precise_mbar is not None:
            validity |= flashlog.VALID_BARO_PRECISE
        if sample.precise_saturated:
            validity |= flashlog.ACCEL_PRECISE_SATURATED
        setpoint = self.state.rotor_rate_hz if self.state.phase == MissionPhase.Descent \
            else self.sc.profile.rotor_setpoint(t_s) if self.sc.profile.kind == "windtunnel" else 0.0
        rec = flashlog.FlashRecord(
            sequence=self._flash_seq,
            time_us=sim.now_us,
            accel_precise_g=sample.accel_precise_g,
            accel_high_g=sample.accel_high_g,
            baro_precise_mbar=sample.baro_precise_mbar if sample.baro_precise_mbar is not None else 0.0,
            baro_wide_mbar=sample.baro_wide_mbar,
            lat_e7=round(sample.gps.lat_deg * 1e7) if sample.gps.valid else 0,
            lon_e7=round(sample.gps.lon_deg * 1e7) if sample.gps.valid else 0,
            alt_mm=round(sample.gps.alt_m * 1e3) if sample.gps.valid else 0,
            tach_hz=sample.tach_hz,
            v_bus=bus.bus_voltage, v_bat1=bus.v_bat1, v_bat2=bus.v_bat2,
            v_rxsm=bus.v_rxsm,
            i_bat1=bus.i_bat1, i_bat2=bus.i_bat2, i_rxsm=bus.i_rxsm,
            rotor_setpoint_hz=setpoint,
            servo_current_a=self.sc.power.load.servo_current(t_s),
            conducting=conducting, latches=latches, validity=validity,
            phase=int(self.state.phase))
        self._writer.append(rec)
        self._flash_seq += 1
        self.artifacts.record_count += 1
        if self._flash_seq % 25 == 0:
            self._power_rows.append(rec)

    def status_tick(self, sim: Simulator) -> None:
        self.status_counter += 1
        payload = self._build_status()
        self.last_status_payload = payload
        # intra-seed traffic keeps flowing regardless of the bus state
        self.pubsub.publish(self.sbc, scenario_mod.TOPIC_SENSORS[self.unit], payload)
        self.pubsub.publish(self.cop, scenario_mod.TOPIC_POWER_LOCAL[self.unit],
                            self._build_power_status())
        if not self.ejected:
            self.pubsub.publish(self.sbc, scenario_mod.TOPIC_TELEMETRY_DOWN, payload)
            self.pubsub.publish(self.sbc, scenario_mod.TOPIC_POWER_DOWN,
                                self._build_power_status())

    def on_cop_sensor_feed(self, message) -> None:
        self.cop_sensor_feed_count += 1

    def on_sbc_power_feed(self, message) -> None:
        self.sbc_power_feed_count += 1

    def _build_status(self) -> bytes:
        fix = self.last_fix
        gps_ok = fix is not None and fix.valid
        vz = self.state.vel_m_s[2]
        rec = SbdRecord(
            seed_id=self.seed_id,
            counter=self.status_counter & 0xFFFF,
            lat_e7=round(fix.lat_deg * 1e7) if gps_ok else 0,
            lon_e7=round(fix.lon_deg * 1e7) if gps_ok else 0,
            alt_mm=round(fix.alt_m * 1e3) if gps_ok else 0,
            vz_cm_s=max(-32768, min(32767, round(vz * 100))),
            phase=int(self.state.phase),
            v_bat1_mv=round(self.last_bus.v_bat1 * 1e3),
            v_bat2_mv=round(self.last_bus.v_bat2 * 1e3),
            flags=protocols.SBD_FLAG_GPS_VALID if gps_ok else 0)
        return encode_sbd(rec)

    def _build_power_status(self) -> bytes:
        bus = self.last_bus
        mask = 0
        for bit, name in ((1, "V_BAT1"), (2, "V_BAT2"), (4, "V_RXSM")):
            if name in bus.conducting:
                mask |= bit
        return self.sc.schema.encode("power_status", {
            "seed_id": self.seed_id,
            "counter": self.status_counter & 0xFFFF,
            "v_bus": max(0, min(0xFFFF, round(bus.bus_voltage * 1e3))),
            "i_bat1": max(-32768, min(32767, round(bus.i_bat1 * 1e3))),
            "i_bat2": max(-32768, min(32767, round(bus.i_bat2 * 1e3))),
            "i_rxsm": max(-32768, min(32767, round(bus.i_rxsm * 1e3))),
            "conducting": mask,
            "latches": (1 if self.power.latches.q1 else 0) |
                       (2 if self.power.latches.q2 else 0),
        })

    def sbd_tick(self, sim: Simulator) -> None:
        if not self.ejected or self.state.phase == MissionPhase.Landed:
            return
        self.iridium.send_sbd(sim, self.sbc, self._build_status())

    def on_ejection(self, sim: Simulator) -> None:
        self.ejected = True
        # handover: the last status that left via the bus is also the first
        # satellite message, so the ground can cross-check both channels
        if self.last_status_payload is not None:
            self.iridium.send_sbd(sim, self.sbc, self.last_status_payload)

    # -- command handling ------------------------------------------------------

    def on_command(self, message) -> None:
        fields = self.sc.schema.by_name["command"].decode(message.payload)
        unit_code = {Unit.Seed1: 1, Unit.Seed2: 2}[self.unit]
        if fields["target_unit"] not in (0, unit_code):
            return
        command = fields["command"]
        result = 0
        if command == 1:  # full shutdown rehearsal
            trace = radio_silence_sequence(self.power,
                                           load_w=self.sc.power.load.baseline_w)
            self.artifacts.shutdown_traces.append(trace)
            for step in trace.steps:
                self.sim.note(f"power.{self.unit.value}",
                              f"radio-silence step {step.index}: {step.label} "
                              f"i_bat1={step.bus.i_bat1:.3f} i_bat2={step.bus.i_bat2:.3f}")
        elif command == 2:
            self.power.latches.pulse(False, False)
            self.sim.note(f"power.{self.unit.value}", "batteries re-enabled")
        elif command == 3:
            self.sim.note(f"{self.cop}", "test mode set")
        elif command == 4:
            pass  # ping: ack only
        else:
            result = 1
        ack = self.sc.schema.encode("command_ack", {
            "command_id": fields["command_id"], "command": command, "result": result})
        self.pubsub.publish(self.sbc, scenario_mod.TOPIC_COMMAND_ACK, ack)

    def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            with open(self.artifacts.power_csv, "w") as fh:
                fh.write("time_s,v_bus,v_bat1,v_bat2,v_rxsm,i_bat1,i_bat2,i_rxsm,"
                         "conducting,latches\n")
                for r in self._power_rows:
                    fh.write(f"{r.time_us / 1e6:.3f},{r.v_bus:.4f},{r.v_bat1:.4f},"
                             f"{r.v_bat2:.4f},{r.v_rxsm:.4f},{r.i_bat1:.4f},"
                             f"{r.i_bat2:.4f},{r.i_rxsm:.4f},{r.conducting},{r.latches}\n")


class RocketSoftware:
    """RBC: telemetry forwarding to the ground and command relay to the seeds."""

    def __init__(self, sim: Simulator, sc, pubsub: PubSub, bridge, can: CanBus):
        self.sim = sim
        self.sc = sc
        self.pubsub = pubsub
        self.bridge = bridge
        self.can = can
        self.node = NodeId(NodeKind.RBC, Unit.Rocket)
        self._signer = FrameSigner(LINK_KEY)
        self._replay = protocols.ReplayGuard()
        self._seq = 0
        self.ejected = False
        for topic_id, msg_name in ((scenario_mod.TOPIC_TELEMETRY_DOWN, "seed_status"),
                                   (scenario_mod.TOPIC_POWER_DOWN, "power_status"),
                                   (scenario_mod.TOPIC_COMMAND_ACK, "command_ack")):
            pubsub.subscribe(self.node, topic_id,
                             lambda m, name=msg_name: self.downlink(name, m))

    def downlink(self, msg_name: str, message) -> None:
        if self.ejected:
            return  # umbilical gone; nothing to forward
        mdef = self.sc.schema.by_name[msg_name]
        self._seq = (self._seq + 1) & 0xFF
        src = message.payload[0] if msg_name == "power_status" else (
            message.payload[1] if msg_name == "seed_status" else 0)
        frame = Frame(seq=self._seq, src=src, dst=0, msg_id=mdef.msg_id,
                      payload=message.payload)
        self.bridge.send_frame(self._signer.sign(frame))

    def uplink_poll(self, sim: Simulator) -> None:
        for wire in self.bridge.poll_uplink():
            try:
                frame = protocols.decode_frame(wire, key=LINK_KEY, require_signed=True,
                                               replay=self._replay)
            except Exception as exc:  # bad uplink frames are dropped loudly
                sim.note("rbc.uplink", f"rejected: {type(exc).__name__}")
                continue
            sim.note("rbc.uplink", f"command frame accepted counter={frame.counter}")
            self.pubsub.publish(self.node, scenario_mod.TOPIC_COMMAND_UP, frame.payload)

    def seed_poll(self, sim: Simulator) -> None:
        """Housekeeping poll over the bus; fails after ejection (no termination)."""
        report = self.pubsub.publish(self.node, scenario_mod.TOPIC_RBC_POLL, b"poll")
        if report.failed_links:
            sim.note("rbc.can", "seed poll failed: bus error")


@dataclass
class MissionArtifacts:
    scenario_name: str
    trace: object
    seeds: dict
    bridge: object
    ejection_time_s: float = None
    duration_s: float = 0.0
    out_dir: str = None


def _estimate_duration(sc) -> float:
    if sc.duration_s is not None:
        return sc.duration_s
    if sc.profile.kind == "windtunnel":
        return 120.0
    # integrate the sink table coarsely for the descent time
    profile = sc.profile
    h = profile.apogee_m
    t = 0.0
    while h > 0 and t < 3600:
        from .sensors import _sink_rate
        sink = _sink_rate(profile.sink_table, h)
        h -= sink * 1.0
        t += 1.0
    return profile.apogee_time_s + t + 30.0


def run_mission(sc, bridge=None, out_dir=None, until_s: float = None) -> MissionArtifacts:
    """Execute one scenario end to end and return the run artifacts."""
    sim = Simulator(seed=sc.seed)
    bridge = bridge or RecordingBridge()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    pubsub = PubSub(sim, sc.topics)
    uart_links = {
        Unit.Seed1: UartLink("uart.Seed1", NodeId(NodeKind.SBC, Unit.Seed1),
                             NodeId(NodeKind.COP, Unit.Seed1),
                             sc.uart.bitrate, sc.uart.byte_error_rate),
        Unit.Seed2: UartLink("uart.Seed2", NodeId(NodeKind.SBC, Unit.Seed2),
                             NodeId(NodeKind.COP, Unit.Seed2),
                             sc.uart.bitrate, sc.uart.byte_error_rate),
    }
    arb = {NodeId.parse(k): v for k, v in sc.can.arbitration_ids.items()}
    can = CanBus("can.main", arbitration_ids=arb, bitrate=sc.can.bitrate,
                 rocket_nodes=frozenset({NodeId(NodeKind.RBC, Unit.Rocket)}),
                 seed_nodes=frozenset({NodeId(NodeKind.SBC, Unit.Seed1),
                                       NodeId(NodeKind.SBC, Unit.Seed2)}),
                 rocket_terminated_alone=sc.can.rocket_terminated_alone)
    iridium = IridiumService(loss_probability=sc.iridium.loss_probability,
                             latency_min_s=sc.iridium.latency_min_s,
                             latency_max_s=sc.iridium.latency_max_s,
                             deliver=bridge.send_sbd)
    umbilicals = {u: UmbilicalLink(unit=u.value) for u in (Unit.Seed1, Unit.Seed2)}

    for unit, link in uart_links.items():
        pubsub.install_link_sender(link.link_id,
                                   lambda s, src, data, cb, link=link: link.send(s, src, data, cb))
    pubsub.install_link_sender("can.main",
                               lambda s, src, data, cb: can.send(s, src, data, cb))

    # gateways per the default routing table; only the SBCs sit on the bus,
    # the co-processors reach it through their UART + SBC
    for unit in (Unit.Seed1, Unit.Seed2):
        sbc = NodeId(NodeKind.SBC, unit)
        cop = NodeId(NodeKind.COP, unit)
        pubsub.register_gateway(Gateway(sbc, f"uart.{unit.value}",
                                        frozenset({scenario_mod.TOPIC_SENSORS[unit]})))
        pubsub.register_gateway(Gateway(cop, f"uart.{unit.value}",
                                        frozenset({scenario_mod.TOPIC_POWER_LOCAL[unit]})))
        pubsub.register_gateway(Gateway(sbc, "can.main",
                                        frozenset({scenario_mod.TOPIC_TELEMETRY_DOWN,
                                                   scenario_mod.TOPIC_POWER_DOWN,
                                                   scenario_mod.TOPIC_COMMAND_ACK})))
    rbc_node = NodeId(NodeKind.RBC, Unit.Rocket)
    pubsub.register_gateway(Gateway(rbc_node, "can.main",
                                    frozenset({scenario_mod.TOPIC_COMMAND_UP,
                                               scenario_mod.TOPIC_RBC_POLL})))

    seeds = {unit: SeedSoftware(sim, sc, unit, pubsub, iridium, umbilicals[unit],
                                out_dir=out_dir)
             for unit in (Unit.Seed1, Unit.Seed2)}
    rbc = RocketSoftware(sim, sc, pubsub, bridge, can)

    # commands arrive at the SBC over the bus and are handled by the seed stack
    for unit, seed in seeds.items():
        pubsub.subscribe(NodeId(NodeKind.SBC, unit), scenario_mod.TOPIC_COMMAND_UP,
                         seed.on_command)
        # cross-subscriptions exercising the intra-seed UART
        pubsub.subscribe(NodeId(NodeKind.COP, unit), scenario_mod.TOPIC_SENSORS[unit],
                         seed.on_cop_sensor_feed)
        pubsub.subscribe(NodeId(NodeKind.SBC, unit),
                         scenario_mod.TOPIC_POWER_LOCAL[unit], seed.on_sbc_power_feed)

    # fault injections
    for fault in sc.faults:
        if fault.get("type") == "flat_spin":
            descriptor = inject_flat_spin(sc.profile, fault["t0_s"],
                                          fault.get("duration_s", 20.0),
                                          fault.get("magnitude_g", 115.0))
            for seed in seeds.values():
                seed.flat_spin = descriptor

    duration = until_s if until_s is not None else _estimate_duration(sc)

    # periodic work
    sensor_period = us(1.0 / sc.sensor_rate_hz)
    status_period = us(sc.status_interval_s)
    for unit, seed in seeds.items():
        sim.every(sensor_period, sensor_period, seed.acquisition_tick,
                  label=f"acq.{unit.value}", target=f"SBC.{unit.value}",
                  until_us=us(duration))
        sim.every(status_period, status_period, seed.status_tick,
                  label=f"status.{unit.value}", target=f"SBC.{unit.value}",
                  until_us=us(duration))
        sim.every(us(sc.iridium.sbd_interval_s), us(sc.iridium.sbd_interval_s),
                  seed.sbd_tick, label=f"sbd.{unit.value}",
                  target=f"SBC.{unit.value}", until_us=us(duration))
    sim.every(us(1.0), us(1.0), rbc.uplink_poll, label="uplink-poll",
              target="RBC.Rocket", until_us=us(duration))
    if sc.rbc_poll_interval_s:
        sim.every(us(sc.rbc_poll_interval_s), us(sc.rbc_poll_interval_s),
                  rbc.seed_poll, label="seed-poll", target="RBC.Rocket",
                  until_us=us(duration))

    ejection_time = None
    if sc.profile.kind == "nominal":
        ejection_time = sc.profile.apogee_time_s

        def ejection(s: Simulator):
            # atomic: power loss and bus detach happen inside one event
            for umb in umbilicals.values():
                umb.severed = True
                umb.sever_time_us = s.now_us
            can.split(s)
            rbc.ejected = True
            for seed in seeds.values():
                seed.on_ejection(s)

        sim.at(us(ejection_time), ejection, label="ejection", target="mission")

    trace = sim.run_until(us(duration))

    for seed in seeds.values():
        seed.close()
    if out_dir is not None:
        trace.write_jsonl(os.path.join(out_dir, "trace.jsonl"))
        with open(os.path.join(out_dir, "trace.digest"), "w") as fh:
            fh.write(trace.digest() + "\n")

    return MissionArtifacts(
        scenario_name=sc.name, trace=trace,
        seeds={u: s.artifacts for u, s in seeds.items()},
        bridge=bridge, ejection_time_s=ejection_time,
        duration_s=duration, out_dir=out_dir)
