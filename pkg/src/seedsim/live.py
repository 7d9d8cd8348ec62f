"""Wall-clock paced bench test: one seed on battery power streams status and
power telemetry into a running backend and executes uplinked commands. Used
to drive the operator UI end to end without flying anything.

A radio-silence command runs the full shutdown rehearsal; the recorded state
sequence is streamed out as power telemetry afterwards, so the operator sees
the battery currents drop to zero between latch-set and re-enable.
"""
from __future__ import annotations

import time

from . import protocols
from .mission import HttpBridge, LINK_KEY
from .power import PowerSystem, radio_silence_sequence
from .protocols import Frame, FrameSigner, SbdRecord, encode_sbd
from .scenario import default_schema
from .sensors import MissionPhase


def run_live(args) -> int:
    schema = default_schema()
    bridge = HttpBridge(args.backend, args.backend.split("//", 1)[-1].split(":")[0],
                        args.sbd_port)
    signer = FrameSigner(LINK_KEY)
    replay = protocols.ReplayGuard()
    power = PowerSystem(v_rxsm=0.0)  # bench test on battery power
    counter = 0
    seq = 0
    period = 1.0 / args.rate
    deadline = time.monotonic() + args.duration
    print(f"live bench test -> {args.backend} for {args.duration:.0f}s", flush=True)

    def send(msg_name: str, payload: bytes, src: int = 1) -> None:
        nonlocal seq
        seq = (seq + 1) & 0xFF
        frame = Frame(seq=seq, src=src, dst=0,
                      msg_id=schema.by_name[msg_name].msg_id, payload=payload)
        bridge.send_frame(signer.sign(frame))

    def send_power(bus, q1: bool, q2: bool) -> None:
        nonlocal counter
        counter += 1
        mask = 0
        for bit, name in ((1, "V_BAT1"), (2, "V_BAT2"), (4, "V_RXSM")):
            if name in bus.conducting:
                mask |= bit
        send("power_status", schema.encode("power_status", {
            "seed_id": 1, "counter": counter & 0xFFFF,
            "v_bus": max(0, min(0xFFFF, round(bus.bus_voltage * 1e3))),
            "i_bat1": round(bus.i_bat1 * 1e3), "i_bat2": round(bus.i_bat2 * 1e3),
            "i_rxsm": round(bus.i_rxsm * 1e3),
            "conducting": mask,
            "latches": (1 if q1 else 0) | (2 if q2 else 0),
        }))

    while time.monotonic() < deadline:
        loop_start = time.monotonic()
        counter += 1
        bus = power.step(period, load_w=6.0)
        status = SbdRecord(seed_id=1, counter=counter & 0xFFFF, lat_e7=678950000,
                           lon_e7=211020000, alt_mm=327000, vz_cm_s=0,
                           phase=int(MissionPhase.PreLaunch),
                           v_bat1_mv=round(bus.v_bat1 * 1e3),
                           v_bat2_mv=round(bus.v_bat2 * 1e3),
                           flags=protocols.SBD_FLAG_GPS_VALID)
        send("seed_status", encode_sbd(status))
        send_power(bus, power.latches.q1, power.latches.q2)

        for wire in bridge.poll_uplink():
            try:
                frame = protocols.decode_frame(wire, key=LINK_KEY, require_signed=True,
                                               replay=replay)
            except Exception:
                continue
            fields = schema.by_name["command"].decode(frame.payload)
            command = fields["command"]
            if command == 1:
                trace = radio_silence_sequence(power, load_w=6.0)
                power.v_rxsm = 0.0  # bench supply unplugged again after the rehearsal
                print("radio silence rehearsal executed", flush=True)
                for step in trace.steps:
                    send_power(step.bus, step.q1, step.q2)
            elif command == 2:
                power.latches.pulse(False, False)
                print("batteries re-enabled", flush=True)
            ack = schema.encode("command_ack", {
                "command_id": fields["command_id"], "command": command, "result": 0})
            send("command_ack", ack)
        elapsed = time.monotonic() - loop_start
        time.sleep(max(0.0, period - elapsed))
    return 0
