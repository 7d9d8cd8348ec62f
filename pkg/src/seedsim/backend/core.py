"""Ground-station backend logic, independent of the HTTP/TCP plumbing.

Everything that arrives is normalized into one self-describing JSON record:
decoded telemetry and undecodable inputs alike (the latter as quarantine
records with the raw bytes preserved). All writes funnel through the record
store's single serialization point.
"""
from __future__ import annotations

import datetime as _dt
import struct
import threading
import time
from dataclasses import dataclass

from .. import protocols
from ..errors import (
    InsufficientData,
    PhaseError,
    SeedSimError,
    UnknownType,
)
from ..sensors import MissionPhase, PRE_EJECTION_PHASES
from .prediction import Fix, LandingPrediction, predict_landing
from .store import RecordStore

SBD_MAGIC = 0x5344
_SBD_HEADER = struct.Struct("<HH")  # magic, payload length

COMMANDS = {
    "request-radio-silence": 1,
    "re-enable-batteries": 2,
    "set-test-mode": 3,
    "ping": 4,
}
COMMAND_NAMES = {v: k for k, v in COMMANDS.items()}

CHANNELS = ("rxsm", "iridium", "lora-test")


def _iso_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="milliseconds")


@dataclass
class CommandRequest:
    command_id: int
    command: str
    target: str
    issued_by: str
    issued_at: float
    timeout_s: float
    acked_at: float = None

    def ack_state(self, now: float = None) -> str:
        if self.acked_at is not None:
            return "acked"
        now = time.monotonic() if now is None else now
        return "timed-out" if now - self.issued_at > self.timeout_s else "pending"

    def to_dict(self) -> dict:
        out = {
            "command_id": self.command_id,
            "command": self.command,
            "target": self.target,
            "issued_by": self.issued_by,
            "ack_state": self.ack_state(),
        }
        if self.acked_at is not None:
            out["round_trip_s"] = round(self.acked_at - self.issued_at, 4)
        return out


@dataclass
class BackendConfig:
    schema_path: str = None
    store_path: str = "ingest.ndjson"
    fsync_batch: int = 1
    link_key_hex: str = "7365656473696d2d6c696e6b2d6b6579"  # shared link signing key
    require_signed_downlink: bool = False
    command_timeout_s: float = 10.0
    status_interval_s: float = 1.0
    uplink_src: int = 0xF0


class Backend:
    def __init__(self, config: BackendConfig, schema: protocols.MessageSchema,
                 store: RecordStore = None):
        self.config = config
        self.schema = schema
        self.store = store or RecordStore(config.store_path, config.fsync_batch)
        self.key = bytes.fromhex(config.link_key_hex)
        self._replay = protocols.ReplayGuard()
        self._signer = protocols.FrameSigner(self.key)
        self._lock = threading.Lock()
        self._commands: dict[int, CommandRequest] = {}
        self._next_command_id = 1
        self._uplink: list[dict] = []  # {"seq": n, "frame": hex}
        self._uplink_event = threading.Condition()
        self._fixes: dict[int, list[Fix]] = {}
        self._predictions: dict[int, LandingPrediction] = {}
        self._phase = MissionPhase.PreLaunch
        self._started = time.monotonic()

    # ------------------------------------------------------------------ ingest

    def ingest_frame(self, data: bytes, channel: str) -> dict:
        """Decode one downlink frame; failures become quarantine records."""
        base = {
            "receive_time": _iso_now(),
            "channel": channel,
            "raw": data.hex(),
        }
        try:
            frame = protocols.decode_frame(
                data, key=self.key,
                require_signed=self.config.require_signed_downlink,
                replay=self._replay)
            name, raw_fields = self.schema.decode_by_id(frame.msg_id, frame.payload)
            fields = self.schema.by_name[name].normalize(raw_fields)
        except UnknownType:
            return self._quarantine(base, "UnknownMessage")
        except SeedSimError as exc:
            return self._quarantine(base, type(exc).__name__)
        base.update({
            "origin": frame.src,
            "message": name,
            "fields": fields,
        })
        record = self.store.append(base)
        self._post_ingest(record, raw_fields)
        return record

    def ingest_sbd_payload(self, payload: bytes) -> dict:
        """One satellite short-burst-data payload (already unwrapped)."""
        base = {
            "receive_time": _iso_now(),
            "channel": "iridium",
            "raw": payload.hex(),
        }
        try:
            rec = protocols.decode_sbd(payload)
        except SeedSimError as exc:
            return self._quarantine(base, type(exc).__name__)
        raw_fields = {
            "version": rec.version, "seed_id": rec.seed_id, "counter": rec.counter,
            "lat": rec.lat_e7, "lon": rec.lon_e7, "alt": rec.alt_mm,
            "vz": rec.vz_cm_s, "phase": rec.phase,
            "v_bat1": rec.v_bat1_mv, "v_bat2": rec.v_bat2_mv, "flags": rec.flags,
        }
        # normalize through the same schema message as the framed path, so the
        # two channels produce field-wise identical JSON
        fields = self.schema.by_name["seed_status"].normalize(raw_fields)
        base.update({
            "origin": rec.seed_id,
            "message": "seed_status",
            "fields": fields,
        })
        record = self.store.append(base)
        self._post_ingest(record, raw_fields)
        return record

    def handle_sbd_connection(self, read, write=None) -> list:
        """Consume length-prefixed SBD messages from a connection.

        `read(n)` must return exactly n bytes or fewer at EOF. Malformed input
        is logged as a quarantine record and closes the connection.
        """
        records = []
        while True:
            header = read(_SBD_HEADER.size)
            if not header:
                return records
            if len(header) < _SBD_HEADER.size:
                records.append(self._quarantine(
                    {"receive_time": _iso_now(), "channel": "iridium",
                     "raw": header.hex()}, "Truncated"))
                return records
            magic, length = _SBD_HEADER.unpack(header)
            if magic != SBD_MAGIC:
                records.append(self._quarantine(
                    {"receive_time": _iso_now(), "channel": "iridium",
                     "raw": header.hex()}, "BadMagic"))
                return records
            payload = read(length)
            if len(payload) < length:
                records.append(self._quarantine(
                    {"receive_time": _iso_now(), "channel": "iridium",
                     "raw": (header + payload).hex()}, "Truncated"))
                return records
            records.append(self.ingest_sbd_payload(payload))

    def _quarantine(self, base: dict, error: str) -> dict:
        base.update({"origin": None, "message": None, "fields": {}, "error": error})
        return self.store.append(base)

    # ---------------------------------------------------------------- reactions

    def _post_ingest(self, record: dict, raw_fields: dict) -> None:
        phase = raw_fields.get("phase")
        if phase is not None and 0 <= phase <= MissionPhase.Landed:
            with self._lock:
                if phase > self._phase:
                    self._phase = MissionPhase(phase)
        if record["message"] == "seed_status" and raw_fields.get("flags", 0) & protocols.SBD_FLAG_GPS_VALID:
            fields = record["fields"]
            # the status counter is the telemetry time base: one tick per
            # status interval, immune to downlink latency jitter
            fix = Fix(t_s=raw_fields["counter"] * self.config.status_interval_s,
                      lat_deg=fields["lat"]["value"], lon_deg=fields["lon"]["value"],
                      alt_m=fields["alt"]["value"])
            seed = raw_fields["seed_id"]
            with self._lock:
                history = self._fixes.setdefault(seed, [])
                if not any(f.t_s == fix.t_s for f in history[-50:]):
                    history.append(fix)
                    history.sort(key=lambda f: f.t_s)
                del history[:-200]
                if raw_fields.get("phase") == MissionPhase.Descent:
                    try:
                        self._predictions[seed] = predict_landing(history)
                    except InsufficientData:
                        pass
        if record["message"] == "command_ack":
            command_id = raw_fields.get("command_id")
            with self._lock:
                cmd = self._commands.get(command_id)
                if cmd is not None and cmd.acked_at is None:
                    cmd.acked_at = time.monotonic()

    def add_fix(self, seed: int, fix: Fix, descending: bool = True) -> None:
        """Direct fix injection for offline/testing use."""
        with self._lock:
            history = self._fixes.setdefault(seed, [])
            history.append(fix)
            if descending:
                try:
                    self._predictions[seed] = predict_landing(history)
                except InsufficientData:
                    pass

    # ---------------------------------------------------------------- queries

    def prediction(self, seed: int) -> LandingPrediction:
        with self._lock:
            pred = self._predictions.get(seed)
        if pred is None:
            raise InsufficientData(f"no landing prediction for seed {seed}")
        return pred

    @property
    def phase(self) -> MissionPhase:
        with self._lock:
            return self._phase

    def health(self) -> dict:
        return {
            "status": "ok",
            "records": len(self.store),
            "phase": self.phase.name,
            "uptime_s": round(time.monotonic() - self._started, 3),
        }

    # ---------------------------------------------------------------- commands

    def dispatch_command(self, command: str, target: str,
                         issued_by: str = "operator") -> CommandRequest:
        if command not in COMMANDS:
            raise ValueError(f"unknown command {command!r}")
        if self.phase not in PRE_EJECTION_PHASES:
            raise PhaseError(f"commands are not accepted in phase {self.phase.name}")
        with self._lock:
            command_id = self._next_command_id
            self._next_command_id += 1
            req = CommandRequest(command_id=command_id, command=command, target=target,
                                 issued_by=issued_by, issued_at=time.monotonic(),
                                 timeout_s=self.config.command_timeout_s)
            self._commands[command_id] = req
        target_kind, _, target_unit = target.partition(".")
        payload = self.schema.encode("command", {
            "command_id": command_id,
            "command": COMMANDS[command],
            "target_kind": {"RBC": 0, "SBC": 1, "COP": 2}.get(target_kind, 2),
            "target_unit": {"Rocket": 0, "Seed1": 1, "Seed2": 2}.get(target_unit, 0),
        })
        frame = protocols.Frame(seq=command_id & 0xFF, src=self.config.uplink_src,
                                dst=protocols.BROADCAST,
                                msg_id=self.schema.by_name["command"].msg_id,
                                payload=payload)
        wire = self._signer.sign(frame)
        with self._uplink_event:
            self._uplink.append({"seq": len(self._uplink), "frame": wire.hex(),
                                 "command_id": command_id})
            self._uplink_event.notify_all()
        return req

    def command_status(self, command_id: int) -> CommandRequest:
        with self._lock:
            cmd = self._commands.get(command_id)
        if cmd is None:
            raise KeyError(command_id)
        return cmd

    def commands(self) -> list:
        with self._lock:
            return [c.to_dict() for c in self._commands.values()]

    def uplink_since(self, since: int, wait_s: float = 0.0) -> list:
        deadline = time.monotonic() + wait_s
        with self._uplink_event:
            while True:
                pending = [u for u in self._uplink if u["seq"] >= since]
                if pending or wait_s <= 0:
                    return pending
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return pending
                self._uplink_event.wait(remaining)
