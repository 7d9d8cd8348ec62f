"""Wire codecs for the three telemetry formats.

Three distinct encodings travel between the vehicles and the ground:

* ``Frame`` — framed, routed, CRC-protected and optionally signed packets
  used on the wired/test downlink and the rocket uplink.
* ``SbdRecord`` — a packed 24-byte struct sent raw over the satellite
  short-burst-data channel, where every byte is billed.
* ``BeaconMessage`` — the broadcast position beacon used by the recovery
  receiver.

All multi-byte integers are little-endian. Byte offsets are documented in
docs/protocol.md and must not change without bumping the version fields.
"""
from __future__ import annotations

import hashlib
import hmac
import json
import struct
from dataclasses import dataclass, field

from .errors import (
    BadCrc,
    BadSignature,
    DuplicateMsgId,
    ReplayDetected,
    Truncated,
    UnknownType,
    UnknownVersion,
    WrongLength,
)

# --------------------------------------------------------------------------
# CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no xorout)
# --------------------------------------------------------------------------

def _build_crc16_table() -> tuple:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
        table.append(crc)
    return tuple(table)


_CRC16_TABLE = _build_crc16_table()


def crc16(data: bytes) -> int:
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC16_TABLE[((crc >> 8) ^ b) & 0xFF]
    return crc


# --------------------------------------------------------------------------
# Framed link protocol
# --------------------------------------------------------------------------

SYNC_BYTE = 0xD2
BROADCAST = 0xFF
FLAG_SIGNED = 0x01

_HEADER = struct.Struct("<BBBBBHB")  # sync, len, seq, src, dst, msg_id, flags
HEADER_LEN = _HEADER.size  # 8
CRC_LEN = 2
SIG_COUNTER_LEN = 6
SIG_MAC_LEN = 6
SIGNATURE_LEN = SIG_COUNTER_LEN + SIG_MAC_LEN
MAX_PAYLOAD = 255


@dataclass(frozen=True)
class Frame:
    seq: int
    src: int
    dst: int
    msg_id: int
    payload: bytes
    signed: bool = False
    counter: int = 0

    def trace_label(self) -> str:
        return f"frame msg={self.msg_id} src={self.src} dst={self.dst} seq={self.seq}"


def _signature_mac(body: bytes, counter_bytes: bytes, key: bytes) -> bytes:
    # Keyed hash identity: HMAC-SHA256 truncated to 6 bytes (see docs/protocol.md).
    return hmac.new(key, body + counter_bytes, hashlib.sha256).digest()[:SIG_MAC_LEN]


def encode_frame(frame: Frame, key: bytes = None) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise WrongLength(f"payload {len(frame.payload)} exceeds {MAX_PAYLOAD}")
    flags = FLAG_SIGNED if frame.signed else 0
    head = _HEADER.pack(SYNC_BYTE, len(frame.payload), frame.seq & 0xFF,
                        frame.src & 0xFF, frame.dst & 0xFF, frame.msg_id & 0xFFFF, flags)
    crc = crc16(head[1:] + frame.payload)
    body = head + frame.payload + struct.pack("<H", crc)
    if not frame.signed:
        return body
    if key is None:
        raise BadSignature("signing requested without a link key")
    counter_bytes = frame.counter.to_bytes(SIG_COUNTER_LEN, "little")
    return body + counter_bytes + _signature_mac(body, counter_bytes, key)


class ReplayGuard:
    """Tracks the last accepted signature counter per source on one link."""

    def __init__(self):
        self._last: dict[int, int] = {}

    def check_and_update(self, src: int, counter: int) -> None:
        last = self._last.get(src, -1)
        if counter <= last:
            raise ReplayDetected(f"counter {counter} <= last accepted {last} for src {src}")
        self._last[src] = counter


def decode_frame(data: bytes, key: bytes = None, require_signed: bool = False,
                 replay: ReplayGuard = None) -> Frame:
    """Parse and verify one frame.

    Verification order is fixed: structure, CRC, signature, replay counter.
    """
    if len(data) < HEADER_LEN + CRC_LEN:
        raise Truncated(f"frame of {len(data)} bytes is shorter than the minimum")
    sync, plen, seq, src, dst, msg_id, flags = _HEADER.unpack_from(data)
    if sync != SYNC_BYTE:
        raise Truncated(f"bad sync byte 0x{sync:02X}")
    signed = bool(flags & FLAG_SIGNED)
    expect = HEADER_LEN + plen + CRC_LEN + (SIGNATURE_LEN if signed else 0)
    if len(data) < expect:
        raise Truncated(f"expected {expect} bytes, got {len(data)}")
    if len(data) > expect:
        raise WrongLength(f"expected {expect} bytes, got {len(data)}")
    payload = data[HEADER_LEN:HEADER_LEN + plen]
    crc_off = HEADER_LEN + plen
    (crc_rx,) = struct.unpack_from("<H", data, crc_off)
    if crc16(data[1:crc_off]) != crc_rx:
        raise BadCrc("frame CRC mismatch")
    counter = 0
    if signed:
        if key is None:
            raise BadSignature("signed frame but no key configured for this link")
        sig_off = crc_off + CRC_LEN
        counter_bytes = data[sig_off:sig_off + SIG_COUNTER_LEN]
        mac_rx = data[sig_off + SIG_COUNTER_LEN:sig_off + SIGNATURE_LEN]
        mac = _signature_mac(data[:sig_off], counter_bytes, key)
        if not hmac.compare_digest(mac, mac_rx):
            raise BadSignature("signature mismatch")
        counter = int.from_bytes(counter_bytes, "little")
        if replay is not None:
            replay.check_and_update(src, counter)
    elif require_signed:
        raise BadSignature("link policy requires signed frames")
    return Frame(seq=seq, src=src, dst=dst, msg_id=msg_id, payload=bytes(payload),
                 signed=signed, counter=counter)


class FrameSigner:
    """Monotonic signature counter for one (source, link) pair."""

    def __init__(self, key: bytes, start: int = 0):
        self.key = key
        self._counter = start

    def sign(self, frame: Frame) -> bytes:
        self._counter += 1
        return encode_frame(
            Frame(frame.seq, frame.src, frame.dst, frame.msg_id, frame.payload,
                  signed=True, counter=self._counter),
            key=self.key)


# --------------------------------------------------------------------------
# Message schema: data-driven packed-struct codecs
# --------------------------------------------------------------------------

_SCALAR_FORMATS = {
    "u8": "B", "u16": "H", "u32": "I", "u64": "Q",
    "i8": "b", "i16": "h", "i32": "i", "i64": "q",
    "f32": "f", "f64": "d",
}


def _parse_type(type_str: str) -> tuple[str, int]:
    base, count = type_str, 1
    if type_str.endswith("]"):
        base, _, rest = type_str.partition("[")
        count = int(rest[:-1])
        if count < 1:
            raise UnknownType(f"bad array length in {type_str!r}")
    if base not in _SCALAR_FORMATS:
        raise UnknownType(f"unknown field type {type_str!r}")
    return base, count


@dataclass(frozen=True)
class FieldDef:
    name: str
    type: str
    scale: float = None
    unit: str = None

    @property
    def base(self) -> str:
        return _parse_type(self.type)[0]

    @property
    def count(self) -> int:
        return _parse_type(self.type)[1]


@dataclass(frozen=True)
class MessageDef:
    name: str
    msg_id: int
    fields: tuple
    version: int = 1

    def _struct(self) -> struct.Struct:
        fmt = "<" + "".join(
            (str(f.count) if f.count > 1 else "") + _SCALAR_FORMATS[f.base]
            for f in self.fields)
        return struct.Struct(fmt)

    @property
    def size(self) -> int:
        return self._struct().size

    def encode(self, values: dict) -> bytes:
        flat = []
        for f in self.fields:
            v = values[f.name]
            if f.count > 1:
                if len(v) != f.count:
                    raise WrongLength(f"field {f.name} expects {f.count} elements")
                flat.extend(v)
            else:
                flat.append(v)
        return self._struct().pack(*flat)

    def decode(self, data: bytes) -> dict:
        if len(data) != self.size:
            raise WrongLength(f"{self.name}: expected {self.size} bytes, got {len(data)}")
        flat = list(self._struct().unpack(data))
        out = {}
        idx = 0
        for f in self.fields:
            if f.count > 1:
                out[f.name] = tuple(flat[idx:idx + f.count])
                idx += f.count
            else:
                out[f.name] = flat[idx]
                idx += 1
        return out

    def normalize(self, raw: dict) -> dict:
        """Raw decoded ints -> engineering values with unit annotations."""
        out = {}
        for f in self.fields:
            v = raw[f.name]
            if f.scale is not None:
                v = tuple(x * f.scale for x in v) if f.count > 1 else v * f.scale
            out[f.name] = {"value": v, "unit": f.unit or "raw"}
        return out


class MessageSchema:
    """A set of message definitions compiled from a JSON definition file."""

    def __init__(self, messages, version: int = 1):
        self.version = version
        self.by_name: dict[str, MessageDef] = {}
        self.by_id: dict[int, MessageDef] = {}
        for m in messages:
            if m.msg_id in self.by_id:
                raise DuplicateMsgId(f"msg id {m.msg_id} used by {self.by_id[m.msg_id].name} and {m.name}")
            if m.name in self.by_name:
                raise DuplicateMsgId(f"message name {m.name!r} defined twice")
            for f in m.fields:
                _parse_type(f.type)  # raises UnknownType
            self.by_name[m.name] = m
            self.by_id[m.msg_id] = m

    @classmethod
    def from_dict(cls, spec: dict) -> "MessageSchema":
        msgs = []
        for m in spec["messages"]:
            fields = tuple(
                FieldDef(name=f["name"], type=f["type"],
                         scale=f.get("scale"), unit=f.get("unit"))
                for f in m.get("fields", []))
            msgs.append(MessageDef(name=m["name"], msg_id=m["id"], fields=fields,
                                   version=spec.get("version", 1)))
        return cls(msgs, version=spec.get("version", 1))

    @classmethod
    def from_file(cls, path) -> "MessageSchema":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def encode(self, name: str, values: dict) -> bytes:
        return self.by_name[name].encode(values)

    def decode_by_id(self, msg_id: int, data: bytes) -> tuple[str, dict]:
        mdef = self.by_id.get(msg_id)
        if mdef is None:
            raise UnknownType(f"no message with id {msg_id}")
        return mdef.name, mdef.decode(data)


# --------------------------------------------------------------------------
# Satellite short-burst-data record (24 bytes, version-dispatched)
# --------------------------------------------------------------------------

SBD_VERSION = 1
_SBD_STRUCT = struct.Struct("<BBHiiihBHHB")
SBD_RECORD_LEN = _SBD_STRUCT.size
SBD_MAX_PAYLOAD = 340

assert SBD_RECORD_LEN == 24
assert SBD_RECORD_LEN <= SBD_MAX_PAYLOAD


@dataclass(frozen=True)
class SbdRecord:
    seed_id: int
    counter: int
    lat_e7: int        # 1e-7 degrees
    lon_e7: int        # 1e-7 degrees
    alt_mm: int
    vz_cm_s: int
    phase: int
    v_bat1_mv: int
    v_bat2_mv: int
    flags: int = 0
    version: int = SBD_VERSION


def encode_sbd(rec: SbdRecord) -> bytes:
    return _SBD_STRUCT.pack(rec.version, rec.seed_id, rec.counter, rec.lat_e7,
                            rec.lon_e7, rec.alt_mm, rec.vz_cm_s, rec.phase,
                            rec.v_bat1_mv, rec.v_bat2_mv, rec.flags)


def decode_sbd(data: bytes) -> SbdRecord:
    if len(data) != SBD_RECORD_LEN:
        raise WrongLength(f"SBD record must be {SBD_RECORD_LEN} bytes, got {len(data)}")
    version = data[0]
    if version != SBD_VERSION:
        raise UnknownVersion(f"SBD record version {version} not supported")
    (version, seed_id, counter, lat, lon, alt, vz, phase, v1, v2, flags) = _SBD_STRUCT.unpack(data)
    return SbdRecord(seed_id=seed_id, counter=counter, lat_e7=lat, lon_e7=lon,
                     alt_mm=alt, vz_cm_s=vz, phase=phase, v_bat1_mv=v1,
                     v_bat2_mv=v2, flags=flags, version=version)


SBD_FLAG_GPS_VALID = 0x01

# Field table used by the ground side to normalize an SbdRecord with the same
# names, scales and units as the equivalent schema message.
SBD_FIELDS = (
    FieldDef("version", "u8"),
    FieldDef("seed_id", "u8"),
    FieldDef("counter", "u16"),
    FieldDef("lat", "i32", scale=1e-7, unit="deg"),
    FieldDef("lon", "i32", scale=1e-7, unit="deg"),
    FieldDef("alt", "i32", scale=1e-3, unit="m"),
    FieldDef("vz", "i16", scale=1e-2, unit="m/s"),
    FieldDef("phase", "u8"),
    FieldDef("v_bat1", "u16", scale=1e-3, unit="V"),
    FieldDef("v_bat2", "u16", scale=1e-3, unit="V"),
    FieldDef("flags", "u8"),
)


# --------------------------------------------------------------------------
# Recovery beacon (16 bytes)
# --------------------------------------------------------------------------

_BEACON_STRUCT = struct.Struct("<BBHiii")
BEACON_LEN = _BEACON_STRUCT.size
BEACON_FLAG_FIX = 0x01


@dataclass(frozen=True)
class BeaconMessage:
    seed_id: int
    has_fix: bool
    counter: int
    lat_e7: int = 0
    lon_e7: int = 0
    alt_mm: int = 0


def encode_beacon(msg: BeaconMessage) -> bytes:
    # Without a fix the position fields are forced to zero (dummy data).
    lat, lon, alt = (msg.lat_e7, msg.lon_e7, msg.alt_mm) if msg.has_fix else (0, 0, 0)
    flags = BEACON_FLAG_FIX if msg.has_fix else 0
    return _BEACON_STRUCT.pack(msg.seed_id, flags, msg.counter, lat, lon, alt)


def decode_beacon(data: bytes) -> BeaconMessage:
    if len(data) != BEACON_LEN:
        raise WrongLength(f"beacon must be {BEACON_LEN} bytes, got {len(data)}")
    seed_id, flags, counter, lat, lon, alt = _BEACON_STRUCT.unpack(data)
    has_fix = bool(flags & BEACON_FLAG_FIX)
    if not has_fix:
        lat, lon, alt = 0, 0, 0
    return BeaconMessage(seed_id=seed_id, has_fix=has_fix, counter=counter,
                         lat_e7=lat, lon_e7=lon, alt_mm=alt)
