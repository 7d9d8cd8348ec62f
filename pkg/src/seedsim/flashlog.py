"""On-board flash log: fixed-size little-endian records, CRC-8 per record,
written twice (two files) so a corrupted record can be reconciled from the
sibling copy on extraction.
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field

from .errors import CorruptRecord

LOG_RATE_HZ = 250
LOG_PERIOD_US = 4000

# sequence, time_us, accel precise xyz, accel high xyz, baro precise/wide,
# lat/lon (1e-7 deg), alt (mm), tach, v_bus/v_bat1/v_bat2/v_rxsm,
# i_bat1/i_bat2/i_rxsm, rotor setpoint, servo current,
# conducting mask, latch mask, validity flags, phase, crc8
_BODY = struct.Struct("<IQ3f3f2f3if4f3f2f4B")
RECORD_LEN = _BODY.size + 1

CONDUCT_BAT1 = 0x01
CONDUCT_BAT2 = 0x02
CONDUCT_RXSM = 0x04
LATCH_BAT1 = 0x01
LATCH_BAT2 = 0x02
VALID_GPS = 0x01
VALID_BARO_PRECISE = 0x02
ACCEL_PRECISE_SATURATED = 0x04
GPS_FRESH = 0x08


def _build_crc8_table() -> tuple:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ 0x07) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
        table.append(crc)
    return tuple(table)


_CRC8_TABLE = _build_crc8_table()


def crc8(data: bytes) -> int:
    crc = 0
    for b in data:
        crc = _CRC8_TABLE[crc ^ b]
    return crc


@dataclass(frozen=True)
class FlashRecord:
    sequence: int
    time_us: int
    accel_precise_g: tuple = (0.0, 0.0, 1.0)
    accel_high_g: tuple = (0.0, 0.0, 1.0)
    baro_precise_mbar: float = 0.0
    baro_wide_mbar: float = 0.0
    lat_e7: int = 0
    lon_e7: int = 0
    alt_mm: int = 0
    tach_hz: float = 0.0
    v_bus: float = 0.0
    v_bat1: float = 0.0
    v_bat2: float = 0.0
    v_rxsm: float = 0.0
    i_bat1: float = 0.0
    i_bat2: float = 0.0
    i_rxsm: float = 0.0
    rotor_setpoint_hz: float = 0.0
    servo_current_a: float = 0.0
    conducting: int = 0
    latches: int = 0
    validity: int = 0
    phase: int = 0

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["accel_precise_g"] = list(self.accel_precise_g)
        d["accel_high_g"] = list(self.accel_high_g)
        return d


def pack_record(rec: FlashRecord) -> bytes:
    body = _BODY.pack(
        rec.sequence, rec.time_us,
        *rec.accel_precise_g, *rec.accel_high_g,
        rec.baro_precise_mbar, rec.baro_wide_mbar,
        rec.lat_e7, rec.lon_e7, rec.alt_mm,
        rec.tach_hz,
        rec.v_bus, rec.v_bat1, rec.v_bat2, rec.v_rxsm,
        rec.i_bat1, rec.i_bat2, rec.i_rxsm,
        rec.rotor_setpoint_hz, rec.servo_current_a,
        rec.conducting, rec.latches, rec.validity, rec.phase)
    return body + bytes([crc8(body)])


def unpack_record(buf: bytes) -> FlashRecord:
    if len(buf) != RECORD_LEN:
        raise CorruptRecord(f"record must be {RECORD_LEN} bytes, got {len(buf)}")
    if crc8(buf[:-1]) != buf[-1]:
        raise CorruptRecord("record checksum mismatch")
    vals = _BODY.unpack(buf[:-1])
    (seq, t, apx, apy, apz, ahx, ahy, ahz, bp, bw, lat, lon, alt, tach,
     vb, v1, v2, vr, i1, i2, ir, setp, servo, cond, latch, valid, phase) = vals
    return FlashRecord(sequence=seq, time_us=t,
                       accel_precise_g=(apx, apy, apz), accel_high_g=(ahx, ahy, ahz),
                       baro_precise_mbar=bp, baro_wide_mbar=bw,
                       lat_e7=lat, lon_e7=lon, alt_mm=alt, tach_hz=tach,
                       v_bus=vb, v_bat1=v1, v_bat2=v2, v_rxsm=vr,
                       i_bat1=i1, i_bat2=i2, i_rxsm=ir,
                       rotor_setpoint_hz=setp, servo_current_a=servo,
                       conducting=cond, latches=latch, validity=valid, phase=phase)


class FlashLogWriter:
    """Appends each record to two files (the redundant flash banks)."""

    def __init__(self, path_a, path_b):
        self.path_a, self.path_b = path_a, path_b
        self._fa = open(path_a, "wb")
        self._fb = open(path_b, "wb")
        self._last_seq = None
        self._last_time = None

    def append(self, rec: FlashRecord) -> None:
        if self._last_seq is not None:
            if rec.sequence <= self._last_seq or rec.time_us <= self._last_time:
                raise ValueError(
                    f"records must be strictly increasing: seq {self._last_seq}->{rec.sequence}, "
                    f"t {self._last_time}->{rec.time_us}")
        self._last_seq = rec.sequence
        self._last_time = rec.time_us
        data = pack_record(rec)
        self._fa.write(data)
        self._fb.write(data)

    def close(self) -> None:
        self._fa.close()
        self._fb.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class ExtractionReport:
    total: int = 0
    reconciled_from_b: int = 0
    corrupt_skipped: list = field(default_factory=list)  # record indices


def extract_log(path_a, path_b=None) -> tuple:
    """Read back records, using the second copy to repair checksum failures.

    Returns (records, report). Records that fail in every copy are skipped and
    listed in the report rather than aborting the extraction.
    """
    with open(path_a, "rb") as fh:
        raw_a = fh.read()
    raw_b = b""
    if path_b is not None:
        with open(path_b, "rb") as fh:
            raw_b = fh.read()
    count = len(raw_a) // RECORD_LEN
    records = []
    report = ExtractionReport(total=count)
    for i in range(count):
        chunk = raw_a[i * RECORD_LEN:(i + 1) * RECORD_LEN]
        try:
            records.append(unpack_record(chunk))
            continue
        except CorruptRecord:
            pass
        sibling = raw_b[i * RECORD_LEN:(i + 1) * RECORD_LEN]
        if len(sibling) == RECORD_LEN:
            try:
                records.append(unpack_record(sibling))
                report.reconciled_from_b += 1
                continue
            except CorruptRecord:
                pass
        report.corrupt_skipped.append(i)
    return records, report


def write_csv(records, path) -> None:
    if not records:
        open(path, "w").close()
        return
    fields = list(records[0].to_dict().keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for rec in records:
            d = rec.to_dict()
            writer.writerow([d[k] if not isinstance(d[k], list) else
                             ";".join(f"{v:g}" for v in d[k]) for k in fields])


def write_json(records, path) -> None:
    with open(path, "w") as fh:
        json.dump([rec.to_dict() for rec in records], fh)
