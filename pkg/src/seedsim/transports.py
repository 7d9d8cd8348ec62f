"""Behavioral models of the physical links between the nodes.

Every model is an event handler on the kernel timeline; none keeps state
outside what the kernel schedules. Latencies are frame-level (serialization
time at the configured bitrate), not bit-level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import BusError, PayloadTooLarge
from .kernel import NodeId, Simulator, us

UART_BITS_PER_BYTE = 10  # 8N1: start + 8 data + stop


# --------------------------------------------------------------------------
# UART (point-to-point, FIFO)
# --------------------------------------------------------------------------

@dataclass
class UartLink:
    link_id: str
    a: NodeId
    b: NodeId
    bitrate: float = 115200.0
    byte_error_rate: float = 0.0
    _busy_until_us: int = 0

    def peer(self, node: NodeId) -> NodeId:
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise ValueError(f"{node} is not an endpoint of {self.link_id}")

    def send(self, sim: Simulator, src: NodeId, data: bytes, deliver) -> None:
        """Queue `data` for the peer; `deliver(rx_node, data)` runs on arrival."""
        dst = self.peer(src)
        airtime_us = us(len(data) * UART_BITS_PER_BYTE / self.bitrate)
        start = max(sim.now_us, self._busy_until_us)
        done = start + airtime_us
        self._busy_until_us = done
        if self.byte_error_rate > 0.0:
            rng = sim.rng.stream(f"uart.{self.link_id}")
            p_ok = (1.0 - self.byte_error_rate) ** len(data)
            if rng.random() >= p_ok:
                sim.schedule(done, self.link_id, label=f"drop {len(data)}B {src}->{dst}")
                return
        sim.schedule(done, self.link_id, label=f"deliver {len(data)}B {src}->{dst}",
                     fn=lambda s: deliver(dst, data))


# --------------------------------------------------------------------------
# CAN bus with split-at-ejection semantics
# --------------------------------------------------------------------------

def can_arbitrate(contenders) -> list:
    """Order simultaneous contenders: lowest 11-bit arbitration id first.

    `contenders` is an iterable of (node, arbitration_id); ties are broken by
    submission order, which the caller encodes in iteration order.
    """
    indexed = list(enumerate(contenders))
    indexed.sort(key=lambda item: (item[1][1], item[0]))
    return [entry for _, entry in indexed]


@dataclass
class _PendingTx:
    arb_id: int
    order: int
    src: NodeId
    data: bytes
    deliver: object


@dataclass
class CanBus:
    link_id: str
    arbitration_ids: dict
    bitrate: float = 500_000.0
    rocket_nodes: frozenset = frozenset()
    seed_nodes: frozenset = frozenset()
    rocket_terminated_alone: bool = False  # termination left on the rocket segment
    intact: bool = True
    _pending: list = field(default_factory=list)
    _busy_until_us: int = 0
    _order: int = 0
    _grant_scheduled: bool = False

    def nodes(self) -> frozenset:
        return self.rocket_nodes | self.seed_nodes if self.intact else self.rocket_nodes

    def split(self, sim: Simulator) -> None:
        """Ejection: seed-side stubs detach, leaving the rocket segment alone."""
        self.intact = False
        self._pending = [tx for tx in self._pending if tx.src in self.rocket_nodes]
        sim.note(self.link_id, "split: seed segment detached")

    def _check_can_transmit(self, src: NodeId) -> None:
        if self.intact:
            if src not in self.nodes():
                raise BusError(f"{src} is not attached to {self.link_id}")
            return
        if src not in self.rocket_nodes:
            raise BusError(f"{src} detached from {self.link_id} at ejection")
        if not self.rocket_terminated_alone:
            raise BusError(
                f"{self.link_id} segment unterminated after ejection; arbitration impossible")

    def send(self, sim: Simulator, src: NodeId, data: bytes, deliver) -> None:
        try:
            self._check_can_transmit(src)
        except BusError:
            sim.note(self.link_id, f"bus-error: tx refused from {src}")
            raise
        arb_id = self.arbitration_ids[src]
        self._pending.append(_PendingTx(arb_id, self._order, src, data, deliver))
        self._order += 1
        self._schedule_grant(sim)

    def _schedule_grant(self, sim: Simulator) -> None:
        if self._grant_scheduled or not self._pending:
            return
        self._grant_scheduled = True
        at = max(sim.now_us, self._busy_until_us)
        sim.schedule(at, self.link_id, label="bus grant", fn=self._grant)

    def _grant(self, sim: Simulator) -> None:
        self._grant_scheduled = False
        if not self._pending:
            return
        order = can_arbitrate([(tx.src, tx.arb_id) for tx in self._pending])
        winner_key = order[0]
        idx = next(i for i, tx in enumerate(self._pending)
                   if (tx.src, tx.arb_id) == winner_key)
        tx = self._pending.pop(idx)
        airtime_us = us(len(tx.data) * 8 / self.bitrate)
        done = sim.now_us + airtime_us
        self._busy_until_us = done
        receivers = tuple(sorted((n for n in self.nodes() if n != tx.src), key=str))

        def complete(s: Simulator, tx=tx, receivers=receivers):
            for node in receivers:
                tx.deliver(node, tx.data)
            # every accepted frame is acknowledged by the other participants
            s.schedule(s.now_us, self.link_id, label=f"ack id=0x{tx.arb_id:03X} to {tx.src}")
            self._schedule_grant(s)

        sim.schedule(done, self.link_id, label=f"tx id=0x{tx.arb_id:03X} {len(tx.data)}B from {tx.src}",
                     fn=complete)


# --------------------------------------------------------------------------
# LoRa channel: log-distance path loss + antenna gain + shadowing
# --------------------------------------------------------------------------

@dataclass
class LoRaChannel:
    tx_power_dbm: float = 14.0
    path_loss_exponent: float = 2.7
    reference_loss_db: float = 40.0   # at 1 m
    noise_sigma_db: float = 2.0
    sensitivity_dbm: float = -137.0
    data_rate_bps: float = 300.0

    def path_rssi(self, tx_pos, rx_pos, rx_heading_deg: float, pattern,
                  rng=None) -> float:
        """Deterministic RSSI plus optional shadowing noise (no threshold)."""
        dx = tx_pos[0] - rx_pos[0]
        dy = tx_pos[1] - rx_pos[1]
        dz = (tx_pos[2] - rx_pos[2]) if len(tx_pos) > 2 else 0.0
        for v in (dx, dy, dz):
            if not math.isfinite(v):
                raise ValueError("positions must be finite")
        distance = max(math.sqrt(dx * dx + dy * dy + dz * dz), 1e-3)
        bearing = math.degrees(math.atan2(dx, dy))  # 0 deg = north, 90 = east
        off_axis = abs(wrap_angle(bearing - rx_heading_deg))
        gain = pattern.gain_db(off_axis)
        loss = self.reference_loss_db + 10.0 * self.path_loss_exponent * math.log10(distance)
        rssi = self.tx_power_dbm + gain - loss
        if rng is not None and self.noise_sigma_db > 0.0:
            rssi += float(rng.normal(0.0, self.noise_sigma_db))
        return rssi

    def receive(self, tx_pos, rx_pos, rx_heading_deg: float, pattern, rng=None):
        """RSSI in dBm, or None when the frame is below sensitivity (lost)."""
        rssi = self.path_rssi(tx_pos, rx_pos, rx_heading_deg, pattern, rng)
        if rssi < self.sensitivity_dbm:
            return None
        return rssi

    def airtime_s(self, n_bytes: int) -> float:
        return n_bytes * 8 / self.data_rate_bps


def wrap_angle(deg: float) -> float:
    """Wrap to (-180, 180]."""
    wrapped = (deg + 180.0) % 360.0 - 180.0
    return 180.0 if wrapped == -180.0 else wrapped


# --------------------------------------------------------------------------
# Iridium short-burst-data service
# --------------------------------------------------------------------------

@dataclass
class IridiumService:
    loss_probability: float = 0.05
    latency_min_s: float = 10.0
    latency_max_s: float = 60.0
    max_payload: int = 340
    deliver: object = None  # callable(payload: bytes); e.g. a TCP client

    def send_sbd(self, sim: Simulator, seed: NodeId, payload: bytes) -> None:
        if len(payload) > self.max_payload:
            raise PayloadTooLarge(
                f"SBD payload {len(payload)}B exceeds {self.max_payload}B")
        rng = sim.rng.stream("iridium")
        lost = rng.random() < self.loss_probability
        if lost:
            sim.schedule(sim.now_us, "iridium",
                         label=f"dropped {len(payload)}B from {seed}")
            return
        latency = float(rng.uniform(self.latency_min_s, self.latency_max_s))
        done = sim.now_us + us(latency)
        payload = bytes(payload)

        def arrive(s: Simulator):
            if self.deliver is not None:
                self.deliver(payload)

        sim.schedule(sim.now_us, "iridium", label=f"accepted {len(payload)}B from {seed}")
        sim.schedule(done, "iridium", label=f"delivered {len(payload)}B from {seed}",
                     fn=arrive)


# --------------------------------------------------------------------------
# Umbilical from the rocket service module
# --------------------------------------------------------------------------

@dataclass
class UmbilicalLink:
    unit: str
    v_supply: float = 28.0
    severed: bool = False
    sever_time_us: int = None

    @property
    def v_rxsm(self) -> float:
        return 0.0 if self.severed else self.v_supply

    def sever(self, sim: Simulator) -> None:
        self.severed = True
        self.sever_time_us = sim.now_us
        sim.note(f"umbilical.{self.unit}", "severed, V_RXSM=0")
