"""Deterministic discrete-event kernel: scheduler, node identities, seeded RNG streams.

Simulation time is kept as 64-bit integer microseconds so that event ordering
never depends on float rounding. Randomness is drawn from named Philox
streams keyed by (scenario seed, stream label), so a consumer's draws do not
depend on how events from other consumers interleave.
"""
from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import PastEvent

US_PER_S = 1_000_000


def us(seconds: float) -> int:
    """Seconds to integer microseconds, rounded to nearest."""
    return round(seconds * US_PER_S)


def seconds(time_us: int) -> float:
    return time_us / US_PER_S


class NodeKind(str, Enum):
    RBC = "RBC"
    SBC = "SBC"
    COP = "COP"
    GroundBackend = "GroundBackend"
    RecoveryDevice = "RecoveryDevice"


class Unit(str, Enum):
    Rocket = "Rocket"
    Seed1 = "Seed1"
    Seed2 = "Seed2"
    Ground = "Ground"


@dataclass(frozen=True, order=True)
class NodeId:
    kind: NodeKind
    unit: Unit

    def __str__(self) -> str:
        return f"{self.kind.value}.{self.unit.value}"

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        kind, unit = text.split(".")
        return cls(NodeKind(kind), Unit(unit))


SEED_UNITS = (Unit.Seed1, Unit.Seed2)


def validate_node_set(nodes) -> None:
    """Check the fixed space-segment population: one RBC, two SBCs, two COPs."""
    kinds = {}
    for node in nodes:
        kinds.setdefault(node.kind, []).append(node)
    if len(kinds.get(NodeKind.RBC, [])) != 1:
        raise ValueError("scenario must contain exactly one RBC")
    for kind in (NodeKind.SBC, NodeKind.COP):
        units = sorted(n.unit for n in kinds.get(kind, []))
        if units != sorted(SEED_UNITS):
            raise ValueError(f"scenario must contain exactly one {kind.value} per seed unit")


class RngStreams:
    """Named, independently seeded random streams.

    Identical (seed, label) pairs produce identical draw sequences regardless
    of when or from where the stream is first requested.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, label: str) -> np.random.Generator:
        gen = self._streams.get(label)
        if gen is None:
            digest = hashlib.sha256(label.encode()).digest()
            words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
            ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *words])
            gen = np.random.Generator(np.random.Philox(ss))
            self._streams[label] = gen
        return gen


@dataclass(frozen=True)
class SimEvent:
    time_us: int
    sequence: int
    target: str
    payload: object = None


@dataclass(frozen=True)
class TraceEntry:
    time_us: int
    sequence: int
    target: str
    label: str


class EventTrace:
    """Ordered record of every executed event."""

    def __init__(self):
        self.entries: list[TraceEntry] = []

    def append(self, entry: TraceEntry) -> None:
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def lines(self) -> list[str]:
        return [f"{e.time_us} {e.sequence} {e.target} {e.label}" for e in self.entries]

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps({
                    "time_us": e.time_us,
                    "sequence": e.sequence,
                    "target": e.target,
                    "label": e.label,
                }) + "\n")

    def find(self, target: str = None, label_contains: str = None) -> list[TraceEntry]:
        out = []
        for e in self.entries:
            if target is not None and e.target != target:
                continue
            if label_contains is not None and label_contains not in e.label:
                continue
            out.append(e)
        return out


class Simulator:
    """Single-timeline event scheduler.

    Events run in (time, insertion sequence) order. Handlers are plain
    callables registered per target id; ad-hoc actions can be scheduled with
    :meth:`at`, which carries its own callback.
    """

    def __init__(self, seed: int = 0):
        self.now_us: int = 0
        self.rng = RngStreams(seed)
        self.trace = EventTrace()
        self._heap: list[tuple[int, int, SimEvent, Optional[Callable]]] = []
        self._next_seq = 0
        self._handlers: dict[str, Callable] = {}

    # -- wiring ------------------------------------------------------------

    def register_handler(self, target: str, handler: Callable) -> None:
        self._handlers[target] = handler

    # -- scheduling --------------------------------------------------------

    def schedule(self, time_us: int, target: str, payload: object = None,
                 label: str = None, fn: Callable = None) -> SimEvent:
        if time_us < self.now_us:
            raise PastEvent(f"schedule at {time_us} us before now={self.now_us} us")
        event = SimEvent(time_us=int(time_us), sequence=self._next_seq, target=target,
                         payload=payload)
        self._next_seq += 1
        entry_label = label if label is not None else _payload_label(payload)
        heapq.heappush(self._heap, (event.time_us, event.sequence, event, fn, entry_label))
        return event

    def at(self, time_us: int, fn: Callable, label: str, target: str = "kernel") -> SimEvent:
        """Schedule a one-shot callback `fn(sim)`."""
        return self.schedule(time_us, target, payload=None, label=label, fn=fn)

    def every(self, start_us: int, period_us: int, fn: Callable, label: str,
              target: str = "kernel", until_us: int = None) -> None:
        """Schedule `fn(sim)` periodically; `fn` may return False to stop."""

        def tick(sim):
            if fn(sim) is False:
                return
            nxt = sim.now_us + period_us
            if until_us is None or nxt <= until_us:
                sim.schedule(nxt, target, label=label, fn=tick)

        self.schedule(start_us, target, label=label, fn=tick)

    def note(self, target: str, label: str) -> None:
        """Record an observable occurrence as a zero-delay event."""
        self.schedule(self.now_us, target, label=label)

    # -- execution ---------------------------------------------------------

    def run_until(self, t_end_us: int) -> EventTrace:
        if t_end_us < self.now_us:
            raise PastEvent(f"run_until({t_end_us}) before now={self.now_us}")
        while self._heap and self._heap[0][0] <= t_end_us:
            time_us, seq, event, fn, label = heapq.heappop(self._heap)
            self.now_us = time_us
            self.trace.append(TraceEntry(time_us, seq, event.target, label))
            if fn is not None:
                fn(self)
            else:
                handler = self._handlers.get(event.target)
                if handler is not None:
                    handler(self, event)
        self.now_us = t_end_us
        return self.trace


def _payload_label(payload) -> str:
    if payload is None:
        return "-"
    if isinstance(payload, (str, int, float)):
        return str(payload)
    label = getattr(payload, "trace_label", None)
    if label is not None:
        return label() if callable(label) else str(label)
    if callable(payload):
        return getattr(payload, "__qualname__", repr(type(payload).__name__))
    return type(payload).__name__
