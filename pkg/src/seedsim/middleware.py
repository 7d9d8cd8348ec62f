"""Topic-based publish/subscribe between software components on the nodes.

Publications are delivered synchronously to same-node subscribers. For other
nodes a gateway bound to a link serializes the message (topic id + payload)
and hands it to the link's transport; a message crosses a given link at most
once, and remotely received messages are only delivered locally, never
re-forwarded, so the topology stays loop-free.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import BusError, SizeMismatch, UnknownTopic
from .kernel import NodeId, Simulator

_WIRE_HEADER = struct.Struct("<H")  # topic id


@dataclass(frozen=True)
class Topic:
    id: int
    name: str
    size: int
    link: str = None  # link id the topic is routed over, or None for local-only


class TopicRegistry:
    def __init__(self, topics=()):
        self.by_id: dict[int, Topic] = {}
        for t in topics:
            self.add(t)

    def add(self, topic: Topic) -> None:
        if topic.id in self.by_id:
            raise ValueError(f"duplicate topic id {topic.id}")
        self.by_id[topic.id] = topic

    def get(self, topic_id: int) -> Topic:
        t = self.by_id.get(topic_id)
        if t is None:
            raise UnknownTopic(f"topic {topic_id} not registered")
        return t


@dataclass(frozen=True)
class PubSubMessage:
    topic_id: int
    source: NodeId
    publish_time_us: int
    payload: bytes

    def trace_label(self) -> str:
        return f"pubsub topic={self.topic_id} src={self.source}"


@dataclass(frozen=True)
class Gateway:
    """Forwards locally published messages on `node` out over `link`."""
    node: NodeId
    link: str
    topics: frozenset


@dataclass
class DeliveryReport:
    topic_id: int
    local_recipients: int
    forwarded_links: tuple = ()
    failed_links: tuple = ()


@dataclass(frozen=True)
class SubscriptionHandle:
    node: NodeId
    topic_id: int


class PubSub:
    """Scenario-wide message broker running on the kernel timeline."""

    def __init__(self, sim: Simulator, registry: TopicRegistry):
        self.sim = sim
        self.registry = registry
        self._subs: dict[tuple[NodeId, int], list] = {}
        self._gateways: list[Gateway] = []
        # link id -> send(sim, src_node, data, deliver_cb); installed by the
        # scenario wiring once transports exist.
        self._link_senders: dict = {}

    # -- wiring ------------------------------------------------------------

    def register_gateway(self, gateway: Gateway) -> None:
        for tid in gateway.topics:
            self.registry.get(tid)
        self._gateways.append(gateway)
        self._check_disjoint_routing()

    def _check_disjoint_routing(self) -> None:
        # A topic must leave a node over at most one link, otherwise the same
        # publication could arrive twice via different paths.
        seen: dict[tuple[NodeId, int], str] = {}
        for gw in self._gateways:
            for tid in gw.topics:
                key = (gw.node, tid)
                if key in seen and seen[key] != gw.link:
                    raise ValueError(
                        f"topic {tid} on {gw.node} forwarded over both "
                        f"{seen[key]} and {gw.link}")
                seen[key] = gw.link

    def install_link_sender(self, link_id: str, sender) -> None:
        self._link_senders[link_id] = sender

    # -- api ---------------------------------------------------------------

    def subscribe(self, node: NodeId, topic_id: int, handler) -> SubscriptionHandle:
        self.registry.get(topic_id)
        handlers = self._subs.setdefault((node, topic_id), [])
        if handler not in handlers:  # double subscribe still yields one copy
            handlers.append(handler)
        return SubscriptionHandle(node=node, topic_id=topic_id)

    def publish(self, node: NodeId, topic_id: int, payload: bytes) -> DeliveryReport:
        topic = self.registry.get(topic_id)
        if len(payload) != topic.size:
            raise SizeMismatch(
                f"topic {topic.name!r} expects {topic.size} bytes, got {len(payload)}")
        message = PubSubMessage(topic_id=topic_id, source=node,
                                publish_time_us=self.sim.now_us, payload=bytes(payload))
        delivered = self._deliver_local(node, message)
        forwarded = []
        failed = []
        for gw in self._gateways:
            if gw.node != node or topic_id not in gw.topics:
                continue
            sender = self._link_senders.get(gw.link)
            if sender is None:
                continue
            data = _WIRE_HEADER.pack(topic_id) + message.payload
            try:
                sender(self.sim, node, data,
                       lambda rx_node, rx_data, src=node: self._on_link_delivery(rx_node, rx_data, src))
                forwarded.append(gw.link)
            except BusError:
                # local delivery above already happened; the link failure is
                # visible in the report and the event trace
                failed.append(gw.link)
        return DeliveryReport(topic_id=topic_id, local_recipients=delivered,
                              forwarded_links=tuple(forwarded),
                              failed_links=tuple(failed))

    # -- internals ----------------------------------------------------------

    def _deliver_local(self, node: NodeId, message: PubSubMessage) -> int:
        handlers = self._subs.get((node, message.topic_id), [])
        for handler in list(handlers):
            handler(message)
        return len(handlers)

    def _on_link_delivery(self, rx_node: NodeId, data: bytes, src: NodeId) -> None:
        (topic_id,) = _WIRE_HEADER.unpack_from(data)
        payload = data[_WIRE_HEADER.size:]
        message = PubSubMessage(topic_id=topic_id, source=src,
                                publish_time_us=self.sim.now_us, payload=payload)
        self._deliver_local(rx_node, message)
