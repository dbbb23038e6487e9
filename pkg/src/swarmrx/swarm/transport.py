"""Message transports: a deterministic in-process network and its interface.

The in-process transport routes encoded frames between per-node inboxes
under a simulated clock, with explicit control over delivery time and node
liveness, so protocol tests replay byte-for-byte. Frames still pass through
the real wire codec on both ends. The TCP implementation with the same
interface lives in :mod:`swarmrx.swarm.tcp`.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Protocol

from .codec import MsgType, SwarmMessage, decode_message, encode_message


class Transport(Protocol):
    """Send/poll interface every node runs against."""

    def send(self, dest: int, msg: SwarmMessage) -> None: ...

    def poll(self) -> list[tuple[int, SwarmMessage]]: ...

    def close(self) -> None: ...


@dataclass
class SimClock:
    t: float = 0.0

    def now(self) -> float:
        return self.t


@dataclass(frozen=True)
class LogEntry:
    """One delivered (or dropped) frame, for post-run protocol assertions."""

    time: float
    src: int
    dst: int
    msg_type: MsgType
    cycle: int
    delivered: bool


@dataclass(order=True)
class _Pending:
    deliver_at: float
    seq: int
    dst: int = field(compare=False)
    src: int = field(compare=False)
    data: bytes = field(compare=False)


class SimNet:
    """Deterministic hub: FIFO per destination, simulated delivery delay."""

    def __init__(self, clock: SimClock, delay: float = 1e-3):
        self.clock = clock
        self.delay = delay
        self._queue: list[_Pending] = []
        self._inbox: dict[int, list[tuple[int, bytes]]] = {}
        self._dead: set[int] = set()
        self._seq = 0
        self.log: list[LogEntry] = []

    def endpoint(self, node_id: int) -> "SimEndpoint":
        self._inbox.setdefault(node_id, [])
        return SimEndpoint(self, node_id)

    def kill(self, node_id: int) -> None:
        """Drop the node: pending and future frames to it vanish."""
        self._dead.add(node_id)
        self._inbox[node_id] = []

    def revive(self, node_id: int) -> None:
        self._dead.discard(node_id)
        self._inbox[node_id] = []

    def is_dead(self, node_id: int) -> bool:
        return node_id in self._dead

    def send(self, src: int, dest: int, msg: SwarmMessage) -> None:
        data = encode_message(msg)
        if src in self._dead:
            return
        heapq.heappush(
            self._queue,
            _Pending(self.clock.now() + self.delay, self._seq, dest, src, data),
        )
        self._seq += 1

    def deliver_due(self) -> None:
        """Move every frame whose delivery time has arrived into its inbox."""
        now = self.clock.now()
        while self._queue and self._queue[0].deliver_at <= now:
            p = heapq.heappop(self._queue)
            msg = decode_message(p.data)
            dropped = p.dst in self._dead
            self.log.append(
                LogEntry(now, p.src, p.dst, msg.msg_type, msg.cycle, delivered=not dropped)
            )
            if not dropped:
                self._inbox.setdefault(p.dst, []).append((p.src, p.data))

    def drain(self, node_id: int) -> list[tuple[int, SwarmMessage]]:
        frames = self._inbox.get(node_id, [])
        self._inbox[node_id] = []
        return [(src, decode_message(data)) for src, data in frames]


@dataclass
class SimEndpoint:
    net: SimNet
    node_id: int

    def send(self, dest: int, msg: SwarmMessage) -> None:
        self.net.send(self.node_id, dest, msg)

    def poll(self) -> list[tuple[int, SwarmMessage]]:
        return self.net.drain(self.node_id)

    def close(self) -> None:
        pass
