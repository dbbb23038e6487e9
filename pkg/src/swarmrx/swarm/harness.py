"""Single-threaded deterministic driver for a full swarm.

Advances a simulated clock in fixed ticks; each tick delivers due frames
and steps the surviving nodes in index order, so a given configuration and
fault schedule replays exactly. Faults are injected by cycle number: a kill
silences the node and drops its inbound traffic, a revival boots a fresh
node in joining mode that must re-admit itself through the protocol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .node import SwarmNode, SwarmLostError
from .transport import SimClock, SimNet

NodeFactory = Callable[[int, "SimNet", SimClock, bool], SwarmNode]


@dataclass
class FaultSchedule:
    """Cycle-triggered kill/revive actions, each applied at most once."""

    kill_at: dict[int, int] = field(default_factory=dict)  # node -> cycle
    revive_at: dict[int, int] = field(default_factory=dict)


class SimHarness:
    def __init__(
        self,
        n_nodes: int,
        node_factory: NodeFactory,
        tick: float = 1e-3,
        faults: FaultSchedule | None = None,
    ):
        self.clock = SimClock()
        self.net = SimNet(self.clock, delay=tick)
        self.tick = tick
        self.n_nodes = n_nodes
        self.node_factory = node_factory
        self.faults = faults or FaultSchedule()
        self.nodes: dict[int, SwarmNode] = {
            i: node_factory(i, self.net, self.clock, False) for i in range(n_nodes)
        }
        self.live: set[int] = set(range(n_nodes))
        self._done_kills: set[int] = set()
        self._done_revives: set[int] = set()

    def kill(self, node_id: int) -> None:
        self.live.discard(node_id)
        self.net.kill(node_id)

    def revive(self, node_id: int) -> None:
        self.net.revive(node_id)
        self.nodes[node_id] = self.node_factory(node_id, self.net, self.clock, True)
        self.live.add(node_id)

    def max_cycle(self) -> int:
        return max((self.nodes[i].state.cycle for i in self.live), default=0)

    def _apply_faults(self) -> None:
        for node_id, cyc in self.faults.kill_at.items():
            if node_id not in self._done_kills and node_id in self.live:
                if self.nodes[node_id].state.cycle >= cyc:
                    self.kill(node_id)
                    self._done_kills.add(node_id)
        for node_id, cyc in self.faults.revive_at.items():
            if node_id not in self._done_revives and node_id not in self.live:
                if self.max_cycle() >= cyc:
                    self.revive(node_id)
                    self._done_revives.add(node_id)

    def run_until_cycle(self, target: int, max_ticks: int | None = None) -> None:
        """Advance until every live node has recorded a decision for target-1."""
        if max_ticks is None:
            max_ticks = 400 * target + 200_000
        for _ in range(max_ticks):
            if not self.live:
                raise SwarmLostError("every node has been killed")
            self._apply_faults()
            self.clock.t += self.tick
            self.net.deliver_due()
            for node_id in sorted(self.live):
                self.nodes[node_id].step()
            if all(self.nodes[i]._last_recorded >= target - 1 for i in self.live):
                return
        raise TimeoutError(f"swarm made no full progress to cycle {target} in {max_ticks} ticks")

    # -- post-run inspection ----------------------------------------------

    def decision_senders_by_cycle(self) -> dict[int, set[int]]:
        """Which nodes broadcast a DECISION for each cycle (from the wire log)."""
        senders: dict[int, set[int]] = {}
        for entry in self.net.log:
            if entry.msg_type.name == "DECISION":
                senders.setdefault(entry.cycle, set()).add(entry.src)
        return senders
