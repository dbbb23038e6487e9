"""Rotating-leader coordination: one node's per-cycle state machine.

Every cycle the leader is `sorted(alive)[cycle mod len(alive)]`. Followers
process their own branch, send a REPORT to the leader, and wait for the
DECISION broadcast; the leader collects reports until everyone alive has
reported or the report timeout expires, runs the healing step, and
broadcasts the DECISION (which carries the participant set, so every node
derives the same alive set and therefore the same rotation).

Fault handling is timeout-driven and symmetric: a leader that misses a
report excludes the silent node; followers that miss the decision (or its
heartbeats) exclude the leader and re-run the same cycle under the next
leader in rotation. Excluded or restarted nodes rejoin by sending HELLO and
re-anchoring their cycle counter on the next DECISION they observe. A node
never exits on a peer failure; with every peer gone it keeps producing
single-branch decisions on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from ..combining import BranchSet, estimate_jammer_taps
from ..selfheal import BranchReport, CombinerDecision, HealConfig, heal_cycle
from .codec import MsgType, SwarmMessage
from .transport import Transport


class SwarmLostError(Exception):
    """No alive node remains."""


def leader_for_cycle(cycle: int, alive: Iterable[int]) -> int:
    """Round-robin leadership over the canonically ordered alive set."""
    members = sorted(alive)
    if not members:
        raise SwarmLostError("no alive nodes to lead the cycle")
    return members[cycle % len(members)]


@dataclass
class SwarmState:
    """Protocol-visible node state, kept separate for direct testing."""

    alive: set[int]
    cycle: int
    current_leader: int
    pending_reports: dict[int, BranchReport] = field(default_factory=dict)


def handle_fault(state: SwarmState, missing: int, now: float) -> SwarmState:
    """Exclude a silent node and recompute leadership for the same cycle."""
    alive = set(state.alive) - {missing}
    if not alive:
        raise SwarmLostError(f"node {missing} was the last alive member")
    pending = {k: v for k, v in state.pending_reports.items() if k != missing}
    return replace(
        state,
        alive=alive,
        current_leader=leader_for_cycle(state.cycle, alive),
        pending_reports=pending,
    )


@dataclass(frozen=True)
class CycleContext:
    """Everything the leader needs beyond the reports to heal one cycle."""

    reference: np.ndarray
    p_g: float
    p_j: float
    sigma2: float
    frame_duration: float
    use_residual_csi: bool = False


@dataclass(frozen=True)
class NodeTimeouts:
    t_report: float = 0.05
    t_heartbeat: float = 0.02
    k_heartbeat: int = 3

    @property
    def t_decision(self) -> float:
        return 2.0 * self.t_report


_START = "start"
_COLLECT = "collect"
_AWAIT = "await_decision"
_JOIN = "join"


class SwarmNode:
    """One receiver's coordination loop, driven by repeated :meth:`step` calls.

    `observer(cycle)` produces this node's BranchReport for a cycle and
    `context(cycle)` the leader-side healing inputs; both must be pure
    functions of the cycle index so every process derives the same values
    independently.
    """

    def __init__(
        self,
        node_id: int,
        n_total: int,
        observer: Callable[[int], BranchReport],
        context: Callable[[int], CycleContext],
        transport: Transport,
        clock,
        heal: HealConfig | None = None,
        timeouts: NodeTimeouts | None = None,
        joining: bool = False,
        on_decision: Callable[[CombinerDecision, int], None] | None = None,
        on_event: Callable[[str], None] | None = None,
    ):
        self.node_id = node_id
        self.n_total = n_total
        self.observer = observer
        self.context = context
        self.transport = transport
        self.clock = clock
        self.heal = heal or HealConfig(n_total=n_total)
        self.timeouts = timeouts or NodeTimeouts()
        self.on_decision = on_decision
        self.on_event = on_event

        alive = {node_id} if joining else set(range(n_total))
        self.state = SwarmState(alive=alive, cycle=0, current_leader=0)
        self.phase = _JOIN if joining else _START
        self.decisions: list[CombinerDecision] = []
        self.decision_leaders: list[int] = []
        self.lead_count = 0

        now = clock.now()
        self._own_report: BranchReport | None = None
        self._expected: set[int] = set()
        self._deadline = now
        self._last_hb_sent = now - self.timeouts.t_heartbeat
        self._last_hello_sent = now - self.timeouts.t_heartbeat
        self._last_seen: dict[int, float] = {p: now for p in range(n_total) if p != node_id}
        self._last_recorded = -1
        # reports that raced ahead of our cycle counter, keyed (cycle, sender)
        self._report_stash: dict[tuple[int, int], BranchReport] = {}
        # nodes re-admitted by HELLO but not yet visible in a decision
        self._recent_joins: set[int] = set()
        self._said_hello = not joining  # fresh starters greet on first step

    # -- helpers ---------------------------------------------------------

    def _log(self, text: str) -> None:
        if self.on_event is not None:
            self.on_event(f"node {self.node_id}: {text}")

    def _peers(self) -> list[int]:
        return sorted(self.state.alive - {self.node_id})

    def _send(self, dest: int, msg_type: MsgType, payload=None) -> None:
        self.transport.send(
            dest,
            SwarmMessage(msg_type=msg_type, sender=self.node_id, cycle=self.state.cycle, payload=payload),
        )

    def _exclude(self, missing: int, reason: str) -> None:
        if missing not in self.state.alive or missing == self.node_id:
            return
        self.state = handle_fault(self.state, missing, self.clock.now())
        self._recent_joins.discard(missing)
        self._log(f"excluded node {missing} ({reason}); alive={sorted(self.state.alive)}")

    # -- cycle machinery --------------------------------------------------

    def _start_cycle(self) -> None:
        now = self.clock.now()
        st = self.state
        st.current_leader = leader_for_cycle(st.cycle, st.alive)
        self._own_report = self.observer(st.cycle)
        st.pending_reports = {self.node_id: self._own_report}
        for (cyc, src), report in list(self._report_stash.items()):
            if cyc < st.cycle:
                del self._report_stash[(cyc, src)]
            elif cyc == st.cycle:
                st.pending_reports[src] = report
                del self._report_stash[(cyc, src)]
        if st.current_leader == self.node_id:
            self.phase = _COLLECT
            self._expected = set(st.alive)
            self._deadline = now + self.timeouts.t_report
        else:
            self.phase = _AWAIT
            self._send(st.current_leader, MsgType.REPORT, self._own_report)
            self._deadline = now + self.timeouts.t_decision

    def _advance_cycle(self) -> None:
        self.state.cycle += 1
        self.phase = _START

    def _decide(self) -> None:
        st = self.state
        reports = [st.pending_reports[i] for i in sorted(st.pending_reports) if i in st.alive]
        ctx = self.context(st.cycle)
        decision = lead_heal(reports, ctx, self.heal)
        self.lead_count += 1
        self._recent_joins -= set(decision.participants)
        for dest in self._peers():
            self._send(dest, MsgType.DECISION, decision)
        for dest in range(self.n_total):
            if dest not in st.alive and dest != self.node_id:
                # courtesy copy so a merely-slow node can spot its exclusion and rejoin
                self._send(dest, MsgType.DECISION, decision)
        self._record(decision, leader=self.node_id)
        self._advance_cycle()

    def _record(self, decision: CombinerDecision, leader: int) -> None:
        if decision.cycle <= self._last_recorded:
            return
        self._last_recorded = decision.cycle
        self.decisions.append(decision)
        self.decision_leaders.append(leader)
        if self.on_decision is not None:
            self.on_decision(decision, leader)

    # -- message handling --------------------------------------------------

    def _handle(self, src: int, msg: SwarmMessage) -> None:
        now = self.clock.now()
        self._last_seen[src] = now
        st = self.state

        if msg.msg_type is MsgType.HELLO:
            if src not in st.alive:
                st.alive.add(src)
                self._recent_joins.add(src)
                self._log(f"node {src} joined; alive={sorted(st.alive)}")
            self._send(src, MsgType.HEARTBEAT)
            return
        if msg.msg_type is MsgType.GOODBYE:
            if src in st.alive:
                was_leader = src == st.current_leader
                self._exclude(src, "goodbye")
                if was_leader and self.phase == _AWAIT:
                    self._failover()
            return
        if msg.msg_type is MsgType.HEARTBEAT:
            return

        if msg.msg_type is MsgType.REPORT:
            if self.phase == _JOIN or not isinstance(msg.payload, BranchReport):
                return
            if msg.cycle == st.cycle:
                if src not in st.alive:
                    st.alive.add(src)  # report from an excluded-but-live node
                    self._recent_joins.add(src)
                st.pending_reports[src] = msg.payload
            elif msg.cycle > st.cycle:
                self._report_stash[(msg.cycle, src)] = msg.payload
            return

        if msg.msg_type is MsgType.DECISION and isinstance(msg.payload, CombinerDecision):
            d = msg.payload
            if self.phase == _JOIN:
                self._adopt(d, src)
                self._log(f"rejoined at cycle {self.state.cycle}")
                return
            if d.cycle < st.cycle:
                return
            self._adopt(d, src)

    def _adopt(self, decision: CombinerDecision, leader: int) -> None:
        """Accept a broadcast decision as authoritative and move on."""
        st = self.state
        self._recent_joins -= set(decision.participants)
        st.alive = set(decision.participants) | {leader, self.node_id} | self._recent_joins
        self._record(decision, leader)
        st.cycle = decision.cycle
        if self.node_id not in decision.participants and self.phase != _JOIN:
            # the leader timed us out; greet everyone so we are re-admitted
            for dest in self._peers():
                self._send(dest, MsgType.HELLO)
        self._advance_cycle()

    def _failover(self) -> None:
        """The leader went silent; re-run this cycle under the next leader."""
        st = self.state
        new_leader = leader_for_cycle(st.cycle, st.alive)
        st.current_leader = new_leader
        now = self.clock.now()
        if new_leader == self.node_id:
            self.phase = _COLLECT
            self._expected = set(st.alive)
            self._deadline = now + self.timeouts.t_report
            self._log(f"assumed leadership of cycle {st.cycle}")
        else:
            self.phase = _AWAIT
            self._send(new_leader, MsgType.REPORT, self._own_report)
            self._deadline = now + self.timeouts.t_decision

    # -- main entry ---------------------------------------------------------

    def step(self) -> None:
        now = self.clock.now()
        if not self._said_hello:
            for dest in self._peers():
                self._send(dest, MsgType.HELLO)
            self._said_hello = True

        for src, msg in self.transport.poll():
            self._handle(src, msg)

        st = self.state
        if self.phase == _JOIN:
            if now - self._last_hello_sent >= self.timeouts.t_heartbeat:
                self._last_hello_sent = now
                for dest in range(self.n_total):
                    if dest != self.node_id:
                        self._send(dest, MsgType.HELLO)
            return

        # liveness horizon from heartbeats and any other traffic
        horizon = self.timeouts.k_heartbeat * self.timeouts.t_heartbeat
        for peer in sorted(st.alive):
            if peer == self.node_id:
                continue
            if now - self._last_seen.get(peer, now) > horizon:
                was_leader = peer == st.current_leader
                self._exclude(peer, "heartbeat timeout")
                if was_leader and self.phase == _AWAIT:
                    self._failover()

        if self.phase == _START:
            self._start_cycle()
        if self.phase == _COLLECT:
            have = set(st.pending_reports) & st.alive
            if (self._expected & st.alive) <= have:
                self._decide()
            elif now >= self._deadline:
                for missing in sorted((self._expected & st.alive) - have):
                    self._exclude(missing, "report timeout")
                self._decide()
        elif self.phase == _AWAIT:
            if now >= self._deadline:
                self._exclude(st.current_leader, "decision timeout")
                self._failover()

        if now - self._last_hb_sent >= self.timeouts.t_heartbeat:
            self._last_hb_sent = now
            for dest in self._peers():
                self._send(dest, MsgType.HEARTBEAT)

    def stop(self) -> None:
        """Graceful leave: tell the peers before going away."""
        for dest in self._peers():
            self._send(dest, MsgType.GOODBYE)
        self.transport.close()


def lead_heal(reports: list[BranchReport], ctx: CycleContext, heal: HealConfig) -> CombinerDecision:
    """Build the combining input from the collected reports and heal.

    With residual-based interference estimation the measured jammer taps
    (jammer amplitude folded in) replace the per-branch genie taps and the
    jammer power is pinned to one, which leaves the covariance term in the
    healing step unchanged in form.
    """
    reports = sorted(reports, key=lambda r: r.branch_id)
    R = np.vstack([r.payload_symbols for r in reports])
    h = np.array([r.estimate.h for r in reports], dtype=np.complex128)
    if ctx.use_residual_csi and all(r.preamble_residual.size for r in reports):
        residuals = np.vstack([r.preamble_residual for r in reports])
        h_j = estimate_jammer_taps(residuals, ctx.sigma2)
        p_j = 1.0
    else:
        h_j = np.array(
            [r.estimate.h_j if r.estimate.h_j is not None else 0.0 for r in reports],
            dtype=np.complex128,
        )
        p_j = ctx.p_j
    bs = BranchSet(
        R=R,
        h=h,
        h_j=h_j,
        p_g=ctx.p_g,
        p_j=p_j,
        sigma2=ctx.sigma2,
        alive_mask=np.ones(len(reports), dtype=bool),
    )
    return heal_cycle(reports, bs, heal, ctx.reference, ctx.frame_duration)


def run_node(node: SwarmNode, stop_check: Callable[[], bool], idle_sleep: float = 0.002) -> None:
    """Drive a node against a real-time transport until `stop_check` fires."""
    import time

    while not stop_check():
        node.step()
        time.sleep(idle_sleep)
    node.stop()
