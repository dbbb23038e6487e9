"""Segment-structured experiment runs over the deterministic swarm.

One run spins up the full coordination protocol on the in-process
transport, drives it for `total_cycles` cycles, and distills each cycle's
broadcast decision into a flat CycleRecord. Runs are pure functions of
(config, fault schedule): the same inputs produce byte-identical traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..combining import Algorithm
from ..selfheal import CombinerDecision, HealConfig
from ..swarm.harness import FaultSchedule, SimHarness
from ..swarm.node import NodeTimeouts, SwarmLostError, SwarmNode
from .config import ScenarioConfig
from .image import ImagePayload, bitstream_to_image, read_pgm
from .observe import cycle_context, image_chunk_count, observe_branch

SIM_TIMEOUTS = NodeTimeouts(t_report=0.05, t_heartbeat=0.02, k_heartbeat=3)

TRACE_FLOAT_FMT = "{:.6f}"


@dataclass(frozen=True)
class CycleRecord:
    cycle: int
    leader: int
    algorithm: Algorithm
    n_s: int
    alive_count: int
    combined_ber: float
    combined_rate: float
    per_branch_ber: dict[int, float]
    per_branch_rate: dict[int, float]


@dataclass
class ScenarioResult:
    cfg: ScenarioConfig
    records: list[CycleRecord]
    combined_bits: dict[int, np.ndarray]  # cycle -> decided payload bits
    events: list[str]

    def segment_records(self, segment: int) -> list[CycleRecord]:
        cycles = set(self.cfg.segment_cycles(segment))
        return [r for r in self.records if r.cycle in cycles]


def _record_from_decision(d: CombinerDecision, leader: int) -> CycleRecord:
    return CycleRecord(
        cycle=d.cycle,
        leader=leader,
        algorithm=d.algorithm,
        n_s=d.n_s,
        alive_count=len(d.participants),
        combined_ber=d.combined_ber,
        combined_rate=d.data_rate,
        per_branch_ber=dict(d.branch_bers),
        per_branch_rate=dict(d.branch_rates),
    )


def run_scenario(cfg: ScenarioConfig, faults: FaultSchedule | None = None) -> ScenarioResult:
    """Run every cycle of the configured schedule on the in-process transport."""
    heal = HealConfig(ber_threshold=cfg.ber_threshold, n_total=cfg.n_receivers)
    events: list[str] = []

    def factory(node_id: int, net, clock, joining: bool) -> SwarmNode:
        return SwarmNode(
            node_id=node_id,
            n_total=cfg.n_receivers,
            observer=lambda cycle, b=node_id: observe_branch(cfg, cycle, b),
            context=lambda cycle: cycle_context(cfg, cycle),
            transport=net.endpoint(node_id),
            clock=clock,
            heal=heal,
            timeouts=SIM_TIMEOUTS,
            joining=joining,
            on_event=events.append,
        )

    harness = SimHarness(cfg.n_receivers, factory, faults=faults)
    try:
        harness.run_until_cycle(cfg.total_cycles)
    except SwarmLostError as exc:
        raise SwarmLostError(
            f"swarm lost after {max((len(n.decisions) for n in harness.nodes.values()), default=0)} cycles"
        ) from exc

    by_cycle: dict[int, tuple[CombinerDecision, int]] = {}
    for node in harness.nodes.values():
        for decision, leader in zip(node.decisions, node.decision_leaders):
            if decision.cycle < cfg.total_cycles:
                by_cycle.setdefault(decision.cycle, (decision, leader))

    records = []
    combined_bits: dict[int, np.ndarray] = {}
    for cycle in sorted(by_cycle):
        decision, leader = by_cycle[cycle]
        records.append(_record_from_decision(decision, leader))
        combined_bits[cycle] = decision.combined_bits
    return ScenarioResult(cfg=cfg, records=records, combined_bits=combined_bits, events=events)


# -- trace persistence ----------------------------------------------------


def trace_header(n_receivers: int) -> str:
    bers = ",".join(f"ber_{i}" for i in range(n_receivers))
    rates = ",".join(f"rate_{i}" for i in range(n_receivers))
    return f"cycle,leader,algorithm,n_s,alive,combined_ber,combined_rate,{bers},{rates}"


def _fmt(value: float) -> str:
    if math.isnan(value):
        return "nan"
    return TRACE_FLOAT_FMT.format(value)


def write_trace(records: list[CycleRecord], path: str | Path, n_receivers: int | None = None) -> None:
    """Fixed-precision CSV, one row per cycle; absent branches read as nan."""
    if not records:
        raise ValueError("refusing to write an empty trace")
    if n_receivers is None:
        n_receivers = max(max(r.per_branch_ber, default=0) for r in records) + 1
    lines = [trace_header(n_receivers)]
    for r in records:
        bers = [_fmt(r.per_branch_ber.get(i, math.nan)) for i in range(n_receivers)]
        rates = [_fmt(r.per_branch_rate.get(i, math.nan)) for i in range(n_receivers)]
        lines.append(
            ",".join(
                [
                    str(r.cycle),
                    str(r.leader),
                    r.algorithm.name,
                    str(r.n_s),
                    str(r.alive_count),
                    _fmt(r.combined_ber),
                    _fmt(r.combined_rate),
                    *bers,
                    *rates,
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


# -- image reconstruction ---------------------------------------------------


def reconstruct_segment_images(
    cfg: ScenarioConfig, result: ScenarioResult, segment: int
) -> tuple[ImagePayload, dict[int, ImagePayload]]:
    """Rebuild the combined and per-branch images for one segment.

    Chunk k of the image is carried by cycle (segment start + k); segments
    shorter than the chunk count leave the tail missing (mid-gray). The
    per-branch bits are re-derived from the deterministic observation
    model, which matches what each node decoded during the run.
    """
    if cfg.payload_source != "image":
        raise ValueError("scenario does not carry an image payload")
    original = read_pgm(cfg.image_path)
    chunk_total = image_chunk_count(cfg)
    cycles = list(cfg.segment_cycles(segment))[:chunk_total]

    combined_chunks = [result.combined_bits[c] for c in cycles if c in result.combined_bits]
    combined = bitstream_to_image(combined_chunks, original.width, original.height)

    branch_images: dict[int, ImagePayload] = {}
    participating = sorted({b for c in cycles for b in _branches_of(result, c)})
    for branch in participating:
        chunks = [
            observe_branch(cfg, c, branch).payload_bits
            for c in cycles
            if branch in _branches_of(result, c)
        ]
        if chunks:
            branch_images[branch] = bitstream_to_image(chunks, original.width, original.height)
    return combined, branch_images


def _branches_of(result: ScenarioResult, cycle: int) -> tuple[int, ...]:
    for r in result.records:
        if r.cycle == cycle:
            return tuple(sorted(r.per_branch_ber))
    return ()
