"""Inter-device coordination: wire codec, transports, node loop, harness."""

from .codec import (
    MsgType,
    SwarmDecodeError,
    SwarmMessage,
    decode_message,
    encode_message,
)
from .harness import FaultSchedule, SimHarness
from .node import (
    CycleContext,
    NodeTimeouts,
    SwarmLostError,
    SwarmNode,
    SwarmState,
    handle_fault,
    leader_for_cycle,
    run_node,
)
from .transport import SimClock, SimEndpoint, SimNet

__all__ = [
    "MsgType",
    "SwarmDecodeError",
    "SwarmMessage",
    "decode_message",
    "encode_message",
    "FaultSchedule",
    "SimHarness",
    "CycleContext",
    "NodeTimeouts",
    "SwarmLostError",
    "SwarmNode",
    "SwarmState",
    "handle_fault",
    "leader_for_cycle",
    "run_node",
    "SimClock",
    "SimEndpoint",
    "SimNet",
]
