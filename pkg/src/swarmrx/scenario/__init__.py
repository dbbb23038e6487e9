"""Experiment orchestration: configs, observation model, runner, images."""

from .config import ScenarioConfig, ScenarioConfigError, load_scenario, validate_config
from .image import (
    ImagePayload,
    bitstream_to_image,
    image_to_bitstream,
    make_test_pattern,
    psnr,
    read_pgm,
    write_pgm,
)
from .observe import branch_received, cycle_context, observe_branch, reference_bits
from .runner import (
    CycleRecord,
    ScenarioResult,
    reconstruct_segment_images,
    run_scenario,
    trace_header,
    write_trace,
)

__all__ = [
    "ScenarioConfig",
    "ScenarioConfigError",
    "load_scenario",
    "validate_config",
    "ImagePayload",
    "bitstream_to_image",
    "image_to_bitstream",
    "make_test_pattern",
    "psnr",
    "read_pgm",
    "write_pgm",
    "branch_received",
    "cycle_context",
    "observe_branch",
    "reference_bits",
    "CycleRecord",
    "ScenarioResult",
    "reconstruct_segment_images",
    "run_scenario",
    "trace_header",
    "write_trace",
]
