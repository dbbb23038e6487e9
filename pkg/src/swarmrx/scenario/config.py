"""Scenario files: a flat key/value text format with repeated table lines.

Grammar (one statement per line, `#` starts a comment):

    key = value                      scalar settings
    channel_taps = 1.0@20, 1.0@-63   per-branch tap as magnitude@phase_deg
    fading_gains = 1.0, 1.0, 1.0     per-branch Rayleigh gain scale
    trajectory = b, base, amp, period_cycles, phase_deg   (one line per branch)
    jammer = start_cycle, power_dbm|off, idx:gain idx:gain | -   (one per segment)
    peers = host, host, host         per-node addresses for the tcp transport

Every run is segment-structured: segment k covers cycles
[k*frames_per_segment, (k+1)*frames_per_segment) and the jammer lines must
start exactly at those boundaries. Unknown keys, bad values, and invariant
violations are all collected and reported together with the offending
field names.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..channel import JammerSchedule, JammerSegment

_VALID_CHANNEL_MODELS = ("fixed", "fading", "trajectory")
_VALID_TRANSPORTS = ("inprocess", "tcp")
_VALID_JAMMER_CSI = ("genie", "residual")


class ScenarioConfigError(Exception):
    """Config file unreadable or invalid; message lists every problem found."""


@dataclass(frozen=True)
class TrajectoryRow:
    base: float
    amplitude: float
    period_cycles: float
    phase_deg: float


@dataclass(frozen=True)
class ScenarioConfig:
    n_receivers: int = 3
    seed: int = 1
    frames_per_segment: int = 30
    payload_bits: int = 2048
    frame_duration_s: float = 1e-3
    ber_threshold: float = 0.05
    tx_power_dbm: float = -4.0
    noise_sigma2: float = 0.0251
    channel_model: str = "fixed"
    channel_taps: tuple[complex, ...] = ()
    fading_gains: tuple[float, ...] = ()
    trajectory: tuple[TrajectoryRow, ...] = ()
    jammer: JammerSchedule = field(
        default_factory=lambda: JammerSchedule((JammerSegment(0, None, {}),))
    )
    jammer_csi: str = "genie"
    payload_source: str = "random"
    image_path: Path | None = None
    transport: str = "inprocess"
    zc_root: int = 5
    zc_length: int = 63
    sample_rate_hz: float = 1e6
    timing_pad_max: int = 16
    cfo_max: float = 0.0
    cfo_correction: str = "auto"
    sync_detection_ratio: float = 4.0
    base_port: int = 47100
    peers: tuple[str, ...] = ()
    t_report_s: float = 2.0
    t_heartbeat_s: float = 0.5

    @property
    def n_segments(self) -> int:
        return len(self.jammer.segments)

    @property
    def total_cycles(self) -> int:
        return self.n_segments * self.frames_per_segment

    @property
    def frame_payload_bits(self) -> int:
        """Bits carried per frame: image chunks prepend a 16-bit sequence header."""
        if self.payload_source == "image":
            return self.payload_bits + 16
        return self.payload_bits

    def segment_of_cycle(self, cycle: int) -> int:
        return min(cycle // self.frames_per_segment, self.n_segments - 1)

    def segment_cycles(self, segment: int) -> range:
        start = segment * self.frames_per_segment
        return range(start, start + self.frames_per_segment)

    @property
    def correct_cfo(self) -> bool:
        """Whether receivers run frequency-offset correction.

        The estimator noise integrates across the payload, so 'auto' only
        enables it when the scenario actually injects an offset.
        """
        if self.cfo_correction == "auto":
            return self.cfo_max > 0
        return self.cfo_correction == "on"


_SCALAR_KEYS = {
    "n_receivers": int,
    "seed": int,
    "frames_per_segment": int,
    "payload_bits": int,
    "frame_duration_s": float,
    "ber_threshold": float,
    "tx_power_dbm": float,
    "noise_sigma2": float,
    "channel_model": str,
    "jammer_csi": str,
    "payload_source": str,
    "transport": str,
    "zc_root": int,
    "zc_length": int,
    "sample_rate_hz": float,
    "timing_pad_max": int,
    "cfo_max": float,
    "cfo_correction": str,
    "sync_detection_ratio": float,
    "base_port": int,
    "t_report_s": float,
    "t_heartbeat_s": float,
}

_TABLE_KEYS = ("jammer", "trajectory", "channel_taps", "fading_gains", "peers")


def _parse_lines(text: str, origin: str) -> tuple[dict[str, tuple[int, str]], dict[str, list[tuple[int, str]]]]:
    scalars: dict[str, tuple[int, str]] = {}
    tables: dict[str, list[tuple[int, str]]] = {k: [] for k in _TABLE_KEYS}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key in ("jammer", "trajectory"):
            tables[key].append((lineno, value))
        elif key in _TABLE_KEYS:
            tables[key] = [(lineno, value)]
        elif key in _SCALAR_KEYS:
            if key in scalars:
                errors.append(f"{origin}:{lineno}: duplicate key '{key}'")
            scalars[key] = (lineno, value)
        else:
            errors.append(f"{origin}:{lineno}: unknown key '{key}'")
    if errors:
        raise ScenarioConfigError("\n".join(errors))
    return scalars, tables


def _parse_tap(text: str) -> complex:
    if "@" in text:
        mag_s, phase_s = text.split("@", 1)
        mag, phase = float(mag_s), math.radians(float(phase_s))
        return complex(mag * math.cos(phase), mag * math.sin(phase))
    return complex(float(text))


def _parse_jammer_line(value: str) -> JammerSegment:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 3:
        raise ValueError("expected 'start_cycle, power_dbm|off, branch:gain list or -'")
    start = int(parts[0])
    power = None if parts[1].lower() == "off" else float(parts[1])
    gains: dict[int, float] = {}
    if parts[2] != "-":
        for spec in parts[2].replace(",", " ").split():
            idx_s, gain_s = spec.split(":", 1)
            gains[int(idx_s)] = float(gain_s)
    return JammerSegment(start_cycle=start, power_dbm=power, branch_gains=gains)


def build_config(
    scalars: dict[str, tuple[int, str]],
    tables: dict[str, list[tuple[int, str]]],
    base_dir: Path,
    origin: str = "<config>",
) -> ScenarioConfig:
    errors: list[str] = []
    values: dict = {}

    for key, (lineno, raw) in scalars.items():
        caster = _SCALAR_KEYS[key]
        try:
            values[key] = caster(raw)
        except ValueError:
            errors.append(f"{origin}:{lineno}: field '{key}': cannot parse {raw!r} as {caster.__name__}")

    cfg = ScenarioConfig(**{k: v for k, v in values.items() if k != "payload_source"})

    source = values.get("payload_source", "random")
    image_path = None
    if source.startswith("image:"):
        image_path = Path(source.split(":", 1)[1])
        if not image_path.is_absolute():
            image_path = base_dir / image_path
        source = "image"
    elif source != "random":
        errors.append(f"field 'payload_source': must be 'random' or 'image:<path>', got {source!r}")
    cfg = replace(cfg, payload_source=source, image_path=image_path)

    if tables["channel_taps"]:
        lineno, raw = tables["channel_taps"][0]
        try:
            cfg = replace(cfg, channel_taps=tuple(_parse_tap(t.strip()) for t in raw.split(",") if t.strip()))
        except ValueError:
            errors.append(f"{origin}:{lineno}: field 'channel_taps': bad tap syntax in {raw!r}")
    if tables["fading_gains"]:
        lineno, raw = tables["fading_gains"][0]
        try:
            cfg = replace(cfg, fading_gains=tuple(float(t) for t in raw.split(",") if t.strip()))
        except ValueError:
            errors.append(f"{origin}:{lineno}: field 'fading_gains': bad value in {raw!r}")
    if tables["peers"]:
        _, raw = tables["peers"][0]
        cfg = replace(cfg, peers=tuple(p.strip() for p in raw.split(",") if p.strip()))

    rows: dict[int, TrajectoryRow] = {}
    for lineno, raw in tables["trajectory"]:
        try:
            b, base, amp, period, phase = (float(p) for p in raw.split(","))
            rows[int(b)] = TrajectoryRow(base, amp, period, phase)
        except ValueError:
            errors.append(f"{origin}:{lineno}: field 'trajectory': expected 'branch, base, amp, period, phase_deg'")
    if rows:
        ordered = tuple(rows[i] for i in sorted(rows))
        cfg = replace(cfg, trajectory=ordered)

    segments = []
    for lineno, raw in tables["jammer"]:
        try:
            segments.append(_parse_jammer_line(raw))
        except (ValueError, IndexError) as exc:
            errors.append(f"{origin}:{lineno}: field 'jammer': {exc}")
    if segments:
        try:
            cfg = replace(cfg, jammer=JammerSchedule(tuple(segments)))
        except ValueError as exc:
            errors.append(f"field 'jammer': {exc}")

    errors.extend(validate_config(cfg))
    if errors:
        raise ScenarioConfigError("\n".join(errors))
    return cfg


def validate_config(cfg: ScenarioConfig) -> list[str]:
    """Every invariant violation, one message per problem."""
    errors: list[str] = []
    n = cfg.n_receivers
    if n < 1:
        errors.append(f"field 'n_receivers': must be >= 1, got {n}")
    if cfg.frames_per_segment < 1:
        errors.append(f"field 'frames_per_segment': must be >= 1, got {cfg.frames_per_segment}")
    if cfg.payload_bits < 2:
        errors.append(f"field 'payload_bits': must be >= 2, got {cfg.payload_bits}")
    if cfg.frame_duration_s <= 0:
        errors.append(f"field 'frame_duration_s': must be positive, got {cfg.frame_duration_s}")
    if not 0.0 < cfg.ber_threshold < 0.5:
        errors.append(f"field 'ber_threshold': must lie in (0, 0.5), got {cfg.ber_threshold}")
    if cfg.noise_sigma2 <= 0:
        errors.append(f"field 'noise_sigma2': must be positive, got {cfg.noise_sigma2}")
    if cfg.channel_model not in _VALID_CHANNEL_MODELS:
        errors.append(f"field 'channel_model': must be one of {_VALID_CHANNEL_MODELS}, got {cfg.channel_model!r}")
    if cfg.jammer_csi not in _VALID_JAMMER_CSI:
        errors.append(f"field 'jammer_csi': must be one of {_VALID_JAMMER_CSI}, got {cfg.jammer_csi!r}")
    if cfg.transport not in _VALID_TRANSPORTS:
        errors.append(f"field 'transport': must be one of {_VALID_TRANSPORTS}, got {cfg.transport!r}")

    if cfg.channel_model == "fixed":
        if len(cfg.channel_taps) != n:
            errors.append(
                f"field 'channel_taps': fixed model needs {n} taps, got {len(cfg.channel_taps)}"
            )
    elif cfg.channel_model == "fading":
        if cfg.fading_gains and len(cfg.fading_gains) != n:
            errors.append(
                f"field 'fading_gains': need {n} entries, got {len(cfg.fading_gains)}"
            )
    elif cfg.channel_model == "trajectory":
        if len(cfg.trajectory) != n:
            errors.append(
                f"field 'trajectory': need one row per branch ({n}), got {len(cfg.trajectory)}"
            )

    for i, seg in enumerate(cfg.jammer.segments):
        expected = i * cfg.frames_per_segment
        if seg.start_cycle != expected:
            errors.append(
                f"field 'jammer': segment {i} must start at cycle {expected} "
                f"(= segment * frames_per_segment), got {seg.start_cycle}"
            )
        for branch in seg.branch_gains:
            if not 0 <= branch < n:
                errors.append(
                    f"field 'jammer': segment {i} references branch {branch}, valid range is 0..{n - 1}"
                )

    if cfg.zc_length < 2 or not 0 < cfg.zc_root < cfg.zc_length:
        errors.append(f"field 'zc_root'/'zc_length': need 0 < root < length, got {cfg.zc_root}/{cfg.zc_length}")
    elif math.gcd(cfg.zc_root, cfg.zc_length) != 1:
        errors.append(f"field 'zc_root': {cfg.zc_root} is not coprime with length {cfg.zc_length}")
    if cfg.timing_pad_max < 0:
        errors.append(f"field 'timing_pad_max': must be >= 0, got {cfg.timing_pad_max}")
    if cfg.cfo_max < 0:
        errors.append(f"field 'cfo_max': must be >= 0, got {cfg.cfo_max}")
    if cfg.cfo_correction not in ("auto", "on", "off"):
        errors.append(f"field 'cfo_correction': must be auto, on, or off, got {cfg.cfo_correction!r}")
    if cfg.sync_detection_ratio < 1:
        errors.append(f"field 'sync_detection_ratio': must be >= 1, got {cfg.sync_detection_ratio}")
    if cfg.payload_source == "image" and cfg.image_path is None:
        errors.append("field 'payload_source': image source needs a path")
    if cfg.transport == "tcp" and cfg.peers and len(cfg.peers) != n:
        errors.append(f"field 'peers': need {n} addresses, got {len(cfg.peers)}")
    return errors


def apply_overrides(
    scalars: dict[str, tuple[int, str]], overrides: list[str] | None
) -> dict[str, tuple[int, str]]:
    """Fold `key=value` strings from the command line over the file scalars."""
    if not overrides:
        return scalars
    out = dict(scalars)
    errors = []
    for item in overrides:
        if "=" not in item:
            errors.append(f"override {item!r}: expected key=value")
            continue
        key, value = (p.strip() for p in item.split("=", 1))
        if key not in _SCALAR_KEYS:
            errors.append(f"override {item!r}: unknown config key '{key}'")
            continue
        out[key] = (0, value)
    if errors:
        raise ScenarioConfigError("\n".join(errors))
    return out


def load_scenario(path: str | Path, overrides: list[str] | None = None) -> ScenarioConfig:
    """Parse, override, and validate a scenario file."""
    path = Path(path)
    if not path.is_file():
        raise ScenarioConfigError(f"scenario not found: {path}")
    scalars, tables = _parse_lines(path.read_text(), origin=str(path))
    scalars = apply_overrides(scalars, overrides)
    return build_config(scalars, tables, base_dir=path.parent, origin=str(path))
