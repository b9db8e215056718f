"""End-to-end gesture pipeline: segment, flow, classify, detect, report.

Per frame: the background model labels pixels, the shadow pass reclaims
dimmed background, the labeled mask becomes the flow input (binary
foreground by default, masked grayscale otherwise), flow against the
previous frame's input is summed over foreground, and the resulting
per-frame direction feeds a trailing majority vote and the gesture
detector. The first burn_in_frames are model warm-up: they update the
background model but are never classified, and throughput is measured
over the classified span only.

Every classified frame emits one JSON line with fixed four-decimal
sums, so identical inputs and configuration produce byte-identical
event streams.
"""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .classify import (
    ClassifierConfig,
    Direction,
    GestureConfig,
    GestureDetector,
    GestureEvent,
    classify_direction,
    sum_flow,
    vote,
)
from .flow import FlowConfig, FlowField, solve_flow, write_flo
from .frames import (
    DirectorySource,
    Frame,
    FrameSource,
    RawStreamSource,
    encode_pnm,
    to_gray,
)
from .gmm import BackgroundModel, FOREGROUND, GmmConfig, process_frame
from .shadow import ShadowConfig, apply_shadow_pass


class ConfigError(ValueError):
    """Invalid pipeline configuration (bad JSON, unknown key, bad value)."""


@dataclass(frozen=True)
class InputSpec:
    """Where frames come from: an image directory or a raw byte stream."""

    mode: str = "directory"
    path: str | None = None
    width: int | None = None
    height: int | None = None
    channels: int = 3

    def __post_init__(self):
        if self.mode not in ("directory", "raw"):
            raise ConfigError(f"input mode must be directory or raw, got {self.mode!r}")
        if self.mode == "raw" and (not self.width or not self.height):
            raise ConfigError("raw input requires width and height")


@dataclass(frozen=True)
class PipelineConfig:
    input: InputSpec = InputSpec()
    gmm: GmmConfig = GmmConfig()
    shadow: ShadowConfig = ShadowConfig()
    flow: FlowConfig = FlowConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    gesture: GestureConfig = GestureConfig()
    burn_in_frames: int = 50
    dump_masks: str | None = None
    dump_flow: str | None = None
    events_path: str | None = None

    def __post_init__(self):
        if self.burn_in_frames < 0:
            raise ConfigError(f"burn_in_frames must be >= 0, got {self.burn_in_frames}")


_SECTION_TYPES = {
    "input": InputSpec,
    "gmm": GmmConfig,
    "shadow": ShadowConfig,
    "flow": FlowConfig,
    "classifier": ClassifierConfig,
    "gesture": GestureConfig,
}


def _build_section(cls, doc: dict, name: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {name} option(s): {', '.join(sorted(unknown))}")
    try:
        return cls(**doc)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad {name} configuration: {exc}") from None


def config_from_dict(doc: dict) -> PipelineConfig:
    """Build a PipelineConfig from a parsed JSON document.

    Every field is optional; omitted fields keep their defaults.
    Unknown keys are configuration errors.
    """
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be an object, got {type(doc).__name__}")
    known = set(_SECTION_TYPES) | {"burn_in_frames", "dump"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")

    kwargs = {}
    for key, cls in _SECTION_TYPES.items():
        if key in doc:
            kwargs[key] = _build_section(cls, doc[key], key)
    dump = doc.get("dump", {})
    if not isinstance(dump, dict):
        raise ConfigError("dump section must be an object")
    unknown = set(dump) - {"masks", "flow", "events"}
    if unknown:
        raise ConfigError(f"unknown dump option(s): {', '.join(sorted(unknown))}")
    if "burn_in_frames" in doc:
        kwargs["burn_in_frames"] = int(doc["burn_in_frames"])
    return PipelineConfig(
        dump_masks=dump.get("masks"),
        dump_flow=dump.get("flow"),
        events_path=dump.get("events"),
        **kwargs,
    )


def load_config(path: str | Path) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    return config_from_dict(doc)


@dataclass
class RunReport:
    """What one pipeline run saw and how fast it ran."""

    frames_processed: int = 0
    classified_frames: int = 0
    fps: float = 0.0
    direction_counts: dict[str, int] = field(default_factory=dict)
    gesture_events: list[GestureEvent] = field(default_factory=list)
    directions: list[Direction] = field(default_factory=list)
    event_lines: list[str] = field(default_factory=list)


def format_event(frame_index: int, s_x: float, s_y: float,
                 direction: Direction, gesture: str | None) -> str:
    """One JSONL event with fixed four-decimal sums."""
    g = "null" if gesture is None else f'"{gesture}"'
    return (
        f'{{"frame": {frame_index}, "s_x": {s_x:.4f}, "s_y": {s_y:.4f}, '
        f'"direction": "{direction.value}", "gesture": {g}}}'
    )


def make_source(spec: InputSpec, raw_stream=None) -> FrameSource:
    if spec.mode == "raw":
        if raw_stream is None:
            if spec.path is None:
                raise ConfigError("raw input needs a stream or a path")
            raw_stream = open(spec.path, "rb")
        return RawStreamSource(raw_stream, spec.width, spec.height, spec.channels)
    if spec.path is None:
        raise ConfigError("directory input needs a path")
    return DirectorySource(spec.path)


def _flow_input(mask, frame: Frame, mode: str) -> np.ndarray:
    if mode == "binary":
        return np.where(mask.labels == FOREGROUND, 255.0, 0.0)
    gray = to_gray(frame).data
    return np.where(mask.labels == FOREGROUND, gray, 0.0)


def run_pipeline(config: PipelineConfig, source: FrameSource | None = None,
                 events_out=None) -> RunReport:
    """Process a frame source end to end.

    source defaults to one built from config.input. Event lines go to
    events_out (a text file object) when given, to config.events_path
    when set, and are always collected in the returned report.
    """
    if source is None:
        source = make_source(config.input)

    own_events = None
    if events_out is None and config.events_path is not None:
        own_events = open(config.events_path, "w")
        events_out = own_events
    mask_dir = Path(config.dump_masks) if config.dump_masks else None
    flow_dir = Path(config.dump_flow) if config.dump_flow else None
    if mask_dir:
        mask_dir.mkdir(parents=True, exist_ok=True)
    if flow_dir:
        flow_dir.mkdir(parents=True, exist_ok=True)

    burn_in = config.burn_in_frames
    report = RunReport()
    model: BackgroundModel | None = None
    prev_input: np.ndarray | None = None
    window: deque[Direction] = deque(maxlen=config.classifier.vote_window)
    detector = GestureDetector(config.gesture)
    started = None

    try:
        for frame in source:
            k = frame.index
            if model is None:
                model = BackgroundModel(frame.width, frame.height, frame.channels,
                                        config.gmm)
            if k == burn_in:
                started = time.perf_counter()

            mask = process_frame(model, frame)
            mask = apply_shadow_pass(mask, frame, model, config.shadow)
            if mask_dir:
                (mask_dir / f"mask_{k:06d}.pgm").write_bytes(
                    encode_pnm(mask.to_frame())
                )

            flow_img = _flow_input(mask, frame, config.flow.input_mode)
            if k >= burn_in:
                if prev_input is not None:
                    flow = solve_flow(prev_input, flow_img, config.flow)
                    if flow_dir:
                        write_flo(flow, flow_dir / f"flow_{k:06d}.flo")
                else:
                    flow = FlowField.zeros((frame.height - 1, frame.width - 1))
                summary = sum_flow(flow, mask, frame_index=k)
                direction = classify_direction(summary, config.classifier)
                window.append(direction)
                voted = vote(list(window))
                event = detector.feed(k, voted)
                if event is not None:
                    report.gesture_events.append(event)

                line = format_event(k, summary.s_x, summary.s_y, direction,
                                    event.kind if event else None)
                report.event_lines.append(line)
                if events_out is not None:
                    events_out.write(line + "\n")
                report.directions.append(direction)
                name = direction.value
                report.direction_counts[name] = report.direction_counts.get(name, 0) + 1
                report.classified_frames += 1

            prev_input = flow_img
            report.frames_processed += 1
    finally:
        if own_events is not None:
            own_events.close()

    if started is not None and report.classified_frames > 0:
        elapsed = time.perf_counter() - started
        if elapsed > 0.0:
            report.fps = report.classified_frames / elapsed
    return report


def bench(config: PipelineConfig, source: FrameSource | None = None,
          min_frames: int = 100) -> RunReport:
    """Measure post-burn-in throughput; needs at least min_frames classified."""
    report = run_pipeline(config, source=source)
    if report.classified_frames < min_frames:
        raise ValueError(
            f"benchmark needs >= {min_frames} classified frames, got "
            f"{report.classified_frames}"
        )
    return report


@dataclass
class EvaluationRow:
    direction: str
    n_clips: int = 0
    n_correct: int = 0

    @property
    def rate(self) -> float | None:
        if self.n_clips == 0:
            return None
        return self.n_correct / self.n_clips


@dataclass
class EvaluationReport:
    rows: list[EvaluationRow] = field(default_factory=list)

    @property
    def n_clips(self) -> int:
        return sum(r.n_clips for r in self.rows)

    @property
    def n_correct(self) -> int:
        return sum(r.n_correct for r in self.rows)

    @property
    def overall(self) -> float | None:
        if self.n_clips == 0:
            return None
        return self.n_correct / self.n_clips

    def format_table(self) -> str:
        def fmt(rate):
            return "n/a" if rate is None else f"{100.0 * rate:.1f}%"

        lines = [f"{'direction':<10} {'clips':>5} {'correct':>7} {'rate':>7}"]
        for row in self.rows:
            lines.append(
                f"{row.direction:<10} {row.n_clips:>5} {row.n_correct:>7} "
                f"{fmt(row.rate):>7}"
            )
        lines.append(
            f"{'overall':<10} {self.n_clips:>5} {self.n_correct:>7} "
            f"{fmt(self.overall):>7}"
        )
        return "\n".join(lines)


def clip_recognition(report: RunReport) -> Direction:
    """Collapse a run to one label: majority over classified frames."""
    if not report.directions:
        return Direction.IDLE
    return vote(report.directions)


def evaluate(manifest_path: str | Path, config: PipelineConfig) -> EvaluationReport:
    """Run the pipeline over every corpus clip and tally per-direction accuracy.

    A clip counts as correct when the majority direction over its
    classified frames equals the manifest label.
    """
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    clips = manifest.get("clips", [])
    order = [d.value for d in (Direction.LEFT, Direction.RIGHT, Direction.UP, Direction.DOWN)]
    rows = {name: EvaluationRow(name) for name in order}

    for clip in clips:
        expected = clip["direction"]
        if expected not in rows:
            rows[expected] = EvaluationRow(expected)
        source = DirectorySource(manifest_path.parent / clip["path"])
        report = run_pipeline(config, source=source)
        recognized = clip_recognition(report)
        row = rows[expected]
        row.n_clips += 1
        if recognized.value == expected:
            row.n_correct += 1

    ordered = [rows[name] for name in order if rows[name].n_clips > 0]
    extras = [row for name, row in rows.items() if name not in order and row.n_clips > 0]
    return EvaluationReport(ordered + extras)
