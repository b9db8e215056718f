"""Per-frame motion direction and gesture detection from summed flow.

The flow field over the segmented foreground is collapsed to a single
summed vector per frame; only the signs of its components matter for
direction. Sign conventions: the summed vector lives in a y-up world
(positive s_y means upward screen motion), while flow fields are y-down,
so v is negated during summation. That bridge lives in sum_flow and
nowhere else. Zero components count as positive.

Per-frame directions are smoothed by majority vote over a trailing
window, and a small state machine turns sustained alternation into
gestures: left/right alternation is a head shake (NO), up/down
alternation a nod (YES).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .flow import FlowField
from .gmm import FOREGROUND, SegmentationMask


class Direction(Enum):
    IDLE = "IDLE"
    LEFT = "LEFT"
    RIGHT = "RIGHT"
    UP = "UP"
    DOWN = "DOWN"

    def __str__(self) -> str:
        return self.value


HORIZONTAL = frozenset((Direction.LEFT, Direction.RIGHT))
VERTICAL = frozenset((Direction.UP, Direction.DOWN))

GESTURE_NO = "NO"
GESTURE_YES = "YES"


@dataclass(frozen=True)
class FlowSummary:
    """Summed foreground flow for one frame, y-up sign convention."""

    s_x: float
    s_y: float
    n_pixels: int
    frame_index: int = 0

    def __post_init__(self):
        if self.n_pixels < 0:
            raise ValueError(f"n_pixels must be non-negative, got {self.n_pixels}")
        if self.n_pixels == 0 and (self.s_x != 0.0 or self.s_y != 0.0):
            raise ValueError("sums must be zero when no pixels are counted")


@dataclass(frozen=True)
class ClassifierConfig:
    """idle_eps is the dead-zone radius on the summed vector; vote_window
    is the trailing majority window length (odd, so ties need the
    recency rule only across distinct directions)."""

    idle_eps: float = 0.05
    vote_window: int = 5

    def __post_init__(self):
        if self.idle_eps < 0.0:
            raise ValueError(f"idle_eps must be non-negative, got {self.idle_eps}")
        if self.vote_window < 1 or self.vote_window % 2 == 0:
            raise ValueError(f"vote_window must be odd and >= 1, got {self.vote_window}")


@dataclass(frozen=True)
class GestureConfig:
    """min_alternations counts direction reversals on one axis; max_gap is
    how many consecutive IDLE frames a gesture may bridge."""

    min_alternations: int = 2
    max_gap: int = 3

    def __post_init__(self):
        if self.min_alternations < 1:
            raise ValueError(
                f"min_alternations must be >= 1, got {self.min_alternations}"
            )
        if self.max_gap < 1:
            raise ValueError(f"max_gap must be >= 1, got {self.max_gap}")


@dataclass(frozen=True)
class GestureEvent:
    """One recognized gesture spanning [start_frame, end_frame]."""

    kind: str
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if self.kind not in (GESTURE_YES, GESTURE_NO):
            raise ValueError(f"kind must be YES or NO, got {self.kind!r}")
        if self.end_frame < self.start_frame:
            raise ValueError(
                f"end_frame {self.end_frame} precedes start_frame {self.start_frame}"
            )


def sum_flow(flow: FlowField, mask: SegmentationMask | None = None,
             frame_index: int = 0) -> FlowSummary:
    """Sum the flow over foreground pixels (or the whole field without a mask).

    Each flow sample describes the 2x2 pixel cube at its grid
    coordinate, so a sample counts as foreground when any of the four
    pixels under it is foreground. Sampling one fixed corner instead
    would take a region's bottom and right edge responses but drop the
    top and left ones, biasing the summed vector. v is negated here,
    converting the y-down flow field into the y-up summed vector.
    """
    h, w = flow.shape
    if mask is None:
        s_x = float(np.sum(flow.u))
        s_y = float(np.sum(-flow.v))
        n = h * w
    else:
        if mask.height < h + 1 or mask.width < w + 1:
            raise ValueError(
                f"mask {mask.width}x{mask.height} cannot cover flow grid {w}x{h}"
            )
        fg = mask.labels == FOREGROUND
        sel = fg[:h, :w] | fg[:h, 1:w + 1] | fg[1:h + 1, :w] | fg[1:h + 1, 1:w + 1]
        s_x = float(np.sum(flow.u[sel]))
        s_y = float(np.sum(-flow.v[sel]))
        n = int(np.count_nonzero(sel))
    if n == 0:
        s_x = 0.0
        s_y = 0.0
    return FlowSummary(s_x, s_y, n, frame_index=frame_index)


def classify_direction(summary: FlowSummary, config: ClassifierConfig | None = None) -> Direction:
    """Map the summed vector's signs to a direction; small vectors are IDLE.

    Sign quadrants: (+, +) RIGHT, (+, -) DOWN, (-, -) LEFT, (-, +) UP,
    with zero counting as positive.
    """
    if config is None:
        config = ClassifierConfig()
    if math.hypot(summary.s_x, summary.s_y) < config.idle_eps:
        return Direction.IDLE
    x_pos = summary.s_x >= 0.0
    y_pos = summary.s_y >= 0.0
    if x_pos and y_pos:
        return Direction.RIGHT
    if x_pos:
        return Direction.DOWN
    if y_pos:
        return Direction.UP
    return Direction.LEFT


def vote(directions: Sequence[Direction]) -> Direction:
    """Most frequent non-IDLE direction; ties go to the most recent one.

    A window with no non-IDLE entries votes IDLE. The input order only
    matters through the tie-break.
    """
    if not directions:
        raise ValueError("cannot vote over an empty window")
    counts: dict[Direction, int] = {}
    last_seen: dict[Direction, int] = {}
    for i, d in enumerate(directions):
        if d is Direction.IDLE:
            continue
        counts[d] = counts.get(d, 0) + 1
        last_seen[d] = i
    if not counts:
        return Direction.IDLE
    best = max(counts.values())
    tied = [d for d, c in counts.items() if c == best]
    return max(tied, key=lambda d: last_seen[d])


class _AxisChain:
    """Alternation tracker for one axis ({LEFT, RIGHT} or {UP, DOWN})."""

    __slots__ = ("last", "alternations", "start", "idle_run")

    def __init__(self):
        self.reset()

    def reset(self):
        self.last: Direction | None = None
        self.alternations = 0
        self.start = 0
        self.idle_run = 0


class GestureDetector:
    """Streaming gesture recognizer over voted per-frame directions.

    Feed one (frame_index, direction) pair per frame. A gesture
    completes as soon as its axis accumulates min_alternations
    reversals; completed gestures never overlap because detection
    resets afterwards. IDLE runs longer than max_gap, or motion on the
    other axis, break a pending chain.
    """

    def __init__(self, config: GestureConfig | None = None):
        self.config = config if config is not None else GestureConfig()
        self._horizontal = _AxisChain()
        self._vertical = _AxisChain()

    def feed(self, frame_index: int, direction: Direction) -> GestureEvent | None:
        if direction is Direction.IDLE:
            for chain in (self._horizontal, self._vertical):
                if chain.last is not None:
                    chain.idle_run += 1
                    if chain.idle_run > self.config.max_gap:
                        chain.reset()
            return None

        if direction in HORIZONTAL:
            chain, other, kind = self._horizontal, self._vertical, GESTURE_NO
        else:
            chain, other, kind = self._vertical, self._horizontal, GESTURE_YES
        other.reset()

        if chain.last is None:
            chain.last = direction
            chain.start = frame_index
            chain.alternations = 0
        elif direction is not chain.last:
            chain.alternations += 1
            chain.last = direction
        chain.idle_run = 0

        if chain.alternations >= self.config.min_alternations:
            event = GestureEvent(kind, chain.start, frame_index)
            self._horizontal.reset()
            self._vertical.reset()
            return event
        return None


def detect_gesture(directions: Iterable[Direction],
                   config: GestureConfig | None = None,
                   start_index: int = 0) -> list[GestureEvent]:
    """Run the streaming detector over a direction sequence.

    Frame indices are positions in the sequence offset by start_index.
    """
    detector = GestureDetector(config)
    events = []
    for i, d in enumerate(directions):
        event = detector.feed(start_index + i, d)
        if event is not None:
            events.append(event)
    return events


def rolling_vote(directions: Iterable[Direction], window: int) -> list[Direction]:
    """Majority vote over a trailing window at every position."""
    out = []
    buf: deque[Direction] = deque(maxlen=window)
    for d in directions:
        buf.append(d)
        out.append(vote(list(buf)))
    return out
