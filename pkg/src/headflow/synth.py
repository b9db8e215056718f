"""Deterministic synthetic clips with exact ground truth.

Scenes are a flat or vertically graded background, one moving rectangular
blob, and optionally a dimmed background region trailing the blob like a
cast shadow. Pixel noise comes from a counter-based SplitMix64 stream
(64-bit state, xorshift-multiply mixing) fed through the Box-Muller
cosine branch, so a clip is a pure function of its spec and seed and can
be reproduced bit-exactly from any language.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classify import Direction, GESTURE_NO, GESTURE_YES, GestureEvent
from .frames import Frame, encode_pnm

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0 ** -53


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer over a uint64 array, wrapping mod 2**64."""
    z = x.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def _uniform(seed: int, positions: np.ndarray) -> np.ndarray:
    """Uniform samples in (0, 1] at the given stream positions."""
    keys = np.uint64(seed) + _GOLDEN * (positions + np.uint64(1))
    bits = _splitmix64(keys) >> np.uint64(11)
    return (bits.astype(np.float64) + 1.0) * _U53


def gaussian_stream(seed: int, start: int, count: int) -> np.ndarray:
    """Standard normal samples at stream positions start .. start+count-1.

    Each normal consumes two uniforms (positions 2p and 2p+1) through the
    Box-Muller cosine branch.
    """
    p = np.arange(start, start + count, dtype=np.uint64)
    u1 = _uniform(seed, np.uint64(2) * p)
    u2 = _uniform(seed, np.uint64(2) * p + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _round_half_up(x):
    return np.floor(x + 0.5)


def _as_rgb(value) -> tuple[float, float, float]:
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if arr.size == 1:
        arr = np.repeat(arr, 3)
    if arr.size != 3:
        raise ValueError(f"expected a scalar or 3 channel values, got {value!r}")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class Background:
    """Flat color, or a vertical gradient when bottom is given."""

    top: tuple[float, float, float]
    bottom: tuple[float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "top", _as_rgb(self.top))
        if self.bottom is not None:
            object.__setattr__(self, "bottom", _as_rgb(self.bottom))

    def render(self, width: int, height: int) -> np.ndarray:
        top = np.asarray(self.top, dtype=np.float64)
        if self.bottom is None:
            return np.broadcast_to(top, (height, width, 3)).copy()
        bottom = np.asarray(self.bottom, dtype=np.float64)
        t = (np.arange(height, dtype=np.float64) / max(height - 1, 1))[:, None]
        rows = top[None, :] * (1.0 - t) + bottom[None, :] * t
        return np.broadcast_to(rows[:, None, :], (height, width, 3)).copy()


@dataclass(frozen=True)
class BlobSpec:
    """Moving rectangle: start corner, size, per-frame velocity, fill color."""

    x: float
    y: float
    width: int
    height: int
    velocity: tuple[float, float]
    intensity: tuple[float, float, float]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"blob size must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "velocity", (float(self.velocity[0]), float(self.velocity[1])))
        object.__setattr__(self, "intensity", _as_rgb(self.intensity))


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    n_frames: int
    background: Background
    blob: BlobSpec
    shadow_factor: float | None = None
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError(f"scene must be at least 2x2, got {self.width}x{self.height}")
        if self.n_frames < 1:
            raise ValueError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.shadow_factor is not None and not 0.0 < self.shadow_factor < 1.0:
            raise ValueError(f"shadow_factor must be in (0, 1), got {self.shadow_factor}")
        if self.noise_sigma < 0.0:
            raise ValueError(f"noise_sigma must be non-negative, got {self.noise_sigma}")


@dataclass
class GroundTruth:
    """Per-frame truth for a generated clip; list lengths equal n_frames."""

    width: int
    height: int
    rects: list[tuple[int, int, int, int]]
    velocities: list[tuple[float, float]]
    directions: list[Direction]
    gestures: list[GestureEvent] = field(default_factory=list)

    def mask_at(self, t: int) -> np.ndarray:
        x0, y0, x1, y1 = self.rects[t]
        mask = np.zeros((self.height, self.width), dtype=bool)
        mask[y0:y1, x0:x1] = True
        return mask


def _direction_of(vx: float, vy: float) -> Direction:
    if vx == 0.0 and vy == 0.0:
        return Direction.IDLE
    if abs(vx) >= abs(vy):
        return Direction.RIGHT if vx > 0.0 else Direction.LEFT
    return Direction.DOWN if vy > 0.0 else Direction.UP


def _render_clip(spec: SceneSpec, positions: list[tuple[float, float]],
                 gestures: list[GestureEvent]) -> tuple[list[Frame], GroundTruth]:
    w, h = spec.width, spec.height
    blob = spec.blob
    base = spec.background.render(w, h)

    rects = []
    for t, (px, py) in enumerate(positions):
        x0 = int(_round_half_up(px))
        y0 = int(_round_half_up(py))
        if x0 < 0 or y0 < 0 or x0 + blob.width > w or y0 + blob.height > h:
            raise ValueError(
                f"blob leaves the frame at t={t}: corner ({x0}, {y0}), "
                f"size {blob.width}x{blob.height}, frame {w}x{h}"
            )
        if spec.shadow_factor is not None and y0 + 2 * blob.height > h:
            raise ValueError(f"shadow region leaves the frame at t={t}")
        rects.append((x0, y0, x0 + blob.width, y0 + blob.height))

    velocities = [(0.0, 0.0)]
    for t in range(1, len(positions)):
        velocities.append((positions[t][0] - positions[t - 1][0],
                           positions[t][1] - positions[t - 1][1]))
    directions = [_direction_of(vx, vy) for vx, vy in velocities]

    frames = []
    pixels = w * h
    intensity = np.asarray(blob.intensity, dtype=np.float64)
    for t, (x0, y0, x1, y1) in enumerate(rects):
        img = base.copy()
        if spec.shadow_factor is not None:
            img[y1:y1 + blob.height, x0:x1, :] = (
                base[y1:y1 + blob.height, x0:x1, :] * spec.shadow_factor
            )
        img[y0:y1, x0:x1, :] = intensity
        if spec.noise_sigma > 0.0:
            noise = gaussian_stream(spec.seed, t * pixels, pixels).reshape(h, w)
            img = img + spec.noise_sigma * noise[:, :, None]
        data = np.clip(_round_half_up(img), 0.0, 255.0).astype(np.uint8)
        frames.append(Frame(w, h, 3, data, index=t))

    truth = GroundTruth(w, h, rects, velocities, directions, gestures)
    return frames, truth


def gen_clip(spec: SceneSpec) -> tuple[list[Frame], GroundTruth]:
    """Generate a clip whose blob moves at the scene's constant velocity."""
    vx, vy = spec.blob.velocity
    positions = [(spec.blob.x + vx * t, spec.blob.y + vy * t)
                 for t in range(spec.n_frames)]
    return _render_clip(spec, positions, gestures=[])


def gen_gesture_clip(kind: str, spec: SceneSpec,
                     hold_frames: int = 0) -> tuple[list[Frame], GroundTruth]:
    """Generate a nod (YES) or shake (NO) clip.

    The blob is stationary for hold_frames, then moves in three equal
    legs: up-down-up for YES, left-right-left for NO. Leg speed is the
    magnitude of the scene's blob velocity. Legs carry the same 0.75x
    cross-axis drift as direction_clip_spec and for the same reason:
    whole-pixel rendering plus exact cross-sum cancellation parks an
    axis-pure leg on a direction sign boundary.
    """
    if kind not in (GESTURE_YES, GESTURE_NO):
        raise ValueError(f"kind must be YES or NO, got {kind!r}")
    if hold_frames < 0 or hold_frames >= spec.n_frames:
        raise ValueError(f"hold_frames must be in [0, n_frames), got {hold_frames}")
    vx, vy = spec.blob.velocity
    speed = float(np.hypot(vx, vy))
    if speed <= 0.0:
        raise ValueError("gesture clips need a non-zero blob speed")
    leg = (spec.n_frames - hold_frames) // 3
    if leg < 1:
        raise ValueError(
            f"{spec.n_frames} frames minus {hold_frames} hold cannot fit three legs"
        )
    drift = 0.75 * speed
    if kind == GESTURE_YES:
        deltas = [(-drift, -speed), (drift, speed), (-drift, -speed)]
    else:
        deltas = [(-speed, drift), (speed, -drift), (-speed, drift)]

    positions = [(spec.blob.x, spec.blob.y)]
    for t in range(1, spec.n_frames):
        active = t - 1 - hold_frames
        if 0 <= active < 3 * leg:
            dx, dy = deltas[active // leg]
        else:
            dx, dy = 0.0, 0.0
        px, py = positions[-1]
        positions.append((px + dx, py + dy))

    gestures = [GestureEvent(kind, hold_frames + 1, hold_frames + 3 * leg)]
    return _render_clip(spec, positions, gestures)


def write_clip(frames: list[Frame], out_dir: str | Path) -> None:
    """Write frames as zero-padded .ppm files (or .pgm for 1-channel)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for frame in frames:
        ext = ".pgm" if frame.channels == 1 else ".ppm"
        (out / f"{frame.index:06d}{ext}").write_bytes(encode_pnm(frame))


_CORPUS_DIRECTIONS = (Direction.LEFT, Direction.RIGHT, Direction.UP, Direction.DOWN)


def direction_clip_spec(direction: Direction, variant: int, *,
                        width: int = 120, height: int = 120,
                        n_frames: int = 60, noise_sigma: float = 2.0,
                        seed: int = 0) -> SceneSpec:
    """A single-direction clip spec with small deterministic variation.

    Velocities carry a cross-axis drift of 0.75x the main speed, signed
    to stay inside the labeled quadrant. Head motion is never axis-pure,
    and axis-pure movers are degenerate here twice over: rendering
    quantizes positions to whole pixels, so a small drift moves the mask
    only every few frames, and on the other frames the cross-axis sum
    cancels to exactly zero, parking the vector on a sign boundary.
    """
    speed = 1.0 + 0.1 * (variant % 4)
    drift = 0.75 * speed
    cross = drift * (n_frames - 1)
    size = 24 + 4 * (variant % 3)
    margin = 2 + (variant % 3)
    lo = float(margin)
    hi_x = float(width - size - margin)
    hi_y = float(height - size - margin)
    mid_x = _round_half_up((width - size) / 2.0)
    mid_y = _round_half_up((height - size) / 2.0)

    if direction is Direction.RIGHT:
        start, velocity = (lo, mid_y + cross / 2.0), (speed, -drift)
    elif direction is Direction.LEFT:
        start, velocity = (hi_x, mid_y - cross / 2.0), (-speed, drift)
    elif direction is Direction.DOWN:
        start, velocity = (mid_x - cross / 2.0, lo), (drift, speed)
    elif direction is Direction.UP:
        start, velocity = (mid_x + cross / 2.0, hi_y), (-drift, -speed)
    else:
        raise ValueError(f"no clip profile for {direction}")
    for vel, room, low in ((velocity[0], width - size, start[0]),
                           (velocity[1], height - size, start[1])):
        end = low + vel * (n_frames - 1)
        if not (0.0 <= end <= room) or not (0.0 <= low <= room):
            raise ValueError(
                f"travel from {low:.1f} to {end:.1f}px does not fit {room}px of room"
            )

    blob = BlobSpec(start[0], start[1], size, size, velocity,
                    intensity=(205.0, 60.0, 60.0))
    return SceneSpec(
        width=width, height=height, n_frames=n_frames,
        background=Background(top=(90.0, 95.0, 100.0)),
        blob=blob, noise_sigma=noise_sigma, seed=seed,
    )


def build_corpus(out_dir: str | Path, n_per_direction: int = 10, *,
                 width: int = 120, height: int = 120, n_frames: int = 60,
                 noise_sigma: float = 2.0, seed0: int = 20_000) -> Path:
    """Generate a labeled corpus of single-direction clips plus a manifest.

    Writes n_per_direction clips for each of LEFT, RIGHT, UP, DOWN into
    out_dir and returns the path of the manifest JSON describing them.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clips = []
    idx = 0
    for direction in _CORPUS_DIRECTIONS:
        for i in range(n_per_direction):
            spec = direction_clip_spec(
                direction, i, width=width, height=height,
                n_frames=n_frames, noise_sigma=noise_sigma, seed=seed0 + idx,
            )
            name = f"{direction.value.lower()}_{i:02d}"
            frames, truth = gen_clip(spec)
            write_clip(frames, out / name)
            clips.append({
                "path": name,
                "direction": direction.value,
                "n_frames": spec.n_frames,
                "width": spec.width,
                "height": spec.height,
                "rects": truth.rects,
                "gestures": [],
            })
            idx += 1
    manifest = {
        "clips": clips,
        "noise_sigma": noise_sigma,
        "seed0": seed0,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def spec_from_dict(doc: dict) -> SceneSpec:
    """Build a SceneSpec from a plain JSON-style mapping."""
    bg = doc.get("background", {})
    background = Background(top=bg.get("top", 100.0), bottom=bg.get("bottom"))
    blob_doc = doc["blob"]
    blob = BlobSpec(
        x=float(blob_doc["x"]), y=float(blob_doc["y"]),
        width=int(blob_doc["width"]), height=int(blob_doc["height"]),
        velocity=tuple(blob_doc.get("velocity", (0.0, 0.0))),
        intensity=blob_doc.get("intensity", 200.0),
    )
    return SceneSpec(
        width=int(doc["width"]), height=int(doc["height"]),
        n_frames=int(doc["n_frames"]), background=background, blob=blob,
        shadow_factor=doc.get("shadow_factor"),
        noise_sigma=float(doc.get("noise_sigma", 0.0)),
        seed=int(doc.get("seed", 0)),
    )
