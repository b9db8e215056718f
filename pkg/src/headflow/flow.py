"""Dense global optical flow by brightness constancy plus smoothness.

Brightness constancy contributes one linear constraint per pixel,

    Ex * u + Ey * v + Et = 0,

which fixes only the flow component along the brightness gradient. A
quadratic smoothness penalty supplies the rest, and minimizing the
combined error leads to a Jacobi-style relaxation: each step pulls the
flow from its neighborhood average back toward the constraint line,

    u' = u_avg - Ex * s,   v' = v_avg - Ey * s,
    s  = (Ex * u_avg + Ey * v_avg + Et) / (alpha_sq + Ex^2 + Ey^2).

Derivatives are estimated once per frame pair as the average of the four
first differences across a 2x2x2 cube of samples, so all three are
centered on the same point and the output grid is one sample smaller
than the input in each dimension. Coordinates follow image convention:
x grows rightward (u > 0 is rightward motion), y grows downward
(v > 0 is downward motion).

The solver's default input mode thresholds frames to binary before
differentiation; segmentation masks are the intended diet, which makes
the flow report the motion of region boundaries rather than of texture.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .frames import GrayFrame

FLO_MAGIC = 202021.25

INPUT_MODES = ("binary", "grayscale")


@dataclass(frozen=True)
class FlowConfig:
    """Solver knobs: smoothness weight, iteration budget, stop threshold.

    alpha_sq is the squared smoothness weight; larger values favor
    smoother fields over exact constraint satisfaction. Iteration stops
    early once the mean absolute flow change drops below eps (eps = 0
    forces the full budget). input_mode "binary" thresholds inputs at
    127 before differentiation, "grayscale" uses them as-is.
    """

    alpha_sq: float = 100.0
    max_iters: int = 100
    eps: float = 1e-3
    input_mode: str = "binary"

    def __post_init__(self):
        if self.alpha_sq <= 0.0:
            raise ValueError(f"alpha_sq must be positive, got {self.alpha_sq}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.eps < 0.0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")
        if self.input_mode not in INPUT_MODES:
            raise ValueError(
                f"input_mode must be one of {INPUT_MODES}, got {self.input_mode!r}"
            )


@dataclass
class DerivativeField:
    """Cube-centered brightness derivatives Ex, Ey, Et on the flow grid."""

    ex: np.ndarray
    ey: np.ndarray
    et: np.ndarray

    def __post_init__(self):
        if not (self.ex.shape == self.ey.shape == self.et.shape):
            raise ValueError("derivative planes must share one shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.ex.shape


@dataclass
class FlowField:
    """Per-pixel displacement (u rightward, v downward) on the flow grid."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ValueError("u and v must share one shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @staticmethod
    def zeros(shape: tuple[int, int]) -> "FlowField":
        return FlowField(np.zeros(shape, dtype=np.float64),
                         np.zeros(shape, dtype=np.float64))


def _gray_array(frame) -> np.ndarray:
    data = frame.data if isinstance(frame, GrayFrame) else frame
    return np.asarray(data, dtype=np.float64)


def estimate_derivatives(f0, f1) -> DerivativeField:
    """Average the four first differences across each 2x2x2 sample cube.

    Accepts GrayFrame or 2-D arrays. Output planes have shape
    (h - 1, w - 1); inputs must be at least 2x2 and equally sized.
    """
    a = _gray_array(f0)
    b = _gray_array(f1)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2 or a.shape[0] < 2 or a.shape[1] < 2:
        raise ValueError(f"need at least a 2x2 frame, got shape {a.shape}")

    ex = 0.25 * (
        (a[:-1, 1:] - a[:-1, :-1]) + (a[1:, 1:] - a[1:, :-1])
        + (b[:-1, 1:] - b[:-1, :-1]) + (b[1:, 1:] - b[1:, :-1])
    )
    ey = 0.25 * (
        (a[1:, :-1] - a[:-1, :-1]) + (a[1:, 1:] - a[:-1, 1:])
        + (b[1:, :-1] - b[:-1, :-1]) + (b[1:, 1:] - b[:-1, 1:])
    )
    et = 0.25 * (
        (b[:-1, :-1] - a[:-1, :-1]) + (b[1:, :-1] - a[1:, :-1])
        + (b[:-1, 1:] - a[:-1, 1:]) + (b[1:, 1:] - a[1:, 1:])
    )
    return DerivativeField(ex, ey, et)


class _Workspace:
    """Scratch buffers for the relaxation loop, allocated once per solve."""

    __slots__ = ("pad", "t1", "t2", "s")

    def __init__(self, shape: tuple[int, int]):
        h, w = shape
        self.pad = np.empty((h + 2, w + 2), dtype=np.float64)
        self.t1 = np.empty(shape, dtype=np.float64)
        self.t2 = np.empty(shape, dtype=np.float64)
        self.s = np.empty(shape, dtype=np.float64)

    def average_into(self, a: np.ndarray, out: np.ndarray) -> None:
        # Four-neighbor weight 1/6, diagonal weight 1/12, center excluded.
        # Single division keeps constant fields constant.
        p = self.pad
        p[1:-1, 1:-1] = a
        p[0, 1:-1] = a[0]
        p[-1, 1:-1] = a[-1]
        p[1:-1, 0] = a[:, 0]
        p[1:-1, -1] = a[:, -1]
        p[0, 0] = a[0, 0]
        p[0, -1] = a[0, -1]
        p[-1, 0] = a[-1, 0]
        p[-1, -1] = a[-1, -1]
        np.add(p[:-2, 1:-1], p[2:, 1:-1], out=out)
        np.add(p[1:-1, :-2], p[1:-1, 2:], out=self.t1)
        out += self.t1
        out *= 2.0
        np.add(p[:-2, :-2], p[:-2, 2:], out=self.t1)
        np.add(p[2:, :-2], p[2:, 2:], out=self.t2)
        self.t1 += self.t2
        out += self.t1
        out /= 12.0

    def step_into(self, u, v, deriv: DerivativeField, den,
                  u_out, v_out, u_avg, v_avg) -> None:
        # u' = u_avg - Ex s,  v' = v_avg - Ey s,
        # s  = (Ex u_avg + Ey v_avg + Et) / den.
        self.average_into(u, u_avg)
        self.average_into(v, v_avg)
        s = self.s
        np.multiply(deriv.ex, u_avg, out=s)
        np.multiply(deriv.ey, v_avg, out=self.t1)
        s += self.t1
        s += deriv.et
        s /= den
        np.multiply(deriv.ex, s, out=self.t1)
        np.subtract(u_avg, self.t1, out=u_out)
        np.multiply(deriv.ey, s, out=self.t1)
        np.subtract(v_avg, self.t1, out=v_out)

    def mean_abs_diff(self, a, b) -> float:
        np.subtract(a, b, out=self.t1)
        np.abs(self.t1, out=self.t1)
        return float(self.t1.mean())


def local_average(flow: FlowField) -> FlowField:
    """Weighted neighborhood mean of each flow component with edge replication."""
    ws = _Workspace(flow.shape)
    u = np.empty(flow.shape, dtype=np.float64)
    v = np.empty(flow.shape, dtype=np.float64)
    ws.average_into(np.asarray(flow.u, dtype=np.float64), u)
    ws.average_into(np.asarray(flow.v, dtype=np.float64), v)
    return FlowField(u, v)


def hs_iterate(flow: FlowField, deriv: DerivativeField, alpha_sq: float) -> FlowField:
    """One Jacobi relaxation step; the input field is left untouched."""
    if flow.shape != deriv.shape:
        raise ValueError(f"flow shape {flow.shape} does not match derivatives {deriv.shape}")
    den = alpha_sq + deriv.ex * deriv.ex + deriv.ey * deriv.ey
    ws = _Workspace(flow.shape)
    out = FlowField.zeros(flow.shape)
    u_avg = np.empty(flow.shape, dtype=np.float64)
    v_avg = np.empty(flow.shape, dtype=np.float64)
    ws.step_into(flow.u, flow.v, deriv, den, out.u, out.v, u_avg, v_avg)
    return out


def solve_flow(f0, f1, config: FlowConfig | None = None,
               trace: list | None = None) -> FlowField:
    """Estimate flow between two frames from a zero initial field.

    Runs at most config.max_iters relaxation steps, stopping early when
    the mean absolute change of the field drops below config.eps. When
    trace is a list, a snapshot of the field after every step is
    appended (the zero initial field is not included).
    """
    if config is None:
        config = FlowConfig()
    a = _gray_array(f0)
    b = _gray_array(f1)
    if config.input_mode == "binary":
        a = np.where(a > 127.0, 255.0, 0.0)
        b = np.where(b > 127.0, 255.0, 0.0)
    deriv = estimate_derivatives(a, b)
    den = config.alpha_sq + deriv.ex * deriv.ex + deriv.ey * deriv.ey

    shape = deriv.shape
    ws = _Workspace(shape)
    u = np.zeros(shape, dtype=np.float64)
    v = np.zeros(shape, dtype=np.float64)
    u_nxt = np.empty(shape, dtype=np.float64)
    v_nxt = np.empty(shape, dtype=np.float64)
    u_avg = np.empty(shape, dtype=np.float64)
    v_avg = np.empty(shape, dtype=np.float64)
    for _ in range(config.max_iters):
        ws.step_into(u, v, deriv, den, u_nxt, v_nxt, u_avg, v_avg)
        delta = 0.5 * (ws.mean_abs_diff(u_nxt, u) + ws.mean_abs_diff(v_nxt, v))
        u, u_nxt = u_nxt, u
        v, v_nxt = v_nxt, v
        if trace is not None:
            trace.append(FlowField(u.copy(), v.copy()))
        if delta < config.eps:
            break
    return FlowField(u, v)


def flow_residuals(flow: FlowField, deriv: DerivativeField) -> tuple[float, float]:
    """Field means of the two error terms.

    Returns (mean absolute constraint residual, mean squared smoothness
    residual). The smoothness residual uses forward differences with
    edge replication, so the last row and column contribute zero.
    """
    eb, ec_sq = _residual_fields(flow, deriv)
    return float(np.mean(np.abs(eb))), float(np.mean(ec_sq))


def total_error(flow: FlowField, deriv: DerivativeField, alpha_sq: float) -> float:
    """Mean combined objective alpha_sq * ec^2 + eb^2 that relaxation minimizes."""
    eb, ec_sq = _residual_fields(flow, deriv)
    return float(alpha_sq * np.mean(ec_sq) + np.mean(eb * eb))


def _residual_fields(flow: FlowField, deriv: DerivativeField):
    if flow.shape != deriv.shape:
        raise ValueError(f"flow shape {flow.shape} does not match derivatives {deriv.shape}")
    eb = deriv.ex * flow.u + deriv.ey * flow.v + deriv.et
    du_dx = np.diff(flow.u, axis=1, append=flow.u[:, -1:])
    du_dy = np.diff(flow.u, axis=0, append=flow.u[-1:, :])
    dv_dx = np.diff(flow.v, axis=1, append=flow.v[:, -1:])
    dv_dy = np.diff(flow.v, axis=0, append=flow.v[-1:, :])
    ec_sq = du_dx * du_dx + du_dy * du_dy + dv_dx * dv_dx + dv_dy * dv_dy
    return eb, ec_sq


def write_flo(flow: FlowField, path: str | Path) -> None:
    """Write a flow field in the common .flo layout.

    Little-endian: float32 magic 202021.25, int32 width, int32 height,
    then row-major interleaved (u, v) float32 pairs. Values are stored
    at float32 precision.
    """
    h, w = flow.shape
    inter = np.empty((h, w, 2), dtype="<f4")
    inter[:, :, 0] = flow.u
    inter[:, :, 1] = flow.v
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", w, h))
        fh.write(inter.tobytes())


def read_flo(path: str | Path) -> FlowField:
    """Read a .flo flow file written by write_flo (or compatible tools)."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise ValueError(f"flow file too short: {len(raw)} bytes")
    magic = struct.unpack("<f", raw[:4])[0]
    if magic != np.float32(FLO_MAGIC):
        raise ValueError(f"bad flow file magic {magic!r}")
    w, h = struct.unpack("<ii", raw[4:12])
    if w < 1 or h < 1:
        raise ValueError(f"bad flow dimensions {w}x{h}")
    expected = 12 + 8 * w * h
    if len(raw) < expected:
        raise ValueError(f"flow payload has {len(raw) - 12} bytes, expected {8 * w * h}")
    inter = np.frombuffer(raw[12:expected], dtype="<f4").reshape(h, w, 2)
    return FlowField(inter[:, :, 0].astype(np.float64),
                     inter[:, :, 1].astype(np.float64))
