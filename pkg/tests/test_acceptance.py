"""Acceptance checks, one per shipped guarantee, each printing PASS or FAIL.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per
criterion; each check is independent and builds everything it needs.
"""

import time

import numpy as np

from headflow.classify import (
    ClassifierConfig,
    Direction,
    FlowSummary,
    classify_direction,
    detect_gesture,
)
from headflow.flow import (
    DerivativeField,
    FlowConfig,
    FlowField,
    estimate_derivatives,
    hs_iterate,
    local_average,
    solve_flow,
    total_error,
)
from headflow.frames import Frame
from headflow.gmm import (
    BACKGROUND,
    FOREGROUND,
    SHADOW,
    BackgroundModel,
    GaussianComponent,
    GmmConfig,
    PixelMixture,
    process_frame,
    update_pixel,
)
from headflow.pipeline import PipelineConfig, bench, evaluate, run_pipeline
from headflow.shadow import (
    apply_shadow_pass,
    brightness_distortion,
    chromaticity_distortion,
)
from headflow.frames import FrameSource
from headflow.synth import build_corpus, direction_clip_spec, gen_clip


def report(number, description, ok):
    print(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {description}")
    assert ok, f"criterion {number} failed: {description}"


class ListSource(FrameSource):
    def __init__(self, frames):
        super().__init__()
        self._frames = list(frames)
        self._i = 0

    def next_frame(self):
        if self._i >= len(self._frames):
            return None
        frame = self._frames[self._i]
        self._i += 1
        return frame


def test_criterion_01_derivative_cube():
    f0 = np.array([[5.0, 105.0], [0.0, 185.0]])
    f1 = np.array([[30.0, 100.0], [0.0, 180.0]])
    d = estimate_derivatives(f0, f1)
    ok = (
        float(d.ex[0, 0]) == 133.75
        and float(d.ey[0, 0]) == 31.25
        and float(d.et[0, 0]) == 3.75
    )
    report(1, "worked derivative cube equals (133.75, 31.25, 3.75) exactly", ok)


def test_criterion_02_sign_mapping_rows():
    rows = [
        (0.0018, 0.6535, Direction.RIGHT),
        (0.0022, 0.6550, Direction.RIGHT),
        (0.0027, 0.6564, Direction.RIGHT),
        (0.0031, -0.0630, Direction.DOWN),
        (-0.2038, -0.2887, Direction.LEFT),
        (-0.0495, -0.1421, Direction.LEFT),
        (-0.0080, -0.1397, Direction.LEFT),
        (0.3968, -0.0634, Direction.DOWN),
        (0.4602, -0.0621, Direction.DOWN),
        (-0.0015, 0.1430, Direction.UP),
        (-0.0035, 0.1442, Direction.UP),
        (-0.0046, 0.1446, Direction.UP),
        (-0.0072, 0.1502, Direction.UP),
    ]
    cfg = ClassifierConfig()
    ok = all(
        classify_direction(FlowSummary(s_x, s_y, n_pixels=1000), cfg) is want
        for s_x, s_y, want in rows
    )
    report(2, "13 sign-consistent summed-flow rows classify to their labels", ok)


def test_criterion_03_gesture_mapping():
    no_events = detect_gesture([Direction.LEFT, Direction.RIGHT, Direction.LEFT])
    yes_events = detect_gesture([Direction.UP, Direction.DOWN, Direction.UP])
    ok = (
        [e.kind for e in no_events] == ["NO"]
        and [e.kind for e in yes_events] == ["YES"]
    )
    report(3, "left-right-left gives one NO, up-down-up gives one YES", ok)


def test_criterion_04_sinusoid_flow():
    n = 64
    y, x = np.mgrid[0:n, 0:n].astype(np.float64)
    f0 = 120.0 + 50.0 * np.sin(2 * np.pi * x / 16.0) * np.sin(2 * np.pi * y / 16.0)
    f1 = np.roll(f0, 1, axis=1)
    cfg = FlowConfig(alpha_sq=100.0, max_iters=100, eps=0.0, input_mode="grayscale")
    trace = []
    started = time.perf_counter()
    flow = solve_flow(f0, f1, cfg, trace=trace)
    elapsed = time.perf_counter() - started

    interior = np.s_[8:-8, 8:-8]
    mean_u = float(np.mean(flow.u[interior]))
    mean_v = float(np.mean(flow.v[interior]))
    angle = abs(np.degrees(np.arctan2(mean_v, mean_u)))
    magnitude = float(np.mean(np.abs(flow.u[interior])))

    deriv = estimate_derivatives(f0, f1)
    errors = [total_error(f, deriv, cfg.alpha_sq) for f in trace]
    monotone = all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))

    ok = angle < 15.0 and 0.5 <= magnitude <= 1.5 and monotone and elapsed < 2.0
    report(
        4,
        f"sinusoid shift: angle {angle:.2f} deg, |u| {magnitude:.3f}, "
        f"error monotone {monotone}, {elapsed:.2f}s",
        ok,
    )


def test_criterion_05_step_orthogonality():
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(1000):
        shape = (rng.integers(3, 9), rng.integers(3, 9))
        f = FlowField(rng.normal(size=shape) * 4, rng.normal(size=shape) * 4)
        d = DerivativeField(
            rng.normal(size=shape) * 80,
            rng.normal(size=shape) * 80,
            rng.normal(size=shape) * 30,
        )
        alpha_sq = 10.0 ** rng.uniform(-1, 3)
        out = hs_iterate(f, d, alpha_sq)
        avg = local_average(f)
        residual = (out.u - avg.u) * d.ey - (out.v - avg.v) * d.ex
        worst = max(worst, float(np.max(np.abs(residual))))
    ok = worst < 1e-9
    report(5, f"relaxation step stays gradient-parallel (worst {worst:.2e})", ok)


def test_criterion_06_gmm_invariants():
    rng = np.random.default_rng(321)
    cfg = GmmConfig(alpha=0.02)
    mixture = PixelMixture(
        components=[GaussianComponent(1.0, np.full(3, 128.0), cfg.var_init)]
        + [
            GaussianComponent(0.0, np.full(3, 128.0), cfg.var_init)
            for _ in range(cfg.k - 1)
        ]
    )
    invariants = True
    for _ in range(10_000):
        mixture, _ = update_pixel(mixture, rng.uniform(0, 255, size=3), cfg)
        ws = [c.weight for c in mixture.components]
        ranks = [c.rank for c in mixture.components]
        if (
            abs(sum(ws) - 1.0) > 1e-9
            or any(c.var < cfg.var_min for c in mixture.components)
            or any(ranks[i] < ranks[i + 1] - 1e-12 for i in range(len(ranks) - 1))
        ):
            invariants = False
            break

    model = BackgroundModel(width=32, height=24, channels=1)
    base = rng.uniform(30, 220, size=(24, 32, 1))
    mask = None
    for i in range(51):
        noisy = np.clip(base + rng.normal(0, 2.0, base.shape), 0, 255)
        mask = process_frame(model, Frame(32, 24, 1, noisy.astype(np.uint8), index=i))
    fg = float(np.mean(mask.labels == FOREGROUND))
    ok = invariants and fg < 0.01
    report(
        6,
        f"10k updates keep mixture invariants; static scene {100 * fg:.2f}% foreground",
        ok,
    )


def test_criterion_07_shadow_rule():
    bg_color = np.array([150, 120, 90])
    model = BackgroundModel(width=24, height=20, channels=3)
    img = np.tile(bg_color.astype(np.uint8), (20, 24, 1))
    for i in range(40):
        process_frame(model, Frame(24, 20, 3, img.copy(), index=i))

    shaded = img.copy()
    shaded[4:14, 4:18] = np.round(0.6 * bg_color).astype(np.uint8)
    frame = Frame(24, 20, 3, shaded, index=40)
    mask = apply_shadow_pass(process_frame(model, frame), frame, model)
    shadow_rate = float(np.mean(mask.labels[4:14, 4:18] == SHADOW))

    model2 = BackgroundModel(width=24, height=20, channels=3)
    img2 = np.tile(np.array([200, 0, 0], np.uint8), (20, 24, 1))
    for i in range(40):
        process_frame(model2, Frame(24, 20, 3, img2.copy(), index=i))
    altered = img2.copy()
    altered[4:14, 4:18] = (0, 130, 0)
    frame2 = Frame(24, 20, 3, altered, index=40)
    mask2 = apply_shadow_pass(process_frame(model2, frame2), frame2, model2)
    orthogonal_shadows = int(np.sum(mask2.labels == SHADOW))

    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(2000):
        fg = rng.uniform(0, 255, size=3)
        bg = rng.uniform(1, 255, size=3)
        bd = brightness_distortion(fg, bg)
        cd = chromaticity_distortion(fg, bg)
        lhs = float(fg @ fg)
        rhs = (bd * float(np.linalg.norm(bg))) ** 2 + cd * cd
        if lhs > 0:
            worst = max(worst, abs(lhs - rhs) / lhs)
    ok = shadow_rate >= 0.95 and orthogonal_shadows == 0 and worst < 1e-6
    report(
        7,
        f"0.6x region {100 * shadow_rate:.1f}% shadow, orthogonal {orthogonal_shadows} px, "
        f"pythagoras rel err {worst:.1e}",
        ok,
    )


def test_criterion_08_corpus_success_rate(tmp_path):
    manifest = build_corpus(tmp_path / "corpus")
    report_table = evaluate(manifest, PipelineConfig())
    overall = report_table.overall
    per_direction = {row.direction: row.rate for row in report_table.rows}
    ok = overall is not None and overall >= 0.90 and all(
        rate is not None and rate >= 0.80 for rate in per_direction.values()
    )
    rates = ", ".join(f"{d} {100 * r:.0f}%" for d, r in per_direction.items())
    report(8, f"40-clip corpus: overall {100 * overall:.1f}% ({rates})", ok)


def test_criterion_09_throughput():
    spec = direction_clip_spec(
        Direction.RIGHT, 0, width=320, height=240, n_frames=160,
        noise_sigma=2.0, seed=77,
    )
    frames, _ = gen_clip(spec)
    result = bench(PipelineConfig(), ListSource(frames), min_frames=100)
    ok = result.fps >= 8.04
    report(9, f"320x240 throughput {result.fps:.2f} fps (floor 8.04)", ok)


def test_criterion_10_determinism(tmp_path):
    spec = direction_clip_spec(
        Direction.UP, 0, width=100, height=100, n_frames=65,
        noise_sigma=2.0, seed=31,
    )
    frames, _ = gen_clip(spec)
    streams = []
    for run in range(2):
        path = tmp_path / f"events_{run}.jsonl"
        config = PipelineConfig(burn_in_frames=40, events_path=str(path))
        run_pipeline(config, ListSource(frames))
        streams.append(path.read_bytes())
    ok = streams[0] == streams[1] and len(streams[0]) > 0
    report(10, f"two runs emit byte-identical JSONL ({len(streams[0])} bytes)", ok)
