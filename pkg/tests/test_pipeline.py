"""Pipeline and CLI tests: config parsing, end-to-end runs, dumps, exit codes."""

import json

import numpy as np
import pytest

from headflow import cli
from headflow.classify import Direction
from headflow.flow import FlowField, read_flo, solve_flow
from headflow.frames import Frame, FrameSource, decode_pnm
from headflow.gmm import BackgroundModel, FOREGROUND, process_frame
from headflow.pipeline import (
    ConfigError,
    InputSpec,
    PipelineConfig,
    bench,
    clip_recognition,
    config_from_dict,
    evaluate,
    format_event,
    load_config,
    make_source,
    run_pipeline,
)
from headflow.shadow import apply_shadow_pass
from headflow.synth import (
    Background,
    BlobSpec,
    SceneSpec,
    build_corpus,
    direction_clip_spec,
    gen_clip,
    gen_gesture_clip,
    write_clip,
)


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


def right_clip(n_frames=24, width=72, height=72, noise=0.0, seed=3):
    spec = direction_clip_spec(
        Direction.RIGHT, 0, width=width, height=height,
        n_frames=n_frames, noise_sigma=noise, seed=seed,
    )
    return gen_clip(spec)


def fast_config(burn_in=8, **kwargs):
    return PipelineConfig(burn_in_frames=burn_in, **kwargs)


class TestConfigParsing:
    def test_empty_doc_gives_defaults(self):
        cfg = config_from_dict({})
        assert cfg == PipelineConfig()

    def test_nested_overrides(self):
        cfg = config_from_dict(
            {
                "gmm": {"alpha": 0.01, "k": 4},
                "flow": {"input_mode": "grayscale"},
                "classifier": {"vote_window": 3},
                "burn_in_frames": 10,
            }
        )
        assert cfg.gmm.alpha == 0.01
        assert cfg.gmm.k == 4
        assert cfg.gmm.bg_threshold == 0.7
        assert cfg.flow.input_mode == "grayscale"
        assert cfg.classifier.vote_window == 3
        assert cfg.burn_in_frames == 10

    def test_dump_section(self):
        cfg = config_from_dict(
            {"dump": {"masks": "m", "flow": "f", "events": "e.jsonl"}}
        )
        assert cfg.dump_masks == "m"
        assert cfg.dump_flow == "f"
        assert cfg.events_path == "e.jsonl"

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"gmm2": {}})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"gmm": {"alpha2": 0.1}})

    def test_unknown_dump_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"dump": {"masks2": "x"}})

    def test_bad_value_becomes_config_error(self):
        with pytest.raises(ConfigError):
            config_from_dict({"gmm": {"alpha": 2.0}})

    def test_root_must_be_object(self):
        with pytest.raises(ConfigError):
            config_from_dict([1, 2])

    def test_negative_burn_in_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"burn_in_frames": -1})

    def test_raw_input_needs_dimensions(self):
        with pytest.raises(ConfigError):
            InputSpec(mode="raw")

    def test_load_config(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"burn_in_frames": 5}')
        assert load_config(path).burn_in_frames == 5

    def test_load_config_bad_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")

    def test_make_source_needs_path(self):
        with pytest.raises(ConfigError):
            make_source(InputSpec(mode="directory"))


class TestFormatEvent:
    def test_fixed_precision_and_null(self):
        line = format_event(3, 0.5, -0.25, Direction.RIGHT, None)
        assert line == (
            '{"frame": 3, "s_x": 0.5000, "s_y": -0.2500, '
            '"direction": "RIGHT", "gesture": null}'
        )

    def test_gesture_quoted(self):
        line = format_event(9, 0.0, 0.0, Direction.IDLE, "NO")
        assert json.loads(line)["gesture"] == "NO"


class TestRunPipeline:
    def test_right_clip_classified_right(self):
        frames, _ = right_clip()
        report = run_pipeline(fast_config(), ListSource(frames))
        assert report.frames_processed == 24
        assert report.classified_frames == 16
        right = report.direction_counts.get("RIGHT", 0)
        assert right / report.classified_frames >= 0.8
        assert clip_recognition(report) is Direction.RIGHT

    def test_report_invariants(self):
        frames, _ = right_clip()
        report = run_pipeline(fast_config(), ListSource(frames))
        assert sum(report.direction_counts.values()) == report.classified_frames
        assert len(report.directions) == report.classified_frames
        assert len(report.event_lines) == report.classified_frames

    def test_constant_clip_idles(self):
        img = np.full((30, 40, 3), 120, np.uint8)
        frames = [Frame(40, 30, 3, img.copy(), index=i) for i in range(16)]
        report = run_pipeline(fast_config(burn_in=4), ListSource(frames))
        assert report.direction_counts == {"IDLE": 12}
        assert report.gesture_events == []

    def test_no_gesture_detected_end_to_end(self):
        spec = SceneSpec(
            width=96, height=96, n_frames=60,
            background=Background(top=(90.0, 95.0, 100.0)),
            blob=BlobSpec(x=36, y=36, width=22, height=22, velocity=(2.5, 0.0),
                          intensity=(205.0, 60.0, 60.0)),
            noise_sigma=0.0, seed=12,
        )
        frames, truth = gen_gesture_clip("NO", spec, hold_frames=20)
        assert [g.kind for g in truth.gestures] == ["NO"]
        report = run_pipeline(fast_config(burn_in=18), ListSource(frames))
        assert [e.kind for e in report.gesture_events] == ["NO"]

    def test_jsonl_schema(self):
        frames, _ = right_clip(n_frames=16)
        report = run_pipeline(fast_config(), ListSource(frames))
        names = {d.value for d in Direction}
        for k, line in zip(range(8, 16), report.event_lines):
            doc = json.loads(line)
            assert set(doc) == {"frame", "s_x", "s_y", "direction", "gesture"}
            assert doc["frame"] == k
            assert isinstance(doc["s_x"], float) and isinstance(doc["s_y"], float)
            assert doc["direction"] in names
            assert doc["gesture"] in (None, "YES", "NO")

    def test_event_stream_deterministic(self):
        frames, _ = right_clip(n_frames=18, noise=2.0)
        a = run_pipeline(fast_config(), ListSource(frames))
        b = run_pipeline(fast_config(), ListSource(frames))
        assert a.event_lines == b.event_lines
        assert a.direction_counts == b.direction_counts

    def test_burn_in_gating(self):
        frames, _ = right_clip(n_frames=14)
        report = run_pipeline(fast_config(burn_in=10), ListSource(frames))
        assert report.frames_processed == 14
        assert report.classified_frames == 4
        assert json.loads(report.event_lines[0])["frame"] == 10

    def test_events_written_to_path(self, tmp_path):
        frames, _ = right_clip(n_frames=12)
        path = tmp_path / "events.jsonl"
        config = fast_config(burn_in=8, events_path=str(path))
        report = run_pipeline(config, ListSource(frames))
        lines = path.read_text().splitlines()
        assert lines == report.event_lines

    def test_degenerate_two_by_two(self):
        img = np.full((2, 2, 3), 50, np.uint8)
        frames = [Frame(2, 2, 3, img.copy(), index=i) for i in range(6)]
        report = run_pipeline(fast_config(burn_in=2), ListSource(frames))
        assert report.frames_processed == 6
        assert report.classified_frames == 4


class TestDumps:
    def run_with_dumps(self, tmp_path, burn_in=6, n_frames=12):
        frames, _ = right_clip(n_frames=n_frames, width=48, height=48)
        config = fast_config(
            burn_in=burn_in,
            dump_masks=str(tmp_path / "masks"),
            dump_flow=str(tmp_path / "flow"),
        )
        report = run_pipeline(config, ListSource(frames))
        return frames, config, report

    def test_dump_counts(self, tmp_path):
        frames, config, report = self.run_with_dumps(tmp_path)
        masks = sorted((tmp_path / "masks").glob("mask_*.pgm"))
        flows = sorted((tmp_path / "flow").glob("flow_*.flo"))
        assert len(masks) == report.frames_processed
        # every classified frame has a predecessor here, so each one dumps
        assert len(flows) == report.classified_frames
        assert flows[0].name == f"flow_{config.burn_in_frames:06d}.flo"

    def test_dumps_match_recomputed_state(self, tmp_path):
        frames, config, _ = self.run_with_dumps(tmp_path)
        model = BackgroundModel(48, 48, 3, config.gmm)
        prev = None
        for frame in frames:
            mask = process_frame(model, frame)
            mask = apply_shadow_pass(mask, frame, model, config.shadow)
            dumped = decode_pnm(
                (tmp_path / "masks" / f"mask_{frame.index:06d}.pgm").read_bytes()
            )
            assert np.array_equal(dumped.data[:, :, 0], mask.labels)
            flow_img = np.where(mask.labels == FOREGROUND, 255.0, 0.0)
            if frame.index >= config.burn_in_frames and prev is not None:
                flow = solve_flow(prev, flow_img, config.flow)
                back = read_flo(tmp_path / "flow" / f"flow_{frame.index:06d}.flo")
                assert np.array_equal(back.u, flow.u.astype(np.float32))
                assert np.array_equal(back.v, flow.v.astype(np.float32))
            prev = flow_img

    def test_zero_burn_in_first_frame_has_no_flow_dump(self, tmp_path):
        frames, _ = right_clip(n_frames=6, width=48, height=48)
        config = fast_config(burn_in=0, dump_flow=str(tmp_path / "flow"))
        report = run_pipeline(config, ListSource(frames))
        flows = sorted((tmp_path / "flow").glob("*.flo"))
        assert len(flows) == report.classified_frames - 1


class TestBench:
    def test_requires_min_frames(self):
        frames, _ = right_clip(n_frames=12)
        with pytest.raises(ValueError):
            bench(fast_config(), ListSource(frames), min_frames=100)

    def test_reports_fps(self):
        frames, _ = right_clip(n_frames=16)
        report = bench(fast_config(), ListSource(frames), min_frames=8)
        assert report.fps > 0.0
        assert report.classified_frames == 8


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return build_corpus(
        root, n_per_direction=1, width=60, height=60,
        n_frames=20, noise_sigma=0.0, seed0=900,
    )


class TestEvaluate:
    def test_perfect_corpus(self, corpus):
        report = evaluate(corpus, fast_config(burn_in=6))
        assert report.n_clips == 4
        assert report.overall == 1.0
        assert {r.direction for r in report.rows} == {"LEFT", "RIGHT", "UP", "DOWN"}
        assert all(r.rate == 1.0 for r in report.rows)

    def test_format_table(self, corpus):
        report = evaluate(corpus, fast_config(burn_in=6))
        table = report.format_table()
        lines = table.splitlines()
        assert lines[0].split() == ["direction", "clips", "correct", "rate"]
        assert lines[-1].startswith("overall")
        assert "100.0%" in lines[-1]

    def test_empty_manifest(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text('{"clips": []}')
        report = evaluate(path, fast_config())
        assert report.overall is None
        assert "n/a" in report.format_table()


class TestCli:
    def write_clip_dir(self, tmp_path, n_frames=14):
        frames, _ = right_clip(n_frames=n_frames, width=48, height=48)
        clip_dir = tmp_path / "clip"
        write_clip(frames, clip_dir)
        return clip_dir

    def test_run_events_to_file(self, tmp_path, capsys):
        clip_dir = self.write_clip_dir(tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"burn_in_frames": 8}')
        events = tmp_path / "events.jsonl"
        rc = cli.main([
            "run", "--input", str(clip_dir), "--config", str(cfg),
            "--events", str(events),
        ])
        captured = capsys.readouterr()
        assert rc == cli.EXIT_OK
        assert len(events.read_text().splitlines()) == 6
        assert "processed 14 frames (6 classified" in captured.err
        assert captured.out == ""

    def test_run_events_to_stdout(self, tmp_path, capsys):
        clip_dir = self.write_clip_dir(tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"burn_in_frames": 10}')
        rc = cli.main(["run", "--input", str(clip_dir), "--config", str(cfg)])
        captured = capsys.readouterr()
        assert rc == cli.EXIT_OK
        lines = captured.out.splitlines()
        assert len(lines) == 4
        assert all(json.loads(line)["direction"] for line in lines)

    def test_flag_overrides_config_file(self, tmp_path):
        clip_dir = self.write_clip_dir(tmp_path)
        file_events = tmp_path / "from_file.jsonl"
        flag_events = tmp_path / "from_flag.jsonl"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(
            {"burn_in_frames": 10, "dump": {"events": str(file_events)}}
        ))
        rc = cli.main([
            "run", "--input", str(clip_dir), "--config", str(cfg),
            "--events", str(flag_events),
        ])
        assert rc == cli.EXIT_OK
        assert flag_events.exists()
        assert not file_events.exists()

    def test_run_missing_input(self, tmp_path, capsys):
        rc = cli.main(["run", "--input", str(tmp_path / "absent")])
        assert rc == cli.EXIT_INPUT
        assert "input error" in capsys.readouterr().err

    def test_run_without_input_is_config_error(self, capsys):
        assert cli.main(["run"]) == cli.EXIT_CONFIG

    def test_run_bad_config(self, tmp_path, capsys):
        clip_dir = self.write_clip_dir(tmp_path, n_frames=4)
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"gmm": {"bogus": 1}}')
        rc = cli.main(["run", "--input", str(clip_dir), "--config", str(cfg)])
        assert rc == cli.EXIT_CONFIG
        assert "configuration error" in capsys.readouterr().err

    def test_synth_clip_and_truth(self, tmp_path, capsys):
        spec = {
            "width": 40, "height": 32, "n_frames": 5,
            "blob": {"x": 4, "y": 8, "width": 10, "height": 10,
                     "velocity": [2.0, 0.0]},
        }
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        out = tmp_path / "out"
        rc = cli.main(["synth", "--spec", str(spec_path), "--out", str(out)])
        assert rc == cli.EXIT_OK
        assert len(list(out.glob("*.ppm"))) == 5
        truth = json.loads((out / "truth.json").read_text())
        assert set(truth) == {"rects", "velocities", "directions", "gestures"}
        assert truth["directions"][1] == "RIGHT"

    def test_synth_gesture_spec(self, tmp_path):
        spec = {
            "width": 48, "height": 48, "n_frames": 20, "gesture": "yes",
            "hold_frames": 2,
            "blob": {"x": 18, "y": 18, "width": 10, "height": 10,
                     "velocity": [0.0, 2.0]},
        }
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        out = tmp_path / "out"
        rc = cli.main(["synth", "--spec", str(spec_path), "--out", str(out)])
        assert rc == cli.EXIT_OK
        truth = json.loads((out / "truth.json").read_text())
        assert [g["kind"] for g in truth["gestures"]] == ["YES"]

    def test_synth_corpus(self, tmp_path, capsys):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({
            "corpus": {"n_per_direction": 1, "width": 60, "height": 60,
                       "n_frames": 4, "noise_sigma": 0.0, "seed0": 11},
        }))
        out = tmp_path / "corpus"
        rc = cli.main(["synth", "--spec", str(spec_path), "--out", str(out)])
        assert rc == cli.EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["clips"]) == 4

    def test_synth_bad_spec(self, tmp_path, capsys):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text('{"width": 40}')
        rc = cli.main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "o")])
        assert rc == cli.EXIT_CONFIG

    def test_evaluate_missing_manifest(self, tmp_path, capsys):
        rc = cli.main(["evaluate", "--corpus", str(tmp_path / "nope.json")])
        assert rc == cli.EXIT_INPUT

    def test_evaluate_corpus(self, tmp_path, capsys):
        manifest = build_corpus(
            tmp_path / "c", n_per_direction=1, width=60, height=60,
            n_frames=16, noise_sigma=0.0, seed0=42,
        )
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"burn_in_frames": 6}')
        rc = cli.main(["evaluate", "--corpus", str(manifest), "--config", str(cfg)])
        captured = capsys.readouterr()
        assert rc == cli.EXIT_OK
        assert captured.out.splitlines()[-1].startswith("overall")

    def test_bench_command(self, tmp_path, capsys):
        # long clip with a blob jittering in place; direction is irrelevant
        frames = []
        for i in range(104):
            img = np.full((40, 40, 3), 100, np.uint8)
            x = 8 + (i % 3)
            img[14:26, x : x + 12] = (210, 60, 60)
            frames.append(Frame(40, 40, 3, img, index=i))
        clip_dir = tmp_path / "clip"
        write_clip(frames, clip_dir)
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"burn_in_frames": 4}')
        rc = cli.main(["bench", "--input", str(clip_dir), "--config", str(cfg)])
        captured = capsys.readouterr()
        assert rc == cli.EXIT_OK
        assert "frames: 100" in captured.out
        assert "fps:" in captured.out
