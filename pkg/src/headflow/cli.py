"""Command line entry point.

Subcommands: run (process a clip and stream JSONL events), bench
(post-warm-up throughput), evaluate (per-direction accuracy over a
labeled corpus), synth (generate a clip from a scene description).
Exit codes: 0 on success, 1 for input problems, 2 for configuration
problems.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .frames import PnmError, RawStreamTruncatedError
from .pipeline import (
    ConfigError,
    InputSpec,
    PipelineConfig,
    bench,
    evaluate,
    load_config,
    make_source,
    run_pipeline,
)
from .synth import (
    build_corpus,
    gen_clip,
    gen_gesture_clip,
    spec_from_dict,
    write_clip,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="headflow",
        description="Head-gesture recognition from video clips",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="process a clip and emit JSONL events")
    run_p.add_argument("--input", help="directory of .pgm/.ppm frames")
    run_p.add_argument("--raw", action="store_true",
                       help="read headerless frames from stdin")
    run_p.add_argument("--width", type=int, help="raw frame width")
    run_p.add_argument("--height", type=int, help="raw frame height")
    run_p.add_argument("--channels", type=int, choices=(1, 3),
                       help="raw frame channels (default 3)")
    run_p.add_argument("--config", help="JSON configuration file")
    run_p.add_argument("--dump-masks", metavar="DIR",
                       help="write per-frame segmentation masks as PGM")
    run_p.add_argument("--dump-flow", metavar="DIR",
                       help="write per-frame flow fields as .flo")
    run_p.add_argument("--events", metavar="FILE",
                       help="write JSONL events here instead of stdout")

    bench_p = sub.add_parser("bench", help="measure post-warm-up throughput")
    bench_p.add_argument("--input", required=True, help="directory of frames")
    bench_p.add_argument("--config", help="JSON configuration file")

    eval_p = sub.add_parser("evaluate", help="score a labeled corpus")
    eval_p.add_argument("--corpus", required=True, metavar="MANIFEST",
                        help="corpus manifest JSON")
    eval_p.add_argument("--config", help="JSON configuration file")

    synth_p = sub.add_parser("synth", help="generate a synthetic clip")
    synth_p.add_argument("--spec", required=True, help="scene description JSON")
    synth_p.add_argument("--out", required=True, help="output directory")
    return parser


def _load_base_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return load_config(path)


def _cmd_run(args) -> int:
    config = _load_base_config(args.config)
    if args.raw and args.input:
        raise ConfigError("choose either --input or --raw, not both")
    inp = config.input
    if args.raw:
        inp = InputSpec(
            mode="raw", path=None,
            width=args.width if args.width else inp.width,
            height=args.height if args.height else inp.height,
            channels=args.channels if args.channels else inp.channels,
        )
    elif args.input:
        inp = InputSpec(mode="directory", path=args.input)
    elif inp.path is None:
        raise ConfigError("no input given: pass --input DIR or --raw")
    config = replace(
        config,
        input=inp,
        dump_masks=args.dump_masks or config.dump_masks,
        dump_flow=args.dump_flow or config.dump_flow,
        events_path=args.events or config.events_path,
    )

    raw_stream = sys.stdin.buffer if args.raw else None
    source = make_source(config.input, raw_stream=raw_stream)
    events_out = None
    if config.events_path is None:
        events_out = sys.stdout
    report = run_pipeline(config, source=source, events_out=events_out)
    print(
        f"processed {report.frames_processed} frames "
        f"({report.classified_frames} classified, "
        f"{len(report.gesture_events)} gestures)",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_bench(args) -> int:
    config = _load_base_config(args.config)
    config = replace(config, input=InputSpec(mode="directory", path=args.input))
    report = bench(config)
    print(f"frames: {report.classified_frames}")
    print(f"fps: {report.fps:.2f}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    config = _load_base_config(args.config)
    report = evaluate(args.corpus, config)
    print(report.format_table())
    return EXIT_OK


def _cmd_synth(args) -> int:
    try:
        doc = json.loads(Path(args.spec).read_text())
    except OSError as exc:
        raise FileNotFoundError(f"cannot read spec file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"spec file is not valid JSON: {exc}") from None

    out = Path(args.out)
    if "corpus" in doc:
        corpus = doc["corpus"]
        try:
            manifest = build_corpus(
                out,
                n_per_direction=int(corpus.get("n_per_direction", 10)),
                width=int(corpus.get("width", 120)),
                height=int(corpus.get("height", 120)),
                n_frames=int(corpus.get("n_frames", 60)),
                noise_sigma=float(corpus.get("noise_sigma", 2.0)),
                seed0=int(corpus.get("seed0", 20_000)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad corpus spec: {exc}") from None
        print(f"wrote corpus manifest {manifest}")
        return EXIT_OK

    try:
        spec = spec_from_dict(doc)
        gesture = doc.get("gesture")
        if gesture is not None:
            frames, truth = gen_gesture_clip(
                str(gesture).upper(), spec,
                hold_frames=int(doc.get("hold_frames", 0)),
            )
        else:
            frames, truth = gen_clip(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scene spec: {exc}") from None

    write_clip(frames, out)
    truth_doc = {
        "rects": truth.rects,
        "velocities": truth.velocities,
        "directions": [d.value for d in truth.directions],
        "gestures": [
            {"kind": g.kind, "start_frame": g.start_frame, "end_frame": g.end_frame}
            for g in truth.gestures
        ],
    }
    (out / "truth.json").write_text(json.dumps(truth_doc, indent=1))
    print(f"wrote {len(frames)} frames to {out}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "bench": _cmd_bench,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, NotADirectoryError, PnmError,
            RawStreamTruncatedError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
