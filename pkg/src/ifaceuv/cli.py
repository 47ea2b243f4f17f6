"""Command-line entry points.

Subcommands: synth-data, train, reenact, audio-reenact, eval, serve, bench.
IFACEUV_DATA_ROOT and IFACEUV_CHECKPOINT provide default paths.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

CHECKPOINT_ENV = "IFACEUV_CHECKPOINT"


def _checkpoint_path(args):
    path = args.checkpoint or os.environ.get(CHECKPOINT_ENV)
    if not path:
        raise ValueError(
            f"no checkpoint given (flag --checkpoint or {CHECKPOINT_ENV})")
    if not Path(path).is_file():
        raise FileNotFoundError(f"checkpoint file not found: {path}")
    return path


def _find_data_root(args, *hint_paths):
    from .dataio import DATA_ROOT_ENV
    if getattr(args, "data_root", None):
        return Path(args.data_root)
    env = os.environ.get(DATA_ROOT_ENV)
    if env:
        return Path(env)
    for hint in hint_paths:
        p = Path(hint).resolve()
        for cand in [p] + list(p.parents):
            if (cand / "basis.bin").is_file():
                return cand
    raise ValueError("cannot locate dataset root (basis.bin); "
                     "pass --data-root")


def cmd_synth_data(args):
    from .dataio import generate_synthetic_corpus
    root = generate_synthetic_corpus(
        args.out, n_identities=args.identities,
        frames_per_video=args.frames, resolution=args.resolution,
        seed=args.seed, n_test_identities=args.test_identities)
    print(f"synthetic corpus written to {root}")
    return 0


def cmd_train(args):
    from .training import TrainConfig, train
    config = TrainConfig.from_json(args.config)
    if args.data_root:
        config.data_root = args.data_root
    if args.out_dir:
        config.out_dir = args.out_dir
    state, final = train(config, resume_from=args.resume)
    print(f"trained {state.step} steps; final checkpoint: {final}")
    return 0


def _load_source(source_path, model):
    """A source spec is either a video directory or a bare PNG."""
    from .dataio import load_image, load_video
    from .facemodel import IdentityParams, MotionParams
    source_path = Path(source_path)
    if source_path.is_dir():
        record = load_video(source_path)
        image = load_image(record.frame_paths[0])
        return image, record.motion[0], record.identity, record
    image = load_image(source_path)
    return image, MotionParams.zero(), \
        IdentityParams(np.zeros(model.basis.identity_dim)), None


def _write_frames(model, source, source_motion, identity, motions,
                  indices, out_dir):
    from .dataio import save_image
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    initial_uv = model.source_uv(source, source_motion, identity)
    with torch.no_grad():
        for t in indices:
            window = model.window_for(motions, t)
            out = model.reenact(source, source_motion, identity, window,
                                initial_uv=initial_uv)
            save_image(out["final"], out_dir / f"{t:06d}.png")
    return len(indices)


def cmd_reenact(args):
    from .dataio import load_video
    from .training import load_model_from_checkpoint
    ckpt = _checkpoint_path(args)
    data_root = _find_data_root(args, args.source, args.driver)
    model, _ = load_model_from_checkpoint(ckpt, data_root)
    source, source_motion, identity, source_record = _load_source(
        args.source, model)
    driver = load_video(args.driver)
    same_video = source_record is not None and \
        Path(args.source).resolve() == Path(args.driver).resolve()
    start = 1 if same_video else 0
    indices = list(range(start, len(driver.motion)))
    n = _write_frames(model, source, source_motion, identity,
                      driver.motion, indices, args.out)
    print(f"wrote {n} reenacted frames to {args.out}")
    return 0


def cmd_audio_reenact(args):
    from .audio import (MfccConfig, extract_mfcc, interpolate_to_fps,
                        load_audio_regressor, load_wav,
                        predict_motion_sequence, AudioMotionRegressor)
    from .dataio import load_checkpoint, write_motion_file
    from .facemodel import split_motion
    from .training import load_model_from_checkpoint
    ckpt = _checkpoint_path(args)
    data_root = _find_data_root(args, args.source)
    model, _ = load_model_from_checkpoint(ckpt, data_root)
    arrays, _ = load_checkpoint(ckpt)
    regressor = load_audio_regressor(arrays)
    if regressor is None:
        regressor = AudioMotionRegressor(seed=model.config.seed)
        regressor.eval()
        print("note: checkpoint has no audio weights; using a fresh "
              "seeded regressor", file=sys.stderr)

    waveform = load_wav(args.wav)
    feats = extract_mfcc(waveform, MfccConfig())
    aligned = interpolate_to_fps(feats, waveform, fps=args.fps)
    rows = predict_motion_sequence(aligned, regressor)
    motions = [split_motion(r) for r in rows]

    source, source_motion, identity, _ = _load_source(args.source, model)
    out_dir = Path(args.out)
    n = _write_frames(model, source, source_motion, identity, motions,
                      list(range(len(motions))), out_dir)
    write_motion_file(out_dir / "motion.jsonl", motions)
    print(f"wrote {n} audio-driven frames to {args.out}")
    return 0


def cmd_eval(args):
    from .metrics import write_report
    from .training import evaluate
    ckpt = _checkpoint_path(args)
    data_root = _find_data_root(args)
    report = evaluate(ckpt, data_root, split=args.split, mode=args.mode)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        write_report(report, args.out)
    print(text)
    return 0


def cmd_serve(args):
    import uvicorn

    from .audio import load_audio_regressor
    from .dataio import load_checkpoint
    from .service import create_app
    from .training import load_model_from_checkpoint
    ckpt = _checkpoint_path(args)
    data_root = _find_data_root(args)
    model, _ = load_model_from_checkpoint(ckpt, data_root)
    arrays, _ = load_checkpoint(ckpt)
    app = create_app(model, audio_regressor=load_audio_regressor(arrays))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_bench(args):
    from .bench import print_bench, run_bench
    print_bench(run_bench(resolution=args.resolution,
                          n_triangles=args.triangles,
                          repeats=args.repeats))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ifaceuv",
        description="Face reenactment: synthesize, train, reenact, serve.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, default=4)
    p.add_argument("--frames", type=int, default=32)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-identities", type=int, default=0)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--data-root")
    p.add_argument("--out-dir")
    p.add_argument("--resume")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reenact", help="drive a source with a video's "
                                       "motion")
    p.add_argument("--checkpoint")
    p.add_argument("--source", required=True,
                   help="video directory or source PNG")
    p.add_argument("--driver", required=True, help="driving video directory")
    p.add_argument("--out", required=True)
    p.add_argument("--data-root")
    p.set_defaults(func=cmd_reenact)

    p = sub.add_parser("audio-reenact", help="drive a source with audio")
    p.add_argument("--checkpoint")
    p.add_argument("--source", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("--data-root")
    p.set_defaults(func=cmd_audio_reenact)

    p = sub.add_parser("eval", help="metric report for a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--split", default="train",
                   choices=["train", "test", "holdout"])
    p.add_argument("--mode", default="same", choices=["same", "cross"])
    p.add_argument("--out")
    p.add_argument("--data-root")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--checkpoint")
    p.add_argument("--port", type=int, default=8642)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-root")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="compare raster kernel backends")
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--triangles", type=int, default=2000)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
