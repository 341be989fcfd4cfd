"""Command-line front end: synth, calibrate, make-ref, tune, evaluate,
repeat, and smoothness, all driven by a single JSON session config."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import report
from .imaging import ColorDomain, PlanarImage, read_image, write_image, write_mask
from .isp import PIPELINE_ORDER, BlockId
from .refgen import Burst, calibrate_noise_model, simulate_capture, synthesize_scene
from .tuner import (
    SessionConfig,
    TuningLadder,
    build_reference,
    derive_seed,
    evaluate_tuning,
    prepare_gain_data,
    repeatability_experiment,
    transition_smoothness,
    tune_ladder,
    tune_pipeline,
)

_STAGE_CALIBRATE = 71


def _load_config(args) -> SessionConfig:
    cfg = SessionConfig.load(args.config) if args.config else SessionConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    return cfg


def _prepare_out(cfg: SessionConfig, command: str) -> tuple[Path, report.Manifest]:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out, report.Manifest(out, command, cfg.seed)


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    out, manifest = _prepare_out(cfg, "synth")
    scene_rgb, flat = synthesize_scene(cfg.scene, cfg.seed)
    write_image(out / "scene.ppm", scene_rgb)
    manifest.add(out / "scene.ppm", "scene rgb")
    write_mask(out / "flat_mask.pgm", flat)
    manifest.add(out / "flat_mask.pgm", "flat mask")
    (out / "scene.json").write_text(
        json.dumps(cfg.scene.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest.add(out / "scene.json", "scene spec")
    report.plot_comparison(out / "scene.png", {"reference": scene_rgb}, title="Synthetic scene")
    manifest.add(out / "scene.png", "figure")
    manifest.save()
    print(f"synth: wrote scene {scene_rgb.width}x{scene_rgb.height} to {out}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    out, manifest = _prepare_out(cfg, "calibrate")
    if args.flats:
        spec = json.loads(Path(args.flats).read_text())
        base = Path(args.flats).parent
        bursts = []
        for entry in spec:
            frames = [read_image(base / p) for p in entry["frames"]]
            bursts.append((Burst(frames), float(entry["level"])))
    else:
        nm_true = cfg.noise_model(args.gain)
        bursts = []
        for i, level in enumerate(args.levels):
            flat = PlanarImage(np.full((3, 64, 64), level), ColorDomain.LINEAR_RGB)
            burst = simulate_capture(flat, nm_true, cfg.pattern, cfg.burst_frames,
                                     derive_seed(cfg.seed, _STAGE_CALIBRATE, i))
            bursts.append((burst, level))
    nm = calibrate_noise_model(bursts)
    levels = [lv for _, lv in bursts]
    variances = [float(np.var(np.stack([fr.data for fr in b.frames]), ddof=1))
                 for b, _ in bursts]
    (out / "noise_model.json").write_text(json.dumps(
        {"a": nm.a, "b": nm.b, "gain": nm.gain}, indent=2, sort_keys=True) + "\n")
    manifest.add(out / "noise_model.json", "noise model")
    report.write_csv(out / "noise_fit.csv", ["level", "variance"],
                     [[lv, v] for lv, v in zip(levels, variances)])
    manifest.add(out / "noise_fit.csv", "calibration data")
    report.plot_noise_fit(out / "noise_fit.png", levels, variances, nm)
    manifest.add(out / "noise_fit.png", "figure")
    manifest.save()
    print(f"calibrate: a={nm.a:.4e} b={nm.b:.4e} -> {out / 'noise_model.json'}")
    return 0


def cmd_make_ref(args) -> int:
    cfg = _load_config(args)
    out, manifest = _prepare_out(cfg, "make-ref")
    gd = prepare_gain_data(cfg, args.gain)
    if args.ladder:
        tuning = TuningLadder.load(args.ladder).entry(args.gain).tuning
    else:
        from .isp import passthrough_tuning
        tuning = passthrough_tuning()
    upstream = {b: tuning[b] for b in PIPELINE_ORDER}

    write_image(out / "input_frame.pgm", gd.input_frame)
    manifest.add(out / "input_frame.pgm", "noisy input frame")
    write_mask(out / "flat_mask.pgm", gd.flat_mask)
    manifest.add(out / "flat_mask.pgm", "flat mask")

    nr_ref = build_reference(BlockId.BAYER_NR, gd, upstream, cfg)
    write_image(out / "bayer_nr_ref.pgm", nr_ref)
    manifest.add(out / "bayer_nr_ref.pgm", "bayer nr reference")

    dm_ref = build_reference(BlockId.DEMOSAIC, gd, upstream, cfg)
    write_image(out / "demosaic_ref.ppm", dm_ref)
    manifest.add(out / "demosaic_ref.ppm", "demosaic reference")

    yuv_ref = build_reference(BlockId.YUV_NR, gd, upstream, cfg)
    for i, (name, offset) in enumerate((("y", 0.0), ("u", 0.5), ("v", 0.5))):
        # chroma written offset-binary so signed values survive quantization
        plane = PlanarImage(yuv_ref.data[i] + offset, ColorDomain.PLANE)
        write_image(out / f"yuv_nr_ref_{name}.pgm", plane)
        manifest.add(out / f"yuv_nr_ref_{name}.pgm", f"yuv nr reference ({name})")

    sharp_ref = build_reference(BlockId.SHARPEN, gd, upstream, cfg)
    write_image(out / "sharpen_ref.pgm", sharp_ref)
    manifest.add(out / "sharpen_ref.pgm", "sharpening reference")

    report.plot_comparison(
        out / "references.png",
        {"reference": dm_ref, "auto": sharp_ref},
        title=f"References @ gain {args.gain:g}")
    manifest.add(out / "references.png", "figure")
    manifest.save()
    print(f"make-ref: wrote references for gain {args.gain:g} to {out}")
    return 0


def _parse_blocks(names: str | None) -> tuple[BlockId, ...]:
    if not names:
        return PIPELINE_ORDER
    return tuple(BlockId(n.strip()) for n in names.split(","))


def cmd_tune(args) -> int:
    cfg = _load_config(args)
    out, manifest = _prepare_out(cfg, "tune")
    blocks = _parse_blocks(args.blocks)
    mode = "warm_global" if args.regularize_with_global else "warm"
    regularize = args.regularize or args.regularize_with_global

    if args.ladder:
        ladder = tune_ladder(cfg, blocks=blocks, regularize=regularize, mode=mode)
    else:
        gain = args.gain if args.gain is not None else cfg.gains[0]
        entry = tune_pipeline(cfg, gain, blocks=blocks)
        ladder = TuningLadder(cfg.seed, "independent", [entry])

    ladder.save(out / "ladder.json")
    manifest.add(out / "ladder.json", "tuning ladder")
    for entry in ladder.entries:
        name = f"trace_gain{entry.gain:g}.csv"
        report.write_trace_csv(out / name, entry.traces)
        manifest.add(out / name, "convergence trace")
        report.plot_convergence(out / f"convergence_gain{entry.gain:g}.png", entry.traces,
                                title=f"Convergence @ gain {entry.gain:g}")
        manifest.add(out / f"convergence_gain{entry.gain:g}.png", "figure")
    if len(ladder.entries) > 1:
        report.plot_ladder(out / "ladder.png", ladder)
        manifest.add(out / "ladder.png", "figure")
    manifest.save()
    for entry in ladder.entries:
        fit = ", ".join(f"{b}={v:.3f}" for b, v in sorted(entry.fitness.items()))
        print(f"tune: gain {entry.gain:g} (seed {cfg.seed}) fitness {fit}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out, manifest = _prepare_out(cfg, "evaluate")
    ladder = TuningLadder.load(args.ladder)
    gains = [args.gain] if args.gain is not None else None
    rows, images = evaluate_tuning(ladder, cfg, gains)
    report.write_eval_csv(out / "block_metrics.csv", rows)
    manifest.add(out / "block_metrics.csv", "block metrics table")
    crop = tuple(args.crop) if args.crop else None
    for gain, finals in images.items():
        fig_path = out / f"comparison_gain{gain:g}.png"
        report.plot_comparison(fig_path, finals, crop=crop,
                               title=f"Gain {gain:g} ({cfg.pattern.value})")
        manifest.add(fig_path, "figure")
        for label, img in finals.items():
            ppm = out / f"{label}_gain{gain:g}.ppm"
            write_image(ppm, img)
            manifest.add(ppm, f"{label} output")
    manifest.save()
    for row in rows:
        print(f"evaluate: gain {row.gain:g} {row.block:9s} {row.tuning:10s} "
              f"MAD={row.mad_8bit:8.4f} SSIM={row.ssim:.4f} MS-SSIM={row.ms_ssim:.4f}")
    return 0


def cmd_repeat(args) -> int:
    cfg = _load_config(args)
    out, manifest = _prepare_out(cfg, "repeat")
    rep = repeatability_experiment(cfg, runs=args.runs)
    report.write_repeat_csv(out / "repeatability.csv", rep)
    manifest.add(out / "repeatability.csv", "repeatability table")
    report.write_csv(out / "repeat_runs.csv", ["flow", "run", "mad"],
                     [[flow, i, m] for flow, ms in sorted(rep.mads.items())
                      for i, m in enumerate(ms)])
    manifest.add(out / "repeat_runs.csv", "per-run fitness")
    report.plot_repeatability(out / "repeatability.png", rep)
    manifest.add(out / "repeatability.png", "figure")
    manifest.save()
    for flow in ("global", "global_local", "global_local_prior"):
        print(f"repeat: {flow:20s} AVE={rep.ave[flow]:.5f} STD={rep.std[flow]:.2e}")
    return 0


def cmd_smoothness(args) -> int:
    cfg = _load_config(args)
    out, manifest = _prepare_out(cfg, "smoothness")
    reports = {}
    for path in args.ladder:
        ladder = TuningLadder.load(path)
        label = ladder.mode
        if label in reports:
            label = f"{label}_{len(reports)}"
        sm = transition_smoothness(ladder)
        reports[label] = sm
        csv_path = out / f"smoothness_{label}.csv"
        report.write_smoothness_csv(csv_path, sm)
        manifest.add(csv_path, "smoothness table")
    report.plot_smoothness(out / "fig_transitions.png", reports)
    manifest.add(out / "fig_transitions.png", "figure")
    manifest.save()
    for label, sm in sorted(reports.items()):
        print(f"smoothness: {label:14s} mean jump {sm.mean_jump:.4f} "
              f"(bayer_nr {sm.per_block_mean.get('bayer_nr', float('nan')):.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isptune",
        description="Automatic IQ tuning of a simulated four-block ISP pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="session config JSON (defaults built in)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed override")

    p = sub.add_parser("synth", help="render the synthetic scene and flat mask")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="fit the noise model from flat bursts")
    common(p)
    p.add_argument("--levels", type=float, nargs="+", default=[0.2, 0.5, 0.8])
    p.add_argument("--gain", type=float, default=1.0, help="capture gain for synthetic flats")
    p.add_argument("--flats", help="JSON manifest of captured flat bursts")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("make-ref", help="emit per-block reference images")
    common(p)
    p.add_argument("--gain", type=float, required=True)
    p.add_argument("--ladder", help="ladder JSON supplying tuned upstream blocks")
    p.set_defaults(func=cmd_make_ref)

    p = sub.add_parser("tune", help="tune one gain or the whole ladder")
    common(p)
    p.add_argument("--gain", type=float, help="single gain to tune")
    p.add_argument("--ladder", action="store_true", help="tune every configured gain")
    p.add_argument("--regularize", action="store_true",
                   help="warm-start each gain from the one below (skip global stage)")
    p.add_argument("--regularize-with-global", action="store_true",
                   help="warm-start but keep a shortened global stage")
    p.add_argument("--blocks", help="comma-separated subset of blocks to tune")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", help="per-block metric table and comparison crops")
    common(p)
    p.add_argument("--ladder", required=True, help="ladder JSON to evaluate")
    p.add_argument("--gain", type=float, help="restrict to one gain")
    p.add_argument("--crop", type=int, nargs=4, metavar=("X0", "Y0", "W", "H"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("repeat", help="repeatability experiment across optimizer flows")
    common(p)
    p.add_argument("--runs", type=int, default=10)
    p.set_defaults(func=cmd_repeat)

    p = sub.add_parser("smoothness", help="gain-transition smoothness of a tuning ladder")
    common(p)
    p.add_argument("--ladder", action="append", required=True,
                   help="ladder JSON (repeatable to compare flows)")
    p.set_defaults(func=cmd_smoothness)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
