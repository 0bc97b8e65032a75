"""Command-line pipeline driver.

Subcommands cover the full flow: simulate -> heatmap -> concat -> train ->
build-db -> query -> eval -> render.  Every run is deterministic given its
inputs, config and seed.

Exit codes: 0 success, 1 usage error, 2 empty/degenerate result,
3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import concat as cc
from . import encoder as enc
from . import fileio, synth
from .errors import ConfigError, EmptyResultError, RadarPlaceError
from .heatmap import generate_heatmap, range_to_row, angle_to_col, resize_cube
from .placedb import PlaceDB, PlaceRecord
from .radar import PlatformConfig, RadarConfig, simulate_if_cube, simulate_platform_sweep

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_EMPTY = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _parse_size(text: str) -> tuple[int, int]:
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except ValueError:
        raise ConfigError(f"--heatmap-size expects RxC, got {text!r}")


def _load_configs(path):
    keyvals = fileio.load_keyvals(path) if path else {}
    return keyvals, fileio.radar_config_from(keyvals), fileio.platform_config_from(keyvals)


def _apply_preset(args, keyvals):
    if args.preset is None:
        return
    if args.preset != "paper-defaults":
        raise ConfigError(f"unknown preset {args.preset!r}")
    keyvals.setdefault("heatmap_rows", 64)
    keyvals.setdefault("heatmap_cols", 768)


def _heatmap_files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(path.glob("*.rah"))
    return [path]


# -- subcommands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    keyvals, rcfg, pcfg = _load_configs(args.config)
    scene = fileio.load_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not scene:
        print("warning: empty scene, no cubes written", file=sys.stderr)
        return EXIT_EMPTY
    n_frames = args.frames or int(keyvals.get("n_frames", 1))
    noise_std = float(keyvals.get("noise_std", 0.0))

    if n_frames == 1:
        cubes = [(simulate_if_cube(scene, rcfg, noise_std, args.seed), 0.0)]
    else:
        cubes = simulate_platform_sweep(scene, rcfg, pcfg, n_frames, noise_std, args.seed)
    poses = []
    for f, (cube, heading) in enumerate(cubes):
        fileio.save_cube(out / f"frame_{f:04d}.ifc", cube)
        poses.append({"frame_idx": f, "x_m": 0.0, "y_m": 0.0, "heading_deg": heading})
    fileio.save_poses_csv(out / "truth.csv", poses)

    with open(out / "scatterer_cells.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scatterer_idx", "range_m", "azimuth_deg", "row", "col"])
        for i, sc in enumerate(scene):
            writer.writerow([
                i, f"{sc.range:.6f}", f"{np.degrees(sc.azimuth):.6f}",
                range_to_row(sc.range, rcfg, rcfg.n_samples),
                angle_to_col(sc.azimuth, rcfg, rcfg.n_antennas),
            ])
    print(f"wrote {len(cubes)} cube(s) to {out}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    keyvals, rcfg, _ = _load_configs(args.config)
    _apply_preset(args, keyvals)
    size = _parse_size(args.heatmap_size) if args.heatmap_size else None
    if size is None and "heatmap_rows" in keyvals:
        size = (int(keyvals["heatmap_rows"]), int(keyvals["heatmap_cols"]))
    src = Path(args.input)
    files = sorted(src.glob("*.ifc")) if src.is_dir() else [src]
    if not files:
        print("warning: no cube files found", file=sys.stderr)
        return EXIT_EMPTY
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for f in files:
        cube = fileio.load_cube(f)
        if size is not None:
            cube = resize_cube(cube, *size)
        hm = generate_heatmap(cube, rcfg, max_range_m=args.max_range, window=args.window)
        fileio.save_heatmap(out / (f.stem + ".rah"), hm)
    print(f"wrote {len(files)} heatmap(s) to {out}")
    return EXIT_OK


def cmd_concat(args) -> int:
    files = _heatmap_files(Path(args.input))
    if len(files) < 2:
        print("warning: need at least two heatmaps to concatenate", file=sys.stderr)
        return EXIT_EMPTY
    frames = [fileio.load_heatmap(f) for f in files]
    a_window = args.a_window or cc.default_a_window(frames[0].n_cols)
    offsets = [cc.PoseOffset(0, 0, 1.0)]
    for t in range(1, len(frames)):
        offsets.append(cc.estimate_offset(frames[t - 1], frames[t], args.r_window, a_window))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.save_offsets_csv(out / "offsets.csv", offsets)
    segments = cc.detect_cycles(offsets)
    for s, seg in enumerate(segments):
        if args.mode == "relpose":
            mosaic = cc.concat_relative_pose(frames, seg, offsets)
        else:
            step = args.step_bins or cc.default_a_window(frames[0].n_cols, span_deg=15.0)
            mosaic = cc.concat_fixed_step(frames, seg, step)
        fileio.save_heatmap(out / f"mosaic_{s:02d}.rah", mosaic)
    print(f"wrote offsets and {len(segments)} mosaic(s) to {out}")
    return EXIT_OK


def _load_labeled_heatmaps(heatmap_dir, poses_path):
    poses = fileio.load_poses_csv(poses_path)
    files = _heatmap_files(Path(heatmap_dir))
    if len(poses) != len(files):
        raise ConfigError(
            f"{len(files)} heatmaps but {len(poses)} pose rows"
        )
    dataset = []
    for f, p in zip(files, poses):
        dataset.append((fileio.load_heatmap(f), (p["x_m"], p["y_m"]), p["heading_deg"]))
    return dataset


def cmd_train(args) -> int:
    labeled = _load_labeled_heatmaps(args.heatmaps, args.poses)
    dataset = [(hm, pos) for hm, pos, _ in labeled]
    cfg = enc.TrainConfig(seed=args.seed, max_epochs=args.epochs, margin=args.margin)
    result = enc.train(dataset, cfg)
    fileio.save_weights(args.out, result.weights)
    log_path = Path(args.out).with_suffix(".log.csv")
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "lr", "val_recall1"])
        for row in result.history:
            writer.writerow([
                row["epoch"], f"{row['mean_loss']:.9f}",
                f"{row['lr']:.9f}", f"{row['val_recall1']:.6f}",
            ])
    print(f"wrote weights to {args.out} (training log: {log_path})")
    return EXIT_OK


def cmd_build_db(args) -> int:
    weights = fileio.load_weights(args.weights)
    labeled = _load_labeled_heatmaps(args.heatmaps, args.poses)
    db = PlaceDB()
    for i, (hm, pos, heading) in enumerate(labeled):
        desc = enc.encode(hm, weights)
        db.add(PlaceRecord(i, desc.values, pos, heading, source=str(args.heatmaps)))
    fileio.save_db(args.out, db)
    print(f"wrote database with {len(db)} record(s) to {args.out}")
    return EXIT_OK


def cmd_query(args) -> int:
    weights = fileio.load_weights(args.weights)
    db = fileio.load_db(args.db)
    writer = csv.writer(sys.stdout)
    writer.writerow(["query", "rank", "id", "distance"])
    for f in args.inputs:
        hm = fileio.load_heatmap(f)
        desc = enc.encode(hm, weights)
        res = db.query(desc.values, k=args.k)
        for rank, (rid, dist) in enumerate(zip(res.ids, res.distances), 1):
            writer.writerow([Path(f).name, rank, rid, f"{dist:.9f}"])
    return EXIT_OK


def cmd_render(args) -> int:
    hm = fileio.load_heatmap(args.input)
    fileio.render_pgm(args.out, hm, log_scale=args.log)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    keyvals, rcfg, pcfg = _load_configs(args.config)
    _apply_preset(args, keyvals)
    wcfg = synth.WorldConfig(
        n_places=int(keyvals.get("n_places", 60)),
        spacing_m=keyvals.get("spacing_m", 20.0),
        scatterers_per_place=int(keyvals.get("scatterers_per_place", 8)),
        noise_std=keyvals.get("noise_std", 0.05),
        heatmap_rows=int(keyvals.get("heatmap_rows", 64)),
        heatmap_cols=int(keyvals.get("heatmap_cols", 192)),
        mosaic_cols=int(keyvals.get("mosaic_cols", 512)),
        seed=args.seed,
    )
    world = synth.build_world(wcfg)

    if args.weights:
        weights = fileio.load_weights(args.weights)
    else:
        if args.concat != "none":
            dataset = [
                (synth.mosaic_view(world, i, rcfg, pcfg, mode=args.concat, seed=200 + i),
                 world.places[i].position)
                for i in range(len(world.places))
            ]
            dataset += [
                (synth.mosaic_view(world, i, rcfg, pcfg, mode=args.concat,
                                   body_heading_deg=5.0, seed=900 + i),
                 world.places[i].position)
                for i in range(len(world.places))
            ]
        else:
            dataset = synth.training_dataset(world, rcfg, seed=args.seed + 50)
        tcfg = enc.TrainConfig(seed=args.seed, max_epochs=int(keyvals.get("epochs", 8)))
        weights = enc.train(dataset, tcfg).weights

    report = synth.evaluate(
        world, rcfg, weights,
        queries_per_cell=int(keyvals.get("queries_per_cell", 4)),
        seed=args.seed, concat_mode=args.concat, pcfg=pcfg,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    text = synth.format_report(report)
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="radarplace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key-value config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--preset", choices=["paper-defaults"], default=None)

    p = sub.add_parser("simulate", help="simulate IF cubes from a scene file")
    common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=0, help="override n_frames")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("heatmap", help="convert IF cubes to heatmaps")
    common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--heatmap-size", help="RxC crop/zero-pad before the FFTs")
    p.add_argument("--max-range", type=float, default=None)
    p.add_argument("--window", choices=["rect", "hann"], default="rect")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("concat", help="estimate offsets and mosaic cycles")
    common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["fixed", "relpose"], default="relpose")
    p.add_argument("--step-bins", type=int, default=0)
    p.add_argument("--r-window", type=int, default=4)
    p.add_argument("--a-window", type=int, default=0)
    p.set_defaults(func=cmd_concat)

    p = sub.add_parser("train", help="train the spatial encoder")
    common(p)
    p.add_argument("--heatmaps", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--margin", type=float, default=0.5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("build-db", help="encode heatmaps into a place database")
    common(p)
    p.add_argument("--heatmaps", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("query", help="retrieve nearest places for heatmaps")
    common(p)
    p.add_argument("--db", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("render", help="write a heatmap as an 8-bit PGM")
    common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", action="store_true", help="log-compress magnitudes")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="end-to-end synthetic retrieval evaluation")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--concat", choices=["none", "fixed", "relpose"], default="none")
    p.add_argument("--weights", help="reuse trained weights instead of training")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EmptyResultError as exc:
        print(f"warning: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except RadarPlaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
