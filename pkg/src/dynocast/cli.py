"""Command-line entry point.

Subcommands: gen-data, train, calibrate, eval, sweep-wheelbase, predict.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Every command writes a manifest listing its config snapshot and
content hashes of the artifacts it produced.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, dynamics
from .conformal import (
    CalibratedRegion,
    coverage_report,
    cqr_calibrate,
    region_polygons,
    save_polygons_csv,
    score_batch,
)
from .datasets import (
    features_and_targets,
    load_feature_csv,
    load_windows_csv,
    save_predictions_csv,
    save_windows_csv,
    stratum_counts,
    write_manifest,
)
from .errors import ConfigError, DataError, NumericalError, TrainingDivergedError
from .estimators import (
    CtrvPredictor,
    LstmPredictor,
    PhysicsPredictor,
    load_predictor,
    resume_state,
    save_predictor,
)
from .metrics import evaluate_trajectories, pearson_r
from .nn import save_checkpoint
from .simkit import GenerationConfig, SplitSpec, generate_dataset
from .svgplot import plot_curves, plot_regions, plot_trajectories
from .track import build_track

CONFIG_ENV_VAR = "DYNOCAST_CONFIG"
TRUE_WHEELBASE = 0.3302

HEAD_CHOICES = ("physics", "physics-curriculum", "lstm")
REGION_CHOICES = ("rot-rect", "frenet")
_REGION_FRAME = {"rot-rect": "rotated_rect", "frenet": "frenet"}


def _load_config(path_arg) -> dict:
    path = path_arg or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def _generation_config(cfg: dict, args) -> GenerationConfig:
    section = dict(cfg.get("generation", {}))
    if args.track:
        section["track"] = args.track
    if args.base_duration is not None:
        section["base_duration"] = args.base_duration
    if args.noise_sigma is not None:
        section["noise_sigma"] = args.noise_sigma
    if "split" in section:
        section["split"] = SplitSpec(**section["split"])
    try:
        gen = GenerationConfig(**section)
    except TypeError as exc:
        raise ConfigError(f"bad generation config: {exc}") from exc
    if gen.base_duration <= 0.0:
        raise ConfigError("base_duration must be positive")
    return gen


def _estimator_kwargs(cfg: dict, args) -> dict:
    section = dict(cfg.get("train", {}))
    curriculum = section.pop("curriculum", None)
    kwargs = {}
    passthrough = (
        "obs_len", "horizon", "ctx_dim", "hidden_size", "decoder_width",
        "wheelbase", "ts", "method", "delta_max", "a_max", "epochs", "lr",
        "momentum", "batch_size", "clip_grad", "lr_schedule", "val_every",
    )
    for key in passthrough:
        if key in section:
            kwargs[key] = section[key]
    if "loss_weights" in section:
        kwargs["loss_weights"] = tuple(section["loss_weights"])
    if curriculum:
        kwargs.update(
            curriculum_start=curriculum.get("start", 1),
            curriculum_every=curriculum.get("every", 2),
        )
    for key in ("epochs", "lr", "batch_size", "wheelbase", "lr_schedule"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            kwargs[key] = value
    kwargs["seed"] = args.seed
    return kwargs


def _build_head(head: str, kwargs: dict):
    kwargs = dict(kwargs)
    if head == "lstm":
        for key in ("wheelbase", "ts", "method", "delta_max", "a_max"):
            kwargs.pop(key, None)
        return LstmPredictor(**kwargs)
    kwargs["curriculum"] = head == "physics-curriculum"
    return PhysicsPredictor(**kwargs)


def _dataset_dir(path) -> Path:
    directory = Path(path)
    if not directory.is_dir():
        raise DataError(f"dataset directory not found: {directory}")
    return directory


def _load_split(directory: Path, name: str, obs_len: int = 10, horizon: int = 60):
    return load_windows_csv(directory / f"{name}.csv", obs_len, horizon)


def _write_epoch_log(path, log) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "h", "train_loss", "val_ade", "val_fde", "val_iou"])
        for rec in log:
            writer.writerow([
                rec.epoch, rec.h, repr(rec.train_loss),
                "" if math.isnan(rec.val_ade) else repr(rec.val_ade),
                "" if math.isnan(rec.val_fde) else repr(rec.val_fde),
                "" if math.isnan(rec.val_iou) else repr(rec.val_iou),
            ])


# -- subcommands -----------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _load_config(args.config)
    gen = _generation_config(cfg, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    track = build_track(gen.track)
    train, val, test = generate_dataset(gen, seed=args.seed, track=track, jobs=args.jobs)
    if len(train) == 0 or len(val) == 0 or len(test) == 0:
        raise DataError(
            f"generated splits too small (train={len(train)}, val={len(val)}, "
            f"test={len(test)}); increase base_duration"
        )
    gen_time = time.time() - t0

    track_path = out / "track.csv"
    track.save_csv(track_path)
    outputs = [track_path]
    for name, part in (("train", train), ("val", val), ("test", test)):
        path = out / f"{name}.csv"
        save_windows_csv(path, part)
        outputs.append(path)

    counts = {
        "train": stratum_counts(train),
        "val": stratum_counts(val),
        "test": stratum_counts(test),
        "totals": {"train": len(train), "val": len(val), "test": len(test)},
    }
    counts_path = out / "counts.json"
    counts_path.write_text(json.dumps(counts, indent=1, sort_keys=True))
    outputs.append(counts_path)

    config_snapshot = {
        "track": gen.track,
        "base_duration": gen.base_duration,
        "noise_sigma": gen.noise_sigma,
        "obs_len": gen.obs_len,
        "horizon": gen.horizon,
        "split": [gen.split.train, gen.split.val, gen.split.test],
        "racelines": list(gen.racelines),
        "controllers": list(gen.controllers),
        "speed_scales": list(gen.speed_scales),
    }
    write_manifest(
        out / "manifest.json", "gen-data", config_snapshot, args.seed,
        inputs=[], outputs=outputs, timings={"generate": gen_time},
    )
    print(f"wrote {len(train)}/{len(val)}/{len(test)} train/val/test samples to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    data_dir = _dataset_dir(args.data)
    kwargs = _estimator_kwargs(cfg, args)
    obs_len = kwargs.get("obs_len", 10)
    horizon = kwargs.get("horizon", 60)
    train = _load_split(data_dir, "train", obs_len, horizon)
    if len(train) == 0:
        raise DataError("training split is empty")
    X, y = features_and_targets(train)
    if args.train_cap and args.train_cap < len(X):
        keep = np.random.default_rng(args.seed).choice(len(X), args.train_cap, replace=False)
        keep.sort()
        X, y = X[keep], y[keep]

    X_val = y_val = None
    if not args.no_val:
        val = _load_split(data_dir, "val", obs_len, horizon)
        if len(val):
            X_val, y_val = features_and_targets(val)

    resume = None
    if args.resume:
        resume = resume_state(load_predictor(args.resume))
    estimator = _build_head(args.head, kwargs)
    t0 = time.time()
    try:
        estimator.fit(X, y, X_val=X_val, y_val=y_val, resume_from=resume)
    except TrainingDivergedError as exc:
        if exc.last_good_params is not None:
            rescue = Path(args.out).with_suffix(".diverged.json")
            save_checkpoint(rescue, exc.last_good_params, {"diverged_at_epoch": exc.epoch})
            print(f"training diverged; last good parameters saved to {rescue}", file=sys.stderr)
        raise
    train_time = time.time() - t0

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_predictor(estimator, out)
    log_path = out.with_suffix(".epochs.csv")
    _write_epoch_log(log_path, estimator.log_)
    write_manifest(
        out.with_suffix(".manifest.json"), "train",
        {"head": args.head, **{k: (list(v) if isinstance(v, tuple) else v) for k, v in kwargs.items()}},
        args.seed,
        inputs=[data_dir / "train.csv"],
        outputs=[out, log_path],
        timings={"fit": train_time},
    )
    print(f"trained {args.head} head: final loss {estimator.loss_trace_[-1]:.6f} -> {out}")
    return 0


def _scores_for(estimator, samples, frame_kind: str, track):
    X, _ = features_and_targets(samples)
    preds = estimator.predict(X).reshape(len(samples), -1, 4)
    frames = samples.obs[:, -1, :3]
    return score_batch(
        preds, samples.fut, _REGION_FRAME[frame_kind], frames=frames, track=track
    )


def cmd_calibrate(args) -> int:
    data_dir = _dataset_dir(args.data)
    estimator = load_predictor(args.checkpoint)
    track = build_track(data_dir / "track.csv") if args.region == "frenet" else None
    train = _load_split(data_dir, "train", estimator.obs_len, estimator.horizon)
    val = _load_split(data_dir, "val", estimator.obs_len, estimator.horizon)
    if len(train) == 0 or len(val) == 0:
        raise DataError("calibration needs non-empty train and val splits")
    t0 = time.time()
    train_scores = _scores_for(estimator, train, args.region, track)
    val_scores = _scores_for(estimator, val, args.region, track)
    region = cqr_calibrate(
        train_scores, val_scores, delta=args.delta, mode=args.mode,
        score_frame=_REGION_FRAME[args.region],
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    region.save_json(out)
    write_manifest(
        out.with_suffix(".manifest.json"), "calibrate",
        {"region": args.region, "delta": args.delta, "mode": args.mode},
        args.seed,
        inputs=[Path(args.checkpoint), data_dir / "train.csv", data_dir / "val.csv"],
        outputs=[out],
        timings={"calibrate": time.time() - t0},
    )
    print(f"calibrated {args.region} region (mode={args.mode}, delta={args.delta}) -> {out}")
    return 0


def _coverage_table(rows: list) -> list:
    """Arrange per-(frame, dim, mode) coverages into Table-style rows."""
    by_frame: dict = {}
    for frame_kind, dim, mode, value in rows:
        by_frame.setdefault(frame_kind, {}).setdefault(dim, {})[mode] = value
    table = []
    order = {"rotated_rect": ["x", "y", "x^y"], "frenet": ["s", "d", "s^d"]}
    for frame_kind in ("rotated_rect", "frenet"):
        if frame_kind not in by_frame:
            continue
        for dim in order[frame_kind]:
            modes = by_frame[frame_kind].get(dim, {})
            table.append(
                (frame_kind, dim, modes.get("single", ""), modes.get("multi", ""))
            )
    return table


def cmd_eval(args) -> int:
    data_dir = _dataset_dir(args.data)
    estimator = load_predictor(args.checkpoint)
    test = _load_split(data_dir, "test", estimator.obs_len, estimator.horizon)
    if len(test) == 0:
        raise DataError("test split is empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    X, y = features_and_targets(test)
    t0 = time.time()

    preds = {}
    reports = {}
    name = {PhysicsPredictor: "physics", LstmPredictor: "lstm"}[type(estimator)]
    if isinstance(estimator, PhysicsPredictor) and estimator.curriculum:
        name = "physics_curriculum"
    preds[name] = estimator.predict(X).reshape(len(test), -1, 4)
    reports[name] = evaluate_trajectories(preds[name][:, :, :3], test.fut[:, :, :3])
    ctrv = CtrvPredictor(
        obs_len=estimator.obs_len, horizon=estimator.horizon, ctx_dim=estimator.ctx_dim
    ).fit(X)
    preds["ctrv"] = ctrv.predict(X).reshape(len(test), -1, 4)
    reports["ctrv"] = evaluate_trajectories(preds["ctrv"][:, :, :3], test.fut[:, :, :3])

    metrics = {label: rep.to_dict() for label, rep in reports.items()}
    metrics_path = out / "metrics.json"
    metrics_path.write_text(json.dumps(metrics, indent=1, sort_keys=True))
    outputs = [metrics_path]

    per_sample_path = out / "per_sample.csv"
    with open(per_sample_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "head", "ade", "fde", "iou"])
        for label, rep in reports.items():
            for i, (a, f, iou) in enumerate(rep.per_sample):
                writer.writerow([i, label, repr(a), repr(f), repr(iou)])
    outputs.append(per_sample_path)

    coverage_rows = []
    region_objs = []
    track = None
    for region_path in args.regions or []:
        region = CalibratedRegion.load_json(region_path)
        region_objs.append(region)
        if region.score_frame == "frenet" and track is None:
            track = build_track(data_dir / "track.csv")
        scores = score_batch(
            preds[name], test.fut, region.score_frame,
            frames=test.obs[:, -1, :3], track=track,
        )
        rep = coverage_report(region, scores)
        dims = list(rep.per_dim_single)
        joint_dim = "^".join(dims)
        if region.mode == "single":
            for dim in dims:
                coverage_rows.append((region.score_frame, dim, "single", rep.per_dim_single[dim]))
            coverage_rows.append((region.score_frame, joint_dim, "single", rep.joint_single))
        else:
            for dim in dims:
                coverage_rows.append((region.score_frame, dim, "multi", rep.per_dim_multi[dim]))
            coverage_rows.append((region.score_frame, joint_dim, "multi", rep.joint_multi))

    if coverage_rows:
        coverage_path = out / "coverage.csv"
        with open(coverage_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["region", "dimension", "single_step", "multi_step"])
            for frame_kind, dim, single, multi in _coverage_table(coverage_rows):
                writer.writerow([frame_kind, dim, single, multi])
        outputs.append(coverage_path)

    if args.plots:
        track = track or build_track(data_dir / "track.csv")
        idx = min(len(test) - 1, 3)
        truth = test.fut[idx]
        plot_heads = {label: p[idx] for label, p in preds.items()}
        traj_path = out / "trajectories.svg"
        plot_trajectories(traj_path, track, truth, plot_heads, obs=test.obs[idx])
        outputs.append(traj_path)
        for region in region_objs:
            frames_i = test.obs[idx, -1, :3]
            from .frames import LocalFrame

            polys = region_polygons(
                region, preds[name][idx],
                frame=LocalFrame(*frames_i), track=track,
            )
            svg_path = out / f"regions_{region.score_frame}_{region.mode}.svg"
            plot_regions(svg_path, track, preds[name][idx], polys[:: max(1, len(polys) // 12)], truth=truth)
            outputs.append(svg_path)
            poly_csv = out / f"regions_{region.score_frame}_{region.mode}.csv"
            save_polygons_csv(poly_csv, polys)
            outputs.append(poly_csv)
        epoch_log = Path(args.checkpoint).with_suffix(".epochs.csv")
        if epoch_log.exists():
            losses = [
                float(row.split(",")[2])
                for row in epoch_log.read_text().strip().splitlines()[1:]
            ]
            if losses:
                curve_path = out / "loss_curve.svg"
                plot_curves(curve_path, {"train_loss": losses}, title="training loss", log_y=True)
                outputs.append(curve_path)

    write_manifest(
        out / "manifest.json", "eval",
        {"checkpoint": str(args.checkpoint), "regions": [str(r) for r in args.regions or []]},
        args.seed,
        inputs=[Path(args.checkpoint), data_dir / "test.csv"],
        outputs=outputs,
        timings={"eval": time.time() - t0},
    )
    for label, rep in reports.items():
        print(f"{label}: ADE={rep.ade:.5f} FDE={rep.fde:.5f} IoU={rep.iou:.4f}")
    return 0


def cmd_sweep_wheelbase(args) -> int:
    cfg = _load_config(args.config)
    data_dir = _dataset_dir(args.data)
    kwargs = _estimator_kwargs(cfg, args)
    kwargs.setdefault("epochs", 80)
    obs_len = kwargs.get("obs_len", 10)
    horizon = kwargs.get("horizon", 60)
    train = _load_split(data_dir, "train", obs_len, horizon)
    test = _load_split(data_dir, "test", obs_len, horizon)
    if len(train) == 0 or len(test) == 0:
        raise DataError("sweep needs non-empty train and test splits")
    X, y = features_and_targets(train)
    if args.train_cap and args.train_cap < len(X):
        keep = np.random.default_rng(args.seed).choice(len(X), args.train_cap, replace=False)
        keep.sort()
        X, y = X[keep], y[keep]
    X_te, _ = features_and_targets(test)

    wheelbases = [float(w) for w in args.wheelbases.split(",")]
    if len(wheelbases) < 2:
        raise ConfigError("sweep needs at least two wheelbase values")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    t0 = time.time()
    for wheelbase in wheelbases:
        run_kwargs = dict(kwargs)
        run_kwargs.update(wheelbase=wheelbase, curriculum=True, curriculum_every=1)
        est = PhysicsPredictor(**run_kwargs)
        est.fit(X, y)
        pred = est.predict(X_te).reshape(len(test), -1, 4)
        rep = evaluate_trajectories(pred[:, :, :3], test.fut[:, :, :3])
        rows.append((wheelbase, rep.ade, rep.fde, rep.iou, est.loss_trace_[-1]))
        print(f"L={wheelbase:.4f}: ADE={rep.ade:.5f} FDE={rep.fde:.5f} IoU={rep.iou:.4f}")

    sweep_path = out / "sweep.csv"
    with open(sweep_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wheelbase", "ade", "fde", "iou", "train_loss", "is_true_wheelbase"])
        for row in rows:
            writer.writerow(
                [repr(v) for v in row] + [str(abs(row[0] - TRUE_WHEELBASE) < 1e-9).lower()]
            )

    arr = np.array([r[:5] for r in rows])
    correlations = {
        "ade": pearson_r(arr[:, 0], arr[:, 1]),
        "fde": pearson_r(arr[:, 0], arr[:, 2]),
        "iou": pearson_r(arr[:, 0], arr[:, 3]),
        "train_loss": pearson_r(arr[:, 0], arr[:, 4]),
    }
    corr_path = out / "correlations.json"
    corr_path.write_text(json.dumps(
        {"pearson_r_vs_wheelbase": correlations, "true_wheelbase": TRUE_WHEELBASE},
        indent=1, sort_keys=True,
    ))
    svg_path = out / "sweep.svg"
    plot_curves(
        svg_path,
        {"ade": arr[:, 1], "fde": arr[:, 2], "iou": arr[:, 3]},
        title="metrics vs wheelbase index",
    )
    write_manifest(
        out / "manifest.json", "sweep-wheelbase",
        {"wheelbases": wheelbases, **{k: (list(v) if isinstance(v, tuple) else v) for k, v in kwargs.items()}},
        args.seed,
        inputs=[data_dir / "train.csv", data_dir / "test.csv"],
        outputs=[sweep_path, corr_path, svg_path],
        timings={"sweep": time.time() - t0},
    )
    print("pearson R vs wheelbase:", json.dumps(correlations))
    return 0


def cmd_predict(args) -> int:
    estimator = load_predictor(args.checkpoint)
    X = load_feature_csv(args.windows, obs_len=estimator.obs_len)
    states = estimator.predict(X).reshape(len(X), -1, 4)
    controls = None
    if isinstance(estimator, PhysicsPredictor):
        controls = estimator.predict_controls(X)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_predictions_csv(out, states, controls)
    print(f"wrote {states.shape[0]} predictions x {states.shape[1]} steps -> {out}")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynocast",
        description="Dynamically feasible trajectory forecasting with conformal regions",
    )
    parser.add_argument("--version", action="version", version=f"dynocast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1, help="worker cap for parallel sections")
        p.add_argument("--config", default=None,
                       help=f"JSON config path (default from ${CONFIG_ENV_VAR})")

    p = sub.add_parser("gen-data", help="simulate racing traces and write dataset splits")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--track", default=None, help="preset name or track CSV path")
    p.add_argument("--base-duration", type=float, default=None,
                   help="seconds of driving per (raceline, controller, speed) cell")
    p.add_argument("--noise-sigma", type=float, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit a prediction head on a dataset")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--head", choices=HEAD_CHOICES, default="physics")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--wheelbase", type=float, default=None)
    p.add_argument("--train-cap", type=int, default=None,
                   help="subsample the training split to at most this many rows")
    p.add_argument("--lr-schedule", dest="lr_schedule", choices=("cosine", "constant"),
                   default=None)
    p.add_argument("--resume", default=None,
                   help="checkpoint to continue from (keep --epochs at the full target "
                        "so the schedule lines up)")
    p.add_argument("--no-val", action="store_true", help="skip validation metrics in the epoch log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="fit a conformal region on the validation split")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--region", choices=REGION_CHOICES, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--mode", choices=("single", "multi"), default="single")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval", help="metrics, coverage table, and plots on the test split")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--regions", nargs="*", default=None, help="region JSON files")
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-wheelbase", help="train one model per wheelbase and correlate")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--wheelbases",
        default="0.0802,0.2102,0.3302,0.5002,0.7002,0.9002,1.2002,1.5002",
    )
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--train-cap", type=int, default=None)
    p.set_defaults(func=cmd_sweep_wheelbase)

    p = sub.add_parser("predict", help="batch-predict trajectories for a windows CSV")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--windows", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
