"""Command line front end: simulate, train, track, evaluate, plot-data.

Exit codes: 0 success, 2 usage or configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable

from . import fileio
from .features import Projection
from .metrics import (MetricError, correspondence_from_id_maps, evaluate,
                      events_from_tracks)
from .scorer import (DistanceScorer, ScorerError, TrainConfig, TrainingSet,
                     load_model, make_training_pairs, model_to_json, train)
from .simulate import SimConfig, run_simulation
from .tracker import TrackerConfig, check_model, track_sequence

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


SIM_KEYS: dict[str, Callable] = {
    "seed_count": int, "frames": int, "frame_interval_s": float, "growth_rate": float,
    "division_length": float, "division_noise_deg": float, "domain_extent": _floats,
    "points_per_cell": int, "rng_seed": int, "radius": float, "seed_length": _opt_float,
    "division_jitter": _bool, "seed_spread": float,
}
TRACK_KEYS: dict[str, Callable] = {
    "r": int, "n_candidates": int, "projection": Projection, "tau_min": float,
    "division_band": _floats, "neighborhood_scale": float, "detect_divisions": _bool,
}
TRAIN_KEYS: dict[str, Callable] = {
    "hidden": _ints, "learning_rate": float, "epochs": int, "batch_size": int,
    "rng_seed": int, "pos_weight": _opt_float, "relative": _bool,
}
PATH_KEYS = {"features", "points", "tracks", "model", "out", "labels", "loss_log"}
ALL_KEYS = set(SIM_KEYS) | set(TRACK_KEYS) | set(TRAIN_KEYS) | PATH_KEYS


def load_run_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    try:
        raw = fileio.read_config(path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except fileio.FormatError as exc:
        raise ConfigError(str(exc)) from None
    unknown = sorted(set(raw) - ALL_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s): {', '.join(unknown)}")
    base = Path(path).resolve().parent
    for key in PATH_KEYS & set(raw):
        raw[key] = str((base / raw[key]).resolve())
    return raw


def _section(raw: dict[str, str], table: dict[str, Callable]) -> dict:
    out = {}
    for key, parse in table.items():
        if key in raw:
            try:
                out[key] = parse(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
    return out


def _tracker_config(raw: dict[str, str], args) -> TrackerConfig:
    opts = _section(raw, TRACK_KEYS)
    for key in ("r", "n_candidates", "projection", "tau_min"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if getattr(args, "no_divisions", False):
        opts["detect_divisions"] = False
    try:
        return TrackerConfig(**opts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    raw = load_run_config(args.config)
    opts = _section(raw, SIM_KEYS)
    if args.seed is not None:
        opts["rng_seed"] = args.seed
    try:
        config = SimConfig(**opts)
        config.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config error: {exc}") from None
    out = Path(args.out or raw.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    run = run_simulation(config)
    fileio.write_sequence(run.sequence, out / "features.csv", out / "points")
    fileio.write_tracks(run.lineage.tracks, out / "tracks.txt")
    print(f"simulated {len(run.sequence)} frames, {len(run.lineage.tracks)} tracks, "
          f"{len(run.events)} divisions -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    raw = load_run_config(args.config)
    features = args.features or ([raw["features"]] if "features" in raw else [])
    tracks = args.tracks or ([raw["tracks"]] if "tracks" in raw else [])
    model_path = args.model or raw.get("model")
    if not features or len(features) != len(tracks):
        raise ConfigError("give one --tracks file per --features file")
    if model_path is None:
        raise ConfigError("--model output path is required")
    hyper = TrainConfig(**_section(raw, TRAIN_KEYS))
    tcfg = _tracker_config(raw, args)

    parts = []
    for fpath, tpath in zip(features, tracks):
        for p in (fpath, tpath):
            if not Path(p).exists():
                raise fileio.FormatError(f"missing input file: {p}")
        seq = fileio.read_sequence(fpath)
        lineage = fileio.read_lineage(tpath, seq)
        parts.append(make_training_pairs(seq, lineage, tcfg.r, tcfg.n_candidates,
                                         tcfg.projection))
    dataset = TrainingSet.concatenate(parts)
    model, history = train(dataset, hyper)

    model_path = Path(model_path)
    _atomic_write(model_path, model_to_json(model))
    log = Path(args.loss_log or raw.get("loss_log") or str(model_path) + ".loss.csv")
    _atomic_write(log, "epoch,loss\n" + "".join(f"{i + 1},{v:.9g}\n"
                                                for i, v in enumerate(history)))
    if history:
        print(f"trained on {len(dataset)} samples; loss {history[0]:.4g} -> {history[-1]:.4g}")
    else:
        print(f"no epochs requested; wrote initial model ({len(dataset)} samples)")
    return EXIT_OK


def cmd_track(args) -> int:
    raw = load_run_config(args.config)
    fpath = args.features or raw.get("features")
    if fpath is None:
        raise ConfigError("--features is required")
    cfg = _tracker_config(raw, args)
    model_arg = args.model or raw.get("model") or "baseline"
    model = DistanceScorer() if model_arg == "baseline" else load_model(model_arg)
    try:
        check_model(model, cfg)
    except ScorerError as exc:
        raise ConfigError(str(exc)) from None
    points = args.points or raw.get("points")
    seq = fileio.read_sequence(fpath, points)
    if cfg.detect_divisions and points is None:
        print("warning: no point clouds given, division detection is skipped",
              file=sys.stderr)
    result = track_sequence(seq, model, cfg)
    out = Path(args.out or raw.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_tracks(result.tracks, out / "tracks.txt")
    fileio.write_events(result.events, out / "events.txt")
    fileio.write_label_map(result.id_maps, out / "labels.txt")
    print(f"{len(result.tracks)} tracks, {len(result.events)} divisions -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    computed = fileio.read_tracks(args.computed)
    reference = fileio.read_tracks(args.reference)
    comp_events = fileio.read_events(args.events) if args.events else None
    ref_events = (fileio.read_events(args.reference_events) if args.reference_events
                  else events_from_tracks(reference))
    corr = None
    if args.labels:
        corr = correspondence_from_id_maps(fileio.read_label_map(args.labels))
    report = evaluate(computed, reference, corr, comp_events, ref_events,
                      tol=args.tol, match_identity=not args.time_only)
    text = report.render()
    sys.stdout.write(text)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    tracks = {tr[0]: tr for tr in fileio.read_track_table(args.tracks)}
    if args.track_id not in tracks:
        raise fileio.FormatError(f"unknown track id {args.track_id}")
    seq = fileio.read_sequence(args.features)
    labels = fileio.read_label_map(args.labels) if args.labels else None
    at: dict[tuple[int, int], object] = {}
    for frame in seq.frames:
        for iid, obs in frame.instances.items():
            label = iid if labels is None else labels[frame.frame_index][iid]
            at[(frame.frame_index, label)] = obs
    children: dict[int, list[int]] = {}
    for label, _, _, parent in tracks.values():
        if parent:
            children.setdefault(parent, []).append(label)

    rows_xy, rows_vol = [], []
    label = args.track_id
    while True:
        _, begin, end, _ = tracks[label]
        for t in range(begin, end + 1):
            obs = at.get((t, label))
            if obs is None:
                raise fileio.FormatError(f"track {label} has no instance in frame {t}")
            rows_xy.append(f"{t},{fileio._g(obs.centroid[0])},{fileio._g(obs.centroid[1])}")
            rows_vol.append(f"{t},{fileio._g(obs.volume)}")
        kids = sorted(children.get(label, []))
        if args.no_follow or not kids:
            break
        label = kids[0]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "spacetime.csv").write_text("t,x,y\n" + "\n".join(rows_xy) + "\n", encoding="utf-8")
    (out / "volume.csv").write_text("t,volume\n" + "\n".join(rows_vol) + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rodtrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic colony sequence")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    def tracker_flags(p):
        p.add_argument("--r", type=int)
        p.add_argument("--n-candidates", dest="n_candidates", type=int)
        p.add_argument("--projection", type=Projection, choices=list(Projection))
        p.add_argument("--tau-min", dest="tau_min", type=float)

    p = sub.add_parser("train", help="train the association classifier")
    p.add_argument("--config")
    p.add_argument("--features", action="append")
    p.add_argument("--tracks", action="append")
    p.add_argument("--model")
    p.add_argument("--loss-log", dest="loss_log")
    tracker_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("track", help="track a sequence")
    p.add_argument("--config")
    p.add_argument("--features")
    p.add_argument("--points")
    p.add_argument("--model", help="model file, or 'baseline'")
    p.add_argument("--out")
    p.add_argument("--no-divisions", dest="no_divisions", action="store_true")
    tracker_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="TRA and Division-F1 against a reference")
    p.add_argument("--computed", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--labels", help="label map of the computed tracks")
    p.add_argument("--events", help="computed events file")
    p.add_argument("--reference-events", dest="reference_events")
    p.add_argument("--tol", type=int, default=1)
    p.add_argument("--time-only", dest="time_only", action="store_true",
                   help="match divisions by frame only, ignoring parent identity")
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot-data", help="space-time and volume series of one track")
    p.add_argument("--tracks", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels")
    p.add_argument("--track-id", dest="track_id", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-follow", dest="no_follow", action="store_true",
                   help="stop at the end of the track instead of following a daughter")
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (fileio.FormatError, ScorerError, MetricError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
