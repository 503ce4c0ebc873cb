"""Command-line interface: track, fd, simulate, eval, and end-to-end run.

Exit codes are a stable contract for scripting: 0 success, 1 usage error,
2 input validation error (bad files, bad config, insufficient data),
3 internal invariant violation. Result summaries go to stdout; progress
chatter goes to stderr and is controlled by -v/--quiet.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .fd import FdSettings, FitError, bin_samples, fit_speed_density, fundamental_diagram, samples_from_stats
from .geo import compute_gsd
from .io import (
    ConfigError,
    DetectionFile,
    DetectionParseError,
    RunConfig,
    config_echo,
    detection_rows_from_stream,
    detection_rows_from_truth,
    export_outputs,
    load_config,
    load_scenario,
    parse_detections,
    parse_frame_stats_csv,
    parse_tracks_csv,
    render_fundamental_diagram_svg,
    render_speed_density_svg,
    truth_boxes,
    write_detections_csv,
    write_fd_bins_csv,
    write_fd_fit_csv,
    write_frame_stats_csv,
    write_tracks_csv,
)
from .model import CameraModel, TrackerConfig
from .sim import ScenarioConfig, evaluate, generate
from .stats import frame_stats
from .tracker import Tracker

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

log = logging.getLogger("trafficfd")


class _Parser(argparse.ArgumentParser):
    """argparse's default usage-error exit code is 2; the CLI contract says 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trafficfd", description=__doc__)
    parser.add_argument("--version", action="version", version=f"trafficfd {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="progress detail on stderr")
    verbosity.add_argument("--quiet", action="store_true", help="suppress result summary on stdout")

    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_track = sub.add_parser("track", parents=[common], help="run the tracker over a detection CSV")
    p_track.add_argument("--detections", required=True, help="detection CSV path")
    p_track.add_argument("--config", required=True, help="run configuration path")
    p_track.add_argument("--out", required=True, help="output directory")

    p_fd = sub.add_parser("fd", parents=[common], help="fit the fundamental diagram from frame stats")
    p_fd.add_argument("--stats", required=True, help="frame_stats.csv produced by track/run")
    p_fd.add_argument("--config", required=True, help="run configuration path")
    p_fd.add_argument("--out", required=True, help="output directory")

    p_sim = sub.add_parser("simulate", parents=[common], help="generate a synthetic scene")
    p_sim.add_argument("--scenario", required=True, help="scenario configuration path")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=None, help="override the scenario seed (default 0)")

    p_eval = sub.add_parser("eval", parents=[common], help="score pipeline output against ground truth")
    p_eval.add_argument("--truth", required=True, help="ground-truth CSV (detection layout with real ids)")
    p_eval.add_argument("--out", required=True, help="directory holding tracks.csv and frame_stats.csv")
    p_eval.add_argument("--config", required=True, help="run configuration path (camera scale)")

    p_run = sub.add_parser("run", parents=[common], help="track, per-frame stats, and fd in one pass")
    p_run.add_argument("--detections", help="detection CSV path")
    p_run.add_argument("--scenario", help="scenario path; generates detections instead of reading them")
    p_run.add_argument("--config", help="run configuration path (required with --detections)")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed (default 0)")

    return parser


def run_pipeline(det_file: DetectionFile, cfg: RunConfig):
    """Track the full stream and collect per-frame statistics."""

    tracker = Tracker(cfg.tracker, cfg.camera)
    gsd = compute_gsd(cfg.camera).gsd_km_per_px
    segment_km = cfg.resolve_segment_length_km(gsd)
    records = []
    stats_rows = []
    prev_positions: dict[int, tuple[float, float]] = {}
    for frame, detections in det_file.iter_frames():
        records.extend(tracker.step(frame, detections))
        stats_rows.append(
            frame_stats(frame, tracker.tracks, segment_km, list(cfg.lines), prev_positions, cfg.camera.fps)
        )
        prev_positions = {t.id: t.last_center() for t in tracker.tracks}
    return records, stats_rows


def _fit_curve(stats_rows, settings):
    """(curve, note): the curve is None when the data cannot support a fit."""

    samples = samples_from_stats(stats_rows, settings.axis_mode)
    bin_width = settings.effective_bin_width()
    bins = bin_samples(samples, bin_width, settings.min_bin_count)
    try:
        fit = fit_speed_density(bins, settings.model)
    except FitError as exc:
        return None, str(exc)
    return fundamental_diagram(bins, fit, bin_width), None


def _default_run_config(camera: CameraModel) -> RunConfig:
    return RunConfig(
        camera=camera,
        tracker=TrackerConfig(),
        fd=FdSettings(),
        lines=(),
        segment_length_km=None,
        segment_extent_px=float(camera.image_width_px),
    )


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def cmd_track(args) -> int:
    cfg = load_config(args.config)
    det_file = parse_detections(args.detections)
    log.info("tracking %d detections", len(det_file))
    records, stats_rows = run_pipeline(det_file, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tracks_csv(records, out / "tracks.csv")
    write_frame_stats_csv(stats_rows, out / "frame_stats.csv")
    _say(args, f"tracked {len(det_file)} detections over {len(stats_rows)} frames -> {out}")
    return EXIT_OK


def cmd_fd(args) -> int:
    cfg = load_config(args.config)
    stats_rows = parse_frame_stats_csv(args.stats)
    curve, note = _fit_curve(stats_rows, cfg.fd)
    if curve is None:
        raise FitError(note or "no fundamental diagram could be fitted")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_fd_bins_csv(list(curve.bins), out / "fd_bins.csv")
    write_fd_fit_csv(curve, out / "fd_fit.csv")
    samples = samples_from_stats(stats_rows, cfg.fd.axis_mode)
    render_speed_density_svg(samples, curve, out / "speed_density.svg", cfg.fd.axis_mode)
    render_fundamental_diagram_svg(curve, out / "fundamental_diagram.svg", cfg.fd.axis_mode)
    _say(
        args,
        f"fitted {curve.fit.model} over {len(curve.bins)} bins; "
        f"critical density {curve.critical_density:.6g}, max flux {curve.max_flux:.6g} -> {out}",
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = _override_seed(scenario, args.seed)
    truth, detections = generate(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_detections_csv(detection_rows_from_truth(truth), out / "ground_truth.csv")
    write_detections_csv(detection_rows_from_stream(detections), out / "detections.csv")
    _say(
        args,
        f"simulated {scenario.duration_frames} frames: {len(truth)} truth rows, "
        f"{len(detections)} detections -> {out}",
    )
    return EXIT_OK


def _override_seed(scenario: ScenarioConfig, seed: int) -> ScenarioConfig:
    return dataclasses.replace(scenario, seed=seed)


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    truth = truth_boxes(parse_detections(args.truth))
    out = Path(args.out)
    records = parse_tracks_csv(out / "tracks.csv")
    stats_path = out / "frame_stats.csv"
    stats_rows = parse_frame_stats_csv(stats_path) if stats_path.exists() else None
    gsd = compute_gsd(cfg.camera).gsd_km_per_px
    report = evaluate(
        truth,
        records,
        gsd_km_per_px=gsd,
        fps=cfg.camera.fps,
        stats=stats_rows,
    )
    lines = [
        f"id_switches {report.id_switches}",
        f"track_purity {report.track_purity:.6g}",
        f"velocity_rmse_kmh {'n/a' if report.velocity_rmse_kmh is None else f'{report.velocity_rmse_kmh:.6g}'}",
        f"density_mae {'n/a' if report.density_mae is None else f'{report.density_mae:.6g}'}",
    ]
    if not args.quiet:
        print("\n".join(lines))
    payload = {
        "id_switches": report.id_switches,
        "track_purity": report.track_purity,
        "velocity_rmse_kmh": report.velocity_rmse_kmh,
        "density_mae": report.density_mae,
    }
    with open(out / "eval.json", "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return EXIT_OK


def cmd_run(args) -> int:
    if (args.detections is None) == (args.scenario is None):
        raise UsageError("run needs exactly one of --detections or --scenario")
    if args.detections is not None and args.config is None:
        raise UsageError("run with --detections requires --config")

    extra_files: list[str] = []
    notes: list[str] = []
    seed = None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.scenario is not None:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario = _override_seed(scenario, args.seed)
        seed = scenario.seed
        if args.config is not None:
            cfg = load_config(args.config)
            if cfg.camera != scenario.camera:
                raise ConfigError(
                    "the --config camera block differs from the --scenario camera block"
                )
        else:
            cfg = _default_run_config(scenario.camera)
        log.info("generating scenario %s (seed %d)", args.scenario, scenario.seed)
        truth, detections = generate(scenario)
        write_detections_csv(detection_rows_from_truth(truth), out / "ground_truth.csv")
        write_detections_csv(detection_rows_from_stream(detections), out / "detections.csv")
        extra_files += ["ground_truth.csv", "detections.csv"]
        det_file = DetectionFile(rows=detection_rows_from_stream(detections))
    else:
        cfg = load_config(args.config)
        det_file = parse_detections(args.detections)

    log.info("tracking %d detections", len(det_file))
    records, stats_rows = run_pipeline(det_file, cfg)
    curve, note = _fit_curve(stats_rows, cfg.fd)
    if note:
        notes.append(note)
    manifest = export_outputs(
        records,
        stats_rows,
        curve,
        out,
        axis_mode=cfg.fd.axis_mode,
        echo=config_echo(cfg),
        seed=seed,
        extra_files=extra_files,
        notes=notes,
    )
    _say(
        args,
        f"run complete: {len(records)} track records, {len(stats_rows)} frames, "
        f"{len(manifest['files'])} files -> {out}",
    )
    return EXIT_OK


class UsageError(Exception):
    """Bad flag combinations discovered after argparse."""


_COMMANDS = {
    "track": cmd_track,
    "fd": cmd_fd,
    "simulate": cmd_simulate,
    "eval": cmd_eval,
    "run": cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(name)s: %(message)s",
    )

    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"trafficfd {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DetectionParseError, FitError) as exc:
        print(f"trafficfd {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, OSError) as exc:
        print(f"trafficfd {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"trafficfd {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
