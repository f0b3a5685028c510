"""Command-line interface.

Every report carries the fully resolved configuration, and every output is
a pure function of inputs, configuration and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import aliasing, calibration, io, stimulus, transitions
from .decomposition import PATCH_DIMS
from .geometry import DisplayGeometry, GazePoint, reference_display
from .model import DEFAULT_PARAMS, SensitivityParams
from .visibility import analyze_video

log = logging.getLogger("tempvis")

EXIT_USAGE = 2


class UsageError(Exception):
    """Bad or missing inputs; reported with exit code 2."""


@dataclass
class RunConfig:
    geometry: DisplayGeometry = field(default_factory=reference_display)
    params: SensitivityParams = DEFAULT_PARAMS
    gaze: GazePoint | None = None
    gaze_trace: str | None = None
    workers: int = 1
    seed: int = 0
    linear_input: bool = False
    patch: tuple[int, int, int] = PATCH_DIMS
    out: str = "out"

    def __post_init__(self):
        if self.workers < 1:
            raise UsageError("--workers must be >= 1")
        if self.gaze_trace is not None and not Path(self.gaze_trace).exists():
            raise UsageError(f"gaze trace not found: {self.gaze_trace}")

    def gaze_or_center(self) -> GazePoint:
        if self.gaze is not None:
            return self.gaze
        g = self.geometry
        return GazePoint((g.width_px - 1) / 2.0, (g.height_px - 1) / 2.0)

    def to_dict(self) -> dict:
        # the worker count is left out: it never changes results, and
        # reports must stay byte-identical across worker counts
        return {"geometry": self.geometry.to_dict(), "params": self.params.to_dict(),
                "gaze": None if self.gaze is None else asdict(self.gaze),
                "gaze_trace": self.gaze_trace, "seed": self.seed,
                "linear_input": self.linear_input, "patch": list(self.patch)}


def _parse_pair(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y but got {text!r}") from None
    return x, y


def _parse_patch(text: str) -> tuple[int, int, int]:
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        dims = ()
    if len(dims) != 3 or min(dims) < 2:
        raise argparse.ArgumentTypeError(f"expected TxHxW like 25x71x71, got {text!r}")
    return dims


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load_json(path, what: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} {path} is not valid JSON: {exc}") from None


def resolve_config(args) -> RunConfig:
    """Merge ``--config`` file contents with command-line flags (flags win)."""
    cfg = _load_json(args.config, "config file") if args.config else {}
    geom_src = args.geometry or cfg.get("geometry")
    if isinstance(geom_src, str):
        geom = DisplayGeometry.from_dict(_load_json(geom_src, "geometry file"))
    elif isinstance(geom_src, dict):
        geom = DisplayGeometry.from_dict(geom_src)
    else:
        geom = reference_display()
    params = SensitivityParams.from_dict(cfg.get("params", {}))
    if args.params:
        params = SensitivityParams.from_dict(_load_json(args.params, "parameter file"), params)
    gaze = args.gaze or cfg.get("gaze")
    return RunConfig(
        geometry=geom, params=params,
        gaze=None if gaze is None else GazePoint(*map(float, gaze)),
        gaze_trace=args.gaze_trace or cfg.get("gaze_trace"),
        workers=args.workers if args.workers is not None else int(cfg.get("workers", 1)),
        seed=args.seed if args.seed is not None else int(cfg.get("seed", 0)),
        linear_input=args.linear_input or bool(cfg.get("linear_input", False)),
        patch=args.patch or tuple(cfg.get("patch", PATCH_DIMS)),
        out=args.out or cfg.get("out", "out"),
    )


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _gaze_source(cfg: RunConfig):
    if cfg.gaze_trace:
        return transitions.gaze_lookup(transitions.read_gaze_trace(cfg.gaze_trace))
    return cfg.gaze_or_center()


def _check_frames(path) -> None:
    if not Path(path).is_dir():
        raise UsageError(f"frame directory not found: {path}")


# ---------------------------------------------------------------- commands

def _analyze(cfg: RunConfig, frames, out: Path, heatmaps: bool):
    n_t = cfg.patch[0]
    firsts = []

    def keep_firsts(it):
        for i, f in enumerate(it):
            if i % n_t == 0:
                firsts.append(io.encode(f))
            yield f

    vmap = analyze_video(keep_firsts(frames), _gaze_source(cfg), cfg.geometry, cfg.params,
                         workers=cfg.workers, dims=cfg.patch)
    (out / "visibility.csv").write_text(vmap.to_csv())
    if heatmaps:
        for t in range(vmap.shape[0]):
            io.write_png(out / f"heatmap_{t:04d}.png",
                         io.heatmap(vmap.p_norm[t], firsts[t], cfg.patch[1:]))
    return vmap


def cmd_analyze(args, cfg: RunConfig) -> int:
    _check_frames(args.input)
    out = _out_dir(cfg)
    vmap = _analyze(cfg, io.read_frames(args.input, cfg.linear_input), out, not args.no_heatmap)
    _write_json(out / "report.json", {
        "command": "analyze", "input": str(args.input), "config": cfg.to_dict(),
        "grid": list(vmap.shape), "coverage": vmap.coverage, "n_frames": vmap.n_frames,
        "mean_p_norm": float(vmap.p_norm.mean()), "max_p_norm": float(vmap.p_norm.max())})
    print(f"wrote {out / 'visibility.csv'} ({vmap.shape[0]}x{vmap.shape[1]}x{vmap.shape[2]} cells)")
    return 0


def _read_pair(args, cfg: RunConfig):
    for p in (args.source, args.target):
        if not Path(p).exists():
            raise UsageError(f"image not found: {p}")
    return (io.read_image(args.source, cfg.linear_input),
            io.read_image(args.target, cfg.linear_input))


def cmd_transition_solve(args, cfg: RunConfig) -> int:
    I_s, I_t = _read_pair(args, cfg)
    out = _out_dir(cfg)
    sched = transitions.build_schedule(I_s, I_t, args.p_d, cfg.geometry, cfg.params,
                                       eccentricities=args.ecc)
    data = sched.to_dict()
    data["config"] = cfg.to_dict()
    _write_json(out / "schedule.json", data)
    for e, a in zip(sched.eccentricities, sched.alphas):
        print(f"e={e:g} deg: {len(a) - 1} windows")
    return 0


def cmd_transition_render(args, cfg: RunConfig) -> int:
    I_s, I_t = _read_pair(args, cfg)
    if not Path(args.schedule).exists():
        raise UsageError(f"schedule not found: {args.schedule}")
    sched = transitions.TransitionSchedule.from_json(args.schedule)
    g = cfg.geometry
    center = GazePoint(*args.at) if args.at else GazePoint((g.width_px - 1) / 2.0, (g.height_px - 1) / 2.0)
    src = _gaze_source(cfg)
    gaze_at = src if callable(src) else (lambda frame: src)
    ecc = transitions.region_eccentricity(g, gaze_at, center)
    alphas = transitions.play(sched, ecc)
    out = _out_dir(cfg)
    io.write_frames(out / "frames", (transitions.blend(I_s, I_t, a) for a in alphas))
    _write_json(out / "render.json", {"command": "transition render", "config": cfg.to_dict(),
                                      "region_center": asdict(center), "alphas": alphas})
    print(f"wrote {len(alphas)} frames to {out / 'frames'}")
    return 0


def cmd_aliasing_score(args, cfg: RunConfig) -> int:
    _check_frames(args.input)
    out = _out_dir(cfg)
    frames = io.read_frames(args.input, cfg.linear_input)
    compensated = args.flow is not None
    if compensated:
        if not Path(args.flow).exists():
            raise UsageError(f"flow input not found: {args.flow}")
        stack = np.stack(list(frames))
        frames = aliasing.motion_compensate(stack, aliasing.read_flows(args.flow), cfg.patch[0])
        frames = np.clip(frames, 0.0, 1.0)
    vmap = _analyze(cfg, frames, out, not args.no_heatmap)
    report = aliasing.score_report(vmap, args.beta, command="aliasing score",
                                   motion_compensated=compensated, config=cfg.to_dict())
    _write_json(out / "score.json", report)
    print(f"flicker score {report['flicker_score']:.6f}")
    return 0


def cmd_cff(args, cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    rows = aliasing.cff_table(args.ecc, args.freqs, args.c_max, cfg.params)
    (out / "cff.csv").write_text(aliasing.cff_csv(rows))
    _write_json(out / "cff.json", {"command": "cff", "c_max": args.c_max, "config": cfg.to_dict()})
    sys.stdout.write(aliasing.cff_csv(rows))
    return 0


def _threshold_records(args):
    if args.input is None:
        return calibration.synthetic_thresholds(), "synthetic"
    if not Path(args.input).exists():
        raise UsageError(f"threshold file not found: {args.input}")
    return calibration.read_thresholds(args.input), str(args.input)


def cmd_fit(args, cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    report = {"command": f"fit {args.fit_command}", "config": cfg.to_dict()}
    if args.fit_command == "delange":
        if not Path(args.input).exists():
            raise UsageError(f"sensitivity file not found: {args.input}")
        data = np.loadtxt(args.input, delimiter=",", skiprows=1, ndmin=2)
        fit = calibration.fit_delange(data[:, 0], data[:, 1], args.degree)
        report.update(a=list(map(float, fit.a)), r2=fit.r2)
        print(f"R^2 = {fit.r2:.6f}")
    elif args.fit_command == "shape":
        records, source = _threshold_records(args)
        fit = calibration.fit_shape_params(records, base=cfg.params, n_starts=args.starts,
                                           seed=cfg.seed)
        report.update(source=source, **fit.to_dict())
        print(f"loss = {fit.loss:.3e}, R^2 = {fit.r2:.6f}")
    elif args.fit_command == "cv":
        records, source = _threshold_records(args)
        cv = calibration.cross_validate(records, k=args.k, seed=cfg.seed, base=cfg.params,
                                        n_starts=args.starts)
        report.update(source=source, **cv.to_dict())
        print(cv.to_table())
    else:
        if not Path(args.input).exists():
            raise UsageError(f"detection file not found: {args.input}")
        fit = calibration.fit_psychometric(calibration.read_detections(args.input), seed=cfg.seed,
                                           r=cfg.params.r)
        report.update(fit.to_dict())
        print(f"beta0 = {fit.beta0:.4f}, beta1 = {fit.beta1:.4f}, lapse = {fit.p_l:.4f}")
    _write_json(out / f"fit_{args.fit_command}.json", report)
    return 0


def cmd_stimulus(args, cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    spec = stimulus.GratingSpec(f_h=args.f_h, f_v=args.f_v, f_t=args.f_t, contrast=args.contrast,
                                background=args.background, n_frames=cfg.patch[0],
                                size_px=cfg.patch[1])
    vol = stimulus.generate_grating(spec, cfg.geometry)
    if args.jnd is not None:
        vol = stimulus.scale_to_jnd(vol, args.jnd, args.ecc, cfg.geometry, cfg.params,
                                    any_dims=cfg.patch != PATCH_DIMS)
    for i, frame in enumerate(stimulus.encode_frames(vol, cfg.geometry, args.bit_depth)):
        io.write_png(out / f"frame_{i:05d}.png", frame)
    sidecar = {"command": "stimulus", "grating": json.loads(spec.to_json()), "jnd": args.jnd,
               "ecc_deg": args.ecc, "bit_depth": args.bit_depth, "config": cfg.to_dict()}
    _write_json(out / "stimulus.json", sidecar)
    print(f"wrote {len(vol)} frames to {out}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--geometry", help="display geometry JSON")
    common.add_argument("--params", help="JSON with model parameter overrides")
    gaze = common.add_mutually_exclusive_group()
    gaze.add_argument("--gaze", type=_parse_pair, metavar="X,Y", help="fixed gaze in pixels")
    gaze.add_argument("--gaze-trace", metavar="FILE", help="CSV with frame,x_px,y_px")
    common.add_argument("--out", metavar="DIR", help="output directory (default: out)")
    common.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--seed", type=int)
    common.add_argument("--linear-input", action="store_true",
                        help="treat PNG values as display-linear instead of sRGB")
    common.add_argument("--patch", type=_parse_patch, metavar="TxHxW",
                        help="window size (default 25x71x71)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tempvis",
                                     description="Visibility of temporal change in video.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="per-window detection probability map")
    p.add_argument("input", help="directory of numbered PNG frames")
    p.add_argument("--no-heatmap", action="store_true")
    p.set_defaults(func=cmd_analyze)

    tr = sub.add_parser("transition", help="imperceptible image transitions")
    trs = tr.add_subparsers(dest="transition_command", required=True)
    p = trs.add_parser("solve", parents=[common], help="precompute blend schedules")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--p-d", type=float, default=0.5, help="target normalized probability")
    p.add_argument("--ecc", type=_parse_floats, default=[0.0, 10.0, 20.0, 30.0])
    p.set_defaults(func=cmd_transition_solve)
    p = trs.add_parser("render", parents=[common], help="render a gaze-adaptive transition")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--schedule", required=True)
    p.add_argument("--at", type=_parse_pair, metavar="X,Y",
                   help="screen position of the transition region (default: center)")
    p.set_defaults(func=cmd_transition_render)

    al = sub.add_parser("aliasing", help="temporal aliasing evaluation")
    als = al.add_subparsers(dest="aliasing_command", required=True)
    p = als.add_parser("score", parents=[common], help="global flicker score")
    p.add_argument("input", help="directory of numbered PNG frames")
    p.add_argument("--flow", help=".flo file, directory or manifest JSON for motion compensation")
    p.add_argument("--beta", type=float, default=3.0)
    p.add_argument("--no-heatmap", action="store_true")
    p.set_defaults(func=cmd_aliasing_score)

    p = sub.add_parser("cff", parents=[common], help="critical flicker frequency table")
    p.add_argument("--ecc", type=_parse_floats, default=[0.0, 10.0, 25.0, 40.0])
    p.add_argument("--freqs", type=_parse_floats, default=[0.0, 1.0, 2.0, 4.0])
    p.add_argument("--c-max", type=float, default=0.5)
    p.set_defaults(func=cmd_cff)

    fit = sub.add_parser("fit", help="model calibration")
    fits = fit.add_subparsers(dest="fit_command", required=True)
    p = fits.add_parser("delange", parents=[common], help="foveal temporal polynomial")
    p.add_argument("input", help="CSV with f_t_hz,sensitivity")
    p.add_argument("--degree", type=int, default=3)
    p = fits.add_parser("shape", parents=[common], help="shape parameters from thresholds")
    p.add_argument("input", nargs="?", help="threshold CSV (default: synthetic from defaults)")
    p.add_argument("--starts", type=int, default=8)
    p = fits.add_parser("psychometric", parents=[common], help="psychometric function")
    p.add_argument("input", help="CSV with id,c_jnd,trials,correct")
    p = fits.add_parser("cv", parents=[common], help="k-fold cross-validation")
    p.add_argument("input", nargs="?", help="threshold CSV (default: synthetic from defaults)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--starts", type=int, default=4)
    for name in ("delange", "shape", "psychometric", "cv"):
        fits.choices[name].set_defaults(func=cmd_fit)

    p = sub.add_parser("stimulus", parents=[common], help="windowed flickering grating")
    p.add_argument("--f-h", type=float, default=0.0)
    p.add_argument("--f-v", type=float, default=0.0)
    p.add_argument("--f-t", type=float, default=10.0)
    p.add_argument("--contrast", type=float, default=0.1)
    p.add_argument("--background", type=float, default=0.5)
    p.add_argument("--jnd", type=float, help="rescale to this pooled JND level")
    p.add_argument("--ecc", type=float, default=0.0, help="eccentricity for --jnd")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=8)
    p.set_defaults(func=cmd_stimulus)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
