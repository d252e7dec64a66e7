"""Command-line entry point: ``noisesig <command> [options]``.

Exit status is 0 on success, 3 when ``detect`` raised at least one alarm and
64 or above for usage, data or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .detector import CusumState, DetectorConfig, calibrate_cusum, cusum_step, decide
from .hos import average_grid, bispectrum, bispectrum_peak, cumulant_grid
from .pipeline import PipelineConfig, extract_features, frame_thresholds
from .residual import split_levels
from .signature import FitError, NominalModel, feature_names, fit_nominal, mahalanobis_sq
from .synth import AnomalySpec, ScenarioError, ScenarioSpec, generate
from .wpt import ConfigError, InvalidFilterError, analysis_levels, get_qmf

EXIT_ALARM = 3
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_IO = 74

SEED_ENV = "NOISESIG_SEED"
DEFAULT_TARGET_ARL = 1000.0


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_DATA):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- file formats ---------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def labels_path(stream_path) -> Path:
    p = Path(stream_path)
    return p.with_name(p.stem + ".labels.json")


def write_stream(path, frames: np.ndarray, labels: np.ndarray, scenario: dict | None = None) -> None:
    n_frames, n = frames.shape if frames.size else (0, frames.shape[-1] if frames.ndim == 2 else 0)
    rows = ((m, i, frames[m, i]) for m in range(n_frames) for i in range(n))
    write_csv(path, ["frame_index", "sample_index", "value"], rows)
    doc = {"frame_length": int(n), "frames": int(n_frames), "labels": [int(v) for v in labels]}
    if scenario is not None:
        doc["scenario"] = scenario
    write_json(labels_path(path), doc)


def read_stream(path, frame_length: int | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Frames (F, N) from a stream CSV, plus sidecar labels when present."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["frame_index", "sample_index", "value"]:
                raise CliError(f"{path}: expected header frame_index,sample_index,value")
            rows = [r for r in reader]
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None
    sidecar = labels_path(path)
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else None
    try:
        fi = np.array([int(r[0]) for r in rows], dtype=int)
        si = np.array([int(r[1]) for r in rows], dtype=int)
        values = np.array([float(r[2]) for r in rows])
    except (ValueError, IndexError):
        raise CliError(f"{path}: malformed row") from None
    if frame_length is None and meta is not None:
        frame_length = meta.get("frame_length")
    if not rows:
        n = int(frame_length or 0)
        frames = np.zeros((0, n))
    else:
        n = int(si.max()) + 1
        if frame_length is not None and n != frame_length:
            raise CliError(f"{path}: frames have {n} samples, expected {frame_length}")
        n_frames = len(rows) // n
        if (
            len(rows) % n
            or not np.array_equal(si, np.tile(np.arange(n), n_frames))
            or not np.array_equal(fi, np.repeat(np.arange(n_frames), n))
        ):
            raise CliError(f"{path}: rows must list frames and samples in order without gaps")
        if not np.all(np.isfinite(values)):
            raise CliError(f"{path}: non-finite sample values")
        frames = values.reshape(n_frames, n)
    labels = None
    if meta is not None:
        labels = np.asarray(meta.get("labels", []), dtype=int)
        if len(labels) != len(frames):
            raise CliError(f"{sidecar}: {len(labels)} labels for {len(frames)} frames")
    return frames, labels


# --- configuration --------------------------------------------------------

_OVERRIDES = {
    "filter": str,
    "depth": int,
    "frame_length": int,
    "threshold_mode": str,
    "threshold_value": float,
    "gamma": float,
    "alpha": float,
    "nu": float,
    "h_c": float,
    "target_arl": float,
    "seed": int,
    "frame_rate": float,
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON; flags override its values")
    for key, typ in _OVERRIDES.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)


def load_config(args) -> PipelineConfig:
    doc: dict = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise CliError(f"cannot read {args.config}: {exc.strerror}", EXIT_IO) from None
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.config}: invalid JSON ({exc.msg})") from None
    if "seed" not in doc and os.environ.get(SEED_ENV):
        try:
            doc["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise CliError(f"{SEED_ENV} must be an integer") from None
    for key in _OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            doc[key] = value
    return PipelineConfig.from_dict(doc)


# --- commands -------------------------------------------------------------


def _scenario(args, cfg: PipelineConfig) -> ScenarioSpec:
    doc = {}
    if args.scenario:
        try:
            doc = json.loads(Path(args.scenario).read_text())
        except OSError as exc:
            raise CliError(f"cannot read {args.scenario}: {exc.strerror}", EXIT_IO) from None
    doc.setdefault("frame_length", cfg.frame_length)
    doc.setdefault("seed", cfg.seed)
    spec = ScenarioSpec.from_dict(doc)
    changes = {}
    if getattr(args, "frames", None) is not None:
        changes["frames"] = args.frames
    if getattr(args, "onset", None) is not None:
        changes["onset_frame"] = args.onset
    if getattr(args, "regime", None) is not None:
        changes["regime"] = args.regime
    if getattr(args, "anomaly", None) is not None:
        changes["anomaly"] = AnomalySpec(args.anomaly) if args.anomaly != "benchmark" else harness.BENCHMARK_ANOMALY
    return replace(spec, **changes) if changes else spec


def cmd_generate(args) -> int:
    cfg = load_config(args)
    spec = _scenario(args, cfg)
    stream = generate(spec)
    write_stream(args.out, stream.frames, stream.labels, spec.to_dict())
    return 0


def cmd_decompose(args) -> int:
    cfg = load_config(args)
    frames, _ = read_stream(args.stream, cfg.frame_length)
    qmf = get_qmf(cfg.filter)
    levels = analysis_levels(frames, qmf, cfg.depth)
    lam, _, _ = frame_thresholds(levels, cfg)
    keep, _ = split_levels(levels, lam, qmf)
    leaves = levels[-1]
    rows = (
        (m, cfg.depth, k, u, leaves[m, k, u], keep[m, k, u])
        for m in range(leaves.shape[0])
        for k in range(leaves.shape[1])
        for u in range(leaves.shape[2])
    )
    write_csv(args.out, ["frame_index", "j", "k", "u", "coefficient", "kept"], rows)
    return 0


def cmd_featurize(args) -> int:
    cfg = load_config(args)
    frames, _ = read_stream(args.stream, cfg.frame_length)
    sig = extract_features(frames, cfg).signatures
    names = feature_names(cfg.selection)
    write_csv(args.out, ["frame_index", *names], ([m, *row] for m, row in enumerate(sig)))
    return 0


def cmd_fit(args) -> int:
    cfg = load_config(args)
    frames, labels = read_stream(args.stream, cfg.frame_length)
    if labels is not None and labels.any() and not args.force:
        raise CliError(f"{args.stream} contains {int(labels.sum())} anomalous frames; pass --force to fit anyway")
    sig = extract_features(frames, cfg).signatures
    meta = {"frames": int(len(frames)), "seed": cfg.seed}
    model = fit_nominal(sig, cfg.gamma, cfg.selection, cfg.lag_set, cfg.epsilon, cfg.content_hash(), meta)
    det = DetectorConfig.from_alpha(cfg.alpha, model.dim)
    nu = cfg.resolved_nu(model.dim)
    calibration = None
    if cfg.h_c is None:
        target = cfg.target_arl or DEFAULT_TARGET_ARL
        calibration = calibrate_cusum(model.dim, nu, target, args.calibration_streams, seed=cfg.seed)
        h_c = calibration.h_c
    else:
        h_c = float(cfg.h_c)
    meta.update({"alpha": cfg.alpha, "eta": det.eta, "nu": nu, "h_c": h_c})
    model = replace(model, meta=meta)
    model.save(args.out)
    if args.report:
        report = {"alpha": cfg.alpha, "dim": model.dim, "eta": det.eta, "nu": nu, "h_c": h_c}
        if calibration is not None:
            report["calibration"] = calibration.to_dict()
        write_json(args.report, report)
    return 0


def cmd_detect(args) -> int:
    cfg = load_config(args)
    try:
        model = NominalModel.load(args.model)
    except OSError as exc:
        raise CliError(f"cannot read {args.model}: {exc.strerror}", EXIT_IO) from None
    if model.config_hash != cfg.content_hash():
        raise CliError(
            f"model config hash {model.config_hash} does not match pipeline config {cfg.content_hash()}"
        )
    frames, _ = read_stream(args.stream, cfg.frame_length)
    d_sq = mahalanobis_sq(extract_features(frames, cfg).signatures, model)
    d_sq = np.atleast_1d(d_sq) if len(frames) else np.zeros(0)
    det = DetectorConfig.from_alpha(cfg.alpha, model.dim)
    nu = cfg.resolved_nu(model.dim)
    h_c = cfg.h_c if cfg.h_c is not None else model.meta.get("h_c")
    if h_c is None:
        raise CliError("no CUSUM threshold: set h_c or fit a model with calibration")
    # the accumulator is never reset, so alarm_flag stays up while S_m > h_c
    state = CusumState(nu, float(h_c))
    rows = []
    for m, x in enumerate(d_sq):
        state, above = cusum_step(state, float(x))
        rows.append((m, float(x), decide(float(x), det), state.s, above))
    write_csv(args.out, ["frame_index", "D2", "decision", "S_m", "alarm_flag"], rows)
    sidecar = {
        "config_hash": cfg.content_hash(),
        "dim": model.dim,
        "eta": det.eta,
        "nu": nu,
        "h_c": float(h_c),
        "frames": len(rows),
        "first_alarm_frame": state.alarm_frame,
    }
    out = Path(args.out)
    write_json(out.with_name(out.stem + ".json"), sidecar)
    return EXIT_ALARM if state.alarmed else 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args)
    suites = harness.SUITES if args.suite == "all" else (args.suite,)
    scenario = _scenario(args, cfg)
    if scenario.anomaly.kind == "none" and not args.scenario:
        scenario = replace(scenario, anomaly=harness.BENCHMARK_ANOMALY)
    bench = harness.BenchmarkConfig(
        scenario=scenario,
        train_frames=args.train_frames,
        test_frames=args.test_frames,
        onset_frame=args.onset_frame,
        runs=args.runs,
        seed=cfg.seed,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["x", "mean", "band_low", "band_high"]
    if "ablation" in suites:
        results = harness.ablation_harness(bench, harness.METHODS, cfg)
        for r in results:
            write_csv(out / f"roc_{r.method}.csv", header, r.roc.rows())
            write_csv(out / f"pr_{r.method}.csv", header, r.pr.rows())
        (out / "ablation.txt").write_text(harness.format_table(results))
        write_json(out / "ablation.json", {"runs": bench.runs, "rows": [r.row() for r in results]})
    if "domain_shift" in suites:
        cells = harness.domain_shift_harness(bench, cfg=cfg)
        write_csv(
            out / "domain_shift.csv",
            ["regime", "method", "mean_auc", "std_auc"],
            ([c.regime, c.method, c.mean_auc, c.std_auc] for c in cells),
        )
        (out / "domain_shift.txt").write_text(harness.format_shift_table(cells))
    if "latency" in suites:
        lat = harness.latency_suite(bench, ("wpt+hos",), cfg)
        summary = []
        for r in lat:
            write_csv(out / f"latency_{r.method}.csv", header, r.cdf.rows())
            summary.append(
                {
                    "method": r.method,
                    "h_c": r.h_c,
                    "nu": r.nu,
                    "censored": r.cdf.censored,
                    "false_alarms_before_onset": r.false_alarms_before_onset,
                    "far_per_hour": r.false_alarms_before_onset / bench.onset_frame * cfg.frame_rate * 3600.0,
                }
            )
        write_json(out / "latency.json", {"runs": bench.runs, "methods": summary})
    return 0


def cmd_bispectrum(args) -> int:
    cfg = load_config(args)
    frames, _ = read_stream(args.stream, cfg.frame_length)
    if len(frames) == 0:
        raise CliError("stream has no frames")
    grid = average_grid(cumulant_grid(frames, args.tau_max))
    b = bispectrum(grid, args.size)
    omegas = b.omegas
    rows = (
        (omegas[i], omegas[k], b.values[i, k].real, b.values[i, k].imag)
        for i in range(args.size)
        for k in range(args.size)
    )
    write_csv(args.out, ["omega1", "omega2", "re", "im"], rows)
    w1, w2 = bispectrum_peak(b)
    print(f"peak at omega1={w1:.6f} omega2={w2:.6f} (f1={w1 / (2 * math.pi):.4f}, f2={w2 / (2 * math.pi):.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="noisesig", description="Noise-signature anomaly detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a seeded synthetic stream")
    _add_config_flags(p)
    p.add_argument("--scenario", help="scenario JSON")
    p.add_argument("--frames", type=int)
    p.add_argument("--onset", type=int)
    p.add_argument("--regime", choices=harness.REGIMES)
    p.add_argument("--anomaly", choices=("none", "skewed_impulsive", "qpc", "mean_shift", "benchmark"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("decompose", help="dump leaf coefficients and the keep mask")
    _add_config_flags(p)
    p.add_argument("--stream", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("featurize", help="write per-frame signature vectors")
    _add_config_flags(p)
    p.add_argument("--stream", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("fit", help="fit the nominal model on a nominal stream")
    _add_config_flags(p)
    p.add_argument("--stream", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="fit even if frames are labeled anomalous")
    p.add_argument("--report", help="write a calibration report JSON")
    p.add_argument("--calibration-streams", type=int, default=2000)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", help="score a stream and run the CUSUM")
    _add_config_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="run the evaluation suites")
    _add_config_flags(p)
    p.add_argument("--suite", default="all", choices=(*harness.SUITES, "all"))
    p.add_argument("--scenario", help="benchmark scenario JSON")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--train-frames", type=int, default=2000)
    p.add_argument("--test-frames", type=int, default=1000)
    p.add_argument("--onset-frame", type=int, default=800)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bispectrum", help="segment-averaged bispectrum of a stream")
    _add_config_flags(p)
    p.add_argument("--stream", required=True)
    p.add_argument("--tau-max", type=int, default=16)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bispectrum)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"noisesig: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, InvalidFilterError, FitError, ScenarioError, ValueError) as exc:
        print(f"noisesig: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"noisesig: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
