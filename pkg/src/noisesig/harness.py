"""Seeded multi-run ablation, domain-shift and latency suites."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .detector import calibrate_cusum
from .metrics import CurveReport, MetricError, ScoredDataset, f1_best, latency_cdf, pr_curve, roc_curve, run_bands
from .pipeline import FeatureSet, PipelineConfig, extract_features, raw_hos_features
from .signature import fit_nominal, mahalanobis_sq
from .synth import REGIME_MULTIPLIERS, AnomalySpec, ScenarioSpec, generate

METHODS = ("wpt+hos", "wpt-only", "hos-only", "second-order-only", "single-source", "fused-source")
DOMAIN_SHIFT_METHODS = ("wpt-only", "wpt+hos", "single-source", "fused-source")
REGIMES = tuple(REGIME_MULTIPLIERS)
SUITES = ("ablation", "domain_shift", "latency")

BENCHMARK_ANOMALY = AnomalySpec("skewed_impulsive", rate=0.02, skew_scale=1.0, pulse_width=8)


@dataclass(frozen=True)
class BenchmarkConfig:
    scenario: ScenarioSpec = field(default_factory=lambda: ScenarioSpec(anomaly=BENCHMARK_ANOMALY))
    train_frames: int = 2000
    test_frames: int = 1000
    onset_frame: int = 800
    runs: int = 20
    seed: int = 0
    n_sources: int = 2

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 0 < self.onset_frame < self.test_frames:
            raise ValueError("onset_frame must fall strictly inside the test stream")

    def run_seeds(self, run: int) -> tuple[int, int]:
        train, test = np.random.SeedSequence([self.seed, run]).generate_state(2)
        return int(train), int(test)

    def labels(self) -> np.ndarray:
        # positional labels so the null scenario (no anomaly) still has two classes
        return (np.arange(self.test_frames) >= self.onset_frame).astype(int)


def _check_methods(methods) -> tuple[str, ...]:
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    return methods


class _Run:
    """Streams and features of one seeded run, generated on demand and cached."""

    def __init__(self, bench: BenchmarkConfig, run: int, cfg: PipelineConfig, regime: str, train=None):
        self.bench = bench
        self.cfg = cfg
        train_seed, test_seed = bench.run_seeds(run)
        base = replace(bench.scenario, frame_length=cfg.frame_length, onset_frame=0)
        self.train_spec = replace(base, frames=bench.train_frames, seed=train_seed, anomaly=AnomalySpec())
        self.test_spec = replace(
            base, frames=bench.test_frames, seed=test_seed, onset_frame=bench.onset_frame, regime=regime
        )
        # nominal training data does not depend on the regime, so it can be shared
        self._train = {} if train is None else train
        self._test: dict = {}

    def _cache(self, split: str) -> dict:
        return self._train if split == "train" else self._test

    def frames(self, split: str, source: int, scale: float) -> np.ndarray:
        cache = self._cache(split)
        key = ("frames", source, scale)
        if key not in cache:
            spec = self.train_spec if split == "train" else self.test_spec
            cache[key] = generate(spec, source=source, noise_scale=scale).frames
        return cache[key]

    def stream(self, split: str, variant: str) -> np.ndarray:
        if variant == "primary":
            return self.frames(split, 0, 1.0)
        scale = math.sqrt(self.bench.n_sources)
        if variant == "single":
            return self.frames(split, 0, scale)
        return np.mean([self.frames(split, s, scale) for s in range(self.bench.n_sources)], axis=0)

    def features(self, split: str, variant: str) -> FeatureSet:
        cache = self._cache(split)
        key = ("features", variant)
        if key not in cache:
            cache[key] = extract_features(self.stream(split, variant), self.cfg)
        return cache[key]

    def method_features(self, method: str, split: str) -> np.ndarray:
        if method == "hos-only":
            return raw_hos_features(self.stream(split, "primary"), self.cfg.lag_set, self.cfg.epsilon)
        variant = {"single-source": "single", "fused-source": "fused"}.get(method, "primary")
        fs = self.features(split, variant)
        if method == "wpt-only":
            return fs.energy
        if method == "second-order-only":
            return np.concatenate([fs.energy, fs.r0], axis=-1)
        return fs.signatures

    def scores(self, method: str) -> np.ndarray:
        model = fit_nominal(self.method_features(method, "train"), self.cfg.gamma)
        return mahalanobis_sq(self.method_features(method, "test"), model)


@dataclass(frozen=True)
class MethodResult:
    method: str
    roc_auc: float
    pr_auc: float
    precision: float
    recall: float
    f1: float
    roc_auc_std: float
    per_run_auc: tuple[float, ...]
    roc: CurveReport
    pr: CurveReport

    def row(self) -> dict:
        return {
            "method": self.method,
            "roc_auc": self.roc_auc,
            "pr_auc": self.pr_auc,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "roc_auc_std": self.roc_auc_std,
        }


def _summarize(method: str, datasets: list[ScoredDataset]) -> MethodResult:
    rocs = [roc_curve(ds) for ds in datasets]
    prs = [pr_curve(ds) for ds in datasets]
    f1s = [f1_best(ds) for ds in datasets]
    aucs = np.array([r.auc for r in rocs])
    return MethodResult(
        method=method,
        roc_auc=float(aucs.mean()),
        pr_auc=float(np.mean([p.auc for p in prs])),
        precision=float(np.mean([f.precision for f in f1s])),
        recall=float(np.mean([f.recall for f in f1s])),
        f1=float(np.mean([f.f1 for f in f1s])),
        roc_auc_std=float(aucs.std(ddof=1)) if len(aucs) > 1 else 0.0,
        per_run_auc=tuple(float(a) for a in aucs),
        roc=run_bands(rocs),
        pr=run_bands(prs),
    )


def _score_runs(bench, methods, cfg, regime, runs=None) -> dict[str, list[ScoredDataset]]:
    labels = bench.labels()
    out: dict[str, list[ScoredDataset]] = {m: [] for m in methods}
    for r in range(bench.runs):
        run = runs[r] if runs is not None else _Run(bench, r, cfg, regime)
        for m in methods:
            out[m].append(ScoredDataset(run.scores(m), labels, run_id=r))
    return out


def ablation_harness(
    bench: BenchmarkConfig | None = None, methods=METHODS, cfg: PipelineConfig | None = None
) -> list[MethodResult]:
    """Per-method metrics, averaged over seeded runs on a shared dataset per run."""
    bench = bench or BenchmarkConfig()
    cfg = cfg or PipelineConfig()
    methods = _check_methods(methods)
    scored = _score_runs(bench, methods, cfg, bench.scenario.regime)
    return [_summarize(m, scored[m]) for m in methods]


@dataclass(frozen=True)
class ShiftCell:
    regime: str
    method: str
    mean_auc: float
    std_auc: float


def domain_shift_harness(
    bench: BenchmarkConfig | None = None,
    methods=DOMAIN_SHIFT_METHODS,
    regimes=REGIMES,
    cfg: PipelineConfig | None = None,
) -> list[ShiftCell]:
    """ROC-AUC per (regime, method); nominal training data is shared across regimes."""
    bench = bench or BenchmarkConfig()
    cfg = cfg or PipelineConfig()
    methods = _check_methods(methods)
    for reg in regimes:
        if reg not in REGIME_MULTIPLIERS:
            raise ValueError(f"unknown regime {reg!r}")
    train = [{} for _ in range(bench.runs)]
    cells = []
    for reg in regimes:
        runs = [_Run(bench, r, cfg, reg, train[r]) for r in range(bench.runs)]
        scored = _score_runs(bench, methods, cfg, reg, runs)
        for m in methods:
            aucs = np.array([roc_curve(ds).auc for ds in scored[m]])
            std = float(aucs.std(ddof=1)) if len(aucs) > 1 else 0.0
            cells.append(ShiftCell(reg, m, float(aucs.mean()), std))
    return cells


def cusum_alarms(d_sq, drift: float, h: float) -> list[int]:
    """Alarm frames of a CUSUM that resets to zero after every alarm."""
    alarms = []
    s = 0.0
    for m, x in enumerate(np.asarray(d_sq, dtype=float)):
        s = max(0.0, s + x - drift)
        if s > h:
            alarms.append(m)
            s = 0.0
    return alarms


@dataclass(frozen=True)
class LatencyResult:
    method: str
    h_c: float
    nu: float
    cdf: CurveReport
    false_alarms_before_onset: float


def latency_suite(
    bench: BenchmarkConfig | None = None,
    methods=("wpt+hos",),
    cfg: PipelineConfig | None = None,
    target_arl: float = 1000.0,
    calibration_streams: int = 2000,
) -> list[LatencyResult]:
    """First-alarm latency after onset under a CUSUM calibrated on chi-square nominal D^2."""
    bench = bench or BenchmarkConfig()
    cfg = cfg or PipelineConfig()
    methods = _check_methods(methods)
    runs = [_Run(bench, r, cfg, bench.scenario.regime) for r in range(bench.runs)]
    calibrations: dict[tuple[int, float], float] = {}
    results = []
    max_latency = bench.test_frames - bench.onset_frame - 1
    for m in methods:
        alarms, onsets, early = [], [], []
        nu = h = 0.0
        for run in runs:
            d_sq = run.scores(m)
            dim = run.method_features(m, "test").shape[-1]
            nu = cfg.resolved_nu(dim)
            h = cfg.h_c
            if h is None:
                key = (dim, nu)
                if key not in calibrations:
                    arl = cfg.target_arl or target_arl
                    calibrations[key] = calibrate_cusum(dim, nu, arl, calibration_streams, seed=bench.seed).h_c
                h = calibrations[key]
            fired = cusum_alarms(d_sq, nu, h)
            after = [a for a in fired if a >= bench.onset_frame]
            alarms.append(after[0] if after else None)
            onsets.append(bench.onset_frame)
            early.append(len(fired) - len(after))
        cdf = run_bands([latency_cdf([a], [o], max_latency) for a, o in zip(alarms, onsets)])
        pooled = latency_cdf(alarms, onsets, max_latency)
        cdf = replace(cdf, censored=pooled.censored)
        results.append(LatencyResult(m, float(h), float(nu), cdf, float(np.mean(early))))
    return results


def format_table(results: list[MethodResult]) -> str:
    header = f"{'Method':<20}{'ROC-AUC':>9}{'PR-AUC':>9}{'Precision*':>12}{'Recall*':>9}{'F1*':>8}"
    lines = [header, "-" * len(header)]
    for r in results:
        lines.append(
            f"{r.method:<20}{r.roc_auc:>9.3f}{r.pr_auc:>9.3f}{r.precision:>12.3f}{r.recall:>9.3f}{r.f1:>8.3f}"
        )
    return "\n".join(lines) + "\n"


def format_shift_table(cells: list[ShiftCell]) -> str:
    methods = list(dict.fromkeys(c.method for c in cells))
    regimes = list(dict.fromkeys(c.regime for c in cells))
    lookup = {(c.regime, c.method): c for c in cells}
    header = f"{'Regime':<10}" + "".join(f"{m:>22}" for m in methods)
    lines = [header, "-" * len(header)]
    for reg in regimes:
        row = f"{reg:<10}"
        for m in methods:
            c = lookup[(reg, m)]
            row += f"{f'{c.mean_auc:.3f} +/- {c.std_auc:.3f}':>22}"
        lines.append(row)
    return "\n".join(lines) + "\n"


__all__ = [
    "BENCHMARK_ANOMALY",
    "DOMAIN_SHIFT_METHODS",
    "METHODS",
    "REGIMES",
    "SUITES",
    "BenchmarkConfig",
    "LatencyResult",
    "MethodResult",
    "MetricError",
    "ShiftCell",
    "ablation_harness",
    "cusum_alarms",
    "domain_shift_harness",
    "format_shift_table",
    "format_table",
    "latency_suite",
]
