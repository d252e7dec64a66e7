"""Pipeline configuration and batched frame -> feature extraction."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .hos import DEFAULT_EPSILON, DEFAULT_LAGS, LagSet, lag_cumulants
from .residual import mad_sigma, sigma_is_degenerate, split_levels
from .signature import DEFAULT_GAMMA, NodeSelection, signature_blocks, stack_signature
from .wpt import ConfigError, WptConfig, analysis_levels, get_qmf

# keys that change the meaning of a feature vector
_HASHED = (
    "filter",
    "depth",
    "frame_length",
    "threshold_mode",
    "threshold_value",
    "node_lambdas",
    "nodes",
    "lags",
    "epsilon",
    "gamma",
)


@dataclass
class PipelineConfig:
    filter: str = "db4"
    depth: int = 3
    frame_length: int = 256
    threshold_mode: str = "universal"
    threshold_value: float | None = None
    node_lambdas: list[float] | None = None
    nodes: list[list[int]] | None = None
    lags: list[list[int]] = field(default_factory=lambda: [list(p) for p in DEFAULT_LAGS.pairs])
    epsilon: float = DEFAULT_EPSILON
    gamma: float = DEFAULT_GAMMA
    alpha: float = 0.05
    nu: float | None = None
    h_c: float | None = None
    target_arl: float | None = None
    seed: int = 0
    frame_rate: float = 1.0
    stream: str | None = None
    model: str | None = None
    output: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        WptConfig(self.depth, self.frame_length)
        get_qmf(self.filter)
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.threshold_mode not in ("universal", "fixed", "per_node"):
            raise ConfigError(f"unknown threshold mode {self.threshold_mode!r}")
        if self.threshold_mode == "fixed" and not (self.threshold_value or 0) > 0:
            raise ConfigError("fixed threshold mode needs a positive threshold_value")
        if self.threshold_mode == "per_node" and (
            self.node_lambdas is None or len(self.node_lambdas) != 1 << self.depth
        ):
            raise ConfigError(f"per_node mode needs {1 << self.depth} node_lambdas")
        self.selection.validate(self.depth)
        LagSet(tuple(tuple(p) for p in self.lags))
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")

    @property
    def selection(self) -> NodeSelection:
        if self.nodes is None:
            return NodeSelection.leaves(self.depth)
        return NodeSelection(tuple(tuple(n) for n in self.nodes))

    @property
    def lag_set(self) -> LagSet:
        return LagSet(tuple(tuple(p) for p in self.lags))

    @property
    def dim(self) -> int:
        return 3 * len(self.selection)

    def resolved_nu(self, dim: int | None = None) -> float:
        return float(self.nu) if self.nu is not None else float((dim or self.dim) + 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> PipelineConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def content_hash(self) -> str:
        doc = {k: getattr(self, k) for k in _HASHED}
        doc["nodes"] = [list(n) for n in self.selection.nodes]
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureSet:
    """Per-frame feature blocks for a stack of frames, each (F, |V|)."""

    energy: np.ndarray
    ce: np.ndarray
    nce: np.ndarray
    r0: np.ndarray
    degenerate: np.ndarray
    sigma: np.ndarray

    @property
    def signatures(self) -> np.ndarray:
        return stack_signature(self.energy, self.ce, self.nce)


def frame_thresholds(levels, cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-frame leaf thresholds (F, K), MAD sigma (F,) and degenerate-sigma flags (F,)."""
    sigma = mad_sigma(levels[1][..., 1, :])
    degenerate = sigma_is_degenerate(sigma, levels[0][..., 0, :])
    n_leaves = 1 << cfg.depth
    if cfg.threshold_mode == "universal":
        with np.errstate(invalid="ignore"):
            lam = np.where(degenerate, np.inf, sigma * math.sqrt(2.0 * math.log(cfg.frame_length)))
        lam = np.repeat(lam[..., None], n_leaves, axis=-1)
    elif cfg.threshold_mode == "fixed":
        lam = np.full(sigma.shape + (n_leaves,), float(cfg.threshold_value))
    else:
        lam = np.broadcast_to(np.asarray(cfg.node_lambdas, float), sigma.shape + (n_leaves,))
    return lam, sigma, degenerate


def extract_features(frames, cfg: PipelineConfig) -> FeatureSet:
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    if frames.shape[-1] != cfg.frame_length:
        raise ConfigError(f"frames have length {frames.shape[-1]}, config expects {cfg.frame_length}")
    qmf = get_qmf(cfg.filter)
    levels = analysis_levels(frames, qmf, cfg.depth)
    lam, sigma, flat = frame_thresholds(levels, cfg)
    _, residual = split_levels(levels, lam, qmf)
    energy, ce, nce, r0, degenerate = signature_blocks(
        levels, residual, cfg.selection, cfg.lag_set, cfg.epsilon
    )
    degenerate = degenerate | flat[:, None]
    return FeatureSet(energy, ce, nce, r0, degenerate, sigma)


def raw_hos_features(frames, lags: LagSet = DEFAULT_LAGS, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Cumulant energy and its normalized form on whole frames, (F, 2)."""
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    c = lag_cumulants(frames, lags)
    ce = np.sum(c * c, axis=-1)
    zc = frames - frames.mean(axis=-1, keepdims=True)
    r0 = np.mean(zc * zc, axis=-1)
    return np.stack([ce, ce / (r0**3 + epsilon)], axis=-1)
