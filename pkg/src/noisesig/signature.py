"""Per-frame signature vectors and the nominal Gaussian model."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .hos import DEFAULT_EPSILON, DEFAULT_LAGS, LagSet, lag_cumulants
from .wpt import CoefficientTree, ConfigError

DEFAULT_GAMMA = 1e-3


class FitError(ValueError):
    """The nominal model cannot be estimated from the given signatures."""


@dataclass(frozen=True)
class NodeSelection:
    nodes: tuple[tuple[int, int], ...]

    def __post_init__(self):
        nodes = tuple((int(j), int(k)) for j, k in self.nodes)
        if not nodes:
            raise ConfigError("node selection must not be empty")
        if len(set(nodes)) != len(nodes):
            raise ConfigError("node selection contains duplicates")
        for j, k in nodes:
            if j < 0 or not 0 <= k < (1 << j):
                raise ConfigError(f"invalid node ({j}, {k})")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def leaves(cls, depth: int) -> NodeSelection:
        return cls(tuple((depth, k) for k in range(1 << depth)))

    def validate(self, depth: int) -> None:
        for j, _ in self.nodes:
            if j > depth:
                raise ConfigError(f"node at depth {j} exceeds transform depth {depth}")

    def __len__(self) -> int:
        return len(self.nodes)


def feature_names(selection: NodeSelection) -> list[str]:
    names = []
    for prefix in ("E", "CE", "NCE"):
        names.extend(f"{prefix}_{j}_{k}" for j, k in selection.nodes)
    return names


@dataclass(frozen=True)
class SignatureVector:
    values: np.ndarray
    frame_index: int = 0
    degenerate_nodes: tuple[tuple[int, int], ...] = ()

    @property
    def dim(self) -> int:
        return len(self.values)


def signature_blocks(
    levels,
    residual_levels,
    selection: NodeSelection,
    lags: LagSet = DEFAULT_LAGS,
    epsilon: float = DEFAULT_EPSILON,
):
    """Energy, cumulant-energy, normalized and zero-lag blocks for all frames.

    ``levels`` and ``residual_levels`` are tree level lists (root first) with
    any leading batch shape. Returns ``(energy, ce, nce, r0, degenerate)``,
    each shaped (..., |V|). Nodes too short for the lag set, or with an
    all-zero residual, get zero HOS features and a degenerate flag.
    """
    depth = len(levels) - 1
    selection.validate(depth)
    batch = levels[0].shape[:-2]
    n = len(selection)
    energy = np.zeros(batch + (n,))
    ce = np.zeros(batch + (n,))
    nce = np.zeros(batch + (n,))
    r0 = np.zeros(batch + (n,))
    degenerate = np.zeros(batch + (n,), dtype=bool)

    by_level: dict[int, list[tuple[int, int]]] = {}
    for pos, (j, k) in enumerate(selection.nodes):
        by_level.setdefault(j, []).append((pos, k))
    for j, items in by_level.items():
        pos = [p for p, _ in items]
        ks = [k for _, k in items]
        w = levels[j][..., ks, :]
        energy[..., pos] = np.sum(w * w, axis=-1)
        z = residual_levels[j][..., ks, :]
        if z.shape[-1] < lags.tau_max + 2:
            degenerate[..., pos] = True
            continue
        c = lag_cumulants(z, lags)
        node_ce = np.sum(c * c, axis=-1)
        zc = z - z.mean(axis=-1, keepdims=True)
        node_r0 = np.mean(zc * zc, axis=-1)
        ce[..., pos] = node_ce
        r0[..., pos] = node_r0
        nce[..., pos] = node_ce / (node_r0**3 + epsilon)
        degenerate[..., pos] = ~np.any(z != 0, axis=-1)
    return energy, ce, nce, r0, degenerate


def stack_signature(energy, ce, nce) -> np.ndarray:
    return np.concatenate([energy, ce, nce], axis=-1)


def build_signature(
    tree: CoefficientTree,
    residual_tree: CoefficientTree,
    selection: NodeSelection,
    lags: LagSet = DEFAULT_LAGS,
    epsilon: float = DEFAULT_EPSILON,
    frame_index: int = 0,
) -> SignatureVector:
    """Signature of one frame.

    Energies come from the full tree; the HOS blocks come from the residual
    tree (the forward transform of the residual, whose leaves are the
    discarded coefficients).
    """
    if residual_tree.depth < max(j for j, _ in selection.nodes):
        raise ConfigError("residual tree is missing selected nodes")
    energy, ce, nce, _, degenerate = signature_blocks(
        tree.levels, residual_tree.levels, selection, lags, epsilon
    )
    values = stack_signature(energy, ce, nce)
    values.flags.writeable = False
    flagged = tuple(node for node, bad in zip(selection.nodes, degenerate) if bad)
    return SignatureVector(values, frame_index, flagged)


@dataclass(frozen=True)
class NominalModel:
    mean: np.ndarray
    covariance: np.ndarray
    whitener: np.ndarray
    gamma: float
    nodes: tuple[tuple[int, int], ...] | None = None
    lags: tuple[tuple[int, int], ...] | None = None
    epsilon: float = DEFAULT_EPSILON
    config_hash: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.mean)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "nodes": [list(n) for n in self.nodes] if self.nodes is not None else None,
            "lags": [list(p) for p in self.lags] if self.lags is not None else None,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "config_hash": self.config_hash,
            "meta": self.meta,
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> NominalModel:
        mean = np.asarray(doc["mean"], dtype=float)
        cov = np.asarray(doc["covariance"], dtype=float)
        if cov.shape != (len(mean), len(mean)) or doc.get("dim", len(mean)) != len(mean):
            raise FitError("model file has inconsistent dimensions")
        return cls(
            mean=mean,
            covariance=cov,
            whitener=_whitener(cov),
            gamma=float(doc["gamma"]),
            nodes=tuple(tuple(n) for n in doc["nodes"]) if doc.get("nodes") else None,
            lags=tuple(tuple(p) for p in doc["lags"]) if doc.get("lags") else None,
            epsilon=float(doc.get("epsilon", DEFAULT_EPSILON)),
            config_hash=doc.get("config_hash"),
            meta=doc.get("meta", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> NominalModel:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _whitener(cov: np.ndarray) -> np.ndarray:
    """W = L^-1 with cov = L L^T, so W^T W = cov^-1."""
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise FitError("covariance is not positive definite; increase gamma") from None
    return solve_triangular(chol, np.eye(len(cov)), lower=True)


def fit_nominal(
    signatures,
    gamma: float = DEFAULT_GAMMA,
    selection: NodeSelection | None = None,
    lags: LagSet | None = None,
    epsilon: float = DEFAULT_EPSILON,
    config_hash: str | None = None,
    meta: dict | None = None,
) -> NominalModel:
    """Sample mean and ridge-shrunk sample covariance of nominal signatures.

    The ridge is ``gamma * trace(S) / d``; when every signature is identical
    (trace zero) it falls back to ``gamma`` itself.
    """
    if gamma < 0:
        raise FitError(f"gamma must be >= 0, got {gamma}")
    if len(signatures) and isinstance(signatures[0], SignatureVector):
        x = np.stack([s.values for s in signatures])
    else:
        x = np.asarray(signatures, dtype=float)
    if x.ndim != 2:
        raise FitError("signatures must form an (n, d) array")
    n, d = x.shape
    if n < d + 1:
        raise FitError(f"need at least d + 1 = {d + 1} signatures, got {n}")
    if not np.all(np.isfinite(x)):
        raise FitError("signatures contain non-finite values")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    scale = np.trace(cov) / d
    cov = cov + gamma * (scale if scale > 0 else 1.0) * np.eye(d)
    cov = 0.5 * (cov + cov.T)
    if not np.linalg.eigvalsh(cov)[0] > 0:
        raise FitError("covariance is not positive definite; increase gamma")
    return NominalModel(
        mean=mean,
        covariance=cov,
        whitener=_whitener(cov),
        gamma=gamma,
        nodes=selection.nodes if selection is not None else None,
        lags=lags.pairs if lags is not None else None,
        epsilon=epsilon,
        config_hash=config_hash,
        meta=dict(meta or {}),
    )


def mahalanobis_sq(f, model: NominalModel):
    """(f - mu)^T Sigma^-1 (f - mu) via the whitener; accepts (d,) or (n, d)."""
    if isinstance(f, SignatureVector):
        f = f.values
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != model.dim:
        raise ConfigError(f"feature dimension {f.shape[-1]} does not match model dimension {model.dim}")
    y = (f - model.mean) @ model.whitener.T
    out = np.sum(y * y, axis=-1)
    return float(out) if out.ndim == 0 else out
