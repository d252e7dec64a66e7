"""Structure/residual separation by hard masking of leaf coefficients."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .wpt import CoefficientTree, ConfigError, QmfPair, WptConfig, synthesis_levels

MAD_SCALE = 0.6745
# sigma below this fraction of the frame RMS is roundoff, treated as zero
SIGMA_RTOL = 1e-12


class DegenerateSigmaWarning(RuntimeWarning):
    """The noise scale estimate is zero, so no coefficient can be kept."""


def mad_sigma(detail: np.ndarray) -> np.ndarray:
    """median(|w|) / 0.6745 along the last axis."""
    return np.median(np.abs(detail), axis=-1) / MAD_SCALE


def estimate_sigma(tree: CoefficientTree) -> float:
    """Noise scale from the first-level highpass node (1, 1)."""
    if tree.depth < 1:
        raise ConfigError("sigma estimation needs a tree of depth >= 1")
    return float(mad_sigma(tree.node(1, 1)))


def sigma_is_degenerate(sigma, frame) -> np.ndarray | bool:
    """True where sigma is zero up to roundoff relative to the frame's RMS."""
    frame = np.asarray(frame, dtype=float)
    rms = np.sqrt(np.mean(frame * frame, axis=-1))
    out = ~(np.asarray(sigma) > SIGMA_RTOL * rms)
    return bool(out) if out.ndim == 0 else out


def universal_threshold(sigma: float, n: int) -> float:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if n < 2:
        raise ValueError(f"frame length must be >= 2, got {n}")
    return sigma * math.sqrt(2.0 * math.log(n))


@dataclass(frozen=True)
class ThresholdPolicy:
    """A resolved hard threshold.

    ``lam`` is either one shared value or an array with one entry per leaf
    node. ``degenerate`` marks the zero-sigma fallback (``lam = inf``).
    """

    mode: str
    sigma: float
    lam: float | np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        if self.mode not in ("universal", "fixed", "per_node"):
            raise ValueError(f"unknown threshold mode {self.mode!r}")
        lam = np.asarray(self.lam, dtype=float)
        if np.any(~(lam > 0)):
            raise ValueError("thresholds must be positive")
        if not self.degenerate and not self.sigma > 0:
            raise ValueError("sigma must be positive for a non-degenerate policy")

    def leaf_thresholds(self, n_leaves: int) -> np.ndarray:
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim == 0:
            return np.full(n_leaves, float(lam))
        if lam.shape != (n_leaves,):
            raise ConfigError(f"per-node thresholds need {n_leaves} entries, got {lam.shape}")
        return lam


def resolve_policy(
    tree: CoefficientTree,
    mode: str = "universal",
    lam: float | None = None,
    node_lambdas=None,
) -> ThresholdPolicy:
    """Build a threshold policy for one frame.

    ``universal`` derives the threshold from the MAD sigma; ``fixed`` uses
    ``lam``; ``per_node`` uses ``node_lambdas`` (one value per leaf).
    """
    sigma = estimate_sigma(tree)
    degenerate = sigma_is_degenerate(sigma, tree.node(0, 0))
    if mode == "universal":
        if degenerate:
            warnings.warn("sigma estimate is zero; keeping no coefficients", DegenerateSigmaWarning)
            return ThresholdPolicy(mode, 0.0, math.inf, degenerate=True)
        return ThresholdPolicy(mode, sigma, universal_threshold(sigma, tree.frame_length))
    if mode == "fixed":
        if lam is None:
            raise ValueError("fixed mode needs lam")
        return ThresholdPolicy(mode, sigma, float(lam), degenerate=degenerate)
    if mode == "per_node":
        if node_lambdas is None:
            raise ValueError("per_node mode needs node_lambdas")
        return ThresholdPolicy(mode, sigma, np.asarray(node_lambdas, float), degenerate=degenerate)
    raise ValueError(f"unknown threshold mode {mode!r}")


@dataclass(frozen=True)
class Mask:
    """Keep-bits over the leaf level; ``bits[k, u]`` is True where w is kept."""

    bits: np.ndarray
    depth: int

    @property
    def node_set(self) -> list[tuple[int, int]]:
        return [(self.depth, k) for k in range(self.bits.shape[0])]


def build_mask(tree: CoefficientTree, policy: ThresholdPolicy) -> Mask:
    leaves = tree.leaves
    lam = policy.leaf_thresholds(leaves.shape[0])
    # ties go to the residual
    bits = np.abs(leaves) > lam[:, None]
    bits.flags.writeable = False
    return Mask(bits, tree.depth)


@dataclass(frozen=True)
class SplitResult:
    structured: np.ndarray
    residual: np.ndarray
    kept_coeffs: np.ndarray
    discarded_coeffs: np.ndarray


def split_and_reconstruct(
    tree: CoefficientTree, mask: Mask, qmf: QmfPair, cfg: WptConfig
) -> SplitResult:
    """Project the frame onto the kept atoms and their orthogonal complement."""
    if mask.depth != tree.depth or mask.bits.shape != tree.leaves.shape:
        raise ConfigError(
            f"mask shape {mask.bits.shape} does not match leaf shape {tree.leaves.shape}"
        )
    if tree.depth != cfg.depth:
        raise ConfigError("tree depth does not match config")
    kept = np.where(mask.bits, tree.leaves, 0.0)
    discarded = np.where(mask.bits, 0.0, tree.leaves)
    s_hat = synthesis_levels(kept, qmf, cfg.depth)[0][0]
    v_hat = synthesis_levels(discarded, qmf, cfg.depth)[0][0]
    for arr in (kept, discarded, s_hat, v_hat):
        arr.flags.writeable = False
    return SplitResult(s_hat, v_hat, kept, discarded)


def split_levels(levels: list[np.ndarray], lam: np.ndarray, qmf: QmfPair):
    """Batched masking for stacked frames.

    ``levels`` comes from :func:`analysis_levels` on (F, N) frames and ``lam``
    has shape (F,) or (F, K). Returns ``(keep_bits, residual_levels)`` where
    ``residual_levels`` is the full tree of the residual, root first.
    """
    leaves = levels[-1]
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == leaves.ndim - 2:
        lam = lam[..., None]
    keep = np.abs(leaves) > lam[..., None]
    residual_leaves = np.where(keep, 0.0, leaves)
    return keep, synthesis_levels(residual_leaves, qmf, len(levels) - 1)
