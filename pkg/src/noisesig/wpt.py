"""Orthonormal wavelet packet analysis and synthesis.

The transform is a full binary tree of periodic two-channel splits. Node
``(j, k)`` at depth ``j`` holds ``N / 2**j`` coefficients; its children are
``(j + 1, 2k)`` (lowpass branch) and ``(j + 1, 2k + 1)`` (highpass branch).

All array helpers accept leading batch axes, so a whole stream of frames with
shape ``(F, N)`` can be decomposed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHONORMALITY_TOL = 1e-8


class InvalidFilterError(ValueError):
    """Raised when filter taps do not form an orthonormal QMF pair."""


class ConfigError(ValueError):
    """Raised for inconsistent transform configuration or indices."""


# Lowpass taps, computed by spectral factorization of the Daubechies
# half-band polynomial at 50 digits and rounded to double precision.
HAAR = (0.7071067811865476, 0.7071067811865476)
DB4 = (
    0.48296291314453416,
    0.8365163037378079,
    0.2241438680420134,
    -0.12940952255126037,
)
DB8 = (
    0.2303778133088965,
    0.7148465705529157,
    0.6308807679298589,
    -0.027983769416859854,
    -0.18703481171909309,
    0.030841381835560764,
    0.0328830116668852,
    -0.010597401785069032,
)
BUILTIN_FILTERS = {"haar": HAAR, "db4": DB4, "db8": DB8}


def _double_shift_deviation(a: np.ndarray, b: np.ndarray, same: bool) -> float:
    """Max deviation of sum_n a[n] b[n - 2m] from delta[m] (or from 0)."""
    length = len(a)
    worst = 0.0
    for m in range(-(length // 2), length // 2 + 1):
        s = 0.0
        for n in range(length):
            i = n - 2 * m
            if 0 <= i < length:
                s += a[n] * b[i]
        target = 1.0 if (same and m == 0) else 0.0
        worst = max(worst, abs(s - target))
    return worst


def orthonormality_error(h, g=None) -> float:
    """Largest violation of the double-shift orthonormality conditions.

    Checks ``h`` against itself and, when ``g`` is given, ``g`` against itself
    and the ``h``/``g`` cross products.
    """
    h = np.asarray(h, dtype=float)
    err = _double_shift_deviation(h, h, same=True)
    if g is not None:
        g = np.asarray(g, dtype=float)
        err = max(
            err,
            _double_shift_deviation(g, g, same=True),
            _double_shift_deviation(h, g, same=False),
        )
    return err


def derive_highpass(h) -> np.ndarray:
    """Alternating-flip highpass ``g[n] = (-1)**n * h[L - 1 - n]``."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or len(h) < 2 or len(h) % 2:
        raise InvalidFilterError(f"lowpass needs an even tap count >= 2, got {h.shape}")
    err = orthonormality_error(h)
    if err > ORTHONORMALITY_TOL:
        raise InvalidFilterError(f"lowpass is not double-shift orthonormal (error {err:.3g})")
    signs = np.where(np.arange(len(h)) % 2 == 0, 1.0, -1.0)
    return signs * h[::-1]


@dataclass(frozen=True)
class QmfPair:
    lowpass: np.ndarray
    highpass: np.ndarray
    name: str = "custom"

    @property
    def length(self) -> int:
        return len(self.lowpass)

    @classmethod
    def from_lowpass(cls, h, name: str = "custom") -> QmfPair:
        h = np.array(h, dtype=float)
        g = derive_highpass(h)
        h.flags.writeable = False
        g.flags.writeable = False
        return cls(h, g, name)


def get_qmf(name: str) -> QmfPair:
    """Built-in filter by name: ``haar``, ``db4`` (4 taps) or ``db8`` (8 taps)."""
    try:
        taps = BUILTIN_FILTERS[name.lower()]
    except KeyError:
        raise InvalidFilterError(
            f"unknown filter {name!r}; choose from {sorted(BUILTIN_FILTERS)}"
        ) from None
    return QmfPair.from_lowpass(taps, name.lower())


@dataclass(frozen=True)
class WptConfig:
    depth: int
    frame_length: int
    boundary: str = "periodic"

    def __post_init__(self):
        if self.boundary != "periodic":
            raise ConfigError(f"only periodic boundaries are supported, got {self.boundary!r}")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.frame_length < 2:
            raise ConfigError(f"frame_length must be >= 2, got {self.frame_length}")
        if self.frame_length % (1 << self.depth):
            raise ConfigError(
                f"frame_length {self.frame_length} is not divisible by 2**{self.depth}"
            )

    @property
    def leaf_length(self) -> int:
        return self.frame_length >> self.depth

    def node_length(self, j: int) -> int:
        return self.frame_length >> j


def _analysis_step(w: np.ndarray, qmf: QmfPair) -> np.ndarray:
    """Split every node of a level; (..., K, M) -> (..., 2K, M/2)."""
    m = w.shape[-1]
    if m % 2:
        raise ConfigError(f"cannot split a node of odd length {m}")
    half = np.arange(m // 2)
    lo = np.zeros(w.shape[:-1] + (m // 2,))
    hi = np.zeros_like(lo)
    for t, (ht, gt) in enumerate(zip(qmf.lowpass, qmf.highpass)):
        seg = w[..., (2 * half + t) % m]
        lo += ht * seg
        hi += gt * seg
    out = np.stack([lo, hi], axis=-2)
    return out.reshape(w.shape[:-2] + (2 * w.shape[-2], m // 2))


def _synthesis_step(w: np.ndarray, qmf: QmfPair) -> np.ndarray:
    """Adjoint of :func:`_analysis_step`; (..., 2K, M) -> (..., K, 2M)."""
    k2, m = w.shape[-2], w.shape[-1]
    pairs = w.reshape(w.shape[:-2] + (k2 // 2, 2, m))
    lo, hi = pairs[..., 0, :], pairs[..., 1, :]
    out = np.zeros(w.shape[:-2] + (k2 // 2, 2 * m))
    half = np.arange(m)
    for t, (ht, gt) in enumerate(zip(qmf.lowpass, qmf.highpass)):
        # 2u + t is distinct mod 2M for distinct u, so plain fancy += is safe
        out[..., (2 * half + t) % (2 * m)] += ht * lo + gt * hi
    return out


def analysis_levels(x: np.ndarray, qmf: QmfPair, depth: int) -> list[np.ndarray]:
    """All tree levels for frames ``x`` of shape (..., N).

    Level ``j`` has shape (..., 2**j, N / 2**j).
    """
    x = np.asarray(x, dtype=float)
    levels = [x[..., None, :]]
    for _ in range(depth):
        levels.append(_analysis_step(levels[-1], qmf))
    return levels


def synthesis_levels(leaves: np.ndarray, qmf: QmfPair, depth: int) -> list[np.ndarray]:
    """Rebuild every level from leaf coefficients, root first.

    Returns the same layout as :func:`analysis_levels`; ``result[0][..., 0, :]``
    is the reconstructed frame.
    """
    levels = [np.asarray(leaves, dtype=float)]
    for _ in range(depth):
        levels.append(_synthesis_step(levels[-1], qmf))
    return levels[::-1]


@dataclass(frozen=True)
class CoefficientTree:
    """Dense wavelet packet coefficients of one frame for levels 0..J."""

    levels: tuple[np.ndarray, ...]
    depth: int = field(init=False)

    def __post_init__(self):
        for arr in self.levels:
            arr.flags.writeable = False
        object.__setattr__(self, "depth", len(self.levels) - 1)

    @property
    def frame_length(self) -> int:
        return self.levels[0].shape[-1]

    @property
    def leaves(self) -> np.ndarray:
        return self.levels[-1]

    def _check(self, j: int, k: int) -> None:
        if not 0 <= j <= self.depth:
            raise ConfigError(f"depth index {j} outside 0..{self.depth}")
        if not 0 <= k < (1 << j):
            raise ConfigError(f"node index {k} outside 0..{(1 << j) - 1} at depth {j}")

    def node(self, j: int, k: int) -> np.ndarray:
        self._check(j, k)
        return self.levels[j][k]


def forward_wpt(frame, qmf: QmfPair, cfg: WptConfig) -> CoefficientTree:
    frame = np.asarray(frame, dtype=float)
    if frame.shape != (cfg.frame_length,):
        raise ConfigError(f"expected a frame of length {cfg.frame_length}, got shape {frame.shape}")
    return CoefficientTree(tuple(analysis_levels(frame, qmf, cfg.depth)))


def inverse_wpt(leaves, qmf: QmfPair, cfg: WptConfig) -> np.ndarray:
    """Reconstruct a frame from leaf coefficients (a tree or a (2**J, N/2**J) array)."""
    if isinstance(leaves, CoefficientTree):
        if leaves.depth != cfg.depth:
            raise ConfigError(f"tree depth {leaves.depth} does not match config depth {cfg.depth}")
        leaves = leaves.leaves
    leaves = np.asarray(leaves, dtype=float)
    expected = (1 << cfg.depth, cfg.leaf_length)
    if leaves.shape != expected:
        raise ConfigError(f"leaf array must have shape {expected}, got {leaves.shape}")
    if not np.all(np.isfinite(leaves)):
        raise ConfigError("leaf coefficients contain non-finite values")
    return synthesis_levels(leaves, qmf, cfg.depth)[0][0]


def synthesize_atom(j: int, k: int, u: int, qmf: QmfPair, cfg: WptConfig) -> np.ndarray:
    """Basis vector whose inner product with a frame gives coefficient (j, k, u)."""
    if not 0 <= j <= cfg.depth:
        raise ConfigError(f"depth index {j} outside 0..{cfg.depth}")
    if not 0 <= k < (1 << j):
        raise ConfigError(f"node index {k} outside 0..{(1 << j) - 1}")
    if not 0 <= u < cfg.node_length(j):
        raise ConfigError(f"translation {u} outside 0..{cfg.node_length(j) - 1}")
    coeffs = np.zeros((1 << j, cfg.node_length(j)))
    coeffs[k, u] = 1.0
    return synthesis_levels(coeffs, qmf, j)[0][0]


def node_energy(tree: CoefficientTree, j: int, k: int) -> float:
    w = tree.node(j, k)
    return float(np.dot(w, w))
