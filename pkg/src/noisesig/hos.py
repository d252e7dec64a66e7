"""Third-order cumulants, the bispectrum, and cumulant-energy features.

Estimators work along the last axis, so a stack of residual sequences can be
processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EPSILON = 1e-12


class LagError(ValueError):
    """Requested lags do not fit the sequence or grid."""


@dataclass(frozen=True)
class LagSet:
    pairs: tuple[tuple[int, int], ...] = ((0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2))

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        if not pairs:
            raise LagError("lag set must not be empty")
        if any(a < 0 or b < 0 for a, b in pairs):
            raise LagError("lags must be nonnegative")
        object.__setattr__(self, "pairs", pairs)

    @property
    def tau_max(self) -> int:
        return max(max(p) for p in self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)


DEFAULT_LAGS = LagSet()


def _centered(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z - z.mean(axis=-1, keepdims=True)


def _c3_centered(zc: np.ndarray, tau1: int, tau2: int) -> np.ndarray:
    n = zc.shape[-1] - max(tau1, tau2)
    prod = zc[..., :n] * zc[..., tau1 : tau1 + n] * zc[..., tau2 : tau2 + n]
    return prod.mean(axis=-1)


def _check_length(length: int, tau_max: int) -> None:
    if length <= tau_max + 1:
        raise LagError(f"sequence of length {length} is too short for lag {tau_max}")


def third_cumulant(z, tau1: int, tau2: int):
    """Biased third-order cumulant estimate at lags (tau1, tau2)."""
    if tau1 < 0 or tau2 < 0:
        raise LagError("lags must be nonnegative")
    z = np.asarray(z, dtype=float)
    _check_length(z.shape[-1], max(tau1, tau2))
    out = _c3_centered(_centered(z), tau1, tau2)
    return float(out) if out.ndim == 0 else out


def lag_cumulants(z, lags: LagSet = DEFAULT_LAGS) -> np.ndarray:
    """Cumulants at every pair in ``lags``; shape (..., len(lags))."""
    z = np.asarray(z, dtype=float)
    _check_length(z.shape[-1], lags.tau_max)
    zc = _centered(z)
    return np.stack([_c3_centered(zc, a, b) for a, b in lags.pairs], axis=-1)


@dataclass(frozen=True)
class CumulantGrid:
    values: np.ndarray  # (..., tau_max + 1, tau_max + 1)
    source_length: int
    mean_removed: bool = True

    @property
    def tau_max(self) -> int:
        return self.values.shape[-1] - 1


def cumulant_grid(z, tau_max: int) -> CumulantGrid:
    z = np.asarray(z, dtype=float)
    if tau_max < 0:
        raise LagError("tau_max must be nonnegative")
    _check_length(z.shape[-1], tau_max)
    zc = _centered(z)
    vals = np.zeros(z.shape[:-1] + (tau_max + 1, tau_max + 1))
    for a in range(tau_max + 1):
        for b in range(a, tau_max + 1):
            c = _c3_centered(zc, a, b)
            vals[..., a, b] = c
            vals[..., b, a] = c
    vals.flags.writeable = False
    return CumulantGrid(vals, z.shape[-1])


def average_grid(grid: CumulantGrid) -> CumulantGrid:
    """Mean over leading axes (segment averaging for bispectrum estimates)."""
    vals = grid.values.reshape((-1,) + grid.values.shape[-2:]).mean(axis=0)
    vals.flags.writeable = False
    return CumulantGrid(vals, grid.source_length, grid.mean_removed)


def symmetrized_lags(grid: CumulantGrid, size: int) -> np.ndarray:
    """Cumulant on all integer lags, wrapped modulo ``size`` for a 2-D DFT.

    A lag pair (a, b) names the time points {0, a, b}; the third-order moment
    is invariant to permuting and translating them, so each pair maps to the
    canonical nonnegative pair (p1 - p0, p2 - p0) of the sorted points. Pairs
    whose span exceeds tau_max are zero.
    """
    if grid.values.ndim != 2:
        raise LagError("symmetrization needs a single 2-D grid; average stacked grids first")
    t = grid.tau_max
    if size < 2 * t + 1:
        raise LagError(f"grid size {size} must be at least 2 * tau_max + 1 = {2 * t + 1}")
    out = np.zeros((size, size))
    for a in range(-t, t + 1):
        for b in range(-t, t + 1):
            p0, p1, p2 = sorted((0, a, b))
            if p2 - p0 <= t:
                out[a % size, b % size] = grid.values[p1 - p0, p2 - p0]
    return out


@dataclass(frozen=True)
class BispectrumGrid:
    values: np.ndarray  # complex (K, K); values[m1, m2] at omega = 2*pi*m/K

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def omegas(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.size) / self.size


def bispectrum(grid: CumulantGrid, size: int) -> BispectrumGrid:
    """B(w1, w2) = sum over lags of C3(t1, t2) exp(-i (w1 t1 + w2 t2))."""
    vals = np.fft.fft2(symmetrized_lags(grid, size))
    vals.flags.writeable = False
    return BispectrumGrid(vals)


def bispectrum_peak(b: BispectrumGrid) -> tuple[float, float]:
    """Location of max |B| inside the non-redundant triangle.

    The search region is 0 <= w1 <= w2, w1 + w2 <= pi; every other grid point
    is a symmetry image of a point in it.
    """
    k = b.size
    m1, m2 = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    region = (m1 <= m2) & (2 * (m1 + m2) <= k)
    mag = np.where(region, np.abs(b.values), -np.inf)
    i, j = np.unravel_index(np.argmax(mag), mag.shape)
    return float(b.omegas[i]), float(b.omegas[j])


def _lag_values(grid: CumulantGrid, lags: LagSet) -> np.ndarray:
    if lags.tau_max > grid.tau_max:
        raise LagError(f"lag {lags.tau_max} outside a grid with tau_max {grid.tau_max}")
    idx = np.array(lags.pairs)
    return grid.values[..., idx[:, 0], idx[:, 1]]


def cumulant_energy(grid: CumulantGrid, lags: LagSet = DEFAULT_LAGS):
    c = _lag_values(grid, lags)
    out = np.sum(c * c, axis=-1)
    return float(out) if out.ndim == 0 else out


def zero_lag_autocorr(z):
    """Biased variance of the centered sequence."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] == 0:
        raise ValueError("empty sequence")
    zc = _centered(z)
    out = np.mean(zc * zc, axis=-1)
    return float(out) if out.ndim == 0 else out


def normalized_cumulant_energy(
    grid: CumulantGrid, lags: LagSet = DEFAULT_LAGS, r0=None, epsilon: float = DEFAULT_EPSILON
):
    """Cumulant energy divided by (r0**3 + epsilon)."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if r0 is None:
        raise ValueError("r0 (zero-lag autocorrelation) is required")
    r0 = np.asarray(r0, dtype=float)
    if np.any(r0 < 0):
        raise ValueError("r0 must be nonnegative")
    out = cumulant_energy(grid, lags) / (r0**3 + epsilon)
    return float(out) if np.ndim(out) == 0 else out
