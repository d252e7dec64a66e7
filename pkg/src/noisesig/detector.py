"""Chi-square calibration, detection power, frame decisions and CUSUM alarms."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

_EPS = 1e-16
_TINY = 1e-300
POISSON_TAIL = 1e-12


def regularized_gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x).

    Series expansion below x = a + 1, Lentz continued fraction for Q above.
    """
    if a <= 0:
        raise ValueError(f"shape must be positive, got {a}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x == 0:
        return 0.0
    log_pref = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        ap = a
        term = total = 1.0 / a
        for _ in range(10_000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        return min(1.0, total * math.exp(log_pref))
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return max(0.0, 1.0 - math.exp(log_pref) * h)


def _check_dof(d) -> int:
    if int(d) != d or d < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {d}")
    return int(d)


def chi2_cdf(d: int, x: float) -> float:
    d = _check_dof(d)
    if x <= 0:
        return 0.0
    return regularized_gamma_p(d / 2.0, x / 2.0)


def chi2_inv_cdf(d: int, p: float) -> float:
    """p-quantile of the central chi-square law by bracketed bisection."""
    d = _check_dof(d)
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    lo, hi = 0.0, max(1.0, float(d))
    while chi2_cdf(d, hi) < p:
        lo, hi = hi, 2.0 * hi
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if chi2_cdf(d, mid) < p:
            lo = mid
        else:
            hi = mid
    return hi


def noncentral_chi2_cdf(d: int, lambda_nc: float, x: float) -> float:
    """Poisson mixture of central chi-square CDFs, truncated at 1e-12 tail mass."""
    d = _check_dof(d)
    if lambda_nc < 0:
        raise ValueError(f"noncentrality must be nonnegative, got {lambda_nc}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if lambda_nc == 0:
        return chi2_cdf(d, x)
    if x == 0:
        return 0.0
    mu = lambda_nc / 2.0
    total = 0.0
    mass = 0.0
    i = 0
    limit = int(mu + 40.0 * math.sqrt(mu) + 200)
    while i <= limit:
        w = math.exp(-mu + i * math.log(mu) - math.lgamma(i + 1))
        total += w * chi2_cdf(d + 2 * i, x)
        mass += w
        if i > mu and 1.0 - mass < POISSON_TAIL:
            break
        i += 1
    return min(1.0, total)


def detection_probability(d: int, lambda_nc: float, eta: float) -> float:
    return 1.0 - noncentral_chi2_cdf(d, lambda_nc, eta)


@dataclass(frozen=True)
class DetectorConfig:
    alpha: float
    dim: int
    eta: float

    @classmethod
    def from_alpha(cls, alpha: float, dim: int) -> DetectorConfig:
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        return cls(alpha, dim, chi2_inv_cdf(dim, 1.0 - alpha))


@dataclass(frozen=True)
class MeanShiftModel:
    delta: np.ndarray
    noncentrality: float

    @classmethod
    def from_model(cls, delta, model) -> MeanShiftModel:
        delta = np.asarray(delta, dtype=float)
        y = model.whitener @ delta
        return cls(delta, float(y @ y))


def decide(d_sq: float, cfg: DetectorConfig) -> bool:
    return bool(d_sq > cfg.eta)


@dataclass(frozen=True)
class CusumState:
    drift: float
    alarm_threshold: float
    s: float = 0.0
    frame_count: int = 0
    alarm_frame: int | None = None

    def __post_init__(self):
        if not self.alarm_threshold > 0:
            raise ValueError("alarm threshold must be positive")

    @property
    def alarmed(self) -> bool:
        return self.alarm_frame is not None

    def reset(self) -> CusumState:
        return replace(self, s=0.0, alarm_frame=None)


def cusum_step(state: CusumState, d_sq: float) -> tuple[CusumState, bool]:
    """Advance one frame; returns the new state and whether S_m > h_c now.

    ``alarm_frame`` records the first crossing; accumulation continues after
    an alarm until the caller resets.
    """
    s = max(0.0, state.s + (d_sq - state.drift))
    above = s > state.alarm_threshold
    first = state.alarm_frame
    if above and first is None:
        first = state.frame_count
    return replace(state, s=s, frame_count=state.frame_count + 1, alarm_frame=first), above


def cusum_paths(d_sq, drift: float) -> np.ndarray:
    """Exact CUSUM recursion along the last axis of a (..., T) array."""
    d_sq = np.asarray(d_sq, dtype=float)
    out = np.empty_like(d_sq)
    s = np.zeros(d_sq.shape[:-1])
    for t in range(d_sq.shape[-1]):
        s = np.maximum(0.0, s + (d_sq[..., t] - drift))
        out[..., t] = s
    return out


def first_alarm(paths: np.ndarray, h: float) -> np.ndarray:
    """Index of the first S_m > h along the last axis, -1 if none."""
    above = paths > h
    idx = np.argmax(above, axis=-1)
    return np.where(above.any(axis=-1), idx, -1)


def simulate_arl(d: int, nu: float, h: float, n_streams: int, seed=None, max_frames: int = 10**7):
    """Average run length by direct sequential simulation of nominal streams.

    Returns ``(arl, standard_error)``; run lengths count frames up to and
    including the alarm.
    """
    rng = np.random.default_rng(seed)
    s = np.zeros(n_streams)
    active = np.arange(n_streams)
    lengths = np.full(n_streams, max_frames, dtype=np.int64)
    t = 0
    while active.size and t < max_frames:
        x = rng.chisquare(d, size=active.size)
        s = np.maximum(0.0, s + (x - nu))
        t += 1
        hit = s > h
        if hit.any():
            lengths[active[hit]] = t
            active, s = active[~hit], s[~hit]
    return float(lengths.mean()), float(lengths.std(ddof=1) / math.sqrt(n_streams))


@dataclass(frozen=True)
class CusumCalibration:
    d: int
    nu: float
    target_arl: float
    h_c: float
    arl: float
    ci_low: float
    ci_high: float
    n_streams: int

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "nu": self.nu,
            "target_arl": self.target_arl,
            "h_c": self.h_c,
            "arl": self.arl,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_streams": self.n_streams,
        }


def geometric_grid(h_min: float = 0.5, h_max: float = 1e4, ratio: float = 1.01) -> np.ndarray:
    n = int(math.ceil(math.log(h_max / h_min) / math.log(ratio))) + 1
    return h_min * ratio ** np.arange(n)


class _RecordSimulator:
    """Nominal CUSUM paths without reset, stored as running-maximum records.

    Without reset the path does not depend on the threshold, so the first
    passage above any h is the time of the first record exceeding h. Paths can
    be extended in stages, each stream stopping once it passes the current cap.
    """

    def __init__(self, d: int, nu: float, n_streams: int, rng: np.random.Generator):
        self.d, self.nu, self.n, self.rng = d, nu, n_streams, rng
        self.s = np.zeros(n_streams)
        self.m = np.zeros(n_streams)
        self.t = np.zeros(n_streams, dtype=np.int64)
        self.rec_stream: list[np.ndarray] = []
        self.rec_time: list[np.ndarray] = []
        self.rec_val: list[np.ndarray] = []
        self._keys = None

    def extend(self, cap: float, max_frames: int) -> None:
        active = np.flatnonzero((self.m <= cap) & (self.t < max_frames))
        while active.size:
            chunk = int(min(4096, max(64, (1 << 20) // active.size)))
            inc = self.rng.chisquare(self.d, size=(chunk, active.size)) - self.nu
            p = np.cumsum(inc, axis=0)
            # Lindley form of S_t = max(0, S_{t-1} + inc_t)
            s = p - np.minimum(-self.s[active], np.minimum.accumulate(p, axis=0))
            cm = np.maximum(self.m[active], np.maximum.accumulate(s, axis=0))
            prev = np.vstack([self.m[active][None, :], cm[:-1]])
            ti, ai = np.nonzero(cm > prev)
            self.rec_stream.append(active[ai])
            self.rec_time.append(self.t[active][ai] + ti + 1)
            self.rec_val.append(cm[ti, ai])
            self.s[active] = s[-1]
            self.m[active] = cm[-1]
            self.t[active] += chunk
            keep = (self.m[active] <= cap) & (self.t[active] < max_frames)
            active = active[keep]
        self._keys = None

    def _index(self):
        if self._keys is None:
            stream = np.concatenate(self.rec_stream)
            time = np.concatenate(self.rec_time)
            val = np.concatenate(self.rec_val)
            order = np.lexsort((time, stream))
            stream, time, val = stream[order], time[order], val[order]
            big = float(val.max()) + 1.0
            self._keys = (stream * big + val, time, big)
        return self._keys

    def run_lengths(self, h: float) -> np.ndarray:
        if not np.all(self.m > h):
            raise RuntimeError("paths not extended past the requested threshold")
        keys, time, big = self._index()
        pos = np.searchsorted(keys, np.arange(self.n) * big + h, side="right")
        return time[pos]


def calibrate_cusum(
    d: int,
    nu: float,
    target_arl: float,
    n_streams: int = 10_000,
    seed=0,
    grid: np.ndarray | None = None,
    max_frames: int = 10**8,
) -> CusumCalibration:
    """Smallest grid threshold whose simulated nominal ARL reaches the target.

    Nominal D^2 values are chi-square with ``d`` degrees of freedom. The same
    simulated paths serve every grid value, so the estimated ARL is monotone in
    the threshold and the result is monotone in ``target_arl``.
    """
    d = _check_dof(d)
    if target_arl < 1:
        raise ValueError("target_arl must be >= 1")
    if nu <= d:
        warnings.warn("drift nu <= d gives positive nominal drift; ARL grows slowly", RuntimeWarning)
    grid = geometric_grid() if grid is None else np.sort(np.asarray(grid, dtype=float))
    sim = _RecordSimulator(d, nu, n_streams, np.random.default_rng(seed))

    def arl_at(idx: int) -> np.ndarray:
        return sim.run_lengths(grid[idx])

    cap = 0
    history: list[tuple[float, float]] = []
    while True:
        sim.extend(grid[cap], max_frames)
        if np.any(sim.t >= max_frames) and not np.all(sim.m > grid[cap]):
            raise RuntimeError("simulation horizon reached before the target ARL")
        arl = float(arl_at(cap).mean())
        if arl >= target_arl:
            break
        if cap == len(grid) - 1:
            raise RuntimeError(f"target ARL {target_arl} unreachable within the threshold grid")
        history.append((grid[cap], math.log(arl)))
        h_next = 2.0 * grid[cap]
        if len(history) >= 2:
            (h0, l0), (h1, l1) = history[-2], history[-1]
            if l1 > l0:
                slope = (l1 - l0) / (h1 - h0)
                h_next = h1 + 1.05 * (math.log(target_arl) - l1) / slope
                h_next = min(h_next, 2.0 * h1 + 1.0)
        cap = max(cap + 1, int(np.searchsorted(grid, h_next)))
        cap = min(cap, len(grid) - 1)

    lo, hi = 0, cap
    while lo < hi:
        mid = (lo + hi) // 2
        if arl_at(mid).mean() >= target_arl:
            hi = mid
        else:
            lo = mid + 1
    lengths = arl_at(lo).astype(float)
    arl = float(lengths.mean())
    half = 1.96 * float(lengths.std(ddof=1)) / math.sqrt(n_streams) if n_streams > 1 else 0.0
    return CusumCalibration(d, float(nu), float(target_arl), float(grid[lo]), arl, arl - half, arl + half, n_streams)
