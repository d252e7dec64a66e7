"""Seeded synthetic frame streams: tones + Gaussian noise + optional anomalies.

Random source: numpy ``PCG64`` seeded through ``SeedSequence(seed,
spawn_key=key)``. Keys are ``(0, source, frame)`` for sensor noise,
``(1, frame)`` for the anomaly process, ``(2, frame)`` for the noise-gain
jitter and ``(3, frame)`` for tone fading; all but the first are shared by
every source of one scenario. A frame's draws therefore never depend on how many frames or
sources were generated before it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

REGIME_MULTIPLIERS = {"matched": 1.0, "mild": 0.8, "moderate": 0.6, "severe": 0.4}
ANOMALY_KINDS = ("none", "skewed_impulsive", "qpc", "mean_shift")

_NOISE_KEY = 0
_ANOMALY_KEY = 1
_GAIN_KEY = 2
_FADING_KEY = 3


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Tone:
    frequency: float
    amplitude: float
    phase: float = 0.0


@dataclass(frozen=True)
class AnomalySpec:
    kind: str = "none"
    # skewed_impulsive: Bernoulli(rate) arrivals with Exp(skew_scale) sizes,
    # each shaped by a unit-peak Hann pulse of `pulse_width` samples
    rate: float = 0.01
    skew_scale: float = 4.0
    pulse_width: int = 1
    # qpc: tones at f1, f2 and a third at f1 + f2 with weight `coupling`
    f1: float = 0.12
    f2: float = 0.18
    coupling: float = 1.0
    amplitude: float = 1.0
    coupled: bool = True
    # mean_shift: extra band-limited noise of variance energy_scale * sigma**2
    energy_scale: float = 0.5
    band: tuple[float, float] = (0.25, 0.5)

    def __post_init__(self):
        if self.kind not in ANOMALY_KINDS:
            raise ScenarioError(f"unknown anomaly kind {self.kind!r}")
        if self.kind == "qpc":
            for f in (self.f1, self.f2, self.f1 + self.f2):
                if not 0.0 < f < 0.5:
                    raise ScenarioError(f"qpc frequencies must lie in (0, 0.5), got {f}")
        if self.kind == "skewed_impulsive" and not (
            0.0 <= self.rate <= 1.0 and self.skew_scale >= 0 and self.pulse_width >= 1
        ):
            raise ScenarioError("need rate in [0, 1], skew_scale >= 0 and pulse_width >= 1")
        if self.kind == "mean_shift":
            lo, hi = self.band
            if not 0.0 <= lo < hi <= 0.5:
                raise ScenarioError(f"invalid band {self.band}")


DEFAULT_TONES = (Tone(0.09, 3.0, 0.0), Tone(0.14, 2.0, 1.0), Tone(0.21, 1.5, 2.0))


@dataclass(frozen=True)
class ScenarioSpec:
    frame_length: int = 256
    frames: int = 1000
    seed: int = 0
    tones: tuple[Tone, ...] = DEFAULT_TONES
    slope: float = 0.0
    noise_sigma: float = 1.0
    gain_jitter: float = 0.0
    fading: float = 0.0
    anomaly: AnomalySpec = field(default_factory=AnomalySpec)
    onset_frame: int = 0
    regime: str = "matched"

    def __post_init__(self):
        if self.frame_length < 2:
            raise ScenarioError("frame_length must be >= 2")
        if self.frames < 0:
            raise ScenarioError("frames must be >= 0")
        if self.onset_frame < 0 or (self.frames > 0 and self.onset_frame >= self.frames):
            raise ScenarioError(f"onset_frame {self.onset_frame} outside 0..{self.frames - 1}")
        for tone in self.tones:
            if not 0.0 < tone.frequency < 0.5:
                raise ScenarioError(f"tone frequency {tone.frequency} outside (0, 0.5)")
        if self.regime not in REGIME_MULTIPLIERS:
            raise ScenarioError(f"unknown regime {self.regime!r}")
        if self.noise_sigma < 0:
            raise ScenarioError("noise_sigma must be >= 0")
        if self.gain_jitter < 0 or self.fading < 0:
            raise ScenarioError("gain_jitter and fading must be >= 0")

    @property
    def multiplier(self) -> float:
        return REGIME_MULTIPLIERS[self.regime]

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["anomaly"]["band"] = list(self.anomaly.band)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> ScenarioSpec:
        doc = dict(doc)
        tones = tuple(Tone(**t) for t in doc.pop("tones", [asdict(t) for t in DEFAULT_TONES]))
        anomaly = dict(doc.pop("anomaly", {}))
        if "band" in anomaly:
            anomaly["band"] = tuple(anomaly["band"])
        return cls(tones=tones, anomaly=AnomalySpec(**anomaly), **doc)


@dataclass(frozen=True)
class LabeledStream:
    frames: np.ndarray  # (F, N)
    labels: np.ndarray  # (F,) int
    spec: ScenarioSpec


def _rng(seed: int, key: tuple[int, ...]) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def structured_component(spec: ScenarioSpec, frame: int) -> np.ndarray:
    n_local = np.arange(spec.frame_length)
    n = frame * spec.frame_length + n_local
    s = spec.slope * (n_local - (spec.frame_length - 1) / 2.0)
    fades = np.ones(len(spec.tones))
    if spec.fading > 0 and spec.tones:
        fades = np.exp(spec.fading * _rng(spec.seed, (_FADING_KEY, frame)).standard_normal(len(spec.tones)))
    for tone, fade in zip(spec.tones, fades):
        s = s + fade * tone.amplitude * np.cos(2 * np.pi * tone.frequency * n + tone.phase)
    return s


def shot_pulse(width: int) -> np.ndarray:
    """Unit-peak Hann pulse; width 1 is a single-sample impulse."""
    if width == 1:
        return np.ones(1)
    return np.sin(np.pi * (np.arange(width) + 0.5) / width) ** 2


def anomaly_component(spec: ScenarioSpec, frame: int) -> np.ndarray:
    a = spec.anomaly
    n_len = spec.frame_length
    if a.kind == "none" or frame < spec.onset_frame:
        return np.zeros(n_len)
    rng = _rng(spec.seed, (_ANOMALY_KEY, frame))
    m = spec.multiplier
    n = np.arange(n_len)
    if a.kind == "skewed_impulsive":
        scale = a.skew_scale * m
        hits = rng.random(n_len) < a.rate
        sizes = rng.exponential(scale, n_len) if scale > 0 else np.zeros(n_len)
        pulse = shot_pulse(a.pulse_width)
        shots = np.real(np.fft.ifft(np.fft.fft(hits * sizes) * np.fft.fft(pulse, n_len)))
        return shots - a.rate * scale * pulse.sum()
    if a.kind == "qpc":
        p1, p2, p3 = rng.uniform(0.0, 2 * np.pi, 3)
        if a.coupled:
            p3 = p1 + p2
        return a.amplitude * m * (
            np.cos(2 * np.pi * a.f1 * n + p1)
            + np.cos(2 * np.pi * a.f2 * n + p2)
            + a.coupling * np.cos(2 * np.pi * (a.f1 + a.f2) * n + p3)
        )
    # mean_shift
    g = rng.normal(size=n_len)
    spectrum = np.fft.rfft(g)
    freqs = np.fft.rfftfreq(n_len)
    inband = (freqs >= a.band[0]) & (freqs < a.band[1])
    spectrum[~inband] = 0.0
    b = np.fft.irfft(spectrum, n=n_len)
    frac = max(inband.mean(), 1.0 / n_len)
    return b * spec.noise_sigma * math.sqrt(a.energy_scale * m / frac)


def noise_gain(spec: ScenarioSpec, frame: int) -> float:
    """Per-frame log-normal gain on the noise floor (operating variability)."""
    if spec.gain_jitter == 0:
        return 1.0
    return float(np.exp(spec.gain_jitter * _rng(spec.seed, (_GAIN_KEY, frame)).standard_normal()))


def generate(spec: ScenarioSpec, source: int = 0, noise_scale: float = 1.0) -> LabeledStream:
    """x = s + v (+ anomaly from ``onset_frame`` on) for every frame."""
    frames = np.empty((spec.frames, spec.frame_length))
    for m in range(spec.frames):
        sigma = spec.noise_sigma * noise_scale * noise_gain(spec, m)
        noise = _rng(spec.seed, (_NOISE_KEY, source, m)).normal(0.0, sigma, spec.frame_length)
        frames[m] = structured_component(spec, m) + noise + anomaly_component(spec, m)
    labels = np.zeros(spec.frames, dtype=int)
    if spec.anomaly.kind != "none":
        labels[spec.onset_frame :] = 1
    return LabeledStream(frames, labels, spec)


def generate_fused(spec: ScenarioSpec, n_sources: int = 2, noise_scale: float = math.sqrt(2.0)) -> LabeledStream:
    """Average of ``n_sources`` sensors sharing structure and anomaly, with independent noise."""
    streams = [generate(spec, source=s, noise_scale=noise_scale) for s in range(n_sources)]
    frames = np.mean([st.frames for st in streams], axis=0)
    return LabeledStream(frames, streams[0].labels, spec)
