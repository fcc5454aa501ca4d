"""Synthetic single-channel mixtures: appliance traces plus Gaussian noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import RawSeries

KINDS = ("constant", "pulse", "cycle", "ramp")


@dataclass
class ApplianceProfile:
    """How one synthetic appliance draws power.

    kind
        ``"pulse"``: rectangular block of ``amplitude`` for ``duration``
        samples. ``"cycle"``: ``amplitude`` for the first ``duty`` fraction of
        the activation, then ``low_level``. ``"ramp"``: linear rise from 0 to
        ``amplitude`` over ``duration``. ``"constant"``: always on.
    activation_rate
        Expected number of activations per 1000 samples.
    """

    name: str
    kind: str = "pulse"
    amplitude: float = 1000.0
    duration: int = 10
    activation_rate: float = 1.0
    duty: float = 0.5
    low_level: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}; expected one of {KINDS}")
        if self.amplitude < 0 or self.low_level < 0:
            raise ValueError(f"{self.name}: amplitudes must be nonnegative")
        if int(self.duration) != self.duration or self.duration < 1:
            raise ValueError(f"{self.name}: duration must be an integer >= 1")
        if self.activation_rate < 0:
            raise ValueError(f"{self.name}: activation_rate must be nonnegative")
        if not 0 <= self.duty <= 1:
            raise ValueError(f"{self.name}: duty must lie in [0, 1]")

    def signature(self):
        d = int(self.duration)
        if self.kind == "pulse":
            return np.full(d, float(self.amplitude))
        if self.kind == "cycle":
            high = max(1, int(round(self.duty * d)))
            sig = np.full(d, float(self.low_level))
            sig[:high] = self.amplitude
            return sig
        if self.kind == "ramp":
            return self.amplitude * np.arange(1, d + 1) / d
        return np.full(1, float(self.amplitude))

    def trace(self, length, rng):
        if self.kind == "constant":
            return np.full(length, float(self.amplitude))
        out = np.zeros(length)
        sig = self.signature()
        p = min(self.activation_rate / 1000.0, 1.0)
        for t in np.flatnonzero(rng.random(length) < p):
            stop = min(length, t + len(sig))
            # overlapping activations keep the larger draw
            np.maximum(out[t:stop], sig[: stop - t], out=out[t:stop])
        return out


@dataclass
class SyntheticScene:
    aggregate: RawSeries
    appliances: list
    names: list
    noise: np.ndarray
    clamped: np.ndarray
    seed: int

    def source_sum(self):
        total = np.zeros(len(self.aggregate))
        for s in self.appliances:
            total = total + s.watts
        return total


def synth_generate(profiles, length, noise_sigma=0.0, seed=0, start=0, period=6):
    """Mix appliance traces into an aggregate.

    ``aggregate = max(sum(appliances) + noise, 0)`` elementwise, with noise
    drawn i.i.d. from N(0, noise_sigma**2); samples hit by the floor are
    flagged in ``clamped``.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("at least one appliance profile is required")
    if int(length) != length or length < 1:
        raise ValueError(f"length must be an integer >= 1, got {length}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    length = int(length)
    names = [p.name for p in profiles]
    if len(set(names)) != len(names):
        raise ValueError("profile names must be unique")

    streams = np.random.SeedSequence(seed).spawn(len(profiles) + 1)
    stamps = start + period * np.arange(length, dtype=np.int64)
    traces = [p.trace(length, np.random.default_rng(s)) for p, s in zip(profiles, streams[1:])]
    total = np.zeros(length)
    for tr in traces:
        total = total + tr
    noise = np.random.default_rng(streams[0]).normal(0.0, noise_sigma, length) if noise_sigma > 0 else np.zeros(length)
    mixed = total + noise
    clamped = mixed < 0
    aggregate = np.where(clamped, 0.0, mixed)
    return SyntheticScene(
        aggregate=RawSeries(stamps, aggregate, int(clamped.sum())),
        appliances=[RawSeries(stamps, tr) for tr in traces],
        names=names,
        noise=noise,
        clamped=clamped,
        seed=seed,
    )
