"""Seeded synthetic datasets. Desk-scale stand-ins for archive data so the
test suite and acceptance runs need no downloads."""

from __future__ import annotations

import numpy as np

from .core import LabeledDataset, TimeSeriesInstance


def make_sine_square(
    n: int, length: int = 64, channels: int = 1, seed: int = 0, noise: float = 0.1
) -> LabeledDataset:
    """Two classes: noisy sine waves vs noisy square waves of the same
    fundamental, amplitudes jittered per instance."""
    rng = np.random.default_rng(seed)
    t = np.arange(length) / length
    base = np.sin(2 * np.pi * 2 * t)
    instances = []
    for i in range(n):
        label = i % 2
        amp = rng.uniform(0.8, 1.2)
        phase = rng.uniform(-0.2, 0.2)
        wave = np.sin(2 * np.pi * 2 * t + phase)
        shape = amp * (wave if label == 0 else np.sign(base))
        values = shape[:, None] + rng.normal(0.0, noise, size=(length, channels))
        instances.append(TimeSeriesInstance(values, label))
    return LabeledDataset(tuple(instances), class_count=2)


def make_cbf(
    n: int, length: int = 64, channels: int = 1, seed: int = 0, noise: float = 0.3
) -> LabeledDataset:
    """Three classes of localized bumps: a plateau, a rising ramp, and a
    falling ramp, with jittered onset, width and height."""
    rng = np.random.default_rng(seed)
    instances = []
    for i in range(n):
        label = i % 3
        onset = rng.integers(length // 4 - 2, length // 4 + 3)
        width = rng.integers(length // 3 - 2, length // 3 + 3)
        height = rng.uniform(4.5, 5.5)
        end = min(int(onset + width), length)
        ramp = np.linspace(0.0, 1.0, end - onset)
        bump = np.zeros(length)
        if label == 0:
            bump[onset:end] = height
        elif label == 1:
            bump[onset:end] = height * ramp
        else:
            bump[onset:end] = height * ramp[::-1]
        values = bump[:, None] + rng.normal(0.0, noise, size=(length, channels))
        instances.append(TimeSeriesInstance(values, label))
    return LabeledDataset(tuple(instances), class_count=3)


GENERATORS = {"sine-square": make_sine_square, "cbf": make_cbf}


def generate(kind: str, n: int, length: int, channels: int, seed: int) -> LabeledDataset:
    if kind not in GENERATORS:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {sorted(GENERATORS)}")
    return GENERATORS[kind](n, length=length, channels=channels, seed=seed)
