"""Synthetic kitchen-activity dataset generator.

Stands in for the original human-subject recordings, which are not
available. Each of the 14 activity classes gets a distinct generative
signature across sensor groups: class-specific IMU sinusoids, magnetometer
orientation offsets, barometric offsets, distance steps, gas-level ramps,
optical spectra, and a thermal hot blob at a class-dependent position.
Class 0 is the null class: baseline noise only. Activity segments of random
duration are interleaved with longer null gaps, so the null class dominates
by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datapipe import (ACCEL, BAROMETER, DISTANCE, GAS, GRID_STEP_MS, GYRO,
                       MAG, NUM_CHANNELS, NUM_CLASSES, OPTICAL, THERMAL,
                       SessionRecording)

THERMAL_ROWS, THERMAL_COLS = 24, 32

NOISE_STD = 0.25
THERMAL_BACKGROUND = 25.0  # deg C ambient

# class signatures are fixed constants of the generator, independent of the
# dataset seed, so models trained on one draw transfer to another
_TEMPLATE_SEED = 0xC1A55


@dataclass(frozen=True)
class ClassSignature:
    accel_freq: np.ndarray    # (3,) Hz
    accel_amp: np.ndarray     # (3,)
    gyro_freq: np.ndarray     # (3,) Hz
    gyro_amp: np.ndarray      # (3,)
    mag_offset: np.ndarray    # (3,)
    baro_offset: float
    distance_level: float
    gas_level: np.ndarray     # (2,)
    gas_slope: np.ndarray     # (2,) per second
    optical: np.ndarray       # (10,)
    blob_row: int
    blob_col: int
    blob_heat: float


def class_signatures() -> list[ClassSignature | None]:
    """Signatures for classes 0..14; index 0 (null) is None."""
    rng = np.random.default_rng(_TEMPLATE_SEED)
    sigs: list[ClassSignature | None] = [None]
    for c in range(1, NUM_CLASSES):
        sigs.append(ClassSignature(
            accel_freq=0.3 + 0.17 * c + rng.uniform(0, 0.05, 3),
            accel_amp=rng.uniform(0.8, 2.0, 3),
            gyro_freq=2.8 - 0.15 * c + rng.uniform(0, 0.05, 3),
            gyro_amp=rng.uniform(0.8, 2.0, 3),
            mag_offset=rng.uniform(-1.5, 1.5, 3),
            baro_offset=float(rng.uniform(-1.5, 1.5)),
            distance_level=float(0.25 * c + rng.uniform(0, 0.1)),
            gas_level=rng.uniform(-1.5, 1.5, 2),
            gas_slope=rng.uniform(-0.05, 0.05, 2),
            optical=rng.uniform(-1.5, 1.5, 10),
            blob_row=int(rng.integers(4, THERMAL_ROWS - 4)),
            blob_col=int(rng.integers(4, THERMAL_COLS - 4)),
            blob_heat=float(rng.uniform(5.0, 10.0)),
        ))
    return sigs


def _thermal_blob(sig: ClassSignature) -> np.ndarray:
    rows = np.arange(THERMAL_ROWS)[:, None]
    cols = np.arange(THERMAL_COLS)[None, :]
    dist2 = (rows - sig.blob_row) ** 2 + (cols - sig.blob_col) ** 2
    return (sig.blob_heat * np.exp(-dist2 / 8.0)).reshape(-1)


def _segment_labels(rng: np.random.Generator, n_frames: int) -> np.ndarray:
    """Interleave null gaps (5-20 s) with activity segments (3-30 s); activity
    classes cycle through a shuffled order so every class appears."""
    labels = np.zeros(n_frames, dtype=np.int64)
    cycle: list[int] = []
    pos = 0
    while pos < n_frames:
        gap = int(rng.uniform(5.0, 20.0) * 6)
        pos += gap
        if pos >= n_frames:
            break
        if not cycle:
            cycle = list(rng.permutation(np.arange(1, NUM_CLASSES)))
        cls = cycle.pop()
        length = int(rng.uniform(3.0, 30.0) * 6)
        labels[pos:pos + length] = cls
        pos += length
    return labels


def synth_generate(seed: int, subjects: int = 2, sessions_per_subject: int = 5,
                   duration_s: float = 300.0) -> list[SessionRecording]:
    """Deterministic labeled 6 Hz dataset; same seed yields identical bytes."""
    rng = np.random.default_rng(seed)
    sigs = class_signatures()
    sessions = []
    n_frames = int(duration_s * 6)
    for subject in range(1, subjects + 1):
        for session in range(1, sessions_per_subject + 1):
            timestamps = np.arange(n_frames) * GRID_STEP_MS
            t = timestamps / 1000.0
            labels = _segment_labels(rng, n_frames)
            frames = rng.normal(0.0, NOISE_STD, size=(n_frames, NUM_CHANNELS))
            frames[:, THERMAL] += THERMAL_BACKGROUND
            for cls in np.unique(labels):
                if cls == 0:
                    continue
                sig = sigs[cls]
                mask = labels == cls
                tc = t[mask]
                seg_start = tc[0]
                phase = rng.uniform(0, 2 * np.pi, 6)
                frames[mask, ACCEL] += sig.accel_amp * np.sin(
                    2 * np.pi * sig.accel_freq * tc[:, None] + phase[:3])
                frames[mask, GYRO] += sig.gyro_amp * np.sin(
                    2 * np.pi * sig.gyro_freq * tc[:, None] + phase[3:])
                frames[mask, MAG] += sig.mag_offset
                frames[mask, BAROMETER] += sig.baro_offset
                frames[mask, DISTANCE] += sig.distance_level
                frames[mask, GAS] += sig.gas_level + sig.gas_slope * (
                    tc[:, None] - seg_start)
                frames[mask, OPTICAL] += sig.optical
                frames[mask, THERMAL] += _thermal_blob(sig)
            sessions.append(SessionRecording(
                subject=subject, session=session, timestamps=timestamps,
                frames=frames.astype(np.float64), labels=labels))
    return sessions
