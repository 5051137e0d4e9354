"""Noise-floor-relative threshold detection and its false-alarm calibration."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ConfigError, DetectionError
from .frontend import Bin

ALPHA_RESOLUTION = 1e-3


@dataclass(frozen=True)
class ThresholdDetector:
    """Detect a preamble when ``max(bin) > alpha * noise_floor``."""

    alpha: float
    target_far: float = 1e-3

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.target_far <= 1:
            raise ConfigError(f"target_far must be in (0, 1], got {self.target_far}")

    n_classes = 2

    def decide(self, features: np.ndarray, noise_floor: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized detection over ``(k, n_cs)`` features; returns (detected, delay)."""
        features = np.asarray(features, dtype=float)
        floor = np.asarray(noise_floor, dtype=float)
        if np.any(floor <= 0):
            raise DetectionError("noise floor must be positive; supply noisy input")
        detected = features.max(axis=1) > self.alpha * floor
        delay = np.where(detected, features.argmax(axis=1), -1)
        return detected, delay

    def predict_dataset(self, ds) -> np.ndarray:
        detected, _ = self.decide(ds.features, ds.noise_floor)
        return detected.astype(np.int64)


@dataclass(frozen=True)
class Detection:
    detected: bool
    delay_estimate_samples: int | None


def detect(b: Bin, det: ThresholdDetector) -> Detection:
    if not b.noise_floor > 0:
        raise DetectionError("noise floor must be positive; supply noisy input")
    samples = np.asarray(b.samples, dtype=float)
    if samples.max() > det.alpha * b.noise_floor:
        return Detection(True, int(samples.argmax()))
    return Detection(False, None)


def max_statistic(features: np.ndarray, noise_floor: np.ndarray) -> np.ndarray:
    """Per-bin peak-to-floor ratio, the quantity the threshold acts on."""
    floor = np.asarray(noise_floor, dtype=float)
    if np.any(floor <= 0):
        raise CalibrationError("calibration bins need a positive noise floor")
    return np.asarray(features, dtype=float).max(axis=1) / floor


def calibrate(noise_only, target_far: float = 1e-3) -> ThresholdDetector:
    """Smallest alpha on a 1e-3 grid whose false alarm on `noise_only` is <= target_far.

    `noise_only` is a dataset with ``features``/``noise_floor`` or a 1-D array of
    precomputed max statistics. At least ``10 / target_far`` bins are required.
    """
    if not 0 < target_far <= 1:
        raise CalibrationError(f"target_far must be in (0, 1], got {target_far}")
    if hasattr(noise_only, "features"):
        stat = max_statistic(noise_only.features, noise_only.noise_floor)
    else:
        stat = np.asarray(noise_only, dtype=float).ravel()
    need = math.ceil(10.0 / target_far)
    if stat.size < need:
        raise CalibrationError(
            f"calibration needs at least {need} noise-only bins for target_far={target_far}, got {stat.size}"
        )
    s = np.sort(stat)
    n = s.size
    allowed = math.floor(target_far * n + 1e-9)

    def exceed(alpha: float) -> int:
        return n - int(np.searchsorted(s, alpha, side="right"))

    if allowed >= n:
        return ThresholdDetector(ALPHA_RESOLUTION, target_far)
    # binary search on the integer grid alpha = j * resolution
    lo = 1
    hi = max(1, math.ceil(s[-1] / ALPHA_RESOLUTION))
    while exceed(hi * ALPHA_RESOLUTION) > allowed:
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if exceed(mid * ALPHA_RESOLUTION) <= allowed:
            hi = mid
        else:
            lo = mid + 1
    return ThresholdDetector(lo * ALPHA_RESOLUTION, target_far)
