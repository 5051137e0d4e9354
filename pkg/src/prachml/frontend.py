"""eNB receiver front end: circular correlation, noise floor, bin slicing."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FrontEndError
from .zc import CellConfig


@dataclass(frozen=True)
class CorrelationProfile:
    power: np.ndarray = field(repr=False)
    noise_floor: float


@dataclass(frozen=True)
class Bin:
    preamble_index: int
    samples: np.ndarray = field(repr=False)
    noise_floor: float


def correlate_power(received: np.ndarray, root: np.ndarray) -> np.ndarray:
    """``|sum_n y(n) conj(root((n-k) mod N))|**2`` for every lag k, via FFT.

    Accepts a single window or a stack of windows along the leading axis.
    """
    received = np.asarray(received)
    root = np.asarray(root)
    if root.ndim != 1 or received.shape[-1] != root.shape[0]:
        raise FrontEndError(
            f"length mismatch: received {received.shape[-1]} vs root {root.shape[0]}"
        )
    c = np.fft.ifft(np.fft.fft(received, axis=-1) * np.conj(np.fft.fft(root)), axis=-1)
    return c.real**2 + c.imag**2


def correlate_direct(received: np.ndarray, root: np.ndarray) -> np.ndarray:
    """Complex circular correlation by the O(n^2) direct sum; the oracle for the FFT path."""
    received = np.asarray(received)
    root = np.asarray(root)
    if received.shape != root.shape:
        raise FrontEndError("length mismatch")
    n = root.size
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return (received[None, :] * np.conj(root[idx])).sum(axis=1)


def estimate_noise_floor(power: np.ndarray, passes: int = 2, cut: float = 10.0) -> float:
    """Trimmed mean: drop samples above ``cut`` times the running mean, `passes` times."""
    power = np.asarray(power, dtype=float)
    if power.size == 0:
        raise FrontEndError("empty power vector")
    m = power.mean()
    for _ in range(passes):
        if m <= 0:
            return 0.0
        m = power[power <= cut * m].mean()
    return float(m)


def noise_floor_many(power: np.ndarray, passes: int = 2, cut: float = 10.0) -> np.ndarray:
    """Row-wise :func:`estimate_noise_floor` for a ``(k, n)`` stack."""
    power = np.asarray(power, dtype=float)
    m = power.mean(axis=1)
    for _ in range(passes):
        keep = power <= cut * m[:, None]
        cnt = keep.sum(axis=1)
        tot = np.where(keep, power, 0.0).sum(axis=1)
        m = np.where(cnt > 0, tot / np.maximum(cnt, 1), 0.0)
    return m


def correlate(received: np.ndarray, root: np.ndarray) -> CorrelationProfile:
    power = correlate_power(received, root)
    if power.ndim != 1:
        raise FrontEndError("correlate expects a single window; use correlate_power for stacks")
    return CorrelationProfile(power=power, noise_floor=estimate_noise_floor(power))


def bin_matrix(power: np.ndarray, cfg: CellConfig) -> np.ndarray:
    """Reshape the binned part of a profile (or a stack) to ``(..., n_prb, n_cs)``."""
    power = np.asarray(power)
    if power.shape[-1] != cfg.n_zc:
        raise FrontEndError(f"profile length {power.shape[-1]} != n_zc {cfg.n_zc}")
    return power[..., : cfg.n_binned].reshape(power.shape[:-1] + (cfg.n_prb, cfg.n_cs))


def extract_bins(profile: CorrelationProfile, cfg: CellConfig) -> list[Bin]:
    m = bin_matrix(profile.power, cfg)
    return [Bin(v, m[v].copy(), profile.noise_floor) for v in range(cfg.n_prb)]
