"""Received-window synthesis: delayed preamble superposition, fading and AWGN.

Everything runs at sequence rate: one 800 us preamble is ``n_zc`` complex
samples, the cyclic prefix is assumed ideal and the returned window is
already CP-stripped and synchronized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SpecError
from .zc import CellConfig

SEQUENCE_DURATION_US = 800.0
#: round-trip time for a 0.79 km cell radius
MAX_ROUND_TRIP_US = 5.27

ETU_DELAYS_NS = (0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0)
ETU_POWERS_DB = (-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0)


def sample_period_us(cfg: CellConfig) -> float:
    return SEQUENCE_DURATION_US / cfg.n_zc


@dataclass(frozen=True)
class ChannelModel:
    kind: str = "AWGN"
    snr_db: float = -16.0
    doppler_hz: float = 70.0
    tap_delays_ns: tuple = ETU_DELAYS_NS
    tap_powers_db: tuple = ETU_POWERS_DB

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in ("AWGN", "ETU70"):
            raise ConfigError(f"channel kind must be AWGN or ETU70, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not math.isfinite(self.snr_db):
            raise ConfigError("snr_db must be finite")
        object.__setattr__(self, "snr_db", float(self.snr_db))
        object.__setattr__(self, "tap_delays_ns", tuple(float(x) for x in self.tap_delays_ns))
        object.__setattr__(self, "tap_powers_db", tuple(float(x) for x in self.tap_powers_db))
        if kind == "ETU70":
            if len(self.tap_delays_ns) != len(self.tap_powers_db) or not self.tap_delays_ns:
                raise ConfigError("ETU70 tap delay and power arrays must have equal nonzero length")
            if any(d < 0 for d in self.tap_delays_ns):
                raise ConfigError("tap delays must be non-negative")

    @property
    def noise_variance(self) -> float:
        """Complex noise variance for unit per-UE sample power."""
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def tap_powers(self) -> np.ndarray:
        """Linear tap powers normalized to unit total power."""
        p = 10.0 ** (np.asarray(self.tap_powers_db) / 10.0)
        return p / p.sum()

    def with_snr(self, snr_db: float) -> "ChannelModel":
        return ChannelModel(self.kind, snr_db, self.doppler_hz, self.tap_delays_ns, self.tap_powers_db)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "snr_db": self.snr_db}
        if self.kind == "ETU70":
            d.update(
                doppler_hz=self.doppler_hz,
                tap_delays_ns=list(self.tap_delays_ns),
                tap_powers_db=list(self.tap_powers_db),
            )
        return d

    @classmethod
    def from_dict(cls, d: dict | None) -> "ChannelModel":
        d = dict(d or {})
        unknown = set(d) - {"kind", "snr_db", "doppler_hz", "tap_delays_ns", "tap_powers_db"}
        if unknown:
            raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class TransmissionSpec:
    """Who transmits: preamble index, propagation delay and complex gain per UE.

    Repeated preamble indices are collisions.
    """

    preamble: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    delay_us: np.ndarray = field(default_factory=lambda: np.zeros(0))
    amplitude: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        pre = np.atleast_1d(np.asarray(self.preamble, dtype=np.int64))
        dly = np.atleast_1d(np.asarray(self.delay_us, dtype=float))
        amp = np.atleast_1d(np.asarray(self.amplitude, dtype=complex))
        if not (pre.shape == dly.shape == amp.shape) or pre.ndim != 1:
            raise SpecError("preamble, delay and amplitude must be 1-D arrays of equal length")
        object.__setattr__(self, "preamble", pre)
        object.__setattr__(self, "delay_us", dly)
        object.__setattr__(self, "amplitude", amp)

    @classmethod
    def from_entries(cls, entries) -> "TransmissionSpec":
        """Build from ``(preamble, delay_us[, amplitude])`` tuples."""
        entries = list(entries)
        pre = [e[0] for e in entries]
        dly = [e[1] for e in entries]
        amp = [e[2] if len(e) > 2 else 1.0 for e in entries]
        return cls(np.asarray(pre, dtype=np.int64), np.asarray(dly, dtype=float), np.asarray(amp, dtype=complex))

    def __len__(self) -> int:
        return self.preamble.size

    def validate(self, cfg: CellConfig, max_delay_us: float = MAX_ROUND_TRIP_US) -> None:
        if len(self) == 0:
            return
        if self.preamble.min() < 0 or self.preamble.max() >= cfg.n_prb:
            raise SpecError(f"preamble index outside [0, {cfg.n_prb})")
        if not np.all(np.isfinite(self.delay_us)) or not np.all(np.isfinite(self.amplitude)):
            raise SpecError("non-finite delay or amplitude")
        if self.delay_us.min() < 0 or self.delay_us.max() > max_delay_us + 1e-9:
            raise SpecError(
                f"delay must be within [0, {max_delay_us}] us, got max {self.delay_us.max():.4f} us"
            )


def _centered_freqs(n: int) -> np.ndarray:
    # symmetric integer frequency grid for odd n, so fractional delays interpolate band-limited
    return np.fft.fftfreq(n) * n


def _phase_ramps(shift: np.ndarray, n: int) -> np.ndarray:
    """``exp(-j*2*pi*k*shift/n)`` on the centered grid, one row per shift.

    Positive frequencies come from a running product, negative ones are the
    conjugates (shift is real), which is far cheaper than ``n`` complex exps.
    """
    shift = np.asarray(shift, dtype=float)
    half = (n - 1) // 2
    w = np.exp(-2j * np.pi * shift / n)
    out = np.empty((shift.size, n), dtype=complex)
    out[:, 0] = 1.0
    if half:
        pos = np.cumprod(np.broadcast_to(w[:, None], (shift.size, half)), axis=1)
        out[:, 1 : half + 1] = pos
        out[:, n - half :] = np.conj(pos[:, ::-1])
    return out


def draw_etu70_realization(model: ChannelModel, rng: np.random.Generator, n_zc: int = 839,
                           size: int | None = None) -> np.ndarray:
    """Draw quasi-static tapped-delay-line frequency responses on the ``n_zc`` grid.

    Returns shape ``(n_zc,)``, or ``(size, n_zc)`` when `size` is given. Each
    realization is independent; Doppler only enters through this independence.
    """
    if model.kind != "ETU70":
        raise ConfigError("draw_etu70_realization requires an ETU70 channel model")
    k = 1 if size is None else int(size)
    powers = model.tap_powers
    n_taps = powers.size
    g = (rng.standard_normal((k, n_taps)) + 1j * rng.standard_normal((k, n_taps))) * np.sqrt(powers / 2.0)
    f = _centered_freqs(n_zc) / (SEQUENCE_DURATION_US * 1e-6)
    tau = np.asarray(model.tap_delays_ns) * 1e-9
    steer = np.exp(-2j * np.pi * np.outer(tau, f))
    h = g @ steer
    return h[0] if size is None else h


def synthesize_burst(
    spec: TransmissionSpec,
    cfg: CellConfig,
    model: ChannelModel,
    rng: np.random.Generator,
    *,
    noiseless: bool = False,
    channels: np.ndarray | None = None,
    max_delay_us: float = MAX_ROUND_TRIP_US,
) -> np.ndarray:
    """Return the CP-stripped received window of length ``n_zc``.

    Each UE contributes its preamble delayed (fractionally, via a frequency
    domain phase ramp) and scaled by its amplitude; under ETU70 it is also
    filtered by its own fading realization. `channels` may supply those
    responses explicitly as a ``(len(spec), n_zc)`` array. Noise is circular
    complex Gaussian with variance ``10**(-snr_db/10)``.
    """
    spec.validate(cfg, max_delay_us)
    n = cfg.n_zc
    if len(spec):
        shift = spec.preamble * cfg.n_cs + spec.delay_us / sample_period_us(cfg)
        ramps = _phase_ramps(shift, n)
        ramps *= spec.amplitude[:, None]
        if channels is not None:
            channels = np.asarray(channels)
            if channels.shape != ramps.shape:
                raise SpecError(f"channels must have shape {ramps.shape}, got {channels.shape}")
            ramps *= channels
        elif model.kind == "ETU70":
            ramps *= draw_etu70_realization(model, rng, n, size=len(spec))
        y = np.fft.ifft(ramps.sum(axis=0) * cfg.root_spectrum)
    else:
        y = np.zeros(n, dtype=complex)
    if not noiseless:
        sigma = math.sqrt(model.noise_variance / 2.0)
        y = y + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return y


def random_transmissions(preambles: np.ndarray, cfg: CellConfig, rng: np.random.Generator,
                         max_delay_us: float = MAX_ROUND_TRIP_US) -> TransmissionSpec:
    """Attach uniform delays in ``[0, max_delay_us]`` and unit-modulus random phases."""
    preambles = np.asarray(preambles, dtype=np.int64)
    k = preambles.size
    delay = rng.uniform(0.0, max_delay_us, k)
    phase = np.exp(2j * np.pi * rng.uniform(0.0, 1.0, k))
    return TransmissionSpec(preambles, delay, phase)
