"""Zadoff-Chu root sequences, the cell preamble set and bin geometry."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import sympy

from .errors import ConfigError

__all__ = [
    "CellConfig",
    "ZcPreamble",
    "generate_root",
    "make_preamble_set",
    "bin_range",
]


def generate_root(n_zc: int, r: int, *, variant: str = "2pi") -> np.ndarray:
    """Return the root Zadoff-Chu sequence of length `n_zc` and root index `r`.

    Element n is ``exp(-j*2*pi*r*n*(n+1)/n_zc)``. With ``variant="3gpp"`` the
    factor 2*pi is replaced by pi, which is the form used by the standard.
    Both variants are valid ZC sequences (the 2pi form equals the 3GPP form
    for root ``2*r mod n_zc``).
    """
    n_zc = int(n_zc)
    r = int(r)
    if n_zc < 3 or n_zc % 2 == 0 or not sympy.isprime(n_zc):
        raise ConfigError(f"n_zc must be an odd prime, got {n_zc}")
    if not 1 <= r <= n_zc - 1:
        raise ConfigError(f"root index must be in [1, {n_zc - 1}], got {r}")
    if variant == "2pi":
        scale = 2.0
    elif variant == "3gpp":
        scale = 1.0
    else:
        raise ConfigError(f"unknown ZC variant {variant!r}")
    n = np.arange(n_zc, dtype=np.int64)
    # reduce the quadratic phase modulo n_zc before going to floats
    q = (r * n * (n + 1)) % (2 * n_zc)
    return np.exp(-1j * np.pi * scale * q / n_zc)


@dataclass(frozen=True)
class CellConfig:
    """Single-root cell: sequence length, root, cyclic shift step, preamble count."""

    n_zc: int = 839
    root: int = 1
    n_cs: int = 13
    n_prb: int | None = None
    variant: str = "2pi"

    def __post_init__(self):
        if self.n_zc < 3 or self.n_zc % 2 == 0 or not sympy.isprime(self.n_zc):
            raise ConfigError(f"n_zc must be an odd prime, got {self.n_zc}")
        if not 1 <= self.root <= self.n_zc - 1:
            raise ConfigError(f"root index must be in [1, {self.n_zc - 1}], got {self.root}")
        if self.n_cs < 1 or self.n_cs > self.n_zc:
            raise ConfigError(f"n_cs must be in [1, n_zc], got {self.n_cs}")
        expected = self.n_zc // self.n_cs
        if self.n_prb is None:
            object.__setattr__(self, "n_prb", expected)
        elif self.n_prb != expected:
            raise ConfigError(
                f"n_prb must equal floor(n_zc/n_cs) = {expected}, got {self.n_prb}"
            )
        if self.variant not in ("2pi", "3gpp"):
            raise ConfigError(f"unknown ZC variant {self.variant!r}")

    @property
    def n_binned(self) -> int:
        """Number of correlation samples covered by bins."""
        return self.n_prb * self.n_cs

    @cached_property
    def root_samples(self) -> np.ndarray:
        seq = generate_root(self.n_zc, self.root, variant=self.variant)
        seq.flags.writeable = False
        return seq

    @cached_property
    def root_spectrum(self) -> np.ndarray:
        spec = np.fft.fft(self.root_samples)
        spec.flags.writeable = False
        return spec

    def to_dict(self) -> dict:
        return {
            "n_zc": self.n_zc,
            "root": self.root,
            "n_cs": self.n_cs,
            "n_prb": self.n_prb,
            "variant": self.variant,
        }

    @classmethod
    def from_dict(cls, d: dict | None) -> "CellConfig":
        d = dict(d or {})
        unknown = set(d) - {"n_zc", "root", "n_cs", "n_prb", "variant"}
        if unknown:
            raise ConfigError(f"unknown cell keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class ZcPreamble:
    """Root sequence right-shifted by ``shift = index * n_cs`` samples."""

    index: int
    shift: int
    samples: np.ndarray = field(repr=False)


def make_preamble_set(cfg: CellConfig) -> list[ZcPreamble]:
    root = cfg.root_samples
    out = []
    for v in range(cfg.n_prb):
        c_v = v * cfg.n_cs
        samples = np.roll(root, c_v)
        samples.flags.writeable = False
        out.append(ZcPreamble(index=v, shift=c_v, samples=samples))
    return out


def bin_range(v: int, cfg: CellConfig) -> range:
    """Half-open sample interval of the correlation bin owned by preamble `v`.

    Samples from ``n_prb * n_cs`` up to ``n_zc - 1`` belong to no bin.
    """
    if not 0 <= v < cfg.n_prb:
        raise IndexError(f"preamble index {v} out of range [0, {cfg.n_prb})")
    return range(v * cfg.n_cs, (v + 1) * cfg.n_cs)
