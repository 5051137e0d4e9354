"""Random-access traffic models and uniform preamble selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError

KINDS = ("FixedSingle", "FixedCount", "BetaBurst")


@dataclass(frozen=True)
class TrafficModel:
    """Number of UEs per RACH opportunity.

    ``FixedSingle`` is one UE, ``FixedCount`` a constant ``n_ue`` (0 gives the
    noise-only flavor), and ``BetaBurst`` the synchronized-arrival model where
    ``total_devices`` activation times follow Beta(alpha, beta) over
    ``activation_window_s`` and are grouped into ``rach_period_s`` slots.
    """

    kind: str = "FixedSingle"
    n_ue: int = 1
    total_devices: int = 30000
    activation_window_s: float = 10.0
    rach_period_s: float = 0.02
    alpha: float = 3.0
    beta: float = 4.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"traffic kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "FixedCount" and self.n_ue < 0:
            raise ConfigError("FixedCount n_ue must be >= 0")
        if self.kind == "BetaBurst":
            if self.total_devices <= 0 or self.activation_window_s <= 0 or self.rach_period_s <= 0:
                raise ConfigError("BetaBurst totals must be positive")
            if not (self.alpha > 0 and self.beta > 0):
                raise ConfigError("Beta parameters must be positive")

    @classmethod
    def fixed_single(cls) -> "TrafficModel":
        return cls("FixedSingle", 1)

    @classmethod
    def fixed_count(cls, n_ue: int) -> "TrafficModel":
        return cls("FixedCount", int(n_ue))

    @classmethod
    def beta_burst(cls, total_devices=30000, activation_window_s=10.0, rach_period_s=0.02,
                   alpha=3.0, beta=4.0) -> "TrafficModel":
        return cls("BetaBurst", 0, int(total_devices), float(activation_window_s),
                   float(rach_period_s), float(alpha), float(beta))

    @property
    def n_slots(self) -> int:
        return int(round(self.activation_window_s / self.rach_period_s))

    def slot_probabilities(self) -> np.ndarray:
        """Probability that one device activates in each slot of the window."""
        edges = np.linspace(0.0, 1.0, self.n_slots + 1)
        return np.diff(stats.beta.cdf(edges, self.alpha, self.beta))

    def to_dict(self) -> dict:
        if self.kind == "FixedSingle":
            return {"kind": self.kind}
        if self.kind == "FixedCount":
            return {"kind": self.kind, "n_ue": self.n_ue}
        return {
            "kind": self.kind,
            "total_devices": self.total_devices,
            "activation_window_s": self.activation_window_s,
            "rach_period_s": self.rach_period_s,
            "alpha": self.alpha,
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, d: dict | None) -> "TrafficModel":
        d = dict(d or {"kind": "FixedSingle"})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown traffic keys: {sorted(unknown)}")
        if d.get("kind") == "FixedSingle":
            d["n_ue"] = 1
        elif d.get("kind") == "BetaBurst":
            d.setdefault("n_ue", 0)
        return cls(**d)


def sample_attempts(traffic: TrafficModel, rng: np.random.Generator, slot: int = 0) -> int:
    """UEs attempting access in one opportunity; `slot` selects the BetaBurst slot (cycled)."""
    if traffic.kind == "FixedSingle":
        return 1
    if traffic.kind == "FixedCount":
        return traffic.n_ue
    p = traffic.slot_probabilities()
    return int(rng.binomial(traffic.total_devices, p[slot % p.size]))


class AttemptSampler:
    """Stateful sampler that advances one slot per call."""

    def __init__(self, traffic: TrafficModel):
        self.traffic = traffic
        self.slot = 0

    def __call__(self, rng: np.random.Generator) -> int:
        n = sample_attempts(self.traffic, rng, self.slot)
        self.slot += 1
        return n


def arrival_schedule(traffic: TrafficModel, n_opportunities: int, rng: np.random.Generator) -> np.ndarray:
    """New arrivals per opportunity for the protocol simulator.

    Fixed models arrive all at once in the first opportunity; BetaBurst draws
    one joint realization of all activation times and bins it into slots.
    """
    out = np.zeros(n_opportunities, dtype=np.int64)
    if n_opportunities < 1:
        return out
    if traffic.kind in ("FixedSingle", "FixedCount"):
        out[0] = 1 if traffic.kind == "FixedSingle" else traffic.n_ue
        return out
    t = rng.beta(traffic.alpha, traffic.beta, traffic.total_devices)
    slots = np.minimum((t * traffic.n_slots).astype(np.int64), traffic.n_slots - 1)
    counts = np.bincount(slots, minlength=traffic.n_slots)
    k = min(n_opportunities, counts.size)
    out[:k] = counts[:k]
    return out


def assign_preambles(n_ue: int, n_prb: int, rng: np.random.Generator) -> np.ndarray:
    """Per-preamble multiplicity vector for `n_ue` independent uniform choices."""
    choice = rng.integers(0, n_prb, int(n_ue))
    return np.bincount(choice, minlength=n_prb)
