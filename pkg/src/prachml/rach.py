"""Four-phase contention-based RACH simulator with optional RAR suppression.

The PHY is abstracted by a confusion matrix: for each preamble the eNB's
estimated multiplicity is drawn from the row of its true multiplicity
(counts above the last row use the last row). Without a matrix the eNB is a
perfect oracle.

Timing, in RACH opportunities: a UE that gets no RAR retries after a uniform
backoff in ``[1, backoff]``. A UE whose msg3 collides first waits
``contention_timer`` opportunities for the contention-resolution timer to
expire, then backs off the same way.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigError
from .traffic import TrafficModel, arrival_schedule
from .zc import CellConfig

POLICIES = ("Standard", "MultiplicityAware")
SUMMARY_COLUMNS = ["policy", "seed", "mean_delay", "p95_delay", "msg3_collisions", "rars_sent", "success_rate", "drops"]


@dataclass(frozen=True)
class RachPolicy:
    kind: str = "Standard"
    confusion: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.kind!r}")
        if self.confusion is not None:
            m = np.asarray(self.confusion, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
                raise ConfigError("confusion matrix must be square with at least 2 rows")
            if np.any(m < 0) or not np.allclose(m.sum(axis=1), 1.0, atol=1e-6):
                raise ConfigError("confusion matrix rows must be probability distributions")
            object.__setattr__(self, "confusion", m)

    def estimate(self, counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Estimated multiplicity per preamble given the true counts."""
        counts = np.asarray(counts, dtype=np.int64)
        if self.confusion is None:
            return counts.copy()
        k = self.confusion.shape[0]
        cdf = np.cumsum(self.confusion, axis=1)
        cdf[:, -1] = 1.0
        rows = np.minimum(counts, k - 1)
        u = rng.random(counts.size)
        est = (u[:, None] >= cdf[rows]).sum(axis=1)
        return np.minimum(est, k - 1)

    def grants(self, estimated: np.ndarray) -> np.ndarray:
        if self.kind == "Standard":
            return estimated >= 1
        return estimated == 1


@dataclass
class RachOutcome:
    # per opportunity
    attempts: np.ndarray
    detected: np.ndarray
    rars_sent: np.ndarray
    msg3_collisions: np.ndarray
    successes: np.ndarray
    retries: np.ndarray
    drops: np.ndarray
    arrivals: np.ndarray
    # per UE
    arrival: np.ndarray
    success_at: np.ndarray
    n_attempts: np.ndarray
    dropped: np.ndarray

    @property
    def n_ue(self) -> int:
        return self.arrival.size

    @property
    def succeeded(self) -> np.ndarray:
        return self.success_at >= 0

    @property
    def pending(self) -> np.ndarray:
        return ~self.succeeded & ~self.dropped

    @property
    def access_delay(self) -> np.ndarray:
        """Opportunities from arrival to success, counting the arrival opportunity as 1."""
        ok = self.succeeded
        return self.success_at[ok] - self.arrival[ok] + 1

    def summary(self) -> dict:
        d = self.access_delay
        return {
            "mean_delay": float(d.mean()) if d.size else float("nan"),
            "p95_delay": float(np.percentile(d, 95)) if d.size else float("nan"),
            "msg3_collisions": int(self.msg3_collisions.sum()),
            "rars_sent": int(self.rars_sent.sum()),
            "success_rate": float(self.succeeded.mean()) if self.n_ue else float("nan"),
            "drops": int(self.dropped.sum()),
        }


def simulate(
    opportunities: int,
    traffic: TrafficModel,
    cell: CellConfig,
    policy: RachPolicy,
    backoff: int = 10,
    max_attempts: int = 10,
    seed: int = 0,
    contention_timer: int = 2,
    drain: bool = True,
    max_opportunities: int = 100_000,
) -> RachOutcome:
    """Run the procedure for `opportunities` arrival slots, then drain the backlog.

    The UE-side random stream (arrivals, preamble choice, backoff) is separate
    from the detector stream, so a given seed gives the same UE behavior under
    every policy until decisions differ.
    """
    if opportunities < 1 or backoff < 1 or max_attempts < 1 or contention_timer < 0:
        raise ConfigError("opportunities, backoff and max_attempts must be positive")
    ue_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    det_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    arrivals = arrival_schedule(traffic, opportunities, ue_rng)
    n_total = int(arrivals.sum())
    arrival = np.repeat(np.arange(opportunities), arrivals)
    next_try = arrival.copy()
    success_at = np.full(n_total, -1, dtype=np.int64)
    n_att = np.zeros(n_total, dtype=np.int64)
    dropped = np.zeros(n_total, dtype=bool)
    per_opp = {k: [] for k in ("attempts", "detected", "rars_sent", "msg3_collisions", "successes", "retries", "drops", "arrivals")}

    t = 0
    while True:
        pending = (success_at < 0) & ~dropped
        if t >= opportunities and (not drain or not pending.any()):
            break
        if t >= max_opportunities:
            break
        active = np.flatnonzero(pending & (next_try == t))
        choice = ue_rng.integers(0, cell.n_prb, active.size)
        counts = np.bincount(choice, minlength=cell.n_prb)
        est = policy.estimate(counts, det_rng)
        grant = policy.grants(est)
        n_att[active] += 1
        got_rar = grant[choice]
        won = got_rar & (counts[choice] == 1)
        success_at[active[won]] = t
        lost = active[~won]
        wait = ue_rng.integers(1, backoff + 1, lost.size)
        wait = wait + np.where(got_rar[~won], contention_timer, 0)
        next_try[lost] = t + wait
        out = lost[n_att[lost] >= max_attempts]
        dropped[out] = True
        per_opp["attempts"].append(active.size)
        per_opp["detected"].append(int((est >= 1).sum()))
        per_opp["rars_sent"].append(int(grant.sum()))
        per_opp["msg3_collisions"].append(int((grant & (counts > 1)).sum()))
        per_opp["successes"].append(int(won.sum()))
        per_opp["retries"].append(int(lost.size - out.size))
        per_opp["drops"].append(int(out.size))
        per_opp["arrivals"].append(int(arrivals[t]) if t < opportunities else 0)
        t += 1

    return RachOutcome(
        **{k: np.asarray(v, dtype=np.int64) for k, v in per_opp.items()},
        arrival=arrival,
        success_at=success_at,
        n_attempts=n_att,
        dropped=dropped,
    )


def paired_runs(n_runs: int, traffic: TrafficModel, cell: CellConfig, confusion=None,
                opportunities: int = 1, seed: int = 0, **kw) -> list[dict]:
    """Standard vs MultiplicityAware on identical seeds; one summary row per (policy, run)."""
    rows = []
    for i in range(n_runs):
        s = seed + i
        for kind in POLICIES:
            out = simulate(opportunities, traffic, cell, RachPolicy(kind, confusion), seed=s, **kw)
            rows.append({"policy": kind, "seed": s, **out.summary()})
    return rows


def sign_test(better: np.ndarray, worse: np.ndarray) -> tuple[int, int, float]:
    """One-sided sign test that `better` is smaller; returns (wins, non-ties, p-value)."""
    diff = np.asarray(worse, dtype=float) - np.asarray(better, dtype=float)
    wins = int((diff > 0).sum())
    n = int((diff != 0).sum())
    if n == 0:
        return 0, 0, 1.0
    return wins, n, float(stats.binomtest(wins, n, 0.5, alternative="greater").pvalue)
