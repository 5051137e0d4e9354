"""Scenario configuration, labeled-bin generation, persistence and splitting.

Dataset file layout::

    b"PRACHDS1\\n"
    one line of JSON header (scenario, fingerprint, record dtype, n_records)
    n_records fixed-size little-endian records

Each record holds the ``n_cs`` bin powers (f4), the noise floor (f4), the
label (u1), the unclamped transmitter count (u2), the burst index (u4), the
preamble index (u1) and a 64-bit record fingerprint (u8).
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import __version__
from .channel import ChannelModel, random_transmissions, synthesize_burst
from .errors import ConfigError, DataError
from .frontend import bin_matrix, correlate_power, estimate_noise_floor
from .traffic import TrafficModel, sample_attempts
from .zc import CellConfig

DATASET_MAGIC = b"PRACHDS1\n"
TASKS = ("Detection", "Multiplicity")


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _hash64(obj) -> int:
    return int.from_bytes(hashlib.sha256(_canonical(obj)).digest()[:8], "little")


@dataclass(frozen=True)
class ScenarioConfig:
    cell: CellConfig = field(default_factory=CellConfig)
    channel: ChannelModel = field(default_factory=ChannelModel)
    task: str = "Multiplicity"
    n_bursts: int = 20000
    traffic: TrafficModel = field(default_factory=lambda: TrafficModel.fixed_count(120))
    seed: int = 0
    n_max: int = 5
    overflow: str = "drop"
    balance: bool = False
    name: str = "scenario"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.n_bursts < 1:
            raise ConfigError("n_bursts must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        if self.overflow not in ("drop", "clamp"):
            raise ConfigError("overflow must be 'drop' or 'clamp'")
        if self.cell.n_prb > 255:
            raise ConfigError("at most 255 preambles fit the record layout")

    @property
    def n_classes(self) -> int:
        return 2 if self.task == "Detection" else self.n_max + 1

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "cell": self.cell.to_dict(),
            "channel": self.channel.to_dict(),
            "task": self.task,
            "n_bursts": self.n_bursts,
            "traffic": self.traffic.to_dict(),
            "seed": self.seed,
            "n_max": self.n_max,
            "overflow": self.overflow,
            "balance": self.balance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        d["cell"] = CellConfig.from_dict(d.get("cell"))
        d["channel"] = ChannelModel.from_dict(d.get("channel"))
        d["traffic"] = TrafficModel.from_dict(d.get("traffic"))
        return cls(**d)

    def fingerprint(self) -> int:
        d = self.to_dict()
        d.pop("name")
        return _hash64(d)

    def link_fingerprint(self) -> int:
        """Hash of only the cell and channel; shared by train/test/noise sets of one scenario."""
        return _hash64({"cell": self.cell.to_dict(), "channel": self.channel.to_dict()})

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            d = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse scenario file {path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"scenario file {path} must hold a mapping")
    return ScenarioConfig.from_dict(d)


def record_dtype(n_cs: int) -> np.dtype:
    return np.dtype(
        [
            ("features", "<f4", (n_cs,)),
            ("noise_floor", "<f4"),
            ("label", "u1"),
            ("count", "<u2"),
            ("burst", "<u4"),
            ("preamble", "u1"),
            ("fingerprint", "<u8"),
        ]
    )


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    x = x.astype(np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = x ^ (x >> np.uint64(31))
    return x


class BinDataset:
    """Structured array of labeled bins plus the header describing their scenario."""

    def __init__(self, records: np.ndarray, header: dict):
        self.records = records
        self.header = header

    def __len__(self) -> int:
        return self.records.shape[0]

    @property
    def scenario(self) -> ScenarioConfig:
        return ScenarioConfig.from_dict(self.header["scenario"])

    @property
    def fingerprint(self) -> str:
        return self.header["fingerprint"]

    @property
    def link_fingerprint(self) -> str:
        return self.header["link_fingerprint"]

    @property
    def n_classes(self) -> int:
        return int(self.header["n_classes"])

    @property
    def features(self) -> np.ndarray:
        return self.records["features"].astype(float)

    @property
    def noise_floor(self) -> np.ndarray:
        return self.records["noise_floor"].astype(float)

    @property
    def labels(self) -> np.ndarray:
        return self.records["label"].astype(np.int64)

    @property
    def counts(self) -> np.ndarray:
        return self.records["count"].astype(np.int64)

    def subset(self, idx) -> "BinDataset":
        recs = self.records[idx]
        return BinDataset(recs, {**self.header, "n_records": int(recs.shape[0])})

    def where(self, mask) -> "BinDataset":
        return self.subset(np.flatnonzero(mask))

    def to_bytes(self) -> bytes:
        header = {**self.header, "n_records": len(self), "dtype": self.records.dtype.descr}
        return DATASET_MAGIC + _canonical(header) + b"\n" + self.records.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "BinDataset":
        if not data.startswith(DATASET_MAGIC):
            raise DataError("not a dataset file (bad magic)")
        end = data.find(b"\n", len(DATASET_MAGIC))
        if end < 0:
            raise DataError("truncated dataset header")
        try:
            header = json.loads(data[len(DATASET_MAGIC) : end])
            dtype = np.dtype([tuple(f) if len(f) == 2 else (f[0], f[1], tuple(f[2])) for f in header["dtype"]])
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"corrupt dataset header: {exc}") from None
        body = data[end + 1 :]
        n = int(header.get("n_records", -1))
        if n < 0 or len(body) != n * dtype.itemsize:
            raise DataError(f"dataset body holds {len(body)} bytes, expected {n} records of {dtype.itemsize}")
        recs = np.frombuffer(body, dtype=dtype).copy()
        header.pop("dtype")
        return cls(recs, header)

    def save(self, path) -> None:
        try:
            with open(path, "wb") as fh:
                fh.write(self.to_bytes())
        except OSError as exc:
            raise DataError(f"cannot write dataset {path}: {exc}") from None

    @classmethod
    def load(cls, path) -> "BinDataset":
        try:
            with open(path, "rb") as fh:
                return cls.from_bytes(fh.read())
        except OSError as exc:
            raise DataError(f"cannot read dataset {path}: {exc}") from None

    def to_csv(self, path) -> None:
        import pandas as pd

        sc = self.header["scenario"]
        feats = self.records["features"]
        cols = {f"f{i}": feats[:, i] for i in range(feats.shape[1])}
        cols.update(
            noise_floor=self.records["noise_floor"],
            label=self.records["label"],
            snr_db=sc["channel"]["snr_db"],
            channel=sc["channel"]["kind"],
            seed=sc["seed"],
            burst=self.records["burst"],
            preamble=self.records["preamble"],
        )
        try:
            pd.DataFrame(cols).to_csv(path, index=False, float_format="%.9g")
        except OSError as exc:
            raise DataError(f"cannot write CSV {path}: {exc}") from None

    @classmethod
    def concat(cls, parts) -> "BinDataset":
        parts = list(parts)
        if not parts:
            raise DataError("nothing to concatenate")
        fps = {p.fingerprint for p in parts}
        if len(fps) != 1:
            raise DataError("refusing to concatenate datasets from different scenarios")
        recs = np.concatenate([p.records for p in parts])
        return cls(recs, {**parts[0].header, "n_records": int(recs.shape[0])})


def burst_rng(seed: int, burst: int) -> np.random.Generator:
    """Independent stream for one burst, so results do not depend on worker layout."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(burst)]))


def simulate_burst(cfg: ScenarioConfig, burst: int):
    """Return ``(bins (n_prb, n_cs), noise_floor, counts (n_prb,), spec)`` for one burst."""
    rng = burst_rng(cfg.seed, burst)
    cell = cfg.cell
    n_ue = sample_attempts(cfg.traffic, rng, slot=burst)
    choices = rng.integers(0, cell.n_prb, n_ue)
    counts = np.bincount(choices, minlength=cell.n_prb)
    spec = random_transmissions(choices, cell, rng)
    y = synthesize_burst(spec, cell, cfg.channel, rng)
    power = correlate_power(y, cell.root_samples)
    return bin_matrix(power, cell), estimate_noise_floor(power), counts, spec


def _simulate_range(cfg: ScenarioConfig, start: int, stop: int):
    k = stop - start
    cell = cfg.cell
    bins = np.empty((k, cell.n_prb, cell.n_cs), dtype=np.float32)
    floors = np.empty(k, dtype=np.float32)
    counts = np.empty((k, cell.n_prb), dtype=np.int64)
    for i, b in enumerate(range(start, stop)):
        m, f, c, _ = simulate_burst(cfg, b)
        bins[i], floors[i], counts[i] = m, f, c
    return bins, floors, counts


def _chunks(n: int, size: int):
    return [(s, min(n, s + size)) for s in range(0, n, size)]


def simulate_bursts(cfg: ScenarioConfig, jobs: int = 1, chunk: int = 256):
    """Run every burst of `cfg`; output is independent of `jobs`."""
    ranges = _chunks(cfg.n_bursts, chunk)
    if jobs <= 1 or len(ranges) == 1:
        parts = [_simulate_range(cfg, a, b) for a, b in ranges]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_simulate_range, cfg, a, b) for a, b in ranges]
            parts = [f.result() for f in futs]
    return tuple(np.concatenate(x) for x in zip(*parts))


def generate_dataset(cfg: ScenarioConfig, jobs: int = 1) -> BinDataset:
    """One labeled record per bin per burst, then label policy and optional balancing."""
    bins, floors, counts = simulate_bursts(cfg, jobs)
    k, n_prb, n_cs = bins.shape
    recs = np.zeros(k * n_prb, dtype=record_dtype(n_cs))
    recs["features"] = bins.reshape(-1, n_cs)
    recs["noise_floor"] = np.repeat(floors, n_prb)
    cnt = counts.reshape(-1)
    recs["count"] = np.minimum(cnt, np.iinfo(np.uint16).max)
    recs["burst"] = np.repeat(np.arange(k, dtype=np.uint32), n_prb)
    recs["preamble"] = np.tile(np.arange(n_prb, dtype=np.uint8), k)
    fp = cfg.fingerprint()
    key = (recs["burst"].astype(np.uint64) << np.uint64(8)) | recs["preamble"].astype(np.uint64)
    recs["fingerprint"] = _mix64(key ^ np.uint64(fp))
    top = 1 if cfg.task == "Detection" else cfg.n_max
    recs["label"] = np.minimum(cnt, top)
    if cfg.task == "Multiplicity" and cfg.overflow == "drop":
        recs = recs[cnt <= cfg.n_max]
    header = {
        "scenario": cfg.to_dict(),
        "fingerprint": f"{fp:016x}",
        "link_fingerprint": f"{cfg.link_fingerprint():016x}",
        "n_classes": cfg.n_classes,
        "tool_version": __version__,
    }
    ds = BinDataset(recs, header)
    if cfg.balance:
        ds = balance(ds, seed=cfg.seed)
    ds.header["n_records"] = len(ds)
    return ds


def balance(ds: BinDataset, seed: int = 0) -> BinDataset:
    """Subsample every class to the size of the rarest one (ordering preserved)."""
    labels = ds.labels
    per = np.bincount(labels, minlength=ds.n_classes)
    if per.min() == 0:
        raise DataError(f"cannot balance: class counts {per.tolist()} include an empty class")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA1A]))
    keep = [rng.choice(np.flatnonzero(labels == c), per.min(), replace=False) for c in range(ds.n_classes)]
    out = ds.subset(np.sort(np.concatenate(keep)))
    out.header["balanced"] = True
    return out


def split(ds: BinDataset, fraction: float, seed: int = 0):
    """Stratified seeded split into ``(first, rest)`` with `fraction` of each class first."""
    if not 0 < fraction < 1:
        raise DataError("split fraction must be in (0, 1)")
    if len(ds) == 0:
        raise DataError("cannot split an empty dataset")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B11]))
    labels = ds.labels
    first = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        take = int(round(fraction * idx.size))
        first.append(rng.permutation(idx)[:take])
    first = np.sort(np.concatenate(first))
    mask = np.zeros(len(ds), dtype=bool)
    mask[first] = True
    return ds.where(mask), ds.where(~mask)


def manifest(command: str, config: dict, seed: int | None = None) -> dict:
    return {"command": command, "config": config, "seed": seed, "tool_version": __version__}


def write_manifest(out_dir, command: str, config: dict, seed: int | None = None) -> str:
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest(command, config, seed), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
