"""End-to-end experiment orchestration shared by the CLI and the acceptance tests.

Every dataset seed is derived from the run seed and the dataset's role, so
each output is reproducible on its own and independent of execution order.
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import evaluation as ev
from .channel import ChannelModel
from .datagen import ScenarioConfig, _hash64, generate_dataset, write_manifest
from .errors import ConfigError
from .models import Classifier, TrainConfig, fit_logistic, fit_neural
from .rach import SUMMARY_COLUMNS, paired_runs, sign_test
from .threshold import calibrate
from .traffic import TrafficModel
from .zc import CellConfig

DETECTION_SNRS = (-18.0, -17.0, -16.0, -15.0, -14.0, -13.0, -12.0)
MULTIPLICITY_SNRS = (-20.0, -16.0)
CHANNELS = ("AWGN", "ETU70")


def derive_seed(seed: int, *keys) -> int:
    """Stable 63-bit seed for one role of one experiment."""
    return _hash64([int(seed), *[str(k) for k in keys]]) >> 1


@dataclass(frozen=True)
class ReproConfig:
    """Monte Carlo sizes of a full reproduction at ``scale=1``.

    Burst counts are multiplied by `scale`; each has a floor that keeps
    calibration and balancing well defined at tiny scales.
    """

    scale: float = 1.0
    seed: int = 0
    detection_snrs: tuple = DETECTION_SNRS
    multiplicity_snrs: tuple = MULTIPLICITY_SNRS
    channels: tuple = CHANNELS
    detection_train_bursts: int = 20000
    detection_test_bursts: int = 10000
    calibration_bursts: int = 800
    noise_test_bursts: int = 800
    multiplicity_train_bursts: int = 20000
    multiplicity_test_bursts: int = 1000
    n_ue: int = 120
    target_far: float = 1e-3
    rach_runs: int = 20
    rach_snr: float = -16.0
    rach_channel: str = "AWGN"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError("scale must be positive")
        if self.rach_runs < 1:
            raise ConfigError("rach_runs must be >= 1")

    def bursts(self, name: str, need_bins: int = 0, n_prb: int = 64) -> int:
        n = max(1, int(round(getattr(self, name) * self.scale)))
        return max(n, math.ceil(need_bins / n_prb))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        for k in ("detection_snrs", "multiplicity_snrs", "channels"):
            d[k] = list(d[k])
        return d


# --- dataset builders --------------------------------------------------------


def detection_scenarios(channel: str, snr: float, cfg: ReproConfig, cell: CellConfig | None = None) -> dict:
    """Training, single-UE test and the two noise-only scenarios for one link point."""
    cell = cell or CellConfig()
    link = dict(cell=cell, channel=ChannelModel(channel, snr), task="Detection")
    tag = (channel, snr)
    # calibration needs 10/target bins and the held-out false alarm set a few times more
    need_cal = math.ceil(10.0 / cfg.target_far) + cell.n_prb
    return {
        "train": ScenarioConfig(**link, traffic=TrafficModel.fixed_single(),
                                n_bursts=cfg.bursts("detection_train_bursts"),
                                seed=derive_seed(cfg.seed, "det-train", *tag), name="det-train"),
        "single": ScenarioConfig(**link, traffic=TrafficModel.fixed_single(),
                                 n_bursts=cfg.bursts("detection_test_bursts"),
                                 seed=derive_seed(cfg.seed, "det-single", *tag), name="det-single"),
        "noise_cal": ScenarioConfig(**link, traffic=TrafficModel.fixed_count(0),
                                    n_bursts=cfg.bursts("calibration_bursts", need_cal, cell.n_prb),
                                    seed=derive_seed(cfg.seed, "det-cal", *tag), name="det-noise-cal"),
        "noise_test": ScenarioConfig(**link, traffic=TrafficModel.fixed_count(0),
                                     n_bursts=cfg.bursts("noise_test_bursts", need_cal, cell.n_prb),
                                     seed=derive_seed(cfg.seed, "det-noise", *tag), name="det-noise-test"),
    }


def multiplicity_scenarios(channel: str, snr: float, cfg: ReproConfig, cell: CellConfig | None = None) -> dict:
    """Balanced training and natural-mix test scenarios for one link point."""
    cell = cell or CellConfig()
    link = dict(cell=cell, channel=ChannelModel(channel, snr), task="Multiplicity",
                traffic=TrafficModel.fixed_count(cfg.n_ue))
    tag = (channel, snr)
    return {
        "train": ScenarioConfig(**link, n_bursts=cfg.bursts("multiplicity_train_bursts"), balance=True,
                                seed=derive_seed(cfg.seed, "mul-train", *tag), name="mul-train"),
        "test": ScenarioConfig(**link, n_bursts=cfg.bursts("multiplicity_test_bursts"),
                               seed=derive_seed(cfg.seed, "mul-test", *tag), name="mul-test"),
    }


def build(scenarios: dict, jobs: int = 1) -> dict:
    return {k: generate_dataset(s, jobs=jobs) for k, s in scenarios.items()}


def train_pair(train_ds, cfg: ReproConfig, tag: tuple) -> dict:
    """LR and NN fitted to one training set, each with its own derived seed."""
    out = {}
    for name, fit in (("lr", fit_logistic), ("nn", fit_neural)):
        tcfg = TrainConfig.from_dict({**cfg.train.to_dict(), "seed": derive_seed(cfg.seed, "fit", name, *tag)})
        model, norm, hist = fit(train_ds.features, train_ds.labels, train_ds.n_classes, tcfg)
        meta = {
            "scenario": train_ds.header["scenario"],
            "seed": tcfg.seed,
            "epochs": len(hist.val_loss),
            "best_epoch": hist.best_epoch,
            "train": tcfg.to_dict(),
        }
        out[name] = Classifier(model, norm, meta)
    return out


# --- experiment stages -------------------------------------------------------


@dataclass
class DetectionPoint:
    channel: str
    snr_db: float
    detectors: dict
    reports: dict


def run_detection_point(channel: str, snr: float, cfg: ReproConfig, jobs: int = 1) -> DetectionPoint:
    ds = build(detection_scenarios(channel, snr, cfg), jobs)
    dets = {"threshold": Classifier(calibrate(ds["noise_cal"], cfg.target_far),
                                    metadata={"scenario": ds["noise_cal"].header["scenario"]})}
    dets.update(train_pair(ds["train"], cfg, ("det", channel, snr)))
    reports = {name: ev.eval_detection(c, ds["single"], ds["noise_test"]) for name, c in dets.items()}
    return DetectionPoint(channel, snr, dets, reports)


@dataclass
class MultiplicityPoint:
    channel: str
    snr_db: float
    classifiers: dict
    reports: dict


def run_multiplicity_point(channel: str, snr: float, cfg: ReproConfig, jobs: int = 1) -> MultiplicityPoint:
    ds = build(multiplicity_scenarios(channel, snr, cfg), jobs)
    clfs = train_pair(ds["train"], cfg, ("mul", channel, snr))
    reports = {name: ev.eval_multiplicity(c, ds["test"]) for name, c in clfs.items()}
    return MultiplicityPoint(channel, snr, clfs, reports)


def rach_confusion(matrix: np.ndarray) -> np.ndarray:
    """Make a measured confusion matrix usable by the simulator: empty rows become identity."""
    m = np.array(matrix, dtype=float)
    for i in range(m.shape[0]):
        s = m[i].sum()
        if s <= 0:
            m[i] = 0.0
            m[i, i] = 1.0
        else:
            m[i] /= s
    return m


def run_rach(confusion: np.ndarray | None, cfg: ReproConfig, cell: CellConfig | None = None, **kw) -> list[dict]:
    cell = cell or CellConfig()
    conf = None if confusion is None else rach_confusion(confusion)
    return paired_runs(cfg.rach_runs, TrafficModel.fixed_count(cfg.n_ue), cell, conf,
                       seed=derive_seed(cfg.seed, "rach") % 2**31, **kw)


def rach_sign_test(rows: list[dict], metric: str = "mean_delay") -> tuple[int, int, float]:
    aware = np.array([r[metric] for r in rows if r["policy"] == "MultiplicityAware"])
    std = np.array([r[metric] for r in rows if r["policy"] == "Standard"])
    return sign_test(aware, std)


# --- full reproduction -------------------------------------------------------


def reproduce(out_dir: str, cfg: ReproConfig, jobs: int = 1, save_models: bool = True, log=print) -> dict:
    """Run every stage and write the CSV outputs plus a manifest into `out_dir`."""
    os.makedirs(out_dir, exist_ok=True)
    model_dir = os.path.join(out_dir, "models")
    if save_models:
        os.makedirs(model_dir, exist_ok=True)

    sweep, det_points = [], []
    for ch in cfg.channels:
        for snr in cfg.detection_snrs:
            log(f"detection {ch} {snr:+.1f} dB")
            p = run_detection_point(ch, snr, cfg, jobs)
            det_points.append(p)
            for name, rep in p.reports.items():
                sweep += ev.sweep_rows(snr, ch, name, rep)
            if save_models:
                for name, c in p.detectors.items():
                    c.save(os.path.join(model_dir, f"det_{ch}_{snr:+.1f}_{name}.prm"))
    ev.write_csv(os.path.join(out_dir, "detection_sweep.csv"), ev.SWEEP_COLUMNS, sweep)

    mult, conf, mul_points = [], [], []
    for ch in cfg.channels:
        for snr in cfg.multiplicity_snrs:
            log(f"multiplicity {ch} {snr:+.1f} dB")
            p = run_multiplicity_point(ch, snr, cfg, jobs)
            mul_points.append(p)
            for name, rep in p.reports.items():
                mult += ev.multiplicity_rows(snr, ch, name, rep)
                conf += ev.confusion_rows(snr, ch, name, rep)
            if save_models:
                for name, c in p.classifiers.items():
                    c.save(os.path.join(model_dir, f"mul_{ch}_{snr:+.1f}_{name}.prm"))
    ev.write_csv(os.path.join(out_dir, "multiplicity_report.csv"), ev.MULTIPLICITY_COLUMNS, mult)
    ev.write_csv(os.path.join(out_dir, "confusion.csv"), ev.CONFUSION_COLUMNS, conf)

    matrix = None
    for p in mul_points:
        if p.channel == cfg.rach_channel and p.snr_db == cfg.rach_snr:
            matrix = p.reports["nn"].confusion
    log("rach" + (" (oracle)" if matrix is None else " (nn confusion)"))
    rach_rows = run_rach(matrix, cfg)
    ev.write_csv(os.path.join(out_dir, "rach_summary.csv"), SUMMARY_COLUMNS, rach_rows)
    oracle_rows = run_rach(None, cfg)
    ev.write_csv(os.path.join(out_dir, "rach_summary_oracle.csv"), SUMMARY_COLUMNS, oracle_rows)

    write_manifest(out_dir, "paper-repro", cfg.to_dict(), cfg.seed)
    return {"detection": det_points, "multiplicity": mul_points, "rach": rach_rows, "rach_oracle": oracle_rows}
