"""Command-line entry point: ``prachml <command> [options]``.

Exit codes: 0 success, 2 validation failure (bad config, bad input files,
failed acceptance assertion), 1 any other runtime error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np
import yaml

from . import __version__
from . import evaluation as ev
from .datagen import BinDataset, generate_dataset, load_scenario, write_manifest
from .errors import (
    CalibrationError, ConfigError, DataError, EvaluationError, InferenceError, ModelLoadError, PrachError,
)
from .models import Classifier, TrainConfig, fit_logistic, fit_neural
from .pipeline import ReproConfig, reproduce, rach_confusion, rach_sign_test
from .rach import POLICIES, SUMMARY_COLUMNS, RachPolicy, paired_runs
from .threshold import calibrate
from .traffic import TrafficModel
from .zc import CellConfig

log = logging.getLogger("prachml")

OUTPUT_ROOT_ENV = "PRACHML_OUTPUT_ROOT"


class AcceptanceFailure(PrachError):
    pass


def output_dir(path: str) -> str:
    """Resolve ``--out`` against the output root override, then create it."""
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        path = os.path.join(root, path)
    os.makedirs(path, exist_ok=True)
    return path


def _load_yaml(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            d = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path} must hold a mapping")
    return d


def _load_dataset(path) -> BinDataset:
    try:
        return BinDataset.load(path)
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from None


def _load_model(path) -> Classifier:
    try:
        return Classifier.load(path)
    except OSError as exc:
        raise ModelLoadError(f"cannot read model {path}: {exc}") from None


# --- subcommands -------------------------------------------------------------


def cmd_gen_dataset(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.bursts is not None:
        cfg = cfg.replace(n_bursts=args.bursts)
    out = output_dir(args.out)
    ds = generate_dataset(cfg, jobs=args.jobs)
    ds.save(os.path.join(out, "dataset.prds"))
    if args.csv:
        ds.to_csv(os.path.join(out, "dataset.csv"))
    write_manifest(out, "gen-dataset", {"scenario": cfg.to_dict()}, cfg.seed)
    log.info("wrote %d bins to %s", len(ds), out)
    return 0


def cmd_calibrate(args) -> int:
    noise = _load_dataset(args.noise)
    if np.any(noise.labels != 0):
        raise DataError("calibration set must be noise-only (all labels 0)")
    det = calibrate(noise, args.target_far)
    out = output_dir(args.out)
    Classifier(det, metadata={"scenario": noise.header["scenario"]}).save(os.path.join(out, "threshold.prm"))
    write_manifest(out, "calibrate-threshold",
                   {"noise": os.path.abspath(args.noise), "noise_fingerprint": noise.fingerprint,
                    "target_far": args.target_far, "alpha": det.alpha}, None)
    print(f"alpha={det.alpha:.3f}")
    return 0


def cmd_train(args) -> int:
    ds = _load_dataset(args.data)
    tcfg = TrainConfig.from_dict(_load_yaml(args.config))
    if args.seed is not None:
        tcfg = TrainConfig.from_dict({**tcfg.to_dict(), "seed": args.seed})
    fit = fit_logistic if args.kind == "lr" else fit_neural
    model, norm, hist = fit(ds.features, ds.labels, ds.n_classes, tcfg)
    meta = {"scenario": ds.header["scenario"], "seed": tcfg.seed, "epochs": len(hist.val_loss),
            "best_epoch": hist.best_epoch, "train": tcfg.to_dict()}
    out = output_dir(args.out)
    Classifier(model, norm, meta).save(os.path.join(out, "model.prm"))
    write_manifest(out, "train", {"data": os.path.abspath(args.data), "data_fingerprint": ds.fingerprint,
                                  "kind": args.kind, "train": tcfg.to_dict()}, tcfg.seed)
    print(f"epochs={len(hist.val_loss)} best_epoch={hist.best_epoch} val_loss={min(hist.val_loss):.6f}")
    return 0


def _detector_family(clf: Classifier) -> str:
    return {"threshold": "threshold", "logistic": "lr", "neural": "nn"}[clf.kind]


def detection_checks(family: str, channel: str, snr: float, rep: ev.DetectionReport) -> list[tuple[str, bool]]:
    """Bounds applicable to one detection evaluation, as ``(name, passed)``."""
    md, fa = rep.missed_detection.value, rep.false_alarm.value
    checks = [(f"false_alarm<=1.5e-3 ({family})", fa <= 1.5e-3)]
    if channel == "AWGN" and snr == -16.0:
        if family == "nn":
            checks.append(("nn missed_detection<=1e-2 at -16 dB AWGN", md <= 1e-2))
        if family == "lr":
            checks.append(("lr missed_detection in [1e-2, 1.5e-1] at -16 dB AWGN", 1e-2 <= md <= 1.5e-1))
    return checks


def multiplicity_checks(family: str, channel: str, snr: float, rep: ev.MultiplicityReport) -> list[tuple[str, bool]]:
    checks = []
    if channel != "AWGN" or snr != -16.0:
        return checks
    diag = np.diag(rep.confusion)
    if family == "nn":
        checks += [
            ("nn accuracy>=0.90", rep.accuracy >= 0.90),
            ("nn P(offset<=1)>=0.99", rep.within(1) >= 0.99),
            ("nn confusion diagonal>=0.90 in every row", bool(np.all(diag >= 0.90))),
        ]
    elif family == "lr":
        checks += [
            ("lr accuracy in [0.70, 0.90]", 0.70 <= rep.accuracy <= 0.90),
            ("lr row-0 diagonal>=0.99", diag[0] >= 0.99),
            ("lr above-diagonal mass > below-diagonal mass", rep.above_diagonal > rep.below_diagonal),
        ]
    return checks


def cmd_evaluate(args) -> int:
    clf = _load_model(args.model)
    test = _load_dataset(args.test)
    family = _detector_family(clf)
    channel = test.scenario.channel.kind
    snr = test.scenario.channel.snr_db
    out = output_dir(args.out)
    if clf.n_classes == 2:
        if args.noise is None:
            raise ConfigError("detection evaluation needs --noise (a noise-only dataset)")
        noise = _load_dataset(args.noise)
        rep = ev.eval_detection(clf, test, noise)
        ev.write_csv(os.path.join(out, "detection_sweep.csv"), ev.SWEEP_COLUMNS,
                     ev.sweep_rows(snr, channel, family, rep))
        checks = detection_checks(family, channel, snr, rep)
        print(f"missed_detection={rep.missed_detection.value:.6g} "
              f"[{rep.missed_detection.low:.3g}, {rep.missed_detection.high:.3g}] n={rep.missed_detection.n}")
        print(f"false_alarm={rep.false_alarm.value:.6g} "
              f"[{rep.false_alarm.low:.3g}, {rep.false_alarm.high:.3g}] n={rep.false_alarm.n}")
    else:
        rep = ev.eval_multiplicity(clf, test)
        ev.write_csv(os.path.join(out, "multiplicity_report.csv"), ev.MULTIPLICITY_COLUMNS,
                     ev.multiplicity_rows(snr, channel, family, rep))
        ev.write_csv(os.path.join(out, "confusion.csv"), ev.CONFUSION_COLUMNS,
                     ev.confusion_rows(snr, channel, family, rep))
        checks = multiplicity_checks(family, channel, snr, rep)
        print(f"accuracy={rep.accuracy:.6g} offsets={np.round(rep.offset_probs, 6).tolist()} n={rep.n}")
    write_manifest(out, "evaluate", {"model": os.path.abspath(args.model), "test": os.path.abspath(args.test),
                                     "noise": args.noise and os.path.abspath(args.noise),
                                     "test_fingerprint": test.fingerprint}, None)
    if args.assert_acceptance:
        if not checks:
            print("no acceptance bounds apply to this scenario")
        for name, ok in checks:
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        failed = [name for name, ok in checks if not ok]
        if failed:
            raise AcceptanceFailure("acceptance failed: " + "; ".join(failed))
    return 0


def _repro_config(args, **over) -> ReproConfig:
    d = _load_yaml(getattr(args, "config", None))
    if "train" in d:
        d["train"] = TrainConfig.from_dict(d["train"])
    for k in ("detection_snrs", "multiplicity_snrs", "channels"):
        if k in d:
            d[k] = tuple(d[k])
    d.update({k: v for k, v in over.items() if v is not None})
    unknown = set(d) - set(ReproConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    return ReproConfig(**d)


def cmd_sweep_snr(args) -> int:
    from .pipeline import run_detection_point

    template = load_scenario(args.scenario)
    cfg = _repro_config(args, scale=args.scale, seed=args.seed)
    snrs = tuple(args.snrs) if args.snrs else cfg.detection_snrs
    out = output_dir(args.out)
    rows = []
    for snr in snrs:
        p = run_detection_point(template.channel.kind, float(snr), cfg, args.jobs)
        for name, rep in p.reports.items():
            rows += ev.sweep_rows(float(snr), template.channel.kind, name, rep)
    ev.write_csv(os.path.join(out, "detection_sweep.csv"), ev.SWEEP_COLUMNS, rows)
    write_manifest(out, "sweep-snr", {"template": template.to_dict(), "snrs": [float(s) for s in snrs],
                                      "repro": cfg.to_dict()}, cfg.seed)
    return 0


def cmd_confusion(args) -> int:
    from .pipeline import run_multiplicity_point

    template = load_scenario(args.scenario)
    cfg = _repro_config(args, scale=args.scale, seed=args.seed)
    snrs = tuple(args.snrs) if args.snrs else cfg.multiplicity_snrs
    out = output_dir(args.out)
    mult, conf = [], []
    for snr in snrs:
        p = run_multiplicity_point(template.channel.kind, float(snr), cfg, args.jobs)
        for name, rep in p.reports.items():
            mult += ev.multiplicity_rows(float(snr), template.channel.kind, name, rep)
            conf += ev.confusion_rows(float(snr), template.channel.kind, name, rep)
    ev.write_csv(os.path.join(out, "multiplicity_report.csv"), ev.MULTIPLICITY_COLUMNS, mult)
    ev.write_csv(os.path.join(out, "confusion.csv"), ev.CONFUSION_COLUMNS, conf)
    write_manifest(out, "confusion", {"template": template.to_dict(), "snrs": [float(s) for s in snrs],
                                      "repro": cfg.to_dict()}, cfg.seed)
    return 0


def cmd_rach_sim(args) -> int:
    matrix = None
    if args.confusion:
        matrix = rach_confusion(ev.read_confusion_csv(args.confusion, args.detector, args.snr, args.channel))
        RachPolicy("Standard", matrix)  # validates
    traffic = TrafficModel.fixed_count(args.ues) if args.traffic == "burst" else TrafficModel.beta_burst()
    rows = paired_runs(args.runs, traffic, CellConfig(), matrix, opportunities=args.opportunities,
                       seed=args.seed, backoff=args.backoff, max_attempts=args.max_attempts,
                       contention_timer=args.contention_timer)
    out = output_dir(args.out)
    ev.write_csv(os.path.join(out, "rach_summary.csv"), SUMMARY_COLUMNS, rows)
    wins, n, p = rach_sign_test(rows)
    print(f"sign test (MultiplicityAware mean delay < Standard): {wins}/{n} wins, p={p:.3g}")
    write_manifest(out, "rach-sim", {
        "confusion": args.confusion and os.path.abspath(args.confusion), "detector": args.detector,
        "snr_db": args.snr, "channel": args.channel, "matrix": None if matrix is None else matrix.tolist(),
        "traffic": traffic.to_dict(), "runs": args.runs, "opportunities": args.opportunities,
        "backoff": args.backoff, "max_attempts": args.max_attempts,
        "contention_timer": args.contention_timer, "policies": list(POLICIES)}, args.seed)
    return 0


def cmd_repro(args) -> int:
    cfg = _repro_config(args, scale=args.scale, seed=args.seed)
    out = output_dir(args.out)
    reproduce(out, cfg, jobs=args.jobs, save_models=not args.no_models, log=log.info)
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prachml", description="PRACH preamble detection and multiplicity estimation")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--out", default=name, help=f"output directory (relative to ${OUTPUT_ROOT_ENV} if set)")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
        sp.set_defaults(func=fn)
        return sp

    sp = add("gen-dataset", cmd_gen_dataset, "simulate bursts and write a labeled bin dataset")
    sp.add_argument("--scenario", required=True, help="scenario YAML file")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--bursts", type=int, help="override n_bursts")
    sp.add_argument("--csv", action="store_true", help="also write dataset.csv")

    sp = add("calibrate-threshold", cmd_calibrate, "calibrate the threshold detector on noise-only bins")
    sp.add_argument("--noise", required=True, help="noise-only dataset file")
    sp.add_argument("--target-far", type=float, default=1e-3)

    sp = add("train", cmd_train, "train a logistic or neural classifier")
    sp.add_argument("--data", required=True, help="training dataset file")
    sp.add_argument("--kind", choices=("lr", "nn"), required=True)
    sp.add_argument("--config", help="training YAML (keys of TrainConfig)")
    sp.add_argument("--seed", type=int)

    sp = add("evaluate", cmd_evaluate, "evaluate a model on a test dataset")
    sp.add_argument("--model", required=True)
    sp.add_argument("--test", required=True, help="single-UE set (detection) or natural-mix set (multiplicity)")
    sp.add_argument("--noise", help="noise-only set, required for detection models")
    sp.add_argument("--assert-acceptance", action="store_true", help="exit 2 if an applicable bound fails")

    for name, fn, help_ in (("sweep-snr", cmd_sweep_snr, "detection sweep over SNR for all detectors"),
                            ("confusion", cmd_confusion, "multiplicity offsets and confusion matrices")):
        sp = add(name, fn, help_)
        sp.add_argument("--scenario", required=True, help="template scenario YAML (channel is used)")
        sp.add_argument("--snrs", type=float, nargs="+")
        sp.add_argument("--scale", type=float, default=1.0)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="YAML overriding experiment sizes")

    sp = add("rach-sim", cmd_rach_sim, "compare Standard and MultiplicityAware RACH policies")
    sp.add_argument("--confusion", help="confusion.csv; omit for a perfect oracle")
    sp.add_argument("--detector", default="nn")
    sp.add_argument("--snr", type=float, default=-16.0)
    sp.add_argument("--channel", default="AWGN")
    sp.add_argument("--runs", type=int, default=20)
    sp.add_argument("--ues", type=int, default=120)
    sp.add_argument("--traffic", choices=("burst", "beta"), default="burst")
    sp.add_argument("--opportunities", type=int, default=1)
    sp.add_argument("--backoff", type=int, default=10)
    sp.add_argument("--max-attempts", type=int, default=10)
    sp.add_argument("--contention-timer", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("paper-repro", cmd_repro, "run every stage and write all CSV outputs")
    sp.add_argument("--scale", type=float, default=1.0, help="multiplies every Monte Carlo count")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--config", help="YAML overriding experiment sizes")
    sp.add_argument("--no-models", action="store_true", help="do not save trained models")
    return p


VALIDATION_ERRORS = (
    ConfigError, DataError, ModelLoadError, EvaluationError, CalibrationError, InferenceError,
    AcceptanceFailure, FileNotFoundError,
)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
