"""Command-line surface: synth, prep, train, eval, predict, gradcheck.

Every command writes a machine-readable result.json into its output
directory and exits 0 only on full success. Exit codes: 2 for config
errors, 3 for data errors, 4 for numeric failures. No command writes
into its input directory.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .autodiff import Tensor
from .config import (RunConfig, apply_overrides, config_hash,
                     load_config_file, to_flat, write_config_file)
from .datasets import (Dataset, load_dataset, save_dataset, split_train_test,
                       synth_generate, tile_windows)
from .errors import ConfigError, DataError, Eeg2BoldError, NumericError
from .gradcheck import full_model_check, run_op_checks
from .model import ModelParams, load_model, model_forward, save_model
from .objective import evaluate
from .plots import save_loss_curves, save_roi_overlays
from .preprocess import (ChannelStats, FilterSpec, TimeSeries, apply_filter,
                         design_butterworth, hrf_shift_align,
                         rereference_average, resample, zscore_apply)
from .rng import Rng
from .training import train_run

GRADCHECK_TOL = 1e-4


# ---------------------------------------------------------------------------
# config resolution

def _collect_overrides(args) -> dict[str, str]:
    """Config file first, then --set pairs; later entries win."""
    overrides: dict[str, str] = {}
    if args.config:
        overrides.update(load_config_file(args.config))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _finish_run(run: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        run = apply_overrides(run, {"seed": str(args.seed)})
    if args.out is not None:
        run = apply_overrides(run, {"out_dir": args.out})
    run.validate()
    return run


def _resolve_run(args) -> RunConfig:
    """Precedence: defaults < config file < --set < --seed/--out."""
    return _finish_run(apply_overrides(RunConfig(), _collect_overrides(args)), args)


def _adopt_checkpoint_run(args, meta: dict, checkpoint) -> RunConfig:
    """Rebuild the RunConfig a checkpoint was trained with and overlay any
    explicit flags; the result must hash to the checkpoint's recorded value
    or the command refuses (a checkpoint only speaks for its own config)."""
    stored_flat = meta.get("run_config")
    stored_hash = meta.get("config_hash")
    if not isinstance(stored_flat, dict) or not stored_hash:
        raise DataError(f"{checkpoint}: checkpoint lacks its training run config")
    base = apply_overrides(RunConfig(), dict(stored_flat))
    if config_hash(base) != stored_hash:
        raise DataError(
            f"{checkpoint}: recorded config hash {stored_hash[:12]} does not "
            f"match the recorded config ({config_hash(base)[:12]}); refusing "
            f"a corrupt checkpoint"
        )
    run = _finish_run(apply_overrides(base, _collect_overrides(args)), args)
    if config_hash(run) != stored_hash:
        base_flat = to_flat(base)
        diff = [key for key, value in to_flat(run).items()
                if key != "out_dir" and base_flat[key] != value]
        raise ConfigError(
            f"requested config (hash {config_hash(run)[:12]}) does not match "
            f"checkpoint {checkpoint} (hash {stored_hash[:12]}); differing "
            f"keys: {', '.join(diff)}. Drop the overrides to adopt the "
            f"checkpoint's config, or retrain with the requested one."
        )
    return run


# ---------------------------------------------------------------------------
# shared helpers

def _ensure_out(run: RunConfig) -> Path:
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_result(out: Path, command: str, run: RunConfig,
                  artifacts: list[str], status: str = "ok", **extra) -> None:
    payload = {
        "command": command,
        "status": status,
        "config_hash": config_hash(run),
        "seed": run.seed,
        "out_dir": str(out),
        "artifacts": sorted(set(artifacts) | {"result.json"}),
    }
    payload.update(extra)
    (out / "result.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _reorder(ts: TimeSeries, want, what: str) -> TimeSeries:
    """Reorder channels to the checkpoint's layout; refuse set mismatches."""
    have = list(ts.labels)
    want = list(want)
    if have == want:
        return ts
    missing = [name for name in want if name not in have]
    extra = [name for name in have if name not in want]
    if missing or extra:
        raise DataError(
            f"{what} do not match the checkpoint: missing {missing}, "
            f"unexpected {extra}"
        )
    idx = [have.index(name) for name in want]
    return TimeSeries(ts.data[idx], ts.fs, want)


def _stats_from_meta(meta: dict) -> tuple[ChannelStats, ChannelStats]:
    norm = meta.get("norm")
    if not isinstance(norm, dict):
        raise DataError("checkpoint lacks normalization statistics")

    def stats(prefix: str) -> ChannelStats:
        try:
            mean = np.asarray(norm[f"{prefix}_mean"], dtype=np.float32)
            sd = np.asarray(norm[f"{prefix}_sd"], dtype=np.float32)
        except KeyError as exc:
            raise DataError(f"checkpoint norm block missing {exc}") from exc
        return ChannelStats(mean=mean, sd=sd)

    return stats("eeg"), stats("fmri")


def _forward_windows(params: ModelParams, windows, batch_size: int = 8) -> np.ndarray:
    """Eval-mode predictions concatenated along time: [n_rois, n*window]."""
    preds = []
    for start in range(0, len(windows), batch_size):
        chunk = windows[start:start + batch_size]
        xb = np.stack([w.eeg for w in chunk]).astype(np.float32)
        out = model_forward(xb, params, mode="eval")
        preds.append(np.concatenate(list(out.data), axis=-1))
    return np.concatenate(preds, axis=-1)


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args) -> int:
    run = _resolve_run(args)
    out = _ensure_out(run)
    d = synth_generate(run.synth, Rng(run.seed))
    save_dataset(d, out, encoding=args.encoding)
    write_config_file(run, out / "config.txt")
    ext = "f32" if args.encoding == "f32le" else "csv"
    _write_result(out, "synth", run,
                  ["meta.json", f"eeg.{ext}", f"fmri.{ext}", "config.txt"],
                  n_samples=d.n_samples, fs_hz=run.synth.fs,
                  encoding=args.encoding)
    print(f"synth: {d.n_samples} samples at {run.synth.fs:g} Hz -> {out}")
    return 0


# ---------------------------------------------------------------------------
# prep

@contextmanager
def _prep_step(name: str):
    try:
        yield
    except Eeg2BoldError as exc:
        raise type(exc)(f"prep step {name!r}: {exc}") from exc


def cmd_prep(args) -> int:
    run = _resolve_run(args)
    in_dir = Path(args.data)
    out = Path(run.out_dir)
    if out.resolve() == in_dir.resolve():
        raise ConfigError("prep refuses to write into its input directory")
    d = load_dataset(in_dir)
    p = run.prep
    manifest_path = in_dir / "prep_manifest.json"
    if manifest_path.is_file() and np.isclose(d.eeg.fs, p.target_fs_hz, rtol=1e-12):
        raise DataError(
            f"{in_dir} carries a prep manifest and is already at "
            f"{p.target_fs_hz:g} Hz; refusing to prepare it twice"
        )

    steps: list[dict] = []
    eeg = d.eeg
    if p.apply_bandpass:
        with _prep_step("bandpass"):
            spec = FilterSpec("bandpass", (p.bandpass_low_hz, p.bandpass_high_hz),
                              order=p.bandpass_order)
            eeg = apply_filter(eeg, design_butterworth(spec, eeg.fs))
        steps.append({"step": "bandpass",
                      "corners_hz": [p.bandpass_low_hz, p.bandpass_high_hz],
                      "order": p.bandpass_order})
    if p.apply_notch:
        for f0 in p.notch_hz:
            if f0 >= eeg.fs / 2.0:
                continue   # harmonics above Nyquist have nothing to remove
            with _prep_step(f"notch@{f0:g}Hz"):
                spec = FilterSpec("notch", (f0,), q=p.notch_q)
                eeg = apply_filter(eeg, design_butterworth(spec, eeg.fs))
            steps.append({"step": "notch", "freq_hz": f0, "q": p.notch_q})
    if p.rereference:
        with _prep_step("rereference"):
            eeg = rereference_average(eeg)
        steps.append({"step": "rereference", "scheme": "average"})
    with _prep_step("resample_eeg"):
        eeg = resample(eeg, p.target_fs_hz, anti_alias=p.anti_alias)
    steps.append({"step": "resample", "stream": "eeg",
                  "from_hz": d.eeg.fs, "to_hz": p.target_fs_hz,
                  "anti_alias": p.anti_alias})

    fmri = d.fmri
    if fmri is not None:
        with _prep_step("resample_fmri"):
            fmri = resample(fmri, p.target_fs_hz, anti_alias=p.anti_alias)
        steps.append({"step": "resample", "stream": "fmri",
                      "from_hz": d.fmri.fs, "to_hz": p.target_fs_hz,
                      "anti_alias": p.anti_alias})
        with _prep_step("hrf_shift_align"):
            eeg, fmri = hrf_shift_align(eeg, fmri, p.hrf_delay_s)
        steps.append({"step": "hrf_shift_align", "delay_s": p.hrf_delay_s})

    prepped = Dataset(eeg=eeg, fmri=fmri, subject_id=d.subject_id,
                      provenance=d.provenance)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(prepped, out, encoding=args.encoding)
    manifest = {
        "steps": steps,
        "target_fs_hz": p.target_fs_hz,
        "input_dir": str(in_dir),
        "input_n_samples": {"eeg": d.eeg.n_samples,
                            "fmri": None if d.fmri is None else d.fmri.n_samples},
        "output_n_samples": eeg.n_samples,
        "config_hash": config_hash(run),
    }
    (out / "prep_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    write_config_file(run, out / "config.txt")
    ext = "f32" if args.encoding == "f32le" else "csv"
    artifacts = ["meta.json", f"eeg.{ext}", "prep_manifest.json", "config.txt"]
    if fmri is not None:
        artifacts.append(f"fmri.{ext}")
    _write_result(out, "prep", run, artifacts,
                  n_samples=eeg.n_samples, steps=[s["step"] for s in steps])
    print(f"prep: {len(steps)} steps, {d.eeg.n_samples} -> {eeg.n_samples} "
          f"samples at {p.target_fs_hz:g} Hz -> {out}")
    return 0


# ---------------------------------------------------------------------------
# train

def cmd_train(args) -> int:
    run = _resolve_run(args)
    d = load_dataset(args.data)
    if d.fmri is None:
        raise DataError("training requires a dataset with fmri series")
    out = _ensure_out(run)

    result = train_run(d, run)
    report = result.report

    # out_dir is host state, not config identity (the hash excludes it), so
    # runs into different directories still produce identical checkpoints
    stored = {k: v for k, v in to_flat(run).items() if k != "out_dir"}
    meta = {
        "config_hash": config_hash(run),
        "seed": run.seed,
        "run_config": stored,
        "channel_labels": list(d.eeg.labels),
        "roi_labels": list(d.fmri.labels),
        "norm": {
            "eeg_mean": [float(v) for v in result.eeg_stats.mean],
            "eeg_sd": [float(v) for v in result.eeg_stats.sd],
            "fmri_mean": [float(v) for v in result.fmri_stats.mean],
            "fmri_sd": [float(v) for v in result.fmri_stats.sd],
        },
    }
    best = ModelParams(result.params.config,
                       {name: Tensor(arr.copy())
                        for name, arr in result.best_state.items()})
    save_model(out / "model_best.bin", best, meta)
    save_model(out / "model_final.bin", result.params, meta)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "timing.json").write_text(
        json.dumps({"wall_time_s": report.wall_time_s}, indent=2) + "\n",
        encoding="utf-8")
    save_loss_curves(out / "loss_curves.svg", report)
    write_config_file(run, out / "config.txt")

    artifacts = ["model_best.bin", "model_final.bin", "report.json",
                 "timing.json", "loss_curves.svg", "config.txt"]
    if report.aborted:
        _write_result(out, "train", run, artifacts, status="aborted",
                      aborted=report.aborted, epochs_run=report.epochs_run)
        print(f"train: aborted at {report.aborted}; last good parameters "
              f"were saved", file=sys.stderr)
        return 4
    extra = {"epochs_run": report.epochs_run, "best_epoch": report.best_epoch}
    if report.final_eval is not None:
        extra["final_mean_r"] = report.final_eval.mean_r
    _write_result(out, "train", run, artifacts, **extra)
    tail = (f", held-out mean r {report.final_eval.mean_r:.4f}"
            if report.final_eval is not None else "")
    print(f"train: {report.epochs_run} epochs in {report.wall_time_s:.1f}s, "
          f"best epoch {report.best_epoch}{tail} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    params, meta = load_model(args.checkpoint)
    run = _adopt_checkpoint_run(args, meta, args.checkpoint)
    out = _ensure_out(run)
    d = load_dataset(args.data)
    if d.fmri is None:
        raise DataError("eval requires a dataset with fmri series")
    eeg = _reorder(d.eeg, meta.get("channel_labels", d.eeg.labels), "eeg channels")
    fmri = _reorder(d.fmri, meta.get("roi_labels", d.fmri.labels), "rois")
    d = Dataset(eeg=eeg, fmri=fmri, subject_id=d.subject_id,
                provenance=d.provenance)
    d.validate_aligned()
    if not np.isclose(d.eeg.fs, run.prep.target_fs_hz, rtol=1e-9):
        raise DataError(
            f"dataset is at {d.eeg.fs:g} Hz but the checkpoint was trained at "
            f"{run.prep.target_fs_hz:g} Hz; run prep first"
        )

    _, test_seg = split_train_test(d, run.split.train_fraction)
    window = params.config.window_len_samples
    if test_seg.n_samples < window:
        raise DataError(
            f"test segment has {test_seg.n_samples} samples; "
            f"one window needs {window}"
        )
    eeg_stats, fmri_stats = _stats_from_meta(meta)
    test_z = Dataset(eeg=zscore_apply(test_seg.eeg, eeg_stats),
                     fmri=zscore_apply(test_seg.fmri, fmri_stats),
                     subject_id=d.subject_id, provenance=d.provenance)
    windows, dropped = tile_windows(test_z, window)
    roi_labels = list(meta.get("roi_labels", d.fmri.labels))
    report, truth, pred = evaluate(params, windows, roi_labels=roi_labels,
                                   config_hash=config_hash(run),
                                   return_series=True)

    (out / "eval_report.json").write_text(report.to_json(), encoding="utf-8")
    overlay_paths = save_roi_overlays(out, truth, pred, test_seg.eeg.fs,
                                      roi_labels)
    artifacts = ["eval_report.json"] + [p.name for p in overlay_paths]
    _write_result(out, "eval", run, artifacts, mean_r=report.mean_r,
                  sd_r=report.sd_r, below_baseline=report.below_baseline,
                  n_test_samples=report.n_test_samples,
                  n_dropped_samples=dropped)
    for label in roi_labels:
        print(f"  {label:<12} r = {report.per_roi_r[label]:+.4f}")
    flag = "  (below baseline)" if report.below_baseline else ""
    print(f"eval: mean r {report.mean_r:+.4f} over {len(windows)} windows "
          f"({report.n_test_samples} samples, {dropped} dropped){flag} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# predict

def cmd_predict(args) -> int:
    params, meta = load_model(args.checkpoint)
    run = _adopt_checkpoint_run(args, meta, args.checkpoint)
    out = _ensure_out(run)
    d = load_dataset(args.data)
    eeg = _reorder(d.eeg, meta.get("channel_labels", d.eeg.labels), "eeg channels")
    if not np.isclose(eeg.fs, run.prep.target_fs_hz, rtol=1e-9):
        raise DataError(
            f"dataset is at {eeg.fs:g} Hz but the checkpoint was trained at "
            f"{run.prep.target_fs_hz:g} Hz; run prep first"
        )
    eeg_stats, fmri_stats = _stats_from_meta(meta)
    eeg_z = zscore_apply(eeg, eeg_stats)
    window = params.config.window_len_samples
    windows, dropped = tile_windows(
        Dataset(eeg=eeg_z, fmri=None, subject_id=d.subject_id,
                provenance=d.provenance),
        window, require_fmri=False)
    if not windows:
        raise DataError(
            f"input has {eeg.n_samples} samples; one window needs {window}")

    pred_z = _forward_windows(params, windows)
    # back to the training data's units
    pred = (pred_z * fmri_stats.sd[:, None].astype(np.float64)
            + fmri_stats.mean[:, None].astype(np.float64))
    roi_labels = list(meta.get("roi_labels",
                               [f"roi{j:02d}" for j in range(pred.shape[0])]))

    csv_path = out / "predictions.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(roi_labels) + "\n")
        np.savetxt(fh, pred.T, fmt="%.9g", delimiter=",")
    _write_result(out, "predict", run, ["predictions.csv"],
                  n_windows=len(windows), n_predicted_samples=pred.shape[1],
                  n_dropped_samples=dropped, rois=roi_labels)
    print(f"predict: {len(windows)} windows, {pred.shape[1]} samples "
          f"({dropped} trailing samples dropped) -> {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck

def cmd_gradcheck(args) -> int:
    run = _resolve_run(args)
    out = _ensure_out(run)
    t0 = time.monotonic()
    ops = run_op_checks(tuple(range(run.seed, run.seed + 5)))
    per_param = full_model_check(run.seed)
    worst_param = max(per_param, key=per_param.get)
    full_max = float(per_param[worst_param])
    full_pass = full_max <= GRADCHECK_TOL
    passed = all(o["passed"] for o in ops) and full_pass
    body = {
        "ops": ops,
        "full_model": {"max_rel_err": full_max, "worst_parameter": worst_param,
                       "n_parameters": len(per_param), "passed": full_pass},
        "tolerance": GRADCHECK_TOL,
        "passed": passed,
        "runtime_s": time.monotonic() - t0,
    }
    (out / "gradcheck.json").write_text(
        json.dumps(body, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    for o in ops:
        print(f"  {o['op']:<18} max_rel_err {o['max_rel_err']:.3e} "
              f"{'pass' if o['passed'] else 'FAIL'}")
    print(f"  {'full_model':<18} max_rel_err {full_max:.3e} "
          f"{'pass' if full_pass else 'FAIL'} (worst: {worst_param})")
    _write_result(out, "gradcheck", run, ["gradcheck.json"],
                  status="ok" if passed else "failed", passed=passed)
    if not passed:
        failures = [o["op"] for o in ops if not o["passed"]]
        if not full_pass:
            failures.append(f"full_model({worst_param})")
        print(f"gradcheck failed above {GRADCHECK_TOL:g}: "
              f"{', '.join(failures)}", file=sys.stderr)
        return 4
    print(f"gradcheck: all checks within {GRADCHECK_TOL:g} "
          f"({body['runtime_s']:.1f}s)")
    return 0


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="flat key = value config file")
    common.add_argument("--seed", type=int, default=None, metavar="N",
                        help="override the run seed")
    common.add_argument("--out", default=None, metavar="DIR",
                        help="output directory (default runs/out)")
    common.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override one dotted config key (repeatable)")

    parser = argparse.ArgumentParser(
        prog="eeg2bold",
        description="EEG to fMRI translation: synthesis, preprocessing, "
                    "training, evaluation, prediction, gradient checking.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic eeg+fmri dataset")
    p.add_argument("--encoding", choices=("f32le", "csv"), default="f32le")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prep", parents=[common],
                       help="filter, re-reference, resample, and align")
    p.add_argument("data", help="input dataset directory")
    p.add_argument("--encoding", choices=("f32le", "csv"), default="f32le")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", parents=[common],
                       help="train the translation model")
    p.add_argument("data", help="prepared dataset directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="score a checkpoint on the held-out segment")
    p.add_argument("checkpoint", help="model checkpoint file")
    p.add_argument("data", help="dataset directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common],
                       help="predict fmri series from eeg")
    p.add_argument("checkpoint", help="model checkpoint file")
    p.add_argument("data", help="dataset directory (eeg-only is fine)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference check of the autodiff core")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
