"""Command-line entry point: ``handcontact <command> [options]``.

Every command writes its artefacts under ``--out`` together with a
``run.json`` provenance record.  Failures print one line of the form
``error<TAB><kind><TAB><message>`` to stderr and exit non-zero.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import subprocess
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, required_paths
from .experiment import MODES, Split, featurize, fixed_predictions, iou_predictions, predict_split, run_mode
from .gplc import HISTORY_COLUMNS, GplcConfig
from .gradcheck import gradient_check
from .metrics import METRIC_COLUMNS, evaluate
from .motionlabel import PseudoLabelConfig, generate_pseudolabels
from .network import ModelConfig, load_checkpoint, save_checkpoint
from .parallel import map_ordered
from .seqmodel import TrainConfig, format_float, write_curve
from .synthkit import CorruptionSpec, ScenarioSpec, generate_corpus, generate_track, load_spec_file
from .trackdata import list_track_dirs, load_labels, load_track, save_labels, save_track, track_checksum

log = logging.getLogger("handcontact")

TRUTH_FILE = "truth.txt"
LABEL_FILE = "labels.txt"


class CliError(Exception):
    def __init__(self, kind, message, code=1):
        super().__init__(message)
        self.kind = kind
        self.code = code


# ---------------------------------------------------------------- helpers


def _git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=10,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_provenance(out: Path, command, args, config=None, started=None, extra=None):
    record = {
        "command": command,
        "argv": sys.argv[1:],
        "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
                 if k != "func"},
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "git": _git_describe(),
        "wall_time_s": None if started is None else round(time.time() - started, 3),
    }
    if extra:
        record.update(extra)
    (out / "run.json").write_text(json.dumps(record, indent=1, sort_keys=True, default=str) + "\n")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return ExperimentConfig()


def _load_split(root, label_file=LABEL_FILE, seed=0, threads=1, pseudo_cfg=None, need_labels=True) -> Split:
    root = Path(root)
    if not root.is_dir():
        raise CliError("MissingPath", f"{root} is not a directory")
    dirs = list_track_dirs(root)
    if not dirs:
        raise CliError("EmptyDataset", f"no track directories under {root}")
    tracks, labels, truth = [], [], []
    for d in dirs:
        tr = load_track(d)
        lab_path = d / label_file
        if lab_path.is_file():
            labels.append(load_labels(lab_path))
        elif need_labels:
            raise CliError("MissingLabels", f"{lab_path} not found")
        else:
            labels.append(np.full(len(tr), -1, dtype=np.int8))
        truth_path = d / TRUTH_FILE
        truth.append(load_labels(truth_path) if truth_path.is_file() else None)
        tracks.append(tr)
    X = featurize(tracks, seed, threads, pseudo_cfg)
    has_truth = all(t is not None for t in truth)
    return Split([t.id for t in tracks], X, labels, truth if has_truth else None, tracks)


def _read_predictions(root) -> dict:
    """Predictions as ``<root>/<id>/labels.txt`` or ``<root>/<id>.txt``."""
    root = Path(root)
    if not root.is_dir():
        raise CliError("MissingPath", f"{root} is not a directory")
    preds = {}
    for p in sorted(root.iterdir()):
        if p.is_dir() and (p / LABEL_FILE).is_file():
            preds[p.name] = load_labels(p / LABEL_FILE)
        elif p.is_file() and p.suffix == ".txt":
            preds[p.stem] = load_labels(p)
    return preds


def _read_truth(root) -> dict:
    root = Path(root)
    if not root.is_dir():
        raise CliError("MissingPath", f"{root} is not a directory")
    gt = {}
    for d in list_track_dirs(root):
        for name in (TRUTH_FILE, LABEL_FILE):
            if (d / name).is_file():
                gt[d.name] = load_labels(d / name)
                break
        else:
            raise CliError("MissingLabels", f"{d} has no {TRUTH_FILE} or {LABEL_FILE}")
    return gt


def _metric_row(name, report):
    return [name] + [format_float(getattr(report, k)) for k in METRIC_COLUMNS]


def _track_rows(report):
    for r in report.rows:
        yield [r.track_id, format_float(r.frame_acc), format_float(r.boundary_f),
               format_float(r.peripheral_acc), format_float(r.edit_score), int(r.correct)]


# --------------------------------------------------------------- commands


def cmd_synth(args):
    started = time.time()
    out = Path(args.out)
    extra = {}
    if args.spec:
        spec = load_spec_file(args.spec)
        if isinstance(spec, ScenarioSpec):
            # one scenario, n noise seeds; exact truth doubles as labels
            _out_dir(out)

            def build(k):
                tid = f"{spec.name or 'scene'}_{k:04d}"
                track, gt = generate_track(spec, seed=args.seed * 100003 + k, track_id=tid)
                save_track(track, out / "bank" / tid, overwrite=args.overwrite)
                save_labels(gt, out / "bank" / tid / TRUTH_FILE)
                save_labels(gt, out / "bank" / tid / LABEL_FILE)
                return tid, track_checksum(track)

            rows = map_ordered(build, range(args.n), args.threads)
            _write_csv(out / "checksums.csv", ["track_id", "sha256"], rows)
            write_provenance(out, "synth", args, {"spec": spec.to_dict()}, started)
            return 0
        recipe = spec
        mix = recipe.get("mix")
        split_kw = {k: recipe[k] for k in ("trusted_frac", "val_frac", "test_frac") if k in recipe}
        extra["recipe"] = recipe
    else:
        mix, split_kw = None, {}
    corruption = CorruptionSpec(args.corruption_mode, args.corruption_rate, args.seed)
    pseudo_cfg = _load_config(args).pseudolabel if args.config else None
    sums = generate_corpus(args.n, out, mix=mix, seed=args.seed, noisy_labels=args.noisy_labels,
                           corruption=corruption, pseudo_config=pseudo_cfg,
                           overwrite=args.overwrite, threads=args.threads, **split_kw)
    _write_csv(out / "checksums.csv", ["track_id", "sha256"], sorted(sums.items()))
    write_provenance(out, "synth", args, {"corruption": asdict(corruption)}, started, extra)
    return 0


def cmd_pseudolabel(args):
    started = time.time()
    cfg = _load_config(args)
    src = Path(args.in_dir)
    dirs = list_track_dirs(src)
    if not dirs:
        raise CliError("EmptyDataset", f"no track directories under {src}")
    out = _out_dir(args.out)

    def run(d):
        tr = load_track(d)
        labels, diag = generate_pseudolabels(tr, cfg.pseudolabel, seed=args.seed, return_diagnostics=True)
        return d.name, labels, diag

    rows = []
    for name, labels, diag in map_ordered(run, dirs, args.threads):
        (out / name).mkdir(exist_ok=True)
        save_labels(labels, out / name / LABEL_FILE)
        print(f"{name}\tcoverage={100 * diag.coverage:.1f}%\tcancelled={diag.n_cancelled}\tfailed={diag.n_failed}")
        rows.append([name, diag.n_frames, diag.n_labeled, format_float(diag.coverage),
                     diag.n_assigned, diag.n_cancelled, diag.n_failed])
    _write_csv(out / "diagnostics.csv", ["track_id", "frames", "labeled", "coverage", "assigned",
                                         "cancelled", "failed"], rows)
    write_provenance(out, "pseudolabel", args, cfg.to_dict(), started)
    return 0


def _model_config(cfg: ExperimentConfig, n_features) -> ModelConfig:
    m = cfg.model
    return ModelConfig(n_features, m.encoder_size, m.hidden_size, m.n_layers, m.head_sizes)


def cmd_train(args):
    started = time.time()
    cfg = _load_config(args)
    mode = args.mode or cfg.mode
    seed = cfg.seed if args.seed is None else args.seed
    paths = dict(cfg.paths)
    for key in ("noisy", "trusted", "val"):
        if getattr(args, key):
            paths[key] = getattr(args, key)
    missing = [k for k in required_paths(mode) if not paths.get(k)]
    if missing:
        raise CliError("ConfigError", f"mode {mode} needs --{' --'.join(missing)}", 2)
    for k, v in paths.items():
        if v and not Path(v).is_dir() and k in ("noisy", "trusted", "val"):
            raise CliError("MissingPath", f"{k} directory {v} does not exist", 2)

    load = lambda key: _load_split(paths[key], seed=seed, threads=args.threads,  # noqa: E731
                                   pseudo_cfg=cfg.pseudolabel) if paths.get(key) else None
    noisy = load("noisy") if mode != "supervised" else None
    trusted = load("trusted") if mode != "noisy_only" else None
    val = load("val")
    base = noisy or trusted
    out = _out_dir(args.out)
    model_cfg = _model_config(cfg, np.shape(base.X[0])[1])

    def on_round(row):
        log.info("round %d delta=%.3f flips=%d", row["round"], row["delta"], row["flips"])

    res = run_mode(mode, noisy, trusted, val, model_cfg, cfg.train, cfg.gplc, seed, on_round)
    save_checkpoint(res.model, out / "model.ckpt", {"mode": mode, "seed": seed})
    if res.curve:
        write_curve(res.curve, out / "loss_curve.csv")
    if res.history:
        _write_csv(out / "rounds.csv", HISTORY_COLUMNS,
                   [[r["round"], format_float(r["delta"]), r["flips"], r["labeled"], r["clean_labeled"],
                     r["skipped_unlabeled"], format_float(r["label_acc"]), format_float(r["val_frame_acc"])]
                    for r in res.history])
    if res.corrected is not None and noisy is not None:
        for tid, lab in zip(noisy.ids, res.corrected):
            (out / "corrected" / tid).mkdir(parents=True, exist_ok=True)
            save_labels(lab, out / "corrected" / tid / LABEL_FILE)
    write_provenance(out, "train", args, {**cfg.to_dict(), "experiment": {"mode": mode, "seed": seed},
                                          "paths": paths}, started)
    return 0


def cmd_eval(args):
    started = time.time()
    gt = _read_truth(args.gt)
    if args.model:
        model, _ = load_checkpoint(args.model)
        split = _load_split(args.gt, seed=args.seed, threads=args.threads, need_labels=False)
        preds = dict(zip(split.ids, predict_split(model, split)))
        if args.pred_out:
            for tid, p in preds.items():
                Path(args.pred_out).mkdir(parents=True, exist_ok=True)
                save_labels(p, Path(args.pred_out) / f"{tid}.txt")
    elif args.pred:
        preds = _read_predictions(args.pred)
    else:
        raise CliError("UsageError", "eval needs --pred DIR or --model CKPT", 2)
    try:
        report = evaluate(preds, gt)
    except (KeyError, ValueError) as exc:
        raise CliError("EvalError", str(exc).strip("'\""), 1) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, ("method",) + METRIC_COLUMNS, [_metric_row(args.name, report)])
    _write_csv(out.with_name(out.stem + "_tracks.csv"),
               ("track_id", "frame_acc", "boundary_f", "peripheral_acc", "edit_score", "correct"),
               list(_track_rows(report)))
    print(",".join(("method",) + METRIC_COLUMNS))
    print(",".join(_metric_row(args.name, report)))
    write_provenance(out.parent, "eval", args, None, started)
    return 0


def cmd_gradcheck(args):
    worst = 0.0
    for s in range(args.seed, args.seed + args.seeds):
        res = gradient_check(s, n_features=args.features, hidden=args.hidden, length=args.length)
        worst = max(worst, res.max_rel_error)
        print(f"seed {s}: max relative error {res.max_rel_error:.3e}")
    ok = worst <= args.tol
    print(f"{'PASS' if ok else 'FAIL'} max relative error {worst:.3e} (tolerance {args.tol:g})")
    return 0 if ok else 1


def cmd_report(args):
    """Table with one row per method over a ground-truth directory."""
    started = time.time()
    gt = _read_truth(args.gt)
    rows = []
    if args.baselines:
        tracks = [load_track(d) for d in list_track_dirs(args.gt)]
        ids = [t.id for t in tracks]
        rows.append(_metric_row("Fixed", evaluate(dict(zip(ids, fixed_predictions(tracks))), gt)))
        rows.append(_metric_row("IoU", evaluate(dict(zip(ids, iou_predictions(tracks))), gt)))
    split = None
    for spec in args.model or []:
        name, _, path = spec.partition("=")
        if not path:
            raise CliError("UsageError", f"--model expects NAME=CKPT, got {spec!r}", 2)
        if split is None:
            split = _load_split(args.gt, seed=args.seed, threads=args.threads, need_labels=False)
        model, _ = load_checkpoint(path)
        rows.append(_metric_row(name, evaluate(dict(zip(split.ids, predict_split(model, split))), gt)))
    for spec in args.pred or []:
        name, _, path = spec.partition("=")
        if not path:
            raise CliError("UsageError", f"--pred expects NAME=DIR, got {spec!r}", 2)
        rows.append(_metric_row(name, evaluate(_read_predictions(path), gt)))
    if not rows:
        raise CliError("UsageError", "report needs --baselines, --model or --pred", 2)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, ("method",) + METRIC_COLUMNS, rows)
    width = max(len(r[0]) for r in rows)
    print(f"{'method':<{width}}  " + "  ".join(f"{c:>19}" for c in METRIC_COLUMNS))
    for r in rows:
        print(f"{r[0]:<{width}}  " + "  ".join(f"{v:>19}" for v in r[1:]))
    write_provenance(out.parent, "report", args, None, started)
    return 0


# ----------------------------------------------------------------- parser


def _defaults_epilog():
    p, t, g, m = PseudoLabelConfig(), TrainConfig(), GplcConfig(), ModelConfig()
    lines = ["config defaults (INI sections):"]
    for section, obj in (("pseudolabel", p), ("model", m), ("train", t), ("gplc", g)):
        vals = ", ".join(f"{k}={v}" for k, v in asdict(obj).items() if k not in ("n_features", "seed"))
        lines.append(f"  [{section}] {vals}")
    lines.append("  Adam: lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8; batch size 1 track")
    lines.append("  RANSAC: 500 iterations, 1.0 px inlier threshold, early exit at 99% inliers")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="handcontact", description=__doc__.splitlines()[0],
                                     epilog=_defaults_epilog(), formatter_class=fmt)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default=0):
        p.add_argument("--seed", type=int, default=seed_default, help="random seed (default %(default)s)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for per-track work; outputs do not depend on it (default 1)")

    p = sub.add_parser("synth", help="generate a synthetic corpus", epilog=_defaults_epilog(),
                       formatter_class=fmt)
    p.add_argument("--spec", help="scenario JSON (n noisy copies) or corpus recipe with a 'mix' key")
    p.add_argument("--n", type=int, default=40, help="number of tracks (default %(default)s)")
    p.add_argument("--out", required=True)
    p.add_argument("--noisy-labels", choices=("pseudo", "corrupt"), default="pseudo",
                   help="labels of the noisy split (default %(default)s)")
    p.add_argument("--corruption-mode", choices=("uniform_flip", "segment_flip", "boundary_shift"),
                   default="uniform_flip", help="(default %(default)s)")
    p.add_argument("--corruption-rate", type=float, default=0.2, help="(default %(default)s)")
    p.add_argument("--config", help="INI config; its [pseudolabel] section labels the noisy split")
    p.add_argument("--overwrite", action="store_true")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pseudolabel", help="motion pseudo-labels for a track directory",
                       epilog=_defaults_epilog(), formatter_class=fmt)
    p.add_argument("--config")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_pseudolabel)

    p = sub.add_parser("train", help="train a contact model", epilog=_defaults_epilog(),
                       formatter_class=fmt)
    p.add_argument("--mode", choices=MODES, help="overrides [experiment] mode (default gplc)")
    p.add_argument("--config")
    p.add_argument("--noisy")
    p.add_argument("--trusted")
    p.add_argument("--val")
    p.add_argument("--out", required=True)
    common(p, seed_default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--gt", required=True, help="track directories with truth.txt (or labels.txt)")
    p.add_argument("--pred", help="prediction directory")
    p.add_argument("--model", help="checkpoint to predict with instead of --pred")
    p.add_argument("--pred-out", help="where to write model predictions")
    p.add_argument("--name", default="model", help="method name in the CSV (default %(default)s)")
    p.add_argument("--out", required=True, help="metric CSV path")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="compare BPTT gradients with finite differences")
    p.add_argument("--seeds", type=int, default=20, help="(default %(default)s)")
    p.add_argument("--features", type=int, default=11, help="(default %(default)s)")
    p.add_argument("--hidden", type=int, default=8, help="(default %(default)s)")
    p.add_argument("--length", type=int, default=6, help="(default %(default)s)")
    p.add_argument("--tol", type=float, default=1e-4, help="(default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="first seed (default %(default)s)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="metric table over several methods")
    p.add_argument("--gt", required=True)
    p.add_argument("--baselines", action="store_true", help="add Fixed and IoU rows")
    p.add_argument("--model", action="append", metavar="NAME=CKPT")
    p.add_argument("--pred", action="append", metavar="NAME=DIR")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        _fail(exc.kind, str(exc))
        return exc.code
    except ConfigError as exc:
        _fail("ConfigError", " | ".join(exc.problems))
        return 2
    except (ValueError, OSError, FileExistsError) as exc:
        _fail(type(exc).__name__, str(exc))
        return 1


def _fail(kind, message):
    one_line = " ".join(str(message).split())
    print(f"error\t{kind}\t{one_line}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
