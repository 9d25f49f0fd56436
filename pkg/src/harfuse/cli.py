"""Command-line entry point.

Stage commands read and write intermediate files under the configured output
directory, so a run can be inspected or resumed stage by stage::

    harfuse ingest   --config cfg.json     # windows.hfw
    harfuse images   --config cfg.json     # images/<domain>/*.pgm (originals)
    harfuse train    --config cfg.json     # models/repeat_<r>/cnn_*.hfc, features_r<r>.hff
    harfuse fuse     --config cfg.json     # cca_stage*.hfc, fused_r<r>.hff
    harfuse classify --config cfg.json     # svm.hfc, prints test accuracy
    harfuse run      --config cfg.json     # full pipeline, report files
    harfuse ablate   --config cfg.json     # pipeline plus single-domain SVMs
    harfuse fixture  DIR                   # write the synthetic 6-class dataset

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from harfuse import __version__, cca, cnn, pipeline, svm, synthetic
from harfuse.dataset import load_manifest, load_windows
from harfuse.errors import HarfuseError
from harfuse.signal_image import DOMAINS, write_pgm


def _out(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ingest(cfg):
    manifest = load_manifest(cfg.dataset)
    return manifest, load_windows(manifest, cfg.window_overlap)


def cmd_ingest(cfg, args):
    manifest, windows = _ingest(cfg)
    path = _out(cfg) / "windows.hfw"
    pipeline.save_windows(path, windows, manifest)
    counts = np.bincount([w.label for w in windows], minlength=len(manifest.class_names))
    print(f"{len(windows)} windows from {len(manifest.entries)} recordings -> {path}")
    for name, c in zip(manifest.class_names, counts):
        print(f"  {name}: {c}")


def cmd_images(cfg, args):
    manifest, windows = _ingest(cfg)
    cache = pipeline.ImageCache(cfg.gabor)
    root = _out(cfg) / "images"
    limit = len(windows) if args.limit is None else min(args.limit, len(windows))
    for d in DOMAINS:
        (root / d).mkdir(parents=True, exist_ok=True)
    for i, w in enumerate(windows[:limit]):
        for d, px in zip(DOMAINS, cache.images(w)):
            write_pgm(root / d / f"{i:05d}.pgm", px)
    print(f"wrote {limit} x {len(DOMAINS)} images under {root}")


def _repeat_data(cfg, r):
    manifest, windows = _ingest(cfg)
    train_w, test_w = pipeline.repeat_split(cfg, windows, r)
    return manifest, train_w, test_w


def cmd_train(cfg, args):
    r = args.repeat
    manifest, train_w, test_w = _repeat_data(cfg, r)
    cache = pipeline.ImageCache(cfg.gabor)
    tr, te = cache.stacks(train_w), cache.stacks(test_w)
    y_tr = np.array([w.label for w in train_w])
    y_te = np.array([w.label for w in test_w])
    out = _out(cfg)
    mdir = out / "models" / f"repeat_{r}"
    mdir.mkdir(parents=True, exist_ok=True)
    cache_dir = out / "cache" if cfg.cache else None
    f_tr, f_te = {}, {}
    for d in DOMAINS:
        m = pipeline.train_domain_cnn(cfg, d, tr[d], y_tr, manifest.class_names, r, cache_dir)
        cnn.save_model(m, mdir / f"cnn_{d}.hfc")
        f_tr[d] = cnn.extract_features(m, tr[d], [w.key for w in train_w], d)
        f_te[d] = cnn.extract_features(m, te[d], [w.key for w in test_w], d)
        acc = float(np.mean(cnn.predict(m, te[d]) == y_te))
        print(f"{d}: final train loss {m.history[-1]['loss']:.4f}, softmax test accuracy {acc:.4f}")
    pipeline.save_features(out / f"features_r{r}_train.hff", f_tr, y_tr, manifest.class_names)
    pipeline.save_features(out / f"features_r{r}_test.hff", f_te, y_te, manifest.class_names)


def cmd_fuse(cfg, args):
    r = args.repeat
    out = _out(cfg)
    f_tr, y_tr, names = pipeline.load_features(out / f"features_r{r}_train.hff")
    f_te, y_te, _ = pipeline.load_features(out / f"features_r{r}_test.hff")
    order = cfg.cca.stage_order
    models, z_tr = cca.two_stage_fuse(*(f_tr[d] for d in DOMAINS), cfg.cca.ridge_scale, order)
    z_te = cca.apply_two_stage(models, *(f_te[d] for d in DOMAINS), order)
    mdir = out / "models" / f"repeat_{r}"
    mdir.mkdir(parents=True, exist_ok=True)
    for k, m in enumerate(models, 1):
        cca.save_model(m, mdir / f"cca_stage{k}.hfc")
        print(f"stage {k}: d = {m.d}, top correlations {np.round(m.lambdas[:3], 4).tolist()}")
    pipeline.save_features(out / f"fused_r{r}_train.hff", {"fused": z_tr}, y_tr, names)
    pipeline.save_features(out / f"fused_r{r}_test.hff", {"fused": z_te}, y_te, names)


def cmd_classify(cfg, args):
    r = args.repeat
    out = _out(cfg)
    f_tr, y_tr, names = pipeline.load_features(out / f"fused_r{r}_train.hff")
    f_te, y_te, _ = pipeline.load_features(out / f"fused_r{r}_test.hff")
    s = cfg.svm
    model = svm.svm_train(f_tr["fused"], y_tr, s.lam, s.epochs, s.seed, n_classes=len(names), class_names=names)
    mdir = out / "models" / f"repeat_{r}"
    mdir.mkdir(parents=True, exist_ok=True)
    svm.save_model(model, mdir / "svm.hfc")
    ev = svm.evaluate(model, f_te["fused"], y_te)
    print(f"fused test accuracy {ev.accuracy:.4f}")


def _report(cfg, report):
    out = pipeline.emit_report(report, cfg.output_dir)
    print(pipeline.summary_text(report), end="")
    print(f"report written to {out}")


def cmd_run(cfg, args):
    _report(cfg, pipeline.run_pipeline(cfg))


def cmd_ablate(cfg, args):
    _report(cfg, pipeline.run_ablation(cfg))


def cmd_fixture(args):
    root = synthetic.make_fixture(args.directory, args.windows_per_class, seed=args.seed or 0)
    print(f"fixture written to {root}")


def build_parser():
    parser = argparse.ArgumentParser(prog="harfuse", description="Multidomain inertial activity recognition")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "ingest": (cmd_ingest, "validate the dataset and cache its windows"),
        "images": (cmd_images, "write signal, frequency and time-spectrum images as PGM"),
        "train": (cmd_train, "train the three domain CNNs for one repeat and extract features"),
        "fuse": (cmd_fuse, "fit two-stage CCA on training features and fuse both sides"),
        "classify": (cmd_classify, "train and evaluate the SVM on fused features"),
        "run": (cmd_run, "full pipeline over all repeats"),
        "ablate": (cmd_ablate, "full pipeline plus single-domain SVMs"),
    }
    for name, (fn, help_) in commands.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        if name in ("train", "fuse", "classify"):
            p.add_argument("--repeat", type=int, default=0)
        if name == "images":
            p.add_argument("--limit", type=int, default=None, help="only the first N windows")
        p.set_defaults(func=fn)
    p = sub.add_parser("fixture", help="write the synthetic complementary dataset")
    p.add_argument("directory", type=Path)
    p.add_argument("--windows-per-class", type=int, default=150)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fixture":
            cmd_fixture(args)
            return 0
        cfg = pipeline.load_config(args.config, args.seed)
        if args.command in ("train", "fuse", "classify") and not 0 <= args.repeat < cfg.split.repeats:
            from harfuse.errors import ConfigError

            raise ConfigError(f"--repeat must be in [0, {cfg.split.repeats})")
        args.func(cfg, args)
    except HarfuseError as exc:
        print(f"harfuse: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
