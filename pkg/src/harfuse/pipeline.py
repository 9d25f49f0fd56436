"""End-to-end harness: configuration, repeated splits, the per-repeat stage
chain (images, three CNNs, two-stage CCA, SVM), ablation and report files.

Every fitted component of a repeat sees training windows only. Augmented
variants are generated per window from a seed derived from the window's
identity, so a window's variants are the same in every repeat.
"""
import csv
import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from harfuse import __version__, cca, cnn, svm
from harfuse._backend import BACKEND
from harfuse.cnn import TrainConfig
from harfuse.container import read_container, write_container
from harfuse.dataset import SplitPlan, augment, load_manifest, load_windows, split
from harfuse.errors import ConfigError, FormatError, HarfuseError
from harfuse.signal_image import DOMAINS, signal_pixels
from harfuse.transforms import DEFAULT_HALF_WIDTH, GaborParams, frequency_pixels, gabor_pixels

log = logging.getLogger(__name__)

FUSED = "fused"
OUT_ENV = "HARFUSE_OUT"


@dataclass(frozen=True)
class GaborConfig:
    frequency: float = 0.2
    sigma: float = 0.1
    K: float = 1.0
    phase: float = 0.0
    orientations: int = 4
    half_width: int = DEFAULT_HALF_WIDTH

    def bank(self):
        return [
            GaborParams(self.K, self.sigma, self.frequency, k * np.pi / self.orientations, self.phase)
            for k in range(self.orientations)
        ]


@dataclass(frozen=True)
class AugmentConfig:
    enabled: bool = True
    seed: int = 0


@dataclass(frozen=True)
class CcaConfig:
    ridge_scale: float = cca.DEFAULT_RIDGE_SCALE
    stage_order: tuple = DOMAINS


@dataclass(frozen=True)
class SvmConfig:
    lam: float = 1e-3
    epochs: int = 200
    seed: int = 0


@dataclass(frozen=True)
class PipelineConfig:
    dataset: Path
    output_dir: Path = Path("harfuse-out")
    split: SplitPlan = field(default_factory=SplitPlan)
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    window_overlap: float = 0.0
    gabor: GaborConfig = field(default_factory=GaborConfig)
    cnn: TrainConfig = field(default_factory=TrainConfig)
    cca: CcaConfig = field(default_factory=CcaConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    domains: tuple = DOMAINS
    cache: bool = True
    save_models: bool = False

    def to_dict(self):
        d = asdict(self)
        d["dataset"] = str(self.dataset)
        d["output_dir"] = str(self.output_dir)
        d["domains"] = list(self.domains)
        d["cca"]["stage_order"] = list(self.cca.stage_order)
        return d

    def with_seed(self, seed):
        """Copy with every seed (split, augmentation, CNN, SVM) set to ``seed``."""
        return replace(
            self,
            split=replace(self.split, seed=seed),
            augmentation=replace(self.augmentation, seed=seed),
            cnn=replace(self.cnn, seed=seed),
            svm=replace(self.svm, seed=seed),
        )


_SECTIONS = {
    "split": SplitPlan,
    "augmentation": AugmentConfig,
    "gabor": GaborConfig,
    "cnn": cnn.TrainConfig,
    "cca": CcaConfig,
    "svm": SvmConfig,
}


def _section(cls, raw, name):
    if not isinstance(raw, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"config section {name!r}: unknown keys {unknown}")
    kwargs = dict(raw)
    if "stage_order" in kwargs:
        kwargs["stage_order"] = tuple(kwargs["stage_order"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config section {name!r}: {exc}") from exc


def config_from_dict(raw, base_dir=".", seed=None):
    """Build and validate a PipelineConfig from parsed JSON.

    Relative paths resolve against ``base_dir``; ``HARFUSE_OUT`` overrides the
    output directory; ``seed`` overrides every seed.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    if "dataset" not in raw:
        raise ConfigError("config needs a 'dataset' path")
    base = Path(base_dir)
    kw = {"dataset": base / raw["dataset"]}
    out = os.environ.get(OUT_ENV) or raw.get("output_dir")
    if out:
        kw["output_dir"] = base / out
    for name, cls in _SECTIONS.items():
        if name in raw:
            kw[name] = _section(cls, raw[name], name)
    if "window_overlap" in raw:
        kw["window_overlap"] = raw["window_overlap"]
    if "domains" in raw:
        kw["domains"] = tuple(raw["domains"])
    for flag in ("cache", "save_models"):
        if flag in raw:
            kw[flag] = raw[flag]
    cfg = PipelineConfig(**kw)
    if seed is not None:
        cfg = cfg.with_seed(int(seed))
    validate_config(cfg)
    return cfg


def load_config(path, seed=None):
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    return config_from_dict(raw, path.parent, seed)


def validate_config(cfg):
    if sorted(cfg.domains) != sorted(DOMAINS):
        raise ConfigError(f"fusion requires all three domains {list(DOMAINS)}, got {list(cfg.domains)}")
    if sorted(cfg.cca.stage_order) != sorted(DOMAINS):
        raise ConfigError(f"cca.stage_order must be a permutation of {list(DOMAINS)}")
    if not (cfg.dataset / "manifest.json").is_file():
        raise ConfigError(f"dataset directory {cfg.dataset} has no manifest.json")
    if not 0.0 <= cfg.window_overlap < 1.0:
        raise ConfigError(f"window_overlap must be in [0, 1), got {cfg.window_overlap}")
    if cfg.cca.ridge_scale < 0:
        raise ConfigError("cca.ridge_scale must be >= 0")
    if cfg.svm.lam <= 0 or cfg.svm.epochs < 1:
        raise ConfigError("svm.lam must be > 0 and svm.epochs >= 1")
    g = cfg.gabor
    if g.orientations < 1 or g.half_width < 1 or not g.sigma > 0 or g.frequency < 0:
        raise ConfigError("gabor needs orientations >= 1, half_width >= 1, sigma > 0, frequency >= 0")
    return cfg


# -- stages ---------------------------------------------------------------


class _Stage:
    """Annotate any harness error raised inside with repeat and stage."""

    def __init__(self, repeat, stage, timings):
        self.repeat, self.stage, self.timings = repeat, stage, timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, kind, exc, tb):
        self.timings[self.stage] = self.timings.get(self.stage, 0.0) + time.perf_counter() - self.t0
        if isinstance(exc, HarfuseError) and not hasattr(exc, "stage"):
            exc.repeat, exc.stage = self.repeat, self.stage
            exc.args = (f"repeat {self.repeat}, stage {self.stage}: {exc}",)
        return False


def window_seed(seed, key):
    """Augmentation seed of one window, from the run seed and the window identity."""
    digest = hashlib.sha256(f"{seed}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _with_variants(windows, aug):
    out = []
    for w in windows:
        out.append(w)
        if aug.enabled:
            out.extend(augment(w, window_seed(aug.seed, w.key)))
    return out


def repeat_split(cfg, windows, r):
    """(train windows, test windows) of repeat ``r``.

    With ``split_before_augmentation`` (default) the originals are split and
    only the training side is augmented. Otherwise every window is augmented
    first and the expanded pool is split window by window.
    """
    if cfg.split.split_before_augmentation or not cfg.augmentation.enabled:
        tr, te = split(windows, cfg.split, r)
        return _with_variants([windows[i] for i in tr], cfg.augmentation), [windows[i] for i in te]
    pool = _with_variants(windows, cfg.augmentation)
    tr, te = split(pool, cfg.split, r)
    return [pool[i] for i in tr], [pool[i] for i in te]


class ImageCache:
    """Domain images per window key, computed once per run."""

    def __init__(self, gabor):
        self.bank = gabor.bank()
        self.half_width = gabor.half_width
        self._store = {}

    def images(self, w):
        got = self._store.get(w.key)
        if got is None:
            sp = signal_pixels(w.channels)
            got = (sp, frequency_pixels(sp), gabor_pixels(sp, self.bank, self.half_width))
            self._store[w.key] = got
        return got

    def stacks(self, windows):
        """{domain: (n, 24, 52) stack} in window order."""
        per = [self.images(w) for w in windows]
        return {d: np.stack([p[i] for p in per]) for i, d in enumerate(DOMAINS)}


def _cnn_cache_key(train_cfg, arch, images, labels):
    h = hashlib.sha256()
    h.update(json.dumps({"train": asdict(train_cfg), "arch": asdict(arch)}, sort_keys=True).encode())
    h.update(np.ascontiguousarray(images, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(labels, dtype=np.int64).tobytes())
    return h.hexdigest()[:32]


def train_domain_cnn(cfg, domain, images, labels, class_names, repeat, cache_dir=None):
    """Train (or load from the content-keyed cache) the CNN of one domain."""
    seed = cfg.cnn.seed + 1000 * repeat + DOMAINS.index(domain)
    train_cfg = replace(cfg.cnn, seed=seed)
    arch = cnn.CnnArchitecture(n_classes=len(class_names), input_shape=images.shape[-2:])
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"cnn_{_cnn_cache_key(train_cfg, arch, images, labels)}.hfc"
        if path.is_file():
            try:
                return cnn.load_model(path)
            except FormatError:
                log.warning("ignoring unreadable cache entry %s", path)
    model = cnn.train(images, labels, train_cfg, arch=arch, class_names=class_names)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        cnn.save_model(model, tmp)
        tmp.replace(path)
    return model


def _labels(windows):
    return np.array([w.label for w in windows], dtype=np.int64)


def _keys(windows):
    return tuple(w.key for w in windows)


def _eval_dict(ev):
    return {"accuracy": ev.accuracy, "per_class": ev.per_class, "confusion": ev.confusion.tolist()}


def fit_hash(cnn_models, cca_models, svm_model):
    """One digest over every fitted parameter of a repeat."""
    h = hashlib.sha256()
    for d in DOMAINS:
        h.update(cnn.param_digest(cnn_models[d]).encode())
    for m in cca_models:
        h.update(cca.model_digest(m).encode())
    h.update(svm.model_digest(svm_model).encode())
    return h.hexdigest()


def run_repeat(cfg, manifest, windows, r, images, ablation=False, cache_dir=None, model_dir=None):
    """All stages of repeat ``r``. Returns (result dict, timings dict)."""
    timings = {}
    names = manifest.class_names
    C = len(names)
    with _Stage(r, "split", timings):
        train_w, test_w = repeat_split(cfg, windows, r)
        y_tr, y_te = _labels(train_w), _labels(test_w)
    with _Stage(r, "images", timings):
        tr_img, te_img = images.stacks(train_w), images.stacks(test_w)
    models, f_tr, f_te = {}, {}, {}
    for d in DOMAINS:
        with _Stage(r, f"cnn_{d}", timings):
            models[d] = train_domain_cnn(cfg, d, tr_img[d], y_tr, names, r, cache_dir)
        with _Stage(r, "features", timings):
            f_tr[d] = cnn.extract_features(models[d], tr_img[d], _keys(train_w), d)
            f_te[d] = cnn.extract_features(models[d], te_img[d], _keys(test_w), d)
    with _Stage(r, "cca", timings):
        cca_models, z_tr = cca.two_stage_fuse(
            f_tr[DOMAINS[0]], f_tr[DOMAINS[1]], f_tr[DOMAINS[2]], cfg.cca.ridge_scale, cfg.cca.stage_order
        )
        z_te = cca.apply_two_stage(cca_models, f_te[DOMAINS[0]], f_te[DOMAINS[1]], f_te[DOMAINS[2]], cfg.cca.stage_order)
    s = cfg.svm
    with _Stage(r, "svm", timings):
        fused_svm = svm.svm_train(z_tr, y_tr, s.lam, s.epochs, s.seed, n_classes=C, class_names=names)
        evals = {FUSED: svm.evaluate(fused_svm, z_te, y_te)}
    if ablation:
        with _Stage(r, "ablation", timings):
            for d in DOMAINS:
                m = svm.svm_train(f_tr[d], y_tr, s.lam, s.epochs, s.seed, n_classes=C, class_names=names)
                evals[d] = svm.evaluate(m, f_te[d], y_te)
    if model_dir is not None:
        with _Stage(r, "save", timings):
            out = Path(model_dir) / f"repeat_{r}"
            out.mkdir(parents=True, exist_ok=True)
            for d in DOMAINS:
                cnn.save_model(models[d], out / f"cnn_{d}.hfc")
            for k, m in enumerate(cca_models, 1):
                cca.save_model(m, out / f"cca_stage{k}.hfc")
            svm.save_model(fused_svm, out / "svm.hfc")
    result = {
        "index": r,
        "n_train": len(train_w),
        "n_test": len(test_w),
        "cca_dims": [m.d for m in cca_models],
        "fit_hash": fit_hash(models, cca_models, fused_svm),
        "results": {k: _eval_dict(v) for k, v in evals.items()},
    }
    return result, timings


def _series(values):
    v = np.asarray(values, dtype=np.float64)
    return {"per_repeat": [float(x) for x in v], "mean": float(v.mean()), "std": float(v.std())}


def _run(cfg, ablation):
    validate_config(cfg)
    t0 = time.perf_counter()
    manifest = load_manifest(cfg.dataset)
    windows = load_windows(manifest, cfg.window_overlap)
    t_ingest = time.perf_counter() - t0
    images = ImageCache(cfg.gabor)
    cache_dir = Path(cfg.output_dir) / "cache" if cfg.cache else None
    model_dir = Path(cfg.output_dir) / "models" if cfg.save_models else None
    repeats, timings = [], []
    for r in range(cfg.split.repeats):
        res, tm = run_repeat(cfg, manifest, windows, r, images, ablation, cache_dir, model_dir)
        log.info("repeat %d fused accuracy %.4f", r, res["results"][FUSED]["accuracy"])
        repeats.append(res)
        timings.append(tm)
    methods = (FUSED,) + (DOMAINS if ablation else ())
    accuracy = {m: _series([rep["results"][m]["accuracy"] for rep in repeats]) for m in methods}
    return {
        "kind": "ablation" if ablation else "pipeline",
        "version": __version__,
        "backend": BACKEND,
        "config": cfg.to_dict(),
        "dataset": {"name": manifest.name, "class_names": list(manifest.class_names), "n_windows": len(windows)},
        "accuracy": accuracy,
        "repeats": repeats,
        "timings": {"ingest": t_ingest, "repeats": timings, "total": time.perf_counter() - t0},
    }


def run_pipeline(cfg):
    """Fused-feature accuracy over ``cfg.split.repeats`` repeats, as a report dict."""
    return _run(cfg, ablation=False)


def run_ablation(cfg):
    """As run_pipeline, plus an SVM on each single domain's CNN features."""
    return _run(cfg, ablation=True)


# -- reports ---------------------------------------------------------------


def emit_report(report, output_dir):
    """Write report.json, confusion_repeat<r>.csv per repeat and summary.txt."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
        names = report["dataset"]["class_names"]
        for rep in report["repeats"]:
            with open(out / f"confusion_repeat{rep['index']}.csv", "w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh)
                wr.writerow(["true\\pred"] + names)
                for name, row in zip(names, rep["results"][FUSED]["confusion"]):
                    wr.writerow([name] + row)
        (out / "summary.txt").write_text(summary_text(report), encoding="utf-8")
    except OSError as exc:
        from harfuse.errors import InputFileError

        raise InputFileError(out, f"cannot write report ({exc.strerror})") from exc
    return out


def summary_text(report):
    acc = report["accuracy"]
    n = len(report["repeats"])
    lines = [
        f"dataset: {report['dataset']['name']} ({report['dataset']['n_windows']} windows, {n} repeats)",
        "",
        f"{'method':<16}{'mean':>10}{'std':>10}",
    ]
    for method in [m for m in DOMAINS if m in acc] + [FUSED]:
        s = acc[method]
        lines.append(f"{method:<16}{s['mean']:>10.6f}{s['std']:>10.6f}")
    return "\n".join(lines) + "\n"


def strip_timings(report):
    """Report without wall-clock fields, for determinism comparisons."""
    return {k: v for k, v in report.items() if k != "timings"}


# -- stage files for the CLI ------------------------------------------------

WINDOWS_MAGIC = "HFWIN1"
FEATURES_MAGIC = "HFFEA1"


def save_windows(path, windows, manifest):
    header = {
        "kind": "windows",
        "dataset": manifest.name,
        "class_names": list(manifest.class_names),
        "labels": [int(w.label) for w in windows],
        "subjects": [w.subject for w in windows],
        "sources": [w.source for w in windows],
    }
    data = np.stack([w.channels for w in windows]) if windows else np.zeros((0, 6, 52))
    write_container(path, WINDOWS_MAGIC, header, [("channels", data)])


def save_features(path, feats, labels, class_names):
    """``feats``: {name: FeatureMatrix or FusedFeatures}, all on the same rows."""
    names = sorted(feats)
    ids = list(feats[names[0]].ids) if names else []
    header = {"kind": "features", "ids": [str(i) for i in ids], "labels": [int(v) for v in labels], "class_names": list(class_names)}
    write_container(path, FEATURES_MAGIC, header, [(k, feats[k].values) for k in names])


def load_features(path):
    """Returns ({name: FeatureMatrix}, labels, class_names)."""
    header, arrays = read_container(path, FEATURES_MAGIC)
    try:
        ids = tuple(header["ids"])
        labels = np.asarray(header["labels"], dtype=np.int64)
        feats = {k: cnn.FeatureMatrix(v, k, ids) for k, v in arrays.items()}
        return feats, labels, tuple(header["class_names"])
    except KeyError as exc:
        raise FormatError(f"{path}: incomplete features container ({exc})") from exc
