"""Inertial recordings on disk, fixed-length windows, augmentation and splits.

On-disk layout (one directory)::

    manifest.json   {"name", "classes": [...], "sampling_rate_hz": 50,
                     "entries": [{"path", "label", "subject", "trial"}, ...]}
    *.csv           header "t,ax,ay,az,gx,gy,gz", one row per sample
"""
import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from harfuse.errors import (
    ContractError,
    EmptyDatasetError,
    InputFileError,
    ParseError,
    ProvenanceError,
    SchemaError,
    TooShortError,
)

WINDOW_LENGTH = 52
N_CHANNELS = 6
CSV_HEADER = ("t", "ax", "ay", "az", "gx", "gy", "gz")
ORIGINAL = "original"
AUGMENT_VARIANTS = ("jitter0", "jitter1", "jitter2", "scale0", "scale1", "shift+2", "shift-2")


def round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True, eq=False)
class SignalWindow:
    """A 6 x 52 inertial segment (acc x/y/z in g, gyro x/y/z in deg/s).

    ``source`` names the original window an augmented variant was made from
    (equal to ``key`` for originals); splits use it to keep families together.
    """

    channels: np.ndarray
    label: int
    subject: str
    provenance: str = ORIGINAL
    source: str = ""

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.shape != (N_CHANNELS, WINDOW_LENGTH):
            raise ContractError(f"window must be {N_CHANNELS}x{WINDOW_LENGTH}, got {ch.shape}")
        if not np.all(np.isfinite(ch)):
            raise ContractError("window has non-finite samples")
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)

    @property
    def is_augmented(self):
        return self.provenance != ORIGINAL

    @property
    def key(self):
        if self.is_augmented:
            return f"{self.source}/{self.provenance}"
        return self.source


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: int
    subject: str
    trial: str


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    class_names: tuple
    sampling_rate_hz: float
    entries: tuple
    root: Path = field(default=Path("."), compare=False)


@dataclass(frozen=True)
class SplitPlan:
    seed: int = 0
    train_fraction: float = 0.8
    repeats: int = 20
    stratified: bool = False
    split_before_augmentation: bool = True
    subject_holdout: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ContractError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.repeats < 1:
            raise ContractError(f"repeats must be >= 1, got {self.repeats}")


def load_manifest(root):
    """Read and validate ``root/manifest.json`` and every CSV it references.

    Entries are returned sorted by path so repeated ingestion is stable.
    """
    root = Path(root)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise InputFileError(mpath, "manifest not found")
    try:
        raw = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(mpath, exc.lineno, f"invalid JSON: {exc.msg}") from exc
    for key in ("name", "classes", "entries"):
        if key not in raw:
            raise SchemaError(f"{mpath}: missing key {key!r}")
    classes = tuple(str(c) for c in raw["classes"])
    if len(set(classes)) != len(classes) or not classes:
        raise SchemaError(f"{mpath}: class names must be non-empty and unique")
    entries = []
    for i, e in enumerate(raw["entries"]):
        try:
            label, path = e["label"], e["path"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{mpath}: entry {i} lacks 'path' or 'label'") from exc
        if isinstance(label, str):
            if label not in classes:
                raise SchemaError(f"{mpath}: entry {i} has unknown label {label!r}")
            label = classes.index(label)
        elif isinstance(label, int) and not isinstance(label, bool):
            if not 0 <= label < len(classes):
                raise SchemaError(f"{mpath}: entry {i} label index {label} out of range")
        else:
            raise SchemaError(f"{mpath}: entry {i} label must be a class name or index")
        fpath = root / path
        if not fpath.is_file():
            raise InputFileError(fpath, "recording not found")
        read_recording(fpath)
        entries.append(
            ManifestEntry(Path(path), int(label), str(e.get("subject", "")), str(e.get("trial", "")))
        )
    entries.sort(key=lambda en: en.path.as_posix())
    return DatasetManifest(
        name=str(raw["name"]),
        class_names=classes,
        sampling_rate_hz=float(raw.get("sampling_rate_hz", 50)),
        entries=tuple(entries),
        root=root,
    )


def read_recording(path):
    """Parse one recording CSV into an (L, 6) float array (time column dropped)."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputFileError(path, f"cannot open recording ({exc.strerror})") from exc
    rows = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(path, 1, "empty file")
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(path, 1, f"expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(path, line, f"expected {len(CSV_HEADER)} columns, got {len(row)}")
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(path, line, str(exc)) from exc
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(path, line, "non-finite value")
            rows.append(vals)
    return np.array(rows, dtype=np.float64).reshape(-1, N_CHANNELS)


def window_stride(overlap):
    if not 0.0 <= overlap < 1.0:
        raise ContractError(f"overlap must be in [0, 1), got {overlap}")
    stride = round_half_up(WINDOW_LENGTH * (1.0 - overlap))
    if stride < 1:
        raise ContractError(f"overlap {overlap} gives a zero stride")
    return stride


def window(recording, length=WINDOW_LENGTH, overlap=0.0, label=0, subject="", source=""):
    """Cut an (L, 6) recording into consecutive 52-sample windows.

    The trailing partial window is dropped. ``source`` prefixes each window's
    identity as ``{source}#w{k}``.
    """
    rec = np.asarray(recording, dtype=np.float64)
    if length != WINDOW_LENGTH:
        raise ContractError(f"window length is fixed at {WINDOW_LENGTH}")
    if rec.ndim != 2 or rec.shape[1] != N_CHANNELS:
        raise ContractError(f"recording must be (L, {N_CHANNELS}), got {rec.shape}")
    L = rec.shape[0]
    if L < length:
        raise TooShortError(L, length)
    stride = window_stride(overlap)
    count = (L - length) // stride + 1
    return [
        SignalWindow(rec[k * stride : k * stride + length].T, label, subject, ORIGINAL, f"{source}#w{k}")
        for k in range(count)
    ]


def load_windows(manifest, overlap=0.0):
    """Window every recording of a manifest, in manifest order."""
    out = []
    for e in manifest.entries:
        rec = read_recording(manifest.root / e.path)
        try:
            out.extend(window(rec, overlap=overlap, label=e.label, subject=e.subject, source=e.path.as_posix()))
        except TooShortError as exc:
            raise TooShortError(exc.length, exc.required, manifest.root / e.path) from exc
    return out


def augment(w, seed):
    """Seven labelled variants of an original window (8x expansion with it).

    3 jitter (Gaussian, sigma = 0.05 * channel std), 2 per-channel amplitude
    scalings in [0.9, 1.1], 2 circular shifts by +2 / -2 samples.
    """
    if w.is_augmented:
        raise ProvenanceError(f"window {w.key} is already augmented")
    rng = np.random.default_rng(seed)
    x = w.channels
    std = x.std(axis=1, keepdims=True)
    out = []
    for k in range(3):
        noisy = x + rng.standard_normal(x.shape) * (0.05 * std)
        out.append(noisy)
    for k in range(2):
        out.append(x * rng.uniform(0.9, 1.1, size=(N_CHANNELS, 1)))
    out.append(np.roll(x, 2, axis=1))
    out.append(np.roll(x, -2, axis=1))
    return [
        SignalWindow(ch, w.label, w.subject, f"augmented:{name}", w.source)
        for ch, name in zip(out, AUGMENT_VARIANTS)
    ]


def augment_all(windows, seed):
    """Originals followed by their variants; per-window seeds derive from ``seed``."""
    seeds = np.random.SeedSequence(seed).spawn(len(windows))
    out = []
    for w, s in zip(windows, seeds):
        out.append(w)
        out.extend(augment(w, s))
    return out


def _apportion(sizes, fraction):
    """Per-stratum train counts summing to round(fraction * total), each within 1 of exact."""
    total = round_half_up(fraction * sum(sizes))
    exact = [fraction * s for s in sizes]
    base = [int(math.floor(e)) for e in exact]
    rest = total - sum(base)
    order = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


def split(windows, plan, repeat_index):
    """Train/test index arrays for one repeat of ``plan``.

    Units of assignment are families (an original plus its augmented variants)
    when ``plan.split_before_augmentation`` is set, else single windows; with
    ``subject_holdout`` the units are subjects. Deterministic in
    (plan.seed, repeat_index).
    """
    n = len(windows)
    if n == 0:
        raise EmptyDatasetError("cannot split an empty window list")
    if not 0 <= repeat_index < plan.repeats:
        raise ContractError(f"repeat_index {repeat_index} outside [0, {plan.repeats})")
    if plan.subject_holdout:
        keys = [w.subject for w in windows]
    elif plan.split_before_augmentation:
        keys = [w.source for w in windows]
    else:
        keys = list(range(n))
    units = {}
    for i, k in enumerate(keys):
        units.setdefault(k, []).append(i)
    unit_ids = list(units)
    rng = np.random.default_rng([plan.seed, repeat_index])
    if plan.stratified and not plan.subject_holdout:
        strata = {}
        for u in unit_ids:
            strata.setdefault(windows[units[u][0]].label, []).append(u)
        labels = sorted(strata)
        counts = _apportion([len(strata[c]) for c in labels], plan.train_fraction)
        chosen = []
        for c, k in zip(labels, counts):
            perm = rng.permutation(len(strata[c]))
            chosen.extend(strata[c][j] for j in perm[:k])
    else:
        k = round_half_up(plan.train_fraction * len(unit_ids))
        perm = rng.permutation(len(unit_ids))
        chosen = [unit_ids[j] for j in perm[:k]]
    in_train = np.zeros(n, dtype=bool)
    for u in chosen:
        in_train[units[u]] = True
    return np.flatnonzero(in_train), np.flatnonzero(~in_train)


def with_channels(w, channels):
    """Copy of ``w`` carrying different samples (same identity and label)."""
    return replace(w, channels=channels)
