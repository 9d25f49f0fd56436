"""Signal images: the six channel sequences stacked into a 24 x 52 grid."""
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from harfuse.dataset import N_CHANNELS, WINDOW_LENGTH, SignalWindow
from harfuse.errors import ContractError

# 0-based channel index of each image row. Every channel occurs 4 times and
# every unordered channel pair is adjacent somewhere.
ROW_ORDER = (0, 1, 2, 3, 4, 5, 0, 2, 4, 1, 3, 5, 0, 3, 1, 4, 2, 5, 0, 4, 1, 5, 2, 3)
IMAGE_SHAPE = (len(ROW_ORDER), WINDOW_LENGTH)

SPATIAL = "spatial"
FREQUENCY = "frequency"
TIME_SPECTRUM = "time_spectrum"
DOMAINS = (SPATIAL, FREQUENCY, TIME_SPECTRUM)


@dataclass(frozen=True, eq=False)
class DomainImage:
    pixels: np.ndarray
    domain: str
    label: int
    subject: str
    provenance: str
    source: str


@dataclass(frozen=True, eq=False)
class SignalImage(DomainImage):
    row_order: tuple = ROW_ORDER


def adjacent_pairs(order):
    return {frozenset(p) for p in zip(order, order[1:]) if p[0] != p[1]}


def minmax(x, degenerate):
    """Scale to [0, 1]; a constant array becomes ``degenerate`` everywhere."""
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        return np.full(np.shape(x), float(degenerate))
    return (x - lo) / (hi - lo)


def stack_rows(channels, order=ROW_ORDER):
    """Rows of the (unnormalized) signal image: ``channels[order[r]]``."""
    channels = np.asarray(channels, dtype=np.float64)
    if channels.shape[-2:] != (N_CHANNELS, WINDOW_LENGTH):
        raise ContractError(f"expected (..., {N_CHANNELS}, {WINDOW_LENGTH}) channels, got {channels.shape}")
    return channels[..., list(order), :]


def signal_pixels(channels, order=ROW_ORDER):
    return minmax(stack_rows(channels, order), degenerate=0.5)


def build_signal_image(w):
    if not isinstance(w, SignalWindow):
        raise ContractError("build_signal_image expects a SignalWindow")
    return SignalImage(
        pixels=signal_pixels(w.channels),
        domain=SPATIAL,
        label=w.label,
        subject=w.subject,
        provenance=w.provenance,
        source=w.source,
        row_order=ROW_ORDER,
    )


def signal_stack(windows):
    """(n, 24, 52) array of normalized signal images, one per window."""
    out = np.empty((len(windows),) + IMAGE_SHAPE)
    for i, w in enumerate(windows):
        out[i] = signal_pixels(w.channels)
    return out


def write_pgm(path, pixels):
    """8-bit binary PGM of a [0, 1] image."""
    img = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_csv_grid(path, pixels):
    np.savetxt(Path(path), np.asarray(pixels), delimiter=",", fmt="%.10g")


assert len(adjacent_pairs(ROW_ORDER)) == len(list(combinations(range(N_CHANNELS), 2)))
