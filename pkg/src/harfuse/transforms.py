"""Frequency-domain (2-D DFT) and time-spectrum (Gabor bank) images."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from harfuse._backend import kernels
from harfuse.errors import ContractError
from harfuse.signal_image import FREQUENCY, TIME_SPECTRUM, DomainImage, minmax


def _dft_matrix(n):
    k = np.arange(n)
    # reduce u*x mod n before scaling so large products keep full precision
    return np.exp(-2j * np.pi * (np.outer(k, k) % n) / n)


def dft2(img):
    """Unnormalized forward 2-D DFT,
    ``F[u, v] = sum_x sum_y img[x, y] * exp(-2j*pi*(u*x/M + v*y/N))``.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ContractError(f"dft2 expects a 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ContractError("dft2 input has non-finite pixels")
    M, N = img.shape
    return _dft_matrix(M) @ img @ _dft_matrix(N)


def centered_log_spectrum(img):
    """``log(1 + |dft2(img)|)`` with the zero-frequency bin moved to (M//2, N//2)."""
    mag = np.log1p(np.abs(dft2(img)))
    M, N = mag.shape
    return np.roll(mag, (M // 2, N // 2), axis=(0, 1))


def frequency_pixels(pixels):
    return minmax(centered_log_spectrum(pixels), degenerate=0.0)


def frequency_image(img):
    return DomainImage(
        frequency_pixels(img.pixels), FREQUENCY, img.label, img.subject, img.provenance, img.source
    )


@dataclass(frozen=True)
class GaborParams:
    """One Gabor filter: envelope magnitude K, spread sigma, radial frequency F
    (cycles/pixel), orientation omega (radians) and phase P (radians)."""

    K: float = 1.0
    sigma: float = 0.1
    F: float = 0.2
    omega: float = 0.0
    P: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ContractError(f"Gabor sigma must be > 0, got {self.sigma}")
        if self.F < 0:
            raise ContractError(f"Gabor F must be >= 0, got {self.F}")
        if not 0.0 <= self.omega < np.pi:
            raise ContractError(f"Gabor omega must be in [0, pi), got {self.omega}")


DEFAULT_HALF_WIDTH = 7


def default_bank(F=0.2, sigma=0.1, K=1.0, P=0.0):
    return [GaborParams(K, sigma, F, w, P) for w in (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)]


@lru_cache(maxsize=64)
def _kernel_cached(p, half_width):
    r = np.arange(-half_width, half_width + 1, dtype=np.float64)
    x, y = np.meshgrid(r, r, indexing="ij")
    envelope = p.K * np.exp(-np.pi * p.sigma**2 * (x**2 + y**2))
    carrier = np.exp(1j * (2 * np.pi * p.F * (x * np.cos(p.omega) + y * np.sin(p.omega)) + p.P))
    k = envelope * carrier
    k.setflags(write=False)
    return k


def gabor_kernel(p, half_width=DEFAULT_HALF_WIDTH):
    """Complex kernel ``K exp(-pi sigma^2 (x^2+y^2)) exp(j(2 pi F (x cos w + y sin w) + P))``.

    Indexed ``[x + half_width, y + half_width]`` with x along rows and y along
    columns. The returned array is shared and read-only.
    """
    if half_width < 1:
        raise ContractError(f"half_width must be >= 1, got {half_width}")
    return _kernel_cached(p, int(half_width))


def filter_response(img, p, half_width=DEFAULT_HALF_WIDTH):
    """|img * kernel| with same-size zero-padded convolution."""
    return np.abs(kernels.conv2d_same(np.ascontiguousarray(img, dtype=np.float64), gabor_kernel(p, half_width)))


def gabor_response(img, bank, half_width=DEFAULT_HALF_WIDTH):
    """Per-pixel maximum of the filter magnitudes over the bank (unnormalized)."""
    if not bank:
        raise ContractError("Gabor bank is empty")
    out = None
    for p in bank:
        r = filter_response(img, p, half_width)
        out = r if out is None else np.maximum(out, r)
    return out


def gabor_pixels(pixels, bank, half_width=DEFAULT_HALF_WIDTH):
    return minmax(gabor_response(pixels, bank, half_width), degenerate=0.0)


def gabor_image(img, bank, half_width=DEFAULT_HALF_WIDTH):
    return DomainImage(
        gabor_pixels(img.pixels, bank, half_width),
        TIME_SPECTRUM,
        img.label,
        img.subject,
        img.provenance,
        img.source,
    )


def domain_stacks(spatial, bank, half_width=DEFAULT_HALF_WIDTH):
    """Frequency and time-spectrum stacks for an (n, H, W) stack of signal images."""
    freq = np.empty_like(spatial)
    ts = np.empty_like(spatial)
    for i, img in enumerate(spatial):
        freq[i] = frequency_pixels(img)
        ts[i] = gabor_pixels(img, bank, half_width)
    return freq, ts
