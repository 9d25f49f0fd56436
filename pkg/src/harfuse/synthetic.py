"""Synthetic 6-class inertial dataset whose classes are split across domains.

Three class pairs, each with one kind of content:

* ``tone_slow`` / ``tone_fast``: a faint sinusoid on every channel (random
  phases) at 3 or 6 cycles per window. Under the noise floor the raw image
  shows little, the DFT magnitude concentrates it in one bin, and both tones
  sit far below the Gabor bank's centre frequency, so the time-spectrum branch
  barely sees the difference.
* ``wave_up`` / ``wave_down``: a travelling wave near the Gabor frequency whose
  phase advances or retreats from channel to channel, i.e. an oriented texture
  in the signal image.
* ``bump_acc`` / ``bump_gyro``: a short pulse at a random time on the three
  accelerometer channels or on the three gyroscope channels. The two row
  patterns are complementary, so their DFT magnitudes coincide and only the
  raw layout separates them.
"""
import json
from pathlib import Path

import numpy as np

from harfuse.dataset import CSV_HEADER, N_CHANNELS, WINDOW_LENGTH

CLASSES = ("tone_slow", "tone_fast", "wave_up", "wave_down", "bump_acc", "bump_gyro")


TONE_AMPLITUDE = 0.3


def synth_window(label, rng, noise=0.35):
    t = np.arange(WINDOW_LENGTH)
    x = noise * rng.standard_normal((N_CHANNELS, WINDOW_LENGTH))
    amp = rng.uniform(0.8, 1.2)
    if label in (0, 1):
        cycles = 3 if label == 0 else 6
        phase = rng.uniform(0, 2 * np.pi, size=(N_CHANNELS, 1))
        x += TONE_AMPLITUDE * amp * np.sin(2 * np.pi * cycles * t / WINDOW_LENGTH + phase)
    elif label in (2, 3):
        sign = 1.0 if label == 2 else -1.0
        cycles = rng.uniform(9.0, 11.0)
        phase0 = rng.uniform(0, 2 * np.pi)
        step = sign * np.pi / 3
        ch = np.arange(N_CHANNELS)[:, None]
        x += amp * np.sin(2 * np.pi * cycles * t / WINDOW_LENGTH + phase0 + step * ch)
    else:
        rows = slice(0, 3) if label == 4 else slice(3, 6)
        centre = rng.uniform(8, WINDOW_LENGTH - 8)
        pulse = np.exp(-0.5 * ((t - centre) / 2.5) ** 2)
        x[rows] += 2.0 * amp * pulse
    return x


def make_fixture(root, windows_per_class=150, windows_per_recording=2, n_subjects=4, seed=0):
    """Write a complementary 6-class dataset (CSV recordings + manifest.json) to ``root``.

    Each recording concatenates ``windows_per_recording`` synthetic windows, so
    windowing with overlap 0 recovers them exactly.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_rec = -(-windows_per_class // windows_per_recording)
    entries = []
    for label, name in enumerate(CLASSES):
        for r in range(n_rec):
            parts = [synth_window(label, rng) for _ in range(windows_per_recording)]
            rec = np.concatenate(parts, axis=1).T
            subject = f"s{r % n_subjects + 1}"
            rel = f"{name}/{subject}_t{r:03d}.csv"
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            t = np.arange(rec.shape[0]) / 50.0
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(",".join(CSV_HEADER) + "\n")
                for ti, row in zip(t, rec):
                    fh.write(f"{ti:.2f}," + ",".join(f"{v:.9g}" for v in row) + "\n")
            entries.append({"path": rel, "label": name, "subject": subject, "trial": f"t{r:03d}"})
    manifest = {"name": "synthetic-complementary", "classes": list(CLASSES), "sampling_rate_hz": 50, "entries": entries}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return root
