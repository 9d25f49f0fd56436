"""Multidomain inertial activity recognition: signal images, DFT and Gabor
domain images, per-domain CNNs, two-stage CCA fusion and a linear SVM."""

__version__ = "0.1.0"
