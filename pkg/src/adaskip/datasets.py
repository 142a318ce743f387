"""Synthetic classification datasets, fully seeded.

Two generators:

* gaussian_mixture — one spherical blob per class, means spread on a sphere.
  Nearly linearly separable; useful for fast smoke tests.
* rings — classes are concentric annuli in a latent plane, linearly embedded
  into the ambient dimension with additive noise.  Not linearly separable,
  so depth actually earns its accuracy here.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .nnet import Dataset

KINDS = ("gaussian_mixture", "rings")


def _class_labels(n: int, classes: int) -> np.ndarray:
    """Balanced labels (first classes take the remainder), fixed order."""
    per = n // classes
    counts = [per + (1 if c < n % classes else 0) for c in range(classes)]
    return np.repeat(np.arange(classes), counts)


def _gaussian_mixture(n, classes, dim, noise, struct_rng, sample_rng):
    means = struct_rng.normal(size=(classes, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    y = _class_labels(n, classes)
    x = means[y] + noise * sample_rng.normal(size=(n, dim))
    return x, y


def _rings(n, classes, dim, noise, struct_rng, sample_rng):
    # Ring c sits at radius (c + 1) / classes; noise is the radial std as a
    # fraction of the ring gap.  Features stay near unit scale for any
    # class count.
    y = _class_labels(n, classes)
    theta = sample_rng.uniform(0.0, 2.0 * np.pi, size=n)
    radius = (1.0 + y + noise * sample_rng.normal(size=n)) / classes
    plane = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    embed = struct_rng.normal(size=(2, dim)) / np.sqrt(2.0)
    x = plane @ embed + (0.1 * noise / classes) * sample_rng.normal(size=(n, dim))
    return x, y


def make_dataset(kind: str, n: int, classes: int, dim: int, noise: float,
                 seed: int, split: str) -> Dataset:
    """Generate one split; identical arguments give identical bytes.

    Structural randomness (class means, the embedding) depends only on the
    seed, so the train and test splits of one seed describe the same task
    while drawing disjoint sample streams.
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown dataset kind {kind!r}, expected one of {KINDS}")
    if n < classes:
        raise ValidationError(f"need at least one example per class ({classes}), got n={n}")
    if classes < 2:
        raise ValidationError(f"classes must be >= 2, got {classes}")
    if dim < 2:
        raise ValidationError(f"dim must be >= 2, got {dim}")
    if noise < 0.0:
        raise ValidationError(f"noise must be >= 0, got {noise}")
    if split not in ("train", "test"):
        raise ValidationError(f"split must be 'train' or 'test', got {split!r}")
    struct_ss, train_ss, test_ss = np.random.SeedSequence(seed).spawn(3)
    struct_rng = np.random.Generator(np.random.PCG64(struct_ss))
    sample_rng = np.random.Generator(
        np.random.PCG64(train_ss if split == "train" else test_ss)
    )
    gen = _gaussian_mixture if kind == "gaussian_mixture" else _rings
    x, y = gen(n, classes, dim, noise, struct_rng, sample_rng)
    order = sample_rng.permutation(n)
    return Dataset(x=x[order], y=y[order], num_classes=classes, split=split)


def make_splits(kind: str, n_train: int, n_test: int, classes: int, dim: int,
                noise: float, seed: int):
    """Train and test splits of one task (same seed, disjoint streams)."""
    train = make_dataset(kind, n_train, classes, dim, noise, seed, "train")
    test = make_dataset(kind, n_test, classes, dim, noise, seed, "test")
    return train, test
