"""Datasets: synthetic Gaussian blobs and headerless CSV ingestion."""

from dataclasses import dataclass

import numpy as np

from .rng import gaussian, make_rng

__all__ = ["Dataset", "make_blobs", "load_csv", "save_csv"]


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels).astype(np.intp)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise ValueError("features must be (n, f) with one label per row")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError("every label must lie in [0, n_classes)")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, index):
        return Dataset(self.features[index], self.labels[index], self.n_classes)

    def batches(self, batch_size, rng=None):
        """Yield ``(features, labels)`` minibatches, shuffled when ``rng`` is given."""
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(self), batch_size):
            idx = order[start : start + batch_size]
            yield self.features[idx], self.labels[idx]

    def split(self, fraction, seed):
        """Shuffle once and split into ``(first, second)`` with ``fraction`` in first."""
        order = make_rng(seed, 0x5917).permutation(len(self))
        cut = int(round(fraction * len(self)))
        return self.subset(order[:cut]), self.subset(order[cut:])


def make_blobs(n_samples=600, n_classes=3, n_features=2, spread=1.0, radius=2.0, seed=0):
    """Isotropic Gaussian clusters with centres evenly spaced on a circle.

    Extra feature dimensions beyond the first two have centre 0.
    """
    rng = make_rng(seed, 0xB10B)
    labels = np.arange(n_samples) % n_classes
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    centres = np.zeros((n_classes, n_features))
    centres[:, 0] = radius * np.cos(angles)
    if n_features > 1:
        centres[:, 1] = radius * np.sin(angles)
    features = centres[labels] + gaussian(rng, (n_samples, n_features), std=spread)
    order = rng.permutation(n_samples)
    return Dataset(features[order], labels[order], n_classes)


def load_csv(path, n_classes=None):
    """Read a headerless CSV: feature columns then an integer label column."""
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    if raw.shape[0] < 1 or raw.shape[1] < 2:
        raise ValueError(f"{path}: need at least one row with features and a label")
    labels = raw[:, -1]
    if not np.all(labels == np.round(labels)):
        raise ValueError(f"{path}: label column must hold integers")
    labels = labels.astype(np.intp)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    return Dataset(raw[:, :-1], labels, n_classes)


def save_csv(data, path):
    with open(path, "w") as fh:
        for row, label in zip(data.features, data.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")
