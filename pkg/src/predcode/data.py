"""Dataset ingestion and synthesis.

IDX is the big-endian container used by the MNIST-family files; loaders
accept plain or gzip-compressed files and never fetch anything over the
network — the expected filenames under a data root are::

    train-images-idx3-ubyte[.gz]   train-labels-idx1-ubyte[.gz]
    t10k-images-idx3-ubyte[.gz]    t10k-labels-idx1-ubyte[.gz]

Pixels are scaled to [0, 1] and then normalized as (x - mean) / std.
Synthetic two-dimensional sets (two moons, two circles, Gaussian
mixtures) cover the small-scale experiments.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np
from sklearn.datasets import make_circles, make_moons

from .tensor import Array, ParameterError, derive_rng, make_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

DATA_DIR_ENV = "PREDCODE_DATA_DIR"


class DataError(ValueError):
    pass


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class CountMismatchError(DataError):
    pass


@dataclass
class Dataset:
    """Flat inputs with optional integer class labels.

    ``mean``/``std`` record the normalization applied to the unit-scaled
    pixels so it can be inverted exactly.
    """

    inputs: Array
    labels: Array | None = None
    name: str = ""
    mean: float = 0.0
    std: float = 1.0
    num_classes: int | None = None
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.inputs):
                raise CountMismatchError(
                    f"{len(self.inputs)} inputs vs {len(self.labels)} labels"
                )
            if self.num_classes is None:
                self.num_classes = int(self.labels.max()) + 1 if len(self.labels) else 0

    def __len__(self) -> int:
        return len(self.inputs)

    def subset(self, idx) -> "Dataset":
        return Dataset(
            self.inputs[idx],
            None if self.labels is None else self.labels[idx],
            self.name, self.mean, self.std, self.num_classes, self.image_shape,
        )


def normalize(x: Array, mean: float, std: float) -> Array:
    return (x - mean) / std


def denormalize(x: Array, mean: float, std: float) -> Array:
    return x * std + mean


def one_hot(labels: Array, num_classes: int) -> Array:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    out = np.zeros((len(labels), num_classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


# ---------------------------------------------------------------------------
# IDX container
# ---------------------------------------------------------------------------

def _open_maybe_gz(path: str):
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, n: int, path: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedFileError(f"{path}: expected {n} more bytes, got {len(data)}")
    return data


def load_idx_images(path: str) -> Array:
    """Raw uint8 image stack of shape (count, rows, cols)."""
    with _open_maybe_gz(path) as f:
        magic, count, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, path))
        if magic != IMAGE_MAGIC:
            raise BadMagicError(f"{path}: magic {magic:#010x} != {IMAGE_MAGIC:#010x}")
        raw = _read_exact(f, count * rows * cols, path)
    return np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)


def load_idx_labels(path: str) -> Array:
    """Raw uint8 label vector."""
    with _open_maybe_gz(path) as f:
        magic, count = struct.unpack(">ii", _read_exact(f, 8, path))
        if magic != LABEL_MAGIC:
            raise BadMagicError(f"{path}: magic {magic:#010x} != {LABEL_MAGIC:#010x}")
        raw = _read_exact(f, count, path)
    return np.frombuffer(raw, dtype=np.uint8)


def write_idx_images(path: str, images: Array) -> None:
    """Write a uint8 (count, rows, cols) stack in IDX layout."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise DataError(f"expected (count, rows, cols), got shape {images.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path: str, labels: Array) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


def load_idx(images_path: str, labels_path: str, mean: float = 0.5,
             std: float = 0.5, name: str = "") -> Dataset:
    """Load an IDX image/label pair into a normalized flat dataset."""
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise CountMismatchError(
            f"{len(images)} images vs {len(labels)} labels "
            f"({images_path}, {labels_path})"
        )
    flat = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(
        normalize(flat, mean, std), labels,
        name=name or os.path.basename(images_path),
        mean=mean, std=std, image_shape=images.shape[1:3],
    )


def _resolve_idx_file(root: str, stem: str) -> str:
    for candidate in (stem, stem + ".gz"):
        path = os.path.join(root, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(
        f"missing {stem}[.gz] under {root!r}; place the IDX files there or "
        f"set {DATA_DIR_ENV}"
    )


def load_mnist_like(root: str, split: str = "train", mean: float = 0.5,
                    std: float = 0.5, name: str = "mnist") -> Dataset:
    """Load MNIST/FashionMNIST-layout IDX files from a directory."""
    if split not in MNIST_FILES:
        raise DataError(f"split must be one of {sorted(MNIST_FILES)}")
    img_stem, lbl_stem = MNIST_FILES[split]
    ds = load_idx(_resolve_idx_file(root, img_stem),
                  _resolve_idx_file(root, lbl_stem), mean, std,
                  name=f"{name}-{split}")
    ds.num_classes = 10
    return ds


def default_data_root() -> str | None:
    return os.environ.get(DATA_DIR_ENV)


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------

def synth(kind: str, n: int, seed: int = 0, noise: float = 0.0,
          factor: float = 0.5, means=None, covs=None, weights=None) -> Dataset:
    """Parametric 2-D datasets with component/class ids as labels."""
    if n <= 0:
        raise ParameterError(f"n must be positive, got {n}")
    if kind == "two_moons":
        x, y = make_moons(n_samples=n, noise=noise, random_state=seed)
    elif kind == "two_circles":
        x, y = make_circles(n_samples=n, noise=noise, factor=factor,
                            random_state=seed)
    elif kind == "gaussian_mixture":
        x, y = _gaussian_mixture(n, seed, means, covs, weights)
    else:
        raise ParameterError(f"unknown synthetic dataset {kind!r}")
    return Dataset(np.asarray(x, dtype=np.float64), y, name=kind)


def _gaussian_mixture(n: int, seed: int, means, covs, weights):
    if means is None:
        means = [[-1.0, 0.0], [1.0, 0.0]]
    means = [np.asarray(m, dtype=np.float64) for m in means]
    k = len(means)
    dim = means[0].shape[0]
    if covs is None:
        covs = [0.05] * k
    expanded = []
    for c in covs:
        c = np.asarray(c, dtype=np.float64)
        if c.ndim == 0:
            c = np.eye(dim) * float(c)  # scalar variance
        expanded.append(np.atleast_2d(c))
    covs = expanded
    if weights is None:
        weights = [1.0 / k] * k
    weights = np.asarray(weights, dtype=np.float64)
    if weights.min() < 0 or not np.isclose(weights.sum(), 1.0):
        raise ParameterError(f"mixture weights must be >= 0 and sum to 1, got {weights}")
    rng = make_rng(seed)
    comp = rng.choice(k, size=n, p=weights)
    x = np.empty((n, dim))
    for j in range(k):
        idx = np.where(comp == j)[0]
        if len(idx):
            x[idx] = rng.multivariate_normal(means[j], covs[j], size=len(idx))
    return x, comp


def load_csv_2d(path: str) -> Dataset:
    """CSV with header ``x1,x2[,label]``; used for external point sets."""
    with open(path) as f:
        header = f.readline().strip().split(",")
    cols = [h.strip().lower() for h in header]
    if cols[:2] != ["x1", "x2"]:
        raise DataError(f"{path}: expected header x1,x2[,label], got {header}")
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    labels = raw[:, 2].astype(np.int64) if len(cols) > 2 else None
    return Dataset(raw[:, :2], labels, name=os.path.basename(path))


# ---------------------------------------------------------------------------
# Corruption transforms (associative-memory cues)
# ---------------------------------------------------------------------------

def corrupt(x: Array, kind: str, sigma: float = 0.2, seed: int = 0,
            image_shape: tuple[int, int] | None = None) -> tuple[Array, Array]:
    """Return (corrupted batch, boolean mask of the intact entries).

    ``gaussian_noise`` adds N(0, sigma^2) everywhere (nothing is intact);
    ``mask_bottom_half`` zeroes the bottom ceil(H/2) rows and marks the
    top rows as intact.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if kind == "gaussian_noise":
        rng = make_rng(seed)
        noisy = x + rng.normal(0.0, sigma, size=x.shape) if sigma > 0 else x.copy()
        return noisy, np.zeros(x.shape[1], dtype=bool)
    if kind == "mask_bottom_half":
        if image_shape is None:
            side = int(round(np.sqrt(x.shape[1])))
            if side * side != x.shape[1]:
                raise DataError(
                    "non-square image width; pass image_shape=(H, W) explicitly"
                )
            image_shape = (side, side)
        h, w = image_shape
        if h * w != x.shape[1]:
            raise DataError(f"image_shape {image_shape} != width {x.shape[1]}")
        keep_rows = h - (h + 1) // 2  # bottom ceil(H/2) rows are erased
        mask2d = np.zeros((h, w), dtype=bool)
        mask2d[:keep_rows] = True
        mask = mask2d.ravel()
        out = x.copy()
        out[:, ~mask] = 0.0
        return out, mask
    raise ParameterError(f"unknown corruption {kind!r}")


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

@dataclass
class BatchIter:
    """Deterministic epoch batching: fixed seed, fixed order."""

    n: int
    batch_size: int
    seed: int = 0
    shuffle: bool = True
    drop_last: bool = False

    def batches(self, epoch: int = 0):
        """Yield index arrays for one epoch; order depends on (seed, epoch)."""
        if self.shuffle:
            order = derive_rng(self.seed, epoch).permutation(self.n)
        else:
            order = np.arange(self.n)
        stop = (self.n // self.batch_size) * self.batch_size if self.drop_last else self.n
        for start in range(0, stop, self.batch_size):
            batch = order[start:start + self.batch_size]
            if len(batch):
                yield batch

    def n_batches(self) -> int:
        if self.drop_last:
            return self.n // self.batch_size
        return (self.n + self.batch_size - 1) // self.batch_size
