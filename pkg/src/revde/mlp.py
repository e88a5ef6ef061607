"""Forward-only MLP classification error over image data.

The network is 196-20-10 with NO bias terms; that is the only
decomposition giving the documented 4120-weight count
(196*20 + 20*10 = 3920 + 200).  A candidate weight vector lays out the
input->hidden block first (row-major, 3920 entries) followed by the
hidden->output block (200 entries).

Includes an IDX-format reader/writer (the MNIST distribution format,
gzip detected by magic bytes) and 2x2 average-pool downsampling from
28x28 to 14x14.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from ._accel import njit, select
from .engine import BoxBounds, Objective

__all__ = [
    "MlpShape",
    "SHAPE",
    "ImageDataset",
    "IdxError",
    "IdxMagicError",
    "IdxTruncatedError",
    "IdxCountMismatchError",
    "load_idx",
    "write_idx_images",
    "write_idx_labels",
    "downsample",
    "split_weights",
    "forward",
    "classification_error",
    "classification_error_batch",
    "prepare_dataset",
    "make_error_objective",
    "DEFAULT_WEIGHT_BOUNDS",
]

_IMAGES_MAGIC = 0x00000803
_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class MlpShape:
    input_dim: int = 196
    hidden_dim: int = 20
    output_dim: int = 10

    @property
    def hidden_weights(self) -> int:
        return self.input_dim * self.hidden_dim

    @property
    def output_weights(self) -> int:
        return self.hidden_dim * self.output_dim

    @property
    def total_weights(self) -> int:
        return self.hidden_weights + self.output_weights


SHAPE = MlpShape()

# optimizer box for each of the 4120 coordinates
DEFAULT_WEIGHT_BOUNDS = BoxBounds(
    lower=np.full(SHAPE.total_weights, -1.0),
    upper=np.full(SHAPE.total_weights, 1.0),
)


@dataclass(frozen=True)
class ImageDataset:
    """Flat image rows in [0, 1] plus integer class labels 0..9."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 2 or images.shape[0] == 0:
            raise ValueError(f"images must be a non-empty (N, P) array, got {images.shape}")
        if labels.shape != (images.shape[0],):
            raise ValueError(
                f"labels must have shape ({images.shape[0]},), got {labels.shape}"
            )
        if images.min() < 0.0 or images.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        if labels.min() < 0 or labels.max() > 9:
            raise ValueError("labels must lie in 0..9")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    @property
    def count(self) -> int:
        return self.images.shape[0]

    @property
    def pixels(self) -> int:
        return self.images.shape[1]


class IdxError(Exception):
    """Base for IDX parsing failures."""


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


def _read_idx_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(fh) as gz:
                return gz.read()
        return fh.read()


def _parse_idx_images(path) -> np.ndarray:
    data = _read_idx_bytes(path)
    if len(data) < 16:
        raise IdxTruncatedError(f"{path}: header needs 16 bytes, file has {len(data)}")
    magic, count, rows, cols = struct.unpack(">iiii", data[:16])
    if magic != _IMAGES_MAGIC:
        raise IdxMagicError(
            f"{path}: bad image magic 0x{magic:08x}, expected 0x{_IMAGES_MAGIC:08x}"
        )
    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise IdxTruncatedError(
            f"{path}: expected {expected} bytes for {count} images of {rows}x{cols}, got {len(data)}"
        )
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0


def _parse_idx_labels(path) -> np.ndarray:
    data = _read_idx_bytes(path)
    if len(data) < 8:
        raise IdxTruncatedError(f"{path}: header needs 8 bytes, file has {len(data)}")
    magic, count = struct.unpack(">ii", data[:8])
    if magic != _LABELS_MAGIC:
        raise IdxMagicError(
            f"{path}: bad label magic 0x{magic:08x}, expected 0x{_LABELS_MAGIC:08x}"
        )
    if len(data) != 8 + count:
        raise IdxTruncatedError(
            f"{path}: expected {8 + count} bytes for {count} labels, got {len(data)}"
        )
    return np.frombuffer(data, dtype=np.uint8, offset=8).astype(np.int64)


def load_idx(images_path, labels_path) -> ImageDataset:
    """Read an IDX image/label file pair (plain or gzip-compressed)."""
    images = _parse_idx_images(images_path)
    labels = _parse_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images_path} has {images.shape[0]} images but "
            f"{labels_path} has {labels.shape[0]} labels"
        )
    return ImageDataset(images=images, labels=labels)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write uint8 images of shape (N, H, W) in IDX format (gzip if *.gz)."""
    arr = np.asarray(images)
    if arr.ndim != 3:
        raise ValueError(f"images must be (N, H, W), got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValueError(f"images must be uint8, got {arr.dtype}")
    n, rows, cols = arr.shape
    payload = struct.pack(">iiii", _IMAGES_MAGIC, n, rows, cols) + arr.tobytes()
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(payload)


def write_idx_labels(path, labels: np.ndarray) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("labels must fit in a byte")
    payload = struct.pack(">ii", _LABELS_MAGIC, arr.size) + arr.astype(np.uint8).tobytes()
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(payload)


def downsample(images: np.ndarray) -> np.ndarray:
    """28x28 -> 14x14 by non-overlapping 2x2 average pooling."""
    arr = np.asarray(images, dtype=np.float64)
    single = arr.ndim == 1 or (arr.ndim == 2 and arr.shape == (28, 28))
    if arr.ndim == 1:
        arr = arr[None, :]
    elif arr.ndim == 2 and arr.shape == (28, 28):
        arr = arr[None, :, :]
    if arr.ndim == 2:
        if arr.shape[1] != 784:
            raise ValueError(f"expected 784 pixels per row, got {arr.shape[1]}")
        arr = arr.reshape(-1, 28, 28)
    elif arr.ndim == 3:
        if arr.shape[1:] != (28, 28):
            raise ValueError(f"expected 28x28 images, got {arr.shape[1:]}")
    else:
        raise ValueError(f"cannot interpret shape {arr.shape} as 28x28 images")
    pooled = arr.reshape(-1, 14, 2, 14, 2).mean(axis=(2, 4))
    flat = pooled.reshape(-1, 196)
    return flat[0] if single else flat


def split_weights(weights: np.ndarray, shape: MlpShape = SHAPE):
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (shape.total_weights,):
        raise ValueError(
            f"weight vector must have {shape.total_weights} entries, got shape {w.shape}"
        )
    w1 = w[: shape.hidden_weights].reshape(shape.hidden_dim, shape.input_dim)
    w2 = w[shape.hidden_weights :].reshape(shape.output_dim, shape.hidden_dim)
    return w1, w2


def forward(weights: np.ndarray, image: np.ndarray, shape: MlpShape = SHAPE) -> np.ndarray:
    """Softmax class probabilities for one image."""
    x = np.asarray(image, dtype=np.float64)
    if x.shape != (shape.input_dim,):
        raise ValueError(f"image must have {shape.input_dim} pixels, got shape {x.shape}")
    w1, w2 = split_weights(weights, shape)
    h = np.maximum(w1 @ x, 0.0)
    logits = w2 @ h
    e = np.exp(logits - logits.max())
    return e / e.sum()


# ----------------------------------------------------------------------
# batch error kernels
# ----------------------------------------------------------------------

def _error_batch_numpy(weights_batch, images, labels, hidden_dim, output_dim):
    k = weights_batch.shape[0]
    split = images.shape[1] * hidden_dim
    errors = np.empty(k)
    for i in range(k):
        w1 = weights_batch[i, :split].reshape(hidden_dim, images.shape[1])
        w2 = weights_batch[i, split:].reshape(output_dim, hidden_dim)
        h = np.maximum(images @ w1.T, 0.0)
        logits = h @ w2.T
        pred = np.argmax(logits, axis=1)
        errors[i] = np.mean(pred != labels)
    return errors


def _error_batch_loop(weights_batch, images, labels, hidden_dim, output_dim):
    # matmuls still go through BLAS (np.dot); jit only buys the argmax loop
    k = weights_batch.shape[0]
    n, p = images.shape
    split = p * hidden_dim
    errors = np.empty(k)
    for i in range(k):
        w1t = np.ascontiguousarray(weights_batch[i, :split].reshape(hidden_dim, p).T)
        w2t = np.ascontiguousarray(
            weights_batch[i, split:].reshape(output_dim, hidden_dim).T
        )
        h = np.maximum(np.dot(images, w1t), 0.0)
        logits = np.dot(h, w2t)
        wrong = 0
        for s in range(n):
            best_c = 0
            best_v = logits[s, 0]
            for c in range(1, output_dim):
                if logits[s, c] > best_v:   # strict: ties keep the lowest class
                    best_v = logits[s, c]
                    best_c = c
            if best_c != labels[s]:
                wrong += 1
        errors[i] = wrong / n
    return errors


_error_batch_numba = njit(cache=True, nogil=True)(_error_batch_loop)
_error_batch = select(_error_batch_numba, _error_batch_numpy)


def classification_error(weights, dataset: ImageDataset, shape: MlpShape = SHAPE) -> float:
    """Fraction of dataset rows whose argmax class differs from the label.

    Softmax is monotone, so the argmax is taken on the logits directly;
    ties resolve to the lowest class index.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (shape.total_weights,):
        raise ValueError(
            f"weight vector must have {shape.total_weights} entries, got shape {w.shape}"
        )
    return float(classification_error_batch(w[None, :], dataset, shape)[0])


def classification_error_batch(
    weights_batch, dataset: ImageDataset, shape: MlpShape = SHAPE
) -> np.ndarray:
    wb = np.ascontiguousarray(weights_batch, dtype=np.float64)
    if wb.ndim != 2 or wb.shape[1] != shape.total_weights:
        raise ValueError(
            f"expected a (K, {shape.total_weights}) weight batch, got shape {wb.shape}"
        )
    if dataset.pixels != shape.input_dim:
        raise ValueError(
            f"dataset rows have {dataset.pixels} pixels, the network expects {shape.input_dim}"
        )
    return _error_batch(wb, dataset.images, dataset.labels, shape.hidden_dim, shape.output_dim)


def prepare_dataset(
    dataset: ImageDataset,
    train_size: int | None = None,
    shuffle_seed: int | None = None,
) -> ImageDataset:
    """Downsample 28x28 rows to 196 pixels and optionally subset.

    The subset is the first ``train_size`` records, matching a
    deterministic read of the source file; pass ``shuffle_seed`` to draw
    a seeded random subset instead.
    """
    images, labels = dataset.images, dataset.labels
    if images.shape[1] == 784:
        images = downsample(images)
    elif images.shape[1] != SHAPE.input_dim:
        raise ValueError(f"cannot prepare rows of {images.shape[1]} pixels")
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(images.shape[0])
        images, labels = images[order], labels[order]
    if train_size is not None:
        if not (0 < train_size <= images.shape[0]):
            raise ValueError(
                f"train_size must be in 1..{images.shape[0]}, got {train_size}"
            )
        images, labels = images[:train_size], labels[:train_size]
    return ImageDataset(images=images, labels=labels)


def make_error_objective(
    dataset: ImageDataset,
    bounds: BoxBounds = DEFAULT_WEIGHT_BOUNDS,
    threads=None,
) -> Objective:
    """Engine-facing objective: candidate weights -> training error."""
    if dataset.pixels != SHAPE.input_dim:
        raise ValueError("prepare_dataset must be applied before optimization")

    def batch(x: np.ndarray) -> np.ndarray:
        return classification_error_batch(x, dataset)

    return Objective(batch, bounds, name="mlp_error", threads=threads)
