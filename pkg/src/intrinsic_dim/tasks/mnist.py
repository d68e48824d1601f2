"""IDX ingestion, MNIST datasets and their permuted variants."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import nn
from ..rng import Stream

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MNIST_ENV = "INTRINSIC_DIM_MNIST"

_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IDXError(ValueError):
    pass


def read_idx(path, expected_magic: int | None = None) -> np.ndarray:
    """Read an unsigned-byte IDX file (big-endian header) into a uint8 array."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IDXError(f"{path}: truncated header")
    magic = struct.unpack(">I", raw[:4])[0]
    if expected_magic is not None and magic != expected_magic:
        raise IDXError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if magic >> 8 != 0x08:
        raise IDXError(f"{path}: unsupported IDX type 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IDXError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    n = int(np.prod(dims))
    if len(raw) - header < n:
        raise IDXError(f"{path}: truncated, expected {n} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=header).reshape(dims)


@dataclass
class Split:
    inputs: np.ndarray      # (n, 784) float64 in [0, 1]
    labels: np.ndarray      # (n,) int64

    def __len__(self):
        return len(self.labels)


def load_mnist(images_path, labels_path) -> Split:
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IDXError(f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Split(x, labels.astype(np.int64))


@dataclass
class Dataset:
    name: str
    train: Split
    val: Split
    meta: dict = field(default_factory=dict)
    measure: str = "val"        # which split's accuracy is the performance

    @property
    def input_size(self) -> int:
        return self.train.inputs.shape[1]


def mnist_dir(path=None) -> Path:
    path = path or os.environ.get(MNIST_ENV)
    if not path:
        raise FileNotFoundError(f"no MNIST directory given (pass a path or set {MNIST_ENV})")
    path = Path(path)
    for pair in _FILES.values():
        for name in pair:
            if not (path / name).exists():
                raise FileNotFoundError(f"missing MNIST file {path / name}")
    return path


def mnist_dataset(path=None, n_train: int = 50_000) -> Dataset:
    """First ``n_train`` official training images for training, the official
    test split for validation."""
    root = mnist_dir(path)
    train = load_mnist(*(root / f for f in _FILES["train"]))
    val = load_mnist(*(root / f for f in _FILES["test"]))
    train = Split(train.inputs[:n_train], train.labels[:n_train])
    return Dataset("mnist", train, val, {"n_train": len(train)})


def shuffle_pixels(ds: Dataset, seed: int | None) -> Dataset:
    """Apply one fixed pixel permutation to every train and val image.
    ``seed=None`` is the identity permutation."""
    n = ds.input_size
    perm = np.arange(n) if seed is None else Stream(seed, "pixel-permutation").permutation(n)
    meta = dict(ds.meta, pixel_permutation_seed=seed)
    return replace(ds, name=ds.name + "-shuffled-pixels",
                   train=Split(ds.train.inputs[:, perm], ds.train.labels),
                   val=Split(ds.val.inputs[:, perm], ds.val.labels), meta=meta)


def shuffle_labels(ds: Dataset, seed: int, fraction: float = 1.0, n_classes: int = 10) -> Dataset:
    """Keep ``floor(fraction * n)`` random training examples and give them
    uniform random labels.  Performance becomes training accuracy."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    n = len(ds.train)
    keep = int(np.floor(fraction * n))
    s = Stream(seed, "label-shuffle")
    idx = np.sort(s.permutation(n)[:keep])
    labels = s.integers(keep, n_classes)
    meta = dict(ds.meta, label_shuffle_seed=seed, label_fraction=fraction)
    return replace(ds, name=ds.name + "-shuffled-labels",
                   train=Split(ds.train.inputs[idx], labels), meta=meta, measure="train")


def evaluate_split(arch: nn.Architecture, params: np.ndarray, split: Split, chunk: int = 2000):
    """``(accuracy, mean loss)`` over a whole split."""
    total_loss, correct = 0.0, 0
    for start in range(0, len(split), chunk):
        b = nn.Batch(split.inputs[start:start + chunk], split.labels[start:start + chunk])
        loss, c = nn.forward(arch, params, b)
        total_loss += loss * len(b)
        correct += c
    return correct / len(split), total_loss / len(split)


class SupervisedTask:
    """Classifier ``arch`` on ``dataset`` in the shape ``optimize.train`` expects."""

    def __init__(self, arch: nn.Architecture, dataset: Dataset):
        if arch.n_inputs != dataset.input_size:
            raise ValueError(f"{arch.descriptor} expects {arch.n_inputs} inputs, "
                             f"dataset has {dataset.input_size}")
        self.arch, self.dataset = arch, dataset
        self.descriptor = arch.descriptor
        self.name = dataset.name

    def param_count(self) -> int:
        return nn.param_count(self.arch)

    def init_params(self, seed: int) -> np.ndarray:
        return nn.init_params(self.arch, seed)

    def batches(self, epoch: int, seed: int, batch_size: int):
        train = self.dataset.train
        order = Stream(seed, "shuffle", epoch).permutation(len(train))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            yield nn.Batch(train.inputs[idx], train.labels[idx])

    def loss_grad(self, theta, batch):
        loss, correct, grad = nn.loss_and_grad(self.arch, theta, batch)
        return loss, grad, correct

    def evaluate(self, theta) -> dict:
        val_acc, val_loss = evaluate_split(self.arch, theta, self.dataset.val)
        out = {"val_acc": val_acc, "val_loss": val_loss, "performance": val_acc}
        if self.dataset.measure == "train":
            acc, loss = evaluate_split(self.arch, theta, self.dataset.train)
            out.update(train_acc=acc, train_loss=loss, performance=acc)
        return out
