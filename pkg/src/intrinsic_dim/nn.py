"""Flat-parameter classifiers (FC and LeNet-style convnets) with hand-written
reverse-mode gradients.

All network state lives in one flat vector; :func:`layout` maps it to named
tensors.  ``forward`` / ``backward`` are pure functions of
``(arch, params, batch)``.

Architecture descriptors::

    fc:784-200-200-10            input 784, hidden 200 and 200, 10 classes
    lenet:28x28x1                classic plan: conv5x5(6) pool conv5x5(16) pool fc120 fc84 out10
    lenet:14x14x1:conv=2-3:fc=8:out=3:kernel=3
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rng import Stream


class Segment(NamedTuple):
    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class Architecture:
    kind: str                           # "fc" or "lenet"
    input_shape: tuple[int, ...]        # fc: (n_in,); lenet: (H, W, C)
    hidden: tuple[int, ...]             # fc hidden widths, or lenet dense widths
    n_classes: int
    conv_channels: tuple[int, ...] = (6, 16)
    kernel: int = 5

    def __post_init__(self):
        if self.kind not in ("fc", "lenet"):
            raise ValueError(f"unsupported architecture kind {self.kind!r}")
        if self.n_classes < 1:
            raise ValueError("need at least one output")
        if self.kind == "lenet":
            if len(self.input_shape) != 3:
                raise ValueError("lenet input shape must be HxWxC")
            h, w, _ = self._conv_out_hw()
            if h < 1 or w < 1:
                raise ValueError(f"input {self.input_shape} too small for the conv plan")

    def _conv_out_hw(self):
        h, w, c = self.input_shape
        for ch in self.conv_channels:
            h, w = (h - self.kernel + 1) // 2, (w - self.kernel + 1) // 2
            c = ch
        return h, w, c

    @property
    def n_inputs(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def descriptor(self) -> str:
        if self.kind == "fc":
            sizes = (self.input_shape[0], *self.hidden, self.n_classes)
            return "fc:" + "-".join(str(s) for s in sizes)
        h, w, c = self.input_shape
        text = f"lenet:{h}x{w}x{c}"
        if self.conv_channels != (6, 16):
            text += ":conv=" + "-".join(map(str, self.conv_channels))
        if self.hidden != (120, 84):
            text += ":fc=" + "-".join(map(str, self.hidden))
        if self.n_classes != 10:
            text += f":out={self.n_classes}"
        if self.kernel != 5:
            text += f":kernel={self.kernel}"
        return text

    def param_count(self) -> int:
        return param_count(self)

    def init_params(self, seed: int) -> np.ndarray:
        return init_params(self, seed)

    def __str__(self):
        return self.descriptor


def parse_arch(text: str) -> Architecture:
    """Parse an architecture descriptor (see module docstring)."""
    kind, _, rest = text.strip().partition(":")
    if kind == "fc":
        try:
            sizes = [int(s) for s in rest.split("-")]
        except ValueError:
            raise ValueError(f"bad fc descriptor {text!r}") from None
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"bad fc descriptor {text!r}")
        return Architecture("fc", (sizes[0],), tuple(sizes[1:-1]), sizes[-1])
    if kind == "lenet":
        parts = rest.split(":")
        try:
            shape = tuple(int(s) for s in parts[0].lower().split("x"))
            opts = dict(p.split("=", 1) for p in parts[1:])
            conv = tuple(int(s) for s in opts.pop("conv", "6-16").split("-"))
            dense = tuple(int(s) for s in opts.pop("fc", "120-84").split("-"))
            out = int(opts.pop("out", 10))
            kernel = int(opts.pop("kernel", 5))
        except ValueError:
            raise ValueError(f"bad lenet descriptor {text!r}") from None
        if opts or len(shape) != 3:
            raise ValueError(f"bad lenet descriptor {text!r}")
        return Architecture("lenet", shape, dense, out, conv, kernel)
    raise ValueError(f"unsupported architecture kind {kind!r}")


def _plan(arch: Architecture):
    """Ordered ops plus the parameter segments they read."""
    ops, shapes = [], []
    if arch.kind == "fc":
        sizes = (arch.n_inputs, *arch.hidden, arch.n_classes)
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            shapes += [(f"dense{i}.w", (a, b)), (f"dense{i}.b", (b,))]
            ops.append(("dense", 2 * i))
            if i < len(sizes) - 2:
                ops.append(("relu",))
        return ops, shapes
    c_in = arch.input_shape[2]
    k = arch.kernel
    for i, c_out in enumerate(arch.conv_channels):
        shapes += [(f"conv{i}.w", (c_out, c_in, k, k)), (f"conv{i}.b", (c_out,))]
        ops += [("conv", 2 * i), ("relu",), ("pool",)]
        c_in = c_out
    h, w, c = arch._conv_out_hw()
    ops.append(("flatten",))
    sizes = (h * w * c, *arch.hidden, arch.n_classes)
    base = len(shapes)
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        shapes += [(f"dense{i}.w", (a, b)), (f"dense{i}.b", (b,))]
        ops.append(("dense", base + 2 * i))
        if i < len(sizes) - 2:
            ops.append(("relu",))
    return ops, shapes


def layout(arch: Architecture) -> list[Segment]:
    """Contiguous segment table covering ``[0, param_count(arch))``."""
    segs, offset = [], 0
    for name, shape in _plan(arch)[1]:
        seg = Segment(name, offset, shape)
        segs.append(seg)
        offset += seg.size
    return segs


def param_count(arch: Architecture) -> int:
    if not isinstance(arch, Architecture):
        raise TypeError(f"unsupported architecture {arch!r}")
    return sum(s.size for s in layout(arch))


def unflatten(arch: Architecture, params: np.ndarray) -> list[np.ndarray]:
    """Views of ``params`` shaped per the layout."""
    return [params[s.offset:s.offset + s.size].reshape(s.shape) for s in layout(arch)]


def init_params(arch: Architecture, seed: int, dtype=np.float64) -> np.ndarray:
    """He-normal weights (std sqrt(2 / fan_in)), zero biases."""
    out = np.zeros(param_count(arch), dtype=dtype)
    for i, seg in enumerate(layout(arch)):
        if seg.name.endswith(".b"):
            continue
        fan_in = int(np.prod(seg.shape[1:])) if seg.name.startswith("conv") else seg.shape[0]
        vals = Stream(seed, "init", i).normal(seg.size) * np.sqrt(2.0 / fan_in)
        out[seg.offset:seg.offset + seg.size] = vals
    return out


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if len(self.labels) < 1:
            raise ValueError("empty batch")
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs/labels length mismatch")

    def __len__(self):
        return len(self.labels)


def _prepare_inputs(arch: Architecture, x: np.ndarray, dtype) -> np.ndarray:
    n = x.shape[0]
    if x[0].size != arch.n_inputs:
        raise ValueError(f"input size {x[0].size} does not match {arch.descriptor}")
    x = np.asarray(x, dtype=dtype).reshape(n, -1)
    if arch.kind == "lenet":
        h, w, c = arch.input_shape
        x = x.reshape(n, h, w, c).transpose(0, 3, 1, 2)
    return x


def _check(arch: Architecture, params: np.ndarray):
    if params.ndim != 1 or params.shape[0] != param_count(arch):
        raise ValueError(
            f"params length {params.shape} != param_count {param_count(arch)} for {arch.descriptor}")


def _conv_forward(x, w, b):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    ho, wo = h - k + 1, wd - k + 1
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # n, c, ho, wo, k, k
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    y = cols @ w.reshape(o, -1).T + b
    return y.reshape(n, ho, wo, o).transpose(0, 3, 1, 2), cols


def _conv_backward(dy, cols, x_shape, w):
    n, c, h, wd = x_shape
    o, _, k, _ = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    dyr = dy.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = (dyr.T @ cols).reshape(w.shape)
    db = dyr.sum(axis=0)
    dcols = (dyr @ w.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx, dw, db


def _pool_forward(x):
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    xr = x[:, :, :2 * h2, :2 * w2].reshape(n, c, h2, 2, w2, 2)
    xr = xr.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = xr.argmax(axis=-1)[..., None]
    return np.take_along_axis(xr, idx, axis=-1)[..., 0], idx


def _pool_backward(dy, idx, x_shape):
    n, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    dxr = np.zeros((n, c, h2, w2, 4), dtype=dy.dtype)
    np.put_along_axis(dxr, idx, dy[..., None], axis=-1)
    dxr = dxr.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    dx[:, :, :2 * h2, :2 * w2] = dxr
    return dx


def _run(arch, params, x, keep):
    ops = _plan(arch)[0]
    tensors = unflatten(arch, params)
    tape = []
    h = x
    for op in ops:
        kind = op[0]
        if kind == "dense":
            w, b = tensors[op[1]], tensors[op[1] + 1]
            if keep:
                tape.append(h)
            h = h @ w + b
        elif kind == "conv":
            w, b = tensors[op[1]], tensors[op[1] + 1]
            shape = h.shape
            h, cols = _conv_forward(h, w, b)
            if keep:
                tape.append((cols, shape))
        elif kind == "relu":
            mask = h > 0
            if keep:
                tape.append(mask)
            h = h * mask
        elif kind == "pool":
            shape = h.shape
            h, idx = _pool_forward(h)
            if keep:
                tape.append((idx, shape))
        elif kind == "flatten":
            if keep:
                tape.append(h.shape)
            h = h.reshape(h.shape[0], -1)
    return h, tape


def _xent(logits, labels):
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    correct = int((logits.argmax(axis=1) == labels).sum())
    return loss, correct, logp


def _labels(arch, batch):
    y = np.asarray(batch.labels, dtype=np.int64)
    if y.min() < 0 or y.max() >= arch.n_classes:
        raise ValueError("label out of range")
    return y


def logits(arch: Architecture, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    _check(arch, params)
    return _run(arch, params, _prepare_inputs(arch, inputs, params.dtype), keep=False)[0]


def forward(arch: Architecture, params: np.ndarray, batch: Batch) -> tuple[float, int]:
    """Mean softmax cross-entropy and number of argmax hits."""
    _check(arch, params)
    y = _labels(arch, batch)
    out, _ = _run(arch, params, _prepare_inputs(arch, batch.inputs, params.dtype), keep=False)
    loss, correct, _ = _xent(out, y)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    return float(loss), correct


def loss_and_grad(arch: Architecture, params: np.ndarray, batch: Batch):
    """``(loss, correct, gradient)`` from one forward/backward sweep."""
    _check(arch, params)
    y = _labels(arch, batch)
    x = _prepare_inputs(arch, batch.inputs, params.dtype)
    out, tape = _run(arch, params, x, keep=True)
    loss, correct, logp = _xent(out, y)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")

    n = len(y)
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    g = (delta / n).astype(params.dtype)

    grad = np.zeros_like(params)
    gviews = unflatten(arch, grad)
    tensors = unflatten(arch, params)
    for op in reversed(_plan(arch)[0]):
        kind = op[0]
        saved = tape.pop()
        if kind == "dense":
            w = tensors[op[1]]
            gviews[op[1]][...] = saved.T @ g
            gviews[op[1] + 1][...] = g.sum(axis=0)
            g = g @ w.T
        elif kind == "conv":
            cols, shape = saved
            g, dw, db = _conv_backward(g, cols, shape, tensors[op[1]])
            gviews[op[1]][...] = dw
            gviews[op[1] + 1][...] = db
        elif kind == "relu":
            g = g * saved
        elif kind == "pool":
            idx, shape = saved
            g = _pool_backward(g, idx, shape)
        elif kind == "flatten":
            g = g.reshape(saved)
    return float(loss), correct, grad


def backward(arch: Architecture, params: np.ndarray, batch: Batch) -> np.ndarray:
    """Gradient of the batch-mean loss with respect to every parameter."""
    return loss_and_grad(arch, params, batch)[2]


def finite_diff_grad(arch: Architecture, params: np.ndarray, batch: Batch, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient, one coordinate at a time (test oracle)."""
    if not h > 0:
        raise ValueError("step h must be positive")
    params = np.array(params, dtype=np.float64)
    out = np.empty_like(params)
    for i in range(params.size):
        old = params[i]
        params[i] = old + h
        fp = forward(arch, params, batch)[0]
        params[i] = old - h
        fm = forward(arch, params, batch)[0]
        params[i] = old
        out[i] = (fp - fm) / (2 * h)
    return out


def batched_logits(arch: Architecture, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Logits for P parameter vectors at once; ``params`` is (P, D), ``inputs`` (P, n_in)."""
    if arch.kind != "fc":
        raise ValueError("batched evaluation supports fc architectures only")
    h = inputs[:, None, :]
    segs = layout(arch)
    n_layers = len(segs) // 2
    for i in range(n_layers):
        ws, bs = segs[2 * i], segs[2 * i + 1]
        w = params[:, ws.offset:ws.offset + ws.size].reshape(-1, *ws.shape)
        b = params[:, bs.offset:bs.offset + bs.size]
        h = np.matmul(h, w) + b[:, None, :]
        if i < n_layers - 1:
            h = np.maximum(h, 0)
    return h[:, 0, :]
