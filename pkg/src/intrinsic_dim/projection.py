"""Random D x d maps with unit-norm columns.

Three realizations share one interface (``project``, ``project_adjoint``,
``materialize_column``):

* dense: i.i.d. standard normal entries, each column rescaled to norm 1.
* sparse: each entry nonzero with probability 1/sqrt(D), sign +-1 with equal
  probability, each column rescaled to norm 1.  Stored as a CSC matrix.
* fastfood: ceil(D / l) stacked blocks ``H G Pi H B`` of side ``l`` (the next
  power of two >= d), input zero-padded to ``l``, rows beyond D dropped.  Only
  the diagonals and permutations are stored, O(D) memory.

Fastfood normalization: a block column has norm ``sqrt(l) * ||g||`` so every
block is scaled by ``1 / (sqrt(l) ||g||)``.  The stack then has column norms
``sqrt(n_full + q_j)`` where ``q_j`` is the squared norm of column ``j`` of
the truncated last block; a per-column input scale ``1 / sqrt(n_full + q_j)``
makes every column of the final D x d map exactly unit norm.

Every projection is a deterministic function of ``(kind, D, d, seed)``; all
randomness comes from :class:`intrinsic_dim.rng.Stream` keyed by column (dense,
sparse) or block (fastfood).
"""
from __future__ import annotations

import enum
import hashlib
import math

import numpy as np
import scipy.sparse as sp

from .rng import Stream


class ProjectionKind(enum.IntEnum):
    DENSE = 0
    SPARSE = 1
    FASTFOOD = 2

    @classmethod
    def parse(cls, value) -> "ProjectionKind":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown projection kind {value!r}") from None
        return cls(int(value))


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def next_power_of_two(n: int) -> int:
    return 1 << max(0, (int(n) - 1).bit_length())


def fwht(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform (Sylvester ordering) along ``axis``.

    Returns a new array; ``fwht(fwht(x)) == len * x``.
    """
    x = np.array(np.moveaxis(np.asarray(x, dtype=np.float64), axis, -1), order="C")
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"fwht length must be a power of two, got {n}")
    lead = x.shape[:-1]
    h = 1
    while h < n:
        y = x.reshape(*lead, n // (2 * h), 2, h)
        a = y[..., 0, :].copy()
        y[..., 0, :] += y[..., 1, :]
        y[..., 1, :] = a - y[..., 1, :]
        h *= 2
    return np.moveaxis(x, -1, axis)


class Projection:
    """Common interface; build instances with :func:`make_projection`."""

    kind: ProjectionKind

    def __init__(self, D: int, d: int, seed: int):
        self.D, self.d, self.seed = int(D), int(d), int(seed)

    def project(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.d,):
            raise ValueError(f"expected vector of length {self.d}, got shape {v.shape}")
        return self._project(v)

    def project_adjoint(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.D,):
            raise ValueError(f"expected vector of length {self.D}, got shape {g.shape}")
        return self._adjoint(g)

    def materialize_column(self, j: int) -> np.ndarray:
        if not 0 <= j < self.d:
            raise IndexError(f"column {j} out of range for d={self.d}")
        e = np.zeros(self.d)
        e[j] = 1.0
        return self._project(e)

    def materialize_columns(self, cols) -> np.ndarray:
        """Columns ``cols`` as a ``(D, len(cols))`` array."""
        cols = np.asarray(cols, dtype=np.int64)
        if cols.size and (cols.min() < 0 or cols.max() >= self.d):
            raise IndexError(f"column index out of range for d={self.d}")
        return self._columns(cols)

    def _columns(self, cols):
        return np.stack([self.materialize_column(int(j)) for j in cols], axis=1).reshape(self.D, -1)

    def to_dense(self) -> np.ndarray:
        """Full D x d matrix (tests and small problems)."""
        return self.materialize_columns(np.arange(self.d))

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in self._state_arrays())

    def digest(self) -> str:
        h = hashlib.sha256(f"{self.kind.name}:{self.D}:{self.d}:{self.seed}".encode())
        for a in self._state_arrays():
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def __repr__(self):
        return f"{type(self).__name__}(D={self.D}, d={self.d}, seed={self.seed})"


class DenseProjection(Projection):
    kind = ProjectionKind.DENSE

    def __init__(self, D, d, seed):
        super().__init__(D, d, seed)
        # row j of matrix_t is column j of P
        self.matrix_t = np.empty((self.d, self.D))
        for j in range(self.d):
            col = Stream(self.seed, "dense", j).normal(self.D)
            self.matrix_t[j] = col / np.linalg.norm(col)

    def _project(self, v):
        return v @ self.matrix_t

    def _adjoint(self, g):
        return self.matrix_t @ g

    def materialize_column(self, j):
        if not 0 <= j < self.d:
            raise IndexError(f"column {j} out of range for d={self.d}")
        return self.matrix_t[j].copy()

    def _columns(self, cols):
        return self.matrix_t[cols].T.copy()

    def _state_arrays(self):
        return [self.matrix_t]


def _sparse_column(D: int, seed: int, j: int, attempt: int) -> np.ndarray:
    """Row indices of the nonzeros of one column: a Bernoulli(1/sqrt(D))
    process over ``range(D)`` sampled by geometric gap skipping."""
    p = 1.0 / math.sqrt(D)
    if p >= 1.0:
        return np.arange(D)
    stream = Stream(seed, "sparse-rows", j, attempt)
    log_q = math.log1p(-p)
    mean = D * p
    chunk = int(mean + 6 * math.sqrt(mean) + 16)
    rows, last = [], -1
    while True:
        u = 1.0 - stream.uniform(chunk)        # (0, 1]
        gaps = np.floor(np.log(u) / log_q).astype(np.int64)
        pos = last + np.cumsum(gaps + 1)
        rows.append(pos[pos < D])
        if pos[-1] >= D:
            return np.concatenate(rows)
        last = int(pos[-1])


class SparseProjection(Projection):
    kind = ProjectionKind.SPARSE

    def __init__(self, D, d, seed):
        super().__init__(D, d, seed)
        indices, data, indptr = [], [], [0]
        for j in range(self.d):
            attempt = 0
            rows = _sparse_column(self.D, self.seed, j, attempt)
            while rows.size == 0:
                attempt += 1
                rows = _sparse_column(self.D, self.seed, j, attempt)
            signs = Stream(self.seed, "sparse-signs", j, attempt).signs(rows.size)
            indices.append(rows)
            data.append(signs / math.sqrt(rows.size))
            indptr.append(indptr[-1] + rows.size)
        self.matrix = sp.csc_matrix(
            (np.concatenate(data), np.concatenate(indices).astype(np.int32), np.asarray(indptr)),
            shape=(self.D, self.d))
        self._matrix_t = self.matrix.T.tocsr()

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def _project(self, v):
        return self.matrix @ v

    def _adjoint(self, g):
        return self._matrix_t @ g

    def _columns(self, cols):
        return self.matrix[:, cols].toarray()

    def _state_arrays(self):
        return [self.matrix.data, self.matrix.indices, self.matrix.indptr]


class FastfoodProjection(Projection):
    kind = ProjectionKind.FASTFOOD

    def __init__(self, D, d, seed):
        super().__init__(D, d, seed)
        l = self.block_len = next_power_of_two(self.d)
        nb = self.n_blocks = -(-self.D // l)
        self.B = np.empty((nb, l), dtype=np.int8)
        self.perm = np.empty((nb, l), dtype=np.int32)
        self.G = np.empty((nb, l))
        self.block_scale = np.empty(nb)
        for b in range(nb):
            self._sample_block(b, 0)

        kept = self.D - (nb - 1) * l      # rows kept from the last block
        n_full = nb - 1 if kept < l else nb
        if kept < l:
            q = self._partial_norms(kept)
            attempt = 0
            while q.min() < 1e-12:
                attempt += 1
                self._sample_block(nb - 1, attempt)
                q = self._partial_norms(kept)
        else:
            q = np.zeros(self.d)
        self.col_scale = 1.0 / np.sqrt(n_full + q)

    def _sample_block(self, b: int, attempt: int):
        l = self.block_len
        s = Stream(self.seed, "fastfood", b, attempt)
        self.B[b] = s.signs(l).astype(np.int8)
        self.perm[b] = s.permutation(l)
        self.G[b] = s.normal(l)
        self.block_scale[b] = 1.0 / (math.sqrt(l) * np.linalg.norm(self.G[b]))

    # raw stacked map on (..., l) inputs; returns (..., n_blocks, l)
    def _blocks_forward(self, x, blocks=slice(None)):
        B, perm, G = self.B[blocks], self.perm[blocks], self.G[blocks]
        y = fwht(x[..., None, :] * B)
        y = np.take_along_axis(y, np.broadcast_to(perm, y.shape), axis=-1)
        y = fwht(y * G)
        return y * self.block_scale[blocks][:, None]

    def _blocks_adjoint(self, y, blocks=slice(None)):
        B, perm, G = self.B[blocks], self.perm[blocks], self.G[blocks]
        z = fwht(y * self.block_scale[blocks][:, None]) * G
        w = np.empty_like(z)
        np.put_along_axis(w, np.broadcast_to(perm, z.shape), z, axis=-1)
        return (fwht(w) * B).sum(axis=-2)

    def _partial_norms(self, kept: int) -> np.ndarray:
        """Squared norms of the first ``kept`` rows of each used column of the
        last block (block columns have unit norm, so count the cheaper side)."""
        l, last = self.block_len, slice(self.n_blocks - 1, self.n_blocks)
        dropped = l - kept
        if min(kept, dropped) <= self.d:
            # rows of the block are columns of its transpose
            rows = np.arange(kept) if kept <= dropped else np.arange(kept, l)
            q = np.zeros(self.d)
            for start in range(0, rows.size, 256):
                r = rows[start:start + 256]
                e = np.zeros((r.size, 1, l))
                e[np.arange(r.size), 0, r] = 1.0
                q += (self._blocks_adjoint(e, last)[:, :self.d] ** 2).sum(axis=0)
            return q if kept <= dropped else 1.0 - q
        q = np.zeros(self.d)
        for start in range(0, self.d, 256):
            cols = np.arange(start, min(self.d, start + 256))
            e = np.zeros((cols.size, l))
            e[np.arange(cols.size), cols] = 1.0
            q[cols] = (self._blocks_forward(e, last)[:, 0, :kept] ** 2).sum(axis=-1)
        return q

    def _project(self, v):
        x = np.zeros(self.block_len)
        x[:self.d] = v * self.col_scale
        return self._blocks_forward(x).reshape(-1)[:self.D]

    def _adjoint(self, g):
        y = np.zeros(self.n_blocks * self.block_len)
        y[:self.D] = g
        x = self._blocks_adjoint(y.reshape(self.n_blocks, self.block_len))
        return x[:self.d] * self.col_scale

    def _columns(self, cols):
        x = np.zeros((cols.size, self.block_len))
        x[np.arange(cols.size), cols] = self.col_scale[cols]
        out = self._blocks_forward(x).reshape(cols.size, -1)[:, :self.D]
        return out.T.copy()

    def block_matrix(self, b: int) -> np.ndarray:
        """Explicit l x l matrix of block ``b`` (including its block scale)."""
        from scipy.linalg import hadamard
        l = self.block_len
        H = hadamard(l).astype(np.float64)
        Pi = np.zeros((l, l))
        Pi[np.arange(l), self.perm[b]] = 1.0
        return self.block_scale[b] * (H @ np.diag(self.G[b]) @ Pi @ H @ np.diag(self.B[b].astype(float)))

    def _state_arrays(self):
        return [self.B, self.perm, self.G, self.block_scale, self.col_scale]


_KINDS = {
    ProjectionKind.DENSE: DenseProjection,
    ProjectionKind.SPARSE: SparseProjection,
    ProjectionKind.FASTFOOD: FastfoodProjection,
}


def make_projection(kind, D: int, d: int, seed: int) -> Projection:
    """Build the D x d projection of ``kind`` determined by ``seed``."""
    kind = ProjectionKind.parse(kind)
    D, d = int(D), int(d)
    if D < 1:
        raise ValueError("D must be positive")
    if d < 1:
        raise ValueError("d must be positive")
    if d > D:
        raise ValueError(f"d={d} exceeds D={D}")
    return _KINDS[kind](D, d, seed)


def project(P: Projection, v: np.ndarray) -> np.ndarray:
    return P.project(v)


def project_adjoint(P: Projection, g: np.ndarray) -> np.ndarray:
    return P.project_adjoint(g)


def materialize_column(P: Projection, j: int) -> np.ndarray:
    return P.materialize_column(j)


def dense_bytes(D: int, d: int) -> int:
    """Storage a dense float64 realization would need."""
    return 8 * int(D) * int(d)
