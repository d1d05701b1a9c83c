"""Fixed-pattern storage for the keyframe Hessian.

Pattern derivation, for a window of N keyframes and feature age A:

* adjacent keyframes share an IMU factor, so ``|i-j| <= 1`` blocks are full;
* a track spans at most A keyframes and only touches pose variables, so blocks
  with ``2 <= |i-j| <= A-1`` carry a 6x6 (theta, p) sub-block;
* the marginalization prior is dense over the oldest ``max(A-1, 1)`` states.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ConfigError, InvalidArgument, MaskedWriteError
from ..geometry import STATE_DIM

POSE_DIM = 6


@dataclass(frozen=True)
class HessianPattern:
    n_states: int
    age: int
    blocks: np.ndarray    # (N, N) bool, symmetric
    elements: np.ndarray  # (15N, 15N) bool, symmetric

    @property
    def dim(self):
        return STATE_DIM * self.n_states

    @property
    def boundary(self):
        return max(self.age - 1, 1)

    def upper_nnz(self):
        return int(np.triu(self.elements).sum())

    def triangle_density(self):
        n = self.dim
        return self.upper_nnz() / (n * (n + 1) // 2)

    def block_triangle_density(self):
        n = self.n_states
        return int(np.triu(self.blocks).sum()) / (n * (n + 1) // 2)


@lru_cache(maxsize=32)
def build_pattern(n_states: int, age: int) -> HessianPattern:
    if n_states < 1 or age < 1:
        raise ConfigError("horizon and feature age must be at least 1")
    if age > n_states:
        raise ConfigError(f"feature age {age} exceeds horizon {n_states}")
    i, j = np.indices((n_states, n_states))
    gap = np.abs(i - j)
    b = max(age - 1, 1)
    full = (gap <= 1) | ((i < b) & (j < b))
    pose = (gap <= age - 1) & ~full
    blocks = full | pose
    pose_mask = np.zeros((STATE_DIM, STATE_DIM), bool)
    pose_mask[:POSE_DIM, :POSE_DIM] = True
    elements = (np.kron(full, np.ones((STATE_DIM, STATE_DIM), bool))
                | np.kron(pose, pose_mask))
    blocks.setflags(write=False)
    elements.setflags(write=False)
    return HessianPattern(n_states, age, blocks, elements)


class StructuredHessian:
    """Symmetric ``H`` and right-hand side ``eps`` of ``H dx = eps``.

    Only upper-triangle entries inside the pattern own storage. Reads below the
    diagonal come from the mirrored upper entry; reads outside the pattern are 0.
    """

    def __init__(self, pattern: HessianPattern):
        self.pattern = pattern
        n = pattern.dim
        upper = np.triu(pattern.elements)
        rows, cols = np.nonzero(upper)
        self._index = np.full((n, n), -1, dtype=np.int64)
        self._index[rows, cols] = np.arange(len(rows))
        self._index[cols, rows] = np.arange(len(rows))
        self.values = np.zeros(len(rows))
        self.rhs = np.zeros(n)

    @classmethod
    def for_window(cls, n_states, age):
        return cls(build_pattern(n_states, age))

    @property
    def dim(self):
        return self.pattern.dim

    @property
    def stored_elements(self):
        return len(self.values)

    def clear(self):
        self.values[:] = 0.0
        self.rhs[:] = 0.0

    def _write(self, rows, cols, vals):
        rows, cols = np.broadcast_arrays(rows, cols)
        vals = np.broadcast_to(np.asarray(vals, float), rows.shape)
        upper = rows <= cols
        r, c, v = rows[upper], cols[upper], vals[upper]
        idx = self._index[r, c]
        off = idx < 0
        if np.any(off & (v != 0.0)):
            k = int(np.argmax(off & (v != 0.0)))
            raise MaskedWriteError(f"write to ({r[k]}, {c[k]}) is outside the Hessian pattern")
        np.add.at(self.values, idx[~off], v[~off])

    def accumulate(self, i, j, block):
        """Add a 15x15 contribution to block (i, j) (and implicitly its mirror)."""
        block = np.asarray(block, float)
        if block.shape != (STATE_DIM, STATE_DIM):
            raise InvalidArgument("block must be 15x15")
        if i > j:
            i, j, block = j, i, block.T
        r = STATE_DIM * i + np.arange(STATE_DIM)
        c = STATE_DIM * j + np.arange(STATE_DIM)
        # on the diagonal the block is taken as symmetric and its lower half ignored
        self._write(r[:, None], c[None, :], block)

    def accumulate_element(self, r, c, value):
        if r > c:
            r, c = c, r
        self._write(np.array([r]), np.array([c]), np.array([value]))

    def add_states(self, states, H, b=None):
        """Scatter a dense contribution over the listed state indices."""
        states = list(states)
        idx = np.concatenate([STATE_DIM * s + np.arange(STATE_DIM) for s in states])
        H = np.asarray(H, float)
        if H.shape != (len(idx), len(idx)):
            raise InvalidArgument("contribution size does not match state list")
        self._write(idx[:, None], idx[None, :], H)
        if b is not None:
            np.add.at(self.rhs, idx, b)

    def add_rhs(self, i, segment):
        self.rhs[STATE_DIM * i:STATE_DIM * (i + 1)] += segment

    def add_diagonal(self, value):
        d = np.arange(self.dim)
        self.values[self._index[d, d]] += value

    def read(self, i, j):
        r = STATE_DIM * i + np.arange(STATE_DIM)
        c = STATE_DIM * j + np.arange(STATE_DIM)
        idx = self._index[r[:, None], c[None, :]]
        return np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)

    def element(self, r, c):
        k = self._index[r, c]
        return float(self.values[k]) if k >= 0 else 0.0

    def to_dense(self):
        out = np.zeros((self.dim, self.dim))
        mask = self._index >= 0
        out[mask] = self.values[self._index[mask]]
        return out
