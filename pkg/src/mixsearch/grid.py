"""Grids and interpolation: the triangular belief grid and the 1-D log-ratio grid."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

_SNAP = 1e-9


class TriangularGrid:
    """Nodes (i/M, j/M) with i + j <= M, stored in lexicographic (i, j) order."""

    def __init__(self, m: int):
        if m < 1:
            raise ValueError(f"grid resolution must be >= 1, got {m}")
        self.m = int(m)
        i, j = [], []
        for a in range(m + 1):
            i.extend([a] * (m - a + 1))
            j.extend(range(m - a + 1))
        self.i = np.array(i, dtype=np.int64)
        self.j = np.array(j, dtype=np.int64)
        self.p11 = self.i / m
        self.pmix = self.j / m
        # offset[i] = index of node (i, 0)
        self.offset = np.concatenate([[0], np.cumsum(m + 1 - np.arange(m + 1))])[:-1]
        self._offset_list = self.offset.tolist()

    def __len__(self) -> int:
        return len(self.i)

    def __eq__(self, other) -> bool:
        return isinstance(other, TriangularGrid) and other.m == self.m

    def __hash__(self) -> int:
        return hash(("TriangularGrid", self.m))

    @staticmethod
    def size(m: int) -> int:
        return (m + 1) * (m + 2) // 2

    def index(self, i, j):
        return self.offset[i] + j

    def nearest(self, p11: float, pmix: float) -> int:
        i = min(max(int(round(p11 * self.m)), 0), self.m)
        j = min(max(int(round(pmix * self.m)), 0), self.m - i)
        return int(self.offset[i] + j)

    def locate(self, p11, pmix):
        """Barycentric cell weights for points of the simplex.

        Returns ``(idx, w)`` with shapes (..., 3); nodes are reproduced exactly.
        """
        m = self.m
        x = np.asarray(p11, dtype=float) * m
        y = np.asarray(pmix, dtype=float) * m
        xr, yr = np.rint(x), np.rint(y)
        x = np.where(np.abs(x - xr) < _SNAP, xr, x)
        y = np.where(np.abs(y - yr) < _SNAP, yr, y)
        x = np.clip(x, 0.0, m)
        y = np.clip(y, 0.0, m - x)
        i = np.minimum(np.floor(x), m - 1).astype(np.int64)
        j = np.minimum(np.floor(y), m - 1 - i).astype(np.int64)
        fx = x - i
        fy = y - j
        upper = (fx + fy > 1.0) & (i + j <= m - 2)
        # lower cell (i,j),(i+1,j),(i,j+1); upper cell (i+1,j+1),(i+1,j),(i,j+1)
        off = self.offset
        n_ij = off[i] + j
        n_i1j = off[np.minimum(i + 1, m)] + j
        n_ij1 = n_ij + 1
        n_i1j1 = off[np.minimum(i + 1, m)] + np.minimum(j + 1, m - np.minimum(i + 1, m))
        w_low = np.stack([1.0 - fx - fy, fx, fy], axis=-1)
        w_up = np.stack([fx + fy - 1.0, 1.0 - fy, 1.0 - fx], axis=-1)
        idx = np.where(upper[..., None],
                       np.stack([n_i1j1, n_i1j, n_ij1], axis=-1),
                       np.stack([n_ij, n_i1j, n_ij1], axis=-1))
        w = np.where(upper[..., None], w_up, w_low)
        w = np.clip(w, 0.0, None)
        w = w / w.sum(axis=-1, keepdims=True)
        return idx, w

    def locate_scalar(self, p11: float, pmix: float):
        """Pure-python :meth:`locate` for one point (hot path of the simulator)."""
        m = self.m
        x = p11 * m
        y = pmix * m
        if abs(x - round(x)) < _SNAP:
            x = float(round(x))
        if abs(y - round(y)) < _SNAP:
            y = float(round(y))
        x = min(max(x, 0.0), m)
        y = min(max(y, 0.0), m - x)
        i = min(int(math.floor(x)), m - 1)
        j = min(int(math.floor(y)), m - 1 - i)
        fx = x - i
        fy = y - j
        off = self._offset_list
        if fx + fy > 1.0 and i + j <= m - 2:
            idx = (off[i + 1] + j + 1, off[i + 1] + j, off[i] + j + 1)
            w = [fx + fy - 1.0, 1.0 - fy, 1.0 - fx]
        else:
            idx = (off[i] + j, off[i + 1] + j, off[i] + j + 1)
            w = [1.0 - fx - fy, fx, fy]
        w = [max(v, 0.0) for v in w]
        s = w[0] + w[1] + w[2]
        return idx, (w[0] / s, w[1] / s, w[2] / s)

    def interpolate(self, values, p11, pmix):
        idx, w = self.locate(p11, pmix)
        return np.sum(np.asarray(values)[idx] * w, axis=-1)

    def interp_matrix(self, p11, pmix, row_weights=None, n_rows=None, row_of=None):
        """Sparse matrix mapping node values to (weighted sums of) interpolants.

        ``row_of[k]`` assigns point k to an output row and ``row_weights[k]``
        scales its contribution; the default is one row per point.
        """
        idx, w = self.locate(np.ravel(p11), np.ravel(pmix))
        npts = idx.shape[0]
        if row_of is None:
            row_of = np.arange(npts)
            n_rows = npts
        if row_weights is not None:
            w = w * np.ravel(row_weights)[:, None]
        rows = np.repeat(np.ravel(row_of), 3)
        return sparse.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(n_rows, len(self)))

    DIRECTIONS = ((1, 0), (0, 1), (1, 1), (1, -1))

    def second_differences(self, values, direction):
        """``(centre indices, v[+d] - 2 v + v[-d])`` over nodes whose neighbours exist."""
        v = np.asarray(values)
        di, dj = direction
        i, j, m = self.i, self.j, self.m

        def inside(a, b):
            return (a >= 0) & (b >= 0) & (a + b <= m)

        c = np.nonzero(inside(i + di, j + dj) & inside(i - di, j - dj))[0]
        fwd = self.index(i[c] + di, j[c] + dj)
        bwd = self.index(i[c] - di, j[c] - dj)
        return c, v[fwd] - 2.0 * v[c] + v[bwd]


@dataclass(frozen=True)
class LogGrid:
    """Uniform grid ``center + step * k`` for k = -half .. half."""

    center: float
    step: float
    half: int

    @classmethod
    def symmetric(cls, bound: float, points: int, center: float = 0.0) -> "LogGrid":
        if points < 3 or points % 2 == 0:
            raise ValueError(f"log-ratio grid needs an odd number of points >= 3, got {points}")
        half = (points - 1) // 2
        return cls(center=float(center), step=float(bound) / half, half=half)

    @property
    def n(self) -> int:
        return 2 * self.half + 1

    @property
    def bound(self) -> float:
        return self.step * self.half

    @property
    def nodes(self) -> np.ndarray:
        return self.center + self.step * np.arange(-self.half, self.half + 1)

    @property
    def center_index(self) -> int:
        return self.half

    def weights(self, x):
        """(lower index, fraction) for linear interpolation; clamps outside the range."""
        t = (np.asarray(x, dtype=float) - self.center) / self.step + self.half
        t = np.where(np.isnan(t), self.half, t)
        t = np.clip(t, 0.0, self.n - 1)
        tr = np.rint(t)
        t = np.where(np.abs(t - tr) < _SNAP, tr, t)
        lo = np.minimum(np.floor(t).astype(np.int64), self.n - 2)
        return lo, t - lo

    def interpolate(self, values, x):
        lo, fr = self.weights(x)
        v = np.asarray(values)
        return v[..., lo] * (1.0 - fr) + v[..., lo + 1] * fr

    def interpolate_scalar(self, values, x: float) -> float:
        t = (x - self.center) / self.step + self.half
        if t <= 0.0:
            return float(values[0])
        if t >= self.n - 1:
            return float(values[self.n - 1])
        lo = int(t)
        fr = t - lo
        return float(values[lo]) * (1.0 - fr) + float(values[lo + 1]) * fr


@dataclass
class ValueSurface:
    """Node values of a function on the belief simplex plus solve metadata."""

    grid: TriangularGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __call__(self, p11, pmix):
        return self.grid.interpolate(self.values, p11, pmix)

    def at(self, p11: float, pmix: float) -> float:
        idx, w = self.grid.locate_scalar(p11, pmix)
        v = self.values
        return float(v[idx[0]] * w[0] + v[idx[1]] * w[1] + v[idx[2]] * w[2])

    def node(self, p11: float, pmix: float) -> float:
        return float(self.values[self.grid.nearest(p11, pmix)])
