"""Weighted-Euclidean exact k-nearest-neighbour search.

Distances are the quadratic form ``(y - x)^T W (y - x)`` without a square
root. Results are always ordered by (distance, sample_id).

The index is a kd-tree over whitened vectors ``z = L x`` with ``L^T L = W``,
so the tree only needs plain Euclidean geometry. Whitened distances are used
to gather candidates; every candidate is then re-scored with the same
quadratic-form kernel the brute-force scan uses, so index and oracle rank
identical numbers. Built indexes are immutable and the query kernels release
the GIL, so concurrent queries need no locking and their results do not
depend on how many callers run at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .core import AtmosphericClass, WeightMatrix
from .errors import ValidationError

LEAF_SIZE = 16
# Candidate radius slack covering rounding differences between the whitened
# and quadratic-form distance evaluations.
_REL_SLACK = 1e-7
_ABS_SLACK = 1e-9


class NeighborHit(NamedTuple):
    sample_id: int
    distance: float
    atmospheric_class: AtmosphericClass


# ---------------------------------------------------------------- kernels

@numba.njit(cache=True, nogil=True)
def _qf_diag(y, X, w, out):
    n, d = X.shape
    for i in range(n):
        s = 0.0
        for j in range(d):
            t = y[j] - X[i, j]
            s += w[j] * t * t
        out[i] = s


@numba.njit(cache=True, nogil=True)
def _qf_full(y, X, W, out):
    n, d = X.shape
    diff = np.empty(d)
    for i in range(n):
        for j in range(d):
            diff[j] = y[j] - X[i, j]
        s = 0.0
        for a in range(d):
            r = 0.0
            for b in range(d):
                r += W[a, b] * diff[b]
            s += diff[a] * r
        out[i] = s


def quadratic_distances(y: np.ndarray, X: np.ndarray, W: WeightMatrix) -> np.ndarray:
    """Quadratic-form distance from `y` to every row of `X` (canonical kernel)."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != y.shape[0] or W.dim != y.shape[0]:
        raise ValidationError(
            f"dimension mismatch: query {y.shape[0]}, data {X.shape[1:]}, weights {W.dim}"
        )
    out = np.empty(X.shape[0])
    if W.is_diagonal:
        _qf_diag(y, X, np.ascontiguousarray(W.diag), out)
    else:
        _qf_full(y, X, np.ascontiguousarray(W.entries), out)
    # PSD rounding can leave tiny negatives
    np.maximum(out, 0.0, out=out)
    return out


def weighted_distance(y: Sequence[float], x: Sequence[float], W: WeightMatrix) -> float:
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape != x.shape:
        raise ValidationError(f"dimension mismatch: {y.shape} vs {x.shape}")
    return float(quadratic_distances(y, x[None, :], W)[0])


def whiten(W: WeightMatrix) -> np.ndarray:
    """Return L with ``L.T @ L == W``.

    Positive-definite matrices get a lower-triangular factor from a
    Cholesky decomposition of the index-reversed matrix. Singular matrices
    fall back to ``diag(sqrt(lambda)) Q^T`` from an eigendecomposition with
    eigenvalues below ``1e-12 * max`` set to zero.
    """
    if W.is_diagonal:
        return np.diag(np.sqrt(W.diag))
    A = W.entries
    J = A[::-1, ::-1]
    try:
        C = np.linalg.cholesky(J)
        L = C.T[::-1, ::-1].copy()
        if np.all(np.isfinite(L)):
            return L
    except np.linalg.LinAlgError:
        pass
    lam, Q = np.linalg.eigh(A)
    lam = np.where(lam < 1e-12 * lam.max(), 0.0, lam)
    return np.sqrt(lam)[:, None] * Q.T


def _whiten_points(X: np.ndarray, W: WeightMatrix, L: np.ndarray | None) -> np.ndarray:
    if W.is_diagonal:
        return X * np.sqrt(W.diag)
    return X @ L.T


# ---------------------------------------------------------------- kd-tree

def _build_tree(Z: np.ndarray, leaf_size: int):
    """Median-split kd-tree. Points are permuted so each node owns a
    contiguous range; nodes carry tight bounding boxes."""
    n, d = Z.shape
    perm = np.arange(n)
    starts, ends, lefts, rights = [], [], [], []
    lo_boxes, hi_boxes = [], []

    def new_node(s, e):
        pts = Z[perm[s:e]]
        starts.append(s)
        ends.append(e)
        lefts.append(-1)
        rights.append(-1)
        lo_boxes.append(pts.min(axis=0))
        hi_boxes.append(pts.max(axis=0))
        return len(starts) - 1

    root = new_node(0, n)
    stack = [root]
    while stack:
        node = stack.pop()
        s, e = starts[node], ends[node]
        if e - s <= leaf_size:
            continue
        spread = hi_boxes[node] - lo_boxes[node]
        dim = int(np.argmax(spread))
        if spread[dim] == 0.0:
            continue
        mid = (s + e) // 2
        seg = perm[s:e]
        order = np.argpartition(Z[seg, dim], mid - s, kind="introselect")
        perm[s:e] = seg[order]
        left = new_node(s, mid)
        right = new_node(mid, e)
        lefts[node] = left
        rights[node] = right
        stack.append(right)
        stack.append(left)
    return (perm, np.array(starts, np.int64), np.array(ends, np.int64),
            np.array(lefts, np.int64), np.array(rights, np.int64),
            np.ascontiguousarray(lo_boxes), np.ascontiguousarray(hi_boxes))


@numba.njit(cache=True, nogil=True)
def _box_dist(q, lo, hi):
    s = 0.0
    for j in range(q.shape[0]):
        if q[j] < lo[j]:
            t = lo[j] - q[j]
            s += t * t
        elif q[j] > hi[j]:
            t = q[j] - hi[j]
            s += t * t
    return s


@numba.njit(cache=True, nogil=True)
def _heap_push(hd, hi, size, dist, idx):
    # max-heap on distance
    i = size
    hd[i] = dist
    hi[i] = idx
    while i > 0:
        p = (i - 1) // 2
        if hd[p] >= hd[i]:
            break
        hd[p], hd[i] = hd[i], hd[p]
        hi[p], hi[i] = hi[i], hi[p]
        i = p


@numba.njit(cache=True, nogil=True)
def _heap_replace_top(hd, hi, size, dist, idx):
    hd[0] = dist
    hi[0] = idx
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < size and hd[l] > hd[m]:
            m = l
        if r < size and hd[r] > hd[m]:
            m = r
        if m == i:
            break
        hd[m], hd[i] = hd[i], hd[m]
        hi[m], hi[i] = hi[i], hi[m]
        i = m


@numba.njit(cache=True, nogil=True)
def _tree_kth(q, Z, perm, starts, ends, lefts, rights, lo, hi, k):
    """Whitened distance of the k-th nearest point (depth-first, box-pruned)."""
    hd = np.empty(k)
    hidx = np.empty(k, np.int64)
    size = 0
    stack = np.empty(256, np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    d = q.shape[0]
    while sp > 0:
        sp -= 1
        node = stack[sp]
        bound = _box_dist(q, lo[node], hi[node])
        if size == k and bound > hd[0]:
            continue
        if lefts[node] < 0:
            for t in range(starts[node], ends[node]):
                p = perm[t]
                s = 0.0
                for j in range(d):
                    u = q[j] - Z[p, j]
                    s += u * u
                if size < k:
                    _heap_push(hd, hidx, size, s, p)
                    size += 1
                elif s < hd[0]:
                    _heap_replace_top(hd, hidx, size, s, p)
            continue
        a = lefts[node]
        b = rights[node]
        # visit the nearer child first
        if _box_dist(q, lo[a], hi[a]) <= _box_dist(q, lo[b], hi[b]):
            stack[sp] = b
            stack[sp + 1] = a
        else:
            stack[sp] = a
            stack[sp + 1] = b
        sp += 2
    return hd[0]


@numba.njit(cache=True, nogil=True)
def _tree_radius(q, Z, perm, starts, ends, lefts, rights, lo, hi, r2):
    """Indices of all points with whitened distance <= r2."""
    out = np.empty(64, np.int64)
    m = 0
    stack = np.empty(256, np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    d = q.shape[0]
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_dist(q, lo[node], hi[node]) > r2:
            continue
        if lefts[node] < 0:
            for t in range(starts[node], ends[node]):
                p = perm[t]
                s = 0.0
                for j in range(d):
                    u = q[j] - Z[p, j]
                    s += u * u
                if s <= r2:
                    if m == out.shape[0]:
                        grown = np.empty(2 * m, np.int64)
                        grown[:m] = out
                        out = grown
                    out[m] = p
                    m += 1
            continue
        stack[sp] = lefts[node]
        stack[sp + 1] = rights[node]
        sp += 2
    return out[:m]


def _rank(ids: np.ndarray, dist: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k smallest (distance, id) pairs, in order."""
    if k < len(dist):
        kth = np.partition(dist, k - 1)[k - 1]
        cand = np.flatnonzero(dist <= kth)
    else:
        cand = np.arange(len(dist))
    order = np.lexsort((ids[cand], dist[cand]))
    return cand[order[:k]]


# ---------------------------------------------------------------- public API

@dataclass(frozen=True, eq=False)
class SearchIndex:
    """Immutable exact kNN index over one database stratum."""

    weights: WeightMatrix
    transform: np.ndarray
    vectors: np.ndarray      # original channel vectors, row per sample
    whitened: np.ndarray
    ids: np.ndarray
    classes: np.ndarray
    _tree: tuple
    _abs_slack: float

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_arrays(cls, vectors, ids, classes, W: WeightMatrix, leaf_size: int = LEAF_SIZE):
        X = np.ascontiguousarray(vectors, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValidationError("cannot index an empty stratum")
        if W.dim != X.shape[1]:
            raise ValidationError(f"weights have dimension {W.dim}, vectors {X.shape[1]}")
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        classes = np.ascontiguousarray(classes, dtype=np.int8)
        L = whiten(W)
        Z = np.ascontiguousarray(_whiten_points(X, W, L))
        tree = _build_tree(Z, leaf_size)
        for arr in (X, Z, ids, classes, L, *tree):
            arr.flags.writeable = False
        extent = float(np.max(np.ptp(X, axis=0)))
        slack = _ABS_SLACK * (1.0 + np.abs(W.entries).sum() * extent * extent)
        return cls(W, L, X, Z, ids, classes, tree, slack)

    def query(self, y, k: int) -> list[NeighborHit]:
        pos, dist = self.query_positions(y, k)
        return [NeighborHit(int(self.ids[p]), float(d), AtmosphericClass(int(self.classes[p])))
                for p, d in zip(pos, dist)]

    def query_positions(self, y, k: int):
        """Row positions and distances of the k nearest samples."""
        if not 1 <= k <= self.size:
            raise ValidationError(f"k={k} outside [1, {self.size}]")
        y = np.ascontiguousarray(y, dtype=np.float64)
        if y.shape != (self.dim,):
            raise ValidationError(f"query has shape {y.shape}, index dimension is {self.dim}")
        q = (y * np.sqrt(self.weights.diag)) if self.weights.is_diagonal else self.transform @ y
        perm, starts, ends, lefts, rights, lo, hi = self._tree
        kth = _tree_kth(q, self.whitened, perm, starts, ends, lefts, rights, lo, hi, k)
        r2 = kth * (1.0 + _REL_SLACK) + self._abs_slack
        cand = _tree_radius(q, self.whitened, perm, starts, ends, lefts, rights, lo, hi, r2)
        dist = quadratic_distances(y, self.vectors[cand], self.weights)
        sel = _rank(self.ids[cand], dist, k)
        if len(sel) < k:  # pragma: no cover - slack is generous
            return self._scan(y, k)
        return cand[sel], dist[sel]

    def _scan(self, y, k):
        dist = quadratic_distances(y, self.vectors, self.weights)
        sel = _rank(self.ids, dist, k)
        return sel, dist[sel]

    def rerank(self, positions: np.ndarray, y, W: WeightMatrix, k: int):
        """Fresh ranking of a subset of rows under another weight matrix."""
        positions = np.asarray(positions, dtype=np.int64)
        if not 1 <= k <= len(positions):
            raise ValidationError(f"k={k} outside [1, {len(positions)}]")
        dist = quadratic_distances(np.asarray(y, dtype=np.float64), self.vectors[positions], W)
        sel = _rank(self.ids[positions], dist, k)
        return positions[sel], dist[sel]


def _stratum_arrays(stratum):
    X = np.array([s.tb for s in stratum], dtype=np.float64)
    ids = np.array([s.sample_id for s in stratum], dtype=np.int64)
    cls = np.array([int(s.atmospheric_class) for s in stratum], dtype=np.int8)
    return X, ids, cls


def build_index(stratum, W: WeightMatrix, leaf_size: int = LEAF_SIZE) -> SearchIndex:
    stratum = list(stratum)
    if not stratum:
        raise ValidationError("cannot index an empty stratum")
    return SearchIndex.from_arrays(*_stratum_arrays(stratum), W, leaf_size=leaf_size)


def query_knn(index: SearchIndex, y, k: int) -> list[NeighborHit]:
    return index.query(y, k)


def brute_force_knn(stratum, y, k: int, W: WeightMatrix) -> list[NeighborHit]:
    """Exhaustive-scan oracle with the same ordering contract as `query_knn`."""
    stratum = list(stratum)
    if not 1 <= k <= len(stratum):
        raise ValidationError(f"k={k} outside [1, {len(stratum)}]")
    X, ids, cls = _stratum_arrays(stratum)
    return brute_force_arrays(X, ids, cls, y, k, W)


def brute_force_arrays(X, ids, classes, y, k: int, W: WeightMatrix) -> list[NeighborHit]:
    dist = quadratic_distances(np.asarray(y, dtype=np.float64), X, W)
    sel = _rank(np.asarray(ids), dist, k)
    return [NeighborHit(int(ids[p]), float(dist[p]), AtmosphericClass(int(classes[p]))) for p in sel]
