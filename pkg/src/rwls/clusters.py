"""Loop clusters, outermost clusters, fills, external boundaries and the carpet."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from rwls.lattice import Domain, Vertex, fill_mask, inner_boundary_mask
from rwls.loopsoup import LoopSoup


class UnionFind:
    """Union by size with path compression over ``0..n-1``."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


@njit(cache=True)
def _find(parent, a):
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        nxt = parent[a]
        parent[a] = root
        a = nxt
    return root


@njit(cache=True)
def _label_kernel(M, verts, offsets):
    parent = np.arange(M)
    size = np.ones(M, dtype=np.int64)
    for k in range(offsets.shape[0] - 1):
        for t in range(offsets[k] + 1, offsets[k + 1]):
            ra = _find(parent, verts[t - 1])
            rb = _find(parent, verts[t])
            if ra != rb:
                if size[ra] < size[rb]:
                    ra, rb = rb, ra
                parent[rb] = ra
                size[ra] += size[rb]
    label = np.empty(M, dtype=np.int64)
    cid_of_root = np.full(M, -1, dtype=np.int64)
    reps = np.empty(M, dtype=np.int64)
    count = 0
    for v in range(M):  # raster order: first vertex seen is the cluster's minimum
        r = _find(parent, v)
        if cid_of_root[r] < 0:
            cid_of_root[r] = count
            reps[count] = v
            count += 1
        label[v] = cid_of_root[r]
    return label, reps[:count].copy()


@dataclass
class ClusterDecomposition:
    """Partition of a domain into loop clusters.

    Cluster ids are assigned in raster order of each cluster's minimal vertex,
    which is also its representative.  ``fills`` maps every non-trivial cluster
    to ``(row0, col0, mask)``: its fill as a boolean block of the domain grid.
    """

    soup: LoopSoup
    label: np.ndarray
    reps: np.ndarray
    sizes: np.ndarray
    trivial: np.ndarray
    loop_cluster: np.ndarray
    outermost: np.ndarray | None = None
    fills: dict = field(default_factory=dict, repr=False)
    carpet_mask: np.ndarray | None = None
    _members: list | None = field(default=None, repr=False)

    @property
    def domain(self):
        return self.soup.domain

    def __len__(self) -> int:
        return len(self.reps)

    def members(self, cid: int) -> np.ndarray:
        if self._members is None:
            order = np.argsort(self.label, kind="stable")
            self._members = np.split(order, np.cumsum(self.sizes)[:-1])
        return self._members[cid]

    def vertices_of(self, cid: int) -> set:
        return {self.domain.vertex(i) for i in self.members(cid)}

    def loops_of(self, cid: int) -> np.ndarray:
        return np.flatnonzero(self.loop_cluster == cid)

    def label_grid(self) -> np.ndarray:
        return self.domain.to_grid(self.label, fill=-1)

    def _block_to_set(self, cid: int, mask_fn) -> set:
        if self.trivial[cid]:
            return {self.domain.vertex(self.reps[cid])}
        r0, c0, m = self.fills[cid]
        ys, xs = np.nonzero(mask_fn(m))
        d = self.domain
        return {Vertex(int(x) + c0 + d.xmin, int(y) + r0 + d.ymin) for x, y in zip(xs, ys)}

    def fill_of(self, cid: int) -> set:
        return self._block_to_set(cid, lambda m: m)

    def ext_boundary_of(self, cid: int) -> set:
        return self._block_to_set(cid, inner_boundary_mask)

    def to_csv(self, carpet_mask: np.ndarray | None = None) -> str:
        carpet_mask = self.carpet_mask if carpet_mask is None else carpet_mask
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "cluster", "outermost", "carpet"])
        out = self.outermost if self.outermost is not None else np.zeros(len(self), bool)
        for i, (x, y) in enumerate(self.domain.coords):
            c = int(self.label[i])
            w.writerow([int(x), int(y), c, int(out[c]), "" if carpet_mask is None else int(carpet_mask[i])])
        return buf.getvalue()


def decompose(soup: LoopSoup, *, outermost: bool = True) -> ClusterDecomposition:
    """Clusters of ``soup``: loops sharing a vertex are in the same cluster.

    Unvisited vertices become trivial single-site clusters.  With
    ``outermost=True`` the fills and outermost flags are computed as well.
    """
    M = len(soup.domain)
    label, reps = _label_kernel(M, soup.verts, soup.offsets)
    sizes = np.bincount(label, minlength=len(reps))
    visited = np.zeros(len(reps), dtype=bool)
    visited[label[soup.verts]] = True
    loop_cluster = label[soup.verts[soup.offsets[:-1]]] if len(soup) else np.empty(0, np.int64)
    dec = ClusterDecomposition(soup, label, reps, sizes, ~visited, loop_cluster)
    if outermost:
        mark_outermost(dec)
    return dec


def mark_outermost(dec: ClusterDecomposition, frame: Domain | None = None) -> ClusterDecomposition:
    """Compute fills of non-trivial clusters and flag the outermost clusters.

    A cluster is not outermost exactly when it lies in a hole of another
    cluster's fill; since clusters are connected and disjoint, testing the
    representative vertex suffices.  ``frame``, if given, must be the
    decomposition's domain.
    """
    if frame is not None and frame != dec.domain:
        raise ValueError("frame differs from the decomposed domain")
    grid = dec.label_grid()
    covered = np.zeros(grid.shape, dtype=bool)
    d = dec.domain
    K = len(dec)
    rows = d.coords[:, 1] - d.ymin
    cols = d.coords[:, 0] - d.xmin
    r0 = np.full(K, np.iinfo(np.int64).max)
    c0 = np.full(K, np.iinfo(np.int64).max)
    r1 = np.full(K, -1)
    c1 = np.full(K, -1)
    np.minimum.at(r0, dec.label, rows)
    np.minimum.at(c0, dec.label, cols)
    np.maximum.at(r1, dec.label, rows)
    np.maximum.at(c1, dec.label, cols)
    fills = {}
    for cid in np.flatnonzero(~dec.trivial):
        sl = (slice(r0[cid], r1[cid] + 1), slice(c0[cid], c1[cid] + 1))
        block = grid[sl] == cid
        f = fill_mask(block)
        fills[int(cid)] = (int(r0[cid]), int(c0[cid]), f)
        holes = f & ~block
        if holes.any():
            covered[sl] |= holes
    rep_rows = d.coords[dec.reps, 1] - d.ymin
    rep_cols = d.coords[dec.reps, 0] - d.xmin
    dec.fills = fills
    dec.outermost = ~covered[rep_rows, rep_cols]
    return dec


def carpet(dec: ClusterDecomposition, domain: Domain | None = None, *, interior: str = "fill") -> np.ndarray:
    """Carpet as a boolean array over the domain.

    ``interior="fill"`` removes ``Fill(C)`` minus its external boundary for
    every outermost cluster ``C``; ``interior="literal"`` removes ``C`` minus
    its external boundary for every cluster.
    """
    if dec.outermost is None:
        mark_outermost(dec)
    if domain is not None and domain != dec.domain:
        raise ValueError("domain differs from the decomposed domain")
    d = dec.domain
    removed = np.zeros(d.shape, dtype=bool)
    grid = dec.label_grid() if interior == "literal" else None
    for cid, (r0, c0, f) in dec.fills.items():
        ext = inner_boundary_mask(f)
        if interior == "fill":
            if not dec.outermost[cid]:
                continue
            inner = f & ~ext
        elif interior == "literal":
            block = grid[r0 : r0 + f.shape[0], c0 : c0 + f.shape[1]] == cid
            inner = block & ~ext
        else:
            raise ValueError(f"unknown interior reading {interior!r}")
        removed[r0 : r0 + f.shape[0], c0 : c0 + f.shape[1]] |= inner
    out = ~d.from_grid(removed)
    if interior == "fill":
        dec.carpet_mask = out
    return out
