"""Integer-lattice geometry: domains, adjacency, fills, boundaries, searches.

Vertices are ``(x, y)`` integer pairs.  A :class:`Domain` is a finite vertex
set kept in raster order (sorted by ``y`` then ``x``); every per-vertex array
in the package is aligned with that order.  Grid views of a domain are indexed
``[y - ymin, x - xmin]``.
"""

from __future__ import annotations

from collections import deque
from typing import Iterable, NamedTuple

import numpy as np
from scipy import ndimage


class Vertex(NamedTuple):
    x: int
    y: int


NN_STEPS = ((1, 0), (0, 1), (-1, 0), (0, -1))  # E, N, W, S
DIAG_STEPS = ((1, 1), (-1, 1), (-1, -1), (1, -1))  # NE, NW, SW, SE
STAR_STEPS = NN_STEPS + DIAG_STEPS

NN_STRUCTURE = ndimage.generate_binary_structure(2, 1)
STAR_STRUCTURE = np.ones((3, 3), dtype=bool)


def _structure(adjacency: str) -> np.ndarray:
    if adjacency == "nn":
        return NN_STRUCTURE
    if adjacency == "star":
        return STAR_STRUCTURE
    raise ValueError(f"unknown adjacency {adjacency!r}; expected 'nn' or 'star'")


def neighbors(v) -> list[Vertex]:
    """The 4 nearest neighbours of ``v`` in the order E, N, W, S."""
    x, y = v
    return [Vertex(x + dx, y + dy) for dx, dy in NN_STEPS]


def star_neighbors(v) -> list[Vertex]:
    """The 8 ``*``-neighbours of ``v``: E, N, W, S, then NE, NW, SW, SE."""
    x, y = v
    return [Vertex(x + dx, y + dy) for dx, dy in STAR_STEPS]


def sup_dist(u, v) -> int:
    return max(abs(u[0] - v[0]), abs(u[1] - v[1]))


class Domain:
    """A finite set of lattice vertices with a raster-order index."""

    def __init__(self, vertices: Iterable, *, center=None, radius=None):
        if isinstance(vertices, np.ndarray):
            pts = vertices.astype(np.int64).reshape(-1, 2)
        else:
            pts = np.asarray([tuple(v) for v in vertices], dtype=np.int64).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("a domain needs at least one vertex")
        order = np.lexsort((pts[:, 0], pts[:, 1]))
        pts = pts[order]
        if len(pts) > 1 and np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise ValueError("duplicate vertices in domain")
        self.coords = pts
        self.coords.setflags(write=False)
        self.xmin, self.ymin = (int(c) for c in pts.min(axis=0))
        self.xmax, self.ymax = (int(c) for c in pts.max(axis=0))
        self.shape = (self.ymax - self.ymin + 1, self.xmax - self.xmin + 1)
        grid = np.full((self.shape[0] + 2, self.shape[1] + 2), -1, dtype=np.int64)
        grid[pts[:, 1] - self.ymin + 1, pts[:, 0] - self.xmin + 1] = np.arange(len(pts))
        self.grid_index = grid
        self.grid_index.setflags(write=False)
        self.center = None if center is None else Vertex(*center)
        self.radius = radius
        self.key = (self.xmin, self.ymin, self.shape, pts.tobytes())

    @classmethod
    def box(cls, n: int, center=(0, 0)) -> "Domain":
        """``B_n(center)``: all vertices within sup-distance ``n``."""
        if n < 0:
            raise ValueError("box radius must be non-negative")
        cx, cy = center
        xs, ys = np.meshgrid(np.arange(cx - n, cx + n + 1), np.arange(cy - n, cy + n + 1))
        return cls(np.column_stack([xs.ravel(), ys.ravel()]), center=center, radius=n)

    @classmethod
    def rect(cls, x0: int, x1: int, y0: int, y1: int) -> "Domain":
        xs, ys = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
        return cls(np.column_stack([xs.ravel(), ys.ravel()]))

    def __len__(self) -> int:
        return len(self.coords)

    def __eq__(self, other) -> bool:
        return isinstance(other, Domain) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        if self.radius is not None:
            return f"Domain.box({self.radius}, center={tuple(self.center)})"
        return f"Domain(<{len(self)} vertices in [{self.xmin},{self.xmax}]x[{self.ymin},{self.ymax}]>)"

    @property
    def is_rect(self) -> bool:
        return len(self) == self.shape[0] * self.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return self.grid_index[1:-1, 1:-1] >= 0

    def index(self, v) -> int:
        x, y = v
        gx, gy = x - self.xmin + 1, y - self.ymin + 1
        if 0 <= gy < self.grid_index.shape[0] and 0 <= gx < self.grid_index.shape[1]:
            i = self.grid_index[gy, gx]
            if i >= 0:
                return int(i)
        raise KeyError(f"vertex {tuple(v)} not in domain")

    def contains(self, v) -> bool:
        try:
            self.index(v)
        except KeyError:
            return False
        return True

    __contains__ = contains

    def vertex(self, i: int) -> Vertex:
        x, y = self.coords[i]
        return Vertex(int(x), int(y))

    def vertices(self) -> list[Vertex]:
        return [Vertex(int(x), int(y)) for x, y in self.coords]

    def indices(self, vs: Iterable) -> np.ndarray:
        return np.array([self.index(v) for v in vs], dtype=np.int64)

    def to_grid(self, values, fill=0) -> np.ndarray:
        values = np.asarray(values)
        out = np.full(self.shape, fill, dtype=np.result_type(values.dtype, np.asarray(fill).dtype))
        out[self.coords[:, 1] - self.ymin, self.coords[:, 0] - self.xmin] = values
        return out

    def from_grid(self, grid) -> np.ndarray:
        return np.asarray(grid)[self.coords[:, 1] - self.ymin, self.coords[:, 0] - self.xmin]

    def sup_dist_from(self, center) -> np.ndarray:
        cx, cy = center
        return np.maximum(np.abs(self.coords[:, 0] - cx), np.abs(self.coords[:, 1] - cy))

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-neighbour edges inside the domain, as index arrays ``(u, w)``.

        Horizontal edges (``w = u + E``) come first, then vertical ones
        (``w = u + N``), each block in raster order of ``u``.
        """
        g = self.grid_index
        inner = g[1:-1, 1:-1]
        out_u, out_w = [], []
        for dx, dy in ((1, 0), (0, 1)):
            nb = g[1 + dy : g.shape[0] - 1 + dy, 1 + dx : g.shape[1] - 1 + dx]
            ok = (inner >= 0) & (nb >= 0)
            u, w = inner[ok], nb[ok]
            order = np.argsort(u, kind="stable")
            out_u.append(u[order])
            out_w.append(w[order])
        return np.concatenate(out_u), np.concatenate(out_w)

    def side(self, which: str, n: int | None = None, center=None) -> list[Vertex]:
        """Left/right/top/bottom side of ``B_n(center)`` (default: the domain box)."""
        n = self.radius if n is None else n
        cx, cy = self.center if center is None else center
        rng = range(-n, n + 1)
        sides = {
            "left": [(cx - n, cy + k) for k in rng],
            "right": [(cx + n, cy + k) for k in rng],
            "bottom": [(cx + k, cy - n) for k in rng],
            "top": [(cx + k, cy + n) for k in rng],
        }
        return [Vertex(*v) for v in sides[which]]


# ---------------------------------------------------------------- masks


def fill_mask(mask: np.ndarray) -> np.ndarray:
    """Fill of a boolean grid set; everything beyond the grid counts as unbounded."""
    mask = np.asarray(mask, dtype=bool)
    if min(mask.shape) < 3:
        # enclosing a hole needs at least three rows and three columns
        return mask.copy()
    padded = np.pad(mask, 1)
    labels, _ = ndimage.label(~padded, structure=STAR_STRUCTURE)
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    unbounded = np.isin(labels, border[border > 0])
    return ~unbounded[1:-1, 1:-1]


def inner_boundary_mask(mask: np.ndarray) -> np.ndarray:
    """Vertices of ``mask`` with a ``*``-neighbour outside it (grid edge counts as outside)."""
    mask = np.asarray(mask, dtype=bool)
    return mask & ~ndimage.binary_erosion(mask, structure=STAR_STRUCTURE, border_value=0)


def lr_crossing_batch(masks: np.ndarray, adjacency: str = "nn") -> np.ndarray:
    """Left-right crossing for each grid in a ``(B, H, W)`` stack."""
    masks = np.asarray(masks, dtype=bool)
    structure = np.zeros((3, 3, 3), dtype=bool)
    structure[1] = _structure(adjacency)  # no connections across the stack axis
    labels, count = ndimage.label(masks, structure=structure)
    if count == 0:
        return np.zeros(len(masks), dtype=bool)
    left = np.zeros(count + 1, dtype=bool)
    right = np.zeros(count + 1, dtype=bool)
    left[labels[:, :, 0]] = True
    right[labels[:, :, -1]] = True
    spanning = left & right
    spanning[0] = False
    return spanning[labels[:, :, 0]].any(axis=1)


def lr_crossing(mask: np.ndarray, adjacency: str = "nn") -> bool:
    """Whether ``mask`` connects its first and last columns."""
    return bool(lr_crossing_batch(np.asarray(mask)[None], adjacency)[0])


def tb_crossing(mask: np.ndarray, adjacency: str = "nn") -> bool:
    """Whether ``mask`` connects its first and last rows."""
    return lr_crossing(np.asarray(mask).T, adjacency)


# ---------------------------------------------------------------- vertex sets


def _frame_mask(A, frame: Domain) -> np.ndarray:
    if frame.radius is None and not frame.is_rect:
        raise ValueError("frame must be a rectangular box")
    A = [tuple(v) for v in A]
    if not A:
        return np.zeros(frame.shape, dtype=bool)
    xs = np.array([v[0] for v in A])
    ys = np.array([v[1] for v in A])
    if (
        xs.min() <= frame.xmin
        or xs.max() >= frame.xmax
        or ys.min() <= frame.ymin
        or ys.max() >= frame.ymax
    ):
        raise ValueError("frame too small")
    m = np.zeros(frame.shape, dtype=bool)
    m[ys - frame.ymin, xs - frame.xmin] = True
    return m


def _mask_to_set(mask: np.ndarray, frame: Domain) -> set[Vertex]:
    ys, xs = np.nonzero(mask)
    return {Vertex(int(x) + frame.xmin, int(y) + frame.ymin) for x, y in zip(xs, ys)}


def fill(A, frame: Domain) -> set[Vertex]:
    """``Fill(A)``: complement of the unbounded ``*``-component of ``A^c``.

    ``frame`` is a box that contains ``A`` with a margin of at least one.
    """
    return _mask_to_set(fill_mask(_frame_mask(A, frame)), frame)


def ext_boundary(A, frame: Domain) -> set[Vertex]:
    """Inner ``*``-boundary of ``Fill(A)``."""
    return _mask_to_set(inner_boundary_mask(fill_mask(_frame_mask(A, frame))), frame)


def crosses_annulus(A, center, l: int, d: int) -> bool:
    """Whether ``A`` meets both ``{|. - center| = l}`` and ``{|. - center| = d}`` (sup norm)."""
    if not 0 < l < d:
        raise ValueError("need 0 < l < d")
    dists = {sup_dist(v, center) for v in A}
    return l in dists and d in dists


def connected_search(S, sources, targets, adjacency: str = "nn"):
    """Shortest path inside ``S`` from ``sources`` to ``targets``, or ``None``.

    Breadth-first; ties broken by raster order of the sources and by the fixed
    neighbour order, so the returned path is deterministic.
    """
    steps = {"nn": NN_STEPS, "star": STAR_STEPS}.get(adjacency)
    if steps is None:
        raise ValueError(f"unknown adjacency {adjacency!r}")
    S = {tuple(v) for v in S}
    targets = {tuple(v) for v in targets} & S
    starts = sorted((tuple(v) for v in sources if tuple(v) in S), key=lambda v: (v[1], v[0]))
    if not starts or not targets:
        return None
    parent = {v: None for v in starts}
    queue = deque(starts)
    while queue:
        v = queue.popleft()
        if v in targets:
            path = []
            while v is not None:
                path.append(Vertex(*v))
                v = parent[v]
            return path[::-1]
        x, y = v
        for dx, dy in steps:
            w = (x + dx, y + dy)
            if w in S and w not in parent:
                parent[w] = v
                queue.append(w)
    return None
