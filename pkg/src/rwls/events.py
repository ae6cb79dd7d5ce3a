"""Crossing and arm events over a sampled soup and its occupation field.

Conventions: a vertex is lambda-open when its occupation is ``<= lam`` and
lambda-closed otherwise.  ``ring(z, r)`` is ``{v : |v - z|_inf = r}``, the
inner vertex boundary of the box ``B_r(z)``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from rwls.clusters import ClusterDecomposition, carpet, decompose
from rwls.lattice import NN_STRUCTURE, Domain, lr_crossing, tb_crossing
from rwls.loopsoup import LoopSoup, OccupationField

# When set, every crossing call re-derives its answer through planar duality
# or event inclusion and raises on disagreement.
CHECK_INVARIANTS = False


class InvariantError(AssertionError):
    pass


def _values(field, outer: Domain) -> np.ndarray:
    vals = field.X if isinstance(field, OccupationField) else np.asarray(field, dtype=float)
    if vals.shape != (len(outer),):
        raise ValueError("field does not match the outer box")
    return vals


def _sub_block(outer: Domain, inner: Domain | None) -> tuple[slice, slice]:
    if inner is None:
        inner = outer
    if not inner.is_rect:
        raise ValueError("inner region must be a box")
    if (
        inner.xmin < outer.xmin
        or inner.xmax > outer.xmax
        or inner.ymin < outer.ymin
        or inner.ymax > outer.ymax
    ):
        raise ValueError("inner box must lie inside the outer box")
    r0, c0 = inner.ymin - outer.ymin, inner.xmin - outer.xmin
    return slice(r0, r0 + inner.shape[0]), slice(c0, c0 + inner.shape[1])


def _open_block(field, lam: float, outer: Domain, inner: Domain | None) -> np.ndarray:
    grid = outer.to_grid(_values(field, outer) <= lam, fill=False)
    return grid[_sub_block(outer, inner)]


def lambda_open_crossing(field, lam: float, outer_box: Domain, inner_box: Domain | None = None, *, check: bool | None = None) -> bool:
    """Left-right crossing of ``inner_box`` by a nearest-neighbour path of lambda-open vertices.

    ``field`` is an :class:`OccupationField` or a per-vertex array on
    ``outer_box`` (for instance ``|phi|`` for the GFF variant).
    """
    block = _open_block(field, lam, outer_box, inner_box)
    crossed = lr_crossing(block, "nn")
    if CHECK_INVARIANTS if check is None else check:
        blocked = tb_crossing(~block, "star")
        if crossed == blocked:
            raise InvariantError("open left-right crossing and closed top-bottom *-crossing disagree")
    return crossed


def carpet_crossing(field, dec: ClusterDecomposition, lam: float, outer_box: Domain, inner_box: Domain | None = None, *, carpet_mask=None, check: bool | None = None) -> bool:
    """Left-right lambda-open crossing of ``inner_box`` that stays in the carpet."""
    if dec.domain != outer_box:
        raise ValueError("decomposition must live on the outer box")
    if carpet_mask is None:
        carpet_mask = dec.carpet_mask if dec.carpet_mask is not None else carpet(dec)
    sl = _sub_block(outer_box, inner_box)
    block = _open_block(field, lam, outer_box, inner_box) & outer_box.to_grid(carpet_mask, fill=False)[sl]
    crossed = lr_crossing(block, "nn")
    if crossed and (CHECK_INVARIANTS if check is None else check):
        if not lambda_open_crossing(field, lam, outer_box, inner_box, check=False):
            raise InvariantError("carpet crossing without an open crossing")
    return crossed


def _ring_masks(domain: Domain, center, radii) -> list[np.ndarray]:
    dist = domain.sup_dist_from(center)
    return [dist == r for r in radii]


def _require_box(domain: Domain, center, radius: int) -> None:
    cx, cy = center
    if (
        cx - radius < domain.xmin
        or cx + radius > domain.xmax
        or cy - radius < domain.ymin
        or cy + radius > domain.ymax
    ):
        raise ValueError(f"B_{radius}({cx},{cy}) is not inside the domain")
    if not domain.is_rect:
        raise ValueError("annulus events need a box domain")


def one_arm(field, lam: float, n: int, N: int, outer_box: Domain | None = None, center=(0, 0)) -> bool:
    """``center`` joined to ``ring(center, n)`` by a lambda-open path inside ``B_N(center)``."""
    if not 0 < n <= N:
        raise ValueError("need 0 < n <= N")
    outer = outer_box if outer_box is not None else Domain.box(N, center)
    _require_box(outer, center, N)
    vals = _values(field, outer)
    dist = outer.sup_dist_from(center)
    open_ = (vals <= lam) & (dist <= N)
    labels, _ = ndimage.label(outer.to_grid(open_, fill=False), structure=NN_STRUCTURE)
    lab = outer.from_grid(labels)
    c = lab[outer.index(center)]
    return bool(c > 0 and np.any(lab[dist == n] == c))


def annulus_crossing(field, lam: float, N: int, variant: str = "boundary", outer_box: Domain | None = None, center=(0, 0)) -> bool:
    """Lambda-open path in ``B_N`` meeting both rings of ``A_{N/2,N}`` (boundary) or ``A_{N/4,N/2}`` (bulk).

    Radii ``N/2`` and ``N/4`` are rounded down.
    """
    radii = {"boundary": (N // 2, N), "bulk": (N // 4, N // 2)}.get(variant)
    if radii is None:
        raise ValueError(f"unknown variant {variant!r}")
    if not 0 < radii[0] < radii[1]:
        raise ValueError("N too small for this annulus")
    outer = outer_box if outer_box is not None else Domain.box(N, center)
    _require_box(outer, center, N)
    vals = _values(field, outer)
    dist = outer.sup_dist_from(center)
    open_ = (vals <= lam) & (dist <= N)
    labels, _ = ndimage.label(outer.to_grid(open_, fill=False), structure=NN_STRUCTURE)
    lab = outer.from_grid(labels)
    a = np.unique(lab[dist == radii[0]])
    b = np.unique(lab[dist == radii[1]])
    return bool(np.intersect1d(a[a > 0], b[b > 0]).size)


# ---------------------------------------------------------------- arm results


@dataclass
class ArmResult:
    kind: str
    occurred: bool
    witness: list = field(default_factory=list)
    connection_number: int | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "occurred": self.occurred,
                "witness": [[int(c) for c in chain] for chain in self.witness],
                "connection_number": self.connection_number,
            },
            sort_keys=True,
        )


def _crossing_clusters(dec: ClusterDecomposition, center, l: int, d: int, outermost_only: bool) -> np.ndarray:
    inner, outer = _ring_masks(dec.domain, center, (l, d))
    hit = np.intersect1d(dec.label[inner], dec.label[outer])
    if outermost_only:
        hit = hit[dec.outermost[hit]]
    return hit


def four_arm_interior(dec: ClusterDecomposition, z, l: int, d: int) -> ArmResult:
    """At least two outermost clusters crossing ``A_{l,d}(z)``."""
    if not 0 < l < d:
        raise ValueError("need 0 < l < d")
    _require_box(dec.domain, z, d)
    if dec.outermost is None:
        raise ValueError("decomposition lacks outermost flags")
    hit = _crossing_clusters(dec, z, l, d, True)
    return ArmResult("four_arm", len(hit) >= 2, [[int(c)] for c in hit])


def half_plane(domain: Domain, axis: int) -> Domain:
    """Vertices of ``domain`` strictly above the row ``y = axis``."""
    keep = domain.coords[:, 1] > axis
    if not keep.any():
        raise ValueError("no vertex above the axis")
    return Domain(domain.coords[keep])


def half_plane_decomposition(soup: LoopSoup, axis: int) -> ClusterDecomposition:
    return decompose(soup.restrict(half_plane(soup.domain, axis)))


def boundary_arm(soup: LoopSoup | None, z, l: int, d: int, kind: str = "two", *, axis: int | None = None, dec: ClusterDecomposition | None = None) -> ArmResult:
    """Boundary two-arm (one crossing cluster) or four-arm (two outermost ones).

    Only loops lying strictly above the axis row take part.  A precomputed
    half-plane decomposition can be passed as ``dec`` to share work between
    the two kinds.
    """
    if kind not in ("two", "four"):
        raise ValueError(f"unknown kind {kind!r}")
    if not 0 < l < d:
        raise ValueError("need 0 < l < d")
    axis = z[1] if axis is None else axis
    if z[1] != axis:
        raise ValueError("z must lie on the axis")
    if dec is None:
        _require_box(soup.domain, z, d)
        dec = half_plane_decomposition(soup, axis)
    else:
        top = dec.domain
        if top.ymin != axis + 1 or z[0] - d < top.xmin or z[0] + d > top.xmax or z[1] + d > top.ymax:
            raise ValueError("semi-annulus is not inside the half-plane domain")
    hit = _crossing_clusters(dec, z, l, d, kind == "four")
    if kind == "two":
        hit = hit[~dec.trivial[hit]]
        return ArmResult("boundary_two_arm", len(hit) >= 1, [[int(c)] for c in hit])
    return ArmResult("boundary_four_arm", len(hit) >= 2, [[int(c)] for c in hit])


# ---------------------------------------------------------------- chain graphs

_HALF_STAR = ((1, 0), (0, 1), (1, 1), (-1, 1))


@dataclass
class ChainGraph:
    """Outermost clusters and the ``*``-passage edges between them.

    Edge ``k`` joins vertex ``eu[k]`` of cluster ``cu[k]`` to vertex ``ev[k]``
    of cluster ``cv[k]`` (``cu < cv``); ``flag[k]`` says both endpoint
    occupations exceed ``lam``.
    """

    dec: ClusterDecomposition
    X: np.ndarray
    lam: float
    eu: np.ndarray
    ev: np.ndarray
    cu: np.ndarray
    cv: np.ndarray
    flag: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return np.flatnonzero(self.dec.outermost)

    def pairs(self, lam_only: bool = False) -> dict:
        out: dict = {}
        sel = self.flag if lam_only else np.ones(len(self.eu), dtype=bool)
        for k in np.flatnonzero(sel):
            out.setdefault((int(self.cu[k]), int(self.cv[k])), []).append(k)
        return out

    def flags_from(self, X) -> np.ndarray:
        X = np.asarray(X)
        return (X[self.eu] > self.lam) & (X[self.ev] > self.lam)

    def with_lambda(self, lam: float) -> "ChainGraph":
        out = ChainGraph(self.dec, self.X, lam, self.eu, self.ev, self.cu, self.cv, self.flag)
        out.flag = out.flags_from(self.X)
        return out


def chain_graph(dec: ClusterDecomposition, field, lam: float) -> ChainGraph:
    if dec.outermost is None:
        raise ValueError("decomposition lacks outermost flags")
    d = dec.domain
    X = _values(field, d)
    g = d.grid_index
    H, W = d.shape
    inner = g[1:-1, 1:-1]
    eu, ev = [], []
    for dx, dy in _HALF_STAR:
        nb = g[1 + dy : 1 + dy + H, 1 + dx : 1 + dx + W]
        ok = (inner >= 0) & (nb >= 0)
        eu.append(inner[ok])
        ev.append(nb[ok])
    eu = np.concatenate(eu)
    ev = np.concatenate(ev)
    cu, cv = dec.label[eu], dec.label[ev]
    keep = (cu != cv) & dec.outermost[cu] & dec.outermost[cv]
    eu, ev, cu, cv = eu[keep], ev[keep], cu[keep], cv[keep]
    swap = cu > cv
    eu[swap], ev[swap] = ev[swap], eu[swap].copy()
    cu[swap], cv[swap] = cv[swap], cu[swap].copy()
    order = np.lexsort((ev, eu, cv, cu))
    eu, ev, cu, cv = eu[order], ev[order], cu[order], cv[order]
    flag = (X[eu] > lam) & (X[ev] > lam)
    return ChainGraph(dec, X, lam, eu, ev, cu, cv, flag)


# ---------------------------------------------------------------- disjoint chains


class _UnitFlow:
    """Residual network for small unit-capacity flows with integer costs."""

    def __init__(self, n: int):
        self.head: list[list[int]] = [[] for _ in range(n)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cost: list[int] = []

    def add(self, a: int, b: int, cap: int = 1, cost: int = 0) -> None:
        self.head[a].append(len(self.to))
        self.to.append(b)
        self.cap.append(cap)
        self.cost.append(cost)
        self.head[b].append(len(self.to))
        self.to.append(a)
        self.cap.append(0)
        self.cost.append(-cost)

    def _augment(self, src: int, dst: int, weighted: bool) -> bool:
        n = len(self.head)
        prev = [-1] * n
        if weighted:
            # Bellman-Ford queue variant; residual costs can be negative.
            inf = float("inf")
            dist = [inf] * n
            dist[src] = 0
            inq = [False] * n
            q = deque([src])
            while q:
                a = q.popleft()
                inq[a] = False
                for e in self.head[a]:
                    if self.cap[e] > 0 and dist[a] + self.cost[e] < dist[self.to[e]]:
                        b = self.to[e]
                        dist[b] = dist[a] + self.cost[e]
                        prev[b] = e
                        if not inq[b]:
                            inq[b] = True
                            q.append(b)
            if dist[dst] == inf:
                return False
        else:
            seen = [False] * n
            seen[src] = True
            q = deque([src])
            while q and not seen[dst]:
                a = q.popleft()
                for e in self.head[a]:
                    b = self.to[e]
                    if self.cap[e] > 0 and not seen[b]:
                        seen[b] = True
                        prev[b] = e
                        q.append(b)
            if not seen[dst]:
                return False
        b = dst
        while b != src:
            e = prev[b]
            self.cap[e] -= 1
            self.cap[e ^ 1] += 1
            b = self.to[e ^ 1]
        return True

    def run(self, src: int, dst: int, units: int, weighted: bool) -> int:
        got = 0
        while got < units and self._augment(src, dst, weighted):
            got += 1
        return got


def disjoint_chains(
    n: int,
    starts,
    ends,
    inside,
    star_links,
    lam_links=None,
    *,
    minimize: bool = False,
) -> tuple[list[list[int]], int | None]:
    """Two node-disjoint admissible chains on an abstract chain graph.

    Nodes ``0..n-1``.  A chain ``c_1..c_k`` is admissible when ``c_1`` is in
    ``starts``, ``c_k`` in ``ends``, ``c_2..c_{k-1}`` in ``inside``, every
    link is in ``star_links`` and, if ``lam_links`` is given, every link
    between two inner nodes is in ``lam_links``.  ``inside`` must be disjoint
    from ``starts`` and ``ends``; the link rule then depends only on node
    roles, so unit node capacities make the query a flow problem.

    Returns up to two chains and, with ``minimize``, the least total node
    count of a disjoint pair (``None`` when no pair exists).
    """
    starts, ends, inside = set(starts), set(ends), set(inside)
    if inside & (starts | ends):
        raise ValueError("inner nodes cannot also be end nodes")
    star = {frozenset(p) for p in star_links}
    lam = None if lam_links is None else {frozenset(p) for p in lam_links}
    src, dst = 2 * n, 2 * n + 1
    net = _UnitFlow(2 * n + 2)
    for v in range(n):
        net.add(2 * v, 2 * v + 1, 1, 1)
    for v in sorted(starts):
        net.add(src, 2 * v)
    for v in sorted(ends):
        net.add(2 * v + 1, dst)
    for p in sorted(tuple(sorted(p)) for p in star if len(p) == 2):
        a, b = p
        for u, w in ((a, b), (b, a)):
            if u in inside and w in inside:
                if lam is None or frozenset(p) in lam:
                    net.add(2 * u + 1, 2 * w)
            elif (u in starts and (w in inside or w in ends)) or (u in inside and w in ends):
                net.add(2 * u + 1, 2 * w)
    got = net.run(src, dst, 2, minimize)
    chains = _decompose_paths(net, src, dst, n)
    if got < 2:
        return chains, None
    return chains, sum(len(c) for c in chains) if minimize else None


def _decompose_paths(net: _UnitFlow, src: int, dst: int, n: int) -> list[list[int]]:
    # Saturated forward arcs carry the flow; cancelled pairs have zero net use.
    used = {}
    for a in range(len(net.head)):
        for e in net.head[a]:
            if e % 2 == 0 and net.cap[e] == 0:
                used.setdefault(a, []).append(net.to[e])
    chains = []
    for first in list(used.get(src, [])):
        chain, a = [], first
        while a != dst:
            if a < 2 * n and a % 2 == 0:
                chain.append(a // 2)
            nxt = used[a].pop()
            a = nxt
        chains.append(chain)
    return chains


def _annulus_roles(dec: ClusterDecomposition, z, d1: int, d2: int):
    dist = dec.domain.sup_dist_from(z)
    K = len(dec)
    dmin = np.full(K, np.iinfo(np.int64).max)
    dmax = np.full(K, -1)
    np.minimum.at(dmin, dec.label, dist)
    np.maximum.at(dmax, dec.label, dist)
    out = dec.outermost
    starts = np.flatnonzero(out & (dmin <= d1) & (dmax >= d1))
    ends = np.flatnonzero(out & (dmin <= d2) & (dmax >= d2))
    inside = np.flatnonzero(out & (dmin > d1) & (dmax < d2))
    return starts, ends, inside


def _touches_ring(dec, cids, z, r) -> np.ndarray:
    ring = dec.domain.sup_dist_from(z) == r
    return np.intersect1d(cids, dec.label[ring])


def lambda_arm_event(cg: ChainGraph, z, d1: int, d2: int, mode: str = "lambda", *, connection_number: bool = False) -> ArmResult:
    """Two cluster-disjoint chains crossing ``A_{d1,d2}(z)`` properly.

    ``mode="star"`` uses plain ``*``-links; ``mode="lambda"`` additionally
    requires lambda-passage edges on links between two intermediate clusters.
    The connection number is always that of the ``*``-event.
    """
    if mode not in ("star", "lambda"):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0 < d1 < d2:
        raise ValueError("need 0 < d1 < d2")
    dec = cg.dec
    _require_box(dec.domain, z, d2)
    cand_s, cand_t, inside = _annulus_roles(dec, z, d1, d2)
    # clusters are nn-connected, so spanning a radius means meeting that ring;
    # the explicit ring test guards the invariant
    starts = _touches_ring(dec, cand_s, z, d1)
    ends = _touches_ring(dec, cand_t, z, d2)
    roles = np.unique(np.concatenate([starts, ends, inside]))
    local = {int(c): i for i, c in enumerate(roles)}
    star, lam = set(), set()
    for k in range(len(cg.eu)):
        a, b = int(cg.cu[k]), int(cg.cv[k])
        if a in local and b in local:
            p = (local[a], local[b])
            star.add(p)
            if cg.flag[k]:
                lam.add(p)
    args = (
        len(roles),
        [local[int(c)] for c in starts],
        [local[int(c)] for c in ends],
        [local[int(c)] for c in inside],
        star,
    )
    chains, _ = disjoint_chains(*args, lam if mode == "lambda" else None)
    occurred = len(chains) >= 2
    witness = [[int(roles[i]) for i in c] for c in chains] if occurred else []
    N = None
    if connection_number:
        _, total = disjoint_chains(*args, None, minimize=True)
        N = None if total is None else total - 2
    return ArmResult(f"{mode}_arm", occurred, witness, N)


def validate_chain_pair(cg: ChainGraph, chains, z, d1: int, d2: int, mode: str) -> bool:
    """Re-check a witness against the chain definitions directly."""
    dec = cg.dec
    if len(chains) != 2 or set(chains[0]) & set(chains[1]):
        return False
    dist = dec.domain.sup_dist_from(z)
    star = cg.pairs()
    lam = cg.pairs(lam_only=True)
    for chain in chains:
        if len(set(chain)) != len(chain) or not all(dec.outermost[c] for c in chain):
            return False
        first = dist[dec.members(chain[0])]
        last = dist[dec.members(chain[-1])]
        if d1 not in first or d2 not in last:
            return False
        for c in chain[1:-1]:
            dc = dist[dec.members(c)]
            if dc.min() <= d1 or dc.max() >= d2:
                return False
        for i, (a, b) in enumerate(zip(chain, chain[1:])):
            key = (min(a, b), max(a, b))
            if key not in star:
                return False
            interior = 1 <= i and i + 1 <= len(chain) - 2
            if mode == "lambda" and interior and key not in lam:
                return False
    return True


def crossing_threshold(field, outer_box: Domain, inner_box: Domain | None = None, allowed=None) -> float:
    """Least ``lam`` at which :func:`lambda_open_crossing` holds, or ``inf``.

    ``allowed`` optionally restricts the path to a vertex subset (the carpet
    for the carpet events).  Found by bisection over the sorted field values,
    since the event is monotone in ``lam``.
    """
    vals = _values(field, outer_box).astype(float)
    if allowed is not None:
        vals = np.where(np.asarray(allowed, dtype=bool), vals, np.inf)
    block = outer_box.to_grid(vals, fill=np.inf)[_sub_block(outer_box, inner_box)]
    levels = np.unique(block[np.isfinite(block)])
    if levels.size == 0 or not lr_crossing(block <= levels[-1], "nn"):
        return float("inf")
    lo, hi = -1, len(levels) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if lr_crossing(block <= levels[mid], "nn"):
            hi = mid
        else:
            lo = mid
    return float(levels[hi])
