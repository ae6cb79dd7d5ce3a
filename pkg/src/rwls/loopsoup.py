"""Exact sampling of the random walk loop soup and its occupation field.

Sampling uses the minimal-vertex decomposition.  Vertices are visited in
raster order ``z_1 < ... < z_M``; stage ``i`` produces exactly the loops whose
raster-minimal vertex is ``z_i``.  Those loops live in
``D_i = D minus {z_1, ..., z_{i-1}}``, their total loop-measure mass is
``log G_{D_i}(z_i, z_i)``, and a loop with ``k`` visits to ``z_i`` is a
concatenation of ``k`` independent excursions from ``z_i``.  Hence per stage:

* ``K_i ~ Poisson(alpha * log G_{D_i}(z_i, z_i))`` loops,
* each with ``k ~ LogSeries(q_i)`` visits, ``q_i = 1 - 1/G_{D_i}(z_i, z_i)``,
* each visit an excursion sampled by rejection (run the walk; keep it if it
  returns to ``z_i`` before stepping off ``D_i``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from rwls.green import assemble_green, stage_green_diagonal
from rwls.lattice import Domain, Vertex, sup_dist

DEFAULT_BUDGET = 10**7
LOGSERIES_TAIL = 1e-14


# ---------------------------------------------------------------- loops


def _raster_key(v):
    return (v[1], v[0])


def canonical_rotation(points) -> tuple:
    """Lexicographically minimal rotation (raster order) of an open vertex cycle."""
    pts = [tuple(p) for p in points]
    L = len(pts)
    keys = [_raster_key(p) for p in pts]
    low = min(keys)
    starts = [s for s in range(L) if keys[s] == low]
    best = min(starts, key=lambda s: keys[s:] + keys[:s])
    return tuple(Vertex(*p) for p in pts[best:] + pts[:best])


@dataclass(frozen=True)
class Loop:
    """An unrooted nearest-neighbour loop, stored as its canonical rooted representative.

    ``points`` is ``(v_0, ..., v_{L-1})``; the closing step back to ``v_0`` is
    implicit.
    """

    points: tuple

    def __post_init__(self):
        pts = tuple(Vertex(*p) for p in self.points)
        if len(pts) >= 2 and pts[0] == pts[-1]:
            pts = pts[:-1]
        if len(pts) < 2:
            raise ValueError("non-trivial loops have length >= 2")
        for a, b in zip(pts, pts[1:] + pts[:1]):
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                raise ValueError(f"{a} and {b} are not nearest neighbours")
        object.__setattr__(self, "points", canonical_rotation(pts))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def closed(self) -> tuple:
        return self.points + self.points[:1]

    def visit_counts(self) -> dict:
        out: dict = {}
        for p in self.points:
            out[p] = out.get(p, 0) + 1
        return out

    def multiplicity(self) -> int:
        """Largest ``j`` such that the loop is ``j`` copies of one shorter loop."""
        L = len(self.points)
        for period in range(1, L + 1):
            if L % period == 0 and all(
                self.points[i] == self.points[i % period] for i in range(L)
            ):
                return L // period
        return 1

    def weight(self) -> float:
        """Unrooted loop measure ``4^{-|loop|} / J(loop)``."""
        return 4.0 ** (-len(self)) / self.multiplicity()


# ---------------------------------------------------------------- kernel


@njit(cache=True)
def _grow(buf, n):
    if n < buf.shape[0]:
        return buf
    out = np.empty(2 * buf.shape[0], dtype=buf.dtype)
    out[: buf.shape[0]] = buf
    return out


@njit(cache=True)
def _canonicalize(buf, start, end, tmp):
    L = end - start
    root = buf[start]
    best = 0
    for p in range(1, L):
        if buf[start + p] != root:
            continue
        for t in range(L):
            a = buf[start + (p + t) % L]
            b = buf[start + (best + t) % L]
            if a != b:
                if a < b:
                    best = p
                break
    if best != 0:
        for t in range(L):
            tmp[t] = buf[start + (best + t) % L]
        for t in range(L):
            buf[start + t] = tmp[t]


@njit(cache=True)
def _soup_kernel(rng, grid, gx, gy, mass, q, alpha, budget, tail):
    M = mass.shape[0]
    dxs = np.array([1, 0, -1, 0])
    dys = np.array([0, 1, 0, -1])
    verts = np.empty(1024, dtype=np.int64)
    offsets = np.empty(64, dtype=np.int64)
    stages = np.empty(64, dtype=np.int64)
    tmp = np.empty(1024, dtype=np.int64)
    offsets[0] = 0
    nv = 0
    nl = 0
    steps = 0
    for i in range(M):
        if mass[i] <= 0.0:
            continue
        K = rng.poisson(alpha * mass[i])
        for _ in range(K):
            qi = q[i]
            u = rng.random()
            p = qi / mass[i]
            cum = p
            k = 1
            while u > cum and 1.0 - cum > tail:
                p *= qi * k / (k + 1)
                k += 1
                cum += p
            start = nv
            for _e in range(k):
                while True:
                    mark = nv
                    verts = _grow(verts, nv + 1)
                    verts[nv] = i
                    nv += 1
                    x = gx[i]
                    y = gy[i]
                    ok = False
                    while True:
                        r = rng.integers(0, 4)
                        x += dxs[r]
                        y += dys[r]
                        steps += 1
                        j = grid[y, x]
                        if j == i:
                            ok = True
                            break
                        if j < i:
                            break
                        verts = _grow(verts, nv + 1)
                        verts[nv] = j
                        nv += 1
                    if steps > budget:
                        return verts[:0], offsets[:1], stages[:0], steps, -1
                    if ok:
                        break
                    nv = mark
            if nv - start > tmp.shape[0]:
                tmp = np.empty(2 * (nv - start), dtype=np.int64)
            _canonicalize(verts, start, nv, tmp)
            nl += 1
            offsets = _grow(offsets, nl + 1)
            stages = _grow(stages, nl + 1)
            offsets[nl] = nv
            stages[nl - 1] = i
    return verts[:nv].copy(), offsets[: nl + 1].copy(), stages[:nl].copy(), steps, 0


# ---------------------------------------------------------------- soups


_STAGE_CACHE: dict = {}


def stage_tables(domain: Domain) -> tuple[np.ndarray, np.ndarray]:
    """Per-stage loop mass ``log G_{D_i}(z_i,z_i)`` and return probability ``q_i``."""
    hit = _STAGE_CACHE.get(domain.key)
    if hit is None:
        g = stage_green_diagonal(domain)
        mass = np.log(g)
        q = 1.0 - 1.0 / g
        mass[mass < 0] = 0.0
        q[q < 0] = 0.0
        if len(_STAGE_CACHE) > 16:
            _STAGE_CACHE.clear()
        hit = (mass, q)
        _STAGE_CACHE[domain.key] = hit
    return hit


def loop_mass_at(z, subdomain: Domain) -> float:
    """Loop-measure mass of the non-trivial loops in ``subdomain`` that visit ``z``."""
    if len(subdomain) == 1:
        return 0.0
    return math.log(assemble_green(subdomain)(z, z))


@dataclass
class LoopSoup:
    """Non-trivial loops of a soup in ``domain``, stored flat.

    Loop ``k`` is ``verts[offsets[k]:offsets[k+1]]`` (raster indices, canonical
    rotation, closing step implicit); ``stages[k]`` is its raster-minimal vertex.
    """

    domain: Domain
    alpha: float
    verts: np.ndarray
    offsets: np.ndarray
    stages: np.ndarray
    seed: object = None
    steps: int = 0
    _visits: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.offsets) - 1

    @property
    def visits(self) -> np.ndarray:
        """``n(z)``: total visits to each vertex by the non-trivial loops."""
        if self._visits is None:
            self._visits = np.bincount(self.verts, minlength=len(self.domain))
        return self._visits

    def loop_indices(self, k: int) -> np.ndarray:
        return self.verts[self.offsets[k] : self.offsets[k + 1]]

    def loop(self, k: int) -> Loop:
        return Loop(tuple(self.domain.vertex(i) for i in self.loop_indices(k)))

    def loops(self) -> list[Loop]:
        return [self.loop(k) for k in range(len(self))]

    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def loop_ids(self) -> np.ndarray:
        """Loop number of every entry of ``verts``."""
        return np.repeat(np.arange(len(self)), self.lengths())

    def restrict(self, sub: Domain) -> "LoopSoup":
        """Loops lying entirely in ``sub``, re-indexed to ``sub``'s raster order."""
        coords = self.domain.coords
        g = sub.grid_index
        gx = coords[:, 0] - sub.xmin + 1
        gy = coords[:, 1] - sub.ymin + 1
        inside = (gx >= 0) & (gx < g.shape[1]) & (gy >= 0) & (gy < g.shape[0])
        remap = np.full(len(self.domain), -1, dtype=np.int64)
        remap[inside] = g[gy[inside], gx[inside]]
        new = remap[self.verts]
        bad = np.zeros(len(self), dtype=bool)
        if len(self):
            np.logical_or.at(bad, self.loop_ids(), new < 0)
        keep = np.flatnonzero(~bad)
        pieces = [new[self.offsets[k] : self.offsets[k + 1]] for k in keep]
        lengths = np.array([len(p) for p in pieces], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        verts = np.concatenate(pieces) if pieces else np.empty(0, dtype=np.int64)
        stages = np.array([p.min() for p in pieces], dtype=np.int64)
        return LoopSoup(sub, self.alpha, verts, offsets, stages, seed=self.seed)

    @classmethod
    def from_loops(cls, domain: Domain, loops, alpha: float = 0.0) -> "LoopSoup":
        """Build a soup from hand-made loops (vertex sequences or :class:`Loop`)."""
        pieces = []
        for lp in loops:
            lp = lp if isinstance(lp, Loop) else Loop(tuple(lp))
            pieces.append(np.array([domain.index(p) for p in lp.points], dtype=np.int64))
        lengths = np.array([len(p) for p in pieces], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        verts = np.concatenate(pieces) if pieces else np.empty(0, dtype=np.int64)
        stages = np.array([p.min() for p in pieces], dtype=np.int64)
        return cls(domain, alpha, verts, offsets, stages)

    # -------------------------------------------------------- serialization

    def to_jsonl(self) -> str:
        dom = self.domain
        header = {
            "alpha": self.alpha,
            "domain": (
                {"box": dom.radius, "center": list(dom.center)}
                if dom.radius is not None
                else {"vertices": dom.coords.tolist()}
            ),
            "loops": len(self),
            "seed": self.seed,
        }
        lines = [json.dumps(header, sort_keys=True)]
        for k in range(len(self)):
            lines.append(json.dumps(self.domain.coords[self.loop_indices(k)].tolist()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "LoopSoup":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = json.loads(lines[0])
        dom_info = header["domain"]
        if "box" in dom_info:
            domain = Domain.box(dom_info["box"], tuple(dom_info["center"]))
        else:
            domain = Domain(dom_info["vertices"])
        soup = cls.from_loops(domain, [json.loads(ln) for ln in lines[1:]], header["alpha"])
        soup.seed = header.get("seed")
        return soup


def sample_soup(domain: Domain, alpha: float, rng: np.random.Generator, *, budget: int = DEFAULT_BUDGET, seed=None) -> LoopSoup:
    """Exact sample of the loop soup of intensity ``alpha`` in ``domain``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    mass, q = stage_tables(domain)
    gx = domain.coords[:, 0] - domain.xmin + 1
    gy = domain.coords[:, 1] - domain.ymin + 1
    verts, offsets, stages, steps, status = _soup_kernel(
        rng, domain.grid_index, gx, gy, mass, q, float(alpha), int(budget), LOGSERIES_TAIL
    )
    if status != 0:
        raise RuntimeError(f"sampling budget of {budget} walk steps exceeded")
    return LoopSoup(domain, alpha, verts, offsets, stages, seed=seed, steps=int(steps))


# ---------------------------------------------------------------- occupation


@dataclass
class OccupationField:
    """Occupation time ``X``, visit count ``Y`` and local maximum ``Z`` per vertex.

    ``X = trivial_time + loop_time`` where ``trivial_time ~ Gamma(alpha, 1)`` is
    the time of the trivial loop and ``loop_time ~ Gamma(n, 1)`` the time of the
    ``n`` visits by non-trivial loops.
    """

    domain: Domain
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    trivial_time: np.ndarray
    loop_time: np.ndarray

    def grid(self, name: str = "X", fill=np.nan) -> np.ndarray:
        return self.domain.to_grid(getattr(self, name), fill=fill)


def local_max(domain: Domain, X, Y, star: bool = False) -> np.ndarray:
    """``max(X(w), Y(w))`` over ``w = z`` and its neighbours inside the domain.

    ``star=False`` uses the 4 nearest neighbours, ``star=True`` all 8.
    """
    vals = domain.to_grid(np.maximum(X, Y).astype(float), fill=-np.inf)
    footprint = np.ones((3, 3), bool) if star else ndimage.generate_binary_structure(2, 1)
    out = ndimage.maximum_filter(vals, footprint=footprint, mode="constant", cval=-np.inf)
    return domain.from_grid(out)


def occupation(soup: LoopSoup, rng: np.random.Generator, *, shape_alpha: float | None = None) -> OccupationField:
    """Occupation field of ``soup``; ``X(z) | n ~ Gamma(n(z) + alpha, 1)``.

    ``shape_alpha`` overrides the trivial-loop shape and exists only for
    negative-control experiments.
    """
    a = soup.alpha if shape_alpha is None else shape_alpha
    n = soup.visits
    trivial = rng.gamma(a, 1.0, size=len(n))
    loop_time = rng.gamma(n.astype(float), 1.0)
    X = trivial + loop_time
    Y = n.copy()
    Z = local_max(soup.domain, X, Y)
    return OccupationField(soup.domain, X, Y, Z, trivial, loop_time)


def visits_avoiding(soup: LoopSoup, z: int, w: int) -> int:
    """Visits to vertex index ``z`` by loops that do not visit ``w``."""
    if len(soup) == 0:
        return 0
    ids = soup.loop_ids()
    through_w = np.zeros(len(soup), dtype=bool)
    through_w[ids[soup.verts == w]] = True
    at_z = ids[soup.verts == z]
    return int(np.count_nonzero(~through_w[at_z]))


def avoiding_occupation(field: OccupationField, soup: LoopSoup, z, w, rng: np.random.Generator) -> float:
    """Occupation at ``z`` from the trivial loop and from loops avoiding ``w``.

    ``w`` must be a ``*``-neighbour of ``z``.  The loop time at ``z`` is a sum
    of ``n(z)`` unit exponentials; the share belonging to the ``m`` visits of
    ``w``-avoiding loops is ``loop_time * Beta(m, n - m)``.
    """
    if sup_dist(z, w) != 1:
        raise ValueError("w must be a *-neighbour of z")
    iz = soup.domain.index(z)
    n = int(soup.visits[iz])
    iw = soup.domain.index(w) if w in soup.domain else -1
    m = n if iw < 0 else visits_avoiding(soup, iz, iw)
    if m == 0:
        share = 0.0
    elif m == n:
        share = 1.0
    else:
        share = rng.beta(m, n - m)
    return float(field.trivial_time[iz] + field.loop_time[iz] * share)


__all__ = [
    "Loop",
    "LoopSoup",
    "OccupationField",
    "avoiding_occupation",
    "canonical_rotation",
    "local_max",
    "loop_mass_at",
    "occupation",
    "sample_soup",
    "stage_tables",
]
