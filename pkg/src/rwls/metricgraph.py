"""Occupation field on edge interiors of the metric graph.

Each lattice edge ``e = (u, w)`` is an interval of length ``T = 1/2``.  Given
the crossing count ``n(e)`` and the endpoint values ``X(u), X(w)``, the
occupation profile along the edge is the sum of four independent pieces:

* a squared Bessel bridge of dimension ``2 n(e)`` from 0 to 0,
* a dimension-0 squared Bessel process from ``X(u)`` absorbed at 0 by time T,
* the same from ``X(w)``, run from the other end,
* a squared Bessel bridge of dimension ``2 alpha`` from 0 to 0.

Profiles are sampled on the grid ``t_j = j T / m``.  Sups over the grid
underestimate the true sup; refine ``m`` to shrink the bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from rwls.lattice import Domain
from rwls.loopsoup import LoopSoup, OccupationField

EDGE_LENGTH = 0.5
DEFAULT_M = 32


def _time_grid(T: float, m: int) -> np.ndarray:
    if m < 2:
        raise ValueError("grid resolution m must be at least 2")
    return np.arange(m + 1) * (T / m)


def besq_bridge_zero(delta, T: float = EDGE_LENGTH, m: int = DEFAULT_M, rng: np.random.Generator = None, size: int | None = None) -> np.ndarray:
    """Squared Bessel bridge of dimension ``delta`` from 0 to 0 on ``[0, T]``.

    Uses ``b_t = (1 - t/T)^2 Z_{tT/(T-t)}`` with ``Z`` a squared Bessel process
    of the same dimension started at 0, stepped exactly: over a time step
    ``h`` from ``z``, draw ``P ~ Poisson(z / 2h)`` and then
    ``Gamma(delta/2 + P, scale 2h)``.  ``delta`` may be an array (one
    dimension per row).  Returns ``(m+1,)`` or ``(size, m+1)``.
    """
    delta = np.asarray(delta, dtype=float)
    if np.any(delta < 0) or not np.all(np.isfinite(delta)):
        raise ValueError("dimension must be finite and non-negative")
    n = 1 if size is None else size
    delta = np.broadcast_to(delta, (n,)) if delta.ndim == 0 else delta
    if delta.shape != (n,):
        raise ValueError("dimension array must have one entry per sample")
    t = _time_grid(T, m)
    u = t[1:-1] * T / (T - t[1:-1])
    out = np.zeros((n, m + 1))
    z = np.zeros(n)
    prev = 0.0
    for j, uj in enumerate(u, start=1):
        h = uj - prev
        P = rng.poisson(z / (2 * h))
        z = rng.gamma(delta / 2 + P, 2 * h)
        out[:, j] = (1 - t[j] / T) ** 2 * z
        prev = uj
    return out[0] if size is None else out


def besq_bridge_brownian(delta: int, T: float = EDGE_LENGTH, m: int = DEFAULT_M, rng: np.random.Generator = None, size: int | None = None) -> np.ndarray:
    """Integer-dimension alternative: sum of ``delta`` squared Brownian bridges."""
    if int(delta) != delta or delta < 0:
        raise ValueError("this sampler needs an integer dimension")
    n = 1 if size is None else size
    t = _time_grid(T, m)
    steps = rng.standard_normal((n, int(delta), m)) * np.sqrt(T / m)
    W = np.concatenate([np.zeros((n, int(delta), 1)), np.cumsum(steps, axis=2)], axis=2)
    B = W - (t / T) * W[:, :, -1:]
    out = (B**2).sum(axis=1)
    out[:, 0] = 0.0
    out[:, -1] = 0.0
    return out[0] if size is None else out


def besq_zero_dim_conditioned(x, T: float = EDGE_LENGTH, m: int = DEFAULT_M, rng: np.random.Generator = None, size: int | None = None) -> np.ndarray:
    """Dimension-0 squared Bessel process from ``x`` conditioned on absorption at 0 by ``T``.

    The free step over ``s`` mixes a zero atom and ``Gamma(k, scale 2s)``
    with ``Poisson(y/2s)`` weights.  Tilting by the absorption probability
    ``exp(-y / 2r)`` over the remaining time ``r`` keeps the mixture form:
    ``k ~ Poisson(y r / (2 s (r + s)))`` and scale ``1 / (1/2s + 1/2r)``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("starting value must be finite and non-negative")
    n = 1 if size is None else size
    y = np.broadcast_to(x, (n,)).astype(float) if x.ndim == 0 else x.copy()
    if y.shape != (n,):
        raise ValueError("starting values must have one entry per sample")
    s = T / m
    out = np.zeros((n, m + 1))
    out[:, 0] = y
    for j in range(1, m):
        r = T - j * s
        K = rng.poisson(y * r / (2 * s * (r + s)))
        y = rng.gamma(K.astype(float), 1.0 / (1.0 / (2 * s) + 1.0 / (2 * r)))
        out[:, j] = y
    return out[0] if size is None else out


@dataclass
class EdgeOccupation:
    edge: tuple
    n_e: int
    m: int
    profile: np.ndarray

    @property
    def sup(self) -> float:
        return float(self.profile.max())

    @property
    def inf(self) -> float:
        return float(self.profile.min())


def _profiles(n_e, x_u, x_w, alpha, m, rng, T=EDGE_LENGTH) -> np.ndarray:
    n_e = np.asarray(n_e, dtype=float)
    x_u = np.asarray(x_u, dtype=float)
    x_w = np.asarray(x_w, dtype=float)
    k = len(n_e)
    prof = besq_bridge_zero(2 * n_e, T, m, rng, size=k)
    prof += besq_zero_dim_conditioned(x_u, T, m, rng, size=k)
    prof += besq_zero_dim_conditioned(x_w, T, m, rng, size=k)[:, ::-1]
    prof += besq_bridge_zero(np.full(k, 2 * alpha), T, m, rng, size=k)
    prof[:, 0] = x_u
    prof[:, -1] = x_w
    return prof


def sample_edge_profile(n_e: int, x_u: float, x_w: float, alpha: float, m: int = DEFAULT_M, rng: np.random.Generator = None, edge=None) -> EdgeOccupation:
    if n_e < 0 or x_u < 0 or x_w < 0 or alpha <= 0:
        raise ValueError("need n_e, x_u, x_w >= 0 and alpha > 0")
    prof = _profiles([n_e], [x_u], [x_w], alpha, m, rng)[0]
    return EdgeOccupation(edge, int(n_e), m, prof)


def edge_crossings(soup: LoopSoup) -> np.ndarray:
    """Traversal count of each edge of ``soup.domain``, in :meth:`Domain.edges` order."""
    d = soup.domain
    u, w = d.edges()
    M = len(d)
    eid = np.full((M, 2), -1, dtype=np.int64)  # column 0: edge to the east, 1: to the north
    horiz = d.coords[w, 0] - d.coords[u, 0] == 1
    eid[u[horiz], 0] = np.flatnonzero(horiz)
    eid[u[~horiz], 1] = np.flatnonzero(~horiz)
    if len(soup) == 0:
        return np.zeros(len(u), dtype=np.int64)
    a = soup.verts
    nxt = np.arange(1, len(a) + 1)
    ends = soup.offsets[1:] - 1
    nxt[ends] = soup.offsets[:-1]
    b = a[nxt]
    dx = d.coords[b, 0] - d.coords[a, 0]
    dy = d.coords[b, 1] - d.coords[a, 1]
    low = np.where((dx < 0) | (dy < 0), b, a)
    col = np.where(dx != 0, 0, 1)
    ids = eid[low, col]
    if np.any(ids < 0):
        raise ValueError("loop step leaves the domain")
    return np.bincount(ids, minlength=len(u))


@dataclass
class EdgeField:
    """Profiles for every edge of a domain, rows in :meth:`Domain.edges` order."""

    domain: Domain
    u: np.ndarray
    w: np.ndarray
    n_e: np.ndarray
    m: int
    profiles: np.ndarray

    @property
    def sups(self) -> np.ndarray:
        return self.profiles.max(axis=1)

    def edge(self, k: int) -> EdgeOccupation:
        d = self.domain
        return EdgeOccupation((d.vertex(self.u[k]), d.vertex(self.w[k])), int(self.n_e[k]), self.m, self.profiles[k])

    def coarsen(self, factor: int) -> "EdgeField":
        """Same field seen on the grid ``m / factor`` (a nested sub-grid)."""
        if self.m % factor:
            raise ValueError("factor must divide m")
        return EdgeField(self.domain, self.u, self.w, self.n_e, self.m // factor, self.profiles[:, ::factor].copy())


def sample_edge_field(soup: LoopSoup, field: OccupationField, m: int = DEFAULT_M, rng: np.random.Generator = None) -> EdgeField:
    d = soup.domain
    u, w = d.edges()
    n_e = edge_crossings(soup)
    prof = _profiles(n_e, field.X[u], field.X[w], soup.alpha, m, rng)
    return EdgeField(d, u, w, n_e, m, prof)


def metric_crossing(field: OccupationField, edges: EdgeField, lam: float, box: Domain | None = None) -> bool:
    """Left-right crossing of ``box`` through vertices with ``X <= lam`` and edges with sup ``<= lam``."""
    d = field.domain
    box = d if box is None else box
    u, w = d.edges()
    if edges.domain != d or len(edges.u) != len(u) or np.any(edges.u != u) or np.any(edges.w != w):
        raise ValueError("edge profiles do not cover the domain's edges")
    if not box.is_rect:
        raise ValueError("crossing region must be a box")
    x, y = d.coords[:, 0], d.coords[:, 1]
    inbox = (x >= box.xmin) & (x <= box.xmax) & (y >= box.ymin) & (y <= box.ymax)
    vopen = (field.X <= lam) & inbox
    eopen = vopen[u] & vopen[w] & (edges.sups <= lam)
    M = len(d)
    graph = coo_matrix((np.ones(eopen.sum()), (u[eopen], w[eopen])), shape=(M, M))
    _, comp = connected_components(graph, directed=False)
    left = vopen & (d.coords[:, 0] == box.xmin)
    right = vopen & (d.coords[:, 0] == box.xmax)
    return bool(np.intersect1d(comp[left], comp[right]).size)


def lambda_good(field: OccupationField, edges: EdgeField, lam: float, K: float) -> np.ndarray:
    """Vertices with ``Z <= lam`` whose incident edges all have sup ``<= K lam``."""
    d = field.domain
    bad = np.zeros(len(d), dtype=bool)
    high = edges.sups > K * lam
    bad[edges.u[high]] = True
    bad[edges.w[high]] = True
    return (field.Z <= lam) & ~bad
