"""Continuous-time walk on the boundary-glued graph, inverse local times and thick points."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import stats

from rwls.green import sample_gff
from rwls.lattice import Domain, Vertex, lr_crossing

DEFAULT_BUDGET = 10**8


def boundary_edges(domain: Domain) -> np.ndarray:
    """Raster index of the inner endpoint of every edge from ``domain`` to its complement.

    A vertex appears once per outside neighbour, so corners of a box appear twice.
    """
    g = domain.grid_index
    H, W = domain.shape
    inner = g[1:-1, 1:-1]
    out = []
    for dx, dy in ((1, 0), (0, 1), (-1, 0), (0, -1)):
        nb = g[1 + dy : 1 + dy + H, 1 + dx : 1 + dx + W]
        out.append(inner[(inner >= 0) & (nb < 0)])
    return np.sort(np.concatenate(out))


@njit(cache=True)
def _excursion_kernel(rng, grid, gx, gy, entry, K, budget):
    M = gx.shape[0]
    visits = np.zeros(M, dtype=np.int64)
    dxs = np.array([1, 0, -1, 0])
    dys = np.array([0, 1, 0, -1])
    steps = 0
    for _ in range(K):
        i = entry[rng.integers(0, entry.shape[0])]
        x = gx[i]
        y = gy[i]
        while True:
            visits[i] += 1
            r = rng.integers(0, 4)
            x += dxs[r]
            y += dys[r]
            steps += 1
            i = grid[y, x]
            if i < 0:
                break
        if steps > budget:
            return visits, steps, -1
    return visits, steps, 0


@dataclass
class LocalTimeField:
    """Local times ``L^t(z)`` at the moment the glued vertex has accumulated ``t``.

    ``excursions`` is the number of departures from the glued vertex and
    ``visits`` the per-vertex visit counts of the jump chain.
    """

    domain: Domain
    t: float
    L: np.ndarray
    visits: np.ndarray
    excursions: int
    duration: float

    @property
    def L_root(self) -> float:
        return self.t

    def grid(self) -> np.ndarray:
        return self.domain.to_grid(self.L, fill=np.nan)


def simulate_local_times(domain: Domain, t: float, rng: np.random.Generator, *, budget: int = DEFAULT_BUDGET) -> LocalTimeField:
    """Run the walk from the glued vertex until its local time there reaches ``t``.

    Every edge has rate 1/4, so a domain vertex holds for Exp(1) and the glued
    vertex for Exp(b/4) with ``b`` the number of boundary edges.  Departures
    from the glued vertex before its clock reaches ``t`` therefore form a
    Poisson(t b / 4) count, each entering through a uniform boundary edge.
    The time at a vertex visited ``k`` times is Gamma(k, 1).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    entry = boundary_edges(domain)
    K = int(rng.poisson(t * len(entry) / 4.0))
    gx = domain.coords[:, 0] - domain.xmin + 1
    gy = domain.coords[:, 1] - domain.ymin + 1
    visits, steps, status = _excursion_kernel(rng, domain.grid_index, gx, gy, entry, K, int(budget))
    if status != 0:
        raise RuntimeError(f"walk budget of {budget} steps exceeded")
    L = rng.gamma(visits.astype(float), 1.0)
    return LocalTimeField(domain, float(t), L, visits, K, float(t + L.sum()))


@dataclass
class RayKnightReport:
    z: Vertex
    t: float
    samples: int
    ks_statistic: float
    ks_pvalue: float
    dominance_ok: bool
    worst_gap: float

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def dominance_gap(smaller, larger) -> tuple[bool, float]:
    """Check ``F_smaller >= F_larger - 3 * band`` at every pooled sample point.

    The band is the standard error of the difference of the two empirical CDFs.
    Returns the verdict and the worst value of ``F_larger - F_smaller - 3*band``.
    """
    a = np.sort(np.asarray(smaller, dtype=float))
    b = np.sort(np.asarray(larger, dtype=float))
    grid = np.concatenate([a, b])
    Fa = np.searchsorted(a, grid, side="right") / len(a)
    Fb = np.searchsorted(b, grid, side="right") / len(b)
    band = np.sqrt(Fa * (1 - Fa) / len(a) + Fb * (1 - Fb) / len(b))
    gap = Fb - Fa - 3 * band
    worst = float(gap.max())
    return worst <= 0.0, worst


def ray_knight_check(domain: Domain, t: float, samples: int, rng: np.random.Generator, z=(0, 0)) -> RayKnightReport:
    """Two-sample test of ``L^t + phi'^2/2 = (phi + sqrt(2t))^2/2`` in law at ``z``.

    ``t = 0`` is allowed and compares ``phi'^2/2`` with ``phi^2/2``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    iz = domain.index(z)
    Lz = np.zeros(samples)
    if t > 0:
        for k in range(samples):
            Lz[k] = simulate_local_times(domain, t, rng).L[iz]
    phi_left = sample_gff(domain, rng, size=samples)[:, iz]
    phi_right = sample_gff(domain, rng, size=samples)[:, iz]
    left = Lz + 0.5 * phi_left**2
    right = 0.5 * (phi_right + math.sqrt(2 * t)) ** 2
    ks = stats.ks_2samp(left, right, method="asymp")
    ok, worst = dominance_gap(Lz, right)
    return RayKnightReport(Vertex(*z), float(t), samples, float(ks.statistic), float(ks.pvalue), ok, worst)


# ---------------------------------------------------------------- thick points


def t_N(N: int, theta: float) -> float:
    return theta / math.pi * math.log(N) ** 2


def thick_threshold(N: int, theta: float, a: float) -> float:
    return (math.sqrt(theta) + a) ** 2 / math.pi * math.log(N) ** 2


def thick_points(ltf: LocalTimeField, theta: float, a: float, N: int) -> np.ndarray:
    """Boolean mask of vertices whose local time reaches the thickness threshold."""
    if not 0 < a <= 1:
        raise ValueError("thickness a must lie in (0, 1]")
    if not math.isclose(ltf.t, t_N(N, theta), rel_tol=1e-12):
        raise ValueError("local times were not run to t_N(N, theta)")
    return ltf.L >= thick_threshold(N, theta, a)


def thick_crossing(mask: np.ndarray, box: Domain, adjacency: str = "star") -> bool:
    """Left-right crossing of ``box`` inside the marked set."""
    return lr_crossing(box.to_grid(np.asarray(mask, dtype=bool), fill=False), adjacency)
