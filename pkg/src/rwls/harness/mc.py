"""Monte Carlo campaigns.

Every random draw comes from ``stream(seed, unit, stage)`` where ``unit`` is a
replica (or a fixed-size chunk of samples) and ``stage`` names the quantity
being drawn, so results do not depend on how units are spread over workers.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy

import rwls
from rwls.clusters import carpet, decompose
from rwls.events import (
    InvariantError,
    boundary_arm,
    carpet_crossing,
    crossing_threshold,
    four_arm_interior,
    half_plane_decomposition,
    lambda_open_crossing,
)
from rwls.exponents import ExponentTable
from rwls.green import assemble_green, sample_gff
from rwls.harness import stats as st
from rwls.lattice import Domain
from rwls.loopsoup import avoiding_occupation, occupation, sample_soup
from rwls.metricgraph import lambda_good, metric_crossing, sample_edge_field
from rwls.rng import stream
from rwls.walks import dominance_gap, ray_knight_check, simulate_local_times, t_N, thick_crossing, thick_points

P_C_SITE = 0.592746
SIGNIFICANCE = 0.01
CHUNK = 500

SOUP, OCC, EDGE, GFF, WALK = range(5)

# not part of the experiment's identity: changing them must not change results
_RUNTIME_FIELDS = ("workers", "output")


@dataclass
class McConfig:
    kind: str
    seed: int | None = None
    N: int = 32
    alpha: float = 0.25
    lambdas: tuple = ()
    bounds: tuple = (0.0, 10.0)
    level: float = 0.5
    tol: float = 1e-3
    replicas: int = 100
    samples: int = 10_000
    ratios: tuple = (2, 4, 8)
    d1: int = 2
    t: float = 1.0
    theta: float = 1.0
    a: float = 0.9
    m: int = 32
    K: float = 16.0
    p_c: float = P_C_SITE
    budget: int = 10**7
    corrupt: bool = False
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("a seed is required")
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        self.lambdas = tuple(float(v) for v in self.lambdas)
        self.bounds = tuple(float(v) for v in self.bounds)
        self.ratios = tuple(int(r) for r in self.ratios)

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def echo(self) -> dict:
        d = asdict(self)
        for k in _RUNTIME_FIELDS:
            d.pop(k)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.echo(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class McReport:
    kind: str
    config: dict
    config_hash: str
    seed: int
    versions: dict
    cells: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    passed: bool | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v)}")


def versions() -> dict:
    return {"rwls": rwls.__version__, "numpy": np.__version__, "scipy": scipy.__version__}


def new_report(cfg: McConfig) -> McReport:
    return McReport(cfg.kind, cfg.echo(), cfg.digest(), cfg.seed, versions())


def run_units(task, cfg: McConfig, count: int) -> list:
    """``[task(cfg, 0), ..., task(cfg, count-1)]``, possibly on a process pool."""
    if cfg.workers == 1 or count == 1:
        return [task(cfg, u) for u in range(count)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(task, [cfg] * count, range(count), chunksize=max(1, count // (4 * cfg.workers))))


def _prop_cell(k: int, n: int) -> dict:
    lo, hi = st.wilson(k, n)
    return {"k": int(k), "n": int(n), "p": k / n if n else float("nan"), "lo": lo, "hi": hi}


# ---------------------------------------------------------------- crossing curves


def _crossing_replica(cfg: McConfig, r: int):
    d = Domain.box(cfg.N)
    half = Domain.box(cfg.N // 2)
    try:
        soup = sample_soup(d, cfg.alpha, stream(cfg.seed, r, SOUP), budget=cfg.budget)
    except RuntimeError:
        return None
    fld = occupation(soup, stream(cfg.seed, r, OCC))
    dec = decompose(soup)
    cmask = carpet(dec)
    out = np.zeros((4, len(cfg.lambdas)), dtype=bool)
    for j, lam in enumerate(cfg.lambdas):
        out[0, j] = lambda_open_crossing(fld, lam, d)
        out[1, j] = lambda_open_crossing(fld, lam, d, half)
        out[2, j] = carpet_crossing(fld, dec, lam, d, carpet_mask=cmask)
        out[3, j] = carpet_crossing(fld, dec, lam, d, half, carpet_mask=cmask)
    thresholds = [
        crossing_threshold(fld, d),
        crossing_threshold(fld, d, half),
        crossing_threshold(fld, d, allowed=cmask),
        crossing_threshold(fld, d, half, allowed=cmask),
    ]
    return out, thresholds


CROSSING_EVENTS = ("E", "E_half", "F", "F_half")


def crossing_curve(cfg: McConfig) -> McReport:
    """Crossing probabilities on a lambda grid, all thresholds applied to one field per replica.

    Per replica the indicators must be non-decreasing in lambda, the carpet
    events must imply the plain ones, and each indicator must agree with the
    replica's exact crossing threshold; violations raise.
    """
    lams = np.asarray(cfg.lambdas)
    if lams.size == 0 or np.any(np.diff(lams) < 0):
        raise ValueError("lambda grid must be non-empty and sorted")
    results = run_units(_crossing_replica, cfg, cfg.replicas)
    rep = new_report(cfg)
    ok = [res for res in results if res is not None]
    if len(ok) < len(results):
        rep.flags.append(f"partial: {len(results) - len(ok)} replicas exceeded the sampling budget")
    counts = np.zeros((4, len(lams)), dtype=np.int64)
    for out, thr in ok:
        if np.any(np.diff(out.astype(int), axis=1) < 0):
            raise InvariantError("crossing indicator not monotone in lambda")
        if np.any(out[2] & ~out[0]) or np.any(out[3] & ~out[1]):
            raise InvariantError("carpet crossing without plain crossing")
        if np.any(out != (lams[None, :] >= np.asarray(thr)[:, None])):
            raise InvariantError("indicator disagrees with the crossing threshold")
        counts += out
    n = len(ok)
    for j, lam in enumerate(lams):
        rep.cells.append({"lambda": float(lam), **{e: _prop_cell(counts[i, j], n) for i, e in enumerate(CROSSING_EVENTS)}})
    rep.summary = {"replicas_used": n}
    rep.passed = True
    return rep


def bernoulli_domination_lambda(alpha: float, p_c: float = P_C_SITE) -> float:
    """Level below which open vertices are dominated by site percolation at ``p_c / 2``.

    Solves ``lam^alpha / (alpha Gamma(alpha)) = p_c / 2``.
    """
    if not 0 < p_c < 1:
        raise ValueError("p_c must lie in (0, 1)")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return (alpha * math.gamma(alpha) * p_c / 2) ** (1 / alpha)


# ---------------------------------------------------------------- critical search


def bisect_level(prob, lo: float, hi: float, level: float, tol: float) -> tuple[float, float]:
    """Shrink ``[lo, hi]`` around the level crossing of a non-decreasing ``prob``."""
    if not 0 < level < 1:
        raise ValueError("level must lie strictly between 0 and 1")
    if not lo < hi:
        raise ValueError("need lo < hi")
    if not (prob(lo) < level <= prob(hi)):
        raise ValueError("bounds do not bracket the target level")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if prob(mid) >= level:
            hi = mid
        else:
            lo = mid
    return lo, hi


def _threshold_replica(cfg: McConfig, r: int) -> float:
    d = Domain.box(cfg.N)
    soup = sample_soup(d, cfg.alpha, stream(cfg.seed, r, SOUP), budget=cfg.budget)
    fld = occupation(soup, stream(cfg.seed, r, OCC))
    return crossing_threshold(fld, d)


def critical_lambda_search(cfg: McConfig, prob=None) -> McReport:
    """Bisection for the lambda where the left-right crossing probability reaches ``cfg.level``.

    With ``prob`` given, it is bisected directly.  Otherwise every replica
    contributes its exact crossing threshold, so the estimated probability
    ``p(lam) = #{thresholds <= lam} / replicas`` is monotone and bisection is
    well defined.
    """
    rep = new_report(cfg)
    if prob is None:
        thr = np.sort(np.asarray(run_units(_threshold_replica, cfg, cfg.replicas)))
        n = len(thr)

        def prob(lam):
            return np.searchsorted(thr, lam, side="right") / n

        rep.summary["thresholds_quantiles"] = [float(np.quantile(thr, q)) for q in (0.1, 0.25, 0.5, 0.75, 0.9)]
    else:
        n = None
    lo, hi = bisect_level(prob, cfg.bounds[0], cfg.bounds[1], cfg.level, cfg.tol)
    est = 0.5 * (lo + hi)
    rep.summary.update({"lambda_hat": est, "bracket": [lo, hi], "p_lo": float(prob(lo)), "p_hi": float(prob(hi))})
    if n is not None:
        rep.summary["wilson_lo"] = st.wilson(round(prob(lo) * n), n)
        rep.summary["wilson_hi"] = st.wilson(round(prob(hi) * n), n)
    rep.passed = est > 0
    return rep


# ---------------------------------------------------------------- arm scans


def _arm_replica(cfg: McConfig, r: int):
    radii = [cfg.d1 * q for q in cfg.ratios]
    R = 2 * max(radii)
    d = Domain.box(R)
    soup = sample_soup(d, cfg.alpha, stream(cfg.seed, r, SOUP), budget=cfg.budget)
    dec = decompose(soup)
    top = half_plane_decomposition(soup, 0)
    out = np.zeros((3, len(radii)), dtype=bool)
    for j, d2 in enumerate(radii):
        out[0, j] = four_arm_interior(dec, (0, 0), cfg.d1, d2).occurred
        out[1, j] = boundary_arm(None, (0, 0), cfg.d1, d2, "two", dec=top).occurred
        out[2, j] = boundary_arm(None, (0, 0), cfg.d1, d2, "four", dec=top).occurred
    return out


ARM_EVENTS = ("four_arm", "boundary_two_arm", "boundary_four_arm")


def arm_probability_scan(cfg: McConfig) -> McReport:
    """Arm probabilities at ``d2 = d1 * ratio`` in ``B_{2 d2max}`` with log-log slopes.

    Reported slopes sit next to the exact asymptotic exponents; at these
    sizes they are not expected to agree and nothing is asserted about it.
    """
    ratios = np.asarray(cfg.ratios)
    if np.any(np.diff(ratios) <= 0) or ratios[0] < 2:
        raise ValueError("ratios must be increasing and at least 2")
    outs = run_units(_arm_replica, cfg, cfg.replicas)
    counts = np.sum(outs, axis=0)
    n = cfg.replicas
    rep = new_report(cfg)
    for j, q in enumerate(ratios):
        rep.cells.append({"ratio": int(q), "d1": cfg.d1, "d2": int(cfg.d1 * q), **{e: _prop_cell(counts[i, j], n) for i, e in enumerate(ARM_EVENTS)}})
    if np.any(counts[2] > counts[1]):
        raise InvariantError("boundary four-arm more frequent than two-arm")
    for i, e in enumerate(ARM_EVENTS):
        if np.any(counts[i] == 0):
            rep.flags.append(f"{e}: zero-count cells excluded from the fit")
        try:
            fit = st.loglog_fit(ratios, counts[i], n)
            rep.summary[f"{e}_slope"] = {"slope": fit.slope, "stderr": fit.stderr, "ci": list(fit.ci), "cells": fit.used}
        except ValueError as exc:
            rep.summary[f"{e}_slope"] = {"error": str(exc)}
    p = counts[0] / n
    se = np.sqrt(p * (1 - p) / n)
    rep.summary["four_arm_strictly_decreasing_3sigma"] = bool(
        np.all(p[:-1] - p[1:] > 3 * np.sqrt(se[:-1] ** 2 + se[1:] ** 2))
    )
    tab = ExponentTable.at(cfg.alpha)
    rep.summary["exact_exponents"] = {"interior_four_arm": tab.xi_interior, "boundary_four_arm": tab.xi_bdy4, "boundary_two_arm": tab.xi_bdy2}
    rep.summary["disclaimer"] = (
        "exact values are asymptotic exponents; desk-scale slopes carry finite-size "
        "corrections and are reported, not compared"
    )
    rep.passed = True
    return rep


# ---------------------------------------------------------------- exact-law suite


def _pairs(N: int):
    k = max(1, N // 4)
    return [((0, 0), (1, 0)), ((0, 0), (k, k)), ((-k, 1), (k, -1))]


def _iso_chunk(cfg: McConfig, c: int) -> dict:
    d = Domain.box(cfg.N)
    size = min(CHUNK, cfg.samples - c * CHUNK)
    i0 = d.index((0, 0))
    iz = d.index((cfg.N // 2, -(cfg.N // 3)))
    w = (1, 0)
    iw = d.index(w)
    pairs = [(d.index(a), d.index(b)) for a, b in _pairs(cfg.N)]
    soup_rng = stream(cfg.seed, c, SOUP)
    occ_rng = stream(cfg.seed, c, OCC)
    shape = cfg.alpha / 2 if cfg.corrupt else None
    X0, Xz, Xav, no0, no0w = [], [], [], [], []
    Xp = [[] for _ in pairs]
    for _ in range(size):
        soup = sample_soup(d, cfg.alpha, soup_rng, budget=cfg.budget)
        fld = occupation(soup, occ_rng, shape_alpha=shape)
        X0.append(fld.X[i0])
        Xz.append(fld.X[iz])
        for k, (a, b) in enumerate(pairs):
            Xp[k].append((fld.X[a], fld.X[b]))
        no0.append(soup.visits[i0] == 0)
        ids = soup.loop_ids()
        both = np.intersect1d(ids[soup.verts == i0], ids[soup.verts == iw]).size
        no0w.append(both == 0)
        Xav.append(avoiding_occupation(fld, soup, (0, 0), w, occ_rng))
    phi = sample_gff(d, stream(cfg.seed, c, GFF), size=size)[:, i0]
    return {"X0": X0, "Xz": Xz, "Xp": Xp, "no0": no0, "no0w": no0w, "Xav": Xav, "phi0": phi.tolist()}


def _rk_chunk(cfg: McConfig, c: int) -> dict:
    d = Domain.box(4)
    size = min(CHUNK, cfg.samples - c * CHUNK)
    rng = stream(cfg.seed, c, WALK)
    picks = [d.index(v) for v in ((0, 0), (2, 1), (4, -4))]
    L = np.array([simulate_local_times(d, cfg.t, rng).L[picks] for _ in range(size)])
    g = stream(cfg.seed, c, GFF)
    phi_a = sample_gff(d, g, size=size)[:, picks[0]]
    phi_b = sample_gff(d, g, size=size)[:, picks[0]]
    return {"L": L.tolist(), "phi_a": phi_a.tolist(), "phi_b": phi_b.tolist()}


def _gather(chunks, key):
    return np.concatenate([np.asarray(ch[key], dtype=float) for ch in chunks])


def isomorphism_suite(cfg: McConfig) -> McReport:
    """Exact-law tests: Gamma marginals, covariances, loop avoidance, Le Jan, Ray-Knight.

    Each test yields a p-value; the suite passes when every p-value exceeds
    the Bonferroni-corrected level.
    """
    if cfg.N > 16:
        raise ValueError("exact Green solves are limited to N <= 16 here")
    nchunks = math.ceil(cfg.samples / CHUNK)
    chunks = run_units(_iso_chunk, cfg, nchunks)
    rk = run_units(_rk_chunk, cfg, nchunks)
    d = Domain.box(cfg.N)
    G = assemble_green(d)
    a = cfg.alpha
    tests = []

    def add(name, p, detail):
        tests.append({"name": name, "pvalue": float(p), **detail})

    X0 = _gather(chunks, "X0")
    Xz = _gather(chunks, "Xz")
    z = (cfg.N // 2, -(cfg.N // 3))
    add("gamma_marginal_origin", st.ks_gamma(X0, a, G((0, 0), (0, 0))), {"scale": G((0, 0), (0, 0))})
    add("gamma_marginal_offcentre", st.ks_gamma(Xz, a, G(z, z)), {"vertex": list(z), "scale": G(z, z)})
    for k, (u, v) in enumerate(_pairs(cfg.N)):
        xy = np.concatenate([np.asarray(ch["Xp"][k], dtype=float) for ch in chunks])
        cov, se = st.covariance_se(xy[:, 0], xy[:, 1])
        target = a * G(u, v) ** 2
        add(f"covariance_{k}", st.z_pvalue(cov, target, se, 0.05 * target), {"pair": [list(u), list(v)], "estimate": cov, "target": target, "se": se})
    n = len(X0)
    k0 = int(_gather(chunks, "no0").sum())
    p0 = G((0, 0), (0, 0)) ** (-a)
    add("no_loop_through_origin", st.z_pvalue(k0 / n, p0, math.sqrt(p0 * (1 - p0) / n)), {"estimate": k0 / n, "target": p0})
    w = (1, 0)
    k0w = int(_gather(chunks, "no0w").sum())
    p0w = (1 - G((0, 0), w) ** 2 / (G((0, 0), (0, 0)) * G(w, w))) ** a
    add("two_point_avoidance", st.z_pvalue(k0w / n, p0w, math.sqrt(p0w * (1 - p0w) / n)), {"estimate": k0w / n, "target": p0w})
    sub = Domain([v for v in d.vertices() if v != w])
    Xav = _gather(chunks, "Xav")
    add("avoiding_occupation_gamma", st.ks_gamma(Xav, a, assemble_green(sub)((0, 0), (0, 0))), {"exp_moment_0.05": float(np.exp(0.05 * Xav).mean())})
    if a == 0.5:
        add("le_jan_square_gff", st.ks_2samp(X0, 0.5 * _gather(chunks, "phi0") ** 2), {})
    L = np.concatenate([np.asarray(ch["L"], dtype=float) for ch in rk])
    phi_a = _gather(rk, "phi_a")
    phi_b = _gather(rk, "phi_b")
    right = 0.5 * (phi_b + math.sqrt(2 * cfg.t)) ** 2
    add("ray_knight_identity", st.ks_2samp(L[:, 0] + 0.5 * phi_a**2, right), {"t": cfg.t})
    for j in range(L.shape[1]):
        m, se = L[:, j].mean(), L[:, j].std(ddof=1) / math.sqrt(len(L))
        add(f"local_time_mean_{j}", st.z_pvalue(m, cfg.t, se), {"estimate": float(m), "target": cfg.t})
    dom_ok, worst = dominance_gap(L[:, 0], right)
    cut = st.bonferroni(SIGNIFICANCE, len(tests))
    for t_ in tests:
        t_["threshold"] = cut
        t_["passed"] = t_["pvalue"] > cut
    tests.append({"name": "ray_knight_dominance", "passed": bool(dom_ok), "worst_gap": worst})
    rep = new_report(cfg)
    rep.cells = tests
    rep.summary = {"tests": len(tests), "failed": [t_["name"] for t_ in tests if not t_["passed"]]}
    rep.passed = not rep.summary["failed"]
    return rep


# ---------------------------------------------------------------- thick points and metric graph


def _thick_replica(cfg: McConfig, r: int) -> tuple[int, bool]:
    d = Domain.box(cfg.N)
    ltf = simulate_local_times(d, t_N(cfg.N, cfg.theta), stream(cfg.seed, r, WALK), budget=cfg.budget * 10)
    mask = thick_points(ltf, cfg.theta, cfg.a, cfg.N)
    return int(mask.sum()), bool(thick_crossing(mask, d, "star"))


def thick_point_runs(cfg: McConfig) -> list[tuple[int, int, bool]]:
    return [(r, s, c) for r, (s, c) in enumerate(run_units(_thick_replica, cfg, cfg.replicas))]


def _metric_replica(cfg: McConfig, r: int):
    d = Domain.box(cfg.N)
    soup = sample_soup(d, cfg.alpha, stream(cfg.seed, r, SOUP), budget=cfg.budget)
    fld = occupation(soup, stream(cfg.seed, r, OCC))
    edges = sample_edge_field(soup, fld, cfg.m, stream(cfg.seed, r, EDGE))
    lam = cfg.lambdas[0]
    disc = lambda_open_crossing(fld, lam, d)
    metr = metric_crossing(fld, edges, lam)
    if metr and not disc:
        raise InvariantError("metric crossing without discrete crossing")
    good = int(lambda_good(fld, edges, lam, cfg.K).sum())
    return bool(disc), bool(metr), good


def metric_crossing_runs(cfg: McConfig) -> list[tuple]:
    if not cfg.lambdas:
        raise ValueError("metric crossing needs a lambda")
    return [(r, *res) for r, res in enumerate(run_units(_metric_replica, cfg, cfg.replicas))]


def ray_knight_report(cfg: McConfig):
    return ray_knight_check(Domain.box(cfg.N), cfg.t, cfg.samples, stream(cfg.seed, 0, WALK))


__all__ = [
    "McConfig",
    "McReport",
    "arm_probability_scan",
    "bernoulli_domination_lambda",
    "bisect_level",
    "critical_lambda_search",
    "crossing_curve",
    "isomorphism_suite",
    "metric_crossing_runs",
    "run_units",
    "thick_point_runs",
]
