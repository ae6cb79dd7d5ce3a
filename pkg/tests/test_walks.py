import math

import numpy as np
import pytest

from rwls.lattice import Domain
from rwls.rng import stream
from rwls.walks import (
    boundary_edges,
    dominance_gap,
    ray_knight_check,
    simulate_local_times,
    t_N,
    thick_crossing,
    thick_points,
    thick_threshold,
)


def test_boundary_edges_of_small_box():
    d = Domain.box(1)
    b = boundary_edges(d)
    assert len(b) == 12
    corner = d.index((1, 1))
    assert np.count_nonzero(b == corner) == 2
    assert d.index((0, 0)) not in b


def test_local_time_bookkeeping():
    d = Domain.box(4)
    ltf = simulate_local_times(d, 2.0, stream(50))
    assert ltf.L_root == 2.0
    assert ltf.duration == pytest.approx(2.0 + ltf.L.sum())
    assert np.all(ltf.L[ltf.visits == 0] == 0)
    assert np.all(ltf.L[ltf.visits > 0] > 0)
    assert ltf.grid().shape == (9, 9)


def test_invalid_time_and_budget():
    d = Domain.box(8)
    with pytest.raises(ValueError):
        simulate_local_times(d, 0.0, stream(0))
    with pytest.raises(RuntimeError):
        simulate_local_times(d, 50.0, stream(0), budget=10)


def test_mean_local_time_equals_root_time():
    d, t, n = Domain.box(3), 1.5, 4000
    L = np.array([simulate_local_times(d, t, stream(51, k)).L for k in range(n)])
    for z in [(0, 0), (2, 1), (-3, 3)]:
        col = L[:, d.index(z)]
        assert abs(col.mean() - t) < 4 * col.std() / math.sqrt(n)


def test_thick_thresholds():
    assert t_N(64, 1.0) == pytest.approx(math.log(64) ** 2 / math.pi)
    assert thick_threshold(64, 1.0, 1.0) == pytest.approx(4 * t_N(64, 1.0))


def test_thick_points_monotone_in_a():
    N = 16
    d = Domain.box(N)
    ltf = simulate_local_times(d, t_N(N, 1.0), stream(52))
    masks = [thick_points(ltf, 1.0, a, N) for a in (0.1, 0.3, 0.6, 0.9)]
    for big, small in zip(masks, masks[1:]):
        assert np.all(small <= big)
    crossings = [thick_crossing(m, d) for m in masks]
    assert crossings == sorted(crossings, reverse=True)
    with pytest.raises(ValueError):
        thick_points(ltf, 1.0, 0.5, N + 1)
    with pytest.raises(ValueError):
        thick_points(ltf, 1.0, 1.5, N)


def test_dominance_gap():
    rng = stream(53)
    a = rng.exponential(size=3000)
    assert dominance_gap(a, a + 1.0)[0]
    assert not dominance_gap(a + 1.0, a)[0]


def test_ray_knight_without_local_time():
    rep = ray_knight_check(Domain.box(2), 0.0, 2000, stream(54))
    assert rep.ks_pvalue > 0.001
    assert rep.as_dict()["z"] == [0, 0]
    with pytest.raises(ValueError):
        ray_knight_check(Domain.box(2), -1.0, 10, stream(54))


def test_short_time_local_times_vanish():
    d = Domain.box(4)
    inner = d.sup_dist_from((0, 0)) <= 2
    zero = sum(not simulate_local_times(d, 1e-3, stream(55, k)).L[inner].any() for k in range(500))
    assert zero >= 480


def test_thick_crossing_rare_at_high_thickness():
    N = 64
    d = Domain.box(N)
    t = t_N(N, 1.0)
    assert t == pytest.approx(5.506, abs=1e-3)
    hits = sum(thick_crossing(thick_points(simulate_local_times(d, t, stream(56, r)), 1.0, 0.9, N), d) for r in range(100))
    assert hits < 10
