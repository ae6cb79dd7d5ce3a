import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import fill_reference, transitive_closure_clusters
from rwls.clusters import UnionFind, carpet, decompose, mark_outermost
from rwls.lattice import Domain
from rwls.loopsoup import LoopSoup, sample_soup
from rwls.rng import stream

STEPS = [(1, 0), (0, 1), (-1, 0), (0, -1)]


def ring(r, center=(0, 0)):
    """Loop around the sup-norm circle of radius ``r``."""
    cx, cy = center
    pts = [(cx - r + k, cy - r) for k in range(2 * r)]
    pts += [(cx + r, cy - r + k) for k in range(2 * r)]
    pts += [(cx + r - k, cy + r) for k in range(2 * r)]
    pts += [(cx - r, cy + r - k) for k in range(2 * r)]
    return pts


@st.composite
def out_and_back(draw, radius=4):
    x, y = draw(st.integers(-radius, radius)), draw(st.integers(-radius, radius))
    path = [(x, y)]
    for s in draw(st.lists(st.sampled_from(STEPS), min_size=1, max_size=6)):
        nx, ny = path[-1][0] + s[0], path[-1][1] + s[1]
        if max(abs(nx), abs(ny)) <= radius:
            path.append((nx, ny))
    if len(path) < 2:
        path.append((x + 1, y) if x < radius else (x - 1, y))
    return path + path[-2:0:-1]


def brute_outermost(dec):
    frame = dec.domain
    sets = [dec.vertices_of(c) for c in range(len(dec))]
    fills = [fill_reference(s, frame) for s in sets]
    return np.array(
        [not any(j != i and sets[i] <= fills[j] for j in range(len(dec))) for i in range(len(dec))]
    )


def test_union_find():
    uf = UnionFind(5)
    uf.union(0, 3)
    uf.union(3, 4)
    assert uf.find(4) == uf.find(0) != uf.find(1)


def test_empty_soup_is_all_trivial():
    d = Domain.box(2)
    dec = decompose(LoopSoup.from_loops(d, []))
    assert len(dec) == 25 and dec.trivial.all() and dec.outermost.all()
    assert carpet(dec).all()


def test_cluster_ids_follow_raster_order():
    d = Domain.box(2)
    dec = decompose(LoopSoup.from_loops(d, [[(1, 1), (1, 2)], [(-2, -2), (-1, -2)]]))
    assert dec.label[d.index((-2, -2))] == 0
    assert np.all(np.diff(dec.reps) > 0)
    assert dec.sizes.sum() == len(d)


@settings(max_examples=60, deadline=None)
@given(st.lists(out_and_back(), min_size=0, max_size=6))
def test_clusters_match_transitive_closure(loops):
    d = Domain.box(4)
    soup = LoopSoup.from_loops(d, loops)
    dec = decompose(soup)
    sets = [set(soup.loop_indices(k).tolist()) for k in range(len(soup))]
    loop_parts, vertex_parts = transitive_closure_clusters(sets, len(d))
    got_vertices = {frozenset(dec.members(c).tolist()) for c in range(len(dec))}
    got_loops = {frozenset(dec.loops_of(c).tolist()) for c in range(len(dec)) if not dec.trivial[c]}
    assert got_vertices == vertex_parts
    assert got_loops == loop_parts


@settings(max_examples=40, deadline=None)
@given(st.lists(out_and_back(), min_size=0, max_size=5), st.lists(st.integers(1, 3), max_size=2))
def test_outermost_matches_brute_force(loops, radii):
    d = Domain.box(5)
    loops = loops + [ring(r) for r in radii]
    dec = decompose(LoopSoup.from_loops(d, loops))
    np.testing.assert_array_equal(dec.outermost, brute_outermost(dec))
    for c in np.flatnonzero(~dec.trivial):
        assert dec.fill_of(c) == fill_reference(dec.vertices_of(c), d) & set(d.vertices())


def test_nested_rings():
    d = Domain.box(5)
    dec = decompose(LoopSoup.from_loops(d, [ring(4), ring(2)]))
    c4 = dec.label[d.index((-4, -4))]
    c2 = dec.label[d.index((-2, -2))]
    assert dec.outermost[c4] and not dec.outermost[c2]
    assert not dec.outermost[dec.label[d.index((0, 0))]]
    assert dec.outermost[dec.label[d.index((5, 5))]]
    assert dec.ext_boundary_of(c4) == set(map(tuple, ring(4)))


def test_ring_carpet():
    d = Domain.box(5)
    dec = decompose(LoopSoup.from_loops(d, [ring(3)]))
    cp = carpet(dec)
    dist = d.sup_dist_from((0, 0))
    np.testing.assert_array_equal(cp, dist >= 3)
    lit = carpet(dec, interior="literal")
    assert lit.all()  # a one-wide ring is all external boundary
    assert dec.carpet_mask is cp
    with pytest.raises(ValueError):
        carpet(dec, interior="other")


def test_thick_block_literal_interior():
    d = Domain.box(4)
    loop = [(-1, -1), (0, -1), (1, -1), (1, 0), (0, 0), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (0, 0), (-1, 0)]
    dec = decompose(LoopSoup.from_loops(d, [loop]))
    lit = carpet(dec, interior="literal")
    assert not lit[d.index((0, 0))] and lit.sum() == len(d) - 1


def test_frame_must_match():
    d = Domain.box(2)
    dec = decompose(LoopSoup.from_loops(d, []), outermost=False)
    assert dec.outermost is None
    with pytest.raises(ValueError):
        mark_outermost(dec, Domain.box(3))


def test_csv_export():
    d = Domain.box(1)
    dec = decompose(LoopSoup.from_loops(d, [[(0, 0), (1, 0)]]))
    carpet(dec)
    lines = dec.to_csv().splitlines()
    assert lines[0] == "x,y,cluster,outermost,carpet"
    assert len(lines) == 10


def test_sampled_soup_partition():
    soup = sample_soup(Domain.box(16), 0.5, stream(8))
    dec = decompose(soup)
    assert dec.sizes.sum() == len(soup.domain)
    for k in range(len(soup)):
        labels = dec.label[soup.loop_indices(k)]
        assert np.all(labels == dec.loop_cluster[k])


def test_shared_vertex_and_far_apart_loops():
    d = Domain.box(4)
    dec = decompose(LoopSoup.from_loops(d, [[(0, 0), (1, 0)], [(1, 0), (1, 1)]]))
    assert dec.loop_cluster[0] == dec.loop_cluster[1]
    far = decompose(LoopSoup.from_loops(d, [[(-4, -4), (-3, -4)], [(3, 3), (4, 3)]]))
    assert far.loop_cluster[0] != far.loop_cluster[1]
    assert far.outermost[far.loop_cluster].all()
