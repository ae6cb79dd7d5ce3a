import math

import numpy as np
import pytest
from scipy import stats

from rwls.green import (
    assemble_green,
    hit_before_exit,
    killed_generator,
    return_probability,
    sample_gff,
    stage_green_diagonal,
    GreenOperator,
)
from rwls.lattice import Domain
from rwls.rng import stream


def dense_kernel(d: Domain) -> np.ndarray:
    """One-step killed kernel built from coordinates, independent of ``edges``."""
    M = len(d)
    P = np.zeros((M, M))
    for i, (x, y) in enumerate(d.coords):
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if (x + dx, y + dy) in d:
                P[i, d.index((x + dx, y + dy))] = 0.25
    return P


def test_unit_box_centre():
    G = assemble_green(Domain.box(1))
    assert G((0, 0), (0, 0)) == pytest.approx(1.5, abs=1e-10)


def test_single_vertex():
    d = Domain([(0, 0)])
    assert assemble_green(d)((0, 0), (0, 0)) == pytest.approx(1.0)
    assert return_probability((0, 0), d) == 0.0


def test_matches_dense_inverse():
    d = Domain.box(3)
    P = dense_kernel(d)
    G = np.linalg.inv(np.eye(len(d)) - P)
    np.testing.assert_allclose(assemble_green(d).matrix, G, atol=1e-12)
    np.testing.assert_allclose(killed_generator(d).toarray(), np.eye(len(d)) - P)


def test_row_identity_and_symmetry():
    G = assemble_green(Domain.box(3))
    assert G.row_residual() < 1e-9
    np.testing.assert_allclose(G.matrix, G.matrix.T, atol=1e-14)
    assert np.all(G.matrix > 0)


def test_return_probability_unit_box():
    assert return_probability((0, 0), Domain.box(1)) == pytest.approx(1 / 3)


@pytest.mark.parametrize("u,v", [((0, 0), (1, 0)), ((2, -1), (0, 0)), ((-3, 3), (3, -3))])
def test_hit_before_exit_first_passage(u, v):
    # h(v) = 1, harmonic elsewhere, 0 outside
    d = Domain.box(3)
    P = dense_kernel(d)
    M = len(d)
    j = d.index(v)
    A = np.eye(M) - P
    A[j] = 0.0
    A[j, j] = 1.0
    b = np.zeros(M)
    b[j] = 1.0
    h = np.linalg.solve(A, b)
    assert hit_before_exit(u, v, d) == pytest.approx(h[d.index(u)], abs=1e-12)
    with pytest.raises(ValueError):
        hit_before_exit(v, v, d)


@pytest.mark.parametrize("d", [Domain.box(3), Domain.rect(0, 5, 0, 2), Domain([(0, 0), (1, 0), (1, 1), (2, 1), (3, 1)])])
def test_stage_diagonal_against_direct_solve(d):
    P = dense_kernel(d)
    g = stage_green_diagonal(d)
    for i in range(len(d)):
        sub = slice(i, None)
        Gi = np.linalg.inv(np.eye(len(d) - i) - P[sub, sub])
        assert g[i] == pytest.approx(Gi[0, 0], abs=1e-8)


def test_iterative_matches_direct():
    d = Domain.box(5)
    a = GreenOperator(d).column((1, 2))
    b = GreenOperator(d, iterative=True).column((1, 2))
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_caps():
    with pytest.raises(ValueError):
        GreenOperator(Domain.box(4), cap=10)
    with pytest.raises(ValueError):
        _ = GreenOperator(Domain.box(32)).matrix


def test_log_growth():
    g64 = assemble_green(Domain.box(64))((0, 0), (0, 0)) - 2 / math.pi * math.log(64)
    g32 = assemble_green(Domain.box(32))((0, 0), (0, 0)) - 2 / math.pi * math.log(32)
    assert abs(g64 - g32) < 0.03


@pytest.mark.parametrize("method", ["spectral", "cholesky"])
def test_gff_covariance(method):
    d = Domain.box(2)
    phi = sample_gff(d, stream(3, 1), size=40000, method=method)
    G = assemble_green(d).matrix
    C = np.cov(phi, rowvar=False)
    np.testing.assert_allclose(C, G, atol=0.06)
    p = stats.kstest(phi[:, d.index((0, 0))], stats.norm(scale=math.sqrt(G[12, 12])).cdf).pvalue
    assert p > 0.001


def test_gff_shapes_and_methods():
    d = Domain([(0, 0), (1, 0), (1, 1)])
    assert sample_gff(d, stream(0)).shape == (3,)
    assert sample_gff(d, stream(0), size=4).shape == (4, 3)
    with pytest.raises(ValueError):
        sample_gff(d, stream(0), method="spectral")
    with pytest.raises(ValueError):
        sample_gff(d, stream(0), method="fft")


def test_hitting_reversibility_and_unreachable():
    d = Domain.box(3)
    G = assemble_green(d)
    u, v = (0, 0), (2, -1)
    assert hit_before_exit(u, v, d) * G(v, v) == pytest.approx(hit_before_exit(v, u, d) * G(u, u))
    split = Domain([(0, 0), (1, 0), (5, 5)])
    assert hit_before_exit((0, 0), (5, 5), split) == 0.0


def test_gff_unit_box_moments():
    d = Domain.box(1)
    phi = sample_gff(d, stream(3, 2), size=20000)[:, d.index((0, 0))]
    assert abs(phi.var() - 1.5) < 4 * 1.5 * math.sqrt(2 / 20000)
    assert abs(phi.mean()) < 4 * math.sqrt(1.5 / 20000)


def test_spectral_and_cholesky_agree():
    d = Domain.box(4)
    i = d.index((0, 0))
    a = sample_gff(d, stream(3, 3), size=10000, method="spectral")[:, i]
    b = sample_gff(d, stream(3, 4), size=10000, method="cholesky")[:, i]
    assert stats.ks_2samp(a, b).pvalue > 0.01
