"""Green's function of simple random walk killed on leaving a finite domain.

``G(u, v)`` is the expected number of visits to ``v`` (time 0 included) of a
walk started at ``u`` before it leaves the domain, i.e. ``G = (I - P)^{-1}``
with ``P`` the killed one-step kernel.  The same operator is the covariance of
the zero-boundary discrete Gaussian free field.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dstn
from scipy.linalg import cholesky_banded

from rwls.lattice import Domain

DIRECT_CAP = 40_000
DENSE_CAP = 4_096


def killed_generator(domain: Domain) -> sp.csc_matrix:
    """Sparse ``I - P`` with weight 1/4 on every edge inside the domain."""
    u, w = domain.edges()
    M = len(domain)
    rows = np.concatenate([u, w])
    cols = np.concatenate([w, u])
    P = sp.csr_matrix((np.full(len(rows), 0.25), (rows, cols)), shape=(M, M))
    return (sp.identity(M, format="csr") - P).tocsc()


class GreenOperator:
    """Exact Green's function on a domain.

    Columns are solved on demand from one sparse LU factorization (or by
    conjugate gradients when ``iterative``); the full matrix is materialised
    only for small domains.
    """

    def __init__(self, domain: Domain, *, cap: int = DIRECT_CAP, iterative: bool = False):
        self.domain = domain
        self.A = killed_generator(domain)
        self.iterative = iterative
        self._lu = None
        self._cols: dict[int, np.ndarray] = {}
        self._dense = None
        self._chol = None
        if not iterative:
            if len(domain) > cap:
                raise ValueError(
                    f"domain has {len(domain)} vertices, above the direct-solve cap {cap}; "
                    "pass iterative=True"
                )
            self._lu = spla.splu(self.A)

    def __len__(self) -> int:
        return len(self.domain)

    def column(self, v) -> np.ndarray:
        """``G(., v)`` as an array in raster order."""
        j = v if isinstance(v, (int, np.integer)) else self.domain.index(v)
        col = self._cols.get(j)
        if col is None:
            if self._dense is not None:
                col = self._dense[:, j]
            else:
                e = np.zeros(len(self.domain))
                e[j] = 1.0
                if self._lu is not None:
                    col = self._lu.solve(e)
                else:
                    col, info = spla.cg(self.A, e, rtol=1e-13, atol=0.0, maxiter=50 * len(e))
                    if info != 0 or np.linalg.norm(self.A @ col - e) > 1e-10:
                        raise RuntimeError("conjugate-gradient solve did not converge")
            self._cols[j] = col
        return col

    def __call__(self, u, v) -> float:
        i = u if isinstance(u, (int, np.integer)) else self.domain.index(u)
        return float(self.column(v)[i])

    @property
    def matrix(self) -> np.ndarray:
        if self._dense is None:
            M = len(self.domain)
            if M > DENSE_CAP:
                raise ValueError(f"dense Green matrix refused for {M} > {DENSE_CAP} vertices")
            if self._lu is not None:
                G = self._lu.solve(np.eye(M))
            else:
                G = np.column_stack([self.column(j) for j in range(M)])
            self._dense = 0.5 * (G + G.T)
        return self._dense

    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    def row_residual(self) -> float:
        """Max residual of ``(I - P) G = I`` over all entries."""
        G = self.matrix
        return float(np.abs(self.A @ G - np.eye(len(G))).max())

    def cholesky(self) -> np.ndarray:
        if self._chol is None:
            try:
                self._chol = np.linalg.cholesky(self.matrix)
            except np.linalg.LinAlgError as exc:
                cond = np.linalg.cond(self.matrix)
                raise np.linalg.LinAlgError(
                    f"Green matrix not numerically positive definite (condition number {cond:.3e})"
                ) from exc
        return self._chol


_GREEN_CACHE: dict = {}


def assemble_green(domain: Domain, *, cap: int = DIRECT_CAP, iterative: bool = False) -> GreenOperator:
    key = (domain.key, iterative)
    op = _GREEN_CACHE.get(key)
    if op is None:
        op = GreenOperator(domain, cap=cap, iterative=iterative)
        if len(_GREEN_CACHE) > 16:
            _GREEN_CACHE.clear()
        _GREEN_CACHE[key] = op
    return op


def return_probability(z, domain: Domain) -> float:
    """Probability that the walk from ``z`` comes back to ``z`` before leaving."""
    if len(domain) == 1:
        return 0.0
    return 1.0 - 1.0 / assemble_green(domain)(z, z)


def hit_before_exit(u, v, domain: Domain) -> float:
    """Probability that the walk from ``u`` visits ``v`` before leaving the domain."""
    if tuple(u) == tuple(v):
        raise ValueError("u and v must differ")
    G = assemble_green(domain)
    return G(u, v) / G(v, v)


def stage_green_diagonal(domain: Domain) -> np.ndarray:
    """``G_{D_i}(z_i, z_i)`` for every raster stage ``i``.

    ``D_i`` is the domain with its first ``i`` raster vertices removed.  With
    the generator's rows and columns reversed, the ``k``-th Cholesky pivot is
    the Schur complement of ``z_i`` after eliminating all later vertices, which
    is exactly ``1 / G_{D_i}(z_i, z_i)``.
    """
    A = killed_generator(domain)
    M = A.shape[0]
    Ar = A[::-1, ::-1].tocsr()
    coo = Ar.tocoo()
    bw = int(np.abs(coo.row - coo.col).max()) if coo.nnz else 0
    ab = np.zeros((bw + 1, M))
    for k in range(bw + 1):
        ab[bw - k, k:] = Ar.diagonal(k)
    U = cholesky_banded(ab, lower=False)
    pivots = U[bw] ** 2
    return 1.0 / pivots[::-1]


# ---------------------------------------------------------------- GFF


def _spectral_scales(shape) -> np.ndarray:
    H, W = shape
    mu = 0.5 * (
        np.cos(np.pi * np.arange(1, H + 1) / (H + 1))[:, None]
        + np.cos(np.pi * np.arange(1, W + 1) / (W + 1))[None, :]
    )
    return np.sqrt(1.0 / (1.0 - mu))


def sample_gff(domain: Domain, rng: np.random.Generator, size: int | None = None, method: str = "auto"):
    """Zero-boundary discrete GFF on ``domain``, covariance ``G``.

    Rectangles use exact spectral synthesis in the product-sine eigenbasis of
    the killed kernel; other domains (or ``method="cholesky"``) use a Cholesky
    factor of the Green matrix.  Returns shape ``(M,)`` or ``(size, M)``.
    """
    if method == "auto":
        method = "spectral" if domain.is_rect else "cholesky"
    n = 1 if size is None else size
    if method == "spectral":
        if not domain.is_rect:
            raise ValueError("spectral sampling needs a rectangular domain")
        scale = _spectral_scales(domain.shape)
        xi = rng.standard_normal((n,) + domain.shape)
        fields = dstn(xi * scale, type=1, norm="ortho", axes=(1, 2))
        out = fields.reshape(n, -1)  # row-major grid == raster order
    elif method == "cholesky":
        L = assemble_green(domain).cholesky()
        out = rng.standard_normal((n, len(domain))) @ L.T
    else:
        raise ValueError(f"unknown GFF method {method!r}")
    return out[0] if size is None else out
