"""
Lowest eigenpairs of Hermitian matrices.

Dense LAPACK below Config.DENSE_LIMIT, thick-restart Lanczos with full
reorthogonalization above it.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
import scipy.linalg as la
from scipy import sparse

from config import Config
from eigen_cache import EigenCache
from errors import ConfigurationError, ConvergenceError

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
CLUSTER_TOL = 1e-10


@dataclass
class EigenPairs:
    """Ascending eigenvalues with orthonormal eigenvectors as columns"""

    values: np.ndarray
    vectors: np.ndarray
    sector: Dict = field(default_factory=dict)
    residuals: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.values)

    def to_eigenbasis(self, O: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ O @ self.vectors

    def from_eigenbasis(self, O: np.ndarray) -> np.ndarray:
        return self.vectors @ O @ self.vectors.conj().T


def operator_norm_estimate(matrix) -> float:
    """Cheap upper bound: max absolute row sum"""
    if sparse.issparse(matrix):
        return float(abs(matrix).sum(axis=1).max()) if matrix.shape[0] else 0.0
    return float(np.abs(matrix).sum(axis=1).max()) if matrix.shape[0] else 0.0


def _residuals(matrix, values, vectors) -> np.ndarray:
    return np.linalg.norm(matrix @ vectors - vectors * values, axis=0)


def lowest_eigenpairs(
    matrix,
    k: int,
    mode: str = "auto",
    tol: float = 1e-10,
    sector: Optional[Dict] = None,
    cache: Optional[EigenCache] = None,
    seed: Optional[int] = None,
) -> EigenPairs:
    """k lowest eigenpairs; a degenerate cluster straddling k is returned whole"""
    dim = matrix.shape[0]
    if not 1 <= k <= dim:
        raise ConfigurationError(f"requested {k} eigenpairs of a {dim}-dimensional matrix")
    if mode == "auto":
        mode = "dense" if dim <= Config.DENSE_LIMIT else "iterative"
    if mode not in ("dense", "iterative"):
        raise ConfigurationError(f"unknown eigensolver mode '{mode}'")

    key = None
    if cache is not None:
        key = cache.matrix_key(matrix, k, mode)
        hit = cache.get(key)
        if hit is not None:
            return EigenPairs(hit[0], hit[1], dict(sector or {}))

    if mode == "dense":
        values, vectors = _dense_lowest(matrix, k)
    else:
        values, vectors = lanczos_lowest(matrix, k, tol=tol, seed=seed)

    norm = max(operator_norm_estimate(matrix), 1e-300)
    residuals = _residuals(matrix, values, vectors)
    if residuals.size and residuals.max() > RESIDUAL_TOL * norm:
        raise ConvergenceError(f"eigenpair residual above {RESIDUAL_TOL}·‖H‖", float(residuals.max()))

    if cache is not None:
        cache.set(key, values, vectors, {"mode": mode, "k": k, **(sector or {})})
    return EigenPairs(values, vectors, dict(sector or {}), residuals)


def _dense_lowest(matrix, k: int):
    dense = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)
    dim = dense.shape[0]
    upper = min(dim - 1, k + 7)
    values, vectors = la.eigh(dense, subset_by_index=[0, upper])
    take = k
    while take < len(values) and values[take] - values[take - 1] <= CLUSTER_TOL * max(1.0, abs(values[take - 1])):
        take += 1
    return values[:take], vectors[:, :take]


def lanczos_lowest(
    matrix,
    k: int,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
    max_basis: Optional[int] = None,
    seed: Optional[int] = None,
):
    """
    Thick-restart Lanczos with full reorthogonalization.

    Keeps the relation A Q = Q H + w e_m^T with H = Q^dag A Q built from explicit
    inner products, so restarting with Ritz vectors needs no special cases.
    """
    apply: Callable = matrix.dot if hasattr(matrix, "dot") else (lambda v: matrix @ v)
    n = matrix.shape[0]
    max_iter = max_iter or Config.LANCZOS_MAX_ITER
    max_basis = min(n, max_basis or max(4 * k + 40, 120))
    keep = min(max_basis - 2, k + max(10, k // 2)) if max_basis > k + 2 else k
    is_complex = np.iscomplexobj(matrix.data if sparse.issparse(matrix) else matrix)
    dtype = complex if is_complex else float
    rng = np.random.default_rng(Config.DEFAULT_SEED if seed is None else seed)

    basis = np.zeros((n, max_basis + 1), dtype=dtype)
    proj = np.zeros((max_basis + 1, max_basis + 1), dtype=dtype)
    v = rng.standard_normal(n).astype(dtype)
    basis[:, 0] = v / np.linalg.norm(v)
    m = 1
    matvecs = 0
    best = np.inf

    while matvecs < max_iter:
        j = m - 1
        w = apply(basis[:, j])
        matvecs += 1
        Q = basis[:, :m]
        h = Q.conj().T @ w
        w = w - Q @ h
        h2 = Q.conj().T @ w
        w = w - Q @ h2
        h = h + h2
        proj[:m, j] = h
        proj[j, :m] = h.conj()
        proj[j, j] = proj[j, j].real
        beta = np.linalg.norm(w)

        theta, Y = la.eigh(proj[:m, :m])
        wanted = min(k, m)
        res = beta * np.abs(Y[m - 1, :wanted])
        scale = max(1.0, np.abs(theta).max())
        best = min(best, res.max())
        if m >= k and (res.max() <= tol * scale or m == n):
            vectors = Q @ Y[:, :k]
            return theta[:k], vectors

        if beta <= 1e-14 * scale:
            # invariant subspace: continue from a fresh orthogonal direction
            w = rng.standard_normal(n).astype(dtype)
            w -= Q @ (Q.conj().T @ w)
            w -= Q @ (Q.conj().T @ w)
            beta = np.linalg.norm(w)

        if m == max_basis:
            l = min(keep, m - 1)
            basis[:, :l] = Q @ Y[:, :l]
            proj[:, :] = 0
            proj[:l, :l] = np.diag(theta[:l])
            basis[:, l] = w / beta
            m = l + 1
            logger.debug(f"🔁 Lanczos restart after {matvecs} matvecs, residual {res.max():.2e}")
        else:
            basis[:, m] = w / beta
            m += 1

    raise ConvergenceError(f"Lanczos did not converge within {max_iter} matrix-vector products", best)
