"""
Krylov propagation of exp(-iHt)|psi> for sparse Hermitian H.
"""

import logging
from typing import Iterable, Iterator, Optional, Tuple

import numpy as np
import scipy.linalg as la

from config import Config
from errors import ConfigurationError, ConvergenceError

logger = logging.getLogger(__name__)


def _lanczos_basis(matrix, state: np.ndarray, max_dim: int):
    n = state.size
    m_max = min(max_dim, n)
    V = np.zeros((n, m_max + 1), dtype=complex)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    V[:, 0] = state / np.linalg.norm(state)
    for j in range(m_max):
        w = matrix @ V[:, j]
        alpha[j] = np.vdot(V[:, j], w).real
        w = w - alpha[j] * V[:, j] - (beta[j - 1] * V[:, j - 1] if j else 0)
        # full reorthogonalization keeps the small projection faithful
        w -= V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] < 1e-13:
            return V[:, : j + 1], alpha[: j + 1], beta[: j + 1], True
        V[:, j + 1] = w / beta[j]
    return V[:, :m_max], alpha, beta, False


def evolve_krylov(matrix, state: np.ndarray, t: float, tol: float = 1e-10, max_dim: Optional[int] = None) -> np.ndarray:
    """exp(-i H t)|state> with adaptive substeps so each local error estimate <= tol"""
    if tol <= 0:
        raise ConfigurationError("Krylov tolerance must be positive")
    state = np.asarray(state, dtype=complex)
    norm0 = np.linalg.norm(state)
    if abs(norm0 - 1.0) > 1e-8:
        raise ConfigurationError(f"state must be normalized (norm {norm0:.3e})")
    if t == 0:
        return state.copy()

    max_dim = max_dim or Config.KRYLOV_MAX_DIM
    psi = state.copy()
    remaining = float(t)
    step = remaining
    while abs(remaining) > 0:
        V, alpha, beta, exact = _lanczos_basis(matrix, psi, max_dim)
        m = alpha.size
        T = np.diag(alpha) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
        step = np.sign(remaining) * min(abs(step) * 2.0, abs(remaining))
        while True:
            small = la.expm(-1j * step * T)[:, 0]
            error = 0.0 if exact else beta[m - 1] * abs(small[m - 1])
            if error <= tol:
                break
            step *= 0.5
            if abs(step) < abs(t) * 1e-12:
                raise ConvergenceError(
                    f"Krylov step collapsed below {abs(t) * 1e-12:.1e}; raise KRYLOV_MAX_DIM (now {max_dim})",
                    error,
                )
        psi = V @ small
        remaining -= step
        if abs(remaining) < abs(t) * 1e-14:
            remaining = 0.0
    return psi


def evolve_checkpoints(matrix, state: np.ndarray, times: Iterable[float], tol: float = 1e-10) -> Iterator[Tuple[float, np.ndarray]]:
    """Sequential evolution through ascending checkpoint times"""
    psi = np.asarray(state, dtype=complex)
    current = 0.0
    for t in times:
        if t < current - 1e-15:
            raise ConfigurationError("checkpoint times must be ascending")
        if t > current:
            psi = evolve_krylov(matrix, psi / np.linalg.norm(psi), t - current, tol)
        current = t
        yield t, psi
