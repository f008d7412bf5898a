"""
Spectral filter functions for the Schrieffer-Wolff rotations.

w(t) = c_Δ (Δ/2) prod_n sinc^2(a_n t) is the characteristic function of a sum
of uniform variables, so its Fourier transform is a compactly supported bump
on |E| < Δ/2. Because w is band limited, a trapezoid rule with step <= 1/Δ is
alias free and integrates w(t) e^{iEt} up to the tail cut only.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from config import Config
from eigen_solver import EigenPairs
from errors import ConfigurationError, NumericalGuardError

logger = logging.getLogger(__name__)

TAIL_TOL = 1e-10
BAND_TOL = 1e-8
BAND_MARGIN = 1e-3
NORMALIZATION_TOL = 1e-6


def _a_coefficients(delta: float, n_max: int):
    """(a_n for n <= n_max, c1, Euler-Maclaurin tail of sum_{n>n_max} a_n)"""
    n = np.arange(2, n_max + 1, dtype=float)
    s = 1.0 / (n * np.log(n) ** 2)
    N = float(n_max)
    f = 1.0 / (N * np.log(N) ** 2)
    fp = -(np.log(N) + 2.0) / (N**2 * np.log(N) ** 3)
    tail = 1.0 / np.log(N) - f / 2.0 - fp / 12.0
    total = 1.0 + s.sum() + tail
    c1 = 1.0 / (2.0 * total)
    a1 = c1 * delta / 2.0
    return np.concatenate([[a1], a1 * s]), float(c1), float(a1 * tail)


def _sinc_product(t: np.ndarray, a: np.ndarray) -> np.ndarray:
    out = np.ones_like(t, dtype=float)
    for an in a:
        out *= np.sinc(an * t / np.pi) ** 2
    return out


def tail_bound(t: np.ndarray, delta: float) -> np.ndarray:
    """(e²Δ²/2) t exp(-(2/7) u / ln²u) with u = Δt/2, valid for t >= 2e^{1/√2}/Δ"""
    t = np.asarray(t, dtype=float)
    u = delta * t / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.e**2 * delta**2 / 2.0 * t * np.exp(-(2.0 / 7.0) * u / np.log(u) ** 2)


def _tail_cutoff(delta: float, tol: float) -> float:
    u = 10.0
    while True:
        t = 2.0 * u / delta
        if tail_bound(t, delta) * t <= tol:
            return t
        u *= 1.02


@dataclass
class FilterTables:
    """Sampled w(t), tabulated ŵ(E) and the generator transfer function g(ω)"""

    delta: float
    n_max: int
    c1: float
    c_delta: float
    a: np.ndarray
    step: float
    T_max: float
    w_samples: np.ndarray
    E_grid: np.ndarray
    w_hat_grid: np.ndarray
    a_tail: float
    _spline: CubicSpline = field(repr=False, default=None)

    def __post_init__(self):
        if self._spline is None:
            self._spline = CubicSpline(self.E_grid, self.w_hat_grid)

    @property
    def t_grid(self) -> np.ndarray:
        return self.step * np.arange(self.w_samples.size)

    def w(self, t) -> np.ndarray:
        t = np.abs(np.asarray(t, dtype=float))
        return self.c_delta * self.delta / 2.0 * _sinc_product(t, self.a)

    def w_hat_direct(self, E) -> np.ndarray:
        """ŵ(E) by trapezoid quadrature against cosines"""
        E = np.atleast_1d(np.asarray(E, dtype=float))
        t = self.t_grid
        out = np.empty(E.size)
        for start in range(0, E.size, 64):
            chunk = E[start : start + 64]
            cosines = np.cos(np.outer(chunk, t))
            out[start : start + 64] = self.step * (2.0 * cosines @ self.w_samples - self.w_samples[0])
        return out

    def w_hat(self, E) -> np.ndarray:
        """Interpolated ŵ(E); exactly 0 for |E| >= Δ/2"""
        E = np.abs(np.asarray(E, dtype=float))
        inside = E < self.delta / 2.0
        out = np.zeros(E.shape)
        out[inside] = self._spline(E[inside])
        return out

    def g(self, omega) -> np.ndarray:
        """(1 - ŵ(ω))/ω with g(0) = 0"""
        omega = np.asarray(omega, dtype=float)
        out = np.zeros(omega.shape)
        nonzero = np.abs(omega) > 1e-14
        out[nonzero] = (1.0 - self.w_hat(omega[nonzero])) / omega[nonzero]
        return out

    def W(self, step: float = 0.02, T: float = 400.0):
        """(t, W(t)) on [0, T/Δ] with W(t) = ∫_t^∞ w, W(0+) = 1/2"""
        t = np.arange(0.0, T / self.delta + step / self.delta, step / self.delta)
        w = self.w(t)
        W = 0.5 - integrate.cumulative_trapezoid(w, t, initial=0.0)
        return t, W

    def certify(self) -> Dict:
        """Normalization, band, constant and tail checks in one report"""
        fine = self.step / 2.0
        t_fine = np.arange(0.0, self.T_max + fine / 2, fine)
        normalization = 2.0 * integrate.simpson(self.w(t_fine), x=t_fine)

        grid = np.linspace(self.delta / 2.0 * (1.0 + BAND_MARGIN), 3.0 * self.delta, 400)
        band_max = float(np.max(np.abs(self.w_hat_direct(grid))))

        omega = np.linspace(-2.0 * self.delta, 2.0 * self.delta, 4001)
        g = self.g(omega)
        nonzero = omega != 0
        g_within = bool(np.all(np.abs(g[nonzero]) <= 1.0 / np.abs(omega[nonzero]) + 1e-9))

        t = self.t_grid
        tail_region = t >= 2.0 * np.exp(1.0 / np.sqrt(2.0)) / self.delta
        tail_ok = bool(np.all(self.w_samples[tail_region] <= tail_bound(t[tail_region], self.delta) + 1e-300))

        report = {
            "delta": self.delta,
            "n_max": self.n_max,
            "c1": self.c1,
            "c_delta": self.c_delta,
            "sum_a": float(self.a.sum()),
            "sum_a_with_tail": float(self.a.sum() + self.a_tail),
            "normalization": float(normalization),
            "normalization_ok": abs(normalization - 1.0) <= NORMALIZATION_TOL,
            "band_max": band_max,
            "band_ok": band_max <= BAND_TOL,
            "c1_ok": 0.159 <= self.c1 <= 0.163,
            "c_delta_ok": self.c1 / np.pi < self.c_delta < 1.0 / np.pi,
            "g_max": float(np.max(np.abs(g))),
            "g_odd": bool(np.allclose(g, -g[::-1], atol=1e-12)),
            "g_within_inverse": g_within,
            "tail_bound_ok": tail_ok,
            "T_max": self.T_max,
            "step": self.step,
        }
        return report


@lru_cache(maxsize=8)
def _build(delta: float, n_max: int, divisor: int, step_factor: float, tail_tol: float) -> FilterTables:
    a, c1, a_tail = _a_coefficients(delta, n_max)
    step = step_factor / delta
    # alias-free trapezoid needs 2π/step > Δ/2 + 3Δ (largest energy checked)
    if 2.0 * np.pi / step <= 3.5 * delta:
        raise NumericalGuardError(
            f"time step {step:.3g} too coarse to certify compact support; use step_factor < {2 * np.pi / 3.5:.3f}"
        )
    T_bound = _tail_cutoff(delta, tail_tol)
    t = step * np.arange(int(np.ceil(T_bound / step)) + 1)
    product = _sinc_product(t, a)

    # drop the stretch where the product has decayed far below the tolerance
    suffix_max = np.maximum.accumulate(product[::-1])[::-1]
    keep = int(np.searchsorted(-suffix_max, -tail_tol * 1e-6)) + 1
    keep = min(max(keep, 2), t.size)
    product = product[:keep]
    T_max = float(step * (keep - 1))

    integral = step * (2.0 * product.sum() - product[0])
    c_delta = 1.0 / (delta / 2.0 * integral)
    w_samples = c_delta * delta / 2.0 * product

    E_grid = np.arange(divisor // 2 + 1) * delta / divisor
    tables = FilterTables(
        delta, n_max, c1, c_delta, a, step, T_max, w_samples, E_grid, np.zeros(E_grid.size), a_tail
    )
    w_hat = tables.w_hat_direct(E_grid)
    w_hat[-1] = 0.0
    tables.w_hat_grid = w_hat
    tables._spline = CubicSpline(E_grid, w_hat)
    logger.info(
        f"🎛️  filter tables Δ={delta}: c1={c1:.6f}, c_Δ={c_delta:.6f}, T_max={T_max:.1f}, {keep} samples"
    )
    return tables


def filter_tables(delta: float, n_max: Optional[int] = None, grid_params: Optional[Dict] = None) -> FilterTables:
    """
    Build (or reuse) the filter tables for gap Δ.

    grid_params: divisor (energy spacing Δ/divisor), step_factor (time step
    step_factor/Δ), tail_tol (tail-bound cutoff).
    """
    if delta <= 0:
        raise ConfigurationError("filter gap Δ must be positive")
    n_max = int(n_max or Config.FILTER_N_MAX)
    if n_max < 100:
        raise ConfigurationError(f"n_max must be at least 100, got {n_max}")
    params = {"divisor": Config.FILTER_GRID_DIVISOR, "step_factor": 1.0, "tail_tol": TAIL_TOL}
    unknown = set(grid_params or {}) - set(params)
    if unknown:
        raise ConfigurationError(f"unknown grid parameter(s) {sorted(unknown)}")
    params.update(grid_params or {})
    if int(params["divisor"]) < 20:
        raise ConfigurationError("energy grid divisor must be at least 20")
    return _build(float(delta), n_max, int(params["divisor"]), float(params["step_factor"]), float(params["tail_tol"]))


# =============================================================================
# Superoperators in the H0 eigenbasis
# =============================================================================


def _frequencies(eig: EigenPairs) -> np.ndarray:
    E = np.asarray(eig.values, dtype=float)
    return E[:, None] - E[None, :]


def superproject(O: np.ndarray, eig: EigenPairs, tables: FilterTables, in_eigenbasis: bool = False) -> np.ndarray:
    """(ℙO)_mn = ŵ(E_m - E_n) O_mn, returned in the basis O was given in"""
    O_eig = O if in_eigenbasis else eig.to_eigenbasis(O)
    filtered = tables.w_hat(_frequencies(eig)) * O_eig
    return filtered if in_eigenbasis else eig.from_eigenbasis(filtered)


def time_domain_generator(
    V: np.ndarray, eig: EigenPairs, tables: FilterTables, step: float = 0.02, T: float = 400.0
) -> np.ndarray:
    """A_mn = -2 V_mn ∫_0^∞ W(t) sin(ω_mn t) dt by direct quadrature (cross-check only)"""
    t, W = tables.W(step, T)
    omega = _frequencies(eig)
    distinct, inverse = np.unique(np.round(omega, 12), return_inverse=True)
    integrals = np.empty(distinct.size)
    for start in range(0, distinct.size, 64):
        chunk = distinct[start : start + 64]
        integrals[start : start + 64] = integrate.simpson(W * np.sin(np.outer(chunk, t)), x=t, axis=1)
    factor = -2.0 * integrals[inverse].reshape(omega.shape)
    return eig.from_eigenbasis(factor * eig.to_eigenbasis(V))
