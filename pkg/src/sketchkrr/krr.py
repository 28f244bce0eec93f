"""Full and sketched kernel ridge regression, the smoothing operator, and GCV tuning.

The sketched fit solves the s-dimensional problem

    beta_hat = (1/n) (S K^2 S' + lam S K S')^{-1} S K y,

and its fitted values are ``Delta @ y`` with the smoothing operator

    Delta = K S' (S K^2 S' + lam S K S')^{-1} S K,

a symmetric PSD matrix with operator norm at most 1.  ``DeltaOperator`` holds
the factored form (G = S K plus a Cholesky factor of the s x s system), so
traces of powers of Delta, quadratic forms, and fitted values all cost
O(s^3 + n s) after the one-time O(n^2 s) of forming G; the dense n x n matrix
is only materialized on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ComputationError
from .kernels import KernelMatrix, KernelSpec, raw_cross_kernel
from .sketch import SketchMatrix
from .spectral import rate_table

__all__ = [
    "DeltaOperator",
    "SketchedKRRFit",
    "GCVReport",
    "fit_full",
    "fit_sketched",
    "delta_matrix",
    "predict",
    "gcv",
    "default_lambda_grid",
]

_JITTER = 1e-12


class DeltaOperator:
    """Factored form of the sketched smoothing operator at one regularization level.

    With ``sketch=None`` this is the full-data smoother ``K (K + lam I)^{-1}``,
    realized through an eigendecomposition of K.
    """

    def __init__(self, K: KernelMatrix, sketch: SketchMatrix | None, lam: float):
        if lam <= 0:
            raise ValueError(f"lam must be positive, got {lam}")
        self.lam = lam
        self.n = K.n
        self._K = np.asarray(K.values, dtype=float)
        if sketch is None:
            w, v = scipy.linalg.eigh(self._K)
            w = np.clip(w[::-1], 0.0, None)
            self._full_vectors = v[:, ::-1]
            self._delta_eigs = w / (w + lam)
            self._factored = None
        else:
            if sketch.n != K.n:
                raise ValueError(f"sketch has {sketch.n} columns, kernel matrix is {K.n}x{K.n}")
            G = sketch.values @ self._K
            A = G @ G.T
            B = G @ sketch.values.T
            B = 0.5 * (B + B.T)
            M = A + lam * B
            factor = self._factorize(M)
            self._factored = (G, A, factor)
            self._full_vectors = None
            self._delta_eigs = None
        self._P = None
        self._P2 = None
        self._dense = None

    @staticmethod
    def _factorize(M: np.ndarray):
        try:
            return scipy.linalg.cho_factor(M, lower=True)
        except scipy.linalg.LinAlgError:
            pass
        jitter = _JITTER * np.trace(M)
        Mj = M + jitter * np.eye(M.shape[0])
        try:
            return scipy.linalg.cho_factor(Mj, lower=True)
        except scipy.linalg.LinAlgError as exc:
            cond = np.linalg.cond(M)
            raise ComputationError(
                f"sketched system singular even after jitter "
                f"(size {M.shape[0]}, condition number {cond:.3e})") from exc

    # -- internal solved blocks -------------------------------------------

    def _solved(self) -> np.ndarray:
        """M^{-1} A, whose spectrum equals the nonzero spectrum of Delta."""
        if self._P is None:
            G, A, factor = self._factored
            self._P = scipy.linalg.cho_solve(factor, A)
        return self._P

    def _solved_sq(self) -> np.ndarray:
        if self._P2 is None:
            P = self._solved()
            self._P2 = P @ P
        return self._P2

    # -- public surface ----------------------------------------------------

    def apply(self, y: np.ndarray) -> np.ndarray:
        """Delta @ y."""
        y = np.asarray(y, dtype=float)
        if self._factored is None:
            coef = self._full_vectors.T @ y
            return self._full_vectors @ (self._delta_eigs * coef)
        G, _, factor = self._factored
        return G.T @ scipy.linalg.cho_solve(factor, G @ y)

    def trace_power(self, power: int) -> float:
        """tr(Delta^power) for power in {1, 2, 4}."""
        if self._factored is None:
            return float(np.sum(self._delta_eigs ** power))
        if power == 1:
            return float(np.trace(self._solved()))
        if power == 2:
            P = self._solved()
            return float(np.sum(P * P.T))
        if power == 4:
            P2 = self._solved_sq()
            return float(np.sum(P2 * P2.T))
        raise ValueError(f"unsupported power {power}")

    def trace_power_projected(self, Q: np.ndarray, power: int) -> float:
        """tr(Delta^power H) for H = Q Q' with orthonormal Q, power in {2, 4}."""
        DQ = self.apply_columns(Q)
        if power == 2:
            return float(np.sum(DQ * DQ))
        if power == 4:
            D2Q = self.apply_columns(DQ)
            return float(np.sum(D2Q * D2Q))
        raise ValueError(f"unsupported power {power}")

    def apply_columns(self, V: np.ndarray) -> np.ndarray:
        V = np.asarray(V, dtype=float)
        if self._factored is None:
            coef = self._full_vectors.T @ V
            return self._full_vectors @ (self._delta_eigs[:, None] * coef)
        G, _, factor = self._factored
        return G.T @ scipy.linalg.cho_solve(factor, G @ V)

    def spectrum(self) -> np.ndarray:
        """Nonzero eigenvalues of Delta, non-increasing, each in [0, 1]."""
        if self._factored is None:
            return self._delta_eigs.copy()
        G, A, factor = self._factored
        L = factor[0]
        W = scipy.linalg.solve_triangular(L, A, lower=True)
        W = scipy.linalg.solve_triangular(L, W.T, lower=True)
        vals = np.linalg.eigvalsh(0.5 * (W + W.T))[::-1]
        return vals

    def materialize(self) -> np.ndarray:
        """Dense symmetric n x n Delta (cached)."""
        if self._dense is None:
            if self._factored is None:
                V = self._full_vectors
                self._dense = (V * self._delta_eigs) @ V.T
            else:
                G, _, factor = self._factored
                self._dense = G.T @ scipy.linalg.cho_solve(factor, G)
            self._dense = 0.5 * (self._dense + self._dense.T)
        return self._dense


@dataclass
class SketchedKRRFit:
    """A ridge fit: coefficients, fitted values, and the smoothing operator."""

    beta_hat: np.ndarray | None    # s-vector (None for the full fit)
    omega: np.ndarray              # n-vector of kernel expansion weights
    lam: float
    fitted: np.ndarray             # Delta @ y
    op: DeltaOperator
    sketch: SketchMatrix | None

    @property
    def delta(self) -> np.ndarray:
        return self.op.materialize()


def fit_full(K: KernelMatrix, y: np.ndarray, lam: float) -> SketchedKRRFit:
    """Classical kernel ridge fit: omega = (1/n) (K + lam I)^{-1} y."""
    y = np.asarray(y, dtype=float)
    if y.shape != (K.n,):
        raise ValueError(f"y has shape {y.shape}, expected ({K.n},)")
    op = DeltaOperator(K, None, lam)
    try:
        factor = scipy.linalg.cho_factor(K.values + lam * np.eye(K.n), lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ComputationError(f"(K + lam I) solve failed at lam={lam}") from exc
    omega = scipy.linalg.cho_solve(factor, y) / K.n
    fitted = op.apply(y)
    return SketchedKRRFit(beta_hat=None, omega=omega, lam=lam, fitted=fitted,
                          op=op, sketch=None)


def fit_sketched(K: KernelMatrix, y: np.ndarray, lam: float,
                 S: SketchMatrix) -> SketchedKRRFit:
    """Sketched ridge fit through the s-dimensional system."""
    y = np.asarray(y, dtype=float)
    if y.shape != (K.n,):
        raise ValueError(f"y has shape {y.shape}, expected ({K.n},)")
    op = DeltaOperator(K, S, lam)
    G, _, factor = op._factored
    beta = scipy.linalg.cho_solve(factor, G @ y) / K.n
    omega = S.values.T @ beta
    fitted = op.apply(y)
    return SketchedKRRFit(beta_hat=beta, omega=omega, lam=lam, fitted=fitted,
                          op=op, sketch=S)


def delta_matrix(K: KernelMatrix, S: SketchMatrix | None, lam: float) -> np.ndarray:
    """Dense smoothing operator; prefer DeltaOperator for traces and products."""
    return DeltaOperator(K, S, lam).materialize()


def predict(fit: SketchedKRRFit, spec: KernelSpec, xs_train: np.ndarray,
            xs_new: np.ndarray) -> np.ndarray:
    """Out-of-sample evaluation sum_i omega_i K(x_new, x_i) with raw kernel values."""
    R = raw_cross_kernel(spec, xs_new, xs_train)
    return R @ fit.omega


@dataclass
class GCVReport:
    lambda_grid: np.ndarray
    scores: np.ndarray
    best_lambda: float
    best_index: int


def default_lambda_grid(spec: KernelSpec, n: int, size: int = 30) -> np.ndarray:
    """Log-spaced grid bracketing both rate-table optima: [lam*/100, 100*lam_dag]."""
    table = rate_table(spec, n)
    return np.geomspace(table.lambda_star / 100.0, 100.0 * table.lambda_dag, size)


def gcv(K: KernelMatrix, y: np.ndarray, S: SketchMatrix | None,
        lambda_grid: np.ndarray) -> GCVReport:
    """Generalized cross-validation over a grid, with the sketched smoother.

    Score at each lam:  V(lam) = (1/n) ||(I - Delta) y||^2 / ((1/n) tr(I - Delta))^2.
    Ties break toward the smallest lam (the grid is sorted ascending).
    """
    y = np.asarray(y, dtype=float)
    grid = np.sort(np.asarray(lambda_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    if grid[0] <= 0:
        raise ValueError("lambda grid entries must be positive")
    n = K.n
    if S is None:
        w, v = scipy.linalg.eigh(K.values)
        w = np.clip(w[::-1], 0.0, None)
        coef = v[:, ::-1].T @ y
        scores = np.empty_like(grid)
        for i, lam in enumerate(grid):
            d = w / (w + lam)
            rss = float(np.sum(((1.0 - d) * coef) ** 2))
            denom = 1.0 - d.sum() / n
            if denom <= 0:
                raise ComputationError(f"tr(I - Delta) <= 0 at lam={lam}")
            scores[i] = (rss / n) / denom ** 2
    else:
        G = S.values @ K.values
        A = G @ G.T
        B = G @ S.values.T
        B = 0.5 * (B + B.T)
        Gy = G @ y
        scores = np.empty_like(grid)
        for i, lam in enumerate(grid):
            factor = DeltaOperator._factorize(A + lam * B)
            dy = G.T @ scipy.linalg.cho_solve(factor, Gy)
            tr = float(np.trace(scipy.linalg.cho_solve(factor, A)))
            denom = 1.0 - tr / n
            if denom <= 0:
                raise ComputationError(f"tr(I - Delta) <= 0 at lam={lam}")
            resid = y - dy
            scores[i] = (float(resid @ resid) / n) / denom ** 2
    best = int(np.argmin(scores))
    return GCVReport(lambda_grid=grid, scores=scores,
                     best_lambda=float(grid[best]), best_index=best)
