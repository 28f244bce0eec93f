"""Distance-based hypothesis tests built on the sketched ridge fit.

The simple-null test of ``f = 0`` uses the statistic ``T = ||Delta y||^2 / n``
whose conditional null moments are trace functionals of the smoothing
operator:

    mean  = sigma^2 tr(Delta^2) / n,
    sd    = sigma^2 sqrt(2 tr(Delta^4)) / n,

and the standardized statistic is compared two-sided against normal
quantiles.  Testing ``f = f0`` for a known f0 reduces to the simple null on
the residuals ``y - f0(x)``.  The composite linear (or order-q polynomial)
test first projects out the parametric fit with the hat matrix H and adjusts
the moments accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ComputationError
from .kernels import KernelMatrix, KernelSpec, kernel_matrix, theoretical_eigenvalues
from .krr import DeltaOperator
from .sketch import SketchMatrix, draw_sketch
from .rng import substream, DESIGN, SKETCH

__all__ = [
    "TestReport",
    "distance_test",
    "composite_linear_test",
    "separation_rate",
    "polynomial_design",
    "null_moment_check",
]


@dataclass
class TestReport:
    statistic: float
    mu_null: float
    sigma_null: float
    z: float
    p_value: float
    reject: bool
    alpha: float
    kind: str                 # "simple" | "composite_linear"
    poly_order: int | None
    lam: float
    s: int


def _finalize(T: float, mu: float, sigma: float, alpha: float, kind: str,
              poly_order: int | None, lam: float, s: int) -> TestReport:
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if sigma <= 0.0 or not math.isfinite(sigma):
        raise ComputationError(
            f"degenerate test: null standard deviation {sigma:.3e} "
            "(smoothing operator has vanished; decrease lam)")
    z = (T - mu) / sigma
    p = 2.0 * float(norm.sf(abs(z)))
    reject = abs(z) >= float(norm.ppf(1.0 - alpha / 2.0))
    return TestReport(statistic=T, mu_null=mu, sigma_null=sigma, z=z,
                      p_value=p, reject=reject, alpha=alpha, kind=kind,
                      poly_order=poly_order, lam=lam, s=s)


def distance_test(K: KernelMatrix, S: SketchMatrix | None, lam: float,
                  y: np.ndarray, alpha: float = 0.05,
                  noise_variance: float = 1.0) -> TestReport:
    """Two-sided test of ``f = 0`` from the sketched fit's squared empirical norm."""
    op = DeltaOperator(K, S, lam)
    return distance_test_from_operator(op, y, alpha, noise_variance)


def distance_test_from_operator(op: DeltaOperator, y: np.ndarray,
                                alpha: float = 0.05,
                                noise_variance: float = 1.0) -> TestReport:
    y = np.asarray(y, dtype=float)
    n = op.n
    dy = op.apply(y)
    T = float(dy @ dy) / n
    mu = noise_variance * op.trace_power(2) / n
    sigma = noise_variance * math.sqrt(2.0 * op.trace_power(4)) / n
    s = op._factored[0].shape[0] if op._factored is not None else n
    return _finalize(T, mu, sigma, alpha, "simple", None, op.lam, s)


def composite_linear_test(K: KernelMatrix, S: SketchMatrix | None, lam: float,
                          X: np.ndarray, y: np.ndarray, alpha: float = 0.05,
                          noise_variance: float = 1.0,
                          poly_order: int = 1) -> TestReport:
    """Test that f is linear (or polynomial) in the columns of the design X.

    ``X`` is the n x (d+1) parametric design including the intercept column.
    The statistic is the simple-null statistic applied to the parametric
    residuals, with moments corrected by the hat-matrix projection.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n = K.n
    if X.ndim != 2 or X.shape[0] != n:
        raise ValueError(f"X must be n x (d+1) with n={n}, got {X.shape}")
    if X.shape[1] >= n:
        raise ValueError("parametric design must have fewer columns than rows")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValueError("parametric design is rank deficient")
    Q, _ = np.linalg.qr(X)
    resid = y - Q @ (Q.T @ y)
    op = DeltaOperator(K, S, lam)
    dr = op.apply(resid)
    T = float(dr @ dr) / n
    tr2 = op.trace_power(2) - op.trace_power_projected(Q, 2)
    tr4 = op.trace_power(4) - op.trace_power_projected(Q, 4)
    mu = noise_variance * tr2 / n
    sigma = noise_variance * math.sqrt(max(2.0 * tr4, 0.0)) / n
    s = op._factored[0].shape[0] if op._factored is not None else n
    return _finalize(T, mu, sigma, alpha, "composite_linear", poly_order, lam, s)


def polynomial_design(xs: np.ndarray, q: int) -> np.ndarray:
    """Design with intercept and per-coordinate monomials up to order q, no interactions."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[0] == 1:
        xs = xs.T
    n, d = xs.shape
    cols = [np.ones(n)]
    for j in range(d):
        for k in range(1, q + 1):
            cols.append(xs[:, j] ** k)
    return np.column_stack(cols)


def separation_rate(lam: float, sigma_null: float) -> float:
    """Detectable signal scale sqrt(lam + sigma) at a given operating point."""
    if lam < 0 or sigma_null < 0:
        raise ValueError("inputs must be nonnegative")
    return math.sqrt(lam + sigma_null)


@dataclass
class MomentOrderReport:
    ns: list
    median_mu_ratio: list      # median of (tr(Delta^2)/n) / (s_lam / n) per n
    median_var_ratio: list     # median of (2 tr(Delta^4)/n^2) / (s_lam / n^2) per n
    drifts_mu: list            # adjacent-n ratio of medians
    drifts_var: list
    s_lambdas: list
    regime_flags: list         # per n: problems detected, empty when clean


def null_moment_check(spec: KernelSpec, ns, lams, ss, reps: int,
                      seed: int, kind: str = "gaussian") -> MomentOrderReport:
    """Monte Carlo profile of the null moments against their s_lam/n orders.

    For each (n, lam, s) triple, draws ``reps`` designs and sketches and
    records the ratios of the null mean to ``s_lam / n`` and the null
    variance to ``s_lam / n^2``; the drift of the medians across consecutive
    n values is the constant-free check that the orders are right.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    ns = [int(v) for v in ns]
    lams = [float(v) for v in lams]
    ss = [int(v) for v in ss]
    if not (len(ns) == len(lams) == len(ss)):
        raise ValueError("ns, lams, ss must have equal length")
    med_mu, med_var, s_lams, flags = [], [], [], []
    for n, lam, s in zip(ns, lams, ss):
        spectrum = theoretical_eigenvalues(spec, max(4 * n, 64))
        s_lam = int(np.count_nonzero(spectrum.mu > lam))
        mu1 = float(spectrum.mu[0])
        problems = []
        # scale-equivariant regime window, measured against the leading
        # model eigenvalue
        if not (mu1 / n < lam < mu1):
            problems.append("lam outside (mu1/n, mu1)")
        if s_lam == 0:
            problems.append("s_lam = 0")
        if s_lam > 0 and s < 4 * s_lam:
            problems.append("s < 4 s_lam")
        mu_ratios, var_ratios = [], []
        if s_lam > 0:
            for rep in range(reps):
                rng = substream(seed, n, rep, DESIGN)
                if spec.family == "periodic_sobolev":
                    xs = rng.uniform(0.0, 1.0, n)
                else:
                    xs = rng.standard_normal((n, spec.dim))
                K = kernel_matrix(spec, xs)
                S = draw_sketch(kind, s, n, (seed, n, rep, SKETCH))
                op = DeltaOperator(K, S, lam)
                mu_ratios.append((op.trace_power(2) / n) / (s_lam / n))
                var_ratios.append((2.0 * op.trace_power(4) / n ** 2) / (s_lam / n ** 2))
        med_mu.append(float(np.median(mu_ratios)) if mu_ratios else math.nan)
        med_var.append(float(np.median(var_ratios)) if var_ratios else math.nan)
        s_lams.append(s_lam)
        flags.append(problems)
    drifts_mu = [med_mu[i + 1] / med_mu[i] for i in range(len(ns) - 1)]
    drifts_var = [med_var[i + 1] / med_var[i] for i in range(len(ns) - 1)]
    return MomentOrderReport(ns=ns, median_mu_ratio=med_mu, median_var_ratio=med_var,
                             drifts_mu=drifts_mu, drifts_var=drifts_var,
                             s_lambdas=s_lams, regime_flags=flags)
