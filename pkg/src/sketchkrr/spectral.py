"""Eigen-analysis of the scaled kernel matrix and regularization-indexed quantities.

Everything here is indexed by the regularization level ``lam``: the effective
dimensions (counts of empirical/model eigenvalues above ``lam``), the
variance-to-bias ratio, the tail-sum diagnostic, the empirical local
Rademacher fixed point, and the rate table giving the estimation- and
testing-optimal ``(lam, s)`` schedules for both decay families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ComputationError
from .kernels import (
    EXPONENTIAL,
    POLYNOMIAL,
    KernelMatrix,
    KernelSpec,
    SpectrumDescriptor,
    kernel_matrix,
    theoretical_eigenvalues,
)
from .rng import substream

__all__ = [
    "EigenSystem",
    "LambdaSplit",
    "RateTable",
    "eigendecompose",
    "lambda_split",
    "tail_sum_check",
    "lrc_fixed_point",
    "rate_table",
    "rate_lambda",
    "eigen_concentration_check",
]


@dataclass
class EigenSystem:
    """Eigendecomposition of a scaled kernel matrix, eigenvalues non-increasing.

    Negative eigenvalues produced by roundoff are clamped to zero; the total
    clamped magnitude is recorded.
    """

    vectors: np.ndarray      # n x n, column i pairs with eigenvalues[i]
    eigenvalues: np.ndarray  # non-increasing, >= 0
    n: int
    clamped: float


@dataclass
class LambdaSplit:
    """Effective dimensions at a regularization level.

    ``empirical_dim`` counts empirical eigenvalues above ``lam``;
    ``model_dim`` counts model eigenvalues above ``lam`` (falls back to the
    empirical count when no model spectrum is supplied, flagged by
    ``model_based``).  ``kappa`` is the variance-to-bias ratio
    ``model_dim / (n * lam)``.
    """

    empirical_dim: int
    model_dim: int
    kappa: float
    lam: float
    n: int
    model_based: bool


def eigendecompose(K: KernelMatrix) -> EigenSystem:
    """Full symmetric eigendecomposition, sorted by decreasing eigenvalue."""
    a = np.asarray(K.values, dtype=float)
    try:
        w, v = scipy.linalg.eigh(a)
    except scipy.linalg.LinAlgError as exc:
        diag = np.abs(np.diag(a))
        raise ComputationError(
            f"eigensolver failed on {K.n}x{K.n} matrix "
            f"(diag range [{diag.min():.3e}, {diag.max():.3e}]): {exc}"
        ) from exc
    w = w[::-1].copy()
    v = v[:, ::-1].copy()
    clamped = float(-w[w < 0.0].sum())
    np.clip(w, 0.0, None, out=w)
    return EigenSystem(vectors=v, eigenvalues=w, n=K.n, clamped=clamped)


def lambda_split(eig: EigenSystem, lam: float,
                 spectrum: SpectrumDescriptor | None = None) -> LambdaSplit:
    """Count eigenvalues above ``lam`` on the empirical and model spectra."""
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    s_hat = int(np.count_nonzero(eig.eigenvalues > lam))
    if spectrum is not None:
        mu = spectrum.mu
        if mu[-1] > lam:
            raise ValueError(
                "model spectrum too short: its smallest entry still exceeds lam; "
                "generate a longer descriptor")
        s_model = int(np.count_nonzero(mu > lam))
        model_based = True
    else:
        s_model = s_hat
        model_based = False
    kappa = s_model / (eig.n * lam)
    return LambdaSplit(empirical_dim=s_hat, model_dim=s_model, kappa=kappa,
                       lam=lam, n=eig.n, model_based=model_based)


@dataclass
class TailSumReport:
    tail: float
    bound: float
    passed: bool | None   # None when the regime is invalid (model_dim == 0)
    regime_valid: bool


def tail_sum_check(eig: EigenSystem, split: LambdaSplit,
                   spectrum: SpectrumDescriptor, C: float = 10.0) -> TailSumReport:
    """Compare the empirical eigenvalue tail sum against ``C * s_lam * mu_{s_lam}``.

    The comparison is meaningful when ``lam`` exceeds mu_1 / n (the
    scale-equivariant form of the lam > 1/n regime, measured against the
    leading model eigenvalue) and at least one model eigenvalue sits above
    ``lam``; outside that regime the report is flagged invalid and ``passed``
    is None.
    """
    tail = float(eig.eigenvalues[split.empirical_dim:].sum())
    mu1 = float(spectrum.mu[0])
    regime_valid = split.lam > mu1 / eig.n and split.model_dim >= 1
    if split.model_dim == 0:
        return TailSumReport(tail=tail, bound=0.0, passed=None, regime_valid=False)
    bound = C * split.model_dim * float(spectrum.mu[split.model_dim - 1])
    return TailSumReport(tail=tail, bound=bound, passed=bool(tail <= bound),
                         regime_valid=regime_valid)


@dataclass
class FixedPointResult:
    r_hat: float
    iterations: int
    residual: float


def lrc_fixed_point(eig: EigenSystem, split: LambdaSplit) -> FixedPointResult:
    """Unique positive fixed point of the empirical local Rademacher surrogate.

    Solves ``r = sqrt((1/n) * sum_i kappa * min(r / kappa, mu_hat_i))`` by
    bisection to relative tolerance 1e-10.  The map is sub-root, so the
    positive fixed point is unique.
    """
    kappa = split.kappa
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    mu = eig.eigenvalues
    if mu[0] <= 0.0:
        raise ComputationError("all empirical eigenvalues are zero")
    n = eig.n

    def psi(r: float) -> float:
        return math.sqrt(np.minimum(r, kappa * mu).sum() / n)

    lo, hi = 1e-15, kappa * mu[0] + 1.0
    iterations = 0
    while hi - lo > 1e-10 * max(lo, 1e-15):
        iterations += 1
        mid = 0.5 * (lo + hi)
        if psi(mid) > mid:
            lo = mid
        else:
            hi = mid
        if iterations > 200:
            break
    r_hat = 0.5 * (lo + hi)
    return FixedPointResult(r_hat=r_hat, iterations=iterations,
                            residual=abs(psi(r_hat) - r_hat))


@dataclass(frozen=True)
class RateTable:
    """Estimation- and testing-optimal rates for a decay family at sample size n."""

    lambda_dag: float   # estimation-optimal regularization
    s_dag: float        # matching projection dimension lower bound
    r_dag: float        # estimation error rate
    lambda_star: float  # testing-optimal regularization
    s_star: float       # matching projection dimension lower bound
    d_star_sq: float    # squared optimal separation


def rate_table(spec: KernelSpec, n: int) -> RateTable:
    """Dimensionless rate formulas (constant 1) for the kernel's decay family."""
    if n < 3:
        raise ValueError(f"n must be >= 3, got {n}")
    if spec.decay.kind == POLYNOMIAL:
        m = spec.decay.order
        lam_dag = n ** (-2.0 * m / (2 * m + 1))
        s_dag = n ** (1.0 / (2 * m + 1))
        lam_star = n ** (-4.0 * m / (4 * m + 1))
        s_star = n ** (2.0 / (4 * m + 1))
    elif spec.decay.kind == EXPONENTIAL:
        p = spec.decay.p
        logn = math.log(n)
        lam_dag = logn ** (1.0 / p) / n
        s_dag = logn ** (1.0 / p)
        lam_star = logn ** (1.0 / (2 * p)) / n
        s_star = logn ** (1.0 / p)
    else:
        raise ValueError(f"unknown decay kind {spec.decay.kind!r}")
    return RateTable(lambda_dag=lam_dag, s_dag=s_dag, r_dag=lam_dag,
                     lambda_star=lam_star, s_star=s_star, d_star_sq=lam_star)


def rate_lambda(spec: KernelSpec, n: int, kind: str = "testing",
                anchored: bool = True) -> float:
    """Rate-optimal regularization, optionally anchored to the spectrum's scale.

    The dimensionless rate formulas carry constant 1, which at moderate n can
    exceed the leading model eigenvalue entirely (the periodic Sobolev
    spectrum tops out at ``(2*pi)**(-2m)``), leaving zero effective
    dimensions.  With ``anchored=True`` the rate is multiplied by the leading
    model eigenvalue so the cut lands inside the spectrum.
    """
    table = rate_table(spec, n)
    raw = table.lambda_star if kind == "testing" else table.lambda_dag
    if not anchored:
        return raw
    mu1 = float(theoretical_eigenvalues(spec, 1).mu[0])
    return mu1 * raw


@dataclass
class ConcentrationReport:
    pass_rate: dict      # index (1-based) -> fraction of reps with relative error <= 1/2
    excluded: list       # indices outside the concentration regime
    reps: int


def eigen_concentration_check(spec: KernelSpec, n: int, indices, reps: int,
                              seed: int) -> ConcentrationReport:
    """Monte Carlo check that empirical eigenvalues track model eigenvalues.

    For each requested index i within the regime (``i <= n**(1/(2m))`` for
    polynomial decay, ``i <= sqrt(n)/2`` for exponential decay) reports the
    fraction of replications with ``|mu_hat_i - mu_i| <= mu_i / 2``.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    indices = [int(i) for i in indices]
    if any(i < 1 for i in indices):
        raise ValueError("indices are 1-based and must be >= 1")
    if spec.decay.kind == POLYNOMIAL:
        regime = n ** (1.0 / (2 * spec.decay.order))
    else:
        regime = math.sqrt(n) / 2.0
    valid = [i for i in indices if i <= regime]
    excluded = [i for i in indices if i > regime]
    mu = theoretical_eigenvalues(spec, max(valid, default=1)).mu
    hits = {i: 0 for i in valid}
    for rep in range(reps):
        rng = substream(seed, rep)
        if spec.family == "periodic_sobolev":
            xs = rng.uniform(0.0, 1.0, n)
        else:
            xs = rng.standard_normal((n, spec.dim))
        K = kernel_matrix(spec, xs)
        w = scipy.linalg.eigh(K.values, eigvals_only=True)[::-1]
        for i in valid:
            if abs(w[i - 1] - mu[i - 1]) <= 0.5 * mu[i - 1]:
                hits[i] += 1
    return ConcentrationReport(
        pass_rate={i: hits[i] / reps for i in valid},
        excluded=excluded,
        reps=reps,
    )
