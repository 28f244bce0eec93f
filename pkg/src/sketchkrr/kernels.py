"""Kernel families, scaled empirical Gram matrices, and model eigenvalue spectra.

Two families are provided:

* ``periodic_sobolev(m)`` -- the order-m periodic Sobolev kernel on [0, 1),
  evaluated in closed form through the degree-2m Bernoulli polynomial.  Its
  Mercer spectrum consists of the pairs ``(2*pi*j)**(-2m)``, one pair per
  frequency j, with the unpenalized constant direction excluded.  This is a
  polynomially decaying spectrum of order m.
* ``gaussian(dim, bandwidth)`` -- the Gaussian kernel
  ``exp(-||x - x'||^2 / (2 * bandwidth**2))``, an exponentially decaying
  family; the stored (gamma, p) decay parameters are descriptive metadata
  and never enter matrix computations.

The empirical kernel matrix carries the 1/n scaling throughout, so its
eigenvalues estimate the population Mercer eigenvalues directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "DecayModel",
    "KernelSpec",
    "KernelMatrix",
    "SpectrumDescriptor",
    "periodic_sobolev",
    "gaussian",
    "eval_kernel",
    "kernel_matrix",
    "theoretical_eigenvalues",
    "tail_regularity_check",
    "tail_ratio_profile",
    "TailRegularityReport",
]

POLYNOMIAL = "polynomial"
EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class DecayModel:
    """Eigenvalue decay descriptor: polynomial ``j**(-2m)`` or exponential ``exp(-gamma * i**p)``."""

    kind: str
    order: int | None = None     # m, polynomial decay
    gamma: float | None = None   # exponential decay rate
    p: float | None = None       # exponential decay exponent


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family together with its decay descriptor.

    Use the :func:`periodic_sobolev` and :func:`gaussian` constructors rather
    than instantiating directly.
    """

    family: str                  # "periodic_sobolev" | "gaussian"
    order: int = 2               # smoothness m (periodic Sobolev only)
    dim: int = 1
    bandwidth: float = 1.0       # Gaussian only
    decay: DecayModel = DecayModel(POLYNOMIAL, order=2)


def periodic_sobolev(order: int) -> KernelSpec:
    """Periodic Sobolev kernel of smoothness ``order`` on [0, 1)."""
    if order < 1:
        raise ValueError(f"smoothness order must be >= 1, got {order}")
    return KernelSpec(
        family="periodic_sobolev",
        order=int(order),
        dim=1,
        decay=DecayModel(POLYNOMIAL, order=int(order)),
    )


def gaussian(dim: int = 1, bandwidth: float = 1.0,
             gamma: float = math.pi, p: float = 2.0) -> KernelSpec:
    """Gaussian kernel in ``dim`` dimensions.

    ``gamma`` and ``p`` describe the model spectrum ``exp(-gamma * i**p)``;
    the defaults are the unit-bandwidth one-dimensional values.  They are
    metadata for rate calculations only.
    """
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if p < 1:
        raise ValueError(f"decay exponent p must be >= 1, got {p}")
    return KernelSpec(
        family="gaussian",
        dim=int(dim),
        bandwidth=float(bandwidth),
        decay=DecayModel(EXPONENTIAL, gamma=float(gamma), p=float(p)),
    )


@dataclass
class KernelMatrix:
    """The 1/n-scaled empirical kernel matrix ``[K(x_i, x_j) / n]``."""

    values: np.ndarray
    n: int

    def validate(self) -> None:
        """Check symmetry and positive semidefiniteness within tolerance."""
        a = self.values
        scale = np.abs(a).max()
        if np.abs(a - a.T).max() > 1e-12 * max(scale, 1e-300):
            raise ValueError("kernel matrix is not symmetric within tolerance")
        w = np.linalg.eigvalsh(a)
        if w.min() < -1e-10 * np.trace(a):
            raise ValueError(f"kernel matrix is not PSD: min eigenvalue {w.min():.3e}")


@dataclass(frozen=True)
class SpectrumDescriptor:
    """Ordered model eigenvalues mu_1 >= mu_2 >= ... for a kernel family."""

    mu: np.ndarray
    family: str
    decay: DecayModel


# ---------------------------------------------------------------------------
# Bernoulli polynomials (exact rational coefficients, evaluated in float64)

@lru_cache(maxsize=None)
def _bernoulli_numbers(count: int) -> tuple[Fraction, ...]:
    # B_0 .. B_count with B_1 = -1/2, via the defining recurrence.
    b = [Fraction(1)]
    for m in range(1, count + 1):
        acc = Fraction(0)
        for j in range(m):
            acc += math.comb(m + 1, j) * b[j]
        b.append(-acc / (m + 1))
    return tuple(b)


@lru_cache(maxsize=None)
def bernoulli_poly_coeffs(degree: int) -> np.ndarray:
    """Coefficients of the Bernoulli polynomial B_degree, highest power first."""
    b = _bernoulli_numbers(degree)
    return np.array([float(math.comb(degree, k) * b[k]) for k in range(degree + 1)])


def _sobolev_values(order: int, t: np.ndarray) -> np.ndarray:
    # K_m(x, y) = (-1)^(m+1) B_{2m}({x - y}) / (2m)!  with {.} the fractional part
    t = np.mod(np.asarray(t, dtype=float), 1.0)
    # mod can round up to exactly 1.0 for tiny negative inputs
    t = np.where(t >= 1.0, 0.0, t)
    sign = -1.0 if order % 2 == 0 else 1.0
    coeffs = bernoulli_poly_coeffs(2 * order)
    out = np.full_like(t, coeffs[0])
    for c in coeffs[1:]:
        out *= t
        out += c
    out *= sign / math.factorial(2 * order)
    return out


# ---------------------------------------------------------------------------
# Operations

def eval_kernel(spec: KernelSpec, x, x2) -> float:
    """Evaluate K(x, x2) for a single pair of points."""
    if spec.family == "periodic_sobolev":
        xa, xb = float(np.squeeze(x)), float(np.squeeze(x2))
        for v in (xa, xb):
            if not (0.0 <= v < 1.0):
                raise ValueError(f"periodic Sobolev points must lie in [0, 1), got {v}")
        return float(_sobolev_values(spec.order, np.array(xa - xb)))
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    xb = np.atleast_1d(np.asarray(x2, dtype=float))
    if xa.shape != (spec.dim,) or xb.shape != (spec.dim,):
        raise ValueError(f"points must have dimension {spec.dim}, "
                         f"got shapes {xa.shape} and {xb.shape}")
    sq = float(np.sum((xa - xb) ** 2))
    return math.exp(-0.5 * sq / spec.bandwidth ** 2)


def kernel_matrix(spec: KernelSpec, xs: np.ndarray) -> KernelMatrix:
    """Build the 1/n-scaled kernel matrix for an n-point design.

    ``xs`` is (n,) or (n, 1) for the periodic Sobolev kernel and (n, dim)
    for the Gaussian kernel.
    """
    xs = np.asarray(xs, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise ValueError("design contains non-finite coordinates")
    if spec.family == "periodic_sobolev":
        x = np.squeeze(xs)
        if x.ndim != 1:
            raise ValueError("periodic Sobolev designs are one-dimensional")
        n = x.shape[0]
        if n < 2:
            raise ValueError(f"need at least 2 points, got {n}")
        if x.min() < 0.0 or x.max() >= 1.0:
            raise ValueError("periodic Sobolev design points must lie in [0, 1)")
        vals = _sobolev_values(spec.order, x[:, None] - x[None, :])
    else:
        pts = np.atleast_2d(xs)
        if pts.shape[0] == spec.dim and pts.shape[1] != spec.dim and pts.shape[0] != pts.shape[1]:
            pts = pts.T
        if pts.shape[1] != spec.dim:
            raise ValueError(f"design has dimension {pts.shape[1]}, kernel expects {spec.dim}")
        n = pts.shape[0]
        if n < 2:
            raise ValueError(f"need at least 2 points, got {n}")
        sq = np.sum(pts ** 2, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
        np.clip(d2, 0.0, None, out=d2)
        vals = np.exp(-0.5 * d2 / spec.bandwidth ** 2)
    vals = (vals + vals.T) / (2.0 * n)
    return KernelMatrix(values=vals, n=n)


def raw_cross_kernel(spec: KernelSpec, xs_new: np.ndarray, xs_train: np.ndarray) -> np.ndarray:
    """Unscaled kernel values K(x_new_i, x_train_j), shape (n_new, n_train)."""
    if spec.family == "periodic_sobolev":
        a = np.squeeze(np.asarray(xs_new, dtype=float))
        b = np.squeeze(np.asarray(xs_train, dtype=float))
        a = np.atleast_1d(a)
        b = np.atleast_1d(b)
        for arr in (a, b):
            if arr.min() < 0.0 or arr.max() >= 1.0:
                raise ValueError("periodic Sobolev points must lie in [0, 1)")
        return _sobolev_values(spec.order, a[:, None] - b[None, :])
    a = np.atleast_2d(np.asarray(xs_new, dtype=float))
    b = np.atleast_2d(np.asarray(xs_train, dtype=float))
    if a.shape[1] != spec.dim or b.shape[1] != spec.dim:
        raise ValueError(f"points must have dimension {spec.dim}")
    d2 = (np.sum(a ** 2, axis=1)[:, None] + np.sum(b ** 2, axis=1)[None, :]
          - 2.0 * (a @ b.T))
    np.clip(d2, 0.0, None, out=d2)
    return np.exp(-0.5 * d2 / spec.bandwidth ** 2)


def theoretical_eigenvalues(spec: KernelSpec, count: int) -> SpectrumDescriptor:
    """Model Mercer eigenvalues, non-increasing, length ``count``.

    Periodic Sobolev: exact paired values ``(2*pi*ceil(i/2))**(-2m)``.
    Gaussian: the representative model ``exp(-gamma * i**p)``.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    i = np.arange(1, count + 1, dtype=float)
    if spec.decay.kind == POLYNOMIAL:
        mu = (2.0 * np.pi * np.ceil(i / 2.0)) ** (-2.0 * spec.decay.order)
    else:
        mu = np.exp(-spec.decay.gamma * i ** spec.decay.p)
    return SpectrumDescriptor(mu=mu, family=spec.family, decay=spec.decay)


@dataclass
class TailRegularityReport:
    max_ratio: float
    ratios: np.ndarray   # ratios[k-1] = tail-sum beyond k over k * mu_k
    passed: bool
    ceiling: float


def tail_ratio_profile(mu: np.ndarray, k_max: int) -> np.ndarray:
    """Tail-sum ratios ``sum_{i>k} mu_i / (k * mu_k)`` for k = 1..k_max."""
    mu = np.asarray(mu, dtype=float)
    tails = np.cumsum(mu[::-1])[::-1]   # tails[k] = sum_{i >= k+1} mu_i (0-based)
    k = np.arange(1, k_max + 1, dtype=float)
    denom = k * mu[:k_max]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(denom > 0.0, tails[1:k_max + 1] / denom, np.inf)
    return ratios


def tail_regularity_check(spec: KernelSpec, k_max: int,
                          ceiling: float = 10.0) -> TailRegularityReport:
    """Diagnostic for the bounded tail-sum condition on the model spectrum.

    Computes ``sup_{1<=k<=k_max}`` of the tail-to-head ratio with the tail
    truncated at 100 * k_max terms, and passes when the supremum is finite
    and below ``ceiling``.  A zero eigenvalue inside the range yields an
    infinite ratio and a failing report.
    """
    if k_max < 2:
        raise ValueError(f"k_max must be >= 2, got {k_max}")
    spectrum = theoretical_eigenvalues(spec, 100 * k_max)
    ratios = tail_ratio_profile(spectrum.mu, k_max)
    max_ratio = float(ratios.max())
    return TailRegularityReport(
        max_ratio=max_ratio,
        ratios=ratios,
        passed=bool(np.isfinite(max_ratio) and max_ratio <= ceiling),
        ceiling=ceiling,
    )
