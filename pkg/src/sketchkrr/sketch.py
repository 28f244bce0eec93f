"""Random and data-dependent projection matrices with admissibility checks.

A sketch is an s x n matrix S compressing the n-dimensional coefficient
space.  Sub-Gaussian sketches (Gaussian or Rademacher entries) are scaled by
1/sqrt(s) so each entry has variance 1/s; the data-dependent sketch takes the
leading s eigenvectors of the scaled kernel matrix.

The K-satisfiability certificate quantifies whether a sketch preserves the
head eigenspace of the kernel matrix while damping its tail:

* ``head_deviation = ||(S U_1)' S U_1 - I||_op`` over the eigenvectors whose
  eigenvalues exceed ``lam`` (must stay <= 1/2), and
* ``tail_energy = ||S U_2 D_2^{1/2}||_op`` over the rest (must stay below
  ``c * sqrt(lam)``).

Operator norms are computed exactly from singular values of the explicit
small blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import EigenSystem, lambda_split
from .kernels import SpectrumDescriptor
from .rng import substream

__all__ = [
    "SketchMatrix",
    "SatisfiabilityCertificate",
    "AdmissibilityReport",
    "draw_sketch",
    "data_dependent_sketch",
    "check_k_satisfiability",
    "sketch_admissibility_report",
]

IID_KINDS = ("gaussian", "rademacher")


@dataclass
class SketchMatrix:
    values: np.ndarray            # s x n
    kind: str                     # "gaussian" | "rademacher" | "data_dependent" | "identity"
    s: int
    n: int
    seed: int | tuple | None = None


def draw_sketch(kind: str, s: int, n: int, seed: int | tuple) -> SketchMatrix:
    """Draw an i.i.d. mean-zero variance-1/s sketch, reproducible from ``seed``.

    ``seed`` may be an integer or a ``(seed, *key)`` tuple naming a substream.
    """
    if kind not in IID_KINDS:
        raise ValueError(
            f"kind must be one of {IID_KINDS}, got {kind!r} "
            "(use data_dependent_sketch for eigenvector sketches)")
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    if isinstance(seed, tuple):
        rng = substream(*seed)
    else:
        rng = substream(int(seed))
    if kind == "gaussian":
        vals = rng.standard_normal((s, n))
    else:
        vals = rng.integers(0, 2, size=(s, n)).astype(float) * 2.0 - 1.0
    vals /= math.sqrt(s)
    return SketchMatrix(values=vals, kind=kind, s=s, n=n, seed=seed)


def data_dependent_sketch(eig: EigenSystem, s: int) -> SketchMatrix:
    """Sketch whose rows are the leading s eigenvectors of the kernel matrix."""
    if not 1 <= s <= eig.n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={eig.n}")
    return SketchMatrix(values=eig.vectors[:, :s].T.copy(),
                        kind="data_dependent", s=s, n=eig.n, seed=None)


@dataclass
class SatisfiabilityCertificate:
    head_deviation: float
    tail_energy: float
    lam: float
    c_used: float
    passed: bool
    head_dim: int        # number of eigenvalues above lam


def check_k_satisfiability(S: SketchMatrix, eig: EigenSystem, lam: float,
                           c: float = 3.0) -> SatisfiabilityCertificate:
    """Evaluate the K-satisfiability certificate of a sketch at level ``lam``.

    With an empty head (no eigenvalue above ``lam``) the head deviation is
    defined as zero and only the tail condition is informative.
    """
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    s_hat = int(np.count_nonzero(eig.eigenvalues > lam))
    Sv = S.values
    if s_hat == 0:
        head = 0.0
    else:
        SU1 = Sv @ eig.vectors[:, :s_hat]
        gram = SU1.T @ SU1 - np.eye(s_hat)
        head = float(np.abs(np.linalg.eigvalsh(gram)).max())
    tail_block = (Sv @ eig.vectors[:, s_hat:]) * np.sqrt(eig.eigenvalues[s_hat:])
    if tail_block.size:
        tail = float(np.linalg.svd(tail_block, compute_uv=False)[0])
    else:
        tail = 0.0
    passed = head <= 0.5 and tail <= c * math.sqrt(lam)
    return SatisfiabilityCertificate(head_deviation=head, tail_energy=tail,
                                     lam=lam, c_used=c, passed=passed,
                                     head_dim=s_hat)


@dataclass
class AdmissibilityReport:
    s_over_slambda: float
    cert: SatisfiabilityCertificate
    passed: bool
    s_lambda: int
    s_lambda_source: str   # "model" | "empirical"


def sketch_admissibility_report(S: SketchMatrix, eig: EigenSystem, lam: float,
                                d: float = 4.0,
                                spectrum: SpectrumDescriptor | None = None,
                                c: float = 3.0) -> AdmissibilityReport:
    """Joint check: projection dimension s >= d * s_lambda and the certificate passes.

    ``s_lambda`` comes from the model spectrum when one is supplied, otherwise
    from the empirical eigenvalues (flagged in the report).
    """
    if d <= 0:
        raise ValueError(f"d must be positive, got {d}")
    split = lambda_split(eig, lam, spectrum)
    s_lam = split.model_dim
    source = "model" if split.model_based else "empirical"
    cert = check_k_satisfiability(S, eig, lam, c=c)
    size_ok = S.s >= d * s_lam
    ratio = S.s / s_lam if s_lam > 0 else math.inf
    return AdmissibilityReport(s_over_slambda=ratio, cert=cert,
                               passed=bool(size_ok and cert.passed),
                               s_lambda=s_lam, s_lambda_source=source)
