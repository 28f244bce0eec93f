"""Data generators, worst-case signal constructions, and the Monte Carlo engine.

Each replication is a pure function of (seed, replication index, config):
designs, noise, and sketches come from separate substreams keyed by
``(seed, rep, role)``, so any single replication can be reproduced in
isolation and worker count never changes results.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.special import gammaln

from .adaptive import adaptive_test
from .errors import ComputationError
from .kernels import KernelSpec, gaussian, kernel_matrix, periodic_sobolev
from .krr import default_lambda_grid, gcv
from .sketch import draw_sketch
from .spectral import EigenSystem, rate_table
from .testing import composite_linear_test, distance_test
from .rng import DESIGN, NOISE, SKETCH, float_key, substream

__all__ = [
    "MonteCarloConfig",
    "MonteCarloResult",
    "beta_mixture_data",
    "gaussian_interaction_data",
    "adversarial_estimation_signal",
    "adversarial_testing_signal",
    "run_replication",
    "monte_carlo",
    "phase_grid",
    "PhaseGridResult",
]


def _beta_pdf(x: np.ndarray, a: float, b: float) -> np.ndarray:
    # log-gamma form; stable at shape parameters ~30, zero at the endpoints
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0.0) & (x < 1.0)
    xi = x[inside]
    logc = gammaln(a + b) - gammaln(a) - gammaln(b)
    out[inside] = np.exp(logc + (a - 1.0) * np.log(xi) + (b - 1.0) * np.log1p(-xi))
    return out


def beta_mixture_data(n: int, c: float, rng: np.random.Generator,
                      noise_rng: np.random.Generator | None = None):
    """Uniform design on [0, 1) with signal c*(3*Beta(30,17) + 2*Beta(3,11)) densities."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if c < 0:
        raise ValueError(f"c must be >= 0, got {c}")
    noise_rng = noise_rng if noise_rng is not None else rng
    xs = rng.uniform(0.0, 1.0, n)
    f = c * (3.0 * _beta_pdf(xs, 30.0, 17.0) + 2.0 * _beta_pdf(xs, 3.0, 11.0))
    y = f + noise_rng.standard_normal(n)
    return xs, y, f


def gaussian_interaction_data(n: int, c: float, rng: np.random.Generator,
                              noise_rng: np.random.Generator | None = None):
    """Standard normal design in R^3 with signal c*(x1^2 + 2 x1 x2 + 4 x1 x2 x3)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if c < 0:
        raise ValueError(f"c must be >= 0, got {c}")
    noise_rng = noise_rng if noise_rng is not None else rng
    xs = rng.standard_normal((n, 3))
    f = c * (xs[:, 0] ** 2 + 2.0 * xs[:, 0] * xs[:, 1]
             + 4.0 * xs[:, 0] * xs[:, 1] * xs[:, 2])
    y = f + noise_rng.standard_normal(n)
    return xs, y, f


# ---------------------------------------------------------------------------
# Worst-case signal constructions in the empirical eigenbasis

def adversarial_estimation_signal(eig: EigenSystem, s: int, C: float = 1.0):
    """Unit-ball signal concentrated on eigen-directions s+1..2s.

    Coefficients ``alpha_i^2 = C / (n s mu_hat_i)`` on that window give RKHS
    norm exactly C while the empirical norm collapses to the tail scale.
    Returns (f_vec, alpha_vec) with f evaluated at the design points.
    """
    n = eig.n
    if 2 * s > n:
        raise ValueError(f"need 2s <= n, got s={s}, n={n}")
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    window = np.arange(s, 2 * s)
    mu = eig.eigenvalues[window]
    if mu.min() <= 0.0:
        raise ComputationError("zero eigenvalue inside the construction window")
    alpha = np.zeros(n)
    alpha[window] = np.sqrt(C / (n * s * mu))
    f_vec = eig.vectors @ (n * eig.eigenvalues * alpha)
    return f_vec, alpha


def adversarial_testing_signal(eig: EigenSystem, s: int, g: int, C: float = 1.0):
    """Unit-ball signal supported on eigen-directions gs+1..gs+s-1.

    With the data-dependent sketch of size s the support is disjoint from the
    sketch range, so the noiseless sketched fit vanishes identically.
    """
    n = eig.n
    if s < 2:
        raise ValueError(f"need s >= 2, got {s}")
    if g < 1:
        raise ValueError("g must be >= 1: the support must avoid directions 1..s")
    if (g + 1) * s > n:
        raise ValueError(f"support overflows: need (g+1)s <= n, got g={g}, s={s}, n={n}")
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    window = np.arange(g * s, g * s + s - 1)
    mu = eig.eigenvalues[window]
    if mu.min() <= 0.0:
        raise ComputationError("zero eigenvalue inside the construction window")
    alpha = np.zeros(n)
    alpha[window] = np.sqrt(C / (n * (s - 1) * mu))
    f_vec = eig.vectors @ (n * eig.eigenvalues * alpha)
    return f_vec, alpha


# ---------------------------------------------------------------------------
# Monte Carlo engine

@dataclass
class MonteCarloConfig:
    dgp: str = "pdk_beta"            # "pdk_beta" | "edk_gaussian" | callable
    c: float = 0.0
    n: int = 512
    reps: int = 500
    alpha: float = 0.05
    test: str = "dt"                 # "dt" | "at" | "composite_linear"
    sketch_kind: str = "gaussian"
    s_rule: tuple | int = ("gamma", 2.0, 2.0 / 9.0)
    lambda_rule: object = "gcv"      # "gcv" | float | "rate_star" | "rate_dagger" | callable(n)
    kernel_order: int = 2
    edk_dim: int = 3
    bandwidth: float = 1.0
    at_m_n: int | None = None
    at_c_lambda: float = 1.0
    at_d_s: float = 2.0
    at_lambda_rule: str = "schedule"
    seed: int = 0
    workers: int = 1
    keep_decisions: bool = False

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass
class MonteCarloResult:
    rejection_rate: float
    standard_error: float
    mean_z: float
    var_z: float
    reps: int
    aborted: int
    median_lambda: float
    s: int
    decisions: list | None
    config: dict


def _sketch_size(config: MonteCarloConfig) -> int:
    rule = config.s_rule
    if isinstance(rule, int):
        return max(1, min(rule, config.n))
    kind, factor, expo = rule
    if kind == "gamma":
        s = round(factor * config.n ** expo)
    elif kind == "loggamma":
        s = round(factor * math.log(config.n) ** expo)
    else:
        raise ValueError(f"unknown s rule {kind!r}")
    return max(1, min(int(s), config.n))


def _kernel_spec(config: MonteCarloConfig) -> KernelSpec:
    if config.dgp == "edk_gaussian":
        return gaussian(dim=config.edk_dim, bandwidth=config.bandwidth)
    return periodic_sobolev(config.kernel_order)


def _choose_lambda(config: MonteCarloConfig, spec, K, y, S) -> float:
    rule = config.lambda_rule
    if isinstance(rule, (int, float)):
        return float(rule)
    if callable(rule):
        return float(rule(config.n))
    if rule == "gcv":
        return gcv(K, y, S, default_lambda_grid(spec, config.n)).best_lambda
    table = rate_table(spec, config.n)
    if rule == "rate_star":
        return table.lambda_star
    if rule == "rate_dagger":
        return table.lambda_dag
    raise ValueError(f"unknown lambda rule {rule!r}")


def run_replication(config: MonteCarloConfig, rep: int) -> dict:
    """One replication: fresh design, noise, and sketch from keyed substreams."""
    design_rng = substream(config.seed, rep, DESIGN)
    noise_rng = substream(config.seed, rep, NOISE)
    if callable(config.dgp):
        xs, y, f = config.dgp(config.n, config.c, design_rng, noise_rng)
    elif config.dgp == "pdk_beta":
        xs, y, f = beta_mixture_data(config.n, config.c, design_rng, noise_rng)
    elif config.dgp == "edk_gaussian":
        xs, y, f = gaussian_interaction_data(config.n, config.c, design_rng, noise_rng)
    else:
        raise ValueError(f"unknown dgp {config.dgp!r}")

    if config.test == "at":
        if config.dgp == "edk_gaussian":
            raise ValueError("adaptive testing is defined on the periodic Sobolev ladder only")
        report = adaptive_test(xs, y, alpha=config.alpha, m_n=config.at_m_n,
                               sketch_kind=config.sketch_kind,
                               seed=int(substream(config.seed, rep, SKETCH).integers(2 ** 62)),
                               c_lambda=config.at_c_lambda, d_s=config.at_d_s,
                               lambda_rule=config.at_lambda_rule)
        return {"reject": report.reject, "z": report.tau_star,
                "lam": report.schedule[-1][0], "s": report.schedule[-1][1]}

    spec = _kernel_spec(config)
    K = kernel_matrix(spec, xs)
    s = _sketch_size(config)
    S = draw_sketch(config.sketch_kind, s, config.n, (config.seed, rep, SKETCH))
    lam = _choose_lambda(config, spec, K, y, S)
    if config.test == "dt":
        report = distance_test(K, S, lam, y, alpha=config.alpha)
    elif config.test == "composite_linear":
        X = np.column_stack([np.ones(config.n), np.atleast_2d(xs.T).T])
        report = composite_linear_test(K, S, lam, X, y, alpha=config.alpha)
    else:
        raise ValueError(f"unknown test {config.test!r}")
    return {"reject": report.reject, "z": report.z, "lam": lam, "s": s}


def _safe_replication(args) -> dict:
    config, rep = args
    try:
        return run_replication(config, rep)
    except (ComputationError, np.linalg.LinAlgError) as exc:
        return {"aborted": str(exc)}


def monte_carlo(config: MonteCarloConfig) -> MonteCarloResult:
    """Run all replications and aggregate; raises if more than 1% abort."""
    jobs = [(config, rep) for rep in range(config.reps)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_safe_replication, jobs, chunksize=8))
    else:
        outcomes = [_safe_replication(j) for j in jobs]
    good = [o for o in outcomes if "aborted" not in o]
    aborted = len(outcomes) - len(good)
    if aborted > 0.01 * config.reps:
        first = next(o["aborted"] for o in outcomes if "aborted" in o)
        raise ComputationError(
            f"{aborted}/{config.reps} replications aborted (first: {first})")
    decisions = [bool(o["reject"]) for o in good]
    zs = np.array([o["z"] for o in good])
    p = float(np.mean(decisions)) if decisions else math.nan
    se = math.sqrt(p * (1.0 - p) / len(decisions)) if decisions else math.nan
    cfg = {k: (v if not callable(v) else repr(v)) for k, v in asdict(config).items()}
    return MonteCarloResult(
        rejection_rate=p,
        standard_error=se,
        mean_z=float(zs.mean()) if zs.size else math.nan,
        var_z=float(zs.var()) if zs.size else math.nan,
        reps=config.reps,
        aborted=aborted,
        median_lambda=float(np.median([o["lam"] for o in good])) if good else math.nan,
        s=int(good[0]["s"]) if good else 0,
        decisions=decisions if config.keep_decisions else None,
        config=cfg,
    )


@dataclass
class PhaseGridResult:
    lambda_grid: np.ndarray
    s_grid: np.ndarray
    c_grid: np.ndarray
    power: np.ndarray        # shape (len(lambda), len(s), len(c))
    swds_proxy: np.ndarray   # smallest c reaching power >= threshold, NaN if none
    threshold: float


def phase_grid(spec: KernelSpec, n: int, lambda_grid, s_grid, c_grid,
               reps: int, seed: int, threshold: float = 0.5,
               alpha: float = 0.05) -> PhaseGridResult:
    """Empirical power over a (lam, s) grid with the smallest detectable c per cell.

    Streams are keyed by the grid values themselves, so duplicated grid points
    produce identical cells.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    lams = np.asarray(list(lambda_grid), dtype=float)
    ss = np.asarray(list(s_grid), dtype=int)
    cs = np.sort(np.asarray(list(c_grid), dtype=float))
    if lams.size == 0 or ss.size == 0 or cs.size == 0:
        raise ValueError("grids must be non-empty")
    power = np.zeros((lams.size, ss.size, cs.size))
    for i, lam in enumerate(lams):
        for j, s in enumerate(ss):
            for k, c in enumerate(cs):
                cfg = MonteCarloConfig(
                    dgp="pdk_beta" if spec.family == "periodic_sobolev" else "edk_gaussian",
                    c=float(c), n=n, reps=reps, alpha=alpha, test="dt",
                    s_rule=int(s), lambda_rule=float(lam),
                    kernel_order=spec.order, edk_dim=spec.dim,
                    seed=int(np.random.SeedSequence(
                        seed, spawn_key=(float_key(lam), int(s), float_key(c))
                    ).generate_state(1)[0]),
                )
                power[i, j, k] = monte_carlo(cfg).rejection_rate
    swds = np.full((lams.size, ss.size), np.nan)
    for i in range(lams.size):
        for j in range(ss.size):
            hit = np.nonzero(power[i, j] >= threshold)[0]
            if hit.size:
                swds[i, j] = cs[hit[0]]
    return PhaseGridResult(lambda_grid=lams, s_grid=ss, c_grid=cs,
                           power=power, swds_proxy=swds, threshold=threshold)
