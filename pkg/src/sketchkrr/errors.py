class ComputationError(RuntimeError):
    """Numerical failure (singular system, non-convergent eigensolve, degenerate statistic)."""
