"""Convergence diagnostics over parallel chains."""

from __future__ import annotations

import numpy as np

__all__ = ["potential_scale_reduction", "gelman_rubin"]


def potential_scale_reduction(chains) -> np.ndarray:
    """Between/within-chain variance ratio for draws shaped ``(m, n, ...)``.

    Uses the pooled variance estimate ``W + B/n``, so the statistic is
    never below 1 and equals 1 exactly when all chain means coincide.
    A parameter constant across all draws gets 1.
    """
    x = np.asarray(chains, dtype=float)
    m, n = x.shape[:2]
    if m < 2:
        raise ValueError("need at least 2 chains")
    if n < 10:
        raise ValueError("need at least 10 draws per chain")
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean(axis=0)
    B = n * means.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(1.0 + B / (n * W))
    return np.where(W > 0, r, np.where(B > 0, np.inf, 1.0))


def gelman_rubin(draws) -> dict:
    """R-hat for every stored parameter of a :class:`PosteriorDraws`."""
    out = {}
    for name, arr in draws.samples.items():
        out[name] = potential_scale_reduction(arr)
    return out
