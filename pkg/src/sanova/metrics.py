"""Outcome measures for estimator comparison and DIC model comparison.

Quantiles use linear interpolation between order statistics (numpy's
default ``"linear"`` method).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import Observations, cell_loglik

__all__ = [
    "MetricsError",
    "amse",
    "mbias",
    "pi_rate",
    "dic",
    "fit_dic",
    "MetricsReport",
]


class MetricsError(ValueError):
    pass


def _pair(estimates, truths):
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape:
        raise MetricsError(f"shape mismatch {est.shape} vs {tru.shape}")
    if est.ndim == 1:
        est, tru = est[None], tru[None]
    return est.reshape(est.shape[0], -1), tru.reshape(tru.shape[0], -1)


def amse(estimates, truths) -> tuple[float, float]:
    """Average over replicates of the per-replicate mean squared error.

    Parameters
    ----------
    estimates, truths : array_like, shape (L, cells)
        One row per replicate.

    Returns
    -------
    amse : float
    mcse : float
        ``sd(per-replicate MSE) / sqrt(L)`` with the ``L - 1`` divisor.
    """
    est, tru = _pair(estimates, truths)
    L = est.shape[0]
    if L < 2:
        raise MetricsError("amse needs at least two replicates")
    mse = np.mean((est - tru) ** 2, axis=1)
    return float(mse.mean()), float(mse.std(ddof=1) / np.sqrt(L))


def mbias(estimates, truths, q=(2.5, 50.0, 97.5)) -> tuple[float, ...]:
    """Percentiles over cells of the replicate-averaged bias."""
    est, tru = _pair(estimates, truths)
    bias = est.mean(axis=0) - tru.mean(axis=0)
    return tuple(float(v) for v in np.percentile(bias, q))


def pi_rate(intervals, truths) -> float:
    """Fraction of (replicate, cell) pairs whose interval covers the truth.

    ``intervals`` has shape ``truths.shape + (2,)`` holding lower and upper
    bounds.
    """
    iv = np.asarray(intervals, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if iv.shape != tru.shape + (2,):
        raise MetricsError(f"intervals shape {iv.shape} does not match truths {tru.shape}")
    lo, hi = iv[..., 0], iv[..., 1]
    if np.any(lo > hi):
        raise MetricsError("interval lower bound exceeds upper bound")
    return float(np.mean((lo <= tru) & (tru <= hi)))


def dic(loglik_draws, loglik_at_mean: float) -> tuple[float, float, float]:
    """``(dbar, p_D, dic)`` from per-draw log-likelihoods and a plug-in value."""
    ll = np.asarray(loglik_draws, dtype=float).ravel()
    if ll.size < 10:
        raise MetricsError("DIC needs at least 10 draws")
    dbar = float(np.mean(-2.0 * ll))
    p_d = dbar - (-2.0 * float(loglik_at_mean))
    return dbar, p_d, dbar + p_d


def fit_dic(draws, data: Observations, likelihood: str) -> tuple[float, float, float]:
    """DIC of a fit, plugging in posterior means at the likelihood level.

    Poisson fits plug in the posterior mean of the cell means
    ``E exp(mu)``; normal fits plug in the posterior means of ``mu`` and
    the error precision.
    """
    mu = draws.pooled("mu").reshape(-1, *data.shape)
    if likelihood == "poisson":
        mean_rate = np.mean(np.exp(mu), axis=0)
        ll_hat = cell_loglik("poisson", np.log(mean_rate), data).sum()
    else:
        eta0 = float(np.mean(draws.pooled("eta0")))
        ll_hat = cell_loglik("normal", mu.mean(axis=0), data, eta0).sum()
    return dic(draws.loglik, ll_hat)


@dataclass
class MetricsReport:
    """Per-(cell, method) simulation metrics and per-fit DIC rows."""

    cells: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)

    def add_cell(self, cell, method, *, amse, amse_mcse, mbias, pi_rate, n_ok=None):
        if amse < 0 or not 0 <= pi_rate <= 1:
            raise MetricsError("invalid metric values")
        self.cells[(cell, method)] = {
            "amse": amse,
            "amse_mcse": amse_mcse,
            "mbias": tuple(mbias),
            "pi_rate": pi_rate,
            "n_ok": n_ok,
        }

    def add_fit(self, name, dbar, p_d):
        self.fits[name] = {"dbar": dbar, "p_D": p_d, "dic": dbar + p_d}

    def table(self, metric: str = "amse", digits: int = 2) -> str:
        """Aligned text table with methods as rows and cells as columns."""
        cells = list(dict.fromkeys(c for c, _ in self.cells))
        methods = list(dict.fromkeys(m for _, m in self.cells))
        width = max([len(m) for m in methods] + [6])
        lines = [" " * width + "".join(f"{c:>10}" for c in cells)]
        for m in methods:
            row = f"{m:<{width}}"
            for c in cells:
                v = self.cells.get((c, m), {}).get(metric)
                row += f"{'-':>10}" if v is None else f"{v:>10.{digits}f}"
            lines.append(row)
        return "\n".join(lines)

    def delimited(self) -> str:
        """Machine-readable rows: one per (cell, method)."""
        lines = ["cell,method,amse,amse_mcse,mbias_2.5,mbias_50,mbias_97.5,pi_rate"]
        for (c, m), r in self.cells.items():
            b = r["mbias"]
            lines.append(
                f"{c},{m},{r['amse']!r},{r['amse_mcse']!r},{b[0]!r},{b[1]!r},{b[2]!r},{r['pi_rate']!r}"
            )
        return "\n".join(lines) + "\n"

    def dic_table(self) -> str:
        width = max([len(k) for k in self.fits] + [5])
        lines = [f"{'model':<{width}}{'Dbar':>10}{'pD':>10}{'DIC':>10}"]
        for k, r in self.fits.items():
            lines.append(f"{k:<{width}}{r['dbar']:>10.1f}{r['p_D']:>10.1f}{r['dic']:>10.1f}")
        return "\n".join(lines)
