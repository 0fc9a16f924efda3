"""Independent reference computations used as test oracles.

Each function avoids the package's own code path: loops instead of
Kronecker products, dense solves instead of orthogonality shortcuts,
scipy densities instead of hand-written ones.
"""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy import integrate, stats


def bfs_components(neighbors) -> int:
    """Number of connected components by breadth-first search."""
    n = len(neighbors)
    seen = [False] * n
    comps = 0
    for s in range(n):
        if seen[s]:
            continue
        comps += 1
        seen[s] = True
        q = deque([s])
        while q:
            u = q.popleft()
            for v in neighbors[u]:
                if not seen[v]:
                    seen[v] = True
                    q.append(v)
    return comps


def design_by_loops(V: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Design entries written out cell by cell.

    Row ``i*n + j`` is region ``i`` and outcome ``j``; columns are the
    grand mean, outcome contrasts, region main effects (one per
    non-constant eigenvector) and interactions ordered by contrast then
    eigenvector.
    """
    N, n = V.shape[0], H.shape[0]
    cols = []
    for c in range(n):  # grand mean then outcome main effects
        cols.append([H[j, c] / np.sqrt(N) for i in range(N) for j in range(n)])
    for c in range(n):  # region main (c = 0), then interactions
        for k in range(N - 1):
            cols.append([V[i, k] * H[j, c] for i in range(N) for j in range(n)])
    return np.array(cols).T


def induced_precision_by_covariance(X: np.ndarray, prior_var: np.ndarray, smoothed: np.ndarray):
    """Precision of ``X_s theta_s`` from the coefficient covariance (pseudo-inverse)."""
    Xs = X[:, smoothed]
    cov = Xs @ np.diag(prior_var) @ Xs.T
    return np.linalg.pinv(cov, rcond=1e-12, hermitian=True)


def wishart_logpdf_scipy(Omega, R, nu) -> float:
    """``Wishart(R, nu)`` with ``E(Omega) = nu R^-1`` via scipy's parameterization."""
    return float(stats.wishart(df=nu, scale=np.linalg.inv(R)).logpdf(Omega))


def gaussian_posterior(X, y, eta0, prior_prec_diag):
    """Posterior mean and covariance of ``theta`` for ``y ~ N(X theta, I / eta0)``."""
    A = eta0 * X.T @ X + np.diag(prior_prec_diag)
    cov = np.linalg.inv(A)
    return cov @ (eta0 * X.T @ y), cov


def quantile_sorted(x, p: float) -> float:
    """Linear interpolation between order statistics at position ``(n-1) p``."""
    s = sorted(float(v) for v in x)
    h = (len(s) - 1) * p
    lo = int(np.floor(h))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def poisson_rate_median(y: float, E: float, prior_var: float = 1e6) -> float:
    """Median of ``exp(theta)`` for ``y ~ Poisson(E exp(theta))``, ``theta ~ N(0, v)``.

    Computed by quadrature of the exact one-dimensional posterior.
    """
    mode = np.log((y + 0.5) / E)
    lo, hi = mode - 12.0, mode + 12.0

    def logpost(t):
        return y * t - E * np.exp(t) - 0.5 * t * t / prior_var

    ref = logpost(mode)

    def dens(t):
        return np.exp(logpost(t) - ref)

    total = integrate.quad(dens, lo, hi, points=[mode], limit=200)[0]
    a, b = lo, hi
    for _ in range(80):
        mid = 0.5 * (a + b)
        if integrate.quad(dens, lo, mid, limit=200)[0] < 0.5 * total:
            a = mid
        else:
            b = mid
    return float(np.exp(0.5 * (a + b)))


def rhat_textbook(chains) -> float:
    """Between/within variance ratio for a ``(m, n)`` array, same pooled form."""
    x = np.asarray(chains, dtype=float)
    m, n = x.shape
    means = [float(np.mean(c)) for c in x]
    grand = sum(means) / m
    B = n / (m - 1) * sum((mu - grand) ** 2 for mu in means)
    W = sum(float(np.var(c, ddof=1)) for c in x) / m
    return float(np.sqrt(((n - 1) / n * W + B / n + W / n) / W))
