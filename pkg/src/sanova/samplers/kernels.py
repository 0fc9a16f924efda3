"""Batched MCMC transition kernels.

All kernels work in an orthonormal coefficient basis ``X`` (``Nn x p``), so
that the region-by-outcome effects are ``X @ theta``:

* SANOVA uses the design matrix itself.  With normal errors the coefficient
  conditional has diagonal precision ``eta0 + P(tau)``.
* MCAR uses ``X = V kron I_n``: coefficient block ``k`` is the projection of
  the effects on CAR eigenvector ``k``, with prior precision ``D_k Omega``.
  The projection on the constant eigenvector carries the outcome intercepts,
  so the per-outcome centering of ``S`` holds by construction.
* Poisson models use Metropolis updates on chunks of a whitened basis.  The
  whitening comes from the curvature of the log-posterior (likelihood
  Hessian plus prior precision), refreshed during burn-in; per-chunk step
  sizes are tuned toward ``cfg.target_accept``.  Both freeze at the end of
  burn-in.

Full conditionals (normal SANOVA, flat fixed effects)::

    theta_k | .  ~ N(eta0 z_k / (eta0 + P_k), 1 / (eta0 + P_k)),  z = X'y
    tau_g   | .  ~ Gamma(a_g + (N - G)/2, b_g + sum_k D_k theta_gk^2 / 2)
    eta0    | .  ~ Gamma(c + Nn/2, d + |y - X theta|^2 / 2)

and for the MCAR Wishart update::

    Omega | S ~ Wishart(nu + N - G, scale=(R + S'QS)^-1)
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from ..design import theta_prior_precision
from ..models import McarSpec, SanovaSpec

__all__ = [
    "SanovaNormalKernel",
    "McarNormalKernel",
    "PoissonKernel",
    "SanovaPrior",
    "McarPrior",
    "wishart_bartlett",
]


def _stack_data(datasets, n_chains):
    Y = np.stack([d.y.ravel() for d in datasets for _ in range(n_chains)])
    return Y


def wishart_bartlett(scale: np.ndarray, chi_gammas: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Batched Wishart draws by Bartlett decomposition.

    ``scale`` is ``(B, n, n)`` (mean = df * scale), ``chi_gammas[:, i]`` are
    standard gamma variates with shape ``(df - i)/2`` and ``normals`` is
    ``(B, n, n)`` (only the strict lower triangle is used).
    """
    B, n, _ = scale.shape
    L = np.linalg.cholesky(scale)
    A = np.tril(normals, -1)
    idx = np.arange(n)
    A[:, idx, idx] = np.sqrt(2.0 * chi_gammas)
    LA = L @ A
    return LA @ np.swapaxes(LA, 1, 2)


class SanovaNormalKernel:
    """Gibbs sweeps for normal-error SANOVA: theta, then tau, then eta0."""

    def __init__(self, spec: SanovaSpec, datasets, n_chains: int, fixed: dict | None = None):
        self.spec = spec
        self.X = spec.design.X
        Y = _stack_data(datasets, n_chains)
        self.batch = Y.shape[0]
        self.z = Y @ self.X
        self.r0 = np.clip(np.sum(Y**2, axis=1) - np.sum(self.z**2, axis=1), 0.0, None)
        self.n_obs = Y.shape[1]
        self.Dm = spec.design.car.D_minus
        self.rank = spec.design.car.rank
        self.slices = [spec.design.blocks[b] for b in spec.design.smoothed_blocks]
        self.fixed = dict(fixed or {})

    def draw_plan(self):
        p = self.X.shape[1]
        return {
            "theta": ("normal", (p,)),
            "tau": ("gamma", self.spec.tau_shape + 0.5 * self.rank),
            "eta0": ("gamma", [self.spec.eta0_prior.shape + 0.5 * self.n_obs]),
        }

    def init_state(self, rngs):
        T = len(self.slices)
        tau = np.exp(np.stack([r.normal(0.0, 1.0, T) for r in rngs]))
        eta0 = np.exp(np.array([r.normal(0.0, 1.0) for r in rngs]))
        if "tau" in self.fixed:
            tau = np.broadcast_to(np.asarray(self.fixed["tau"], float), tau.shape).copy()
        if "eta0" in self.fixed:
            eta0 = np.full(self.batch, float(self.fixed["eta0"]))
        return {"theta": self.z.copy(), "tau": tau, "eta0": eta0}

    def sweep(self, state, rnd, it, cfg):
        tau, eta0 = state["tau"], state["eta0"]
        P = theta_prior_precision(self.spec.design, tau, self.spec.fixed_precision)
        prec = eta0[:, None] + P
        theta = eta0[:, None] * self.z / prec + rnd["theta"] / np.sqrt(prec)
        state["theta"] = theta
        if "tau" not in self.fixed:
            rate = np.empty_like(tau)
            for k, sl in enumerate(self.slices):
                rate[:, k] = self.spec.tau_rate[k] + 0.5 * np.sum(self.Dm * theta[:, sl] ** 2, axis=1)
            state["tau"] = rnd["tau"] / rate
        rss = np.sum((self.z - theta) ** 2, axis=1) + self.r0
        state["rss"] = rss
        if "eta0" not in self.fixed:
            state["eta0"] = rnd["eta0"][:, 0] / (self.spec.eta0_prior.rate + 0.5 * rss)

    def record(self, state):
        eta0 = state["eta0"]
        return {
            "theta": state["theta"].copy(),
            "tau": state["tau"].copy(),
            "eta0": eta0.copy(),
            "mu": state["theta"] @ self.X.T,
            "loglik": 0.5 * self.n_obs * np.log(eta0 / (2 * np.pi)) - 0.5 * eta0 * state["rss"],
        }


class McarNormalKernel:
    """Gibbs sweeps for the normal-error separable MCAR.

    (beta, S) are drawn jointly given (Omega, eta0) in the CAR eigenbasis,
    then Omega from its Wishart conditional, then eta0.
    """

    def __init__(self, spec: McarSpec, datasets, n_chains: int):
        self.spec = spec
        car = spec.car
        self.N, self.n = spec.dims
        self.V = car.V
        self.D = car.D
        Y = _stack_data(datasets, n_chains).reshape(-1, self.N, self.n)
        self.batch = Y.shape[0]
        self.Z = np.einsum("ik,bij->bkj", self.V, Y)
        self.df = spec.wishart_df + car.rank
        self.n_obs = self.N * self.n

    def draw_plan(self):
        n = self.n
        return {
            "psi": ("normal", (self.N, n)),
            "chi": ("gamma", 0.5 * (self.df - np.arange(n))),
            "wnorm": ("normal", (n, n)),
            "eta0": ("gamma", [self.spec.eta0_prior.shape + 0.5 * self.n_obs]),
        }

    def init_state(self, rngs):
        n = self.n
        Omega = np.stack([np.exp(r.normal(0.0, 1.0)) * np.eye(n) for r in rngs])
        eta0 = np.exp(np.array([r.normal(0.0, 1.0) for r in rngs]))
        return {"psi": self.Z.copy(), "Omega": Omega, "eta0": eta0}

    def sweep(self, state, rnd, it, cfg):
        Omega, eta0 = state["Omega"], state["eta0"]
        lam, U = np.linalg.eigh(Omega)
        Zt = self.Z @ U
        prec = eta0[:, None, None] + self.D[None, :, None] * lam[:, None, :]
        psit = eta0[:, None, None] * Zt / prec + rnd["psi"] / np.sqrt(prec)
        psi = psit @ np.swapaxes(U, 1, 2)
        state["psi"] = psi
        SS = np.einsum("bkj,k,bkl->bjl", psi, self.D, psi)
        scale = np.linalg.inv(self.spec.wishart_R[None] + SS)
        scale = 0.5 * (scale + np.swapaxes(scale, 1, 2))
        state["Omega"] = wishart_bartlett(scale, rnd["chi"], rnd["wnorm"])
        rss = np.sum((self.Z - psi) ** 2, axis=(1, 2))
        state["rss"] = rss
        state["eta0"] = rnd["eta0"][:, 0] / (self.spec.eta0_prior.rate + 0.5 * rss)

    def record(self, state):
        psi, eta0 = state["psi"], state["eta0"]
        mu = np.einsum("ik,bkj->bij", self.V, psi)
        S = np.einsum("ik,bkj->bij", self.V[:, :-1], psi[:, :-1])
        return {
            "beta": psi[:, -1, :] / np.sqrt(self.N),
            "S": S,
            "Omega": state["Omega"].copy(),
            "eta0": eta0.copy(),
            "mu": mu.reshape(self.batch, -1),
            "loglik": 0.5 * self.n_obs * np.log(eta0 / (2 * np.pi)) - 0.5 * eta0 * state["rss"],
        }


class SanovaPrior:
    """Diagonal CAR prior on design coefficients with Gamma smoothing precisions."""

    hyper_name = "tau"

    def __init__(self, spec: SanovaSpec):
        self.spec = spec
        self.design = spec.design
        self.Dm = spec.design.car.D_minus
        self.rank = spec.design.car.rank
        self.slices = [spec.design.blocks[b] for b in spec.design.smoothed_blocks]
        self.X = spec.design.X
        pos = np.flatnonzero(self.Dm > 0)
        self.scale_groups = [np.arange(sl.start, sl.stop)[pos] for sl in self.slices]

    def draw_plan(self):
        return {"tau": ("gamma", self.spec.tau_shape + 0.5 * self.rank)}

    def initial(self, rng):
        return np.exp(rng.normal(0.0, 0.5, len(self.slices)))

    def diag(self, tau):
        return theta_prior_precision(self.design, tau, self.spec.fixed_precision)

    def log_density(self, theta, tau):
        return -0.5 * np.sum(self.diag(tau) * theta**2, axis=1)

    def precision_matrix(self, tau):
        d = self.diag(tau)
        out = np.zeros(d.shape + (d.shape[-1],))
        idx = np.arange(d.shape[-1])
        out[:, idx, idx] = d
        return out

    def update(self, theta, rnd):
        tau = np.empty((theta.shape[0], len(self.slices)))
        for k, sl in enumerate(self.slices):
            rate = self.spec.tau_rate[k] + 0.5 * np.sum(self.Dm * theta[:, sl] ** 2, axis=1)
            tau[:, k] = rnd["tau"][:, k] / rate
        return tau

    def scale_hyper(self, tau, k, e):
        """Precision after scaling group ``k`` by ``exp(e)`` and the log prior ratio."""
        new = tau.copy()
        new[:, k] = tau[:, k] * np.exp(e)
        a, b = self.spec.tau_shape[k], self.spec.tau_rate[k]
        return new, a * e - b * (new[:, k] - tau[:, k])

    def record(self, theta, tau):
        return {"theta": theta.copy(), "tau": tau.copy()}


class McarPrior:
    """Separable MCAR prior in the CAR eigenbasis with a Wishart on Omega."""

    hyper_name = "Omega"

    def __init__(self, spec: McarSpec):
        self.spec = spec
        self.N, self.n = spec.dims
        self.V = spec.car.V
        self.D = spec.car.D
        self.df = spec.wishart_df + spec.car.rank
        self.X = np.kron(self.V, np.eye(self.n))
        pos = np.flatnonzero(self.D > 0)
        self.scale_groups = [pos * self.n + j for j in range(self.n)]

    def draw_plan(self):
        n = self.n
        return {
            "chi": ("gamma", 0.5 * (self.df - np.arange(n))),
            "wnorm": ("normal", (n, n)),
        }

    def initial(self, rng):
        return np.exp(rng.normal(0.0, 0.5)) * np.eye(self.n)

    def _psi(self, theta):
        return theta.reshape(theta.shape[0], self.N, self.n)

    def log_density(self, theta, Omega):
        psi = self._psi(theta)
        return -0.5 * np.einsum("bkj,bjl,bkl,k->b", psi, Omega, psi, self.D)

    def precision_matrix(self, Omega):
        return np.einsum("kl,bij->bkilj", np.diag(self.D), Omega).reshape(
            Omega.shape[0], self.N * self.n, self.N * self.n
        )

    def update(self, theta, rnd):
        psi = self._psi(theta)
        SS = np.einsum("bkj,k,bkl->bjl", psi, self.D, psi)
        scale = np.linalg.inv(self.spec.wishart_R[None] + SS)
        scale = 0.5 * (scale + np.swapaxes(scale, 1, 2))
        return wishart_bartlett(scale, rnd["chi"], rnd["wnorm"])

    def scale_hyper(self, Omega, k, e):
        """Scale row and column ``k`` of ``Omega`` by ``exp(e/2)``.

        Returns the new matrix and the Wishart log ratio including the
        Jacobian ``exp(e (n + 1) / 2)`` of the map on symmetric matrices.
        """
        lam = np.ones((Omega.shape[0], self.n))
        lam[:, k] = np.exp(0.5 * e)
        new = Omega * lam[:, :, None] * lam[:, None, :]
        R = self.spec.wishart_R
        d_tr = np.einsum("ij,bji->b", R, new - Omega)
        return new, 0.5 * self.spec.wishart_df * e - 0.5 * d_tr

    def record(self, theta, Omega):
        psi = self._psi(theta)
        S = np.einsum("ik,bkj->bij", self.V[:, :-1], psi[:, :-1])
        return {"beta": psi[:, -1, :] / np.sqrt(self.N), "S": S, "Omega": Omega.copy()}


class PoissonKernel:
    """Metropolis-within-Gibbs for Poisson log-linear models with CAR priors.

    Each sweep updates the coefficients chunk by chunk with random-walk
    proposals in the whitened basis, then draws the hyperparameters from
    their conjugate conditional.  A joint move follows: each smoothing
    precision is scaled by ``exp(e)`` (for MCAR: row and column ``j`` of
    ``Omega`` by ``exp(e/2)``) and its coefficient group (outcome ``j``)
    by ``exp(-e/2)``, which leaves the CAR quadratic form unchanged.
    The acceptance ratio reduces to the likelihood ratio times
    ``exp(a e - b (tau' - tau))`` (Gamma prior) or
    ``exp(nu e / 2 - tr(R (Omega' - Omega)) / 2)`` (Wishart prior).
    It breaks the slow coupling between a precision and the weakly
    identified effects it governs.
    """

    def __init__(self, prior, datasets, n_chains: int, chunk_size: int = 10, newton_steps: int = 20):
        self.prior = prior
        self.X = prior.X
        self.Y = _stack_data(datasets, n_chains)
        self.logE = np.stack(
            [np.log(d.E).ravel() for d in datasets for _ in range(n_chains)]
        )
        self.batch = self.Y.shape[0]
        self.const = gammaln(self.Y + 1.0).sum(axis=1)
        self.newton_steps = newton_steps
        self.p = self.X.shape[1]
        k = max(1, int(np.ceil(self.p / chunk_size)))
        self.chunks = np.array_split(np.arange(self.p), k)

    def draw_plan(self):
        plan = {"prop": ("normal", (self.p,)), "u": ("uniform", (len(self.chunks),))}
        g = len(self.prior.scale_groups)
        if g:
            plan["sprop"] = ("normal", (g,))
            plan["su"] = ("uniform", (g,))
        plan.update(self.prior.draw_plan())
        return plan

    def _loglik(self, eta):
        # overflow gives -inf, which simply rejects the proposal
        with np.errstate(over="ignore"):
            return np.sum(np.where(self.Y > 0, self.Y * eta, 0.0) - np.exp(eta), axis=1)

    def _hessian(self, theta, hyper):
        mu = np.exp(self.logE + theta @ self.X.T)
        H = np.einsum("ip,bi,iq->bpq", self.X, mu, self.X, optimize=True)
        return H + self.prior.precision_matrix(hyper)

    def _mode(self, hyper):
        v = np.log((self.Y + 0.5) / np.exp(self.logE))
        theta = v @ self.X
        for _ in range(self.newton_steps):
            eta = self.logE + theta @ self.X.T
            grad = (self.Y - np.exp(eta)) @ self.X
            P = self.prior.precision_matrix(hyper)
            grad -= np.einsum("bpq,bq->bp", P, theta)
            H = self._hessian(theta, hyper)
            step = np.linalg.solve(H, grad[..., None])[..., 0]
            deta = np.abs(step @ self.X.T).max(axis=1)
            step *= np.minimum(1.0, 2.0 / np.maximum(deta, 1e-300))[:, None]
            theta = theta + step
            if np.all(deta < 1e-10):
                break
        return theta

    def _precondition(self, state, theta, hyper):
        H = self._hessian(theta, hyper)
        H = 0.5 * (H + np.swapaxes(H, 1, 2))
        # curvature floor: caps proposal scales where the posterior is flat
        H = H + 1e-4 * np.eye(self.p)
        L = np.linalg.cholesky(H)
        M = np.swapaxes(np.linalg.inv(L), 1, 2)
        state["M"] = M
        state["XM"] = np.einsum("ip,bpq->biq", self.X, M, optimize=True)

    def init_state(self, rngs):
        hyper = np.stack([self.prior.initial(r) for r in rngs])
        mode = self._mode(hyper)
        state = {"hyper": hyper}
        self._precondition(state, mode, hyper)
        jitter = np.stack([r.standard_normal(self.p) for r in rngs])
        theta = mode + np.einsum("bpq,bq->bp", state["M"], jitter)
        state["theta"] = theta
        state["eta"] = self.logE + theta @ self.X.T
        c = np.array([len(ch) for ch in self.chunks])
        state["log_scale"] = np.tile(np.log(2.38 / np.sqrt(c)), (self.batch, 1))
        state["accepted"] = np.zeros((self.batch, len(self.chunks)))
        g = len(self.prior.scale_groups)
        state["s_log_scale"] = np.full((self.batch, g), np.log(0.5))
        state["s_accepted"] = np.zeros((self.batch, g))
        state["tries"] = 0
        state["win_theta"] = np.zeros_like(theta)
        state["win_hyper"] = np.zeros_like(hyper)
        state["win_n"] = 0
        return state

    def sweep(self, state, rnd, it, cfg):
        theta, eta, hyper = state["theta"], state["eta"], state["hyper"]
        ll = self._loglik(eta)
        lp = self.prior.log_density(theta, hyper)
        log_u = np.log(rnd["u"])
        adapting = it < cfg.burn_in
        gain = 1.0 / np.sqrt(1.0 + it / 10.0)
        for c, idx in enumerate(self.chunks):
            step = rnd["prop"][:, idx] * np.exp(state["log_scale"][:, c])[:, None]
            new_theta = theta + np.einsum("bpc,bc->bp", state["M"][:, :, idx], step)
            new_eta = eta + np.einsum("bic,bc->bi", state["XM"][:, :, idx], step)
            new_ll = self._loglik(new_eta)
            new_lp = self.prior.log_density(new_theta, hyper)
            ok = log_u[:, c] < (new_ll + new_lp) - (ll + lp)
            theta = np.where(ok[:, None], new_theta, theta)
            eta = np.where(ok[:, None], new_eta, eta)
            ll = np.where(ok, new_ll, ll)
            lp = np.where(ok, new_lp, lp)
            state["accepted"][:, c] += ok
            if adapting:
                state["log_scale"][:, c] += gain * (ok - cfg.target_accept)
        state["tries"] += 1
        state["theta"] = theta
        state["eta"] = self.logE + theta @ self.X.T
        state["hyper"] = self.prior.update(theta, rnd)
        if self.prior.scale_groups:
            self._scale_move(state, rnd, adapting, gain)
        if adapting:
            state["win_theta"] += state["theta"]
            state["win_hyper"] += state["hyper"]
            state["win_n"] += 1
            if (it + 1) % cfg.adapt_every == 0 and it + 1 <= cfg.burn_in:
                k = state["win_n"]
                self._precondition(state, state["win_theta"] / k, state["win_hyper"] / k)
                state["win_theta"][:] = 0
                state["win_hyper"][:] = 0
                state["win_n"] = 0
        if it + 1 == cfg.burn_in:
            state["accepted"][:] = 0
            state["s_accepted"][:] = 0
            state["tries"] = 0

    def _scale_move(self, state, rnd, adapting, gain):
        theta, eta, hyper = state["theta"], state["eta"], state["hyper"]
        ll = self._loglik(eta)
        for k, idx in enumerate(self.prior.scale_groups):
            e = rnd["sprop"][:, k] * np.exp(state["s_log_scale"][:, k])
            new_hyper, log_prior_ratio = self.prior.scale_hyper(hyper, k, e)
            shrink = np.expm1(-0.5 * e)
            new_eta = eta + shrink[:, None] * (theta[:, idx] @ self.X[:, idx].T)
            new_ll = self._loglik(new_eta)
            ok = np.log(rnd["su"][:, k]) < new_ll - ll + log_prior_ratio
            theta[:, idx] = np.where(ok[:, None], theta[:, idx] * (1.0 + shrink[:, None]), theta[:, idx])
            eta = np.where(ok[:, None], new_eta, eta)
            ll = np.where(ok, new_ll, ll)
            mask = ok.reshape((-1,) + (1,) * (hyper.ndim - 1))
            hyper = np.where(mask, new_hyper, hyper)
            state["s_accepted"][:, k] += ok
            if adapting:
                state["s_log_scale"][:, k] += gain * (ok - 0.44)
        state["theta"] = theta
        state["eta"] = self.logE + theta @ self.X.T
        state["hyper"] = hyper

    def record(self, state):
        out = self.prior.record(state["theta"], state["hyper"])
        out["mu"] = state["eta"] - self.logE
        out["loglik"] = self._loglik(state["eta"]) - self.const
        return out

    def acceptance(self, state):
        return state["accepted"] / max(state["tries"], 1)
