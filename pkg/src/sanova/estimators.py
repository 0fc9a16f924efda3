"""Estimator classes with ``fit`` / ``predict`` and scikit-learn parameter handling.

The region graph is a constructor parameter; ``fit`` takes the
region-by-outcome matrix ``Y`` (and expected counts ``E`` for Poisson
data).  ``predict`` returns posterior medians of the linear predictor.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .design import build_design, make_contrasts
from .metrics import fit_dic
from .models import GammaPrior, McarSpec, Observations, SanovaSpec, wishart_preset
from .samplers import RunConfig, sample
from .samplers.api import univariate_car_spec
from .spatial import RegionGraph, car_structure

__all__ = ["SANOVA", "MCAR", "UnivariateCAR"]


class _BayesBase(BaseEstimator):
    def _run_config(self) -> RunConfig:
        return RunConfig(
            n_chains=self.n_chains, n_iter=self.n_iter, burn_in=self.burn_in, seed=self.random_state
        )

    def _observations(self, Y, E):
        if not isinstance(self.graph, RegionGraph):
            raise TypeError("graph must be a RegionGraph")
        Y = check_array(Y, ensure_2d=False, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[0] != self.graph.n_regions:
            raise ValueError(f"Y has {Y.shape[0]} rows, graph has {self.graph.n_regions} regions")
        if self.likelihood == "poisson":
            if E is None:
                raise ValueError("poisson likelihood requires expected counts E")
            E = check_array(E, ensure_2d=False, dtype=float).reshape(Y.shape)
        return Observations(Y, E)

    def _store(self, spec, obs):
        self.spec_ = spec
        self.draws_ = sample(spec, obs, self._run_config())[0]
        self.n_regions_, self.n_outputs_ = obs.shape
        self._obs = obs
        return self

    def predict(self, X=None) -> np.ndarray:
        """Posterior median of the linear predictor, shape ``(N, n)``."""
        check_is_fitted(self, "draws_")
        return self.draws_.median("mu").reshape(self.n_regions_, self.n_outputs_)

    def predict_interval(self, level: float = 0.95) -> np.ndarray:
        """Equal-tailed posterior interval, shape ``(N, n, 2)``."""
        check_is_fitted(self, "draws_")
        a = (1 - level) / 2
        q = self.draws_.quantile("mu", [a, 1 - a])
        return np.moveaxis(q.reshape(2, self.n_regions_, self.n_outputs_), 0, -1)

    def dic(self) -> tuple[float, float, float]:
        """``(dbar, p_D, dic)`` on the training data."""
        check_is_fitted(self, "draws_")
        return fit_dic(self.draws_, self._obs, self.likelihood)

    def rhat(self) -> dict:
        check_is_fitted(self, "draws_")
        return self.draws_.rhat()


class SANOVA(_BayesBase):
    """Smoothed ANOVA with CAR-smoothed region and interaction effects.

    Parameters
    ----------
    graph : RegionGraph
    contrasts : str
        ``HA1``, ``HA2``, ``HAM``, ``HAM_printed`` or ``helmert``.
    likelihood : {"poisson", "normal"}
    interactions : bool
    tau_shape, tau_rate : float
        Gamma prior on every smoothing precision.
    n_chains, n_iter, burn_in : int
    random_state : int
    """

    def __init__(
        self,
        graph=None,
        contrasts="HA1",
        likelihood="poisson",
        interactions=True,
        tau_shape=0.1,
        tau_rate=0.1,
        n_chains=3,
        n_iter=4000,
        burn_in=1000,
        random_state=0,
    ):
        self.graph = graph
        self.contrasts = contrasts
        self.likelihood = likelihood
        self.interactions = interactions
        self.tau_shape = tau_shape
        self.tau_rate = tau_rate
        self.n_chains = n_chains
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.random_state = random_state

    def fit(self, Y, E=None):
        obs = self._observations(Y, E)
        n = obs.shape[1]
        H = make_contrasts(self.contrasts, n)
        design = build_design(car_structure(self.graph), H, self.interactions)
        spec = SanovaSpec(self.likelihood, design, tau_prior=GammaPrior(self.tau_shape, self.tau_rate))
        return self._store(spec, obs)


class MCAR(_BayesBase):
    """Separable multivariate intrinsic CAR with a Wishart between-outcome precision.

    ``wishart`` is a preset scale (``"0.002"``, ``"1"``, ``"200"``), a
    number ``c`` giving ``R = c I`` or an explicit matrix.
    """

    def __init__(
        self,
        graph=None,
        wishart="1",
        wishart_df=None,
        likelihood="poisson",
        n_chains=3,
        n_iter=4000,
        burn_in=1000,
        random_state=0,
    ):
        self.graph = graph
        self.wishart = wishart
        self.wishart_df = wishart_df
        self.likelihood = likelihood
        self.n_chains = n_chains
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.random_state = random_state

    def fit(self, Y, E=None):
        obs = self._observations(Y, E)
        n = obs.shape[1]
        w = self.wishart
        R = np.asarray(w, dtype=float) if np.ndim(w) == 2 else wishart_preset(w, n)
        spec = McarSpec(self.likelihood, car_structure(self.graph), n, wishart_R=R, wishart_df=self.wishart_df)
        return self._store(spec, obs)


class UnivariateCAR(_BayesBase):
    """Poisson intercept plus intrinsic CAR effects, ``tau ~ Gamma(a, a)``."""

    likelihood = "poisson"

    def __init__(self, graph=None, a=1.0, n_chains=3, n_iter=4000, burn_in=1000, random_state=0):
        self.graph = graph
        self.a = a
        self.n_chains = n_chains
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.random_state = random_state

    def fit(self, y, E=None):
        obs = self._observations(y, E)
        if obs.shape[1] != 1:
            raise ValueError("UnivariateCAR takes a single outcome column")
        return self._store(univariate_car_spec(self.graph, self.a), obs)
