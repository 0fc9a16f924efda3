"""Model specifications, parameter states and log-densities.

Gamma distributions are shape-rate throughout, so ``Gamma(0.1, 0.1)`` has
mean 1 and variance 10.  ``Wishart(R, nu)`` follows the BUGS convention:
density proportional to ``|Omega|^((nu-n-1)/2) exp(-tr(R Omega)/2)`` with
``E(Omega) = nu R^-1``.

:func:`log_prior` returns kernels.  Flat priors contribute zero and the
intrinsic CAR terms drop their normalizing constants, which cancel in every
MCMC ratio and are not used by DIC.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import gammaln, multigammaln

from .design import SanovaDesign, theta_prior_precision
from .spatial import CarStructure

__all__ = [
    "ModelError",
    "GammaPrior",
    "Observations",
    "SanovaSpec",
    "McarSpec",
    "ChainState",
    "WISHART_PRESETS",
    "wishart_preset",
    "gamma_logpdf",
    "wishart_logpdf",
    "log_likelihood",
    "log_prior",
    "cell_loglik",
]

Likelihood = Literal["normal", "poisson"]


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, rate) prior on a precision."""

    shape: float = 0.1
    rate: float = 0.1

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise ModelError("gamma shape and rate must be positive")

    def logpdf(self, x) -> float:
        return gamma_logpdf(x, self.shape, self.rate)


def gamma_logpdf(x, shape: float, rate: float):
    x = np.asarray(x, dtype=float)
    return shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x


def wishart_logpdf(Omega: np.ndarray, R: np.ndarray, nu: float) -> float:
    """Log-density of ``Wishart(R, nu)`` in the ``E(Omega) = nu R^-1`` convention."""
    Omega = np.asarray(Omega, dtype=float)
    R = np.asarray(R, dtype=float)
    n = Omega.shape[0]
    _, logdet_O = np.linalg.slogdet(Omega)
    _, logdet_R = np.linalg.slogdet(R)
    return float(
        0.5 * (nu - n - 1) * logdet_O
        - 0.5 * np.trace(R @ Omega)
        + 0.5 * nu * logdet_R
        - 0.5 * nu * n * np.log(2.0)
        - multigammaln(0.5 * nu, n)
    )


@dataclass(frozen=True, eq=False)
class Observations:
    """Region-by-outcome data, ``y`` of shape ``(N, n)``.

    ``E`` holds Poisson offsets (expected counts) and is ``None`` for normal
    data.
    """

    y: np.ndarray
    E: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        object.__setattr__(self, "y", y)
        if not np.all(np.isfinite(y)):
            raise ModelError("observations must be finite")
        if self.E is not None:
            E = np.asarray(self.E, dtype=float).reshape(y.shape)
            if np.any(E <= 0) or not np.all(np.isfinite(E)):
                raise ModelError("expected counts E must be positive")
            object.__setattr__(self, "E", E)

    @property
    def shape(self) -> tuple[int, int]:
        return self.y.shape

    @property
    def log_offset(self) -> np.ndarray:
        return np.zeros_like(self.y) if self.E is None else np.log(self.E)

    def check_counts(self):
        if self.E is None:
            raise ModelError("poisson likelihood requires expected counts E")
        if np.any(self.y < 0) or np.any(self.y != np.round(self.y)):
            raise ModelError("counts must be non-negative integers")


@dataclass(frozen=True, eq=False)
class SanovaSpec:
    """Smoothed ANOVA with CAR-structured region and interaction effects.

    One smoothing precision per smoothed group: the region main effect and
    each interaction group.  Fixed effects (grand mean, outcome means) get
    a flat prior by default for normal data and ``N(0, 1e6)`` for Poisson.
    ``tau_prior`` may be a single :class:`GammaPrior` or one per group.
    """

    likelihood: Likelihood
    design: SanovaDesign
    tau_prior: GammaPrior | tuple[GammaPrior, ...] = GammaPrior()
    eta0_prior: GammaPrior = GammaPrior()
    fixed_effect_prior: Literal["flat", "normal"] | None = None
    fixed_variance: float = 1e6

    def __post_init__(self):
        if self.likelihood not in ("normal", "poisson"):
            raise ModelError(f"unknown likelihood {self.likelihood!r}")
        if self.fixed_effect_prior is None:
            default = "flat" if self.likelihood == "normal" else "normal"
            object.__setattr__(self, "fixed_effect_prior", default)
        priors = self.tau_prior
        if isinstance(priors, GammaPrior):
            priors = (priors,) * self.n_tau
        if len(priors) != self.n_tau:
            raise ModelError(f"need {self.n_tau} tau priors, got {len(priors)}")
        object.__setattr__(self, "tau_prior", tuple(priors))

    @property
    def n_tau(self) -> int:
        return len(self.design.smoothed_blocks)

    @property
    def fixed_precision(self) -> float:
        return 0.0 if self.fixed_effect_prior == "flat" else 1.0 / self.fixed_variance

    @property
    def tau_shape(self) -> np.ndarray:
        return np.array([p.shape for p in self.tau_prior])

    @property
    def tau_rate(self) -> np.ndarray:
        return np.array([p.rate for p in self.tau_prior])

    @property
    def dims(self) -> tuple[int, int]:
        return self.design.N, self.design.n


WISHART_PRESETS = {"0.002": 0.002, "1": 1.0, "200": 200.0}


def wishart_preset(name: str | float, n: int) -> np.ndarray:
    """``R = c I_n`` for the named scale ``c`` (``0.002``, ``1`` or ``200``)."""
    key = str(name).strip()
    if key.upper().startswith("MCAR-"):
        key = key[5:]
    try:
        c = WISHART_PRESETS[key] if key in WISHART_PRESETS else float(key)
    except ValueError as exc:
        raise ModelError(f"unknown Wishart preset {name!r}") from exc
    return c * np.eye(n)


@dataclass(frozen=True, eq=False)
class McarSpec:
    """Separable intrinsic multivariate CAR with outcome-specific intercepts.

    ``mu_ij = beta_j + S_ij`` with ``S`` centered per outcome, flat priors on
    ``beta`` and ``Omega ~ Wishart(R, nu)``.
    """

    likelihood: Likelihood
    car: CarStructure
    n_diseases: int
    wishart_R: np.ndarray = None
    wishart_df: float | None = None
    eta0_prior: GammaPrior = GammaPrior()

    def __post_init__(self):
        if self.likelihood not in ("normal", "poisson"):
            raise ModelError(f"unknown likelihood {self.likelihood!r}")
        n = self.n_diseases
        R = np.eye(n) if self.wishart_R is None else np.asarray(self.wishart_R, dtype=float)
        if R.shape != (n, n):
            raise ModelError("wishart_R must be n x n")
        if not np.allclose(R, R.T):
            raise ModelError("wishart_R must be symmetric")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError as exc:
            raise ModelError("wishart_R must be positive definite") from exc
        object.__setattr__(self, "wishart_R", R)
        nu = float(n) if self.wishart_df is None else float(self.wishart_df)
        if nu < n:
            raise ModelError("wishart_df must be at least n")
        object.__setattr__(self, "wishart_df", nu)

    @property
    def dims(self) -> tuple[int, int]:
        return self.car.N, self.n_diseases


@dataclass
class ChainState:
    """Current parameter values of one chain.

    SANOVA uses ``theta``, ``tau`` and (normal) ``eta0``; MCAR uses
    ``beta``, ``S``, ``Omega`` and (normal) ``eta0``.
    """

    params: dict = field(default_factory=dict)
    iteration: int = 0
    rng_state: dict | None = None

    def __getitem__(self, key):
        return self.params[key]

    def __contains__(self, key):
        return key in self.params


def linear_predictor(spec, state: ChainState) -> np.ndarray:
    """Region-by-outcome mean (normal) or log-relative risk (Poisson)."""
    N, n = spec.dims
    if isinstance(spec, SanovaSpec):
        return (spec.design.X @ np.asarray(state["theta"], dtype=float)).reshape(N, n)
    return np.asarray(state["beta"], dtype=float)[None, :] + np.asarray(state["S"], dtype=float)


def cell_loglik(likelihood: str, mean: np.ndarray, data: Observations, eta0=None) -> np.ndarray:
    """Per-cell log-likelihood, no constants dropped.

    ``mean`` is the normal mean or, for Poisson, the log-relative risk added
    to ``log E``.
    """
    y = data.y
    if likelihood == "normal":
        if eta0 is None or eta0 <= 0:
            raise ModelError("normal likelihood needs a positive eta0")
        return 0.5 * np.log(eta0 / (2 * np.pi)) - 0.5 * eta0 * (y - mean) ** 2
    data.check_counts()
    log_mu = data.log_offset + mean
    return y * log_mu - np.exp(log_mu) - gammaln(y + 1)


def log_likelihood(spec, state: ChainState, data: Observations) -> float:
    """Exact log-likelihood of ``data`` under ``state``."""
    if data.shape != spec.dims:
        raise ModelError(f"data shape {data.shape} does not match model {spec.dims}")
    eta0 = state.params.get("eta0")
    return float(cell_loglik(spec.likelihood, linear_predictor(spec, state), data, eta0).sum())


def _check_positive(name, value):
    value = np.asarray(value, dtype=float)
    if np.any(value <= 0) or not np.all(np.isfinite(value)):
        raise ModelError(f"{name} must be positive")


def log_prior(spec, state: ChainState) -> float:
    """Sum of prior log-kernels for ``state`` under ``spec``."""
    if isinstance(spec, SanovaSpec):
        return _sanova_log_prior(spec, state)
    if isinstance(spec, McarSpec):
        return _mcar_log_prior(spec, state)
    raise ModelError(f"unsupported spec {type(spec).__name__}")


def _sanova_log_prior(spec: SanovaSpec, state: ChainState) -> float:
    theta = np.asarray(state["theta"], dtype=float)
    tau = np.asarray(state["tau"], dtype=float)
    _check_positive("tau", tau)
    design = spec.design
    rank = design.car.rank
    lp = float(np.sum(gamma_logpdf(tau, spec.tau_shape, spec.tau_rate)))
    prec = theta_prior_precision(design, tau)
    lp += 0.5 * rank * float(np.sum(np.log(tau))) - 0.5 * float(np.sum(prec * theta**2))
    if spec.fixed_effect_prior == "normal":
        fixed = theta[design.fixed]
        v = spec.fixed_variance
        lp += float(np.sum(-0.5 * np.log(2 * np.pi * v) - 0.5 * fixed**2 / v))
    if spec.likelihood == "normal":
        _check_positive("eta0", state["eta0"])
        lp += float(spec.eta0_prior.logpdf(state["eta0"]))
    return lp


def _mcar_log_prior(spec: McarSpec, state: ChainState) -> float:
    S = np.asarray(state["S"], dtype=float)
    Omega = np.asarray(state["Omega"], dtype=float)
    try:
        np.linalg.cholesky(Omega)
    except np.linalg.LinAlgError as exc:
        raise ModelError("Omega must be positive definite") from exc
    car = spec.car
    _, logdet = np.linalg.slogdet(Omega)
    lp = 0.5 * car.rank * logdet - 0.5 * float(np.trace(Omega @ (S.T @ car.Q @ S)))
    lp += wishart_logpdf(Omega, spec.wishart_R, spec.wishart_df)
    if spec.likelihood == "normal":
        _check_positive("eta0", state["eta0"])
        lp += float(spec.eta0_prior.logpdf(state["eta0"]))
    return lp
