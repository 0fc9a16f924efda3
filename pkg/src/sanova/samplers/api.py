"""Public sampling entry points."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..design import ContrastMatrix, build_design
from ..models import GammaPrior, McarSpec, ModelError, Observations, SanovaSpec
from ..spatial import RegionGraph, car_structure
from .core import PosteriorDraws, RunConfig, SamplerError, chain_generators, run_chains
from .kernels import McarNormalKernel, McarPrior, PoissonKernel, SanovaNormalKernel, SanovaPrior

__all__ = [
    "sample",
    "gibbs_sanova_normal",
    "mh_sanova_poisson",
    "gibbs_mcar_normal",
    "mh_mcar_poisson",
    "fit_univariate_car",
    "univariate_car_spec",
]


def _as_observations(data) -> Observations:
    if isinstance(data, Observations):
        return data
    return Observations(np.asarray(data, dtype=float))


def _validate(spec, datasets):
    for d in datasets:
        if d.shape != spec.dims:
            raise ModelError(f"data shape {d.shape} does not match model {spec.dims}")
        if spec.likelihood == "poisson":
            d.check_counts()


def _kernel(spec, datasets, cfg, fixed):
    if isinstance(spec, SanovaSpec):
        if spec.likelihood == "normal":
            return SanovaNormalKernel(spec, datasets, cfg.n_chains, fixed=fixed)
        prior = SanovaPrior(spec)
    elif isinstance(spec, McarSpec):
        if fixed:
            raise SamplerError("fixed hyperparameters are only supported for SANOVA")
        if spec.likelihood == "normal":
            return McarNormalKernel(spec, datasets, cfg.n_chains)
        prior = McarPrior(spec)
    else:
        raise SamplerError(f"unsupported spec {type(spec).__name__}")
    if fixed:
        raise SamplerError("fixed hyperparameters are only supported for normal SANOVA")
    return PoissonKernel(prior, datasets, cfg.n_chains, chunk_size=cfg.chunk_size)


def sample(
    spec,
    datasets,
    cfg: RunConfig,
    keys: Sequence[Sequence[int]] | None = None,
    keep: Sequence[str] | None = None,
    fixed: dict | None = None,
) -> list[PosteriorDraws]:
    """Fit ``spec`` to each dataset, batching all chains together.

    Chains for dataset ``d`` draw from generators keyed by ``keys[d]``
    under ``cfg.seed``; by default a lone dataset uses the empty key and
    several datasets use ``(d,)``.  ``keep`` limits which quantities are
    stored.
    """
    if isinstance(datasets, (Observations, np.ndarray)):
        datasets = [datasets]
    datasets = [_as_observations(d) for d in datasets]
    _validate(spec, datasets)
    if keys is None:
        keys = [()] if len(datasets) == 1 else [(d,) for d in range(len(datasets))]
    if len(keys) != len(datasets):
        raise SamplerError("need one key per dataset")
    rngs = [g for key in keys for g in chain_generators(cfg.seed, cfg.n_chains, key)]
    kernel = _kernel(spec, datasets, cfg, fixed)
    records = run_chains(kernel, rngs, cfg, keep=keep)

    accept = None
    if isinstance(kernel, PoissonKernel):
        accept = kernel.acceptance(kernel.final_state)
    out = []
    m = cfg.n_chains
    for d in range(len(datasets)):
        sl = slice(d * m, (d + 1) * m)
        samples = {k: v[sl] for k, v in records.items() if k != "loglik"}
        info = {
            "kernel": type(kernel).__name__,
            "likelihood": spec.likelihood,
            "config": cfg,
        }
        if accept is not None:
            info["acceptance"] = accept[sl]
        out.append(PosteriorDraws(samples=samples, loglik=records["loglik"][sl], info=info))
    return out


def _require(spec, cls, likelihood):
    if not isinstance(spec, cls) or spec.likelihood != likelihood:
        raise SamplerError(f"expected a {likelihood} {cls.__name__}")


def gibbs_sanova_normal(spec: SanovaSpec, data, cfg: RunConfig, fixed: dict | None = None) -> PosteriorDraws:
    """Gibbs sampler for normal-error SANOVA (order: theta, tau, eta0).

    ``fixed`` may pin ``tau`` and/or ``eta0`` at given values.
    """
    _require(spec, SanovaSpec, "normal")
    return sample(spec, data, cfg, fixed=fixed)[0]


def mh_sanova_poisson(spec: SanovaSpec, data: Observations, cfg: RunConfig) -> PosteriorDraws:
    _require(spec, SanovaSpec, "poisson")
    return sample(spec, data, cfg)[0]


def gibbs_mcar_normal(spec: McarSpec, data, cfg: RunConfig) -> PosteriorDraws:
    _require(spec, McarSpec, "normal")
    return sample(spec, data, cfg)[0]


def mh_mcar_poisson(spec: McarSpec, data: Observations, cfg: RunConfig) -> PosteriorDraws:
    _require(spec, McarSpec, "poisson")
    return sample(spec, data, cfg)[0]


def univariate_car_spec(graph: RegionGraph, a: float, likelihood: str = "poisson") -> SanovaSpec:
    """Intercept plus intrinsic CAR effects with ``tau ~ Gamma(a, a)``."""
    design = build_design(car_structure(graph), ContrastMatrix(np.ones((1, 1)), "single"))
    return SanovaSpec(likelihood, design, tau_prior=GammaPrior(a, a))


def fit_univariate_car(
    graph: RegionGraph,
    counts,
    expected,
    a: float,
    cfg: RunConfig,
) -> PosteriorDraws:
    """Poisson CAR model for one outcome column with ``tau ~ Gamma(a, a)``."""
    counts = np.asarray(counts, dtype=float)
    if counts.ndim == 2:
        if counts.shape[1] != 1:
            raise ModelError("fit_univariate_car takes a single outcome column")
        counts = counts[:, 0]
    data = Observations(counts[:, None], np.asarray(expected, dtype=float).reshape(-1, 1))
    return sample(univariate_car_spec(graph, a), data, cfg)[0]
