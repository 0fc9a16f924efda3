"""Run configuration, per-chain random streams, the batched chain driver and
posterior draw containers.

Every chain owns a generator spawned from the master seed and consumes a
fixed number of variates per sweep.  Kernels are vectorized over a batch of
chains (possibly fitting different datasets), and because randomness is
drawn per chain, a chain's output does not depend on which batch it ran in.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

__all__ = [
    "RunConfig",
    "FULL",
    "REDUCED",
    "PosteriorDraws",
    "chain_generators",
    "run_chains",
    "SamplerError",
]


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """MCMC run settings.

    ``burn_in`` sweeps are discarded; proposal adaptation (Poisson models)
    happens only during burn-in and is frozen afterwards.
    """

    n_chains: int = 3
    n_iter: int = 10_000
    burn_in: int = 2_000
    thin: int = 1
    seed: int = 0
    adapt_every: int = 100
    chunk_size: int = 10
    target_accept: float = 0.3

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be positive")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")

    @property
    def n_kept(self) -> int:
        return len(range(self.burn_in, self.n_iter, self.thin))

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed))


FULL = RunConfig(n_chains=3, n_iter=10_000, burn_in=2_000)
REDUCED = RunConfig(n_chains=3, n_iter=4_000, burn_in=1_000)


def chain_generators(seed, n_chains: int, key: Sequence[int] = ()) -> list[np.random.Generator]:
    """Independent per-chain generators derived from ``seed`` and a task key."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(n_chains)]


@dataclass
class PosteriorDraws:
    """Kept draws for one fit.

    ``samples[name]`` has shape ``(n_chains, n_kept, *param_shape)``;
    ``loglik`` holds the full-data log-likelihood of every kept draw.
    ``mu`` is always present: the region-by-outcome linear predictor
    (normal mean, or Poisson log-relative risk).
    """

    samples: dict
    loglik: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, arr in self.samples.items():
            if not np.all(np.isfinite(arr)):
                raise SamplerError(f"non-finite draws for {name}")

    @property
    def n_chains(self) -> int:
        return self.loglik.shape[0]

    @property
    def n_kept(self) -> int:
        return self.loglik.shape[1]

    def __getitem__(self, name) -> np.ndarray:
        return self.samples[name]

    def pooled(self, name) -> np.ndarray:
        """Draws of ``name`` with chains concatenated: ``(chains*kept, ...)``."""
        arr = self.samples[name]
        return arr.reshape((-1,) + arr.shape[2:])

    def median(self, name) -> np.ndarray:
        return np.median(self.pooled(name), axis=0)

    def mean(self, name) -> np.ndarray:
        return self.pooled(name).mean(axis=0)

    def quantile(self, name, q) -> np.ndarray:
        return np.quantile(self.pooled(name), q, axis=0)

    def columns(self) -> list[tuple[str, np.ndarray]]:
        """Flattened ``(column name, (chains, kept))`` pairs, loglik last."""
        out = []
        for name, arr in self.samples.items():
            shape = arr.shape[2:]
            if not shape:
                out.append((name, arr))
                continue
            for idx in np.ndindex(*shape):
                label = name + "".join(f"[{i}]" for i in idx)
                out.append((label, arr[(slice(None), slice(None)) + idx]))
        out.append(("loglik", self.loglik))
        return out

    def rhat(self) -> dict:
        from .diagnostics import gelman_rubin

        return gelman_rubin(self)


def run_chains(
    kernel,
    rngs: list[np.random.Generator],
    cfg: RunConfig,
    keep: Sequence[str] | None = None,
    block: int = 250,
):
    """Drive a batched kernel for ``cfg.n_iter`` sweeps.

    ``rngs`` holds one generator per batch member.  Returns a dict of kept
    records, each ``(batch, n_kept, ...)``, optionally restricted to the
    names in ``keep`` (the log-likelihood is always kept).  The final state
    is left on ``kernel.final_state``.
    """
    if len(rngs) != kernel.batch:
        raise SamplerError("need one generator per chain in the batch")
    state = kernel.init_state(rngs)
    plan = kernel.draw_plan()
    kept_idx = set(range(cfg.burn_in, cfg.n_iter, cfg.thin))
    records: dict[str, list] = {}
    it = 0
    while it < cfg.n_iter:
        k = min(block, cfg.n_iter - it)
        rnd = _draw_block(plan, rngs, k)
        for t in range(k):
            step = {name: arr[:, t] for name, arr in rnd.items()}
            kernel.sweep(state, step, it, cfg)
            if it in kept_idx:
                for name, val in kernel.record(state).items():
                    if keep is not None and name not in keep and name != "loglik":
                        continue
                    records.setdefault(name, []).append(val)
            it += 1
    kernel.final_state = state
    return {name: np.stack(vals, axis=1) for name, vals in records.items()}


def _draw_block(plan: dict, rngs, k: int) -> dict:
    out = {}
    for name, (kind, arg) in plan.items():
        per_chain = []
        for rng in rngs:
            if kind == "normal":
                per_chain.append(rng.standard_normal((k,) + tuple(arg)))
            elif kind == "uniform":
                per_chain.append(rng.random((k,) + tuple(arg)))
            elif kind == "gamma":
                shapes = np.asarray(arg, dtype=float)
                per_chain.append(rng.standard_gamma(shapes, size=(k,) + shapes.shape))
            else:
                raise SamplerError(f"unknown variate kind {kind!r}")
        out[name] = np.stack(per_chain)
    return out
