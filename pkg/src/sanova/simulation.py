"""Simulation tournament: six design cells, six fitting methods, paired subjects.

A subject is one draw of the standardized coefficients ``delta`` (and, for
normal data, the standardized noise ``gamma``).  Every method is applied to
the same subjects in every cell, so method comparisons are paired.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .design import SanovaDesign, build_design, make_contrasts
from .io import load_dataset
from .metrics import MetricsReport, amse, mbias, pi_rate
from .models import McarSpec, Observations, SanovaSpec, wishart_preset
from .samplers import REDUCED, RunConfig, sample
from .spatial import CarStructure, car_structure

__all__ = [
    "DesignCell",
    "CELLS",
    "Subject",
    "generate_subjects",
    "make_dataset",
    "SimulationSetting",
    "default_setting",
    "METHODS",
    "method_spec",
    "run_tournament",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DesignCell:
    """One experimental condition.

    For normal cells ``ratios`` is ``tau / eta0``; for Poisson cells it is
    ``tau`` itself and ``eta0`` is ``None``.
    """

    name: str
    likelihood: str
    eta0: float | None
    ratios: tuple[float, float, float]

    @property
    def tau(self) -> np.ndarray:
        r = np.asarray(self.ratios, dtype=float)
        return r * self.eta0 if self.likelihood == "normal" else r


CELLS = {
    c.name: c
    for c in [
        DesignCell("Data1", "normal", 1.0, (100.0, 100.0, 0.1)),
        DesignCell("Data2", "normal", 1.0, (0.1, 100.0, 0.1)),
        DesignCell("Data3", "normal", 10.0, (100.0, 100.0, 0.1)),
        DesignCell("Data4", "normal", 10.0, (0.1, 100.0, 0.1)),
        DesignCell("Data5", "poisson", None, (100.0, 100.0, 0.1)),
        DesignCell("Data6", "poisson", None, (0.1, 100.0, 0.1)),
    ]
}


@dataclass(frozen=True, eq=False)
class Subject:
    """Standardized draws for one replicate.

    ``delta[:n]`` are the unsmoothed effects (all 5); the remaining blocks
    have precision ``D^-`` per smoothed group.  ``gamma`` is ``None`` for
    Poisson subjects.
    """

    index: int
    delta: np.ndarray
    gamma: np.ndarray | None
    seed: int


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def generate_subjects(
    seed: int, count: int = 100, likelihood: str = "normal", car: CarStructure | None = None, n: int = 3
) -> list[Subject]:
    """Draw ``count`` subjects.

    The ``delta`` of subject ``s`` depends only on ``(seed, s)``, so normal
    and Poisson subjects share coefficients and differ only in ``gamma``.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if car is None:
        car = default_setting().car
    Dm = car.D_minus
    sd = np.tile(1.0 / np.sqrt(Dm), n)
    out = []
    for s in range(count):
        rng = _rng(seed, s, 0)
        delta = np.concatenate([np.full(n, 5.0), rng.standard_normal(sd.size) * sd])
        gamma = rng.standard_normal(car.N * n) if likelihood == "normal" else None
        out.append(Subject(index=s, delta=delta, gamma=gamma, seed=int(seed)))
    return out


def true_effects(subject: Subject, cell: DesignCell, design: SanovaDesign) -> np.ndarray:
    """Noise-free ``X_D diag(1, tau^-1/2 ...) delta`` as an ``(N, n)`` array."""
    scale = np.ones(design.X.shape[1])
    for k, name in enumerate(design.smoothed_blocks):
        scale[design.blocks[name]] = 1.0 / np.sqrt(cell.tau[k])
    return (design.X @ (scale * subject.delta)).reshape(design.N, design.n)


def make_dataset(
    subject: Subject, cell: DesignCell, design: SanovaDesign, E: np.ndarray | None = None
) -> tuple[Observations, np.ndarray]:
    """Observations for one subject in one cell, plus the true effects.

    Poisson counts use a generator keyed by subject and cell.
    """
    truth = true_effects(subject, cell, design)
    if cell.likelihood == "normal":
        if subject.gamma is None:
            raise ValueError("normal cells need subjects with gamma")
        y = truth + subject.gamma.reshape(truth.shape) / np.sqrt(cell.eta0)
        return Observations(y), truth
    if E is None:
        raise ValueError("poisson cells need expected counts")
    cell_idx = list(CELLS).index(cell.name) if cell.name in CELLS else 99
    rng = _rng(subject.seed, subject.index, 1 + cell_idx)
    y = rng.poisson(E * np.exp(truth))
    return Observations(y, E), truth


@dataclass(frozen=True, eq=False)
class SimulationSetting:
    """Region structure, true design and expected counts shared by all cells."""

    car: CarStructure
    design: SanovaDesign
    E: np.ndarray


def default_setting(adjacency="mn20.adj", counts="mn20_counts.csv") -> SimulationSetting:
    data, graph = load_dataset(counts, adjacency)
    car = car_structure(graph)
    return SimulationSetting(car, build_design(car, make_contrasts("HA1")), data.expected_counts())


METHODS = ("SANOVA-HA1", "SANOVA-HA2", "SANOVA-HAM", "MCAR-0.002", "MCAR-1", "MCAR-200")


def method_spec(method: str, likelihood: str, car: CarStructure, n: int = 3):
    """Model specification for a named tournament method."""
    if method.startswith("SANOVA-"):
        return SanovaSpec(likelihood, build_design(car, make_contrasts(method[7:])))
    if method.startswith("MCAR-"):
        return McarSpec(likelihood, car, n, wishart_R=wishart_preset(method, n))
    raise ValueError(f"unknown method {method!r}")


@dataclass
class TournamentResult:
    report: MetricsReport
    failures: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)
    truths: dict = field(default_factory=dict)


def run_tournament(
    cells: Sequence[str] = tuple(CELLS),
    methods: Sequence[str] = METHODS,
    n_subjects: int = 100,
    cfg: RunConfig = REDUCED,
    setting: SimulationSetting | None = None,
    batch_size: int = 25,
    progress: Callable[[str], None] | None = None,
) -> TournamentResult:
    """Fit every method to every subject in every cell and summarize.

    Estimates are posterior medians of the cell effects; intervals are
    equal-tailed 95%.  Task ``(cell, method, subject)`` draws from keys
    derived from ``cfg.seed`` and its indices alone, so results depend on
    batching only through floating-point rounding in batched linear algebra.  A failing batch is recorded and skipped.
    """
    setting = setting or default_setting()
    unknown = [c for c in cells if c not in CELLS]
    if unknown:
        raise ValueError(f"unknown cells {unknown}")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValueError(f"unknown methods {bad}")
    n = setting.design.n
    subjects = {
        lik: generate_subjects(cfg.seed, n_subjects, lik, setting.car, n)
        for lik in {CELLS[c].likelihood for c in cells}
    }
    result = TournamentResult(report=MetricsReport())
    for ci, cname in enumerate(cells):
        cell = CELLS[cname]
        cell_id = list(CELLS).index(cname)
        data = [make_dataset(s, cell, setting.design, setting.E) for s in subjects[cell.likelihood]]
        truths = np.stack([t.reshape(-1) for _, t in data])
        result.truths[cname] = truths
        for method in methods:
            mi = METHODS.index(method)
            spec = method_spec(method, cell.likelihood, setting.car, n)
            est = np.full(truths.shape, np.nan)
            lo = np.full(truths.shape, np.nan)
            hi = np.full(truths.shape, np.nan)
            t0 = time.perf_counter()
            for start in range(0, n_subjects, batch_size):
                idx = list(range(start, min(start + batch_size, n_subjects)))
                try:
                    fits = sample(
                        spec,
                        [data[s][0] for s in idx],
                        cfg,
                        keys=[(cell_id, mi, s) for s in idx],
                        keep=("mu",),
                    )
                except Exception as exc:  # recorded, tournament continues
                    log.warning("%s %s subjects %s failed: %s", cname, method, idx, exc)
                    result.failures.append((cname, method, tuple(idx), repr(exc)))
                    continue
                for s, fit in zip(idx, fits):
                    mu = fit.pooled("mu").reshape(fit.pooled("mu").shape[0], -1)
                    est[s] = np.median(mu, axis=0)
                    lo[s], hi[s] = np.quantile(mu, [0.025, 0.975], axis=0)
            ok = ~np.isnan(est).any(axis=1)
            result.estimates[(cname, method)] = est
            if ok.sum() >= 2:
                a, se = amse(est[ok], truths[ok])
                result.report.add_cell(
                    cname,
                    method,
                    amse=a,
                    amse_mcse=se,
                    mbias=mbias(est[ok], truths[ok]),
                    pi_rate=pi_rate(np.stack([lo[ok], hi[ok]], axis=-1), truths[ok]),
                    n_ok=int(ok.sum()),
                )
            msg = f"{cname} {method}: {time.perf_counter() - t0:.1f}s"
            log.info(msg)
            if progress:
                progress(msg)
    return result
