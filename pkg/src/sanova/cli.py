"""Command-line interface.

Fits write ``draws/``, ``summary/`` and ``manifest.json`` under ``--out``;
``simulate`` writes ``metrics/`` tables.  Settings come from ``--config``
(``key = value`` lines) and are overridden by flags.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .design import build_design, load_contrasts, make_contrasts
from .io import (
    DataError,
    data_path,
    load_dataset,
    read_config,
    read_draws,
    write_draws,
    write_manifest,
    write_summary,
)
from .metrics import MetricsReport, amse, dic, mbias, pi_rate
from .models import GammaPrior, McarSpec, Observations, SanovaSpec, cell_loglik, wishart_preset
from .samplers import FULL, REDUCED, RunConfig, sample
from .samplers.api import univariate_car_spec
from .spatial import car_structure

log = logging.getLogger("sanova")

RUN_KEYS = {f.name for f in fields(RunConfig)}
PRESETS = {"full": FULL, "reduced": REDUCED}


class UsageError(Exception):
    pass


def _settings(args) -> dict:
    out = read_config(args.config) if getattr(args, "config", None) else {}
    for k, v in vars(args).items():
        if v is not None and k not in ("func", "config", "command"):
            out[k.replace("-", "_")] = v
    return out


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


def _run_config(s: dict) -> RunConfig:
    if "seed" not in s:
        raise UsageError("--seed is required for fits")
    base = PRESETS[s.get("preset", "full")]
    kw = {}
    for k in RUN_KEYS:
        if k in s:
            kw[k] = float(s[k]) if k == "target_accept" else int(s[k])
    try:
        return RunConfig(**{**asdict(base), **kw})
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _contrasts(name: str):
    p = Path(name)
    return load_contrasts(p) if p.exists() else make_contrasts(name)


def _gamma(s, prefix, default=(0.1, 0.1)) -> GammaPrior:
    return GammaPrior(float(s.get(f"{prefix}_shape", default[0])), float(s.get(f"{prefix}_rate", default[1])))


def _load(s: dict):
    for key in ("data", "adjacency"):
        if key not in s:
            raise UsageError(f"--{key} is required")
    data, graph = load_dataset(s["data"], s["adjacency"])
    return data, graph, car_structure(graph)


def _observations(s, data) -> tuple[str, Observations]:
    lik = s.get("likelihood", "poisson")
    if lik == "poisson":
        return lik, Observations(data.counts, data.expected_counts())
    if lik == "normal":
        return lik, Observations(np.log((data.counts + 0.5) / data.expected_counts()))
    raise UsageError(f"unknown likelihood {lik!r}")


def _finish_fit(args, s, name, draws, inputs, cfg):
    out = Path(s.get("out", "out"))
    (out / "draws").mkdir(parents=True, exist_ok=True)
    (out / "summary").mkdir(parents=True, exist_ok=True)
    write_draws(out / "draws" / f"{name}.csv", draws)
    rows = write_summary(out / "summary" / f"{name}.csv", draws)
    config = {k: v for k, v in s.items()}
    config["run"] = asdict(cfg)
    write_manifest(out / "manifest.json", config, cfg.seed, [data_path(p) for p in inputs])
    worst = max(r["rhat"] for r in rows)
    print(f"wrote {out / 'draws' / (name + '.csv')} ({draws.n_chains} chains x {draws.n_kept} draws)")
    print(f"max R-hat {worst:.4f}")
    return 0


def cmd_fit_sanova(args) -> int:
    s = _settings(args)
    cfg = _run_config(s)
    data, graph, car = _load(s)
    lik, obs = _observations(s, data)
    design = build_design(car, _contrasts(s.get("contrasts", "HA1")), _bool(s.get("interactions", True)))
    spec = SanovaSpec(
        lik,
        design,
        tau_prior=_gamma(s, "tau"),
        eta0_prior=_gamma(s, "eta0"),
        fixed_effect_prior=s.get("fixed_effect_prior"),
        fixed_variance=float(s.get("fixed_variance", 1e6)),
    )
    draws = sample(spec, obs, cfg)[0]
    return _finish_fit(args, s, "sanova", draws, [s["data"], s["adjacency"]], cfg)


def cmd_fit_mcar(args) -> int:
    s = _settings(args)
    cfg = _run_config(s)
    data, graph, car = _load(s)
    lik, obs = _observations(s, data)
    n = obs.shape[1]
    w = s.get("wishart", "1")
    R = np.loadtxt(w, ndmin=2) if Path(w).exists() else wishart_preset(w, n)
    spec = McarSpec(
        lik, car, n, wishart_R=R, wishart_df=float(s.get("wishart_df", n)), eta0_prior=_gamma(s, "eta0")
    )
    draws = sample(spec, obs, cfg)[0]
    return _finish_fit(args, s, "mcar", draws, [s["data"], s["adjacency"]], cfg)


def cmd_fit_car(args) -> int:
    s = _settings(args)
    cfg = _run_config(s)
    data, graph, car = _load(s)
    E = data.expected_counts()
    a = float(s.get("a", 1.0))
    spec = univariate_car_spec(graph, a)
    diseases = [s["disease"]] if "disease" in s else list(data.diseases)
    for d in diseases:
        if d not in data.diseases:
            raise UsageError(f"unknown disease {d!r}")
        j = data.diseases.index(d)
        obs = Observations(data.counts[:, j:j + 1], E[:, j:j + 1])
        draws = sample(spec, obs, cfg, keys=[(j,)])[0]
        _finish_fit(args, s, f"car_{d}", draws, [s["data"], s["adjacency"]], cfg)
    return 0


def cmd_simulate(args) -> int:
    from .simulation import CELLS, METHODS, run_tournament

    s = _settings(args)
    if "seed" not in s:
        raise UsageError("--seed is required")
    s.setdefault("preset", "reduced")
    cfg = _run_config(s)
    cells = list(CELLS) if s.get("cells", "all") == "all" else s["cells"].split(",")
    methods = list(METHODS) if s.get("methods", "all") == "all" else s["methods"].split(",")
    result = run_tournament(
        cells=cells, methods=methods, n_subjects=int(s.get("subjects", 100)), cfg=cfg, progress=print
    )
    out = Path(s.get("out", "out"))
    (out / "metrics").mkdir(parents=True, exist_ok=True)
    rep = result.report
    for metric, digits in (("amse", 2), ("amse_mcse", 3), ("pi_rate", 2)):
        (out / "metrics" / f"{metric}.txt").write_text(rep.table(metric, digits) + "\n")
    (out / "metrics" / "metrics.csv").write_text(rep.delimited())
    config = dict(s)
    config["run"] = asdict(cfg)
    config["failures"] = result.failures
    write_manifest(out / "manifest.json", config, cfg.seed, [data_path("mn20.adj"), data_path("mn20_counts.csv")])
    print(rep.table("amse"))
    print(rep.table("amse_mcse", 3))
    print(rep.table("pi_rate"))
    if result.failures:
        print(f"{len(result.failures)} failed batches", file=sys.stderr)
        return 1
    return 0


def _matrix(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def cmd_metrics(args) -> int:
    est, tru = _matrix(args.estimates), _matrix(args.truths)
    a, se = amse(est, tru)
    b = mbias(est, tru)
    print(f"amse {a:.6g} mcse {se:.6g}")
    print(f"mbias p2.5 {b[0]:.6g} p50 {b[1]:.6g} p97.5 {b[2]:.6g}")
    if args.lower and args.upper:
        iv = np.stack([_matrix(args.lower), _matrix(args.upper)], axis=-1)
        print(f"pi_rate {pi_rate(iv, tru):.6g}")
    return 0


def cmd_dic(args) -> int:
    s = _settings(args)
    data, graph, car = _load(s)
    lik, obs = _observations(s, data)
    header, rows = read_draws(s["draws"])
    cols = {h: i for i, h in enumerate(header)}
    mu_cols = [i for h, i in cols.items() if h.startswith("mu[")]
    if len(mu_cols) != obs.y.size or "loglik" not in cols:
        raise UsageError("draws file lacks mu columns or loglik")
    mu = rows[:, mu_cols].reshape(-1, *obs.shape)
    if lik == "poisson":
        ll_hat = cell_loglik("poisson", np.log(np.mean(np.exp(mu), axis=0)), obs).sum()
    else:
        ll_hat = cell_loglik("normal", mu.mean(axis=0), obs, float(rows[:, cols["eta0"]].mean())).sum()
    dbar, p_d, value = dic(rows[:, cols["loglik"]], ll_hat)
    rep = MetricsReport()
    rep.add_fit(Path(s["draws"]).stem, dbar, p_d)
    print(rep.dic_table())
    return 0


def cmd_check_design(args) -> int:
    graph_data = args.adjacency
    from .io import read_adjacency

    graph, _ = read_adjacency(data_path(graph_data))
    car = car_structure(graph)
    design = build_design(car, _contrasts(args.contrasts), not args.no_interactions)
    X = design.X
    resid = float(np.abs(X.T @ X - np.eye(X.shape[1])).max())
    print(f"regions {car.N} islands {car.G} outcomes {design.n}")
    print("block widths " + "/".join(str(w) for w in design.block_widths))
    print(f"orthonormality residual {resid:.3e}")
    return 0 if resid < 1e-10 else 1


def _fit_parser(sub, name, func, help_):
    p = sub.add_parser(name, help=help_)
    p.add_argument("--config")
    p.add_argument("--data", help="counts file")
    p.add_argument("--adjacency")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--likelihood", choices=["normal", "poisson"])
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--n-chains", dest="n_chains", type=int)
    p.add_argument("--n-iter", dest="n_iter", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thin", type=int)
    p.set_defaults(func=func)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sanova", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = _fit_parser(sub, "fit-sanova", cmd_fit_sanova, "fit smoothed ANOVA")
    p.add_argument("--contrasts", help="HA1, HA2, HAM, HAM_printed, helmert or a matrix file")
    p.add_argument("--no-interactions", dest="interactions", action="store_const", const=False)

    p = _fit_parser(sub, "fit-mcar", cmd_fit_mcar, "fit separable multivariate CAR")
    p.add_argument("--wishart", help="preset scale (0.002, 1, 200) or matrix file")

    p = _fit_parser(sub, "fit-car", cmd_fit_car, "fit univariate Poisson CAR per disease")
    p.add_argument("--disease")
    p.add_argument("--a", type=float, help="tau ~ Gamma(a, a)")

    p = sub.add_parser("simulate", help="run the simulation tournament")
    p.add_argument("--config")
    p.add_argument("--cells", help="comma list of Data1..Data6 or 'all'")
    p.add_argument("--methods", help="comma list of methods or 'all'")
    p.add_argument("--subjects", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="AMSE, MBIAS and PI rate from matrices")
    p.add_argument("--estimates", required=True)
    p.add_argument("--truths", required=True)
    p.add_argument("--lower")
    p.add_argument("--upper")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("dic", help="DIC from a draws file")
    p.add_argument("--config")
    p.add_argument("--draws", required=True)
    p.add_argument("--data")
    p.add_argument("--adjacency")
    p.add_argument("--likelihood", choices=["normal", "poisson"])
    p.set_defaults(func=cmd_dic)

    p = sub.add_parser("check-design", help="verify design orthonormality")
    p.add_argument("--adjacency", required=True)
    p.add_argument("--contrasts", default="HA1")
    p.add_argument("--no-interactions", action="store_true")
    p.set_defaults(func=cmd_check_design)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
