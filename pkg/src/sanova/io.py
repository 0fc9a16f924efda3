"""Line-oriented file formats, dataset loading and expected counts.

Adjacency files hold one region per line, ``id: neighbor ids``, 0-based,
with ``#`` comments (the shipped files put county names in trailing
comments).  Count files are comma-delimited with header
``region,disease,count,population`` and an optional ``expected`` column.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import os
import platform
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .spatial import RegionGraph

__all__ = [
    "DataError",
    "ArealDataset",
    "internal_standardization",
    "read_adjacency",
    "write_adjacency",
    "read_counts",
    "write_counts",
    "load_dataset",
    "data_path",
    "write_draws",
    "read_draws",
    "write_summary",
    "draws_summary",
    "write_manifest",
    "file_checksum",
    "read_config",
    "DATA_ENV",
]

DATA_ENV = "SANOVA_DATA_DIR"
COUNT_HEADER = ("region", "disease", "count", "population")


class DataError(ValueError):
    """Malformed or inconsistent input file."""


class IdMismatchError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class ArealDataset:
    """Counts ``O_ij`` and populations ``P_i`` for ``N`` regions, ``n`` diseases."""

    region_ids: Sequence[str]
    diseases: Sequence[str]
    counts: np.ndarray
    populations: np.ndarray
    expected: np.ndarray | None = None
    labels: Sequence[str] | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        pops = np.asarray(self.populations, dtype=float)
        N, n = len(self.region_ids), len(self.diseases)
        if counts.shape != (N, n):
            raise DataError(f"counts shape {counts.shape} != ({N}, {n})")
        if pops.shape != (N,):
            raise DataError("one population per region required")
        if np.any(pops <= 0):
            raise DataError("populations must be positive")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise DataError("counts must be non-negative integers")
        object.__setattr__(self, "counts", counts.astype(np.int64))
        object.__setattr__(self, "populations", pops)
        object.__setattr__(self, "region_ids", tuple(str(r) for r in self.region_ids))
        object.__setattr__(self, "diseases", tuple(self.diseases))
        if self.expected is not None:
            E = np.asarray(self.expected, dtype=float)
            if E.shape != (N, n) or np.any(E <= 0):
                raise DataError("expected counts must be positive with shape (N, n)")
            object.__setattr__(self, "expected", E)

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def expected_counts(self) -> np.ndarray:
        """Supplied ``E`` if present, otherwise internal standardization."""
        return self.expected if self.expected is not None else internal_standardization(self)


def internal_standardization(data: ArealDataset) -> np.ndarray:
    """``E_ij = P_i * sum_i O_ij / sum_i P_i``."""
    totals = data.counts.sum(axis=0).astype(float)
    if np.any(totals == 0):
        bad = [d for d, t in zip(data.diseases, totals) if t == 0]
        raise DataError(f"zero total count for disease(s) {bad}: rates undefined")
    P = data.populations
    return np.outer(P, totals / P.sum())


def _strip(line: str) -> tuple[str, str]:
    body, _, comment = line.partition("#")
    return body.strip(), comment.strip()


def read_adjacency(path) -> tuple[RegionGraph, list[str]]:
    """Parse an adjacency file; returns the graph and per-region labels.

    Neighbor lists missing a reverse entry are symmetrized with a warning.
    """
    path = Path(path)
    entries: dict[int, list[int]] = {}
    labels: dict[int, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        body, comment = _strip(raw)
        if not body:
            continue
        head, sep, tail = body.partition(":")
        if not sep:
            raise DataError(f"{path}:{lineno}: expected 'id: neighbors'")
        try:
            rid = int(head)
            nbrs = [int(t) for t in tail.split()]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-integer region id") from exc
        if rid in entries:
            raise DataError(f"{path}:{lineno}: region {rid} listed twice")
        entries[rid] = nbrs
        labels[rid] = comment
    N = len(entries)
    if sorted(entries) != list(range(N)):
        raise DataError(f"{path}: region ids must be 0..{N - 1}")
    graph = RegionGraph.from_neighbor_lists([entries[i] for i in range(N)])
    return graph, [labels[i] for i in range(N)]


def write_adjacency(path, graph: RegionGraph, labels: Sequence[str] | None = None) -> None:
    lines = [f"# {graph.n_regions} regions; line format 'id: neighbor ids' (0-based)"]
    for i, nbrs in enumerate(graph.neighbors):
        line = f"{i}: " + " ".join(str(j) for j in nbrs)
        if labels is not None and labels[i]:
            line += f"  # {labels[i]}"
        lines.append(line.rstrip())
    Path(path).write_text("\n".join(lines) + "\n")


def read_counts(path, region_order: Sequence[str] | None = None) -> ArealDataset:
    """Parse a long-format count file.

    Regions follow ``region_order`` when given (ids must match exactly),
    otherwise order of first appearance; diseases follow first appearance.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(row for row in fh if not row.lstrip().startswith("#"))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration as exc:
            raise DataError(f"{path}: empty file") from exc
        if tuple(header[:4]) != COUNT_HEADER or header[4:] not in ([], ["expected"]):
            raise DataError(f"{path}: header must be {','.join(COUNT_HEADER)}[,expected]")
        has_E = len(header) == 5
        cells: dict[tuple[str, str], tuple[int, float | None]] = {}
        pops: dict[str, float] = {}
        regions: list[str] = []
        diseases: list[str] = []
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields")
            region, disease = row[0].strip(), row[1].strip()
            try:
                count = float(row[2])
                pop = float(row[3])
                E = float(row[4]) if has_E else None
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed number") from exc
            if count < 0:
                raise DataError(f"{path}:{lineno}: negative count")
            if count != int(count):
                raise DataError(f"{path}:{lineno}: non-integer count")
            if (region, disease) in cells:
                raise DataError(f"{path}:{lineno}: duplicate ({region}, {disease})")
            if region in pops and pops[region] != pop:
                raise DataError(f"{path}:{lineno}: inconsistent population for {region}")
            if region not in pops:
                regions.append(region)
                pops[region] = pop
            if disease not in diseases:
                diseases.append(disease)
            cells[(region, disease)] = (int(count), E)

    if region_order is not None:
        order = [str(r) for r in region_order]
        missing_adj = sorted(set(regions) - set(order))
        missing_counts = sorted(set(order) - set(regions))
        if missing_adj or missing_counts:
            raise IdMismatchError(
                f"region ids differ: only in counts {missing_adj[:5]}, "
                f"only in adjacency {missing_counts[:5]}"
            )
        regions = order
    counts = np.zeros((len(regions), len(diseases)), dtype=np.int64)
    E = np.zeros(counts.shape) if has_E else None
    for i, r in enumerate(regions):
        for j, d in enumerate(diseases):
            if (r, d) not in cells:
                raise DataError(f"{path}: missing row for ({r}, {d})")
            counts[i, j], e = cells[(r, d)]
            if has_E:
                E[i, j] = e
    return ArealDataset(
        region_ids=regions,
        diseases=diseases,
        counts=counts,
        populations=np.array([pops[r] for r in regions]),
        expected=E,
    )


def _num(x: float) -> str:
    return repr(float(x)) if x != int(x) else str(int(x))


def write_counts(path, data: ArealDataset) -> None:
    header = list(COUNT_HEADER) + (["expected"] if data.expected is not None else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i, r in enumerate(data.region_ids):
        for j, d in enumerate(data.diseases):
            row = [r, d, int(data.counts[i, j]), _num(data.populations[i])]
            if data.expected is not None:
                row.append(repr(float(data.expected[i, j])))
            w.writerow(row)
    Path(path).write_text(buf.getvalue())


def data_path(name) -> Path:
    """Resolve a data file: as given, then ``$SANOVA_DATA_DIR``, then shipped data."""
    p = Path(name)
    if p.exists():
        return p
    env = os.environ.get(DATA_ENV)
    if env and (Path(env) / p).exists():
        return Path(env) / p
    shipped = resources.files("sanova") / "data" / p.name
    if shipped.is_file():
        return Path(str(shipped))
    raise FileNotFoundError(name)


def load_dataset(counts_path, adjacency_path) -> tuple[ArealDataset, RegionGraph]:
    """Load counts and adjacency and check they describe the same regions."""
    graph, labels = read_adjacency(data_path(adjacency_path))
    ids = [str(i) for i in range(graph.n_regions)]
    data = read_counts(data_path(counts_path), region_order=ids)
    data = ArealDataset(
        region_ids=data.region_ids,
        diseases=data.diseases,
        counts=data.counts,
        populations=data.populations,
        expected=data.expected,
        labels=labels,
    )
    return data, graph


# ---------------------------------------------------------------- draws


def write_draws(path, draws) -> None:
    """Columnar text: ``chain,iter,<parameters>...,loglik``; one row per draw."""
    cols = draws.columns()
    names = ["chain", "iter"] + [c for c, _ in cols]
    stacked = np.stack([arr for _, arr in cols], axis=-1)
    lines = [",".join(names)]
    for c in range(draws.n_chains):
        for t in range(draws.n_kept):
            vals = ",".join(repr(float(v)) for v in stacked[c, t])
            lines.append(f"{c},{t},{vals}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_draws(path) -> tuple[list[str], np.ndarray]:
    """Header and ``(rows, columns)`` array of a draws file."""
    text = Path(path).read_text().splitlines()
    header = text[0].split(",")
    rows = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    return header, rows


def draws_summary(draws) -> list[dict]:
    from .samplers.diagnostics import potential_scale_reduction

    out = []
    for name, arr in draws.columns():
        flat = arr.reshape(-1)
        q = np.quantile(flat, [0.025, 0.5, 0.975])
        rhat = float(potential_scale_reduction(arr)) if arr.shape[0] > 1 else float("nan")
        out.append(
            {"parameter": name, "median": q[1], "q2.5": q[0], "q97.5": q[2], "rhat": rhat}
        )
    return out


def write_summary(path, draws) -> list[dict]:
    rows = draws_summary(draws)
    lines = ["parameter,median,q2.5,q97.5,rhat"]
    for r in rows:
        lines.append(
            f"{r['parameter']},{r['median']!r},{r['q2.5']!r},{r['q97.5']!r},{r['rhat']!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
    return rows


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, config: dict, seed: int, inputs: Sequence = ()) -> dict:
    """JSON run manifest: configuration, seed, input checksums, versions."""
    import scipy

    from . import __version__

    manifest = {
        "seed": int(seed),
        "config": config,
        "inputs": {str(p): file_checksum(p) for p in inputs},
        "versions": {
            "sanova": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return manifest


def read_config(path) -> dict:
    """Plain ``key = value`` file (``#`` comments) as a dict of strings."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + Path(path).read_text())
    except configparser.Error as exc:
        raise DataError(f"{path}: {exc}") from exc
    return dict(parser["run"])
