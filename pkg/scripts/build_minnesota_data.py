"""Regenerate the shipped Minnesota data files under src/sanova/data/.

Adjacency is derived from the US Census 2016 cartographic county boundaries
(1:500k) bundled with the ``plotly-geo`` package: two counties are neighbors
when their polygons share any boundary point (queen contiguity).

Counts are synthetic.  They are simulated from a Poisson SANOVA model so the
files behave like the real 1990-2000 three-cancer surveillance table, which is
not redistributable here.  Only Hennepin (population ~1.1M, counts
5294/119/439) and Faribault (population 16501, counts 110/7/13) carry the
reported values.  Populations of the 20 south-east counties are rounded
1990/2000 census averages; the other 67 counties get seeded log-normal draws.

Requires ``plotly-geo`` and ``pyshp`` (data-prep only, not package deps)::

    python scripts/build_minnesota_data.py
"""

from __future__ import annotations

import itertools
import os
from pathlib import Path

import numpy as np
import shapefile
from shapely.geometry import shape

import _plotly_geo

from sanova.design import build_design, make_contrasts
from sanova.spatial import RegionGraph, car_precision, count_islands, spectral_car
from sanova.io import write_adjacency, write_counts, ArealDataset

DATA = Path(__file__).resolve().parents[1] / "src" / "sanova" / "data"
DISEASES = ("lung", "larynx", "esophagus")

# 20 counties in the lower-right (south-east) corner of the state
SOUTHEAST = (
    "Hennepin", "Ramsey", "Washington", "Dakota", "Scott", "Carver",
    "Le Sueur", "Rice", "Goodhue", "Wabasha", "Winona", "Houston",
    "Fillmore", "Olmsted", "Dodge", "Steele", "Waseca", "Freeborn",
    "Mower", "Faribault",
)

# rounded mean of the 1990 and 2000 census counts
SOUTHEAST_POP = {
    "Hennepin": 1_088_000, "Ramsey": 498_000, "Washington": 173_500,
    "Dakota": 315_500, "Scott": 73_700, "Carver": 59_100,
    "Le Sueur": 24_300, "Rice": 52_900, "Goodhue": 42_400,
    "Wabasha": 20_700, "Winona": 48_900, "Houston": 19_100,
    "Fillmore": 20_900, "Olmsted": 115_400, "Dodge": 16_700,
    "Steele": 32_200, "Waseca": 18_800, "Freeborn": 32_800,
    "Mower": 38_000, "Faribault": 16_501,
}

REPORTED = {
    "Hennepin": (5294, 119, 439),
    "Faribault": (110, 7, 13),
}

# 11-year crude rates implied by the reported expected-count ranges
RATES = np.array([5275.0, 113.0, 449.0]) / 1_088_000


def county_polygons():
    base = os.path.join(
        os.path.dirname(_plotly_geo.__file__), "package_data", "cb_2016_us_county_500k"
    )
    reader = shapefile.Reader(base)
    items = [
        (sr.record["NAME"], shape(sr.shape.__geo_interface__))
        for sr in reader.iterShapeRecords()
        if sr.record["STATEFP"] == "27"
    ]
    items.sort()
    return [n for n, _ in items], [g for _, g in items]


def adjacency_pairs(geoms):
    return [
        (i, j)
        for i, j in itertools.combinations(range(len(geoms)), 2)
        if geoms[i].intersects(geoms[j])
    ]


def subgraph(names, pairs, keep):
    index = {names.index(k): new for new, k in enumerate(keep)}
    sub = [(index[i], index[j]) for i, j in pairs if i in index and j in index]
    return RegionGraph.from_pairs(len(keep), sub)


def simulate_counts(graph, pops, rng):
    car = spectral_car(car_precision(graph), count_islands(graph))
    design = build_design(car, make_contrasts("HA1"))
    n_fixed = 3
    width = graph.n_regions - 1
    theta = np.zeros(design.X.shape[1])
    # fixed effects: zero log-relative risk on average
    for block, tau in zip(range(3), (8.0, 30.0, 30.0)):
        sl = slice(n_fixed + block * width, n_fixed + (block + 1) * width)
        d = car.D[:width]
        theta[sl] = rng.standard_normal(width) / np.sqrt(tau * np.where(d > 0, d, 1.0))
    eta = (design.X @ theta).reshape(graph.n_regions, 3)
    expected = np.outer(pops, RATES)
    return rng.poisson(expected * np.exp(eta))


def main():
    rng = np.random.default_rng(20090101)
    names, geoms = county_polygons()
    pairs = adjacency_pairs(geoms)
    full = RegionGraph.from_pairs(len(names), pairs)

    pops = np.empty(len(names))
    other = [n for n in names if n not in SOUTHEAST_POP]
    draws = np.exp(rng.normal(np.log(18_000), 0.7, size=len(other))).round(-2)
    lookup = dict(zip(other, draws))
    lookup.update(SOUTHEAST_POP)
    pops = np.array([lookup[n] for n in names], dtype=float)

    counts = simulate_counts(full, pops, rng)
    for county, row in REPORTED.items():
        counts[names.index(county)] = row

    # the south-east totals fix the internal-standardization rates; absorb
    # the rounding slack in Ramsey so the reported E ranges are reproduced
    se_idx = [names.index(n) for n in SOUTHEAST]
    target = np.rint(RATES * pops[se_idx].sum()).astype(int)
    ramsey = names.index("Ramsey")
    counts[ramsey] += target - counts[se_idx].sum(axis=0)

    write_adjacency(DATA / "minnesota.adj", full, labels=names)
    write_counts(
        DATA / "minnesota_counts.csv",
        ArealDataset(
            region_ids=[str(i) for i in range(len(names))],
            diseases=DISEASES,
            counts=counts,
            populations=pops,
        ),
    )

    sub = subgraph(names, pairs, SOUTHEAST)
    write_adjacency(DATA / "mn20.adj", sub, labels=list(SOUTHEAST))
    write_counts(
        DATA / "mn20_counts.csv",
        ArealDataset(
            region_ids=[str(i) for i in range(len(SOUTHEAST))],
            diseases=DISEASES,
            counts=counts[se_idx],
            populations=pops[se_idx],
        ),
    )


if __name__ == "__main__":
    main()
