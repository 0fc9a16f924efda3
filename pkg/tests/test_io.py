import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sanova.io import (
    ArealDataset,
    DataError,
    IdMismatchError,
    internal_standardization,
    load_dataset,
    read_adjacency,
    read_config,
    read_counts,
    write_adjacency,
    write_counts,
    write_manifest,
)
from sanova.spatial import build_graph

HEADER = "region,disease,count,population\n"


def _toy():
    return ArealDataset(["0", "1"], ["a", "b"], [[3, 0], [5, 2]], [100.0, 250.5])


def test_toy_round_trip_bit_identical(tmp_path):
    data, graph = _toy(), build_graph(2, [(0, 1)])
    write_counts(tmp_path / "c.csv", data)
    write_adjacency(tmp_path / "g.adj", graph, ["west", "east"])
    d2, g2 = load_dataset(tmp_path / "c.csv", tmp_path / "g.adj")
    assert np.array_equal(d2.counts, data.counts)
    assert np.array_equal(d2.populations, data.populations)
    assert g2.neighbors == graph.neighbors and list(d2.labels) == ["west", "east"]
    write_counts(tmp_path / "c2.csv", d2)
    write_adjacency(tmp_path / "g2.adj", g2, d2.labels)
    assert (tmp_path / "c.csv").read_bytes() == (tmp_path / "c2.csv").read_bytes()
    assert (tmp_path / "g.adj").read_bytes() == (tmp_path / "g2.adj").read_bytes()


def test_expected_column_round_trip(tmp_path):
    d = ArealDataset(["0"], ["a"], [[4]], [10.0], expected=[[1.0 / 3]])
    write_counts(tmp_path / "c.csv", d)
    assert read_counts(tmp_path / "c.csv").expected[0, 0] == 1.0 / 3


def test_id_mismatch(tmp_path):
    (tmp_path / "c.csv").write_text(HEADER + "0,a,1,10\n1,a,1,10\n2,a,1,10\n")
    write_adjacency(tmp_path / "g.adj", build_graph(2, [(0, 1)]))
    with pytest.raises(IdMismatchError):
        load_dataset(tmp_path / "c.csv", tmp_path / "g.adj")


@pytest.mark.parametrize(
    "body,msg",
    [
        ("0,a,1,10\n0,a,2,10\n", "duplicate"),
        ("0,a,-1,10\n", "negative"),
        ("0,a,x,10\n", "malformed"),
        ("0,a,1.5,10\n", "non-integer"),
        ("0,a,1,10\n0,b,1,11\n", "inconsistent population"),
        ("0,a,1,10\n1,b,1,10\n", "missing row"),
        ("0,a,1\n", "fields"),
    ],
)
def test_count_file_errors(tmp_path, body, msg):
    p = tmp_path / "c.csv"
    p.write_text(HEADER + body)
    with pytest.raises(DataError, match=msg):
        read_counts(p)


def test_distinct_error_types(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("region,count\n")
    with pytest.raises(DataError, match="header"):
        read_counts(p)
    assert not issubclass(DataError, IdMismatchError)


def test_adjacency_errors(tmp_path):
    p = tmp_path / "g.adj"
    p.write_text("0: 1\n2: 0\n")
    with pytest.raises(DataError, match="0..1"):
        read_adjacency(p)
    p.write_text("0 1\n")
    with pytest.raises(DataError):
        read_adjacency(p)


def test_asymmetric_adjacency_warns(tmp_path):
    p = tmp_path / "g.adj"
    p.write_text("0: 1\n1:\n")
    with pytest.warns(UserWarning):
        g, _ = read_adjacency(p)
    assert g.neighbors == ((1,), (0,))


def test_standardization_equal_populations():
    d = ArealDataset(["0", "1"], ["a"], [[2], [4]], [5.0, 5.0])
    np.testing.assert_array_equal(internal_standardization(d), [[3.0], [3.0]])


def test_standardization_single_region():
    d = ArealDataset(["0"], ["a", "b"], [[7, 2]], [123.0])
    np.testing.assert_array_equal(internal_standardization(d), [[7.0, 2.0]])


def test_standardization_zero_total():
    d = ArealDataset(["0", "1"], ["a", "b"], [[1, 0], [2, 0]], [1.0, 2.0])
    with pytest.raises(DataError, match="zero total"):
        internal_standardization(d)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 10**6))
def test_standardization_preserves_totals(N, n, seed):
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 500, (N, n))
    counts[0] += 1
    d = ArealDataset([str(i) for i in range(N)], list("abcd")[:n], counts, rng.uniform(1, 1e6, N))
    E = internal_standardization(d)
    np.testing.assert_allclose(E.sum(axis=0), counts.sum(axis=0), rtol=1e-12)


def test_invalid_dataset():
    with pytest.raises(DataError):
        ArealDataset(["0"], ["a"], [[1]], [0.0])
    with pytest.raises(DataError):
        ArealDataset(["0"], ["a"], [[-1]], [1.0])


def test_minnesota_shape(mn87):
    data, graph, _ = mn87
    assert data.shape == (87, 3)
    assert data.diseases == ("lung", "larynx", "esophagus")
    assert graph.n_regions == 87


def test_twenty_county_fixtures(mn20):
    data, _, _ = mn20
    labels = list(data.labels)
    h, f = labels.index("Hennepin"), labels.index("Faribault")
    assert list(data.counts[h]) == [5294, 119, 439]
    assert data.populations[h] == pytest.approx(1.1e6, rel=0.05)
    assert list(data.counts[f]) == [110, 7, 13]
    assert data.populations[f] == 16501
    assert data.populations.argmax() == h and data.populations.argmin() == f


def test_twenty_county_expected_ranges(mn20):
    data, _, _ = mn20
    E = data.expected_counts()
    assert E[:, 0].max() <= 5275
    for j, (lo, hi) in enumerate([(80, 5275), (2, 113), (7, 449)]):
        assert round(E[:, j].min()) == pytest.approx(lo, abs=1)
        assert round(E[:, j].max()) == pytest.approx(hi, abs=1)


def test_data_dir_environment(tmp_path, monkeypatch):
    write_counts(tmp_path / "only_here.csv", _toy())
    write_adjacency(tmp_path / "only_here.adj", build_graph(2, [(0, 1)]))
    monkeypatch.setenv("SANOVA_DATA_DIR", str(tmp_path))
    data, _ = load_dataset("only_here.csv", "only_here.adj")
    assert data.shape == (2, 2)


def test_manifest_and_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nn_iter = 500\ncontrasts = HA2  # inline\n")
    assert read_config(cfg) == {"n_iter": "500", "contrasts": "HA2"}
    m = write_manifest(tmp_path / "m.json", {"a": 1}, 7, [cfg])
    assert m["seed"] == 7 and len(m["inputs"][str(cfg)]) == 64
