import os
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from scnp.datasets import (
    Dataset,
    extract_lcc,
    load_dataset,
    load_dataset_dir,
    load_split,
    make_split,
    save_node_map,
    save_split,
)
from scnp.errors import InconsistentSize, IoError, ParseError, TooFewNodes, UnknownNode
from scnp.graph import Graph


def write_toy(d, edges="p1\tp2\np2\tp3\n", labels="p1\tcs\np2\tbio\np3\tcs\n", feats=None):
    d.mkdir(parents=True, exist_ok=True)
    (d / "edges.tsv").write_text("# toy\n" + edges)
    (d / "labels.tsv").write_text(labels)
    (d / "features.tsv").write_text(feats or "p1\t0\t1\np2\t3\t1\np3\t1\t1\np3\t2\t1\n")
    return d


def toy_dataset(n, labels, edges):
    g = Graph.from_edges(n, edges)
    return Dataset(g, sp.csr_matrix(np.eye(n)), np.asarray(labels))


def test_load_toy(tmp_path):
    d = load_dataset_dir(write_toy(tmp_path / "toy"))
    assert (d.n, d.num_classes, d.num_features, d.graph.m) == (3, 2, 4, 2)
    assert d.node_ids == ("p1", "p2", "p3")
    # sorted class names: bio=0, cs=1
    assert d.labels.tolist() == [1, 0, 1]
    assert d.features.toarray().tolist() == [[1, 0, 0, 0], [0, 0, 0, 1], [0, 1, 1, 0]]
    assert d.name == "toy"


def test_load_deterministic(tmp_path):
    p = write_toy(tmp_path / "toy")
    a, b = load_dataset_dir(p), load_dataset_dir(p)
    assert a.node_ids == b.node_ids
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.graph.src, b.graph.src)


def test_weights_and_declared_features(tmp_path):
    p = write_toy(tmp_path / "w", edges="p1\tp2\t2.5\np3\tp2\n")
    d = load_dataset_dir(p, num_features=10)
    assert d.num_features == 10
    assert d.graph.adjacency()[0, 1] == 2.5
    with pytest.raises(InconsistentSize):
        load_dataset_dir(p, num_features=2)


def test_row_normalize(tmp_path):
    d = load_dataset_dir(write_toy(tmp_path / "t"), row_normalize=True)
    np.testing.assert_allclose(d.features.sum(axis=1).A1, 1.0)


@pytest.mark.parametrize(
    "kw, err",
    [
        ({"edges": "p1\tp9\n"}, UnknownNode),
        ({"edges": "p1\n"}, ParseError),
        ({"edges": "p1\tp2\tabc\n"}, ParseError),
        ({"feats": "p1\tx\t1\n"}, ParseError),
        ({"feats": "zz\t0\t1\n"}, UnknownNode),
        ({"labels": "p1\ta\np1\tb\np2\ta\np3\ta\n"}, InconsistentSize),
    ],
)
def test_load_errors(tmp_path, kw, err):
    with pytest.raises(err):
        load_dataset_dir(write_toy(tmp_path / "bad", **kw))


def test_parse_error_has_line_number(tmp_path):
    p = write_toy(tmp_path / "bad", edges="p1\tp2\np2\n")
    with pytest.raises(ParseError) as e:
        load_dataset_dir(p)
    # line 1 is the comment header
    assert e.value.lineno == 3


def test_missing_file(tmp_path):
    p = write_toy(tmp_path / "m")
    (p / "features.tsv").unlink()
    with pytest.raises(IoError, match="features.tsv"):
        load_dataset(p / "edges.tsv", p / "features.tsv", p / "labels.tsv")


def test_node_map(tmp_path):
    d = load_dataset_dir(write_toy(tmp_path / "t"))
    save_node_map(d, tmp_path / "map.tsv")
    assert (tmp_path / "map.tsv").read_text() == "0\tp1\n1\tp2\n2\tp3\n"


def test_lcc_connected_is_fixed_point():
    d = toy_dataset(3, [0, 1, 0], [(0, 1), (1, 2)])
    assert extract_lcc(d) is d


def test_lcc_picks_largest():
    d = toy_dataset(5, [0, 1, 0, 1, 0], [(0, 1), (1, 2), (3, 4)])
    out = extract_lcc(d)
    assert out.n == 3
    np.testing.assert_array_equal(out.features.toarray(), np.eye(5)[:3])


def test_lcc_tie_goes_to_node_zero():
    d = toy_dataset(4, [0, 1, 1, 0], [(0, 3), (1, 2)])
    out = extract_lcc(d)
    np.testing.assert_array_equal(out.features.toarray(), np.eye(4)[[0, 3]])
    assert out.labels.tolist() == [0, 0]
    assert out.num_classes == 1


def test_lcc_idempotent():
    d = toy_dataset(6, [0, 1, 0, 1, 0, 1], [(0, 1), (2, 3), (3, 4), (4, 5)])
    once = extract_lcc(d)
    twice = extract_lcc(once)
    assert twice.n == once.n == 4
    np.testing.assert_array_equal(once.features.toarray(), twice.features.toarray())


def ten_node():
    return toy_dataset(10, [0, 1] * 5, [(i, i + 1) for i in range(9)])


def test_split_cardinality():
    s = make_split(ten_node(), per_class_train=2, val_size=2, seed=7)
    assert (len(s.train_idx), len(s.val_idx), len(s.test_idx)) == (4, 2, 4)
    sets = [set(s.train_idx), set(s.val_idx), set(s.test_idx)]
    assert not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])
    assert sets[0] | sets[1] | sets[2] == set(range(10))
    labels = ten_node().labels
    assert np.bincount(labels[s.train_idx]).tolist() == [2, 2]


def test_split_deterministic_and_seed_sensitive():
    d = ten_node()
    assert make_split(d, 2, 2, 7) == make_split(d, 2, 2, 7)
    assert any(make_split(d, 2, 2, 7) != make_split(d, 2, 2, s) for s in range(8, 20))


def test_split_small_class_takes_all():
    d = toy_dataset(6, [0, 0, 0, 0, 0, 1], [(i, i + 1) for i in range(5)])
    s = make_split(d, per_class_train=1, val_size=0, seed=0)
    assert 5 in s.train_idx


def test_split_too_few():
    with pytest.raises(TooFewNodes):
        make_split(ten_node(), per_class_train=4, val_size=3, seed=0)


def test_split_round_trip(tmp_path):
    s = make_split(ten_node(), 2, 3, 11)
    save_split(s, tmp_path / "split.txt")
    text = (tmp_path / "split.txt").read_text()
    assert text.splitlines()[0].startswith("train:") and "seed:11" in text
    assert load_split(tmp_path / "split.txt") == s


def test_split_file_errors(tmp_path):
    (tmp_path / "s.txt").write_text("train:1,2\nval:3\n")
    with pytest.raises(ParseError):
        load_split(tmp_path / "s.txt")


DATA_ROOT = Path(os.environ.get("SCNP_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))


@pytest.mark.parametrize("name, expected", [("cora_ml", (2810, 7981, 7, 2879)), ("citeseer", (2110, 3668, 6, 3703))])
def test_benchmark_statistics(name, expected):
    directory = DATA_ROOT / name
    if not (directory / "labels.tsv").is_file():
        pytest.skip(f"benchmark files not present under {directory}")
    d = extract_lcc(load_dataset_dir(directory))
    assert (d.n, d.graph.m, d.num_classes, d.num_features) == expected
    assert make_split(d, 20, 500, 0).train_idx.size == 20 * expected[2]
