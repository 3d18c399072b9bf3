"""Citation-network dataset loading, largest-component extraction and splits.

File formats (UTF-8, tab separated, ``#`` lines ignored):

* edges:    ``src<TAB>dst[<TAB>weight]``
* labels:   ``node_id<TAB>class_label``; the label file defines the node set,
  and node ids are numbered in order of first appearance.
* features: ``node_id<TAB>feature_index<TAB>value`` sparse triplets.

Splits are sampled with numpy's PCG64 generator: for a pool of candidate
nodes, each candidate draws one ``Generator.random()`` double and the pool is
stably sorted by that key.  The first ``k`` nodes of the sorted pool are taken.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import InconsistentSize, IoError, ParseError, TooFewNodes, UnknownNode
from .graph import Graph


@dataclass(frozen=True)
class Dataset:
    graph: Graph
    features: sp.csr_matrix
    labels: np.ndarray
    node_ids: tuple = ()
    class_names: tuple = ()
    name: str = ""

    def __post_init__(self):
        n = self.graph.n
        if self.features.shape[0] != n or self.labels.shape[0] != n:
            raise InconsistentSize(
                f"graph has {n} nodes, features {self.features.shape[0]} rows, "
                f"labels {self.labels.shape[0]} entries"
            )
        if self.node_ids and len(self.node_ids) != n:
            raise InconsistentSize("node id mapping does not match node count")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def num_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Split:
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    seed: int
    per_class_train: int = field(default=-1)

    def __eq__(self, other):
        if not isinstance(other, Split):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.per_class_train == other.per_class_train
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("train_idx", "val_idx", "test_idx")
            )
        )


def _read_rows(path, min_cols, max_cols):
    path = Path(path)
    try:
        fh = path.open(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot open {path}: {e.strerror}") from e
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if not (min_cols <= len(parts) <= max_cols):
                raise ParseError(path, lineno, f"expected {min_cols}-{max_cols} tab-separated fields, got {len(parts)}")
            yield lineno, parts


def _number(path, lineno, text, kind=float):
    try:
        val = kind(text)
    except ValueError:
        raise ParseError(path, lineno, f"not a number: {text!r}") from None
    if kind is float and not np.isfinite(val):
        raise ParseError(path, lineno, f"non-finite value: {text!r}")
    return val


def load_dataset(edge_path, feature_path, label_path, num_features=None, row_normalize=False, name=""):
    """Read the three dataset files into a :class:`Dataset`.

    ``num_features`` fixes the feature dimension; by default it is one more
    than the largest feature index seen.
    """
    index = {}
    raw_labels = []
    for lineno, (node, label) in _read_rows(label_path, 2, 2):
        if node in index:
            raise InconsistentSize(f"{label_path}:{lineno}: node {node!r} labelled twice")
        index[node] = len(index)
        raw_labels.append(label)
    class_names = tuple(sorted(set(raw_labels)))
    cid = {c: i for i, c in enumerate(class_names)}
    labels = np.array([cid[c] for c in raw_labels], dtype=np.int64)
    n = len(index)

    edges = []
    for lineno, parts in _read_rows(edge_path, 2, 3):
        try:
            u, v = index[parts[0]], index[parts[1]]
        except KeyError as e:
            raise UnknownNode(f"{edge_path}:{lineno}: node {e.args[0]!r} not in label file") from None
        if len(parts) == 3:
            w = _number(edge_path, lineno, parts[2])
            if w <= 0:
                raise ParseError(edge_path, lineno, "edge weight must be positive")
            edges.append((u, v, w))
        else:
            edges.append((u, v))
    graph = Graph.from_edges(n, edges)

    rows, cols, vals = [], [], []
    for lineno, (node, j, x) in _read_rows(feature_path, 3, 3):
        if node not in index:
            raise UnknownNode(f"{feature_path}:{lineno}: node {node!r} not in label file")
        j = _number(feature_path, lineno, j, int)
        if j < 0:
            raise ParseError(feature_path, lineno, "negative feature index")
        rows.append(index[node])
        cols.append(j)
        vals.append(_number(feature_path, lineno, x))
    f = max(cols) + 1 if cols else 0
    if num_features is not None:
        if f > num_features:
            raise InconsistentSize(f"feature index {f - 1} exceeds declared feature count {num_features}")
        f = num_features
    features = sp.csr_matrix((vals, (rows, cols)), shape=(n, f), dtype=np.float64)
    features.sum_duplicates()
    if row_normalize:
        features = row_normalized(features)
    return Dataset(graph, features, labels, tuple(index), class_names, name)


def load_dataset_dir(directory, **kwargs) -> Dataset:
    """Load ``edges.tsv``, ``features.tsv`` and ``labels.tsv`` from a directory."""
    d = Path(directory)
    kwargs.setdefault("name", d.name)
    return load_dataset(d / "edges.tsv", d / "features.tsv", d / "labels.tsv", **kwargs)


def row_normalized(features):
    s = np.asarray(features.sum(axis=1)).ravel()
    s[s == 0] = 1.0
    return sp.diags(1.0 / s) @ features


def save_node_map(d: Dataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, node in enumerate(d.node_ids):
            fh.write(f"{i}\t{node}\n")


def subset(d: Dataset, nodes) -> Dataset:
    """Induced sub-dataset on ``nodes`` (sorted, renumbered 0..k-1)."""
    nodes = np.sort(np.asarray(nodes, dtype=np.int64))
    remap = np.full(d.n, -1, dtype=np.int64)
    remap[nodes] = np.arange(nodes.size)
    g = d.graph
    keep = (remap[g.src] >= 0) & (remap[g.dst] >= 0)
    sub_graph = Graph(nodes.size, remap[g.src[keep]], remap[g.dst[keep]], g.weight[keep])
    labels = d.labels[nodes]
    # class ids stay compact so the every-class-has-a-member invariant holds
    present = np.unique(labels)
    relabel = np.full(max(d.num_classes, 1), -1, dtype=np.int64)
    relabel[present] = np.arange(present.size)
    names = tuple(d.class_names[c] for c in present) if d.class_names else ()
    ids = tuple(d.node_ids[i] for i in nodes) if d.node_ids else ()
    return replace(
        d,
        graph=sub_graph,
        features=d.features[nodes].tocsr(),
        labels=relabel[labels],
        node_ids=ids,
        class_names=names,
    )


def extract_lcc(d: Dataset) -> Dataset:
    """Restrict to the largest connected component.

    Ties between equally large components go to the one holding the lowest
    node index.  A connected dataset is returned unchanged.
    """
    if d.n == 0:
        return d
    ncomp, comp = connected_components(d.graph.adjacency(), directed=False)
    if ncomp == 1:
        return d
    sizes = np.bincount(comp)
    best = sizes.max()
    # first node (lowest index) whose component has the maximal size
    winner = comp[np.flatnonzero(sizes[comp] == best)[0]]
    return subset(d, np.flatnonzero(comp == winner))


def _take(pool, k, rng):
    keys = rng.random(pool.size)
    return pool[np.argsort(keys, kind="stable")[:k]]


def make_split(d: Dataset, per_class_train: int = 20, val_size: int = 500, seed: int = 0) -> Split:
    c = d.num_classes
    if per_class_train < 0 or val_size < 0:
        raise TooFewNodes("split sizes must be nonnegative")
    if per_class_train * c + val_size > d.n:
        raise TooFewNodes(
            f"{per_class_train} per class x {c} classes + {val_size} validation > {d.n} nodes"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    train = []
    for k in range(c):
        members = np.flatnonzero(d.labels == k)
        train.append(_take(members, per_class_train, rng))
    train = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=np.int64)
    rest = np.setdiff1d(np.arange(d.n), train)
    val = np.sort(_take(rest, val_size, rng))
    test = np.setdiff1d(rest, val)
    return Split(train, val, test, seed, per_class_train)


def save_split(s: Split, path):
    def fmt(a):
        return ",".join(str(int(i)) for i in a)

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"train:{fmt(s.train_idx)}\n")
        fh.write(f"val:{fmt(s.val_idx)}\n")
        fh.write(f"test:{fmt(s.test_idx)}\n")
        fh.write(f"seed:{s.seed}\n")
        fh.write(f"per_class_train:{s.per_class_train}\n")


def load_split(path) -> Split:
    fields = {}
    for lineno, (line,) in _read_rows(path, 1, 1):
        key, sep, value = line.partition(":")
        if not sep:
            raise ParseError(path, lineno, "expected 'key: values'")
        fields[key.strip()] = value.strip()
    missing = {"train", "val", "test", "seed"} - fields.keys()
    if missing:
        raise ParseError(path, 0, f"missing line(s): {', '.join(sorted(missing))}")

    def idx(key):
        text = fields[key]
        try:
            return np.array([int(t) for t in text.split(",") if t.strip()], dtype=np.int64)
        except ValueError:
            raise ParseError(path, 0, f"bad index list for {key!r}") from None

    try:
        seed = int(fields["seed"])
        pct = int(fields.get("per_class_train", -1))
    except ValueError:
        raise ParseError(path, 0, "seed/per_class_train must be integers") from None
    return Split(idx("train"), idx("val"), idx("test"), seed, pct)
