import numpy as np
import pytest
import scipy.sparse as sp

from scnp.datasets import Dataset, Split
from scnp.graph import Graph, normalized_adjacency
from scnp.nn import MlpParams


def six_node_dataset():
    """Two triangles joined by the edge 2-3; class = triangle."""
    edges = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5)]
    g = Graph.from_edges(6, edges)
    rng = np.random.default_rng(1234)
    x = rng.random((6, 4))
    x[x < 0.3] = 0.0
    labels = np.array([0, 0, 0, 1, 1, 1])
    return Dataset(g, sp.csr_matrix(x), labels, tuple(str(i) for i in range(6)), ("a", "b"), "six")


def fixed_params(f=4, h=5, c=2, seed=99):
    rng = np.random.default_rng(seed)
    return MlpParams(
        rng.normal(size=(f, h)),
        rng.normal(scale=0.1, size=h),
        rng.normal(size=(h, c)),
        rng.normal(scale=0.1, size=c),
    )


def random_graph(rng, n, p=0.4, connected=True):
    while True:
        a = np.triu(rng.random((n, n)) < p, 1)
        edges = [(int(i), int(j)) for i, j in zip(*np.nonzero(a))]
        g = Graph.from_edges(n, edges)
        if not connected or n == 1:
            return g
        from scipy.sparse.csgraph import connected_components

        if connected_components(g.adjacency(), directed=False)[0] == 1:
            return g


def cycle_graph(n):
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n):
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


@pytest.fixture
def six():
    return six_node_dataset()


@pytest.fixture
def six_a_hat(six):
    return normalized_adjacency(six.graph)


@pytest.fixture
def six_split():
    return Split(np.array([0, 4]), np.array([1, 5]), np.array([2, 3]), seed=0, per_class_train=1)


@pytest.fixture
def params():
    return fixed_params()


def write_community_dataset(directory, n=60, c=3, f=20, p_in=0.2, p_out=0.02, seed=0):
    """Planted-partition graph with class-correlated binary features, as TSV files."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(c), -(-n // c))[:n]
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "labels.tsv", "w") as fh:
        for i in range(n):
            fh.write(f"p{i}\tc{labels[i]}\n")
    with open(directory / "edges.tsv", "w") as fh:
        fh.write("# src\tdst\n")
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < (p_in if labels[i] == labels[j] else p_out):
                    fh.write(f"p{i}\tp{j}\n")
    with open(directory / "features.tsv", "w") as fh:
        for i in range(n):
            for k in range(f):
                if rng.random() < (0.4 if k % c == labels[i] else 0.08):
                    fh.write(f"p{i}\t{k}\t1\n")
    return directory


@pytest.fixture
def community_dir(tmp_path):
    return write_community_dataset(tmp_path / "comm")
