import numpy as np
import pytest

from ugst.data import SbmParams, generate_sbm, sample_split
from ugst.seeding import derive_seed

# a comfortably separable block-model instance shared by training tests
SEPARABLE = SbmParams(
    num_blocks=3, nodes_per_block=50, p_in=0.15, p_out=0.01,
    feature_dim=3, signal_strength=1.5, noise_std=0.7,
)


@pytest.fixture(scope="session")
def sbm_dataset():
    return generate_sbm(SEPARABLE, seed=11)


@pytest.fixture(scope="session")
def sbm_split(sbm_dataset):
    return sample_split(sbm_dataset, 0.06, 0.15, 0.30, derive_seed(0, "split"))


def dense_adjacency(graph) -> np.ndarray:
    """Brute-force dense adjacency straight from the edge list."""
    a = np.zeros((graph.num_nodes, graph.num_nodes))
    for u, v in graph.edges:
        a[u, v] = 1.0
        a[v, u] = 1.0
    return a


def dense_normalized(graph) -> np.ndarray:
    """Dense-algebra reference for the self-looped normalization."""
    a = dense_adjacency(graph) + np.eye(graph.num_nodes)
    d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return d_inv_sqrt[:, None] * a * d_inv_sqrt[None, :]


def random_graph(rng, max_nodes=8, edge_prob=0.5):
    from ugst.graph import Graph

    n = int(rng.integers(1, max_nodes + 1))
    pairs = [
        (u, v)
        for u in range(n)
        for v in range(u + 1, n)
        if rng.random() < edge_prob
    ]
    return Graph(n, np.array(pairs, dtype=np.int64).reshape(-1, 2))
