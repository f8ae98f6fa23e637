"""Published dataset statistics; these need the raw files under ``$GEGCN_DATA_DIR``."""

import pytest

from gegcn.graph import homophily_index

from test_acceptance import load_dataset


@pytest.mark.parametrize("name, n, m, d, k", [
    ("cora", 2485, 5069, 1433, 7),
    ("cornell", 140, 219, 1703, 5),
])
def test_largest_component_sizes(name, n, m, d, k):
    g = load_dataset(name)
    assert (g.n, g.num_edges) == (n, m)
    assert g.features.shape[1] == d
    if name == "cora":
        assert g.num_classes == k


def test_cora_homophily():
    assert abs(homophily_index(load_dataset("cora")) - 0.83) <= 0.01
