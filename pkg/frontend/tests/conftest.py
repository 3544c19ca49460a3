import pytest

from synthdata import build_tree


@pytest.fixture(scope="session")
def data_root(tmp_path_factory):
    return build_tree(tmp_path_factory.mktemp("csv_tree"))
