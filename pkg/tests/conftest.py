import pytest

from mirc_lab.minidata import build_mini_dataset

MINI_SEED = 7


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory):
    """One shared on-disk synthetic dataset; returns the manifest path."""
    root = tmp_path_factory.mktemp("minidata")
    return build_mini_dataset(root, MINI_SEED)
