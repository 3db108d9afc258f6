import pytest
import torch


def pytest_configure(config):
    """Set up pytest markers."""
    config.addinivalue_line("markers", "slowtest: mark test as slow")


@pytest.fixture(autouse=True)
def _single_thread_torch():
    """Pin torch to one intra-op thread so reductions are reproducible."""
    n_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    yield
    torch.set_num_threads(n_threads)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Six 16x16 synthetic triplets in ISTD layout."""
    from skshadow.datasets import SynthConfig, synthesize, write_istd_layout

    cfg = SynthConfig(size=16, count=6, seed=0)
    return write_istd_layout(synthesize(cfg), tmp_path_factory.mktemp("tiny"), cfg.to_dict())
