import pytest
import torch

from brepae.corpus import CorpusConfig, generate_corpus


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(max(1, torch.get_num_threads()))
    yield


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Small mixed corpus shared by fine-tuning and CLI tests."""
    out = tmp_path_factory.mktemp("tiny_corpus")
    cfg = CorpusConfig(
        counts={"box": 3, "box_hole": 3, "l_bracket": 3, "cyl_boss": 3},
        split=(0.6, 0.2, 0.2),
        master_seed=7,
    )
    manifest = generate_corpus(cfg, out)
    return out, manifest
