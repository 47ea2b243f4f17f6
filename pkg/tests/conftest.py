import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """4 identities x 12 frames at 48x48; enough for data/trainer tests."""
    from ifaceuv.dataio import generate_synthetic_corpus
    root = tmp_path_factory.mktemp("corpus")
    generate_synthetic_corpus(root, n_identities=4, frames_per_video=12,
                              resolution=48, seed=3,
                              n_test_identities=1)
    return root


@pytest.fixture(scope="session")
def overfit_run(tmp_path_factory, tiny_corpus):
    """Short overfit on the tiny corpus; shared by service/CLI tests."""
    from ifaceuv.training import TrainConfig, train
    out = tmp_path_factory.mktemp("overfit")
    config = TrainConfig(
        data_root=str(tiny_corpus), out_dir=str(out), resolution=48,
        uv_resolution=48, channels=16, seed=5, lr=2e-3, steps=260,
        batch_size=3, checkpoint_every=1000, holdout_frames=2)
    state, ckpt = train(config)
    return {"config": config, "checkpoint": ckpt, "state": state,
            "root": tiny_corpus}
