import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from visrep.data import CorpusIndex, DatasetManifest, Selection, curate
from visrep.data.synthetic import generate_corpus

SMALL_GAMES = ("synthA", "synthB")


@pytest.fixture(autouse=True)
def _seed_global_rngs():
    """Pin the global rng streams so tests don't depend on execution order."""
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture(scope="session")
def small_corpus_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("replay")
    generate_corpus(root, SMALL_GAMES, runs=(1, 2), checkpoints=range(1, 4),
                    per_checkpoint=150, episode_len=50, seed=7)
    return root


@pytest.fixture(scope="session")
def small_manifest(small_corpus_root):
    selections = [Selection(g, r, c, 150)
                  for g in SMALL_GAMES for r in (1, 2) for c in (1, 2, 3)]
    return DatasetManifest(regime="custom", replay_root=str(small_corpus_root),
                           selections=selections)


@pytest.fixture(scope="session")
def small_corpus(small_manifest):
    return CorpusIndex(small_manifest)


@pytest.fixture(scope="session")
def smoke_corpus(tmp_path_factory):
    """The 5k-transition corpus used by the pre-training smoke checks."""
    root = tmp_path_factory.mktemp("replay5k")
    games = ("smokeA", "smokeB")
    generate_corpus(root, games, runs=(1,), checkpoints=range(1, 3),
                    per_checkpoint=1250, episode_len=50, seed=11)
    selections = [Selection(g, 1, c, 1250) for g in games for c in (1, 2)]
    manifest = DatasetManifest(regime="custom", replay_root=str(root), selections=selections)
    return CorpusIndex(manifest)
