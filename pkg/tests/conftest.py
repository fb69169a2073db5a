"""Shared fixtures: the synthetic micro-dataset and prebuilt pipeline assets.

The full-size dataset, descriptor store, and prepared test scenes are
session-scoped because several test modules (and most acceptance checks)
reuse them; building once keeps the whole suite fast.
"""

import numpy as np
import pytest

from xrayproto.acquisition import DatasetIndex, FixtureWebClient
from xrayproto.backends import build_bundle
from xrayproto.evaluation import prepare_scenes, prepare_transfer_store
from xrayproto.synthetic import MICRO_PATCH, make_micro_dataset


@pytest.fixture(scope="session")
def micro(tmp_path_factory):
    root = tmp_path_factory.mktemp("micro")
    return make_micro_dataset(str(root), seed=0)


@pytest.fixture(scope="session")
def micro_index(micro):
    return DatasetIndex.from_jsonl(micro.index_path)


@pytest.fixture(scope="session")
def micro_bundle():
    return build_bundle(patch_size=MICRO_PATCH, window=32, stride=32)


@pytest.fixture(scope="session")
def micro_assets(micro, micro_index, micro_bundle):
    return prepare_transfer_store(
        micro_index,
        micro_bundle,
        web_client=FixtureWebClient(micro.web_root),
    )


@pytest.fixture(scope="session")
def micro_store(micro_assets):
    return micro_assets.store


@pytest.fixture(scope="session")
def micro_scenes(micro_index, micro_bundle):
    return prepare_scenes(micro_index, micro_bundle.proposal_source, split="test")


@pytest.fixture(scope="session")
def small(tmp_path_factory):
    """A reduced dataset for tests that rebuild stores repeatedly."""
    root = tmp_path_factory.mktemp("small")
    return make_micro_dataset(str(root), seed=1, n_train=6, n_scenes=6, n_web=6)


@pytest.fixture(scope="session")
def small_index(small):
    return DatasetIndex.from_jsonl(small.index_path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
