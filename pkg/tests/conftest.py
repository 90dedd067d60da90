import sys
import numpy as np
import pytest

from hiertext.groupdesc import RegionTable
from hiertext.imageproc import ChannelImage


def random_table(rng, n, spread=100.0):
    """Region table with plausible, tie-free random descriptors."""
    scalars = np.column_stack([
        rng.uniform(0, 255, n),          # intensity
        rng.uniform(0, 255, n),          # boundary intensity
        rng.uniform(5, 60, n),           # major axis
        rng.uniform(1, 9, n),            # stroke width
        rng.uniform(0, 255, n),          # border gradient
        rng.uniform(0.2, 3, n),          # aspect ratio
        rng.uniform(0.3, 1, n),          # hull compactness
        rng.integers(0, 6, n).astype(float),
    ])
    feats = scalars[:, [0, 1, 4, 2, 3]].copy()
    centers = rng.uniform(0, spread, (n, 2))
    hu = rng.normal(0, 1, (n, 7))
    return RegionTable(scalars, feats, centers, hu)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def channel(data, cid="gray"):
    return ChannelImage(np.ascontiguousarray(np.asarray(data, dtype=np.uint8)), cid)


def rel_close(a, b, rel, floor=1e-12):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.all(np.abs(a - b) <= rel * np.maximum(np.abs(a), np.abs(b)) + floor)


@pytest.fixture(scope="session")
def small_model():
    """A boosted classifier trained on a small synthetic corpus (gray channel)."""
    from hiertext.classifier import train_with_hard_negatives
    from hiertext.simspace import default_optimal_weights
    from hiertext.synthetic import SyntheticSpec, generate_corpus
    from hiertext.training import harvest_classifier_data

    pairs = generate_corpus(1000, 20, SyntheticSpec(distractors=True))
    P, N = harvest_classifier_data(pairs, default_optimal_weights(), channels="gray")
    return train_with_hard_negatives(P, N, rounds=100, k=50, seed=0)


@pytest.fixture(scope="session")
def small_model_path(small_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "model.json"
    small_model.save(path)
    return path


@pytest.fixture(scope="session")
def fitted_postproc():
    from hiertext.synthetic import SyntheticSpec, generate_corpus
    from hiertext.training import fit_postproc

    return fit_postproc(generate_corpus(1000, 20, SyntheticSpec(distractors=True)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
