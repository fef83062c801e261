import numpy as np
import pytest

from trieclt import ProbModel, StringSource, build_trie, sample_fixed
from trieclt.cli import load_model


@pytest.fixture(scope="session")
def sym2():
    return load_model("sym2")


@pytest.fixture(scope="session")
def p37():
    return load_model("p37")


@pytest.fixture(scope="session")
def quarter():
    return load_model("quarter")


@pytest.fixture(scope="session")
def sym4():
    return load_model("sym4")


@pytest.fixture(scope="session")
def cherry():
    return build_trie(["0", "1"])


def random_tries(model, seeds, sizes):
    """Deterministic batch of sampled tries for property checks."""
    out = []
    for seed, n in zip(seeds, sizes):
        out.append(sample_fixed(n, StringSource(model, seed)))
    return out


@pytest.fixture(scope="session")
def small_tries(sym2, p37):
    rng = np.random.default_rng(7)
    tries = []
    for model in (sym2, p37):
        sizes = rng.integers(1, 40, size=12)
        tries += random_tries(model, range(100, 100 + len(sizes)), sizes)
    return tries
