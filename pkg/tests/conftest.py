import numpy as np
import pytest

from langgeo.binarizer import BinaryLanguageVector, pack_bits


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.fspath.basename == "test_acceptance.py":
        status = "PASS" if report.passed else "FAIL"
        print(f"\n[ACCEPTANCE] {item.name}: {status}", flush=True)


def make_vector(bits, language="x", model="m", corpus="c", layer_offsets=None):
    """Single-layer packed vector from a 0/1 sequence."""
    arr = np.asarray(bits, dtype=np.uint8)
    if layer_offsets is None:
        layer_offsets = ((0, 0, arr.size),)
    return BinaryLanguageVector(
        packed=pack_bits(arr),
        n_bits=arr.size,
        language_tag=language,
        model_tag=model,
        corpus_tag=corpus,
        layer_offsets=layer_offsets,
    )


def random_spd(rng, d, scale=1.0):
    """Well-conditioned random SPD matrix."""
    a = rng.normal(size=(d, d))
    return scale * (a @ a.T + d * np.eye(d))


@pytest.fixture
def rng():
    return np.random.default_rng(20260811)
