import numpy as np
import pytest

from ecglstm import net, synth
from ecglstm.core import ClassLabel


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", default=False,
                     help="skip the end-to-end desk-scale run (about 30 min)")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return
    skip = pytest.mark.skip(reason="--skip-slow given")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def normal30():
    return synth.generate(synth.SynthSpec(ClassLabel.Normal, duration=30, heart_rate=75, seed=3), "N30")


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    cfg = synth.CorpusConfig(duration_range=(8.0, 10.0))
    index = synth.generate_corpus(2, 11, out, cfg)
    return out, index


@pytest.fixture()
def tiny_model():
    return net.he_init(net.ModelConfig(input_dim=12, hidden_dim=6, dropout_prob=0.0), seed=5)


def f32(rng, shape):
    return rng.standard_normal(shape).astype(np.float32).astype(np.float64)


# acceptance verdicts, printed once at the end of the session
_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    def record(criterion: int, ok: bool | None, detail: str) -> bool | None:
        word = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        _VERDICTS.append(f"{word} criterion {criterion:>2}: {detail}")
        print(_VERDICTS[-1])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
