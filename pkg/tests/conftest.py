import numpy as np
import pytest

from nrplm.model_baseline import BaselineLM
from nrplm.model_nrp import NRPLM
from nrplm.random_index import RandomIndex, RandomIndexLookup


def randomize(model, rng, scale=0.5):
    """Replace every parameter with N(0, scale^2) noise so gradients are generic."""
    for name, p in model.params.items():
        p[...] = rng.normal(0.0, scale, size=p.shape)
    return model


def identity_lookup(vocab_size):
    """k = |V|, s = 1, word i -> +1 at position i."""
    return RandomIndexLookup.from_indices(
        [RandomIndex(vocab_size, (i,), ()) for i in range(vocab_size)], s=1, mode="binary")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_baseline(rng):
    return randomize(BaselineLM.create(5, 4, 3, 3, rng, dtype=np.float64), rng)


@pytest.fixture
def toy_nrp(rng):
    m = NRPLM.create(6, 5, 2, 4, 3, 3, rng, index_seed=7, dtype=np.float64)
    return randomize(m, rng)


@pytest.fixture
def toy_corpus(tmp_path):
    """Tiny deterministic train/valid/test files with 20 distinct words."""
    r = np.random.default_rng(0)
    words = [f"w{i}" for i in range(19)]
    def sentences(count):
        return "\n".join(" ".join(r.choice(words, size=int(r.integers(4, 9))))
                         for _ in range(count)) + "\n"
    paths = {}
    for split, count in (("train", 80), ("valid", 15), ("test", 15)):
        p = tmp_path / f"{split}.txt"
        p.write_text(sentences(count))
        paths[split] = p
    return paths


# ------------------------------------------------------- acceptance report
# Tests marked ``acceptance("name")`` get one summary line each at the end of
# the session, whatever the capture mode. Detail strings come from
# ``record_property("detail", ...)``.

_ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): one line in the acceptance summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        detail = "; ".join(v for k, v in item.user_properties if k == "detail")
        if hasattr(rep, "wasxfail"):
            status = "FAIL (known)"
        elif rep.passed:
            status = "PASS"
        elif rep.skipped:
            status = "SKIP"
            if not detail and isinstance(rep.longrepr, tuple):
                detail = rep.longrepr[2]
        else:
            status = "FAIL"
        _ACCEPTANCE.append((marker.args[0], status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{status:<12} {name}" + (f" -- {detail}" if detail else ""))
