import pytest

from medroute.model_client import MockBehavior, spawn_mock_backend
from medroute.router import train_builtin_scorer
from support import make_corpus


@pytest.fixture(scope="session")
def trained_model_path(tmp_path_factory):
    """A small builtin scorer trained on the synthetic corpus, saved once."""
    corpus = make_corpus(n_per_label=20, seed=7)
    model = train_builtin_scorer(corpus, buckets=4096, epochs=4, seed=7)
    path = tmp_path_factory.mktemp("models") / "scorer.json"
    model.save(path)
    return str(path)


@pytest.fixture(scope="module")
def specialist_mocks():
    """One scripted mock backend per specialty, answering a stable marker."""
    from medroute.core import default_label_registry

    mocks = {
        lbl.id: spawn_mock_backend(MockBehavior(default_reply=f"MARKER-{lbl.id}"))
        for lbl in default_label_registry()
    }
    yield mocks
    for mock in mocks.values():
        mock.close()


@pytest.fixture(scope="module")
def echo_orchestrator():
    with spawn_mock_backend(MockBehavior()) as mock:
        yield mock


@pytest.fixture(scope="module")
def echo_reformulator():
    with spawn_mock_backend(MockBehavior()) as mock:
        yield mock
