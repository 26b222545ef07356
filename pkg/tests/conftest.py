import pytest

from trajkit import synth
from trajkit.dialects import get_dialect
from trajkit.gateway import EndpointConfig, MockBackend, ModelGateway, SamplingConfig


@pytest.fixture(scope="session")
def xml_dialect():
    return get_dialect("xml-toolcall")


@pytest.fixture(scope="session")
def ta_dialect():
    return get_dialect("thought-action")


@pytest.fixture(scope="session")
def json_dialect():
    return get_dialect("plain-json")


@pytest.fixture
def benchmark_dir(tmp_path):
    """A small synthetic benchmark written to disk (episodes + screenshots)."""
    synth.make_benchmark_file(tmp_path, n_episodes=4, steps_per_episode=5, seed=7)
    return tmp_path


@pytest.fixture
def episodes():
    """In-memory synthetic episodes; screenshot refs are abstract."""
    return synth.make_episodes(n_episodes=4, steps_per_episode=5, seed=7)


def make_gateway(episodes, dialect, policy_name="oracle", n=1, seed=None,
                 max_in_flight=4):
    policy = synth.POLICIES[policy_name]
    backend = MockBackend(synth.make_responder(episodes, dialect, policy))
    cfg = EndpointConfig(
        model_name=f"mock-{policy_name}",
        sampling=SamplingConfig(n=n, seed=seed),
        max_in_flight=max_in_flight,
    )
    return ModelGateway(backend, cfg, dialect.id), backend
