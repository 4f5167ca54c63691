from app.core.errors import (
    ArtifactIOError,
    BackendTransportError,
    ConfigError,
    DivergenceError,
    GuidedError,
    MatchingError,
    TranscriptMissError,
)


def test_exit_codes():
    assert GuidedError("x").exit_code == 1
    assert MatchingError("x").exit_code == 1
    assert ConfigError("x").exit_code == 2
    assert ArtifactIOError("x").exit_code == 3
    assert TranscriptMissError("x").exit_code == 3
    assert DivergenceError("x").exit_code == 4


def test_message_carries_context():
    error = DivergenceError("Training diverged", stage=2, iteration=7)
    assert str(error) == "Training diverged (stage=2, iteration=7)"
    assert error.context == {"stage": 2, "iteration": 7}
    assert str(ConfigError("bad")) == "bad"


def test_transport_errors_are_retriable():
    assert BackendTransportError("down").retriable
    assert not ConfigError("bad").retriable
