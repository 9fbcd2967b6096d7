import pytest

from bitpress_gateway.model import LanguageModelBackend

TRAIN_STEPS = 60


@pytest.fixture(scope="session")
def backend():
    """One trained model for the whole test session (training is the
    expensive part and the model is frozen afterwards)."""
    return LanguageModelBackend(seed=7, train_steps=TRAIN_STEPS)
