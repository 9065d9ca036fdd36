import pytest

from reformguard.config import BackendSettings, ClassifierSettings, DefenseConfig
from reformguard.corpus import LabeledDataset, Sample
from reformguard.mocks import (
    IdentityBackend,
    KeywordClassifier,
    TokenStripBackend,
    TrojanKeywordClassifier,
)
from reformguard.reformulate import GenerationParams


@pytest.fixture
def params():
    return GenerationParams(model_name="mock")


@pytest.fixture
def keyword_oracle():
    """Label 1 iff the token 'good' is present, else 0."""
    return KeywordClassifier(token="good", label=1, default=0)


@pytest.fixture
def trojan_oracle():
    """Backdoored keyword classifier: any 'cf' token forces label 0."""
    return TrojanKeywordClassifier(trigger="cf", target=0, token="good", label=1, default=0)


@pytest.fixture
def strip_backend():
    return TokenStripBackend(token="cf")


@pytest.fixture
def identity_backend():
    return IdentityBackend()


@pytest.fixture
def mock_config():
    """Full three-task defense against the strip backend / trojan classifier pair."""
    return DefenseConfig(
        backend=BackendSettings(base_url="mock://strip?token=cf", model_name="mock"),
        classifier=ClassifierSettings(base_url="mock://trojan?trigger=cf&target=0"),
    )


def make_dataset(texts_labels, name="test", num_classes=2):
    samples = tuple(
        Sample(id=f"s{i}", text=text, label=label)
        for i, (text, label) in enumerate(texts_labels)
    )
    return LabeledDataset(name=name, samples=samples, num_classes=num_classes)


@pytest.fixture
def keyword_corpus():
    """Binary keyword-separable corpus: label 1 texts contain 'good'."""
    rows = []
    for i in range(10):
        rows.append((f"good film number {i} overall", 1))
        rows.append((f"bad film number {i} overall", 0))
    return make_dataset(rows)
