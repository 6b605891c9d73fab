import pytest

from segtrial import irma2


@pytest.fixture
def irma():
    return irma2.builtin_irma2()


@pytest.fixture
def rule():
    return irma2.segment_rule()
