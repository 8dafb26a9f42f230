import random

import pytest

from kzoom import CipherKey, PrecisionSpec


def _reference_key(k: int = 0, precision: PrecisionSpec | None = None) -> CipherKey:
    return CipherKey(
        mu="3.8", x0="0.232323", k=k,
        precision=precision or PrecisionSpec.binary64(),
        S=256, x_min="0.2", x_max="0.8", N0=250, N_max=65532,
    )


@pytest.fixture
def table_key():
    """Reference key for the worked examples: mu=3.8 chain from 0.232323."""
    return _reference_key()


@pytest.fixture
def table_key_at():
    """The same reference key at a chosen zoom depth and precision."""
    return _reference_key


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
