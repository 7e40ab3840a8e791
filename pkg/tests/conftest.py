from functools import lru_cache

import pytest

from pairsynth.corpora import twophase as T


@lru_cache(maxsize=None)
def twophase(n: int):
    return T.gen_two_phase(n)


@pytest.fixture
def tp3():
    return twophase(3)


@pytest.fixture
def tp4():
    return twophase(4)
