import random

import pytest

from app.storage import IoMeter, LocalDirBackend, MemoryBackend, MeteredBackend


def make_corpus(n, sizes=(0, 2048), seed=0, prefix="f"):
    rng = random.Random(seed)
    return [(f"{prefix}/{i:05d}.dat", rng.randbytes(rng.randint(*sizes))) for i in range(n)]


@pytest.fixture
def memory_backend():
    return MemoryBackend()


@pytest.fixture
def meter():
    return IoMeter()


@pytest.fixture
def metered_backend(meter):
    return MeteredBackend(MemoryBackend(), meter)


@pytest.fixture
def local_backend(tmp_path):
    return LocalDirBackend(tmp_path / "store")


@pytest.fixture(params=["memory", "local"])
def any_backend(request, tmp_path):
    if request.param == "memory":
        return MemoryBackend()
    return LocalDirBackend(tmp_path / "store")


@pytest.fixture
def corpus():
    return make_corpus(60, seed=1)
