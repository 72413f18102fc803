import pytest

from app.baselines import NativeStore, ScanContainer, SequentialReader, SparseContainer, encode_entry
from app.errors import NotFoundError
from app.storage import IoMeter, MemoryBackend, MeteredBackend
from conftest import make_corpus


@pytest.fixture
def corpus():
    return make_corpus(1000, sizes=(100, 300), seed=31)


def metered():
    meter = IoMeter()
    return MeteredBackend(MemoryBackend(), meter), meter


def test_scan_container_round_trip(corpus):
    backend, _ = metered()
    container = ScanContainer.build(backend, "scan", corpus)
    for name, content in corpus[::37]:
        assert container.get(name) == content


def test_scan_cost_grows_with_position(corpus):
    backend, meter = metered()
    container = ScanContainer.build(backend, "scan", corpus)
    data_size = backend.length(container.data)

    meter.reset()
    container.get(corpus[0][0])
    first = meter.phase_counters("content").read_bytes
    assert first <= 64 * 1024
    assert meter.phase_counters("metadata").read_ops == 2

    meter.reset()
    container.get(corpus[-1][0])
    assert meter.phase_counters("content").read_bytes == data_size

    meter.reset()
    with pytest.raises(NotFoundError):
        container.get("absent")
    assert meter.phase_counters("content").read_bytes == data_size


def test_sparse_container_round_trip(corpus):
    backend, _ = metered()
    container = SparseContainer.build(backend, "sparse", corpus)
    for name, content in corpus[::13]:
        assert container.get(name) == content
    with pytest.raises(NotFoundError):
        container.get("f/00010.datx")
    with pytest.raises(NotFoundError):
        container.get("a-before-everything")
    with pytest.raises(NotFoundError):
        container.get("zzz-after-everything")


def test_sparse_scan_window_is_bounded(corpus):
    backend, meter = metered()
    container = SparseContainer.build(backend, "sparse", corpus, interval=128)
    ordered = sorted(corpus)
    largest_entry = max(len(encode_entry(n, c)) for n, c in corpus)
    window_bound = 128 * largest_entry + 64 * 1024
    for position in (0, 1, 127, 128, 500, 999):
        meter.reset()
        assert container.get(ordered[position][0]) == ordered[position][1]
        assert meter.phase_counters("content").read_bytes <= window_bound
        assert meter.phase_counters("metadata").read_ops == 1


def test_sparse_client_cache_reads_index_once(corpus):
    backend, meter = metered()
    container = SparseContainer.build(backend, "sparse", corpus, client_cache=True)
    meter.reset()
    for name, _ in corpus[:20]:
        container.get(name)
    assert meter.per_path["sparse/index"].read_ops == 1


def test_sequential_reader_reads_in_chunks():
    backend, meter = metered()
    backend.create("obj")
    backend.append("obj", b"".join(encode_entry(f"n{i}", bytes(100)) for i in range(50)))
    meter.reset()
    reader = SequentialReader(backend, "obj", chunk=1000)
    names = []
    while not reader.at_end():
        names.append(reader.next_entry()[0])
    assert names == [f"n{i}" for i in range(50)]
    assert meter.total.read_bytes == backend.length("obj")
    assert meter.total.read_ops == -(-backend.length("obj") // 1000)


def test_scan_client_cache_reads_indexes_once(corpus):
    backend, meter = metered()
    container = ScanContainer.build(backend, "scan", corpus, client_cache=True)
    meter.reset()
    for name, content in corpus[::100]:
        assert container.get(name) == content
    assert meter.phase_counters("metadata").read_ops == 2


def test_native_store_reads_size_then_content(corpus):
    backend, meter = metered()
    store = NativeStore.build(backend, "native", corpus + [("empty", b"")])
    assert len(backend.list("native/")) == len(corpus) + 1
    meter.reset()
    for name, content in corpus[::50]:
        assert store.get(name) == content
    gets = len(corpus[::50])
    assert meter.phase_counters("metadata").read_ops == gets
    assert meter.phase_counters("metadata").read_bytes == 8 * gets
    assert meter.phase_counters("content").read_ops == gets
    assert store.get("empty") == b""
    with pytest.raises(NotFoundError):
        store.get("missing")
