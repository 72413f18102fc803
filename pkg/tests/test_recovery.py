import pytest

from app.archive import create_archive, open_archive, verify
from app.errors import ArchiveExistsError, InjectedFailure, NotAnArchiveError
from app.hashing import name_hash
from app.manifest import ArchiveConfig
from app.records import MetadataRecord, encode_name, unpack_records
from app.storage import FaultInjectingBackend, FaultSchedule, MemoryBackend
from conftest import make_corpus

CREATE_CORPUS = make_corpus(50, sizes=(0, 300), seed=11)
BASE_CORPUS = make_corpus(30, sizes=(0, 300), seed=12, prefix="base")
APPEND_CORPUS = make_corpus(20, sizes=(0, 300), seed=13, prefix="more")


def sweep_config(workers=1):
    return ArchiveConfig(bucket_capacity=6, workers=workers)


def committed_records(backend, archive):
    path = f"{archive}/_temporaryIndex"
    if not backend.exists(path):
        return []
    records, _ = unpack_records(backend.read_all(path))
    return records


def check_recovered(backend, archive, expected):
    """``expected`` maps names that must survive to their content."""
    by_key = {name_hash(n): (n, c) for n, c in expected}
    must_survive = {n: c for n, c in expected if n in expected_durable(backend, archive, by_key)}
    handles = open_archive(backend, archive)
    assert not backend.exists(f"{archive}/_temporaryIndex")
    assert not [p for p in backend.list(f"{archive}/") if p.endswith(".tmp")]
    for name, content in must_survive.items():
        assert handles.get_file(name) == content
    results = verify(handles)
    assert all(c.passed for c in results), [c for c in results if not c.passed]
    return handles


def expected_durable(backend, archive, by_key):
    return {by_key[r.key][0] for r in committed_records(backend, archive) if r.key in by_key}


def count_writes(run):
    counting = FaultInjectingBackend(MemoryBackend())
    run(counting)
    return counting.writes


def run_create(backend, workers=1):
    create_archive(backend, "arch", CREATE_CORPUS, sweep_config(workers))


@pytest.mark.parametrize("torn", [False, True])
def test_crash_at_every_write_during_create(torn):
    total = count_writes(run_create)
    assert total > 50
    for fail_at in range(1, total + 1):
        inner = MemoryBackend()
        faulty = FaultInjectingBackend(inner, FaultSchedule(fail_at, torn_append=torn))
        with pytest.raises(InjectedFailure):
            run_create(faulty)

        if not inner.list("arch/"):
            with pytest.raises(NotAnArchiveError):
                open_archive(inner, "arch")
            continue
        handles = check_recovered(inner, "arch", CREATE_CORPUS)
        assert handles.manifest.file_count == len(handles.list_names())


def test_crash_during_parallel_create():
    total = count_writes(lambda b: run_create(b, workers=3))
    for fail_at in range(1, total + 1, 7):
        inner = MemoryBackend()
        faulty = FaultInjectingBackend(inner, FaultSchedule(fail_at))
        with pytest.raises(InjectedFailure):
            run_create(faulty, workers=3)
        if inner.list("arch/"):
            check_recovered(inner, "arch", CREATE_CORPUS)


def base_archive():
    inner = MemoryBackend()
    create_archive(inner, "arch", BASE_CORPUS, sweep_config())
    return inner


def run_append(backend):
    open_archive(backend, "arch").append_files(APPEND_CORPUS)


@pytest.mark.parametrize("torn", [False, True])
def test_crash_at_every_write_during_append(torn):
    counting = FaultInjectingBackend(base_archive())
    run_append(counting)
    total = counting.writes
    assert total > 20

    for fail_at in range(1, total + 1):
        inner = base_archive()
        faulty = FaultInjectingBackend(inner, FaultSchedule(fail_at, torn_append=torn))
        with pytest.raises(InjectedFailure):
            run_append(faulty)

        durable = {name_hash(n) for n, _ in APPEND_CORPUS} & {r.key for r in committed_records(inner, "arch")}
        handles = check_recovered(inner, "arch", BASE_CORPUS + APPEND_CORPUS)
        for name, content in BASE_CORPUS:
            assert handles.get_file(name) == content
        assert handles.manifest.file_count >= len(BASE_CORPUS) + len(durable)


def test_recovered_archive_accepts_appends():
    inner = base_archive()
    faulty = FaultInjectingBackend(inner, FaultSchedule(25))
    with pytest.raises(InjectedFailure):
        run_append(faulty)
    handles = open_archive(inner, "arch")
    rest = [(n, c) for n, c in APPEND_CORPUS if handles.find_metadata(n) is None]
    handles.append_files(rest)
    for name, content in BASE_CORPUS + APPEND_CORPUS:
        assert handles.get_file(name) == content
    assert all(c.passed for c in verify(handles))


def test_crash_during_recovery_is_recoverable():
    crashed = base_archive()
    with pytest.raises(InjectedFailure):
        run_append(FaultInjectingBackend(crashed, FaultSchedule(40)))
    durable_keys = {r.key for r in committed_records(crashed, "arch")}
    snapshot = {p: crashed.read_all(p) for p in crashed.list()}

    def restore():
        backend = MemoryBackend()
        for path, data in snapshot.items():
            backend.create(path)
            backend.append(path, data)
        return backend

    counting = FaultInjectingBackend(restore())
    open_archive(counting, "arch")
    total = counting.writes
    assert total > 0

    for fail_at in range(1, total + 1):
        inner = restore()
        with pytest.raises(InjectedFailure):
            open_archive(FaultInjectingBackend(inner, FaultSchedule(fail_at)), "arch")
        handles = check_recovered(inner, "arch", BASE_CORPUS + APPEND_CORPUS)
        for name, content in BASE_CORPUS + APPEND_CORPUS:
            if name_hash(name) in durable_keys:
                assert handles.get_file(name) == content
        for name, content in BASE_CORPUS:
            assert handles.get_file(name) == content


def test_crash_after_two_of_five_files():
    files = make_corpus(5, sizes=(10, 20), seed=14, prefix="five")
    fail_at = 1
    while True:
        inner = MemoryBackend()
        with pytest.raises(InjectedFailure):
            create_archive(FaultInjectingBackend(inner, FaultSchedule(fail_at)), "arch", files, sweep_config())
        if len(committed_records(inner, "arch")) == 2:
            break
        fail_at += 1

    handles = open_archive(inner, "arch")
    assert handles.list_names() == [n for n, _ in files[:2]]
    for name, content in files[:2]:
        assert handles.get_file(name) == content
    for name, _ in files[2:]:
        assert handles.find_metadata(name) is None


def test_trailing_junk_in_temporary_index_is_ignored(memory_backend):
    create_archive(memory_backend, "arch", BASE_CORPUS, sweep_config())
    memory_backend.create("arch/_temporaryIndex")
    memory_backend.append("arch/_temporaryIndex", b"\xab" * 10)
    handles = open_archive(memory_backend, "arch")
    assert handles.manifest.file_count == len(BASE_CORPUS)
    for name, content in BASE_CORPUS:
        assert handles.get_file(name) == content
    assert all(c.passed for c in verify(handles))


def test_recovery_keeps_the_temporary_version_of_a_record(memory_backend):
    handles = create_archive(memory_backend, "arch", BASE_CORPUS, sweep_config())
    name, content = BASE_CORPUS[0]
    old = handles.get_metadata(name)
    memory_backend.create("arch/part-9")
    end = memory_backend.append("arch/part-9", b"\x00\x00\x00\x03new")
    memory_backend.create("arch/_temporaryIndex")
    memory_backend.append("arch/_temporaryIndex",
                          MetadataRecord(old.key, 9, end - 7, 7).pack())
    handles = open_archive(memory_backend, "arch")
    assert handles.get_file(name) == b"new"
    assert handles.manifest.file_count == len(BASE_CORPUS)


def test_records_pointing_past_their_part_are_dropped(memory_backend):
    create_archive(memory_backend, "arch", BASE_CORPUS, sweep_config())
    ghost = make_corpus(1, prefix="ghost")[0][0]
    memory_backend.append("arch/_names", encode_name(ghost))
    memory_backend.create("arch/_temporaryIndex")
    memory_backend.append("arch/_temporaryIndex", MetadataRecord(name_hash(ghost), 0, 10**9, 50).pack())
    handles = open_archive(memory_backend, "arch")
    assert handles.find_metadata(ghost) is None
    assert ghost not in handles.list_names()
    assert all(c.passed for c in verify(handles))


def aborted_create(fail_at):
    inner = MemoryBackend()
    with pytest.raises(InjectedFailure):
        create_archive(FaultInjectingBackend(inner, FaultSchedule(fail_at)), "arch", [("a", b"1")])
    assert not inner.exists("arch/_manifest")
    return inner


@pytest.mark.parametrize("fail_at", [2, 3, 4])
def test_create_stopped_before_its_manifest_opens_empty(fail_at):
    inner = aborted_create(fail_at)
    handles = open_archive(inner, "arch")
    assert handles.list_names() == []
    assert handles.manifest.file_count == 0
    assert not [p for p in inner.list("arch/") if p.endswith(".tmp") or p.endswith("_temporaryIndex")]
    assert all(c.passed for c in verify(handles))
    handles.append_files([("a", b"1")])
    assert open_archive(inner, "arch").get_file("a") == b"1"


@pytest.mark.parametrize("fail_at", [2, 3, 4])
def test_create_stopped_before_its_manifest_can_be_retried(fail_at):
    inner = aborted_create(fail_at)
    handles = create_archive(inner, "arch", CREATE_CORPUS[:5], sweep_config())
    assert handles.list_names() == [n for n, _ in CREATE_CORPUS[:5]]
    assert all(c.passed for c in verify(open_archive(inner, "arch")))


def test_prefix_with_foreign_objects_is_left_alone():
    inner = aborted_create(3)
    inner.create("arch/notes.txt")
    with pytest.raises(NotAnArchiveError):
        open_archive(inner, "arch")
    with pytest.raises(ArchiveExistsError):
        create_archive(inner, "arch", [("a", b"1")])
    assert inner.exists("arch/_temporaryIndex")
