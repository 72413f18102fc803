from app.archive import create_archive, open_archive
from app.hashing import name_hash
from app.manifest import ArchiveConfig
from app.storage import IoMeter, MemoryBackend, MeteredBackend
from conftest import make_corpus


def names_routed_to(shape, quotas):
    picked = {b: [] for b in quotas}
    i = 0
    while any(len(picked[b]) < q for b, q in quotas.items()):
        name = f"extra/{i}"
        target = shape.locate_bucket(name_hash(name))
        if target in picked and len(picked[target]) < quotas[target]:
            picked[target].append(name)
        i += 1
    return [n for names in picked.values() for n in names]


def test_append_rewrites_only_the_touched_index_files():
    meter = IoMeter()
    backend = MeteredBackend(MemoryBackend(), meter)
    corpus = make_corpus(200, sizes=(10, 50), seed=21)
    handles = create_archive(backend, "arch", corpus, ArchiveConfig(bucket_capacity=64, workers=2))
    shape = handles.directory
    assert len(shape.buckets) >= 4

    # ten names over the two roomiest buckets, none of which may split
    first, second = sorted(shape.buckets.values(), key=lambda b: b.record_count)[:2]
    take = min(64 - first.record_count, 9)
    quotas = {first.bucket_id: take, second.bucket_id: 10 - take}
    assert second.record_count + quotas[second.bucket_id] <= 64
    targets = list(quotas)
    extra = [(name, name.encode()) for name in names_routed_to(shape, quotas)]
    assert len(extra) == 10

    handles = open_archive(backend, "arch")
    meter.reset()
    handles.append_files(extra)

    written = meter.written_paths()
    index_objects = {p.removesuffix(".tmp") for p in written if p.startswith("arch/index-")}
    assert index_objects == {f"arch/index-{b}" for b in targets}

    others = {p.removesuffix(".tmp") for p in written if not p.startswith("arch/index-")}
    allowed = {"arch/_manifest", "arch/_names", "arch/_temporaryIndex"}
    assert all(p in allowed or p.startswith("arch/part-") for p in others), others

    assert handles.directory.slots == shape.slots
    for name, content in extra + corpus:
        assert handles.get_file(name) == content
