import random
from collections import Counter

import pytest

from app.directory import (DirectoryShape, ExtendibleDirectory, deserialize_directory, locate_bucket,
                           new_directory, serialize_directory)
from app.errors import DuplicateKeyError, FormatError, InvalidConfigError, InvalidSplitError
from app.records import MetadataRecord


def record(key, part=0):
    return MetadataRecord(key, part, key % 1000, 10)


def check_directory(directory, inserted):
    g = directory.global_depth
    assert len(directory.slots) == 1 << g

    # every key routes to the bucket that holds it
    stored = {}
    for bucket in directory.buckets.values():
        assert bucket.record_count == len(bucket.records) <= bucket.capacity
        assert bucket.local_depth <= g
        suffix = None
        mask = (1 << bucket.local_depth) - 1
        for key in bucket.records:
            assert key not in stored
            stored[key] = bucket.bucket_id
            assert locate_bucket(directory, key) == bucket.bucket_id
            if suffix is None:
                suffix = key & mask
            assert key & mask == suffix

    # nothing lost or invented by splits
    assert set(stored) == inserted

    refs = Counter(b.bucket_id for b in directory.slots)
    for bucket in directory.buckets.values():
        assert refs[bucket.bucket_id] == 1 << (g - bucket.local_depth)

    # a slot points at the bucket whose suffix it extends
    for slot, bucket in enumerate(directory.slots):
        mask = (1 << bucket.local_depth) - 1
        for key in bucket.records:
            assert key & mask == slot & mask
            break


@pytest.mark.parametrize("capacity,n", [(1, 300), (2, 2000), (4, 10000), (7, 10000),
                                        (16, 10000), (33, 10000), (64, 10000)])
def test_random_inserts_keep_directory_sound(capacity, n):
    rng = random.Random(capacity)
    directory = new_directory(capacity)
    inserted = set()
    while len(inserted) < n:
        key = rng.getrandbits(64)
        if key in inserted:
            continue
        changed = directory.insert(record(key))
        assert directory.locate_bucket(key) in changed
        inserted.add(key)
        if len(inserted) in (1, n // 10, n // 2):
            check_directory(directory, inserted)
    check_directory(directory, inserted)
    assert sorted(r.key for r in directory.all_records()) == sorted(inserted)


def test_split_moves_records_on_the_next_bit():
    directory = ExtendibleDirectory(2)
    directory.insert(record(0b000))
    directory.insert(record(0b001))
    changed = directory.insert(record(0b011))
    assert directory.global_depth == 1
    assert changed == {0, 1}
    assert set(directory.bucket(0).records) == {0b000}
    assert set(directory.bucket(1).records) == {0b001, 0b011}


def test_cascading_split_when_keys_share_a_long_suffix():
    directory = ExtendibleDirectory(1)
    directory.insert(record(0b0000))
    changed = directory.insert(record(0b1000))
    assert directory.global_depth == 4
    assert directory.locate_bucket(0b0000) != directory.locate_bucket(0b1000)
    assert directory.locate_bucket(0b1000) in changed
    check_directory(directory, {0b0000, 0b1000})


def test_duplicate_key_leaves_directory_untouched():
    directory = ExtendibleDirectory(1)
    directory.insert(record(5))
    before = serialize_directory(directory)
    with pytest.raises(DuplicateKeyError):
        directory.insert(record(5, part=3))
    assert serialize_directory(directory) == before
    assert directory.bucket(0).records[5].part_position == 0


def test_split_requires_a_full_bucket():
    directory = ExtendibleDirectory(4)
    directory.insert(record(1))
    with pytest.raises(InvalidSplitError):
        directory.split_bucket(0)


def test_capacity_must_be_positive():
    with pytest.raises(InvalidConfigError):
        ExtendibleDirectory(0)


def test_shape_round_trip_and_validation():
    rng = random.Random(3)
    directory = ExtendibleDirectory(3)
    for _ in range(200):
        directory.insert(record(rng.getrandbits(64)))
    shape = directory.shape()
    again = deserialize_directory(serialize_directory(shape))
    assert again == shape
    for key in (r.key for r in directory.all_records()):
        assert again.locate_bucket(key) == directory.locate_bucket(key)

    broken = shape.to_dict()
    broken["slots"] = broken["slots"][:-1]
    with pytest.raises(FormatError):
        DirectoryShape.from_dict(broken)
    with pytest.raises(FormatError):
        deserialize_directory(b"{not json")


def test_from_shape_loads_only_touched_buckets():
    rng = random.Random(9)
    source = ExtendibleDirectory(4)
    keys = [rng.getrandbits(64) for _ in range(100)]
    for key in keys:
        source.insert(record(key))
    loaded = []

    def loader(bucket_id):
        loaded.append(bucket_id)
        return source.bucket(bucket_id).records.values()

    directory = ExtendibleDirectory.from_shape(source.shape(), 4, loader)
    assert directory.contains(keys[0])
    assert loaded == [source.locate_bucket(keys[0])]
    assert all(b.records is None for b in directory.buckets.values() if b.bucket_id not in loaded)

    new_key = rng.getrandbits(64)
    changed = directory.insert(record(new_key))
    assert set(changed) <= set(directory.buckets)
    assert max(directory.buckets) >= max(source.buckets)
    assert directory.locate_bucket(new_key) in changed


def test_new_directory_shape():
    directory = new_directory(200_000)
    assert directory.global_depth == 0
    assert directory.capacity == 200_000
    assert [b.bucket_id for b in directory.slots] == [0]
    shape = deserialize_directory(serialize_directory(directory))
    assert shape.global_depth == 0 and shape.slots == [0]
    assert shape.buckets[0].record_count == 0


def test_split_of_shallow_bucket_rewires_slots_without_doubling():
    directory = ExtendibleDirectory(2)
    for key in (0b000, 0b010, 0b001):
        directory.insert(record(key))
    # bucket 0 split on bit 0, leaving 0b000 and 0b010 together
    directory.insert(record(0b101))
    assert directory.global_depth == 1
    directory.insert(record(0b100))
    assert directory.global_depth == 2
    shallow = directory.bucket(directory.locate_bucket(0b001))
    assert shallow.local_depth == 1
    directory.insert(record(0b011))
    depth = directory.global_depth
    check_directory(directory, {0b000, 0b010, 0b001, 0b101, 0b100, 0b011})
    assert depth == 2
