"""
Extendible hash directory routing keys to buckets (one bucket per index file).

Slots are addressed by the low ``global_depth`` bits of a key. A bucket with
local depth d is shared by the 2**(global_depth - d) slots agreeing on its
low d bits. Bucket records may be left unloaded (``records is None``) when the
directory is rebuilt from a persisted shape; they are pulled in through the
``loader`` callback the first time an insert touches that bucket.
"""
import json
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Set

from app.errors import DuplicateKeyError, FormatError, InvalidConfigError, InvalidSplitError
from app.hashing import KEY_BITS, bucket_slot
from app.records import MetadataRecord

logger = logging.getLogger(__name__)

RecordLoader = Callable[[int], Iterable[MetadataRecord]]


@dataclass
class Bucket:
    bucket_id: int
    local_depth: int
    capacity: int
    records: Optional[Dict[int, MetadataRecord]] = field(default_factory=dict)
    record_count: int = 0
    header_length: Optional[int] = None

    @property
    def index_name(self) -> str:
        return f"index-{self.bucket_id}"

    @property
    def loaded(self) -> bool:
        return self.records is not None

    def is_full(self) -> bool:
        return self.record_count >= self.capacity

    def sorted_records(self) -> List[MetadataRecord]:
        return [self.records[k] for k in sorted(self.records)]


@dataclass
class BucketInfo:
    bucket_id: int
    local_depth: int
    record_count: int
    header_length: Optional[int] = None


@dataclass
class DirectoryShape:
    """Persisted directory: slot table plus per-bucket counts, no records."""

    global_depth: int
    slots: List[int]
    buckets: Dict[int, BucketInfo]

    def locate_bucket(self, key: int) -> int:
        return self.slots[bucket_slot(key, self.global_depth)]

    def to_dict(self) -> dict:
        return {
            "global_depth": self.global_depth,
            "slots": list(self.slots),
            "buckets": [
                {"id": b.bucket_id, "local_depth": b.local_depth,
                 "record_count": b.record_count, "header_length": b.header_length}
                for b in sorted(self.buckets.values(), key=lambda b: b.bucket_id)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DirectoryShape":
        try:
            depth = int(data["global_depth"])
            slots = [int(s) for s in data["slots"]]
            buckets = {}
            for entry in data["buckets"]:
                info = BucketInfo(int(entry["id"]), int(entry["local_depth"]),
                                  int(entry["record_count"]), entry.get("header_length"))
                buckets[info.bucket_id] = info
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"malformed directory: {e}")
        shape = cls(depth, slots, buckets)
        shape.check()
        return shape

    def check(self):
        if not 0 <= self.global_depth <= KEY_BITS:
            raise FormatError(f"global depth {self.global_depth} out of range")
        if len(self.slots) != 1 << self.global_depth:
            raise FormatError(f"{len(self.slots)} slots for global depth {self.global_depth}")
        refs: Dict[int, int] = {}
        for s in self.slots:
            if s not in self.buckets:
                raise FormatError(f"slot refers to unknown bucket {s}")
            refs[s] = refs.get(s, 0) + 1
        for b in self.buckets.values():
            if b.local_depth > self.global_depth:
                raise FormatError(f"bucket {b.bucket_id} deeper than the directory")
            if refs.get(b.bucket_id, 0) != 1 << (self.global_depth - b.local_depth):
                raise FormatError(f"bucket {b.bucket_id} has a wrong slot reference count")


def serialize_directory(directory) -> bytes:
    shape = directory.shape() if isinstance(directory, ExtendibleDirectory) else directory
    return json.dumps(shape.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def deserialize_directory(data: bytes) -> DirectoryShape:
    try:
        decoded = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"directory is not valid JSON: {e}")
    return DirectoryShape.from_dict(decoded)


class ExtendibleDirectory:
    """
    In-memory extendible hash table. Inserts are serialized by an internal lock
    so concurrent merge workers may share one instance.
    """

    def __init__(self, capacity: int, first_id: int = 0, loader: Optional[RecordLoader] = None):
        if capacity < 1:
            raise InvalidConfigError(f"bucket capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.global_depth = 0
        root = Bucket(first_id, 0, capacity)
        self.buckets: Dict[int, Bucket] = {root.bucket_id: root}
        self.slots: List[Bucket] = [root]
        self._next_id = first_id + 1
        self._loader = loader
        self._lock = threading.RLock()

    @classmethod
    def from_shape(cls, shape: DirectoryShape, capacity: int, loader: RecordLoader) -> "ExtendibleDirectory":
        directory = cls(capacity, loader=loader)
        directory.global_depth = shape.global_depth
        directory.buckets = {
            info.bucket_id: Bucket(info.bucket_id, info.local_depth, capacity, records=None,
                                   record_count=info.record_count, header_length=info.header_length)
            for info in shape.buckets.values()
        }
        directory.slots = [directory.buckets[s] for s in shape.slots]
        directory._next_id = max(directory.buckets) + 1
        return directory

    def shape(self) -> DirectoryShape:
        return DirectoryShape(
            self.global_depth,
            [b.bucket_id for b in self.slots],
            {b.bucket_id: BucketInfo(b.bucket_id, b.local_depth, b.record_count, b.header_length)
             for b in self.buckets.values()},
        )

    def locate_bucket(self, key: int) -> int:
        return self.slots[bucket_slot(key, self.global_depth)].bucket_id

    def bucket(self, bucket_id: int) -> Bucket:
        return self.buckets[bucket_id]

    def load(self, bucket: Bucket):
        if bucket.loaded:
            return
        records = {r.key: r for r in self._loader(bucket.bucket_id)}
        if len(records) != bucket.record_count:
            raise FormatError(f"{bucket.index_name} holds {len(records)} records, "
                              f"directory expects {bucket.record_count}", obj=bucket.index_name)
        bucket.records = records

    def contains(self, key: int) -> bool:
        with self._lock:
            bucket = self.slots[bucket_slot(key, self.global_depth)]
            self.load(bucket)
            return key in bucket.records

    def insert(self, record: MetadataRecord) -> Set[int]:
        """Store ``record``; returns ids of every bucket whose record set changed."""
        with self._lock:
            bucket = self.slots[bucket_slot(record.key, self.global_depth)]
            self.load(bucket)
            if record.key in bucket.records:
                raise DuplicateKeyError(f"key {record.key} already stored in {bucket.index_name}")

            changed = set()
            while bucket.is_full():
                changed.add(bucket.bucket_id)
                changed.add(self.split_bucket(bucket.bucket_id))
                bucket = self.slots[bucket_slot(record.key, self.global_depth)]
            bucket.records[record.key] = record
            bucket.record_count += 1
            changed.add(bucket.bucket_id)
            return changed

    def split_bucket(self, bucket_id: int) -> int:
        with self._lock:
            old = self.buckets[bucket_id]
            if not old.is_full():
                raise InvalidSplitError(f"{old.index_name} holds {old.record_count} of "
                                        f"{old.capacity} records; only full buckets split")
            if old.local_depth >= KEY_BITS:
                raise InvalidSplitError(f"{old.index_name} is already at depth {KEY_BITS}")
            self.load(old)

            if old.local_depth == self.global_depth:
                self.slots = self.slots + self.slots
                self.global_depth += 1

            bit = 1 << old.local_depth
            new = Bucket(self._next_id, old.local_depth + 1, self.capacity)
            self._next_id += 1
            old.local_depth += 1
            self.buckets[new.bucket_id] = new

            moved = {k: r for k, r in old.records.items() if k & bit}
            for k in moved:
                del old.records[k]
            new.records = moved
            old.record_count = len(old.records)
            new.record_count = len(moved)
            for s, b in enumerate(self.slots):
                if b is old and s & bit:
                    self.slots[s] = new

            logger.debug(f"Split {old.index_name} -> {new.index_name} "
                         f"(depth {old.local_depth}, global {self.global_depth})")
            return new.bucket_id

    def all_records(self) -> List[MetadataRecord]:
        out = []
        for b in self.buckets.values():
            self.load(b)
            out.extend(b.records.values())
        return out


def new_directory(capacity: int) -> ExtendibleDirectory:
    return ExtendibleDirectory(capacity)


def locate_bucket(directory, key: int) -> int:
    return directory.locate_bucket(key)
