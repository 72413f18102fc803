"""
The archive container: creation, append, open-with-recovery and lookups.

A lookup hashes the name, routes the key through the directory stored in
the manifest to one index file, ranks the key with that file's monotone
index header and then reads exactly one 24-byte record at
``Υ + rank * 24``. One more ranged read fetches the content frame.
"""
import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from app.directory import DirectoryShape, ExtendibleDirectory
from app.errors import (ArchiveDirtyError, ArchiveExistsError, DuplicateKeyError, HpfError,
                        IntegrityError, NotAnArchiveError, NotFoundError, RangeError)
from app.hashing import name_hash
from app.index_file import load_header, read_index_file, record_offset
from app.manifest import (TMP_SUFFIX, ArchiveConfig, ArchiveLayout, ArchiveManifest, collect_parts,
                          read_manifest, write_manifest)
from app.merge import ContentSource, MergeSession, prepare_files
from app.monotone_index import MonotoneIndex
from app.records import RECORD, MetadataRecord, decode_frame, decode_names
from app.recovery import recover

logger = logging.getLogger(__name__)


@dataclass
class BucketStats:
    bucket_id: int
    local_depth: int
    records: int
    header_length: int
    bits_per_key: float


@dataclass
class ArchiveStats:
    file_count: int
    part_count: int
    part_bytes: int
    index_count: int
    index_bytes: int
    global_depth: int
    codec: str
    bucket_capacity: int
    buckets: List[BucketStats] = field(default_factory=list)


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: List[str] = field(default_factory=list)


class ArchiveHandles:
    """
    An open archive. Any number of threads may read through one handle;
    ``append_files`` must not run concurrently with reads.
    """

    def __init__(self, backend, layout: ArchiveLayout, manifest: ArchiveManifest):
        self.backend = backend
        self.layout = layout
        self.manifest = manifest
        self._headers: Dict[int, Tuple[MonotoneIndex, int]] = {}

    @property
    def directory(self) -> DirectoryShape:
        return self.manifest.directory

    # ----------------------------------------
    # Lookup
    # ----------------------------------------

    def _header(self, bucket_id):
        cached = self._headers.get(bucket_id)
        if cached is None:
            info = self.directory.buckets[bucket_id]
            cached = load_header(self.backend, self.layout.index(bucket_id), info.header_length)
            self._headers[bucket_id] = cached
        return cached

    def load_headers(self):
        """Make every index header resident."""
        with self.backend.phase("metadata"):
            for bucket_id in self.directory.buckets:
                self._header(bucket_id)

    def pin_indexes(self):
        for bucket_id in self.directory.buckets:
            self.backend.pin(self.layout.index(bucket_id))

    def find_metadata(self, name: str) -> Optional[MetadataRecord]:
        key = name_hash(name)
        bucket_id = self.directory.locate_bucket(key)
        index, header_length = self._header(bucket_id)
        rank = index.eval_rank(key)
        if rank is None:
            return None
        path = self.layout.index(bucket_id)
        record = MetadataRecord.unpack(
            self.backend.read_range(path, record_offset(header_length, rank), RECORD.size))
        if record.key != key:
            logger.warning(f"{path} rank {rank} holds key {record.key}, expected {key}")
            return None
        return record

    def get_metadata(self, name: str) -> MetadataRecord:
        with self.backend.phase("metadata"):
            record = self.find_metadata(name)
        if record is None:
            raise NotFoundError(f"'{name}' is not in the archive")
        return record

    def read_content(self, record: MetadataRecord) -> bytes:
        part = self.layout.part(record.part_position)
        with self.backend.phase("content"):
            try:
                frame = self.backend.read_range(part, record.offset, record.stored_size)
            except (RangeError, NotFoundError) as e:
                raise IntegrityError(f"record points outside {part}: {e}", obj=part, offset=record.offset)
        return decode_frame(frame, self.manifest.codec, obj=part, offset=record.offset)

    def get_file(self, name: str) -> bytes:
        return self.read_content(self.get_metadata(name))

    def list_names(self) -> List[str]:
        return decode_names(self.backend.read_all(self.layout.names), obj=self.layout.names)

    # ----------------------------------------
    # Append
    # ----------------------------------------

    def _bucket_records(self, bucket_id):
        _, _, records = read_index_file(self.backend, self.layout.index(bucket_id))
        return records

    def append_files(self, files: Iterable[Tuple[str, ContentSource]]) -> "ArchiveHandles":
        if self.backend.exists(self.layout.temporary_index):
            raise ArchiveDirtyError(f"{self.layout.temporary_index} present; reopen the archive to recover")
        prepared = prepare_files(files)
        for name, key, _ in prepared:
            if self.find_metadata(name) is not None:
                raise DuplicateKeyError(f"'{name}' (key {key}) is already archived")

        manifest = copy.deepcopy(self.manifest)
        existing = set(manifest.directory.buckets)
        self.backend.create(self.layout.temporary_index)
        directory = ExtendibleDirectory.from_shape(
            manifest.directory, manifest.bucket_capacity, loader=self._bucket_records)

        roster = sorted(p.part_id for p in manifest.parts)
        worker_parts = roster[-manifest.workers:]
        next_part = roster[-1] + 1 if roster else 0
        while len(worker_parts) < manifest.workers:
            self.backend.create(self.layout.part(next_part), lazy_persist=manifest.lazy_persist)
            worker_parts.append(next_part)
            next_part += 1

        session = MergeSession(self.backend, self.layout, manifest, directory, worker_parts)
        session.merge(prepared)
        session.commit(session.changed, existing)

        self.manifest = manifest
        for bucket_id in session.changed:
            self._headers.pop(bucket_id, None)
        logger.info(f"Appended {len(prepared)} files to {self.layout.root}")
        return self

    # ----------------------------------------
    # Reporting
    # ----------------------------------------

    def stats(self) -> ArchiveStats:
        self.load_headers()
        buckets = []
        index_bytes = 0
        for bucket_id in sorted(self.directory.buckets):
            info = self.directory.buckets[bucket_id]
            index, header_length = self._header(bucket_id)
            index_bytes += self.backend.length(self.layout.index(bucket_id))
            buckets.append(BucketStats(bucket_id, info.local_depth, len(index),
                                       header_length, round(index.bits_per_key, 3)))
        parts = collect_parts(self.backend, self.layout)
        return ArchiveStats(
            file_count=self.manifest.file_count,
            part_count=len(parts),
            part_bytes=sum(p.length for p in parts),
            index_count=len(buckets),
            index_bytes=index_bytes,
            global_depth=self.directory.global_depth,
            codec=self.manifest.codec_name,
            bucket_capacity=self.manifest.bucket_capacity,
            buckets=buckets,
        )

    def extract_all(self, dest) -> int:
        dest = Path(dest)
        count = 0
        for name in self.list_names():
            target = (dest / name).resolve()
            if dest.resolve() not in target.parents:
                logger.warning(f"Skipping '{name}': would extract outside {dest}")
                continue
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(self.get_file(name))
            count += 1
        return count


def clear_aborted_create(backend, layout: ArchiveLayout) -> bool:
    """
    Remove what a create leaves behind when it dies before its first manifest:
    the temporary index and ``*.tmp`` objects, nothing else. Returns False,
    touching nothing, when the prefix holds anything more.
    """
    objects = backend.list(layout.prefix)
    if layout.temporary_index not in objects:
        return False
    if any(p != layout.temporary_index and not p.endswith(TMP_SUFFIX) for p in objects):
        return False
    for path in objects:
        if path.endswith(TMP_SUFFIX):
            backend.delete(path)
    return True


def start_archive(backend, layout: ArchiveLayout,
                  cfg: ArchiveConfig) -> Tuple[ArchiveManifest, ExtendibleDirectory]:
    if not backend.exists(layout.temporary_index):
        backend.create(layout.temporary_index)
    directory = ExtendibleDirectory(cfg.effective_capacity)
    manifest = ArchiveManifest.initial(cfg, directory.shape(), parts=[])
    write_manifest(backend, layout, manifest)
    backend.create(layout.names)
    for part_id in range(cfg.workers):
        backend.create(layout.part(part_id), lazy_persist=cfg.lazy_persist)
    return manifest, directory


def create_archive(backend, archive_path: str, files: Iterable[Tuple[str, ContentSource]],
                   cfg: Optional[ArchiveConfig] = None) -> ArchiveHandles:
    cfg = cfg or ArchiveConfig()
    layout = ArchiveLayout(archive_path)
    prepared = prepare_files(files)
    if backend.list(layout.prefix):
        if not clear_aborted_create(backend, layout):
            raise ArchiveExistsError(f"{archive_path} already holds objects")
        logger.warning(f"Reusing {archive_path}: an earlier create stopped before its manifest")

    manifest, directory = start_archive(backend, layout, cfg)
    session = MergeSession(backend, layout, manifest, directory, list(range(cfg.workers)))
    session.merge(prepared)
    session.commit(directory.buckets.keys(), existing_ids=set())
    logger.info(f"Created {archive_path}: {len(prepared)} files, "
                f"{len(directory.buckets)} index files, codec {cfg.codec}")
    return ArchiveHandles(backend, layout, manifest)


def open_archive(backend, archive_path: str) -> ArchiveHandles:
    layout = ArchiveLayout(archive_path)
    if not backend.exists(layout.manifest):
        if not clear_aborted_create(backend, layout):
            raise NotAnArchiveError(f"{archive_path} has no {layout.manifest}")
        # no file is merged before the first manifest exists
        logger.warning(f"{archive_path}: create stopped before its manifest; starting an empty archive")
        cfg = ArchiveConfig()
        manifest, directory = start_archive(backend, layout, cfg)
        MergeSession(backend, layout, manifest, directory, list(range(cfg.workers))).commit(
            directory.buckets.keys(), existing_ids=set())
        return ArchiveHandles(backend, layout, manifest)
    if backend.exists(layout.temporary_index):
        manifest = recover(backend, layout)
    else:
        manifest = read_manifest(backend, layout)
    return ArchiveHandles(backend, layout, manifest)


def append_files(handles: ArchiveHandles, files: Iterable[Tuple[str, ContentSource]]) -> ArchiveHandles:
    return handles.append_files(files)


# ----------------------------------------
# Verification
# ----------------------------------------

def verify(handles: ArchiveHandles) -> List[CheckResult]:
    """Run the integrity checks; each result names the objects that failed."""
    backend, layout, manifest = handles.backend, handles.layout, handles.manifest
    shape = manifest.directory

    parts = CheckResult("parts", True)
    on_disk = {p.part_id: p.length for p in collect_parts(backend, layout)}
    if on_disk != manifest.part_lengths():
        parts.passed = False
        parts.details.append(f"part roster {sorted(on_disk)} differs from manifest "
                             f"{sorted(manifest.part_lengths())}")

    ordering = CheckResult("index-ordering", True)
    agreement = CheckResult("directory-agreement", True)
    records: List[MetadataRecord] = []
    for bucket_id in sorted(shape.buckets):
        path = layout.index(bucket_id)
        info = shape.buckets[bucket_id]
        try:
            index, header_length, body = read_index_file(backend, path)
        except HpfError as e:
            ordering.passed = False
            ordering.details.append(f"{path}: {e}")
            continue
        if info.header_length is not None and info.header_length != header_length:
            ordering.passed = False
            ordering.details.append(f"{path}: header is {header_length} bytes, manifest says {info.header_length}")
        if len(body) != info.record_count:
            ordering.passed = False
            ordering.details.append(f"{path}: {len(body)} records, manifest says {info.record_count}")
        for rank, r in enumerate(body):
            if rank and r.key <= body[rank - 1].key:
                ordering.passed = False
                ordering.details.append(f"{path}: record {rank} breaks key order")
            if index.eval_rank(r.key) != rank:
                ordering.passed = False
                ordering.details.append(f"{path}: record {rank} (key {r.key}) does not match its index rank")
            if shape.locate_bucket(r.key) != bucket_id:
                agreement.passed = False
                agreement.details.append(f"{path}: key {r.key} routes to index-{shape.locate_bucket(r.key)}")
        records.extend(body)

    names = CheckResult("names", True)
    try:
        roster = handles.list_names()
    except HpfError as e:
        names.passed = False
        names.details.append(str(e))
        roster = []
    if names.passed:
        for name in roster:
            if handles.find_metadata(name) is None:
                names.passed = False
                names.details.append(f"'{name}' listed in {layout.names} but has no record")
        if len(roster) != manifest.file_count or len(records) != manifest.file_count:
            names.passed = False
            names.details.append(f"{len(roster)} names and {len(records)} records for "
                                 f"file count {manifest.file_count}")

    round_trip = CheckResult("round-trip", True)
    for r in records:
        try:
            handles.read_content(r)
        except HpfError as e:
            round_trip.passed = False
            round_trip.details.append(str(e))

    manifest_check = CheckResult("manifest", True)
    if sum(b.record_count for b in shape.buckets.values()) != manifest.file_count:
        manifest_check.passed = False
        manifest_check.details.append(f"{layout.manifest}: bucket counts do not sum to file count")
    if backend.exists(layout.temporary_index):
        manifest_check.passed = False
        manifest_check.details.append(f"{layout.temporary_index} present")

    return [manifest_check, parts, ordering, agreement, names, round_trip]
