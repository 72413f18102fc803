"""
The merge phase shared by archive creation and append.

Files are dealt round-robin to ``workers`` threads. Each worker appends
content frames to its own part object, rotating to a fresh part once the
current one reaches ``max_part_size``. Per-file commits (name, temporary
record, directory insert) go through one lock so they are linearizable.
"""
import logging
import os
import threading
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from typing import Callable, Dict, Iterable, List, Set, Tuple, Union

from app.directory import ExtendibleDirectory
from app.errors import ContentSourceError, DuplicateKeyError, DuplicateNameError
from app.hashing import name_hash
from app.index_file import write_index_file
from app.manifest import ArchiveLayout, ArchiveManifest, collect_parts, write_manifest
from app.records import MetadataRecord, encode_frame, encode_name

logger = logging.getLogger(__name__)

ContentSource = Union[bytes, bytearray, memoryview, os.PathLike, Callable[[], bytes]]
PreparedFile = Tuple[str, int, ContentSource]


def prepare_files(files: Iterable[Tuple[str, ContentSource]]) -> List[PreparedFile]:
    """Hash every name and reject duplicate names or colliding keys up front."""
    prepared = []
    by_name: Set[str] = set()
    by_key: Dict[int, str] = {}
    for name, source in files:
        if not isinstance(name, str):
            raise TypeError(f"file name must be str, got {type(name).__name__}")
        if name in by_name:
            raise DuplicateNameError(f"file name '{name}' given twice")
        key = name_hash(name)
        if key in by_key:
            raise DuplicateKeyError(f"names '{by_key[key]}' and '{name}' share key {key}")
        by_name.add(name)
        by_key[key] = name
        prepared.append((name, key, source))
    return prepared


def read_source(name: str, source: ContentSource) -> bytes:
    try:
        if isinstance(source, (bytes, bytearray, memoryview)):
            return bytes(source)
        if isinstance(source, os.PathLike):
            with open(source, "rb") as f:
                return f.read()
        if hasattr(source, "read"):
            return source.read()
        if callable(source):
            return bytes(source())
    except OSError as e:
        raise ContentSourceError(f"cannot read content of '{name}': {e}")
    raise ContentSourceError(f"unsupported content source for '{name}': {type(source).__name__}")


class MergeSession:
    def __init__(self, backend, layout: ArchiveLayout, manifest: ArchiveManifest,
                 directory: ExtendibleDirectory, worker_parts: List[int]):
        self.backend = backend
        self.layout = layout
        self.manifest = manifest
        self.directory = directory
        self.worker_parts = list(worker_parts)
        self.part_lengths = {p: backend.length(layout.part(p)) for p in self.worker_parts}
        known = [p.part_id for p in manifest.parts] + self.worker_parts
        self._next_part = max(known) + 1
        self.changed: Set[int] = set()
        self.committed = 0
        self._part_lock = threading.Lock()
        self._commit_lock = threading.Lock()
        self._abort = threading.Event()

    def _part_for(self, worker):
        part_id = self.worker_parts[worker]
        limit = self.manifest.max_part_size
        if limit and self.part_lengths[part_id] >= limit:
            with self._part_lock:
                part_id = self._next_part
                self._next_part += 1
            self.backend.create(self.layout.part(part_id), lazy_persist=self.manifest.lazy_persist)
            logger.debug(f"Worker {worker} rotated to part-{part_id}")
            self.worker_parts[worker] = part_id
            self.part_lengths[part_id] = 0
        return part_id

    def _run_worker(self, worker, assigned):
        codec = self.manifest.codec
        for name, key, source in assigned:
            if self._abort.is_set():
                return
            frame = encode_frame(read_source(name, source), codec)
            part_id = self._part_for(worker)
            end = self.backend.append(self.layout.part(part_id), frame)
            self.part_lengths[part_id] = end
            record = MetadataRecord(key, part_id, end - len(frame), len(frame))
            with self._commit_lock:
                self.backend.append(self.layout.names, encode_name(name))
                self.backend.append(self.layout.temporary_index, record.pack())
                self.changed |= self.directory.insert(record)
                self.committed += 1

    def merge(self, files: List[PreparedFile]) -> Set[int]:
        workers = len(self.worker_parts)
        batches = [files[w::workers] for w in range(workers)]
        if workers == 1:
            self._run_worker(0, batches[0])
            return self.changed

        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="hpf-merge") as pool:
            futures = [pool.submit(self._run_worker, w, batch) for w, batch in enumerate(batches)]
            done, _ = wait(futures, return_when=FIRST_EXCEPTION)
            for f in done:
                if f.exception() is not None:
                    self._abort.set()
                    raise f.exception()
        for f in futures:
            f.result()
        return self.changed

    def commit(self, bucket_ids: Iterable[int], existing_ids: Set[int]):
        """
        Rewrite the given index files, then the manifest, then drop the
        temporary index. New bucket ids are written before existing files are
        overwritten so records moved by a split always survive in some file.
        """
        ids = set(bucket_ids)
        order = sorted(ids - existing_ids) + sorted(ids & existing_ids)
        for bucket_id in order:
            bucket = self.directory.bucket(bucket_id)
            self.directory.load(bucket)
            bucket.header_length = write_index_file(
                self.backend, self.layout.index(bucket_id), list(bucket.records.values()))

        parts = collect_parts(self.backend, self.layout)
        for p in parts:
            if self.backend.is_lazy(self.layout.part(p.part_id)):
                self.backend.persist(self.layout.part(p.part_id))
        self.manifest.parts = parts
        self.manifest.directory = self.directory.shape()
        self.manifest.file_count += self.committed
        write_manifest(self.backend, self.layout, self.manifest)
        self.backend.delete(self.layout.temporary_index)
        logger.info(f"Committed {self.committed} files, rewrote {len(order)} index files "
                    f"({len(parts)} parts, depth {self.directory.global_depth})")
