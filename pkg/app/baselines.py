"""
Two reference containers the benchmark compares the archive against.

Both store ``[u32 name length][name][u64 size][content]`` frames in one data
object and differ only in how a lookup finds its frame:

* ``ScanContainer`` mimics a HAR-style archive accessed through a sequence
  file: two small fixed index reads, then a linear scan of the data object
  from the start until the name turns up.
* ``SparseContainer`` mimics a MapFile: frames sorted by name plus a sparse
  index of every ``SPARSE_INDEX_INTERVAL``-th name; a lookup binary-searches
  the sparse index and scans forward through at most one interval of frames.

``NativeStore`` keeps every file in its own object, the way files sit directly
on the file system without any container: one small metadata read for the
stored size, then one content read.

They are IO-shape models, not format-compatible ports.
"""
import bisect
import logging
import struct
from typing import Iterable, List, Optional, Tuple

import config
from app.errors import FormatError, NotFoundError
from app.hashing import name_hash
from app.manifest import ArchiveLayout
from app.merge import ContentSource, prepare_files, read_source

logger = logging.getLogger(__name__)

NAME_LEN = struct.Struct(">I")
SIZE = struct.Struct(">Q")
MASTER_INDEX = struct.Struct(">4sQQ")
SPARSE_ENTRY = struct.Struct(">Q")


def encode_entry(name: str, content: bytes) -> bytes:
    raw = name.encode("utf-8")
    return NAME_LEN.pack(len(raw)) + raw + SIZE.pack(len(content)) + content


class SequentialReader:
    """Reads an object front to back in fixed-size chunks, like a buffered input stream."""

    def __init__(self, backend, path: str, start: int = 0, chunk: int = config.SCAN_READ_CHUNK):
        self.backend = backend
        self.path = path
        self.chunk = chunk
        self.end = backend.length(path)
        self._next = start
        self._buf = b""
        self._pos = 0

    def _fill(self, need):
        parts = [self._buf[self._pos:]]
        have = len(parts[0])
        while have < need and self._next < self.end:
            size = min(self.chunk, self.end - self._next)
            parts.append(self.backend.read_range(self.path, self._next, size))
            self._next += size
            have += size
        self._buf = b"".join(parts)
        self._pos = 0

    def at_end(self) -> bool:
        return self._pos >= len(self._buf) and self._next >= self.end

    def read(self, n: int) -> bytes:
        if len(self._buf) - self._pos < n:
            self._fill(n)
            if len(self._buf) < n:
                raise FormatError(f"truncated frame: wanted {n} bytes", obj=self.path)
        data = self._buf[self._pos:self._pos + n]
        self._pos += n
        return data

    def next_entry(self) -> Tuple[str, bytes]:
        (name_len,) = NAME_LEN.unpack(self.read(NAME_LEN.size))
        name = self.read(name_len).decode("utf-8")
        (size,) = SIZE.unpack(self.read(SIZE.size))
        return name, self.read(size)


class _Container:
    kind = "container"

    def __init__(self, backend, root: str):
        self.backend = backend
        self.layout = ArchiveLayout(root)

    @property
    def data(self) -> str:
        return self.layout.obj("data")

    def size(self) -> int:
        return sum(self.backend.length(p) for p in self.backend.list(self.layout.prefix))

    def _write(self, path, entries):
        self.backend.create(path)
        for entry in entries:
            self.backend.append(path, entry)


class ScanContainer(_Container):
    kind = "scan"

    def __init__(self, backend, root: str, client_cache: bool = False):
        super().__init__(backend, root)
        self.client_cache = client_cache
        self._indexes_read = False

    @property
    def master_index(self) -> str:
        return self.layout.obj("_masterindex")

    @property
    def index(self) -> str:
        return self.layout.obj("_index")

    @classmethod
    def build(cls, backend, root: str, files: Iterable[Tuple[str, ContentSource]],
              client_cache: bool = False) -> "ScanContainer":
        container = cls(backend, root, client_cache=client_cache)
        prepared = prepare_files(files)
        container._write(container.data, (encode_entry(n, read_source(n, s)) for n, _, s in prepared))
        summary = MASTER_INDEX.pack(b"HSCN", len(prepared), backend.length(container.data))
        container._write(container.master_index, [summary])
        container._write(container.index, [summary])
        logger.info(f"Built scan container {root} with {len(prepared)} files")
        return container

    def get(self, name: str) -> bytes:
        if not self._indexes_read:
            with self.backend.phase("metadata"):
                self.backend.read_all(self.master_index)
                self.backend.read_all(self.index)
            # with a client cache both index objects stay in memory after the first lookup
            self._indexes_read = self.client_cache
        with self.backend.phase("content"):
            reader = SequentialReader(self.backend, self.data)
            while not reader.at_end():
                entry_name, content = reader.next_entry()
                if entry_name == name:
                    return content
        raise NotFoundError(f"'{name}' is not in {self.layout.root}")


class SparseContainer(_Container):
    kind = "sparse"
    interval = config.SPARSE_INDEX_INTERVAL

    def __init__(self, backend, root: str, client_cache: bool = False):
        super().__init__(backend, root)
        self.client_cache = client_cache
        self._cached: Optional[Tuple[List[str], List[int]]] = None

    @property
    def index(self) -> str:
        return self.layout.obj("index")

    @classmethod
    def build(cls, backend, root: str, files: Iterable[Tuple[str, ContentSource]],
              client_cache: bool = False,
              interval: int = config.SPARSE_INDEX_INTERVAL) -> "SparseContainer":
        container = cls(backend, root, client_cache=client_cache)
        prepared = sorted(prepare_files(files), key=lambda f: f[0])
        backend.create(container.data)
        sparse = []
        offset = 0
        for i, (name, _, source) in enumerate(prepared):
            entry = encode_entry(name, read_source(name, source))
            if i % interval == 0:
                raw = name.encode("utf-8")
                sparse.append(NAME_LEN.pack(len(raw)) + raw + SPARSE_ENTRY.pack(offset))
            offset = backend.append(container.data, entry)
        container._write(container.index, [b"".join(sparse)])
        container.interval = interval
        logger.info(f"Built sparse container {root} with {len(prepared)} files, {len(sparse)} index entries")
        return container

    def _sparse_index(self):
        if self._cached is not None:
            return self._cached
        data = self.backend.read_all(self.index)
        names, offsets = [], []
        pos = 0
        while pos < len(data):
            (name_len,) = NAME_LEN.unpack_from(data, pos)
            pos += NAME_LEN.size
            names.append(data[pos:pos + name_len].decode("utf-8"))
            pos += name_len
            (offset,) = SPARSE_ENTRY.unpack_from(data, pos)
            pos += SPARSE_ENTRY.size
            offsets.append(offset)
        if self.client_cache:
            self._cached = (names, offsets)
        return names, offsets

    def get(self, name: str) -> bytes:
        with self.backend.phase("metadata"):
            names, offsets = self._sparse_index()
        slot = bisect.bisect_right(names, name) - 1
        if slot < 0:
            raise NotFoundError(f"'{name}' is not in {self.layout.root}")
        with self.backend.phase("content"):
            reader = SequentialReader(self.backend, self.data, start=offsets[slot])
            for _ in range(self.interval):
                if reader.at_end():
                    break
                entry_name, content = reader.next_entry()
                if entry_name == name:
                    return content
                if entry_name > name:
                    break
        raise NotFoundError(f"'{name}' is not in {self.layout.root}")


class NativeStore(_Container):
    kind = "native"

    def file_object(self, name: str) -> str:
        return self.layout.obj(f"files/{name_hash(name):016x}")

    @classmethod
    def build(cls, backend, root: str, files: Iterable[Tuple[str, ContentSource]]) -> "NativeStore":
        store = cls(backend, root)
        prepared = prepare_files(files)
        for name, _, source in prepared:
            content = read_source(name, source)
            store._write(store.file_object(name), [SIZE.pack(len(content)) + content])
        logger.info(f"Built native store {root} with {len(prepared)} objects")
        return store

    def get(self, name: str) -> bytes:
        path = self.file_object(name)
        with self.backend.phase("metadata"):
            if not self.backend.exists(path):
                raise NotFoundError(f"'{name}' is not in {self.layout.root}")
            (size,) = SIZE.unpack(self.backend.read_range(path, 0, SIZE.size))
        with self.backend.phase("content"):
            return self.backend.read_range(path, SIZE.size, size)
