"""
Object-store backends the archive runs on.

``StorageBackend`` fixes the surface (create / append / ranged read / rename /
list ...) and owns the bookkeeping every backend shares: per-object locks,
pinned resident copies and LazyPersist hints. ``MemoryBackend`` and
``LocalDirBackend`` store bytes; ``MeteredBackend`` and
``FaultInjectingBackend`` wrap another backend to count IO or to fail writes
on a schedule.
"""
import contextlib
import logging
import os
import threading
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set

from app.errors import ConflictError, InjectedFailure, NotFoundError, RangeError

logger = logging.getLogger(__name__)


def check_path(path: str) -> str:
    if not path or path.startswith("/") or "\\" in path:
        raise ValueError(f"invalid object path '{path}'")
    if any(part in ("", ".", "..") for part in path.split("/")):
        raise ValueError(f"invalid object path '{path}'")
    return path


class StorageBackend(ABC):
    """
    Abstract object store. Appends are atomic per call, mutations of one object
    are serialized, distinct objects may be mutated concurrently.
    """

    def __init__(self):
        self._registry_lock = threading.Lock()
        self._object_locks: Dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._resident: Dict[str, bytes] = {}
        self._lazy: Set[str] = set()

    # -- primitives implemented by concrete stores --------------------------

    @abstractmethod
    def _create(self, path: str): ...

    @abstractmethod
    def _append(self, path: str, data: bytes) -> int: ...

    @abstractmethod
    def _read(self, path: str, offset: int, length: int) -> bytes: ...

    @abstractmethod
    def _length(self, path: str) -> int: ...

    @abstractmethod
    def _delete(self, path: str): ...

    @abstractmethod
    def _rename(self, src: str, dst: str): ...

    @abstractmethod
    def _list(self, prefix: str) -> Iterable[str]: ...

    @abstractmethod
    def _exists(self, path: str) -> bool: ...

    # -- public surface -----------------------------------------------------

    @contextlib.contextmanager
    def _locked(self, *paths: str):
        with self._registry_lock:
            locks = [self._object_locks[p] for p in sorted(set(paths))]
        for lock in locks:
            lock.acquire()
        try:
            yield
        finally:
            for lock in reversed(locks):
                lock.release()

    def create(self, path: str, lazy_persist: bool = False):
        check_path(path)
        with self._locked(path):
            if self._exists(path):
                raise ConflictError(f"object {path} already exists")
            self._create(path)
            if lazy_persist:
                self._lazy.add(path)

    def append(self, path: str, data: bytes) -> int:
        """Append ``data``; returns the object's new length."""
        check_path(path)
        data = bytes(data)
        with self._locked(path):
            self._require(path)
            length = self._append(path, data)
            if path in self._resident:
                self._resident[path] += data
            return length

    def read_range(self, path: str, offset: int, length: int) -> bytes:
        check_path(path)
        resident = self._resident.get(path)
        if resident is not None:
            self._check_range(path, offset, length, len(resident))
            return resident[offset:offset + length]
        self._require(path)
        self._check_range(path, offset, length, self._length(path))
        return self._read(path, offset, length)

    def read_all(self, path: str) -> bytes:
        return self.read_range(path, 0, self.length(path))

    def length(self, path: str) -> int:
        check_path(path)
        self._require(path)
        return self._length(path)

    def delete(self, path: str):
        check_path(path)
        with self._locked(path):
            self._require(path)
            self._delete(path)
            self._resident.pop(path, None)
            self._lazy.discard(path)
        self._forget_lock(path)

    def rename(self, src: str, dst: str, overwrite: bool = False):
        """Atomic rename; ``overwrite`` allows replacing an existing ``dst``."""
        check_path(src)
        check_path(dst)
        with self._locked(src, dst):
            self._require(src)
            if not overwrite and self._exists(dst):
                raise ConflictError(f"rename target {dst} already exists")
            self._rename(src, dst)
            self._resident.pop(src, None)
            if dst in self._resident:
                self._resident[dst] = self._read(dst, 0, self._length(dst))
            if src in self._lazy:
                self._lazy.discard(src)
                self._lazy.add(dst)
        self._forget_lock(src)

    def list(self, prefix: str = "") -> List[str]:
        return sorted(self._list(prefix))

    def exists(self, path: str) -> bool:
        check_path(path)
        return self._exists(path)

    def pin(self, path: str):
        """Keep a memory-resident copy; later reads are served from it."""
        check_path(path)
        with self._locked(path):
            self._require(path)
            self._resident[path] = self._read(path, 0, self._length(path))

    def unpin(self, path: str):
        check_path(path)
        self._require(path)
        self._resident.pop(path, None)

    def is_pinned(self, path: str) -> bool:
        return path in self._resident

    def persist(self, path: str):
        """Drop the LazyPersist hint once the object must accept appends durably."""
        self._lazy.discard(path)

    def is_lazy(self, path: str) -> bool:
        return path in self._lazy

    def phase(self, name: str):
        return contextlib.nullcontext()

    def _forget_lock(self, path):
        with self._registry_lock:
            self._object_locks.pop(path, None)

    def _require(self, path):
        if not self._exists(path):
            raise NotFoundError(f"object {path} not found")

    @staticmethod
    def _check_range(path, offset, length, size):
        if offset < 0 or length < 0 or offset + length > size:
            raise RangeError(f"read of {length} bytes at {offset} outside {path} ({size} bytes)")


class MemoryBackend(StorageBackend):
    def __init__(self):
        super().__init__()
        self._objects: Dict[str, bytearray] = {}

    def _create(self, path):
        self._objects[path] = bytearray()

    def _append(self, path, data):
        buf = self._objects[path]
        buf.extend(data)
        return len(buf)

    def _read(self, path, offset, length):
        return bytes(self._objects[path][offset:offset + length])

    def _length(self, path):
        return len(self._objects[path])

    def _delete(self, path):
        del self._objects[path]

    def _rename(self, src, dst):
        self._objects[dst] = self._objects.pop(src)

    def _list(self, prefix):
        return [p for p in list(self._objects) if p.startswith(prefix)]

    def _exists(self, path):
        return path in self._objects


class LocalDirBackend(StorageBackend):
    """Objects are files beneath ``root``; '/' in a path maps to subdirectories."""

    def __init__(self, root):
        super().__init__()
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)

    def _fs(self, path):
        target = (self.root / path).resolve()
        if self.root != target and self.root not in target.parents:
            raise ValueError(f"object path {path} escapes the backend root")
        return target

    def _create(self, path):
        target = self._fs(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.touch(exist_ok=False)

    def _append(self, path, data):
        with open(self._fs(path), "ab") as f:
            f.write(data)
            f.flush()
            return f.tell()

    def _read(self, path, offset, length):
        with open(self._fs(path), "rb") as f:
            f.seek(offset)
            return f.read(length)

    def _length(self, path):
        return self._fs(path).stat().st_size

    def _delete(self, path):
        self._fs(path).unlink()

    def _rename(self, src, dst):
        target = self._fs(dst)
        target.parent.mkdir(parents=True, exist_ok=True)
        os.replace(self._fs(src), target)

    def _list(self, prefix):
        out = []
        for p in self.root.rglob("*"):
            if p.is_file():
                rel = p.relative_to(self.root).as_posix()
                if rel.startswith(prefix):
                    out.append(rel)
        return out

    def _exists(self, path):
        return self._fs(path).is_file()


# ----------------------------------------
# Metering
# ----------------------------------------

@dataclass
class Counters:
    read_ops: int = 0
    read_bytes: int = 0
    write_ops: int = 0
    write_bytes: int = 0
    seek_like_ops: int = 0
    cached_read_ops: int = 0

    def add(self, other: "Counters"):
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def copy(self) -> "Counters":
        return Counters(**{f.name: getattr(self, f.name) for f in fields(self)})


@dataclass
class IoMeter:
    """Monotone IO counters, in total, per object path and per named phase."""

    total: Counters = field(default_factory=Counters)
    per_path: Dict[str, Counters] = field(default_factory=lambda: defaultdict(Counters))
    per_phase: Dict[str, Counters] = field(default_factory=lambda: defaultdict(Counters))
    _last_end: Dict[str, int] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def record_read(self, path: str, offset: int, length: int, cached: bool, phase: Optional[str]):
        delta = Counters()
        if cached:
            delta.cached_read_ops = 1
        else:
            delta.read_ops = 1
            delta.read_bytes = length
        with self._lock:
            if not cached:
                if self._last_end.get(path, 0) != offset:
                    delta.seek_like_ops = 1
                self._last_end[path] = offset + length
            self._apply(delta, [path], phase)

    def record_write(self, paths: List[str], nbytes: int, phase: Optional[str]):
        with self._lock:
            self._apply(Counters(write_ops=1, write_bytes=nbytes), paths, phase)

    def _apply(self, delta: Counters, paths: List[str], phase: Optional[str]):
        self.total.add(delta)
        for p in paths:
            self.per_path[p].add(delta)
        if phase is not None:
            self.per_phase[phase].add(delta)

    def phase_counters(self, phase: str) -> Counters:
        with self._lock:
            return self.per_phase[phase].copy() if phase in self.per_phase else Counters()

    def written_paths(self) -> Set[str]:
        with self._lock:
            return {p for p, c in self.per_path.items() if c.write_ops}

    def reset(self):
        with self._lock:
            self.total = Counters()
            self.per_path = defaultdict(Counters)
            self.per_phase = defaultdict(Counters)
            self._last_end = {}


class BackendWrapper(StorageBackend):
    """Delegates the whole surface to ``inner``."""

    def __init__(self, inner: StorageBackend):
        super().__init__()
        self.inner = inner

    def _create(self, path): self.inner._create(path)
    def _append(self, path, data): return self.inner._append(path, data)
    def _read(self, path, offset, length): return self.inner._read(path, offset, length)
    def _length(self, path): return self.inner._length(path)
    def _delete(self, path): self.inner._delete(path)
    def _rename(self, src, dst): self.inner._rename(src, dst)
    def _list(self, prefix): return self.inner._list(prefix)
    def _exists(self, path): return self.inner._exists(path)

    def create(self, path, lazy_persist=False): self.inner.create(path, lazy_persist)
    def append(self, path, data): return self.inner.append(path, data)
    def read_range(self, path, offset, length): return self.inner.read_range(path, offset, length)
    def length(self, path): return self.inner.length(path)
    def delete(self, path): self.inner.delete(path)
    def rename(self, src, dst, overwrite=False): self.inner.rename(src, dst, overwrite)
    def list(self, prefix=""): return self.inner.list(prefix)
    def exists(self, path): return self.inner.exists(path)
    def pin(self, path): self.inner.pin(path)
    def unpin(self, path): self.inner.unpin(path)
    def is_pinned(self, path): return self.inner.is_pinned(path)
    def persist(self, path): self.inner.persist(path)
    def is_lazy(self, path): return self.inner.is_lazy(path)
    def phase(self, name): return self.inner.phase(name)


class MeteredBackend(BackendWrapper):
    """Counts every operation into an ``IoMeter``; reads of pinned objects count as cached."""

    def __init__(self, inner: StorageBackend, meter: Optional[IoMeter] = None):
        super().__init__(inner)
        self.meter = meter or IoMeter()
        self._local = threading.local()

    @property
    def current_phase(self) -> Optional[str]:
        return getattr(self._local, "phase", None)

    @contextlib.contextmanager
    def phase(self, name: str):
        previous = self.current_phase
        self._local.phase = name
        try:
            yield self.meter
        finally:
            self._local.phase = previous

    def read_range(self, path, offset, length):
        cached = self.inner.is_pinned(path)
        data = self.inner.read_range(path, offset, length)
        self.meter.record_read(path, offset, length, cached, self.current_phase)
        return data

    def create(self, path, lazy_persist=False):
        self.inner.create(path, lazy_persist)
        self.meter.record_write([path], 0, self.current_phase)

    def append(self, path, data):
        length = self.inner.append(path, data)
        self.meter.record_write([path], len(data), self.current_phase)
        return length

    def delete(self, path):
        self.inner.delete(path)
        self.meter.record_write([path], 0, self.current_phase)

    def rename(self, src, dst, overwrite=False):
        self.inner.rename(src, dst, overwrite)
        self.meter.record_write([src, dst], 0, self.current_phase)


# ----------------------------------------
# Fault Injection
# ----------------------------------------

@dataclass
class FaultSchedule:
    """
    ``fail_at`` is the 1-based ordinal of the first mutation that fails; every
    later mutation fails too. Values <= 1 fail from the first write.
    """

    fail_at: int
    torn_append: bool = False


class FaultInjectingBackend(BackendWrapper):
    """Simulates a client crash: writes fail from a scheduled point on, reads keep working."""

    def __init__(self, inner: StorageBackend, schedule: Optional[FaultSchedule] = None):
        super().__init__(inner)
        self._lock = threading.Lock()
        self.inject_fault(schedule)

    def inject_fault(self, schedule: Optional[FaultSchedule]):
        with self._lock:
            self.schedule = schedule
            self.writes = 0
            self.tripped = False

    def _admit(self) -> bool:
        """Count one mutation; False once the schedule has tripped."""
        with self._lock:
            self.writes += 1
            if self.tripped:
                return False
            if self.schedule is not None and self.writes >= self.schedule.fail_at:
                self.tripped = True
                logger.debug(f"Injected failure at write #{self.writes}")
                return False
            return True

    def _fail(self, op, path):
        raise InjectedFailure(f"injected failure on {op} {path} (write #{self.writes})")

    def create(self, path, lazy_persist=False):
        if not self._admit():
            self._fail("create", path)
        self.inner.create(path, lazy_persist)

    def append(self, path, data):
        if not self._admit():
            if self.schedule is not None and self.schedule.torn_append and len(data) > 1 \
                    and self.writes == max(self.schedule.fail_at, 1):
                self.inner.append(path, data[:len(data) // 2])
            self._fail("append", path)
        return self.inner.append(path, data)

    def delete(self, path):
        if not self._admit():
            self._fail("delete", path)
        self.inner.delete(path)

    def rename(self, src, dst, overwrite=False):
        if not self._admit():
            self._fail("rename", src)
        self.inner.rename(src, dst, overwrite)
