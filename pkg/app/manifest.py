"""
Archive configuration, object layout and the persistent ``_manifest``.
"""
import json
from dataclasses import asdict, dataclass
from typing import Dict, List

import config
from app.directory import DirectoryShape
from app.errors import FormatError, InvalidConfigError
from app.records import CODEC_NAMES, codec_id

MANIFEST = "_manifest"
NAMES = "_names"
TEMPORARY_INDEX = "_temporaryIndex"
TMP_SUFFIX = ".tmp"


def max_records_per_index(block_size: int) -> int:
    return block_size // config.METADATA_RECORD_SIZE


@dataclass
class ArchiveConfig:
    bucket_capacity: int = config.HPF_BUCKET_CAPACITY
    block_size: int = config.HPF_BLOCK_SIZE
    workers: int = config.HPF_WORKERS
    max_part_size: int = config.HPF_MAX_PART_SIZE
    codec: str = config.HPF_CODEC
    lazy_persist: bool = config.HPF_LAZY_PERSIST

    def __post_init__(self):
        if self.bucket_capacity < 1:
            raise InvalidConfigError(f"bucket capacity must be >= 1, got {self.bucket_capacity}")
        if self.block_size < config.METADATA_RECORD_SIZE:
            raise InvalidConfigError(f"block size {self.block_size} cannot hold one record")
        if self.workers < 1:
            raise InvalidConfigError(f"workers must be >= 1, got {self.workers}")
        if self.max_part_size < 0:
            raise InvalidConfigError(f"max part size must be >= 0, got {self.max_part_size}")
        codec_id(self.codec)

    @property
    def effective_capacity(self) -> int:
        """Bucket capacity capped so one index body fits in one block."""
        return min(self.bucket_capacity, max_records_per_index(self.block_size))


class ArchiveLayout:
    """Object names of one archive under its path prefix."""

    def __init__(self, archive_path: str):
        self.root = archive_path.strip("/")

    def obj(self, name: str) -> str:
        return f"{self.root}/{name}" if self.root else name

    @property
    def prefix(self) -> str:
        return f"{self.root}/" if self.root else ""

    @property
    def manifest(self) -> str:
        return self.obj(MANIFEST)

    @property
    def names(self) -> str:
        return self.obj(NAMES)

    @property
    def temporary_index(self) -> str:
        return self.obj(TEMPORARY_INDEX)

    def part(self, part_id: int) -> str:
        return self.obj(f"part-{part_id}")

    def index(self, bucket_id: int) -> str:
        return self.obj(f"index-{bucket_id}")

    def tmp(self, path: str) -> str:
        return path + TMP_SUFFIX

    def _ids(self, listing, stem):
        ids = []
        for path in listing:
            name = path[len(self.prefix):]
            if name.startswith(stem) and name[len(stem):].isdigit():
                ids.append(int(name[len(stem):]))
        return sorted(ids)

    def part_ids(self, backend) -> List[int]:
        return self._ids(backend.list(self.obj("part-")), "part-")

    def index_ids(self, backend) -> List[int]:
        return self._ids(backend.list(self.obj("index-")), "index-")


@dataclass
class PartInfo:
    part_id: int
    length: int


@dataclass
class ArchiveManifest:
    format_version: int
    codec: int
    bucket_capacity: int
    block_size: int
    max_part_size: int
    workers: int
    parts: List[PartInfo]
    directory: DirectoryShape
    file_count: int
    lazy_persist: bool = False

    @classmethod
    def initial(cls, cfg: ArchiveConfig, directory: DirectoryShape, parts: List[PartInfo]) -> "ArchiveManifest":
        return cls(
            format_version=config.FORMAT_VERSION,
            codec=codec_id(cfg.codec),
            bucket_capacity=cfg.effective_capacity,
            block_size=cfg.block_size,
            max_part_size=cfg.max_part_size,
            workers=cfg.workers,
            parts=parts,
            directory=directory,
            file_count=0,
            lazy_persist=cfg.lazy_persist,
        )

    @property
    def codec_name(self) -> str:
        return CODEC_NAMES.get(self.codec, f"codec-{self.codec}")

    def part_lengths(self) -> Dict[int, int]:
        return {p.part_id: p.length for p in self.parts}

    def to_bytes(self) -> bytes:
        """Canonical JSON: sorted keys, no whitespace, UTF-8."""
        body = asdict(self)
        body["parts"] = [{"id": p.part_id, "length": p.length} for p in self.parts]
        body["directory"] = self.directory.to_dict()
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes, obj: str = MANIFEST) -> "ArchiveManifest":
        try:
            body = json.loads(data.decode("utf-8"))
            manifest = cls(
                format_version=int(body["format_version"]),
                codec=int(body["codec"]),
                bucket_capacity=int(body["bucket_capacity"]),
                block_size=int(body["block_size"]),
                max_part_size=int(body["max_part_size"]),
                workers=int(body["workers"]),
                parts=[PartInfo(int(p["id"]), int(p["length"])) for p in body["parts"]],
                directory=DirectoryShape.from_dict(body["directory"]),
                file_count=int(body["file_count"]),
                lazy_persist=bool(body.get("lazy_persist", False)),
            )
        except FormatError as e:
            raise FormatError(f"bad directory in manifest: {e}", obj=obj)
        except (UnicodeDecodeError, ValueError, KeyError, TypeError) as e:
            raise FormatError(f"unreadable manifest: {e}", obj=obj)
        if manifest.format_version != config.FORMAT_VERSION:
            raise FormatError(f"unsupported format version {manifest.format_version}", obj=obj)
        if manifest.codec not in CODEC_NAMES:
            raise FormatError(f"unknown codec id {manifest.codec}", obj=obj)
        return manifest


def read_manifest(backend, layout: ArchiveLayout) -> ArchiveManifest:
    return ArchiveManifest.from_bytes(backend.read_all(layout.manifest), obj=layout.manifest)


def write_object(backend, path: str, data: bytes):
    """Write-to-temp then atomic rename over ``path``."""
    tmp = path + TMP_SUFFIX
    if backend.exists(tmp):
        backend.delete(tmp)
    backend.create(tmp)
    if data:
        backend.append(tmp, data)
    backend.rename(tmp, path, overwrite=True)


def write_manifest(backend, layout: ArchiveLayout, manifest: ArchiveManifest):
    write_object(backend, layout.manifest, manifest.to_bytes())


def collect_parts(backend, layout: ArchiveLayout) -> List[PartInfo]:
    return [PartInfo(pid, backend.length(layout.part(pid))) for pid in layout.part_ids(backend)]
