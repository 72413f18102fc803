"""Name-to-key hashing and key-to-slot routing."""
from typing import NewType

from app.errors import InvalidDepthError

FileKey = NewType("FileKey", int)

FNV64_OFFSET_BASIS = 14695981039346656037
FNV64_PRIME = 1099511628211
KEY_BITS = 64
KEY_MASK = (1 << KEY_BITS) - 1


def name_hash(name: str) -> FileKey:
    """FNV-1a 64-bit digest of the UTF-8 bytes of ``name``."""
    h = FNV64_OFFSET_BASIS
    for byte in name.encode("utf-8"):
        h ^= byte
        h = (h * FNV64_PRIME) & KEY_MASK
    return FileKey(h)


def bucket_slot(key: int, global_depth: int) -> int:
    """Low ``global_depth`` bits of the key."""
    if not 0 <= global_depth <= KEY_BITS:
        raise InvalidDepthError(f"depth {global_depth} outside [0, {KEY_BITS}]")
    return key & ((1 << global_depth) - 1)
