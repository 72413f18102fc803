"""
Fixed-layout byte formats shared by the container: the 24-byte metadata record,
the content frame, the payload codecs and the length-prefixed names roster.
"""
import logging
import struct
from dataclasses import dataclass
from typing import Iterable, List, Tuple

import lz4.block

import config
from app.errors import FormatError, IntegrityError, InvalidConfigError

logger = logging.getLogger(__name__)

RECORD = struct.Struct(">QIQI")  # key, part_position, offset, stored_size
FRAME_HEADER = struct.Struct(">I")
NAME_LENGTH = struct.Struct(">I")

assert RECORD.size == config.METADATA_RECORD_SIZE


@dataclass(frozen=True, order=True)
class MetadataRecord:
    key: int
    part_position: int
    offset: int
    stored_size: int

    def pack(self) -> bytes:
        return RECORD.pack(self.key, self.part_position, self.offset, self.stored_size)

    @classmethod
    def unpack(cls, data: bytes, offset: int = 0) -> "MetadataRecord":
        if len(data) - offset < RECORD.size:
            raise FormatError("truncated metadata record", offset=offset)
        return cls(*RECORD.unpack_from(data, offset))


def unpack_records(data: bytes) -> Tuple[List[MetadataRecord], int]:
    """Every complete record in ``data`` plus the count of trailing leftover bytes."""
    whole = len(data) - len(data) % RECORD.size
    records = [MetadataRecord(*fields) for fields in RECORD.iter_unpack(data[:whole])]
    return records, len(data) - whole


# ----------------------------------------
# Codecs
# ----------------------------------------

CODEC_IDS = {"identity": 0, "lz4": 1}
CODEC_NAMES = {v: k for k, v in CODEC_IDS.items()}


def codec_id(name: str) -> int:
    try:
        return CODEC_IDS[name]
    except KeyError:
        raise InvalidConfigError(f"unknown codec '{name}' (expected one of {sorted(CODEC_IDS)})")


def encode_frame(content: bytes, codec: int) -> bytes:
    """ContentFrame: original size u32 followed by the stored payload."""
    if codec == 0 or not content:
        payload = content
    elif codec == 1:
        payload = lz4.block.compress(content, store_size=False)
    else:
        raise InvalidConfigError(f"unknown codec id {codec}")
    return FRAME_HEADER.pack(len(content)) + payload


def decode_frame(frame: bytes, codec: int, obj: str = None, offset: int = None) -> bytes:
    if len(frame) < FRAME_HEADER.size:
        raise IntegrityError(f"frame shorter than its header in {obj} at offset {offset}",
                             obj=obj, offset=offset)
    (original_size,) = FRAME_HEADER.unpack_from(frame, 0)
    payload = frame[FRAME_HEADER.size:]
    if original_size == 0:
        if payload:
            raise IntegrityError(f"empty frame carries {len(payload)} payload bytes in {obj} at offset {offset}",
                                 obj=obj, offset=offset)
        return b""
    if codec == 0:
        content = payload
    elif codec == 1:
        try:
            content = lz4.block.decompress(payload, uncompressed_size=original_size)
        except lz4.block.LZ4BlockError as e:
            raise IntegrityError(f"corrupt lz4 frame in {obj} at offset {offset}: {e}",
                                 obj=obj, offset=offset)
    else:
        raise InvalidConfigError(f"unknown codec id {codec}")
    if len(content) != original_size:
        raise IntegrityError(
            f"frame in {obj} at offset {offset} decodes to {len(content)} bytes, header says {original_size}",
            obj=obj, offset=offset)
    return content


# ----------------------------------------
# Names roster
# ----------------------------------------

def encode_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    return NAME_LENGTH.pack(len(raw)) + raw


def encode_names(names: Iterable[str]) -> bytes:
    return b"".join(encode_name(n) for n in names)


def decode_names(data: bytes, obj: str = "_names", tolerant: bool = False) -> List[str]:
    """
    Decode a [u32 length | UTF-8 bytes]* roster. With ``tolerant`` a torn
    trailing entry is dropped instead of raising.
    """
    names = []
    pos = 0
    while pos < len(data):
        if pos + NAME_LENGTH.size > len(data):
            if tolerant:
                logger.warning(f"Dropping torn name entry at offset {pos} of {obj}")
                break
            raise FormatError("truncated name length", offset=pos, obj=obj)
        (length,) = NAME_LENGTH.unpack_from(data, pos)
        end = pos + NAME_LENGTH.size + length
        if end > len(data):
            if tolerant:
                logger.warning(f"Dropping torn name entry at offset {pos} of {obj}")
                break
            raise FormatError("name runs past end of roster", offset=pos, obj=obj)
        try:
            names.append(data[pos + NAME_LENGTH.size:end].decode("utf-8"))
        except UnicodeDecodeError:
            raise FormatError("name is not valid UTF-8", offset=pos, obj=obj)
        pos = end
    return names
