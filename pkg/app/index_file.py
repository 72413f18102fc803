"""
Index file layout: [serialized MonotoneIndex, Υ bytes][n sorted 24-byte records].
"""
from typing import List, Optional, Tuple

from app.errors import FormatError
from app.manifest import write_object
from app.monotone_index import PREFIX, MonotoneIndex, header_size_from_prefix
from app.records import RECORD, MetadataRecord, unpack_records


def encode_index_file(records: List[MetadataRecord]) -> Tuple[bytes, int]:
    """Body bytes for ``records`` (any order) and its header length."""
    ordered = sorted(records, key=lambda r: r.key)
    header = MonotoneIndex.build([r.key for r in ordered]).serialize()
    return header + b"".join(r.pack() for r in ordered), len(header)


def write_index_file(backend, path: str, records: List[MetadataRecord]) -> int:
    body, header_length = encode_index_file(records)
    write_object(backend, path, body)
    return header_length


def load_header(backend, path: str, header_length: Optional[int] = None) -> Tuple[MonotoneIndex, int]:
    """One ranged read when Υ is known, otherwise prefix first."""
    try:
        if header_length is None:
            header_length = header_size_from_prefix(backend.read_range(path, 0, PREFIX.size))
        data = backend.read_range(path, 0, header_length)
        return MonotoneIndex.deserialize(data), header_length
    except FormatError as e:
        raise FormatError(f"corrupt index header: {e}", obj=path)


def parse_index_file(data: bytes, path: str) -> Tuple[MonotoneIndex, int, List[MetadataRecord]]:
    try:
        index, header_length = MonotoneIndex.decode_prefix(data)
    except FormatError as e:
        raise FormatError(f"corrupt index header: {e}", obj=path)
    records, leftover = unpack_records(data[header_length:])
    if leftover or len(records) != len(index):
        raise FormatError(f"body holds {len(data) - header_length} bytes for {len(index)} records",
                          offset=header_length, obj=path)
    return index, header_length, records


def read_index_file(backend, path: str) -> Tuple[MonotoneIndex, int, List[MetadataRecord]]:
    return parse_index_file(backend.read_all(path), path)


def record_offset(header_length: int, rank: int) -> int:
    return header_length + rank * RECORD.size
