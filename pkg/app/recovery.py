"""
Crash recovery. A surviving ``_temporaryIndex`` means a create or append never
reached its commit; the index files are rebuilt from every index body plus the
complete records of the temporary index.
"""
import logging
from typing import Dict, List

from app.directory import ExtendibleDirectory
from app.hashing import name_hash
from app.index_file import read_index_file, write_index_file
from app.manifest import (ArchiveLayout, ArchiveManifest, TMP_SUFFIX, collect_parts,
                          read_manifest, write_manifest, write_object)
from app.records import MetadataRecord, decode_names, encode_names, unpack_records

logger = logging.getLogger(__name__)


def collect_records(backend, layout: ArchiveLayout, index_ids: List[int]) -> Dict[int, MetadataRecord]:
    records: Dict[int, MetadataRecord] = {}
    for bucket_id in index_ids:
        _, _, body = read_index_file(backend, layout.index(bucket_id))
        for r in body:
            records[r.key] = r

    temp, leftover = unpack_records(backend.read_all(layout.temporary_index))
    if leftover:
        logger.warning(f"Discarding {leftover} trailing bytes of {layout.temporary_index}")
    for r in temp:
        records[r.key] = r

    part_lengths = {p.part_id: p.length for p in collect_parts(backend, layout)}
    valid = {}
    for key, r in records.items():
        if r.offset + r.stored_size <= part_lengths.get(r.part_position, -1):
            valid[key] = r
        else:
            logger.warning(f"Dropping record {key}: part-{r.part_position} does not hold its frame")
    return valid


def recover(backend, layout: ArchiveLayout) -> ArchiveManifest:
    manifest = read_manifest(backend, layout)
    old_ids = layout.index_ids(backend)
    logger.info(f"Recovering {layout.root or '/'}: rebuilding from {len(old_ids)} index files "
                f"and {layout.temporary_index}")

    records = collect_records(backend, layout, old_ids)
    first_id = max(old_ids + list(manifest.directory.buckets)) + 1
    directory = ExtendibleDirectory(manifest.bucket_capacity, first_id=first_id)
    for key in sorted(records):
        directory.insert(records[key])
    for bucket in directory.buckets.values():
        bucket.header_length = write_index_file(
            backend, layout.index(bucket.bucket_id), bucket.sorted_records())

    names = []
    if backend.exists(layout.names):
        names = decode_names(backend.read_all(layout.names), obj=layout.names, tolerant=True)
    kept, seen = [], set()
    for name in names:
        key = name_hash(name)
        if key in records and key not in seen:
            kept.append(name)
            seen.add(key)
    if len(seen) != len(records):
        logger.warning(f"{len(records) - len(seen)} recovered records have no entry in {layout.names}")
    write_object(backend, layout.names, encode_names(kept))

    manifest.parts = collect_parts(backend, layout)
    manifest.directory = directory.shape()
    manifest.file_count = len(records)
    write_manifest(backend, layout, manifest)

    for bucket_id in old_ids:
        if bucket_id not in directory.buckets:
            backend.delete(layout.index(bucket_id))
    for path in backend.list(layout.prefix):
        if path.endswith(TMP_SUFFIX):
            logger.warning(f"Removing stray temporary object {path}")
            backend.delete(path)
    backend.delete(layout.temporary_index)

    logger.info(f"Recovered {len(records)} files into {len(directory.buckets)} index files")
    return manifest
