import pytest

from app.errors import FormatError, IntegrityError, InvalidConfigError
from app.records import (RECORD, MetadataRecord, codec_id, decode_frame, decode_names, encode_frame,
                         encode_name, encode_names, unpack_records)


def test_record_is_24_big_endian_bytes():
    r = MetadataRecord(key=0x0102030405060708, part_position=2, offset=300, stored_size=17)
    data = r.pack()
    assert len(data) == RECORD.size == 24
    assert data[:8] == bytes(range(1, 9))
    assert MetadataRecord.unpack(data) == r
    with pytest.raises(FormatError):
        MetadataRecord.unpack(data[:23])


def test_unpack_records_reports_torn_tail():
    a, b = MetadataRecord(1, 0, 0, 4), MetadataRecord(2, 1, 4, 9)
    records, leftover = unpack_records(a.pack() + b.pack() + b"\x00" * 5)
    assert records == [a, b]
    assert leftover == 5


@pytest.mark.parametrize("codec", ["identity", "lz4"])
@pytest.mark.parametrize("content", [b"", b"x", b"abc" * 1000, bytes(range(256)) * 3])
def test_frames_round_trip(codec, content):
    frame = encode_frame(content, codec_id(codec))
    assert decode_frame(frame, codec_id(codec)) == content


def test_empty_content_has_empty_payload():
    assert encode_frame(b"", codec_id("lz4")) == b"\x00\x00\x00\x00"


def test_lz4_shrinks_repetitive_content():
    content = b"small file " * 500
    assert len(encode_frame(content, codec_id("lz4"))) < len(content) // 4


def test_damaged_frames_raise_integrity_errors():
    frame = encode_frame(b"payload bytes", codec_id("identity"))
    with pytest.raises(IntegrityError):
        decode_frame(frame[:-1], codec_id("identity"), obj="part-0", offset=0)
    with pytest.raises(IntegrityError):
        decode_frame(frame[:2], codec_id("identity"))
    lz = encode_frame(b"payload bytes " * 40, codec_id("lz4"))
    with pytest.raises(IntegrityError) as info:
        decode_frame(lz[:4] + b"\xff" * (len(lz) - 4), codec_id("lz4"), obj="part-3", offset=77)
    assert info.value.obj == "part-3"
    assert info.value.offset == 77


def test_unknown_codec():
    with pytest.raises(InvalidConfigError):
        codec_id("zstd")


def test_names_roster():
    names = ["a", "dir/ünï.txt", ""]
    data = encode_names(names)
    assert decode_names(data) == names
    torn = data + encode_name("partial")[:6]
    with pytest.raises(FormatError):
        decode_names(torn)
    assert decode_names(torn, tolerant=True) == names
    assert decode_names(data + b"\x00\x00", tolerant=True) == names
