"""
Monotone minimal perfect hash over one bucket's sorted keys.

Keys are stored Elias-Fano style: the low ``l`` bits of every key are packed
into a fixed-width array, the high parts go into a unary-gap bit vector where
key i sets bit ``(k_i >> l) + i``. Rank of a member key is the index of its
one bit, and non-members are detected because the stored low part never
matches.

Serialized layout, big-endian:

    magic "HPFM" | version u16 | n u64 | l u8 | high length in bits u64
    | high payload (padded) | low payload (padded)
    | sample count u32 | samples u64 ...

Sample k is the position in the high vector of one number 512*(k+1).
"""
import struct
from bisect import bisect_left
from typing import List, Optional, Sequence, Tuple

from bitarray import bitarray
from bitarray.util import ba2int, count_n, int2ba

import config
from app.errors import DuplicateKeyError, FormatError, NotSortedError
from app.hashing import KEY_BITS, KEY_MASK

MAGIC = b"HPFM"
PREFIX = struct.Struct(">4sHQBQ")
SAMPLE_COUNT = struct.Struct(">I")
SAMPLE = struct.Struct(">Q")
SAMPLE_INTERVAL = config.SELECT_SAMPLE_INTERVAL


def low_bit_width(n: int, max_key: int) -> int:
    """floor(log2(max(1, U/n))) with U = max_key + 1."""
    if n == 0:
        return 0
    ratio = (max_key + 1) // n
    return max(0, ratio.bit_length() - 1)


def sample_count(n: int) -> int:
    return (n - 1) // SAMPLE_INTERVAL if n > 0 else 0


def _padded(bits):
    return (bits + 7) // 8


def header_size_from_prefix(prefix: bytes) -> int:
    """Total serialized length (the Υ of an index file) from its first 23 bytes."""
    magic, version, n, width, high_len = _unpack_prefix(prefix)
    return (PREFIX.size + _padded(high_len) + _padded(n * width)
            + SAMPLE_COUNT.size + SAMPLE.size * sample_count(n))


def _unpack_prefix(data: bytes):
    if len(data) < PREFIX.size:
        raise FormatError("truncated index header", offset=len(data))
    magic, version, n, width, high_len = PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError("bad index magic", offset=0)
    if version != config.FORMAT_VERSION:
        raise FormatError(f"unsupported index version {version}", offset=4)
    if width > KEY_BITS:
        raise FormatError(f"low bit width {width} exceeds key width", offset=14)
    return magic, version, n, width, high_len


class MonotoneIndex:
    """Immutable rank structure over a strictly increasing key sequence."""

    __slots__ = ("_n", "_l", "_high", "_low", "_samples", "_block_zeros")

    def __init__(self, n: int, width: int, high: bitarray, low: bitarray, samples: List[int]):
        self._n = n
        self._l = width
        self._high = high
        self._low = low
        self._samples = samples
        # zeros preceding the first bit of each 512-one block
        self._block_zeros = [0] + [pos - SAMPLE_INTERVAL * (k + 1) for k, pos in enumerate(samples)]

    @classmethod
    def build(cls, keys: Sequence[int]) -> "MonotoneIndex":
        n = len(keys)
        for i in range(n):
            k = keys[i]
            if not 0 <= k <= KEY_MASK:
                raise NotSortedError(f"key {k} outside the 64-bit range")
            if i and k <= keys[i - 1]:
                if k == keys[i - 1]:
                    raise DuplicateKeyError(f"duplicate key {k} at position {i}")
                raise NotSortedError(f"key {k} at position {i} is smaller than its predecessor")

        width = low_bit_width(n, keys[-1]) if n else 0
        high_len = (keys[-1] >> width) + n if n else 0
        high = bitarray(high_len, endian="big")
        high.setall(0)
        low = bitarray(endian="big")
        for i, k in enumerate(keys):
            high[(k >> width) + i] = 1
            if width:
                low.extend(int2ba(k & ((1 << width) - 1), length=width, endian="big"))

        samples = [(keys[j] >> width) + j
                   for j in range(SAMPLE_INTERVAL, n, SAMPLE_INTERVAL)]
        return cls(n, width, high, low, samples)

    def __len__(self) -> int:
        return self._n

    @property
    def low_bit_width(self) -> int:
        return self._l

    @property
    def high_bit_length(self) -> int:
        return len(self._high)

    @property
    def payload_bits(self) -> int:
        return len(self._high) + len(self._low) + SAMPLE.size * 8 * len(self._samples)

    @property
    def bits_per_key(self) -> float:
        return self.payload_bits / self._n if self._n else 0.0

    @property
    def serialized_size(self) -> int:
        return (PREFIX.size + _padded(len(self._high)) + _padded(len(self._low))
                + SAMPLE_COUNT.size + SAMPLE.size * len(self._samples))

    def _low_at(self, i):
        if not self._l:
            return 0
        return ba2int(self._low[i * self._l:(i + 1) * self._l])

    def _block_bounds(self, block):
        start = self._samples[block - 1] if block else 0
        end = self._samples[block] if block < len(self._samples) else len(self._high)
        return start, end

    def select(self, i: int) -> int:
        """Position of the i-th one in the high vector."""
        block = i // SAMPLE_INTERVAL
        start, end = self._block_bounds(block)
        window = self._high[start:end]
        return start + count_n(window, i - block * SAMPLE_INTERVAL + 1) - 1

    def decode(self, i: int) -> int:
        if not 0 <= i < self._n:
            raise IndexError(f"rank {i} outside [0, {self._n})")
        return ((self.select(i) - i) << self._l) | self._low_at(i)

    def keys(self) -> List[int]:
        return [self.decode(i) for i in range(self._n)]

    def eval_rank(self, key: int) -> Optional[int]:
        """Rank of ``key`` among the stored keys, or None for a non-member."""
        if self._n == 0 or not 0 <= key <= KEY_MASK:
            return None
        hi = key >> self._l
        lo = key & ((1 << self._l) - 1)
        if hi > len(self._high) - self._n:
            return None

        block = max(0, bisect_left(self._block_zeros, hi) - 1)
        need = hi - self._block_zeros[block]
        if need < 0:
            return None
        start, end = self._block_bounds(block)
        window = self._high[start:end]
        skip = count_n(~window, need)
        pos = start + skip
        i = block * SAMPLE_INTERVAL + window.count(1, 0, skip)

        # keys sharing this high part form one run of ones; their lows are sorted
        run_end = self._high.find(0, pos)
        if run_end < 0:
            run_end = len(self._high)
        run = range(i, i + run_end - pos)
        j = bisect_left(run, lo, key=self._low_at)
        if j < len(run) and self._low_at(run[j]) == lo:
            return run[j]
        return None

    def serialize(self) -> bytes:
        parts = [
            PREFIX.pack(MAGIC, config.FORMAT_VERSION, self._n, self._l, len(self._high)),
            self._high.tobytes(),
            self._low.tobytes(),
            SAMPLE_COUNT.pack(len(self._samples)),
        ]
        parts.extend(SAMPLE.pack(s) for s in self._samples)
        return b"".join(parts)

    @classmethod
    def decode_prefix(cls, data: bytes) -> Tuple["MonotoneIndex", int]:
        """Parse an index from the front of ``data``; returns it and its byte length."""
        _, _, n, width, high_len = _unpack_prefix(data)
        if n and high_len < n:
            raise FormatError(f"high vector of {high_len} bits cannot hold {n} keys", offset=15)
        pos = PREFIX.size

        def take(count):
            nonlocal pos
            if pos + count > len(data):
                raise FormatError("truncated index header", offset=len(data))
            chunk = data[pos:pos + count]
            pos += count
            return chunk

        high = bitarray(endian="big")
        high.frombytes(take(_padded(high_len)))
        del high[high_len:]
        low = bitarray(endian="big")
        low.frombytes(take(_padded(n * width)))
        del low[n * width:]
        if high.count(1) != n:
            raise FormatError("high vector does not hold one bit per key", offset=PREFIX.size)
        if n and not high[-1]:
            raise FormatError("high vector does not end on a key", offset=PREFIX.size)

        count_offset = pos
        (count,) = SAMPLE_COUNT.unpack(take(SAMPLE_COUNT.size))
        if count != sample_count(n):
            raise FormatError(f"expected {sample_count(n)} select samples, found {count}",
                              offset=count_offset)
        samples = [SAMPLE.unpack(take(SAMPLE.size))[0] for _ in range(count)]
        return cls(n, width, high, low, samples), pos

    @classmethod
    def deserialize(cls, data: bytes) -> "MonotoneIndex":
        index, size = cls.decode_prefix(data)
        if size != len(data):
            raise FormatError(f"{len(data) - size} trailing bytes after index", offset=size)
        return index


def build_monotone_index(keys: Sequence[int]) -> MonotoneIndex:
    return MonotoneIndex.build(keys)


def eval_rank(index: MonotoneIndex, key: int) -> Optional[int]:
    return index.eval_rank(key)
