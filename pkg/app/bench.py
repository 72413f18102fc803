"""
Access-cost benchmark: the archive against the scan and sparse baselines.

Every strategy is built on its own metered in-memory backend from the same
synthetic corpus, then answers the same uniform-random sample of names.
Costs are IO counts from the meter, not wall-clock time. The scan baseline
stands in for HAR: two fixed index reads followed by a linear scan. The native
strategy stores one object per file. Object and block counts stand in for the
namespace a file-system master has to keep in memory.
"""
import logging
import random
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import config
from app.archive import create_archive
from app.baselines import NativeStore, ScanContainer, SparseContainer
from app.errors import IntegrityError, InvalidConfigError
from app.manifest import ArchiveConfig
from app.storage import IoMeter, MemoryBackend, MeteredBackend

logger = logging.getLogger(__name__)

STRATEGIES = ("hpf", "sparse", "scan", "native")
REPORT_HEADER = ("scan = HAR-like (two fixed index reads + linear scan); sparse = MapFile-like; "
                 "native = one object per file")


def parse_size_range(text: str) -> Tuple[int, int]:
    try:
        low, high = (int(v) for v in text.split("-", 1))
    except ValueError:
        raise InvalidConfigError(f"size range must look like LOW-HIGH, got '{text}'")
    if low < 0 or high < low:
        raise InvalidConfigError(f"bad size range {low}-{high}")
    return low, high


def synthetic_corpus(n: int, size_range: Tuple[int, int], seed: int) -> List[Tuple[str, bytes]]:
    rng = random.Random(seed)
    return [(f"file-{i:07d}.bin", rng.randbytes(rng.randint(*size_range))) for i in range(n)]


def access_positions(n: int, accesses: int, seed: int) -> List[int]:
    """Uniform positions from a stream independent of ``n``, so doubling ``n`` keeps the same quantiles."""
    rng = random.Random(seed * 7919 + 1)
    return [int(rng.random() * n) for _ in range(accesses)]


@dataclass
class StrategyResult:
    strategy: str
    accesses: int
    read_ops: float
    read_bytes: float
    metadata_read_ops: float
    metadata_read_bytes: float
    content_read_ops: float
    content_read_bytes: float
    build_seconds: float
    container_bytes: int
    objects: int
    blocks: int

    def metrics(self) -> Dict[str, float]:
        return {
            "read_ops": self.read_ops,
            "read_bytes": self.read_bytes,
            "metadata_read_ops": self.metadata_read_ops,
            "metadata_read_bytes": self.metadata_read_bytes,
            "content_read_ops": self.content_read_ops,
            "content_read_bytes": self.content_read_bytes,
            "build_seconds": round(self.build_seconds, 4),
            "container_bytes": self.container_bytes,
            "objects": self.objects,
            "blocks": self.blocks,
        }


@dataclass
class BenchReport:
    n: int
    accesses: int
    size_range: Tuple[int, int]
    seed: int
    pinned: bool
    client_cache: bool
    results: List[StrategyResult] = field(default_factory=list)

    def result(self, strategy: str) -> StrategyResult:
        for r in self.results:
            if r.strategy == strategy:
                return r
        raise KeyError(strategy)

    def lines(self) -> List[str]:
        return [f"{r.strategy}\t{metric}\t{value}" for r in self.results for metric, value in r.metrics().items()]

    def table(self) -> str:
        head = (f"{'strategy':<8} {'read_ops':>10} {'read_bytes':>14} {'meta_ops':>9} {'meta_bytes':>12} "
                f"{'content_bytes':>14} {'build_s':>9} {'size':>14} {'objects':>8} {'blocks':>8}")
        rows = [
            f"{r.strategy:<8} {r.read_ops:>10.2f} {r.read_bytes:>14.1f} {r.metadata_read_ops:>9.2f} "
            f"{r.metadata_read_bytes:>12.1f} {r.content_read_bytes:>14.1f} {r.build_seconds:>9.3f} "
            f"{r.container_bytes:>14} {r.objects:>8} {r.blocks:>8}"
            for r in self.results
        ]
        title = (f"n={self.n} accesses={self.accesses} sizes={self.size_range[0]}-{self.size_range[1]} "
                 f"seed={self.seed} pin={'on' if self.pinned else 'off'} "
                 f"client_cache={'on' if self.client_cache else 'off'}")
        return "\n".join([REPORT_HEADER, title, head] + rows)


def _footprint(backend, prefix, block_size):
    """Bytes, objects and blocks a container leaves on the backend."""
    lengths = [backend.length(p) for p in backend.list(prefix)]
    blocks = sum(-(-length // block_size) for length in lengths)
    return sum(lengths), len(lengths), blocks


def _measure(strategy, meter, get, names, expected, build_seconds, footprint):
    meter.reset()
    for name in names:
        if get(name) != expected[name]:
            raise IntegrityError(f"{strategy} returned wrong bytes for '{name}'", obj=strategy)
    k = max(len(names), 1)
    meta = meter.phase_counters("metadata")
    content = meter.phase_counters("content")
    return StrategyResult(
        strategy=strategy,
        accesses=len(names),
        read_ops=meter.total.read_ops / k,
        read_bytes=meter.total.read_bytes / k,
        metadata_read_ops=meta.read_ops / k,
        metadata_read_bytes=meta.read_bytes / k,
        content_read_ops=content.read_ops / k,
        content_read_bytes=content.read_bytes / k,
        build_seconds=build_seconds,
        container_bytes=footprint[0],
        objects=footprint[1],
        blocks=footprint[2],
    )


def run_bench(n: int, size_range: Tuple[int, int] = (1024, 65536), accesses: int = config.BENCH_ACCESSES,
              pin: bool = False, client_cache: bool = False, seed: int = config.BENCH_SEED,
              archive_config: Optional[ArchiveConfig] = None) -> BenchReport:
    block_size = archive_config.block_size if archive_config else config.HPF_BLOCK_SIZE
    corpus = synthetic_corpus(n, size_range, seed)
    expected = dict(corpus)
    names = [corpus[p][0] for p in access_positions(n, accesses, seed)] if n else []
    report = BenchReport(n, len(names), size_range, seed, pin, client_cache)
    logger.info(f"Benchmarking {n} files, {len(names)} accesses")

    for strategy in STRATEGIES:
        meter = IoMeter()
        backend = MeteredBackend(MemoryBackend(), meter)
        started = time.perf_counter()
        if strategy == "hpf":
            handles = create_archive(backend, "bench", corpus, archive_config)
            build_seconds = time.perf_counter() - started
            if pin:
                handles.pin_indexes()
            handles.load_headers()
            get = handles.get_file
        elif strategy == "sparse":
            container = SparseContainer.build(backend, "bench", corpus, client_cache=client_cache)
            build_seconds = time.perf_counter() - started
            get = container.get
        elif strategy == "scan":
            container = ScanContainer.build(backend, "bench", corpus, client_cache=client_cache)
            build_seconds = time.perf_counter() - started
            get = container.get
        else:
            container = NativeStore.build(backend, "bench", corpus)
            build_seconds = time.perf_counter() - started
            get = container.get
        footprint = _footprint(backend, "bench/", block_size)
        report.results.append(_measure(strategy, meter, get, names, expected, build_seconds, footprint))
    return report
