import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from colorama import Fore, Style, init

import config
from app.archive import create_archive, open_archive, verify
from app.bench import parse_size_range, run_bench
from app.errors import FormatError, HpfError, IntegrityError, NotFoundError
from app.manifest import ArchiveConfig
from app.storage import LocalDirBackend

init(autoreset=True)
logger = logging.getLogger("hpf")

EXIT_LIBRARY_ERROR = 1
EXIT_INTEGRITY = 3
EXIT_NOT_FOUND = 4


def input_files(root: str) -> List[Tuple[str, Path]]:
    base = Path(root)
    if not base.is_dir():
        raise NotADirectoryError(f"input {root} is not a directory")
    return [(p.relative_to(base).as_posix(), p) for p in sorted(base.rglob("*")) if p.is_file()]


def open_store(archive: str):
    """The archive directory is the backend root; its objects sit directly inside."""
    return LocalDirBackend(archive), ""


def archive_config(args) -> ArchiveConfig:
    return ArchiveConfig(
        bucket_capacity=args.bucket_capacity,
        workers=args.workers,
        max_part_size=args.max_part_size,
        codec=args.codec,
    )


# ----------------------------------------
# Commands
# ----------------------------------------

def cmd_create(args) -> int:
    backend, name = open_store(args.archive)
    files = input_files(args.input)
    handles = create_archive(backend, name, files, archive_config(args))
    stats = handles.stats()
    print(f"{Fore.GREEN}[CREATE]{Style.RESET_ALL} {args.archive}: {stats.file_count} files, "
          f"{stats.part_count} parts, {stats.index_count} index files")
    return 0


def cmd_add(args) -> int:
    backend, name = open_store(args.archive)
    files = input_files(args.input)
    handles = open_archive(backend, name).append_files(files)
    print(f"{Fore.GREEN}[ADD]{Style.RESET_ALL} {args.archive}: {len(files)} files added, "
          f"{handles.manifest.file_count} total")
    return 0


def cmd_get(args) -> int:
    backend, name = open_store(args.archive)
    data = open_archive(backend, name).get_file(args.name)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    return 0


def cmd_ls(args) -> int:
    backend, name = open_store(args.archive)
    for file_name in open_archive(backend, name).list_names():
        print(file_name)
    return 0


def cmd_stat(args) -> int:
    backend, name = open_store(args.archive)
    stats = open_archive(backend, name).stats()
    print(f"{Fore.CYAN}=== {args.archive} ==={Style.RESET_ALL}")
    print(f"Files: {stats.file_count}")
    print(f"Parts: {stats.part_count} ({stats.part_bytes:,} bytes)")
    print(f"Index files: {stats.index_count} ({stats.index_bytes:,} bytes)")
    print(f"Global depth: {stats.global_depth}  Bucket capacity: {stats.bucket_capacity}  Codec: {stats.codec}")
    print("-" * 50)
    for b in stats.buckets:
        print(f"index-{b.bucket_id}: depth {b.local_depth}, {b.records} records, "
              f"header {b.header_length} bytes, {b.bits_per_key} bits/key")
    return 0


def cmd_verify(args) -> int:
    backend, name = open_store(args.archive)
    results = verify(open_archive(backend, name))
    failed = 0
    for check in results:
        if check.passed:
            print(f"{Fore.GREEN}[PASS]{Style.RESET_ALL} {check.name}")
            continue
        failed += 1
        print(f"{Fore.RED}[FAIL]{Style.RESET_ALL} {check.name}")
        for detail in check.details:
            print(f"    {detail}")
    if failed:
        print(f"error\tintegrity-error\t{failed} of {len(results)} checks failed", file=sys.stderr)
        return EXIT_INTEGRITY
    print(f"{Fore.GREEN}[VERIFY]{Style.RESET_ALL} all {len(results)} checks passed")
    return 0


def cmd_extract(args) -> int:
    backend, name = open_store(args.archive)
    count = open_archive(backend, name).extract_all(args.dest)
    print(f"{Fore.GREEN}[EXTRACT]{Style.RESET_ALL} {count} files to {args.dest}")
    return 0


def cmd_bench(args) -> int:
    cfg = ArchiveConfig(bucket_capacity=args.bucket_capacity, workers=args.workers)
    report = run_bench(
        args.n,
        size_range=parse_size_range(args.size_range),
        accesses=args.accesses,
        pin=args.pin == "on",
        client_cache=args.client_cache,
        seed=args.seed,
        archive_config=cfg,
    )
    print(f"{Fore.CYAN}[BENCH]{Style.RESET_ALL} {report.table()}")
    print("-" * 50)
    for line in report.lines():
        print(line)
    return 0


# ----------------------------------------
# Entry point
# ----------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpf", description="Perfect-hash small-file archive")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_archive(p):
        p.add_argument("--archive", required=True, help="archive path (a directory of objects)")
        return p

    def with_layout(p):
        p.add_argument("--workers", type=int, default=config.HPF_WORKERS)
        p.add_argument("--bucket-capacity", type=int, default=config.HPF_BUCKET_CAPACITY)
        return p

    p = with_layout(with_archive(sub.add_parser("create", help="pack a directory into a new archive")))
    p.add_argument("--input", required=True)
    p.add_argument("--max-part-size", type=int, default=config.HPF_MAX_PART_SIZE)
    p.add_argument("--codec", choices=("identity", "lz4"), default=config.HPF_CODEC)
    p.set_defaults(func=cmd_create)

    p = with_archive(sub.add_parser("add", help="append a directory to an archive"))
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_add)

    p = with_archive(sub.add_parser("get", help="print one file"))
    p.add_argument("name")
    p.add_argument("--out")
    p.set_defaults(func=cmd_get)

    with_archive(sub.add_parser("ls", help="list archived names")).set_defaults(func=cmd_ls)
    with_archive(sub.add_parser("stat", help="show archive layout")).set_defaults(func=cmd_stat)
    with_archive(sub.add_parser("verify", help="check archive integrity")).set_defaults(func=cmd_verify)

    p = with_archive(sub.add_parser("extract", help="write every file out"))
    p.add_argument("--dest", required=True)
    p.set_defaults(func=cmd_extract)

    p = with_layout(sub.add_parser("bench", help="compare access costs against the baselines"))
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--size-range", default=config.BENCH_SIZE_RANGE)
    p.add_argument("--accesses", type=int, default=config.BENCH_ACCESSES)
    p.add_argument("--pin", choices=("on", "off"), default="off")
    p.add_argument("--client-cache", action="store_true", help="baselines keep their indexes in memory")
    p.add_argument("--seed", type=int, default=config.BENCH_SEED)
    p.set_defaults(func=cmd_bench)
    return parser


def exit_code(error: Exception) -> int:
    if isinstance(error, NotFoundError):
        return EXIT_NOT_FOUND
    if isinstance(error, (IntegrityError, FormatError)):
        return EXIT_INTEGRITY
    return EXIT_LIBRARY_ERROR


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=config.LOG_LEVEL, format=config.LOG_FORMAT)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HpfError as e:
        logger.debug(f"{args.command} failed", exc_info=True)
        print(f"error\t{e.code}\t{e}", file=sys.stderr)
        return exit_code(e)
    except OSError as e:
        logger.debug(f"{args.command} failed", exc_info=True)
        print(f"error\tio-error\t{e}", file=sys.stderr)
        return EXIT_LIBRARY_ERROR


if __name__ == "__main__":
    sys.exit(main())
