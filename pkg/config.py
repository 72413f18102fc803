# Configuration for the perfect-hash small-file archive

import os

from dotenv import load_dotenv

load_dotenv()

# Container Layout
HPF_BUCKET_CAPACITY = int(os.getenv("HPF_BUCKET_CAPACITY", "200000"))  # records per index file
HPF_BLOCK_SIZE = int(os.getenv("HPF_BLOCK_SIZE", str(128 * 1024 * 1024)))  # one index file must fit one block
HPF_WORKERS = int(os.getenv("HPF_WORKERS", "2"))  # parallel merge workers, one part object each
HPF_MAX_PART_SIZE = int(os.getenv("HPF_MAX_PART_SIZE", "0"))  # 0 = never rotate
HPF_CODEC = os.getenv("HPF_CODEC", "identity")  # identity | lz4
HPF_LAZY_PERSIST = os.getenv("HPF_LAZY_PERSIST", "0") == "1"  # hint only, no effect on reference backends

# On-disk Format
FORMAT_VERSION = 1
METADATA_RECORD_SIZE = 24
SELECT_SAMPLE_INTERVAL = 512  # one sampled high-bit position per 512 ones

# Baselines
SPARSE_INDEX_INTERVAL = 128  # map-style container keeps every 128th key
SCAN_READ_CHUNK = int(os.getenv("SCAN_READ_CHUNK", str(64 * 1024)))

# Bench
BENCH_ACCESSES = int(os.getenv("BENCH_ACCESSES", "100"))
BENCH_SIZE_RANGE = os.getenv("BENCH_SIZE_RANGE", "1024-65536")
BENCH_SEED = int(os.getenv("BENCH_SEED", "7"))

# System
LOG_LEVEL = os.getenv("LOG_LEVEL", "WARNING")
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
