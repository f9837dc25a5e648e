"""Datasets, SOSD files and the lookup/insert workload runner.

Latencies are measured per operation with ``time.perf_counter_ns``; the
first 10% of lookups warm caches and are left out of the statistics. Every
lookup answer is checked against a binary-search oracle.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .distribution import as_keys
from .errors import (CorrectnessError, DomainError, SosdCountMismatchError, SosdTruncatedError,
                     SosdUnsortedError)
from .index import BinarySearchIndex, build_rmi, build_rmrt
from .models import TrainConfig, gradient_descent_runs
from .pool import ModelPool, default_bin_count, load_pool, pretrain_pool

KEY_SCALE = 2.0**63
INDEX_KINDS = ("rmrt", "rmi-mr", "rmi", "binary-search")
INDEX_ALIASES = {"bsearch": "binary-search"}
WARMUP_FRACTION = 0.1


# -- data --------------------------------------------------------------------

def gen_keys(kind: str, n: int, seed=0, alpha: int = 1) -> np.ndarray:
    """Sorted keys ``floor(u**alpha * 2**63)`` for ``u`` uniform in [0, 1)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if kind == "uniform":
        alpha = 1
    elif kind != "skew":
        raise DomainError(f"unknown dataset kind {kind!r}")
    if alpha < 1 or alpha % 2 == 0:
        raise DomainError(f"alpha must be a positive odd integer, got {alpha}")
    u = np.random.default_rng(seed).random(n)
    keys = np.floor(u**alpha * KEY_SCALE).astype(np.uint64)
    keys.sort()
    return keys


def sosd_write(d, path):
    """Write keys as a little-endian u64 count followed by the u64 keys."""
    keys = as_keys(d)
    if keys.dtype.kind != "u":
        raise DomainError("SOSD files hold unsigned integer keys")
    with open(path, "wb") as fh:
        fh.write(np.uint64(keys.size).astype("<u8").tobytes())
        fh.write(keys.astype("<u8").tobytes())


def sosd_read(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise SosdTruncatedError(f"{path}: missing the 8-byte key count")
    count = int(np.frombuffer(data, dtype="<u8", count=1)[0])
    body = len(data) - 8
    if body % 8:
        raise SosdTruncatedError(f"{path}: trailing partial key ({body % 8} bytes)")
    if body // 8 < count:
        raise SosdTruncatedError(f"{path}: header promises {count} keys, file holds {body // 8}")
    if body // 8 > count:
        raise SosdCountMismatchError(f"{path}: header says {count} keys, file holds {body // 8}")
    keys = np.frombuffer(data, dtype="<u8", offset=8).astype(np.uint64)
    if np.any(keys[1:] < keys[:-1]):
        raise SosdUnsortedError(f"{path}: keys are not in ascending order")
    return keys


def gen_data(kind: str, n: int, seed, out, alpha: int = 1) -> np.ndarray:
    keys = gen_keys(kind, n, seed, alpha)
    sosd_write(keys, out)
    return keys


def sample_like(keys: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw keys from the piecewise-uniform CDF interpolated through ``keys``."""
    if count == 0:
        return np.zeros(0, dtype=np.uint64)
    n = keys.size
    if n == 1:
        return np.full(count, keys[0], dtype=np.uint64)
    u = rng.random(count) * (n - 1)
    i = np.minimum(u.astype(np.int64), n - 2)
    lo, hi = keys[i], keys[i + 1]
    step = np.floor((u - i) * (hi - lo).astype(np.float64))
    return lo + np.minimum(step.astype(np.uint64), hi - lo)


# -- workloads ---------------------------------------------------------------

@dataclass
class WorkloadSpec:
    data: Optional[str] = None
    kind: str = "uniform"
    alpha: int = 1
    n: int = 100_000
    index: str = "rmrt"
    model: str = "linear"
    eps: float = 0.9
    fanout: int = 1024
    branch: int = 128
    leaf_cap: int = 10_000
    lookups: int = 100_000
    insert_ratio: float = 0.0
    absent_ratio: float = 0.0
    interleave: bool = False
    pool: str = "warm"
    m: Optional[int] = None
    ns: int = 100
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.index = INDEX_ALIASES.get(self.index, self.index)
        if self.index not in INDEX_KINDS:
            raise DomainError(f"unknown index kind {self.index!r}")
        if self.model not in ("linear", "tinynet"):
            raise DomainError(f"unknown model kind {self.model!r}")
        for name in ("insert_ratio", "absent_ratio"):
            if not 0.0 <= getattr(self, name) <= 100.0:
                raise DomainError(f"{name} must lie in [0, 100]")
        for name in ("n", "lookups", "threads", "fanout", "branch", "leaf_cap"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        if self.threads < 1:
            raise DomainError("threads must be >= 1")

    @classmethod
    def from_dict(cls, raw: Dict) -> "WorkloadSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise DomainError(f"unknown workload fields: {sorted(unknown)}")
        return cls(**raw)

    def dataset_name(self) -> str:
        if self.data:
            return Path(self.data).name
        return "uniform" if self.kind == "uniform" else f"skew{self.alpha}"


@dataclass
class MetricsReport:
    index: str
    model: Optional[str]
    dataset: str
    n: int
    eps: Optional[float]
    build_seconds: float
    lookups: int
    lookup_mean_ns: float
    lookup_median_ns: float
    lookup_p99_ns: float
    inserts: int
    insert_throughput: Optional[float]
    rebuilds: int
    reuse_rate: Optional[float]
    model_count: int
    param_bytes: int
    mean_window: float
    gd_runs: int
    found: int
    total: int
    lookup_throughput: Optional[float] = None

    def to_dict(self) -> Dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


CSV_COLUMNS = [f.name for f in fields(MetricsReport)]


def append_csv(report: MetricsReport, path):
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if new:
            writer.writeheader()
        writer.writerow({k: ("" if v is None else v) for k, v in asdict(report).items()})


def resolve_pool(spec: WorkloadSpec) -> Optional[ModelPool]:
    if spec.index in ("rmi", "binary-search"):
        return None
    if spec.pool == "warm":
        return pretrain_pool(spec.eps, spec.model, spec.ns, spec.seed, spec.m)
    if spec.pool == "empty":
        m = spec.m or default_bin_count(spec.eps)
        return ModelPool(spec.model, spec.eps, m, spec.ns)
    return load_pool(spec.pool)


def build_index(kind: str, keys: np.ndarray, pool: Optional[ModelPool], eps: float,
                model_kind: str = "linear", fanout: int = 1024, leaf_cap: int = 10_000,
                branch: int = 128, config: Optional[TrainConfig] = None):
    kind = INDEX_ALIASES.get(kind, kind)
    if kind == "binary-search":
        return BinarySearchIndex(keys)
    if kind == "rmi":
        return build_rmi(keys, fanout, None, eps, model_kind, config)
    if kind == "rmi-mr":
        return build_rmi(keys, fanout, pool, eps, model_kind, config)
    if kind == "rmrt":
        return build_rmrt(keys, leaf_cap, branch, pool, eps, model_kind, config)
    raise DomainError(f"unknown index kind {kind!r}")


def _load_keys(spec: WorkloadSpec) -> np.ndarray:
    if spec.data:
        return sosd_read(spec.data)
    return gen_keys(spec.kind, spec.n, spec.seed, spec.alpha)


def _insert_keys(spec: WorkloadSpec, keys: np.ndarray, count: int) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, 1])
    if count == 0:
        return np.zeros(0, dtype=np.uint64)
    if spec.data:
        return sample_like(keys, count, rng)
    fresh = gen_keys(spec.kind, count, [spec.seed, 1], spec.alpha)
    return rng.permutation(fresh)


def _absent_key(keys: np.ndarray, rng: np.random.Generator) -> int:
    while True:
        probe = int(rng.integers(0, 2**64, dtype=np.uint64))
        i = int(np.searchsorted(keys, np.uint64(probe)))
        if i == keys.size or int(keys[i]) != probe:
            return probe


def _percentile(values: np.ndarray, q: float) -> float:
    return float(np.percentile(values, q)) if values.size else 0.0


def _hit_key(index, hit):
    if hit.leaf is None:
        return index.keys[hit.offset]
    return hit.leaf.keys[hit.offset]


class _Checker:
    """Compares index answers with the oracle and keeps a few mismatches."""

    def __init__(self):
        self.found = 0
        self.total = 0
        self.sample = []

    def check(self, index, key: int, hit, expected: bool):
        self.total += 1
        ok = (hit is not None) == expected and (hit is None or _hit_key(index, hit) == key)
        if ok:
            self.found += 1
        elif len(self.sample) < 10:
            self.sample.append({"key": int(key), "expected": bool(expected), "got": hit is not None})

    def raise_if_wrong(self):
        if self.found != self.total:
            raise CorrectnessError(f"{self.total - self.found} of {self.total} lookups disagree "
                                   "with the binary-search oracle", self.sample)


def _timed_lookups(index, probes):
    latencies = np.empty(len(probes), dtype=np.int64)
    hits = [None] * len(probes)
    clock = time.perf_counter_ns
    lookup = index.lookup
    for i, key in enumerate(probes):
        t0 = clock()
        hits[i] = lookup(key)
        latencies[i] = clock() - t0
    return hits, latencies


def run_workload(spec: WorkloadSpec) -> MetricsReport:
    """Build, query and update one index; raises ``CorrectnessError`` on any wrong answer."""
    keys = _load_keys(spec)
    n = keys.size
    rng = np.random.default_rng([spec.seed, 2])
    pool = resolve_pool(spec)
    gd_before = gradient_descent_runs()
    t0 = time.perf_counter()
    index = build_index(spec.index, keys, pool, spec.eps, spec.model, spec.fanout,
                        spec.leaf_cap, spec.branch)
    build_seconds = time.perf_counter() - t0
    gd_runs = gradient_descent_runs() - gd_before

    n_inserts = int(round(n * spec.insert_ratio / 100.0))
    new_keys = _insert_keys(spec, keys, n_inserts).tolist()
    n_absent = int(round(spec.lookups * spec.absent_ratio / 100.0))
    checker = _Checker()

    if spec.interleave and n_inserts:
        latencies, insert_seconds = _interleaved(spec, index, keys, new_keys, n_absent, rng, checker)
    else:
        probes = keys[rng.integers(0, n, spec.lookups - n_absent)].tolist()
        probes += [_absent_key(keys, rng) for _ in range(n_absent)]
        order = rng.permutation(len(probes))
        probes = [probes[i] for i in order]
        expected = [i < spec.lookups - n_absent for i in order]
        lookup_throughput = None
        if spec.threads > 1:
            hits, latencies, lookup_throughput = _threaded_lookups(index, probes, spec.threads)
        else:
            hits, latencies = _timed_lookups(index, probes)
        for key, hit, want in zip(probes, hits, expected):
            checker.check(index, key, hit, want)
        t0 = time.perf_counter()
        for key in new_keys:
            index.insert(key)
        insert_seconds = time.perf_counter() - t0
        for key in new_keys:
            checker.check(index, key, index.lookup(key), True)
    checker.raise_if_wrong()

    warm = latencies[int(len(latencies) * WARMUP_FRACTION):]
    stats = index.stats()
    learned = spec.index != "binary-search"
    return MetricsReport(
        index=spec.index,
        model=spec.model if learned else None,
        dataset=spec.dataset_name(),
        n=int(n),
        eps=spec.eps if learned else None,
        build_seconds=build_seconds,
        lookups=int(len(latencies)),
        lookup_mean_ns=float(warm.mean()) if warm.size else 0.0,
        lookup_median_ns=_percentile(warm, 50),
        lookup_p99_ns=_percentile(warm, 99),
        inserts=n_inserts,
        insert_throughput=n_inserts / insert_seconds if n_inserts and insert_seconds > 0 else None,
        rebuilds=index.rebuilds,
        reuse_rate=stats.reuse_rate if learned else None,
        model_count=stats.model_count,
        param_bytes=stats.param_bytes,
        mean_window=stats.mean_window,
        gd_runs=gd_runs,
        found=checker.found,
        total=checker.total,
        lookup_throughput=lookup_throughput if not (spec.interleave and n_inserts) else None,
    )


def _interleaved(spec, index, keys, new_keys, n_absent, rng, checker):
    """Mixed stream of inserts and lookups; lookups may target earlier inserts."""
    n_lookups = spec.lookups
    ops = np.array([1] * len(new_keys) + [0] * n_lookups, dtype=np.int8)
    rng.shuffle(ops)
    absent_slots = set(rng.choice(n_lookups, size=n_absent, replace=False).tolist()) if n_absent else set()
    inserted = []
    inserted_set = set()
    latencies = []
    insert_ns = 0
    clock = time.perf_counter_ns
    next_insert = 0
    lookup_no = 0
    n = keys.size
    for op in ops.tolist():
        if op == 1:
            key = new_keys[next_insert]
            next_insert += 1
            t0 = clock()
            index.insert(key)
            insert_ns += clock() - t0
            inserted.append(key)
            inserted_set.add(key)
            continue
        if lookup_no in absent_slots:
            key = _absent_key(keys, rng)
            while key in inserted_set:
                key = _absent_key(keys, rng)
            expected = False
        else:
            pick = int(rng.integers(0, n + len(inserted)))
            key = int(keys[pick]) if pick < n else inserted[pick - n]
            expected = True
        lookup_no += 1
        t0 = clock()
        hit = index.lookup(key)
        latencies.append(clock() - t0)
        checker.check(index, key, hit, expected)
    return np.asarray(latencies, dtype=np.int64), insert_ns / 1e9


def _threaded_lookups(index, probes, threads):
    chunks = [probes[i::threads] for i in range(threads)]
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=threads) as ex:
        results = list(ex.map(lambda chunk: _timed_lookups(index, chunk), chunks))
    elapsed = time.perf_counter() - t0
    hits = [None] * len(probes)
    latencies = np.empty(len(probes), dtype=np.int64)
    for t, (chunk_hits, chunk_lat) in enumerate(results):
        hits[t::threads] = chunk_hits
        latencies[t::threads] = chunk_lat
    throughput = len(probes) / elapsed if elapsed > 0 else math.inf
    return hits, latencies, throughput
