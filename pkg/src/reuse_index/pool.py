"""Synthetic CDF grid, model pre-training, first-fit reuse and pool files.

A pool holds models trained on small synthetic key sets whose histograms lie
on a coarse grid: every bin carries 0, one half-step or one full step of
probability mass, where a full step is ``1 - eps``. Any target whose histogram
sits within ``1 - eps`` of a pooled histogram can borrow that model.
"""

from __future__ import annotations

import bisect
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Tuple

import numba
import numpy as np

from .distribution import (FULL_KEY_SPAN, KEY_MAX, Histogram, as_keys, build_histogram,
                           exclusive_prefix)
from .errors import (DomainError, PoolFormatError, PoolTruncatedError, PoolVersionError,
                     TrainingError)
from .models import (AdaptedModel, CoreModel, ErrorBounds, LinearModel, Provenance, TinyNet,
                     TrainConfig, adapt_model, compute_transfer_bounds, core_from_params,
                     fit_model, own_model)

DEFAULT_NS = 100
REUSE_TOLERANCE = 1e-9
MODEL_KINDS = ("linear", "tinynet")


@numba.njit(cache=True)
def _scan_first(matrix, prefix, target, target_prefix, limit):
    """First row whose sweep distance to ``target`` is within ``limit``.

    Uses the same float operations per bin as ``histogram_distances``.
    """
    for row in range(matrix.shape[0]):
        dist = 0.0
        for j in range(matrix.shape[1]):
            up = (matrix[row, j] + prefix[row, j]) - target_prefix[j]
            down = (target[j] + target_prefix[j]) - prefix[row, j]
            if up > dist:
                dist = up
            if down > dist:
                dist = down
        if dist <= limit:
            return row, dist
    return -1, math.nan


def reuse_allowed(dist_h: float, eps: float) -> bool:
    """Whether a histogram distance is close enough to reuse a model."""
    return dist_h <= (1.0 - eps) + REUSE_TOLERANCE


def _check_eps(eps: float):
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")


def default_bin_count(eps: float) -> int:
    """Bins needed for one full step per bin to cover the unit mass twice over.

    ``eps = 0.9`` is capped at 12 bins; the uncapped 20 would make the grid
    far larger than needed.
    """
    _check_eps(eps)
    if abs(eps - 0.9) < 1e-12:
        return 12
    return math.ceil(2.0 / (1.0 - eps) - 1e-9)


def enumerate_histograms(eps: float, m: Optional[int] = None) -> List[Histogram]:
    """All bin sequences over {0, half step, full step} with unit total, in lexicographic order.

    Returns an empty list (with a warning) when the half step does not divide 1.
    """
    _check_eps(eps)
    m = default_bin_count(eps) if m is None else m
    if m < 1:
        raise DomainError(f"bin count must be >= 1, got {m}")
    half = (1.0 - eps) / 2.0
    units = round(1.0 / half)
    if abs(units * half - 1.0) > 1e-9:
        warnings.warn(f"eps={eps}: bin step {half:g} does not divide 1; no grid histograms")
        return []
    if units > 2 * m:
        warnings.warn(f"eps={eps}, m={m}: {m} bins cannot hold {units} half steps")
        return []
    out: List[Histogram] = []
    current = [0] * m

    def fill(pos: int, left: int):
        if pos == m:
            if left == 0:
                out.append(Histogram(np.array(current, dtype=np.float64) / units))
            return
        room = 2 * (m - pos - 1)
        for part in (0, 1, 2):
            if part <= left and left - part <= room:
                current[pos] = part
                fill(pos + 1, left - part)
        current[pos] = 0

    fill(0, units)
    return out


def apportion(fractions: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder split of ``total`` items by ``fractions``."""
    quotas = np.asarray(fractions, dtype=np.float64) * total
    counts = np.floor(quotas + 1e-9).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        remainders = quotas - counts
        order = np.argsort(-remainders, kind="stable")
        counts[order[:short]] += 1
    elif short < 0:
        order = np.argsort(quotas - counts, kind="stable")
        for i in order:
            if short == 0:
                break
            if counts[i] > 0:
                counts[i] -= 1
                short += 1
    return counts


BIN_MARGIN = 2**13


def synthesize_dataset(h: Histogram, ns: int = DEFAULT_NS, seed=0) -> np.ndarray:
    """Sorted uint64 keys whose full-range histogram equals ``h`` exactly.

    Keys are uniform inside each bin, kept a few float ulps away from the bin
    edges so normalization cannot move them across one. When the first (last)
    bin is nonempty its smallest (largest) key is pinned to 0 (``KEY_MAX``),
    so the set's own span is the full key range.
    """
    if ns < 1:
        raise DomainError("ns must be >= 1")
    m = h.m
    counts = apportion(h.bins, ns)
    rng = np.random.default_rng(seed)
    parts = []
    for i, count in enumerate(counts.tolist()):
        if count == 0:
            continue
        lo = (i * KEY_MAX) // m + BIN_MARGIN
        hi = ((i + 1) * KEY_MAX) // m - BIN_MARGIN
        part = rng.integers(lo, hi, size=count, endpoint=True, dtype=np.uint64)
        part.sort()
        if i == 0:
            part[0] = 0
        if i == m - 1:
            part[-1] = KEY_MAX
        parts.append(part)
    return np.sort(np.concatenate(parts)).astype(np.uint64)


@dataclass(frozen=True, eq=False)
class PoolEntry:
    """A pooled model with its histogram and domain-wide bounds (source positions)."""

    entry_id: int
    histogram: Histogram
    model: CoreModel
    bounds: ErrorBounds
    max_abs_err: float

    def __eq__(self, other):
        if not isinstance(other, PoolEntry):
            return NotImplemented
        return (self.entry_id == other.entry_id
                and np.array_equal(self.histogram.bins, other.histogram.bins)
                and type(self.model) is type(other.model)
                and np.array_equal(self.model.params, other.model.params)
                and self.bounds == other.bounds
                and self.max_abs_err == other.max_abs_err)


@dataclass(eq=False)
class ModelPool:
    """Entries kept in ascending ``max_abs_err`` order (ties keep arrival order)."""

    model_kind: str
    eps: float
    m: int
    ns: int = DEFAULT_NS
    train_config: TrainConfig = field(default_factory=TrainConfig)
    entries: List[PoolEntry] = field(default_factory=list)
    _errors: List[float] = field(default_factory=list, repr=False)
    _matrix: Optional[np.ndarray] = field(default=None, repr=False)
    _prefix: Optional[np.ndarray] = field(default=None, repr=False)
    _next_id: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise DomainError(f"unknown model kind {self.model_kind!r}")
        if self.m < 1:
            raise DomainError("pool bin count must be >= 1")
        if self.ns < 2:
            raise DomainError("pool reference size must be >= 2")
        given = list(self.entries)
        self.entries, self._errors = [], []
        self._matrix = np.zeros((0, self.m))
        self._prefix = np.zeros((0, self.m))
        self._next_id = 0
        for entry in given:
            self.enqueue(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[PoolEntry]:
        return iter(self.entries)

    def __eq__(self, other):
        if not isinstance(other, ModelPool):
            return NotImplemented
        return (self.model_kind == other.model_kind and self.eps == other.eps
                and self.m == other.m and self.ns == other.ns
                and self.entries == other.entries)

    def next_id(self) -> int:
        return self._next_id

    def enqueue(self, entry: PoolEntry):
        if entry.histogram.m != self.m:
            raise DomainError(f"entry has {entry.histogram.m} bins, pool uses {self.m}")
        expected = "linear" if isinstance(entry.model, LinearModel) else "tinynet"
        if expected != self.model_kind:
            raise DomainError(f"entry model is {expected}, pool holds {self.model_kind}")
        pos = bisect.bisect_right(self._errors, entry.max_abs_err)
        self._errors.insert(pos, entry.max_abs_err)
        self.entries.insert(pos, entry)
        row = np.asarray(entry.histogram.bins, dtype=np.float64)[None, :]
        self._matrix = np.insert(self._matrix, pos, row, axis=0)
        self._prefix = np.insert(self._prefix, pos, exclusive_prefix(row), axis=0)
        self._next_id = max(self._next_id, entry.entry_id + 1)

    def bin_matrix(self) -> np.ndarray:
        """Entry histograms as rows, in queue order."""
        return self._matrix

    def first_fit(self, target: Histogram, eps: Optional[float] = None) -> Tuple[int, float]:
        """Index and distance of the first entry (in error order) close enough to reuse.

        Returns ``(-1, nan)`` when no entry qualifies.
        """
        eps = self.eps if eps is None else eps
        limit = (1.0 - eps) + REUSE_TOLERANCE
        target = np.asarray(target.bins, dtype=np.float64)
        if target.size != self.m:
            raise DomainError("target histogram does not match the pool's bin count")
        target_prefix = np.zeros_like(target)
        np.cumsum(target[:-1], out=target_prefix[1:])
        row, dist = _scan_first(self._matrix, self._prefix, target, target_prefix, limit)
        return int(row), float(dist)


def _new_entry(entry_id: int, keys: np.ndarray, hist: Histogram, kind: str, ns: int,
               config: TrainConfig, span=None) -> Tuple[PoolEntry, CoreModel]:
    model = fit_model(kind, keys, config, span)
    bounds = compute_transfer_bounds(model, keys, ns, span)
    return PoolEntry(entry_id, hist, model, bounds, bounds.max_abs_err), model


def pretrain_pool(eps: float, model_kind: str = "linear", ns: int = DEFAULT_NS, seed=0,
                  m: Optional[int] = None, config: Optional[TrainConfig] = None) -> ModelPool:
    """Train one model per grid histogram on a synthetic set of ``ns`` keys."""
    m = default_bin_count(eps) if m is None else m
    config = config or TrainConfig()
    pool = ModelPool(model_kind, eps, m, ns, config)
    for idx, hist in enumerate(enumerate_histograms(eps, m)):
        keys = synthesize_dataset(hist, ns, seed=[seed, idx])
        try:
            entry, _ = _new_entry(idx, keys, hist, model_kind, ns, config, FULL_KEY_SPAN)
        except TrainingError as exc:
            raise TrainingError(f"entry {idx}: {exc}", epoch=exc.epoch, entry_id=idx) from exc
        pool.enqueue(entry)
    return pool


def agile_model_reuse(d, pool: Optional[ModelPool], eps: Optional[float] = None,
                      model_kind: Optional[str] = None,
                      config: Optional[TrainConfig] = None) -> AdaptedModel:
    """Reuse the first pooled model close enough to ``d``, else train and pool a new one.

    With ``pool=None`` a model is always trained and nothing is pooled.
    """
    keys = as_keys(d)
    if keys.size == 0:
        raise DomainError("cannot index an empty key set")
    if pool is None:
        kind = model_kind or "linear"
        return own_model(fit_model(kind, keys, config), keys)
    eps = pool.eps if eps is None else eps
    kind = model_kind or pool.model_kind
    config = config or pool.train_config
    target = build_histogram(keys, pool.m)
    idx, dist = pool.first_fit(target, eps)
    if idx >= 0:
        entry = pool.entries[idx]
        return adapt_model(entry.model, entry.bounds, pool.ns, keys, dist,
                           Provenance.reused(1.0 - dist, entry.entry_id))
    entry, model = _new_entry(pool.next_id(), keys, target, kind, pool.ns, config)
    pool.enqueue(entry)
    return own_model(model, keys)


# -- persistence ---------------------------------------------------------------

MAGIC = b"RIPOOL\0"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<7sBBdIIQ")
_KIND_CODES = {"linear": 0, "tinynet": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def pool_to_bytes(pool: ModelPool) -> bytes:
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, _KIND_CODES[pool.model_kind], pool.eps,
                           pool.m, pool.ns, len(pool))]
    for e in pool.entries:
        chunks.append(struct.pack("<I", e.entry_id))
        chunks.append(np.asarray(e.histogram.bins, dtype="<f8").tobytes())
        chunks.append(np.asarray(e.model.params, dtype="<f8").tobytes())
        chunks.append(struct.pack("<qqd", int(e.bounds.err_l), int(e.bounds.err_u), e.max_abs_err))
    return b"".join(chunks)


def pool_from_bytes(data: bytes) -> ModelPool:
    if data[:len(MAGIC)] != MAGIC[:len(data)]:
        raise PoolFormatError("not a pool file (bad magic)")
    if len(data) < _HEADER.size:
        raise PoolTruncatedError("pool header is truncated")
    _, version, kind_code, eps, m, ns, count = _HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise PoolVersionError(f"unsupported pool format version {version}")
    if kind_code not in _KIND_NAMES:
        raise PoolFormatError(f"unknown model kind code {kind_code}")
    kind = _KIND_NAMES[kind_code]
    n_params = LinearModel.n_params if kind == "linear" else TinyNet.n_params
    entry_size = 4 + 8 * m + 8 * n_params + 24
    expected = _HEADER.size + count * entry_size
    if len(data) < expected:
        raise PoolTruncatedError(f"pool declares {count} entries but the file ends early")
    if len(data) > expected:
        raise PoolFormatError("trailing bytes after the last pool entry")
    try:
        pool = ModelPool(kind, eps, m, ns)
    except DomainError as exc:
        raise PoolFormatError(str(exc)) from exc
    offset = _HEADER.size
    entries = []
    for _ in range(count):
        (entry_id,) = struct.unpack_from("<I", data, offset)
        offset += 4
        bins = np.frombuffer(data, dtype="<f8", count=m, offset=offset).astype(np.float64)
        offset += 8 * m
        params = np.frombuffer(data, dtype="<f8", count=n_params, offset=offset).astype(np.float64)
        offset += 8 * n_params
        err_l, err_u, max_abs = struct.unpack_from("<qqd", data, offset)
        offset += 24
        try:
            model = core_from_params(kind, params)
            bounds = ErrorBounds(float(err_l), float(err_u))
        except DomainError as exc:
            raise PoolFormatError(f"entry {entry_id}: {exc}") from exc
        entries.append(PoolEntry(entry_id, Histogram(bins), model, bounds, max_abs))
    errors = [e.max_abs_err for e in entries]
    if any(a > b for a, b in zip(errors, errors[1:])):
        raise PoolFormatError("pool entries are not in ascending error order")
    # Entries were written in queue order, so enqueueing in file order rebuilds it exactly.
    for entry in entries:
        pool.enqueue(entry)
    return pool


def save_pool(pool: ModelPool, path):
    Path(path).write_bytes(pool_to_bytes(pool))


def load_pool(path) -> ModelPool:
    return pool_from_bytes(Path(path).read_bytes())
