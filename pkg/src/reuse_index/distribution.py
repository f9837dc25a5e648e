"""Empirical CDFs, exact KS distance and histogram sketches of key sets.

Every distance in this module is measured on span-normalized data: a key set
is mapped affinely from its own ``[min, max]`` (or an explicit span) onto
``[0, 1]`` before comparison. A set whose keys are all equal normalizes to 0.

Key sets are 1-d numpy arrays sorted ascending. Integer arrays are handled as
``uint64`` so that offsets from the span origin are computed exactly before
the conversion to float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DomainError

KEY_MAX = 2**64 - 1

Number = Union[int, float]


@dataclass(frozen=True)
class DomainSpan:
    lo: Number
    hi: Number

    def __post_init__(self):
        if self.hi < self.lo:
            raise DomainError(f"span hi {self.hi} < lo {self.lo}")

    @property
    def degenerate(self) -> bool:
        return self.hi == self.lo


UNIT_SPAN = DomainSpan(0.0, 1.0)
FULL_KEY_SPAN = DomainSpan(0, KEY_MAX)


@dataclass(frozen=True, eq=False)
class Histogram:
    """Relative frequencies of ``m`` equal-width bins over ``span``."""

    bins: np.ndarray
    span: DomainSpan = UNIT_SPAN

    @property
    def m(self) -> int:
        return len(self.bins)

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return self.span == other.span and np.array_equal(self.bins, other.bins)

    def __repr__(self):
        return f"Histogram({np.round(self.bins, 6).tolist()}, span={self.span})"


def as_keys(values) -> np.ndarray:
    """Coerce ``values`` to a 1-d key array (uint64 for integers, float64 otherwise)."""
    if isinstance(values, np.ndarray):
        arr = values
    else:
        values = list(values)
        if values and all(isinstance(v, (int, np.integer)) for v in values):
            ints = [int(v) for v in values]
            if min(ints) < 0 or max(ints) > KEY_MAX:
                raise DomainError("integer keys must lie in [0, 2**64 - 1]")
            arr = np.array(ints, dtype=np.uint64)
        else:
            arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DomainError("key sets are one-dimensional")
    if arr.dtype.kind in "iu":
        if arr.dtype.kind == "i" and arr.size and arr.min() < 0:
            raise DomainError("integer keys must be non-negative")
        return arr.astype(np.uint64, copy=False)
    if arr.dtype.kind == "f":
        return arr.astype(np.float64, copy=False)
    raise DomainError(f"unsupported key dtype {arr.dtype}")


def _require_nonempty(keys: np.ndarray, what: str = "key set"):
    if keys.size == 0:
        raise DomainError(f"{what} is empty")


def span_of(keys: np.ndarray) -> DomainSpan:
    _require_nonempty(keys)
    if keys.dtype.kind == "u":
        return DomainSpan(int(keys[0]), int(keys[-1]))
    return DomainSpan(float(keys[0]), float(keys[-1]))


class Normalizer:
    """Affine map from a key span onto [0, 1].

    The scalar and array paths perform the same floating-point operations, so a
    key normalizes to the same double whichever path is used.
    """

    __slots__ = ("lo", "width", "integer")

    def __init__(self, span: DomainSpan, integer: bool):
        self.integer = integer
        if integer:
            self.lo = int(span.lo)
            self.width = float(int(span.hi) - self.lo)
        else:
            self.lo = float(span.lo)
            self.width = float(span.hi) - self.lo

    def scalar(self, key) -> float:
        if self.width == 0.0:
            return 0.0
        if self.integer:
            return float(int(key) - self.lo) / self.width
        return (float(key) - self.lo) / self.width

    def array(self, keys: np.ndarray) -> np.ndarray:
        if self.width == 0.0:
            return np.zeros(keys.shape, dtype=np.float64)
        if self.integer:
            return (keys - np.uint64(self.lo)).astype(np.float64) / self.width
        return (keys - self.lo) / self.width


def normalizer_for(keys: np.ndarray, span: Optional[DomainSpan] = None) -> Normalizer:
    return Normalizer(span if span is not None else span_of(keys), keys.dtype.kind == "u")


def normalize(d, span: Optional[DomainSpan] = None) -> np.ndarray:
    """Map ``d`` onto [0, 1] using its own span unless ``span`` is given."""
    keys = as_keys(d)
    _require_nonempty(keys)
    return normalizer_for(keys, span).array(keys)


def empirical_cdf_at(d, x) -> float:
    """Fraction of keys in ``d`` that are <= ``x``."""
    keys = as_keys(d)
    _require_nonempty(keys)
    if keys.dtype.kind == "u":
        if x < 0:
            return 0.0
        if x > KEY_MAX:
            return 1.0
        probe = np.uint64(int(math.floor(x)))
    else:
        probe = float(x)
    return int(np.searchsorted(keys, probe, side="right")) / keys.size


def ks_distance(a, b, span_a: Optional[DomainSpan] = None,
                span_b: Optional[DomainSpan] = None) -> float:
    """Exact two-sample KS statistic between the span-normalized sets.

    Both normalized arrays are sorted runs; a stable sort merges them in linear
    time and the CDF gap is read after the last element of every tied group,
    which covers both the value at and the left limit of every breakpoint.
    """
    ka, kb = as_keys(a), as_keys(b)
    _require_nonempty(ka, "first key set")
    _require_nonempty(kb, "second key set")
    ua = normalizer_for(ka, span_a).array(ka)
    ub = normalizer_for(kb, span_b).array(kb)
    na, nb = ua.size, ub.size
    merged = np.concatenate([ua, ub])
    order = np.argsort(merged, kind="stable")
    from_a = order < na
    count_a = np.cumsum(from_a)
    count_b = np.arange(1, na + nb + 1) - count_a
    values = merged[order]
    group_end = np.empty(values.size, dtype=bool)
    group_end[:-1] = values[1:] != values[:-1]
    group_end[-1] = True
    gap = np.abs(count_a[group_end] / na - count_b[group_end] / nb)
    return float(gap.max())


# Sets up to this size are normalized in full when building a histogram.
SMALL_SET = 4096


def _count_below(keys: np.ndarray, norm: Normalizer, edge: float) -> int:
    """Number of keys whose normalized value is < ``edge``, in O(log n).

    A raw-key threshold gives a first guess; the guess is then corrected using
    the exact float predicate, jumping whole runs of equal keys at a time.
    """
    n = keys.size
    if norm.integer:
        guess = norm.lo + int(edge * norm.width)
        guess = min(max(guess, 0), KEY_MAX)
        idx = int(np.searchsorted(keys, np.uint64(guess), side="left"))
    else:
        idx = int(np.searchsorted(keys, norm.lo + edge * norm.width, side="left"))
    while idx > 0 and norm.scalar(keys[idx - 1]) >= edge:
        idx = int(np.searchsorted(keys, keys[idx - 1], side="left"))
    while idx < n and norm.scalar(keys[idx]) < edge:
        idx = int(np.searchsorted(keys, keys[idx], side="right"))
    return idx


def build_histogram(d, m: int, span: Optional[DomainSpan] = None) -> Histogram:
    """Equal-width relative-frequency histogram of ``d`` with ``m`` bins.

    Bin ``i`` holds keys whose normalized value lies in ``[i/m, (i+1)/m)``; the
    last bin also holds 1.0. Each edge costs one binary search.
    """
    keys = as_keys(d)
    _require_nonempty(keys)
    if m < 1:
        raise DomainError(f"bin count must be >= 1, got {m}")
    span = span if span is not None else span_of(keys)
    norm = Normalizer(span, keys.dtype.kind == "u")
    n = keys.size
    bins = np.zeros(m, dtype=np.float64)
    if norm.width == 0.0:
        bins[0] = 1.0
        return Histogram(bins, span)
    if n <= SMALL_SET:
        # Normalized values are non-decreasing in the keys, so one vectorized
        # search applies the same predicate as the per-edge path.
        inner = np.searchsorted(norm.array(keys), np.arange(1, m) / m, side="left")
        edges = np.concatenate([[0], inner, [n]])
    else:
        edges = [0] + [_count_below(keys, norm, i / m) for i in range(1, m)] + [n]
    counts = np.diff(np.asarray(edges, dtype=np.int64))
    return Histogram(counts / n, span)


def _bins_of(h) -> np.ndarray:
    return np.asarray(h.bins if isinstance(h, Histogram) else h, dtype=np.float64)


def histogram_distance(hs, ht) -> float:
    """Histogram-based upper bound on the KS distance (prefix-sum sweep)."""
    bs, bt = _bins_of(hs), _bins_of(ht)
    if bs.shape != bt.shape:
        raise DomainError(f"histograms have different bin counts: {bs.size} vs {bt.size}")
    dist = 0.0
    ps = pt = 0.0
    for s, t in zip(bs.tolist(), bt.tolist()):
        dist = max(s + ps - pt, t + pt - ps, dist)
        ps += s
        pt += t
    return dist


def exclusive_prefix(matrix: np.ndarray) -> np.ndarray:
    """Row-wise running mass before each bin (first column zero)."""
    prefix = np.zeros_like(matrix)
    np.cumsum(matrix[:, :-1], axis=1, out=prefix[:, 1:])
    return prefix


def histogram_distances(matrix: np.ndarray, ht, prefix: Optional[np.ndarray] = None) -> np.ndarray:
    """``histogram_distance`` of every row of ``matrix`` against ``ht``.

    Performs the same float operations per row as the scalar sweep, so results
    match it bit for bit. ``prefix`` may carry a cached ``exclusive_prefix``.
    """
    bt = _bins_of(ht)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != bt.size:
        raise DomainError("histogram matrix does not match target bin count")
    if matrix.shape[0] == 0:
        return np.zeros(0)
    prefix_s = exclusive_prefix(matrix) if prefix is None else prefix
    prefix_t = np.zeros_like(bt)
    np.cumsum(bt[:-1], out=prefix_t[1:])
    up = (matrix + prefix_s) - prefix_t
    down = (bt + prefix_t) - prefix_s
    return np.maximum(np.maximum(up, down).max(axis=1), 0.0)
