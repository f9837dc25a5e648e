"""Rank predictors, their error bounds and affine adaptation to new key sets.

Core models (``LinearModel`` and ``TinyNet``) map a normalized key in [0, 1]
to a normalized rank in [0, 1]. An ``AdaptedModel`` wraps a core model with
the affine maps that align it to a concrete key set: it takes the offset of a
key from the set's smallest key and predicts an array position directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numba
import numpy as np

from .distribution import DomainSpan, as_keys, normalizer_for, span_of
from .errors import DomainError, TrainingError

HIDDEN_UNITS = 4
TINYNET_PARAMS = 3 * HIDDEN_UNITS + 1


@dataclass(frozen=True)
class LinearModel:
    slope: float
    intercept: float

    kind = "linear"
    n_params = 2

    def predict(self, u: float) -> float:
        return self.slope * u + self.intercept

    def predict_array(self, u: np.ndarray) -> np.ndarray:
        return self.slope * u + self.intercept

    @property
    def params(self) -> np.ndarray:
        return np.array([self.slope, self.intercept], dtype=np.float64)

    @classmethod
    def from_params(cls, params) -> "LinearModel":
        a, b = (float(p) for p in params)
        return cls(a, b)


@dataclass(frozen=True, eq=False)
class TinyNet:
    """One hidden layer of four rectified units and a linear output.

    ``params`` is laid out in layer order: hidden weights, hidden biases,
    output weights, output bias.
    """

    params: np.ndarray

    kind = "tinynet"
    n_params = TINYNET_PARAMS

    def __post_init__(self):
        p = np.array(self.params, dtype=np.float64).reshape(-1)
        if p.size != TINYNET_PARAMS:
            raise DomainError(f"tinynet needs {TINYNET_PARAMS} parameters, got {p.size}")
        if not np.all(np.isfinite(p)):
            raise DomainError("tinynet parameters must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "_scalar", p.tolist())

    def __eq__(self, other):
        if not isinstance(other, TinyNet):
            return NotImplemented
        return np.array_equal(self.params, other.params)

    @property
    def hidden_weights(self) -> np.ndarray:
        return self.params[0:4]

    @property
    def hidden_biases(self) -> np.ndarray:
        return self.params[4:8]

    @property
    def output_weights(self) -> np.ndarray:
        return self.params[8:12]

    @property
    def output_bias(self) -> float:
        return float(self.params[12])

    def kinks(self) -> np.ndarray:
        """Inputs where a hidden unit switches between its two linear pieces."""
        w1, b1 = self.hidden_weights, self.hidden_biases
        live = w1 != 0.0
        return -b1[live] / w1[live]

    def predict(self, u: float) -> float:
        w10, w11, w12, w13, b10, b11, b12, b13, w20, w21, w22, w23, b2 = self._scalar
        acc = 0.0
        z = w10 * u + b10
        if z > 0.0:
            acc += z * w20
        z = w11 * u + b11
        if z > 0.0:
            acc += z * w21
        z = w12 * u + b12
        if z > 0.0:
            acc += z * w22
        z = w13 * u + b13
        if z > 0.0:
            acc += z * w23
        return acc + b2

    def predict_array(self, u: np.ndarray) -> np.ndarray:
        p = self.params
        acc = np.zeros(np.shape(u), dtype=np.float64)
        for j in range(HIDDEN_UNITS):
            z = p[j] * u + p[4 + j]
            acc += np.where(z > 0.0, z * p[8 + j], 0.0)
        return acc + p[12]

    @classmethod
    def from_params(cls, params) -> "TinyNet":
        return cls(np.asarray(params, dtype=np.float64))


CoreModel = Union[LinearModel, TinyNet]


def core_from_params(kind: str, params) -> CoreModel:
    if kind == "linear":
        return LinearModel.from_params(params)
    if kind == "tinynet":
        return TinyNet.from_params(params)
    raise DomainError(f"unknown model kind {kind!r}")


def training_pairs(d, span: Optional[DomainSpan] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Normalized keys and normalized ranks ``i/(n-1)`` of a sorted key set.

    Keys are normalized over their own span unless ``span`` is given.
    """
    keys = as_keys(d)
    if keys.size == 0:
        raise DomainError("cannot train on an empty key set")
    u = normalizer_for(keys, span).array(keys)
    n = keys.size
    ranks = np.arange(n, dtype=np.float64) / (n - 1) if n > 1 else np.zeros(1)
    return u, ranks


def fit_linear(d, span: Optional[DomainSpan] = None) -> LinearModel:
    """Closed-form least-squares line through (normalized key, normalized rank)."""
    u, y = training_pairs(d, span)
    if u.size == 1:
        return LinearModel(0.0, 0.0)
    du = u - u.mean()
    var = float(du @ du)
    if var == 0.0:
        return LinearModel(0.0, float(y.mean()))
    slope = float(du @ (y - y.mean())) / var
    return LinearModel(slope, float(y.mean() - slope * u.mean()))


# -- tiny network training ------------------------------------------------------

@numba.njit(cache=True)
def _moments(x, y):
    """Prefix sums of 1, x, x^2, y, xy and y^2; row k covers the first k samples."""
    n = x.size
    out = np.zeros((n + 1, 6))
    for i in range(n):
        xi = x[i]
        yi = y[i]
        out[i + 1, 0] = out[i, 0] + 1.0
        out[i + 1, 1] = out[i, 1] + xi
        out[i + 1, 2] = out[i, 2] + xi * xi
        out[i + 1, 3] = out[i, 3] + yi
        out[i + 1, 4] = out[i, 4] + xi * yi
        out[i + 1, 5] = out[i, 5] + yi * yi
    return out


@numba.njit(cache=True)
def _first_active(x, w, b):
    """Index of the first sample with ``w*x + b > 0`` (inputs sorted, w > 0)."""
    lo = 0
    hi = x.size
    while lo < hi:
        mid = (lo + hi) // 2
        if w * x[mid] + b > 0.0:
            hi = mid
        else:
            lo = mid + 1
    return lo


@numba.njit(cache=True)
def _first_inactive(x, w, b):
    """Index of the first sample with ``w*x + b <= 0`` (inputs sorted, w < 0)."""
    lo = 0
    hi = x.size
    while lo < hi:
        mid = (lo + hi) // 2
        if w * x[mid] + b > 0.0:
            lo = mid + 1
        else:
            hi = mid
    return lo


@numba.njit(cache=True)
def _loss_grad(p, x, mom, grad):
    """Mean squared error and its gradient over sorted inputs ``x``.

    Each hidden unit is active on a prefix or suffix of the sorted inputs, so
    the active pattern is constant on at most nine runs. On a run the output
    is ``A*x + B``, and the loss and gradient reduce to the run's moments.
    """
    n = x.size
    starts = np.empty(4, dtype=np.int64)
    ends = np.empty(4, dtype=np.int64)
    cuts = np.empty(10, dtype=np.int64)
    cuts[0] = 0
    cuts[1] = n
    for j in range(4):
        w = p[j]
        b = p[4 + j]
        if w > 0.0:
            starts[j] = _first_active(x, w, b)
            ends[j] = n
        elif w < 0.0:
            starts[j] = 0
            ends[j] = _first_inactive(x, w, b)
        else:
            starts[j] = 0
            ends[j] = n if b > 0.0 else 0
        cuts[2 + 2 * j] = starts[j]
        cuts[3 + 2 * j] = ends[j]
    cuts.sort()
    for k in range(13):
        grad[k] = 0.0
    loss = 0.0
    for s in range(9):
        lo = cuts[s]
        hi = cuts[s + 1]
        if hi <= lo:
            continue
        c = mom[hi, 0] - mom[lo, 0]
        sx = mom[hi, 1] - mom[lo, 1]
        sxx = mom[hi, 2] - mom[lo, 2]
        sy = mom[hi, 3] - mom[lo, 3]
        sxy = mom[hi, 4] - mom[lo, 4]
        syy = mom[hi, 5] - mom[lo, 5]
        a = 0.0
        bb = p[12]
        for j in range(4):
            if starts[j] <= lo and hi <= ends[j]:
                a += p[j] * p[8 + j]
                bb += p[4 + j] * p[8 + j]
        sr = a * sx + bb * c - sy
        srx = a * sxx + bb * sx - sxy
        loss += a * a * sxx + 2.0 * a * bb * sx + bb * bb * c - 2.0 * a * sxy - 2.0 * bb * sy + syy
        grad[12] += sr
        for j in range(4):
            if starts[j] <= lo and hi <= ends[j]:
                grad[j] += srx
                grad[4 + j] += sr
                grad[8 + j] += p[j] * srx + p[4 + j] * sr
    scale = 2.0 / n
    for j in range(4):
        grad[j] *= scale * p[8 + j]
        grad[4 + j] *= scale * p[8 + j]
        grad[8 + j] *= scale
    grad[12] *= scale
    return loss / n


@numba.njit(cache=True)
def _gd(p, x, y, epochs, lr):
    """Full-batch gradient descent in place; returns the first bad epoch or -1."""
    mom = _moments(x, y)
    grad = np.zeros(p.size)
    for epoch in range(epochs):
        loss = _loss_grad(p, x, mom, grad)
        if not np.isfinite(loss):
            return epoch
        for k in range(p.size):
            p[k] -= lr * grad[k]
        for k in range(p.size):
            if not np.isfinite(p[k]):
                return epoch
    return -1


def tinynet_loss_and_grad(params, x, y) -> Tuple[float, np.ndarray]:
    """Loss and analytic gradient of the network; exposed for gradient checks."""
    p = np.array(params, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size == 0 or np.any(np.diff(x) < 0):
        raise DomainError("inputs must be nonempty and sorted ascending")
    grad = np.zeros(TINYNET_PARAMS)
    loss = _loss_grad(p, x, _moments(x, y), grad)
    return float(loss), grad


class _TrainingCounter:
    """Counts gradient-descent runs so callers can prove a path trained nothing."""

    def __init__(self):
        self.count = 0


training_counter = _TrainingCounter()


def gradient_descent_runs() -> int:
    return training_counter.count


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 0.1
    seed: int = 42


def init_tinynet(seed) -> np.ndarray:
    """Seeded starting point whose kinks are spread across [0, 1].

    The first unit starts as a near-identity ramp, so the untrained network is
    already a rough CDF of uniform data.
    """
    rng = np.random.default_rng(seed)
    w1 = rng.uniform(0.5, 1.5, HIDDEN_UNITS)
    kinks = (np.arange(HIDDEN_UNITS) + rng.uniform(0.0, 0.5, HIDDEN_UNITS)) / HIDDEN_UNITS
    b1 = -w1 * kinks
    w2 = rng.normal(0.0, 0.1, HIDDEN_UNITS)
    w2[0] += 1.0 / w1[0]
    return np.concatenate([w1, b1, w2, [0.0]])


def fit_tinynet(d, epochs: int = 500, learning_rate: float = 0.1, seed=42,
                span: Optional[DomainSpan] = None) -> TinyNet:
    """Train a ``TinyNet`` by full-batch gradient descent on squared rank error."""
    if epochs < 0:
        raise DomainError("epochs must be >= 0")
    u, y = training_pairs(d, span)
    params = init_tinynet(seed)
    if epochs > 0:
        training_counter.count += 1
        bad = _gd(params, u, y, int(epochs), float(learning_rate))
        if bad >= 0:
            raise TrainingError(f"training diverged at epoch {bad}", epoch=int(bad))
    return TinyNet(params)


def fit_model(kind: str, d, config: Optional[TrainConfig] = None,
              span: Optional[DomainSpan] = None) -> CoreModel:
    if kind == "linear":
        return fit_linear(d, span)
    if kind == "tinynet":
        config = config or TrainConfig()
        return fit_tinynet(d, config.epochs, config.learning_rate, config.seed, span)
    raise DomainError(f"unknown model kind {kind!r}")


# -- bounds and affine maps ----------------------------------------------------

@dataclass(frozen=True)
class ErrorBounds:
    """Signed position offsets: a key's position lies in [pred + err_l, pred + err_u]."""

    err_l: float
    err_u: float

    def __post_init__(self):
        if self.err_l > self.err_u:
            raise DomainError(f"err_l {self.err_l} > err_u {self.err_u}")

    @property
    def max_abs_err(self) -> float:
        return max(abs(self.err_l), abs(self.err_u))

    @property
    def width(self) -> float:
        return self.err_u - self.err_l

    def widened(self, lower: float, upper: float) -> "ErrorBounds":
        return ErrorBounds(min(self.err_l, lower), max(self.err_u, upper))


@dataclass(frozen=True)
class AffineMap:
    scale: float
    shift: float

    def __post_init__(self):
        if not math.isfinite(self.scale):
            raise DomainError("affine map scale must be finite")

    def __call__(self, x):
        return self.scale * x + self.shift

    @property
    def is_identity(self) -> bool:
        return self.scale == 1.0 and self.shift == 0.0


IDENTITY = AffineMap(1.0, 0.0)


def make_maps(src_keys: DomainSpan, src_pos: DomainSpan, tgt_keys: DomainSpan,
              tgt_pos: DomainSpan) -> Tuple[AffineMap, AffineMap]:
    """Input map sending the target key span onto the source key span, and
    output map sending source positions onto target positions."""
    if tgt_keys.degenerate:
        t_in = AffineMap(0.0, float(src_keys.lo))
    else:
        s_dx = (float(src_keys.hi) - float(src_keys.lo)) / (float(tgt_keys.hi) - float(tgt_keys.lo))
        t_in = AffineMap(s_dx, float(src_keys.lo) - float(tgt_keys.lo) * s_dx)
    if src_pos.degenerate:
        raise DomainError("source position span is degenerate")
    s_dy = (float(tgt_pos.hi) - float(tgt_pos.lo)) / (float(src_pos.hi) - float(src_pos.lo))
    t_out = AffineMap(s_dy, float(tgt_pos.lo) - float(src_pos.lo) * s_dy)
    return t_in, t_out


def fold_affine(model: LinearModel, t_in: AffineMap, t_out: AffineMap) -> LinearModel:
    """Single line equal to ``t_out(model(t_in(x)))``."""
    a, b = model.slope, model.intercept
    slope = a * t_in.scale * t_out.scale
    intercept = (a * t_in.shift + b) * t_out.scale + t_out.shift
    return LinearModel(slope, intercept)


def _round_out(lower: float, upper: float) -> ErrorBounds:
    return ErrorBounds(float(math.floor(lower + 1e-9)), float(math.ceil(upper - 1e-9)))


def adapt_error_bounds(e: ErrorBounds, dist: float, n_target: int, s_dy: float) -> ErrorBounds:
    """Transfer source bounds to a target set at KS distance ``dist``.

    The distance term is spread over ``n_target`` positions; the source bounds
    scale with the position stretch ``s_dy``. Results round outward to integers.
    """
    if not 0.0 <= dist <= 1.0:
        raise DomainError(f"distance {dist} outside [0, 1]")
    if n_target < 1 or s_dy <= 0.0:
        raise DomainError("adaptation needs n_target >= 1 and s_dy > 0")
    lower = -dist * n_target + e.err_l * s_dy
    upper = dist * n_target + e.err_u * s_dy
    return _round_out(lower, upper)


def compute_error_bounds(model, d) -> ErrorBounds:
    """Tightest offsets containing every training position.

    ``model`` is either a core model (predicting normalized rank from normalized
    key) or an ``AdaptedModel`` (predicting positions from raw keys).
    """
    keys = as_keys(d)
    if keys.size == 0:
        raise DomainError("cannot bound a model on an empty key set")
    n = keys.size
    if isinstance(model, AdaptedModel):
        pred = model.predict_positions(keys)
    else:
        u = normalizer_for(keys).array(keys)
        pred = model.predict_array(u) * (n - 1)
    resid = np.arange(n, dtype=np.float64) - pred
    return ErrorBounds(float(resid.min()), float(resid.max()))


def compute_transfer_bounds(model: CoreModel, d, n_ref: int,
                            span: Optional[DomainSpan] = None) -> ErrorBounds:
    """Bounds of ``model`` against the CDF of ``d`` over the whole unit interval.

    Unlike ``compute_error_bounds``, which only looks at the training keys, this
    takes the supremum of ``cdf(z) - model(z)`` and the infimum of
    ``cdf_left(z) - model(z)`` over every ``z`` in [0, 1]. Adapted windows built
    from these bounds contain every target key's position whenever the distance
    passed to ``adapt_error_bounds`` is at least the true KS distance. Values
    are expressed in positions of a set of ``n_ref`` keys and rounded outward.
    """
    keys = as_keys(d)
    if keys.size == 0:
        raise DomainError("cannot bound a model on an empty key set")
    if n_ref < 2:
        raise DomainError("reference size must be >= 2")
    u = normalizer_for(keys, span).array(keys)
    distinct = np.ones(u.size, dtype=bool)
    distinct[:-1] = u[1:] != u[:-1]
    # Keys are sorted, so the last copy of each value carries the CDF step.
    values = u[distinct]
    cdf = (np.flatnonzero(distinct) + 1) / u.size
    extra = np.array([0.0, 1.0])
    if isinstance(model, TinyNet):
        kinks = model.kinks()
        extra = np.concatenate([extra, kinks[(kinks > 0.0) & (kinks < 1.0)]])
    extra = np.setdiff1d(extra, values)  # sorted and free of key values
    at = np.searchsorted(values, extra)
    grid = np.insert(values, at, extra)
    cdf = np.insert(cdf, at, np.concatenate([[0.0], cdf])[at])
    pred = model.predict_array(grid)
    lo_pred = np.minimum(pred[:-1], pred[1:])
    hi_pred = np.maximum(pred[:-1], pred[1:])
    upper = max(float((cdf[:-1] - lo_pred).max(initial=-np.inf)), 1.0 - float(pred[-1]))
    lower = min(float((cdf[:-1] - hi_pred).min(initial=np.inf)), -float(pred[0]))
    scale = n_ref - 1
    return ErrorBounds(float(math.floor(lower * scale)), float(math.ceil(upper * scale)))


# -- adapted models ----------------------------------------------------------

@dataclass(frozen=True)
class Provenance:
    kind: str
    similarity: float = 1.0
    entry_id: Optional[int] = None

    @classmethod
    def trained(cls) -> "Provenance":
        return cls("trained", 1.0, None)

    @classmethod
    def reused(cls, similarity: float, entry_id: int) -> "Provenance":
        return cls("reused", float(similarity), int(entry_id))


@dataclass(frozen=True, eq=False)
class AdaptedModel:
    """A core model aligned to one key set; predicts positions from raw keys.

    The input is the key's offset from ``base`` (the set's smallest key). A
    linear core arrives pre-folded, with both maps stored as identity. A
    network keeps its maps: ``input_map`` takes the offset to the network's
    [0, 1] input, the network's rank is scaled by ``src_scale`` to a source
    position, and ``output_map`` carries that onto target positions.
    """

    core: CoreModel
    bounds: ErrorBounds
    provenance: Provenance
    n_target: int
    base: Union[int, float] = 0
    input_map: AffineMap = IDENTITY
    output_map: AffineMap = IDENTITY
    src_scale: float = 1.0
    _fast: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.core, LinearModel):
            if not (self.input_map.is_identity and self.output_map.is_identity and self.src_scale == 1.0):
                raise DomainError("linear cores must be folded before wrapping")
            fast = ("linear", self.core.slope, self.core.intercept, self.base)
        else:
            fast = ("net", self.core, self.input_map.scale, self.input_map.shift,
                    self.src_scale, self.output_map.scale, self.output_map.shift)
        object.__setattr__(self, "_fast", fast)

    @property
    def similarity(self) -> float:
        return self.provenance.similarity

    @property
    def reused(self) -> bool:
        return self.provenance.kind == "reused"

    @property
    def param_bytes(self) -> int:
        count = self.core.n_params
        if isinstance(self.core, TinyNet):
            count += 5
        return 8 * count

    def offset(self, key) -> float:
        if isinstance(self.base, int):
            return float(int(key) - self.base)
        return float(key) - self.base

    def offsets(self, keys: np.ndarray) -> np.ndarray:
        keys = as_keys(keys)
        if keys.dtype.kind == "u":
            base = np.uint64(int(self.base))
            above = keys >= base
            out = np.empty(keys.size, dtype=np.float64)
            out[above] = (keys[above] - base).astype(np.float64)
            out[~above] = -((base - keys[~above]).astype(np.float64))
            return out
        return keys - float(self.base)

    def predict_position(self, key) -> float:
        x = self.offset(key)
        fast = self._fast
        if fast[0] == "linear":
            return fast[1] * x + fast[2]
        _, core, si, hi, src, so, ho = fast
        return so * (core.predict(si * x + hi) * src) + ho

    def predict_native(self, key) -> float:
        """``predict_position`` for a key that is already a Python int (integer
        sets) or float (float sets); skips the conversions on the lookup path.

        Mixed int/float arithmetic rounds the exact offset once, exactly like
        the explicit ``float`` conversion, so results are identical.
        """
        fast = self._fast
        if fast[0] == "linear":
            return fast[1] * (key - fast[3]) + fast[2]
        _, core, si, hi, src, so, ho = fast
        return so * (core.predict(si * (key - self.base) + hi) * src) + ho

    def predict_positions(self, keys) -> np.ndarray:
        x = self.offsets(keys)
        fast = self._fast
        if fast[0] == "linear":
            return fast[1] * x + fast[2]
        _, core, si, hi, src, so, ho = fast
        return so * (core.predict_array(si * x + hi) * src) + ho

    def with_bounds(self, bounds: ErrorBounds) -> "AdaptedModel":
        return AdaptedModel(self.core, bounds, self.provenance, self.n_target, self.base,
                            self.input_map, self.output_map, self.src_scale)


def constant_model(n_target: int = 0, base=0) -> AdaptedModel:
    """Sentinel predicting position 0 with a zero-width window."""
    return AdaptedModel(LinearModel(0.0, 0.0), ErrorBounds(0.0, 0.0), Provenance.trained(),
                        n_target, base)


def _offset_span(keys: np.ndarray) -> Tuple[Union[int, float], DomainSpan]:
    span = span_of(keys)
    if keys.dtype.kind == "u":
        return span.lo, DomainSpan(0, span.hi - span.lo)
    return span.lo, DomainSpan(0.0, span.hi - span.lo)


def adapt_model(core: CoreModel, src_bounds: ErrorBounds, n_source: int, d, dist: float,
                provenance: Provenance) -> AdaptedModel:
    """Align a pool model (trained on ``n_source`` synthetic keys over [0, 1]) to ``d``.

    Bounds come from ``adapt_error_bounds`` with the given distance.
    """
    keys = as_keys(d)
    n = keys.size
    if n == 0:
        raise DomainError("cannot adapt to an empty key set")
    if n_source < 2:
        raise DomainError("source size must be >= 2 for adaptation")
    base, offsets = _offset_span(keys)
    if n == 1:
        return AdaptedModel(LinearModel(0.0, 0.0), ErrorBounds(0.0, 0.0), provenance, 1, base)
    t_in, t_out = make_maps(DomainSpan(0.0, 1.0), DomainSpan(0.0, float(n_source - 1)),
                            offsets, DomainSpan(0.0, float(n - 1)))
    bounds = adapt_error_bounds(src_bounds, dist, n, t_out.scale)
    return _wrap(core, bounds, provenance, n, base, t_in, t_out, float(n_source - 1))


def own_model(core: CoreModel, d) -> AdaptedModel:
    """Wrap a model trained on ``d`` itself, with bounds over ``d``'s keys."""
    keys = as_keys(d)
    n = keys.size
    if n == 0:
        raise DomainError("cannot wrap a model for an empty key set")
    base, offsets = _offset_span(keys)
    if n == 1:
        return AdaptedModel(LinearModel(0.0, 0.0), ErrorBounds(0.0, 0.0), Provenance.trained(), 1, base)
    t_in, t_out = make_maps(DomainSpan(0.0, 1.0), DomainSpan(0.0, float(n - 1)),
                            offsets, DomainSpan(0.0, float(n - 1)))
    wrapped = _wrap(core, ErrorBounds(0.0, 0.0), Provenance.trained(), n, base, t_in, t_out,
                    float(n - 1))
    return wrapped.with_bounds(compute_error_bounds(wrapped, keys))


def _wrap(core, bounds, provenance, n, base, t_in, t_out, src_scale) -> AdaptedModel:
    if isinstance(core, LinearModel):
        positional = LinearModel(core.slope * src_scale, core.intercept * src_scale)
        return AdaptedModel(fold_affine(positional, t_in, t_out), bounds, provenance, n, base)
    return AdaptedModel(core, bounds, provenance, n, base, t_in, t_out, src_scale)
