"""Learned indexes built with model reuse: a two-layer RMI and an adaptive tree.

Both structures store keys in leaf-local sorted lists. A leaf's adapted model
predicts a position inside its own list; lookups search only the predicted
window. Inserts shift positions inside one leaf, widen that leaf's window and
rebuild the leaf once its insertion budget is spent.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from .distribution import KEY_MAX, as_keys
from .errors import DomainError
from .models import AdaptedModel, TrainConfig, constant_model
from .pool import ModelPool, agile_model_reuse


def insertion_budget(sim: float, eps: float, n_d: int) -> int:
    """Inserts a leaf absorbs before its data may drift past the reuse threshold."""
    denom = 1.0 + eps - sim
    if denom <= 0.0:
        raise DomainError("similarity must be at most 1 + eps")
    return max(0, math.floor((sim - eps) / denom * n_d + 1e-9))


class Reuser:
    """Model source for an index build: reuse from a pool or train from scratch."""

    def __init__(self, pool: Optional[ModelPool], eps: float, model_kind: str = "linear",
                 config: Optional[TrainConfig] = None):
        if not 0.0 < eps < 1.0:
            raise DomainError(f"eps must lie in (0, 1), got {eps}")
        self.pool = pool
        self.eps = eps
        self.model_kind = model_kind
        self.config = config or (pool.train_config if pool is not None else TrainConfig())
        self.trained = 0
        self.reused = 0

    def model_for(self, keys: np.ndarray) -> AdaptedModel:
        model = agile_model_reuse(keys, self.pool, self.eps, self.model_kind, self.config)
        if model.reused:
            self.reused += 1
        else:
            self.trained += 1
        return model


class Hit(NamedTuple):
    leaf_id: int
    offset: int
    leaf: "LeafSegment"


class LeafSegment:
    """Sorted keys of one leaf, with tombstones, model, window and insert budget."""

    __slots__ = ("leaf_id", "keys", "dead", "n_dead", "model", "sim", "n_d", "insert_count",
                 "budget", "err_l", "err_u", "depth", "_integer")

    def __init__(self, leaf_id: int, keys: np.ndarray, reuser: Reuser, depth: int = 0):
        self.leaf_id = leaf_id
        self.depth = depth
        self._integer = keys.dtype.kind == "u"
        self._fit(keys, reuser)

    def _fit(self, keys: np.ndarray, reuser: Reuser, key_list: Optional[list] = None):
        self.keys = keys.tolist() if key_list is None else key_list
        self.dead = bytearray(len(self.keys))
        self.n_dead = 0
        if self.keys:
            self.model = reuser.model_for(keys)
            self.sim = self.model.similarity
        else:
            self.model = constant_model()
            self.sim = reuser.eps
        self.n_d = len(self.keys)
        self.insert_count = 0
        self.budget = insertion_budget(self.sim, reuser.eps, self.n_d)
        self.err_l = self.model.bounds.err_l
        self.err_u = self.model.bounds.err_u

    def __len__(self) -> int:
        return len(self.keys)

    def live_keys(self) -> np.ndarray:
        dtype = np.uint64 if self._integer else np.float64
        if not self.n_dead:
            return np.array(self.keys, dtype=dtype)
        return np.array([k for k, gone in zip(self.keys, self.dead) if not gone], dtype=dtype)

    @property
    def live_count(self) -> int:
        return len(self.keys) - self.n_dead

    @property
    def window_width(self) -> float:
        return self.err_u - self.err_l

    def window(self, key):
        """Clamped index range ``[lo, hi]`` the model promises for ``key``."""
        pred = self.model.predict_native(key)
        lo = math.floor(pred + self.err_l)
        hi = math.ceil(pred + self.err_u)
        return max(lo, 0), min(hi, len(self.keys) - 1)

    def find(self, key) -> int:
        """Offset of a live copy of ``key`` (an int for integer leaves), or -1."""
        keys = self.keys
        if not keys:
            return -1
        pred = self.model.predict_native(key)
        lo = math.floor(pred + self.err_l)
        if lo < 0:
            lo = 0
        hi = math.ceil(pred + self.err_u) + 1
        if hi > len(keys):
            hi = len(keys)
        if lo >= hi:
            return -1
        while lo < hi:
            mid = (lo + hi) >> 1
            if keys[mid] < key:
                lo = mid + 1
            else:
                hi = mid
        n = len(keys)
        while lo < n and keys[lo] == key:
            if not self.dead[lo]:
                return lo
            lo += 1
        return -1

    def insert(self, key) -> bool:
        """Insert ``key``; returns True when the budget is exceeded and a rebuild is due."""
        pos = bisect.bisect_right(self.keys, key)
        self.keys.insert(pos, key)
        self.dead.insert(pos, 0)
        resid = pos - self.model.predict_native(key)
        self.err_l = min(self.err_l - 1, resid)
        self.err_u = max(self.err_u + 1, resid)
        self.insert_count += 1
        return self.insert_count > self.budget

    def delete(self, key) -> bool:
        offset = self.find(key)
        if offset < 0:
            return False
        self.dead[offset] = 1
        self.n_dead += 1
        return True

    def rebuild(self, reuser: Reuser):
        if self.n_dead:
            live = [k for k, gone in zip(self.keys, self.dead) if not gone]
        else:
            live = self.keys
        self._fit(np.array(live, dtype=np.uint64 if self._integer else np.float64), reuser, live)

    def window_violations(self) -> int:
        """Live keys whose position falls outside their own predicted window."""
        bad = 0
        for i, (key, gone) in enumerate(zip(self.keys, self.dead)):
            if gone:
                continue
            pred = self.model.predict_native(key)
            if not math.floor(pred + self.err_l) <= i <= math.ceil(pred + self.err_u):
                bad += 1
        return bad


@dataclass
class IndexStats:
    model_count: int
    trained: int
    reused: int
    reuse_rate: Optional[float]
    leaf_count: int
    max_depth: int
    mean_depth: float
    param_bytes: int
    mean_window: float
    rebuilds: int


def _route(model: AdaptedModel, factor: float, fanout: int, key) -> int:
    child = math.floor(model.predict_native(key) * factor)
    if child < 0:
        return 0
    return child if child < fanout else fanout - 1


def _route_all(model: AdaptedModel, factor: float, fanout: int, keys: np.ndarray) -> np.ndarray:
    child = np.floor(model.predict_positions(keys) * factor)
    return np.clip(child, 0, fanout - 1).astype(np.int64)


def _split(keys: np.ndarray, child: np.ndarray, fanout: int) -> List[np.ndarray]:
    order = np.argsort(child, kind="stable")
    cuts = np.searchsorted(child[order], np.arange(fanout + 1))
    ordered = keys[order]
    return [ordered[cuts[j]:cuts[j + 1]] for j in range(fanout)]


def _coerce_key(key, integer: bool):
    """Key in the index's domain, or None when it cannot be stored there."""
    if type(key) is int and integer:
        return key if 0 <= key <= KEY_MAX else None
    if integer:
        if isinstance(key, (float, np.floating)):
            if not math.isfinite(key) or key != math.floor(key):
                return None
        key = int(key)
        if key < 0 or key > KEY_MAX:
            return None
        return key
    return float(key)


class _LearnedIndex:
    def __init__(self, keys, reuser: Reuser):
        keys = as_keys(keys)
        if keys.size == 0:
            raise DomainError("cannot index an empty key set")
        if np.any(keys[1:] < keys[:-1]):
            raise DomainError("keys must be sorted ascending")
        self.reuser = reuser
        self.integer = keys.dtype.kind == "u"
        self.rebuilds = 0
        self._next_leaf = 0

    def _new_leaf(self, keys: np.ndarray, depth: int) -> LeafSegment:
        leaf = LeafSegment(self._next_leaf, keys, self.reuser, depth)
        self._next_leaf += 1
        return leaf

    def leaves(self) -> List[LeafSegment]:
        raise NotImplementedError

    def routers(self) -> List[AdaptedModel]:
        raise NotImplementedError

    def lookup(self, key) -> Optional[Hit]:
        key = _coerce_key(key, self.integer)
        if key is None:
            return None
        leaf = self._leaf_for(key)
        offset = leaf.find(key)
        if offset < 0:
            return None
        return Hit(leaf.leaf_id, offset, leaf)

    def __contains__(self, key) -> bool:
        return self.lookup(key) is not None

    def delete(self, key) -> bool:
        key = _coerce_key(key, self.integer)
        if key is None:
            return False
        return self._leaf_for(key).delete(key)

    def window_violations(self) -> int:
        return sum(leaf.window_violations() for leaf in self.leaves())

    def live_keys(self) -> np.ndarray:
        parts = [leaf.live_keys() for leaf in self.leaves()]
        return np.sort(np.concatenate(parts)) if parts else np.zeros(0)

    def stats(self) -> IndexStats:
        leaves = self.leaves()
        models = self.routers() + [leaf.model for leaf in leaves if leaf.n_d > 0]
        trained = sum(1 for m in models if not m.reused)
        reused = len(models) - trained
        depths = [leaf.depth for leaf in leaves]
        filled = [leaf for leaf in leaves if leaf.n_d > 0]
        return IndexStats(
            model_count=len(models),
            trained=trained,
            reused=reused,
            reuse_rate=reused / len(models) if models else None,
            leaf_count=len(leaves),
            max_depth=max(depths),
            mean_depth=float(np.mean(depths)),
            param_bytes=sum(m.param_bytes for m in models),
            mean_window=float(np.mean([leaf.window_width for leaf in filled])) if filled else 0.0,
            rebuilds=self.rebuilds,
        )


class RmiIndex(_LearnedIndex):
    """Root model routing every key to one of ``fanout`` leaves."""

    def __init__(self, keys, fanout: int, reuser: Reuser):
        super().__init__(keys, reuser)
        if fanout < 1:
            raise DomainError("fanout must be >= 1")
        keys = as_keys(keys)
        self.fanout = fanout
        self.root = reuser.model_for(keys)
        n = keys.size
        self.factor = fanout / (n - 1) if n > 1 else 0.0
        child = _route_all(self.root, self.factor, fanout, keys)
        self.leaf_list = [self._new_leaf(part, 1) for part in _split(keys, child, fanout)]

    def leaves(self) -> List[LeafSegment]:
        return self.leaf_list

    def routers(self) -> List[AdaptedModel]:
        return [self.root]

    def _leaf_for(self, key) -> LeafSegment:
        return self.leaf_list[_route(self.root, self.factor, self.fanout, key)]

    def insert(self, key) -> bool:
        """Insert ``key``; returns True when a leaf rebuild happened."""
        key = _coerce_key(key, self.integer)
        if key is None:
            raise DomainError("key outside the index's key domain")
        leaf = self._leaf_for(key)
        if leaf.insert(key):
            leaf.rebuild(self.reuser)
            self.rebuilds += 1
            return True
        return False


class RmrtNode:
    """Internal router of the adaptive tree.

    Routes by the model's predicted position unless ``boundaries`` is set, in
    which case keys are split at those equal-frequency cut points.
    """

    __slots__ = ("model", "factor", "children", "boundaries")

    def __init__(self, model, factor, children, boundaries=None):
        self.model = model
        self.factor = factor
        self.children = children
        self.boundaries = boundaries

    def child_index(self, key) -> int:
        if self.boundaries is not None:
            return bisect.bisect_right(self.boundaries, key)
        return _route(self.model, self.factor, len(self.children), key)


def _quantile_boundaries(keys: np.ndarray, branch: int) -> list:
    """Distinct cut keys above the minimum, splitting ``keys`` into near-equal runs."""
    n = keys.size
    picks = keys[[(n * j) // branch for j in range(1, branch)]]
    cuts = sorted(set(k for k in picks.tolist() if k > keys[0]))
    if not cuts:
        cuts = [keys[int(np.searchsorted(keys, keys[0], side="right"))].item()]
    return cuts


class RmrtIndex(_LearnedIndex):
    """Recursive model reuse tree: split until each leaf holds at most ``leaf_cap`` keys."""

    def __init__(self, keys, leaf_cap: int, branch: int, reuser: Reuser):
        super().__init__(keys, reuser)
        if leaf_cap < 1:
            raise DomainError("leaf capacity must be >= 1")
        if branch < 2:
            raise DomainError("branching factor must be >= 2")
        self.leaf_cap = leaf_cap
        self.branch = branch
        self.root = self._build(as_keys(keys), 0)

    def _build(self, keys: np.ndarray, depth: int):
        n = keys.size
        if n <= self.leaf_cap or keys[0] == keys[-1]:
            return self._new_leaf(keys, depth)
        model = self.reuser.model_for(keys)
        factor = self.branch / (n - 1)
        child = _route_all(model, factor, self.branch, keys)
        if np.all(child == child[0]):
            cuts = _quantile_boundaries(keys, self.branch)
            child = np.searchsorted(np.asarray(cuts, dtype=keys.dtype), keys, side="right")
            parts = _split(keys, child, len(cuts) + 1)
            node = RmrtNode(None, 0.0, [], cuts)
        else:
            parts = _split(keys, child, self.branch)
            node = RmrtNode(model, factor, [])
        node.children = [self._build(part, depth + 1) for part in parts]
        return node

    def _walk(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, RmrtNode):
                stack.extend(reversed(node.children))

    def leaves(self) -> List[LeafSegment]:
        return [node for node in self._walk() if isinstance(node, LeafSegment)]

    def routers(self) -> List[AdaptedModel]:
        return [node.model for node in self._walk()
                if isinstance(node, RmrtNode) and node.model is not None]

    def _leaf_for(self, key) -> LeafSegment:
        node = self.root
        while node.__class__ is RmrtNode:
            node = node.children[node.child_index(key)]
        return node

    def insert(self, key) -> bool:
        """Insert ``key``; returns True when a leaf or subtree rebuild happened.

        A leaf that grows past twice the capacity is replaced by a freshly
        built subtree; otherwise it is rebuilt in place once its budget runs out.
        """
        key = _coerce_key(key, self.integer)
        if key is None:
            raise DomainError("key outside the index's key domain")
        parent, slot, node = None, -1, self.root
        while isinstance(node, RmrtNode):
            parent, slot = node, node.child_index(key)
            node = node.children[slot]
        leaf = node
        due = leaf.insert(key)
        if leaf.live_count > 2 * self.leaf_cap:
            subtree = self._build(leaf.live_keys(), leaf.depth)
            if parent is None:
                self.root = subtree
            else:
                parent.children[slot] = subtree
            self.rebuilds += 1
            return True
        if due:
            leaf.rebuild(self.reuser)
            self.rebuilds += 1
            return True
        return False


class BinarySearchIndex:
    """Sorted-array baseline with the same lookup, insert and delete interface."""

    def __init__(self, keys):
        keys = as_keys(keys)
        if np.any(keys[1:] < keys[:-1]):
            raise DomainError("keys must be sorted ascending")
        self.integer = keys.dtype.kind == "u"
        self.keys = keys.tolist()
        self.rebuilds = 0

    def lookup(self, key) -> Optional[Hit]:
        key = _coerce_key(key, self.integer)
        if key is None:
            return None
        i = bisect.bisect_left(self.keys, key)
        if i < len(self.keys) and self.keys[i] == key:
            return Hit(0, i, None)
        return None

    def __contains__(self, key) -> bool:
        return self.lookup(key) is not None

    def insert(self, key) -> bool:
        key = _coerce_key(key, self.integer)
        if key is None:
            raise DomainError("key outside the index's key domain")
        bisect.insort_right(self.keys, key)
        return False

    def delete(self, key) -> bool:
        hit = self.lookup(key)
        if hit is None:
            return False
        del self.keys[hit.offset]
        return True

    def stats(self) -> IndexStats:
        return IndexStats(0, 0, 0, None, 1, 0, 0.0, 0, float(len(self.keys)), 0)


DEFAULT_LEAF_CAP = 10_000
DEFAULT_BRANCH = 128
DEFAULT_FANOUT = 1024
DEFAULT_EPS = 0.9


def build_rmi(d, fanout: int = DEFAULT_FANOUT, pool: Optional[ModelPool] = None,
              eps: float = DEFAULT_EPS, model_kind: Optional[str] = None,
              config: Optional[TrainConfig] = None) -> RmiIndex:
    """Two-layer RMI; with ``pool=None`` every model is trained (plain RMI)."""
    kind = model_kind or (pool.model_kind if pool is not None else "linear")
    return RmiIndex(d, fanout, Reuser(pool, eps, kind, config))


def build_rmrt(d, leaf_cap: int = DEFAULT_LEAF_CAP, branch: int = DEFAULT_BRANCH,
               pool: Optional[ModelPool] = None, eps: float = DEFAULT_EPS,
               model_kind: Optional[str] = None,
               config: Optional[TrainConfig] = None) -> RmrtIndex:
    kind = model_kind or (pool.model_kind if pool is not None else "linear")
    return RmrtIndex(d, leaf_cap, branch, Reuser(pool, eps, kind, config))
