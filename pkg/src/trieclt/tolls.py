"""Toll functions and additive functionals over tries.

A toll phi maps tries to reals with phi(empty) = 0; its additive functional
is Phi(T) = sum over all fringe subtrees T^v of phi(T^v).  The catalogue
covers every built-in the analytics layer knows closed forms for, plus
custom callables.  Each built-in also ships the increasing decomposition
phi = phi_plus - phi_minus used by the fixed-n limit theorems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import NoMethodAvailable
from .trie import Trie, TrieLevels

_INT_KINDS = {"leaf", "size", "fringe_k", "fringe_ge_k", "fringe_match",
              "kprot", "bucket", "e0", "e0_1", "e0_2"}


@dataclass(frozen=True)
class Toll:
    """A named toll function.  chi = phi(single-node trie)."""

    kind: str
    k: int | None = None
    b: int | None = None
    target: Trie | None = None
    fn: object = None
    chi: float = 0.0
    bounded: bool = True
    label: str = ""

    def __str__(self):
        return self.label or self.kind

    @property
    def integer_valued(self) -> bool:
        return self.kind in _INT_KINDS

    def decomposition(self):
        """(plus, minus): lists of (coef, Toll) whose additive functionals are
        increasing and whose difference is this toll, or None if undeclared."""
        return _decomposition(self)


def leaf() -> Toll:
    return Toll("leaf", chi=1.0, label="leaf")


def size() -> Toll:
    return Toll("size", chi=0.0, label="size")


def fringe_count(k: int) -> Toll:
    if k < 1:
        raise ValueError("k must be >= 1")
    return Toll("fringe_k", k=k, chi=1.0 if k == 1 else 0.0, label=f"fringe-k={k}")


def fringe_count_ge(k: int) -> Toll:
    if k < 1:
        raise ValueError("k must be >= 1")
    return Toll("fringe_ge_k", k=k, chi=1.0 if k <= 1 else 0.0,
                label=f"fringe-ge-k={k}")


def fringe_match(target: Trie) -> Toll:
    if target.is_empty:
        raise ValueError("target trie must be nonempty")
    chi = 1.0 if len(target) == 1 else 0.0
    return Toll("fringe_match", k=target.external_count, target=target, chi=chi,
                label=f"fringe-match[{target.external_count}]")


def protected(k: int) -> Toll:
    if k < 1:
        raise ValueError("k must be >= 1")
    return Toll("kprot", k=k, chi=0.0, label=f"kprot={k}")


def bucket_occupancy(b: int, k: int) -> Toll:
    if not 1 <= k <= b:
        raise ValueError("need 1 <= k <= b")
    return Toll("bucket", k=k, b=b, chi=0.0, label=f"bucket=b:{b},k:{k}")


def log_subtrees() -> Toll:
    return Toll("log_subtrees", chi=math.log(2.0), label="log-subtrees")


def log_size() -> Toll:
    return Toll("log_size", chi=0.0, bounded=False, label="log-size")


def e0() -> Toll:
    return Toll("e0", chi=1.0, label="e0")


def e0_minus_leaf() -> Toll:
    return Toll("e0_1", chi=0.0, label="e0-1")


def e0_minus_2leaf() -> Toll:
    return Toll("e0_2", chi=-1.0, label="e0-2")


def custom(fn, chi: float, bounded: bool = True, label: str = "custom") -> Toll:
    """User toll: fn(trie) -> real with fn(empty) = 0 and fn(dot) = chi."""
    return Toll("custom", fn=fn, chi=chi, bounded=bounded, label=label)


def _decomposition(t: Toll):
    if t.kind == "leaf":
        return [(1.0, t)], []
    if t.kind in ("size", "fringe_ge_k", "log_subtrees", "log_size", "e0"):
        return [(1.0, t)], []
    if t.kind == "fringe_k":
        if t.k == 1:
            return [(1.0, leaf())], []
        return [(1.0, fringe_count_ge(t.k))], [(1.0, fringe_count_ge(t.k + 1))]
    if t.kind == "fringe_match":
        if len(t.target) == 1:
            return [(1.0, leaf())], []
        over = fringe_count_ge(t.k + 1)
        return [(1.0, t), (1.0, over)], [(1.0, over)]
    if t.kind == "kprot":
        return [(1.0, t), (float(t.k), leaf())], [(float(t.k), leaf())]
    if t.kind == "bucket":
        return [(1.0, t), (1.0, leaf())], [(1.0, leaf())]
    if t.kind == "e0_1":
        return [(1.0, e0())], [(1.0, leaf())]
    if t.kind == "e0_2":
        return [(1.0, e0())], [(2.0, leaf())]
    return None


def parse_toll(spec: str) -> Toll:
    """Parse a CLI toll spec like "fringe-k=3" or "bucket=b:4,k:2"."""
    s = spec.strip()
    if s == "leaf":
        return leaf()
    if s == "size":
        return size()
    if s == "e0":
        return e0()
    if s == "e0-1":
        return e0_minus_leaf()
    if s == "e0-2":
        return e0_minus_2leaf()
    if s == "log-subtrees":
        return log_subtrees()
    if s == "log-size":
        return log_size()
    if s.startswith("fringe-k="):
        return fringe_count(int(s.split("=", 1)[1]))
    if s.startswith("fringe-ge-k="):
        return fringe_count_ge(int(s.split("=", 1)[1]))
    if s.startswith("fringe-match="):
        path = s.split("=", 1)[1]
        with open(path) as fh:
            return fringe_match(Trie.from_json(fh.read()))
    if s.startswith("kprot="):
        return protected(int(s.split("=", 1)[1]))
    if s.startswith("bucket="):
        parts = dict(p.split(":") for p in s.split("=", 1)[1].split(","))
        return bucket_occupancy(int(parts["b"]), int(parts["k"]))
    raise ValueError(f"unknown toll spec {spec!r}")


# -- evaluation: toll at the root -------------------------------------------------


def _ln_big(n: int) -> float:
    """ln of a positive Python int of any size."""
    if n.bit_length() <= 900:
        return math.log(n)
    d = n.bit_length() - 53
    return math.log(n >> d) + d * math.log(2.0)


def _log1p_inv(s1: int) -> float:
    """log(1 + 1/s1) for a possibly huge integer s1."""
    return math.log1p(float(Fraction(1, s1)))


def eval_toll(toll: Toll, t: Trie) -> float:
    """phi(T) for the (possibly empty) trie T."""
    if t.is_empty:
        return 0 if toll.integer_valued else 0.0
    kind = toll.kind
    if kind == "leaf":
        return 1 if len(t) == 1 else 0
    if kind == "size":
        return 1 if t.nu(()) >= 2 else 0
    if kind == "fringe_k":
        return 1 if t.nu(()) == toll.k else 0
    if kind == "fringe_ge_k":
        return 1 if t.nu(()) >= toll.k else 0
    if kind == "fringe_match":
        return 1 if t == toll.target else 0
    if kind == "kprot":
        return 1 if t.rank(()) >= toll.k else 0
    if kind == "bucket":
        if t.nu(()) <= toll.b:
            return 0
        return sum(1 for c in t.children(()) if t.nu(c) == toll.k)
    if kind == "e0":
        if len(t) == 1:
            return 1
        return sum(1 for c in t.children(()) if t.nu(c) == 1)
    if kind == "e0_1":
        return eval_toll(e0(), t) - eval_toll(leaf(), t)
    if kind == "e0_2":
        return eval_toll(e0(), t) - 2 * eval_toll(leaf(), t)
    if kind == "log_subtrees":
        return _log1p_inv(t.count_subtrees()[1])
    if kind == "log_size":
        return _ln_big(len(t))
    if kind == "custom":
        return toll.fn(t)
    raise NoMethodAvailable(f"toll kind {kind!r}")


# -- evaluation: additive functional on a Trie ------------------------------------


def eval_additive(toll: Toll, t) -> float:
    """Phi(T) = sum over nodes v of phi(T^v); accepts Trie or TrieLevels.

    Integer-valued tolls return exact ints.
    """
    if isinstance(t, TrieLevels):
        return additive_on_levels(toll, t)
    if t._levels is not None and toll.kind not in ("custom",):
        try:
            return additive_on_levels(toll, t._levels)
        except NoMethodAvailable:
            pass
    return _additive_on_trie(toll, t)


def _additive_on_trie(toll: Toll, t: Trie):
    if t.is_empty:
        return 0 if toll.integer_valued else 0.0
    kind = toll.kind
    nu = t._nu
    if kind == "leaf":
        return sum(1 for v in nu.values() if v == 1)
    if kind == "size":
        return sum(1 for v in nu.values() if v >= 2)
    if kind == "fringe_k":
        return sum(1 for v in nu.values() if v == toll.k)
    if kind == "fringe_ge_k":
        return sum(1 for v in nu.values() if v >= toll.k)
    if kind == "fringe_match":
        return t.count_fringe_equal(toll.target)
    if kind == "kprot":
        ranks = t._rank_map()
        return sum(1 for v in ranks.values() if v >= toll.k)
    if kind == "bucket":
        return sum(1 for p, v in nu.items()
                   if p and v == toll.k and nu[p[:-1]] > toll.b)
    if kind == "e0":
        ext = sum(1 for v in nu.values() if v == 1)
        child_ext = sum(1 for p, v in nu.items() if p and v == 1)
        return ext + child_ext
    if kind == "e0_1":
        return (_additive_on_trie(e0(), t) - _additive_on_trie(leaf(), t))
    if kind == "e0_2":
        return (_additive_on_trie(e0(), t) - 2 * _additive_on_trie(leaf(), t))
    if kind == "log_subtrees":
        s1 = t.subtree_counts_per_node()
        return sum(_log1p_inv(v) for v in s1.values())
    if kind == "log_size":
        sizes = {}
        for p in sorted(nu, key=len, reverse=True):
            sizes[p] = 1 + sum(sizes[c] for c in t.children(p))
        return sum(_ln_big(v) for v in sizes.values())
    if kind == "custom":
        return sum(toll.fn(t.fringe(p)) for p in nu)
    raise NoMethodAvailable(f"toll kind {kind!r}")


def additive_by_recursion(toll: Toll, t: Trie):
    """Phi via the branch recursion Phi(T) = phi(T) + sum_a Phi(T^a)."""
    if t.is_empty:
        return 0 if toll.integer_valued else 0.0
    out = eval_toll(toll, t)
    for c in t.children(()):
        out = out + additive_by_recursion(toll, t.fringe(c))
    return out


def additive_by_fringe_sum(toll: Toll, t: Trie):
    """Phi via the literal flat sum over re-rooted fringe copies (slow)."""
    return sum(eval_toll(toll, t.fringe(p)) for p in t._nu) if not t.is_empty \
        else (0 if toll.integer_valued else 0.0)


def eval_combo(terms, t) -> float:
    """Additive functional of a linear combination sum coef_i * toll_i."""
    return sum(c * eval_additive(tl, t) for c, tl in terms)


# -- evaluation: vectorized on level arrays ---------------------------------------


def _ranks_on_levels(lv: TrieLevels):
    """Per-level rank arrays (min distance to a descendant leaf)."""
    big = np.iinfo(np.int64).max // 2
    ranks = [None] * lv.depth
    for d in range(lv.depth - 1, -1, -1):
        nu = lv.nu[d]
        best_child = np.full(len(nu), big, dtype=np.int64)
        if d + 1 < lv.depth:
            np.minimum.at(best_child, lv.parent[d + 1], ranks[d + 1])
        ranks[d] = np.where(nu == 1, 0, 1 + best_child)
    return ranks


def additive_on_levels(toll: Toll, lv: TrieLevels):
    """Phi(T) from the sampler's level arrays; raises NoMethodAvailable for
    kinds that need the full node structure."""
    if lv.depth == 0:
        return 0 if toll.integer_valued else 0.0
    kind = toll.kind
    if kind == "leaf":
        return int(sum(int((nu == 1).sum()) for nu in lv.nu))
    if kind == "size":
        return int(sum(int((nu >= 2).sum()) for nu in lv.nu))
    if kind == "fringe_k":
        return int(sum(int((nu == toll.k).sum()) for nu in lv.nu))
    if kind == "fringe_ge_k":
        return int(sum(int((nu >= toll.k).sum()) for nu in lv.nu))
    if kind == "kprot":
        ranks = _ranks_on_levels(lv)
        return int(sum(int((rk >= toll.k).sum()) for rk in ranks))
    if kind == "bucket":
        out = 0
        for d in range(1, lv.depth):
            pnu = lv.nu[d - 1][lv.parent[d]]
            out += int(((lv.nu[d] == toll.k) & (pnu > toll.b)).sum())
        return out
    if kind == "e0":
        ext = sum(int((nu == 1).sum()) for nu in lv.nu)
        child_ext = sum(int((lv.nu[d] == 1).sum()) for d in range(1, lv.depth))
        return int(ext + child_ext)
    if kind == "e0_1":
        return additive_on_levels(e0(), lv) - additive_on_levels(leaf(), lv)
    if kind == "e0_2":
        return additive_on_levels(e0(), lv) - 2 * additive_on_levels(leaf(), lv)
    if kind == "fringe_match":
        return _match_on_levels(toll.target, lv)
    raise NoMethodAvailable(f"no vectorized evaluation for {kind!r}")


def _match_on_levels(target: Trie, lv: TrieLevels) -> int:
    table: dict = {}
    want = target._canon_map(table)[()]
    count = 0
    canon_next = None
    for d in range(lv.depth - 1, -1, -1):
        n_here = len(lv.nu[d])
        kids: list = [[] for _ in range(n_here)]
        if d + 1 < lv.depth:
            for i, (par, let) in enumerate(zip(lv.parent[d + 1], lv.letter[d + 1])):
                kids[par].append((int(let), canon_next[i]))
        canon_here = np.empty(n_here, dtype=np.int64)
        for i in range(n_here):
            sig = tuple(sorted(kids[i]))
            canon_here[i] = table.setdefault(sig, len(table))
        count += int((canon_here == want).sum())
        canon_next = canon_here
    return count
