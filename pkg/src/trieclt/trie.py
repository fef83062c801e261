"""Tries, bucket tries, sampling, and structural queries.

A trie is stored as a prefix-closed set of nodes (letter-index paths from
the root) with the per-node string count nu.  For an ordinary trie, nu >= 2
means internal and nu == 1 means external; a bucket trie with bucket size b
is internal exactly where nu >= b+1.  Node sets fully determine the tree, so
tries compare as ordered labeled trees by comparing node sets.

Sampling is vectorized: each level partitions the still-clustered strings by
their next letter, drawn from the counter-based source, so identical
(seed, parameters) always reproduce the identical trie.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DepthCapExceeded, NodeNotInTrie, NoMethodAvailable
from .model import ProbModel
from .source import StringSource, poisson_draw

D_MAX = 4096

Path = tuple


def _as_letter_fn(s):
    """Normalize a string spec into a letter(i) -> int function."""
    if hasattr(s, "letter"):
        return s.letter
    if callable(s):
        return s
    if isinstance(s, str):
        seq = [int(c) for c in s]
    else:
        seq = [int(c) for c in s]

    def fn(i, _seq=seq):
        if i >= len(_seq):
            raise DepthCapExceeded(
                "finite stream exhausted before strings became distinguishable")
        return _seq[i]

    return fn


@dataclass
class TrieLevels:
    """Level-wise arrays describing a sampled trie (or bucket trie).

    Index i at depth d is a node; parent[d][i] indexes depth d-1 and
    letter[d][i] is its edge label.  Depth 0 is the root alone.
    """

    r: int
    n: int
    bucket: int = 1
    nu: list = field(default_factory=list)
    parent: list = field(default_factory=list)
    letter: list = field(default_factory=list)
    # per level: (node indices that are leaves, list of member-string arrays)
    leaf_members: list = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.nu)

    @property
    def node_count(self) -> int:
        return sum(len(a) for a in self.nu)

    def paths(self):
        """Node paths level by level, aligned with the arrays."""
        out = [[()]] if self.nu else []
        for d in range(1, self.depth):
            prev = out[d - 1]
            out.append([prev[p] + (int(a),)
                        for p, a in zip(self.parent[d], self.letter[d])])
        return out


def _build_levels(source: StringSource, ids: np.ndarray, bucket: int = 1,
                  want_members: bool = True) -> TrieLevels:
    r = source.model.r
    n = len(ids)
    lv = TrieLevels(r=r, n=n, bucket=bucket)
    if n == 0:
        return lv
    lv.nu.append(np.array([n], dtype=np.int64))
    lv.parent.append(np.array([-1], dtype=np.int64))
    lv.letter.append(np.array([-1], dtype=np.int64))
    if n <= bucket:
        lv.leaf_members.append((np.array([0]), [ids.copy()] if want_members else None))
        return lv
    lv.leaf_members.append((np.array([], dtype=np.int64), [] if want_members else None))

    act_ids = ids.astype(np.int64)
    act_keys = source.keys_for(act_ids)
    cur_node = np.zeros(n, dtype=np.int64)
    depth = 0
    while len(act_ids):
        if depth >= D_MAX:
            raise DepthCapExceeded(
                f"strings still clustered at depth {D_MAX}; check the source")
        letters = source.letters_at(act_keys, depth)
        k2 = cur_node * r + letters
        uniq, inv, counts = np.unique(k2, return_inverse=True, return_counts=True)
        lv.parent.append(uniq // r)
        lv.letter.append(uniq % r)
        lv.nu.append(counts.astype(np.int64))
        leaf_nodes = np.nonzero(counts <= bucket)[0]
        members = None
        if want_members and len(leaf_nodes):
            order = np.argsort(inv, kind="stable")
            starts = np.concatenate(([0], np.cumsum(counts)))
            members = [act_ids[order[starts[j]:starts[j + 1]]] for j in leaf_nodes]
        elif want_members:
            members = []
        lv.leaf_members.append((leaf_nodes, members))
        keep = counts[inv] > bucket
        act_ids = act_ids[keep]
        act_keys = act_keys[keep]
        cur_node = inv[keep]
        depth += 1
    return lv


class Trie:
    """Immutable trie over letter indices 0..r-1.

    Nodes are paths (tuples of ints) mapped to their string counts nu.
    Optionally carries a letter oracle for the generating strings, which
    add_string and modified_fringe need.
    """

    __slots__ = ("r", "_nu", "_leaf_sid", "_letters", "n_strings",
                 "poisson_lambda", "_levels", "_ranks", "_children")

    def __init__(self, r, nodes, n_strings, leaf_sid=None, letters=None,
                 poisson_lambda=None, levels=None):
        self.r = r
        self._nu = nodes
        self.n_strings = n_strings
        self._leaf_sid = leaf_sid
        self._letters = letters
        self.poisson_lambda = poisson_lambda
        self._levels = levels
        self._ranks = None
        self._children = None

    # -- basic queries ----------------------------------------------------

    def __len__(self):
        return len(self._nu)

    def __contains__(self, path):
        return tuple(path) in self._nu

    def __eq__(self, other):
        if not isinstance(other, Trie):
            return NotImplemented
        return self._nu.keys() == other._nu.keys()

    def __hash__(self):
        return hash(frozenset(self._nu))

    @property
    def is_empty(self):
        return not self._nu

    def nu(self, path) -> int:
        try:
            return self._nu[tuple(path)]
        except KeyError:
            raise NodeNotInTrie(f"{path!r}") from None

    def is_external(self, path) -> bool:
        return self.nu(path) == 1

    @property
    def external_count(self) -> int:
        return self.n_strings

    @property
    def internal_count(self) -> int:
        return len(self._nu) - self.n_strings if self._nu else 0

    def nodes(self):
        """All node paths in canonical BFS order (depth, then letters)."""
        return sorted(self._nu, key=lambda p: (len(p), p))

    def children(self, path):
        path = tuple(path)
        if self._children is None:
            ch = {p: [] for p in self._nu}
            for p in self._nu:
                if p:
                    ch[p[:-1]].append(p)
            for lst in ch.values():
                lst.sort()
            self._children = ch
        try:
            return self._children[path]
        except KeyError:
            raise NodeNotInTrie(f"{path!r}") from None

    # -- fringe trees ------------------------------------------------------

    def fringe(self, path) -> "Trie":
        """The subtree rooted at `path`, re-rooted; empty if path is absent."""
        path = tuple(path)
        if path not in self._nu:
            return Trie(self.r, {}, 0)
        d = len(path)
        nodes = {p[d:]: v for p, v in self._nu.items() if p[:d] == path}
        leaf_sid = None
        if self._leaf_sid is not None:
            leaf_sid = {p[d:]: s for p, s in self._leaf_sid.items() if p[:d] == path}
        letters = None
        if self._letters is not None:
            base = self._letters
            letters = (lambda sid, i, _b=base, _d=d: _b(sid, i + _d)) if d else base
        return Trie(self.r, nodes, self._nu[path], leaf_sid=leaf_sid, letters=letters)

    def modified_fringe(self, path) -> "Trie":
        """Like fringe, but a path carrying exactly one string (even below an
        external node) yields the single-node trie, restoring independence of
        disjoint branches under the Poisson model."""
        path = tuple(path)
        if path in self._nu:
            return self.fringe(path)
        # deepest existing ancestor decides: below an external node the one
        # string may continue along `path`, making nu = 1 there
        anc = path
        while anc and anc not in self._nu:
            anc = anc[:-1]
        if anc not in self._nu or self._nu[anc] != 1:
            return Trie(self.r, {}, 0)
        if self._leaf_sid is None or self._letters is None:
            raise NoMethodAvailable("trie carries no letter oracle for its strings")
        sid = self._leaf_sid[anc]
        for j in range(len(anc), len(path)):
            if self._letters(sid, j) != path[j]:
                return Trie(self.r, {}, 0)
        d = len(path)
        base = self._letters
        return Trie(self.r, {(): 1}, 1, leaf_sid={(): sid},
                    letters=lambda s, i, _b=base, _d=d: _b(s, i + _d))

    # -- ranks and protection ----------------------------------------------

    def _rank_map(self):
        if self._ranks is None:
            ranks = {}
            for p in sorted(self._nu, key=len, reverse=True):
                if self._nu[p] == 1:
                    ranks[p] = 0
                else:
                    ranks[p] = 1 + min(ranks[c] for c in self.children(p))
            self._ranks = ranks
        return self._ranks

    def rank(self, path) -> int:
        """Minimum distance from `path` to a descendant leaf."""
        path = tuple(path)
        if path not in self._nu:
            raise NodeNotInTrie(f"{path!r}")
        return self._rank_map()[path]

    # -- subtree counting ----------------------------------------------------

    def _canon_map(self, table):
        """Intern each fringe subtree shape into `table`, smallest id first."""
        canon = {}
        for p in sorted(self._nu, key=len, reverse=True):
            sig = tuple((c[-1], canon[c]) for c in self.children(p))
            canon[p] = table.setdefault(sig, len(table))
        return canon

    def count_fringe_equal(self, other: "Trie") -> int:
        """Number of nodes v with fringe(v) equal to `other` as ordered trees."""
        if other.is_empty:
            raise ValueError("comparison trie must be nonempty")
        table = {}
        theirs = other._canon_map(table)[()]
        ours = self._canon_map(table)
        return sum(1 for c in ours.values() if c == theirs)

    def count_subtrees(self):
        """(s, s1): subtrees of T, and subtrees containing the root.

        Exact arbitrary-precision integers (s1 multiplies over children,
        s sums s1 over all fringe roots).
        """
        if self.is_empty:
            raise ValueError("empty trie")
        s1 = {}
        for p in sorted(self._nu, key=len, reverse=True):
            acc = 1
            for c in self.children(p):
                acc *= 1 + s1[c]
            s1[p] = acc
        return sum(s1.values()), s1[()]

    def subtree_counts_per_node(self):
        """s1 for every node, keyed by path (exact ints)."""
        if self.is_empty:
            return {}
        s1 = {}
        for p in sorted(self._nu, key=len, reverse=True):
            acc = 1
            for c in self.children(p):
                acc *= 1 + s1[c]
            s1[p] = acc
        return s1

    # -- growth --------------------------------------------------------------

    def add_string(self, stream):
        """Return (new_trie, delta) for the trie over the enlarged string set.

        delta says whether a leaf was attached to an internal node or an
        existing leaf was converted to a path ending in two leaves.
        """
        fn = _as_letter_fn(stream)
        sid_new = self.n_strings
        if self.is_empty:
            nodes = {(): 1}
            return (Trie(self.r, nodes, 1, leaf_sid={(): sid_new},
                         letters=lambda s, i, _f=fn: _f(i)),
                    {"kind": "first_string", "node": ()})
        if self._letters is None or self._leaf_sid is None:
            raise NoMethodAvailable("trie carries no letter oracle for its strings")
        old_letters = self._letters
        nodes = dict(self._nu)
        leaf_sid = dict(self._leaf_sid)

        cur = ()
        while True:
            if nodes[cur] >= 2:
                depth = len(cur)
                if depth >= D_MAX:
                    raise DepthCapExceeded("new string never separated")
                child = cur + (fn(depth),)
                if child in self._nu:
                    nodes[cur] += 1
                    cur = child
                    continue
                # new leaf under an internal node
                nodes[cur] += 1
                nodes[child] = 1
                leaf_sid[child] = sid_new
                delta = {"kind": "new_leaf", "node": child}
                break
            # reached an external node: split the leaf into a path
            sid_old = leaf_sid.pop(cur)
            nodes[cur] += 1
            chain = cur
            while True:
                j = len(chain)
                if j >= D_MAX:
                    raise DepthCapExceeded("new string agrees with an existing one "
                                           f"through depth {D_MAX}")
                a_old = old_letters(sid_old, j)
                a_new = fn(j)
                if a_old != a_new:
                    nodes[chain + (a_old,)] = 1
                    nodes[chain + (a_new,)] = 1
                    leaf_sid[chain + (a_old,)] = sid_old
                    leaf_sid[chain + (a_new,)] = sid_new
                    delta = {"kind": "leaf_split", "node": cur,
                             "new_internal": len(chain) - len(cur)}
                    break
                chain = chain + (a_old,)
                nodes[chain] = 2
            break

        def letters(sid, i, _f=fn, _old=old_letters, _new=sid_new):
            return _f(i) if sid == _new else _old(sid, i)

        return (Trie(self.r, nodes, self.n_strings + 1,
                     leaf_sid=leaf_sid, letters=letters), delta)

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        if self.r > 10:
            raise ValueError("digit-path serialization requires alphabet size <= 10")
        return {
            "alphabet_size": self.r,
            "nodes": [{"path": "".join(map(str, p)),
                       "nu": int(self._nu[p]),
                       "kind": "external" if self._nu[p] == 1 else "internal"}
                      for p in self.nodes()],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "Trie":
        r = int(d["alphabet_size"])
        nodes = {}
        for e in d["nodes"]:
            path = tuple(int(c) for c in e["path"])
            nodes[path] = int(e["nu"])
        t = cls(r, nodes, sum(1 for v in nodes.values() if v == 1))
        validate(t)
        return t

    @classmethod
    def from_json(cls, s: str) -> "Trie":
        return cls.from_dict(json.loads(s))


def validate(t: Trie):
    """Full structural scan: prefix closure, classification, conservation."""
    if t.is_empty:
        return
    ext = 0
    for p, v in t._nu.items():
        if v < 1:
            raise ValueError(f"node {p} has nu={v}")
        if p and p[:-1] not in t._nu:
            raise ValueError(f"node {p} misses its parent: not prefix-closed")
        if p and p[:-1] and t._nu[p[:-1]] < 2:
            raise ValueError(f"node {p} hangs under an external node")
        if v >= 2:
            kids = t.children(p)
            if sum(t._nu[c] for c in kids) != v:
                raise ValueError(f"string conservation fails at {p}")
        else:
            ext += 1
    if ext != t.n_strings:
        raise ValueError(f"{ext} external nodes vs {t.n_strings} strings")


# -- construction ---------------------------------------------------------------


def build_trie(strings, r=None) -> Trie:
    """Build the trie of a set of pairwise-distinguishable strings.

    Strings may be digit strings ("0110"), sequences of letter indices,
    letter(i) callables, or LetterStream objects.  Raises DepthCapExceeded
    if two strings agree through depth D_MAX (or a finite spec runs out).
    """
    fns = [_as_letter_fn(s) for s in strings]
    n = len(fns)
    letters_seen = [0]

    def observed(a):
        letters_seen[0] = max(letters_seen[0], a + 1)
        return a

    nodes = {}
    leaf_sid = {}
    if n:
        stack = [((), list(range(n)))]
        while stack:
            path, ids = stack.pop()
            nodes[path] = len(ids)
            if len(ids) == 1:
                leaf_sid[path] = ids[0]
                continue
            depth = len(path)
            if depth >= D_MAX:
                raise DepthCapExceeded(
                    f"{len(ids)} strings agree through depth {D_MAX}")
            groups = {}
            for i in ids:
                groups.setdefault(observed(fns[i](depth)), []).append(i)
            for a, grp in groups.items():
                stack.append((path + (a,), grp))
    if r is None:
        r = max(2, letters_seen[0],
                max((max(p) + 1 for p in nodes if p), default=0))
    t = Trie(r, nodes, n, leaf_sid=leaf_sid,
             letters=(lambda sid, i: fns[sid](i)) if n else None)
    return t


def trie_from_levels(lv: TrieLevels, source: StringSource | None = None,
                     poisson_lambda=None) -> Trie:
    paths = lv.paths()
    nodes = {}
    for d in range(lv.depth):
        for p, v in zip(paths[d], lv.nu[d]):
            nodes[p] = int(v)
    leaf_sid = {}
    for d in range(lv.depth):
        leaf_nodes, members = lv.leaf_members[d]
        if members is None:
            continue
        for j, sids in zip(leaf_nodes, members):
            if len(sids) == 1:
                leaf_sid[paths[d][int(j)]] = int(sids[0])
    letters = None
    if source is not None:
        def letters(sid, i, _src=source):
            return _src.stream(sid).letter(i)
    return Trie(lv.r, nodes, lv.n, leaf_sid=leaf_sid or None, letters=letters,
                poisson_lambda=poisson_lambda, levels=lv)


def sample_fixed(n: int, src: StringSource) -> Trie:
    """The random trie generated by n i.i.d. strings from `src`."""
    if n < 0:
        raise ValueError("n must be >= 0")
    lv = _build_levels(src, np.arange(n, dtype=np.int64))
    return trie_from_levels(lv, source=src)


def sample_poisson(lam: float, src: StringSource) -> Trie:
    """The Poisson-model trie: N ~ Po(lam) strings; N is recorded as
    external_count (and n_strings)."""
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    n = poisson_draw(lam, src.meta_key(0))
    lv = _build_levels(src, np.arange(n, dtype=np.int64))
    return trie_from_levels(lv, source=src, poisson_lambda=lam)


# -- bucket tries -----------------------------------------------------------------


class BucketTrie:
    """Trie variant whose leaves (buckets) hold 1..b strings each."""

    __slots__ = ("r", "b", "_nu", "_bucket_sids", "_letters", "n_strings")

    def __init__(self, r, b, nodes, n_strings, bucket_sids=None, letters=None):
        self.r = r
        self.b = b
        self._nu = nodes
        self.n_strings = n_strings
        self._bucket_sids = bucket_sids
        self._letters = letters

    def __len__(self):
        return len(self._nu)

    def __contains__(self, path):
        return tuple(path) in self._nu

    def nu(self, path) -> int:
        return self._nu[tuple(path)]

    def is_internal(self, path) -> bool:
        return self._nu[tuple(path)] >= self.b + 1

    def nodes(self):
        return sorted(self._nu, key=lambda p: (len(p), p))

    @property
    def bucket_count(self):
        return sum(1 for v in self._nu.values() if v <= self.b)

    def buckets(self):
        """(path, occupancy) for every leaf bucket."""
        return [(p, v) for p, v in sorted(self._nu.items(),
                                          key=lambda kv: (len(kv[0]), kv[0]))
                if v <= self.b]

    def as_trie_nodes(self) -> Trie:
        """View this node set as a bare Trie-like object (for toll tests)."""
        return Trie(self.r, dict(self._nu),
                    sum(1 for v in self._nu.values() if v <= self.b))

    def grow_buckets(self) -> Trie:
        """Grow a small trie out of each bucket; reproduces the full trie."""
        if self._bucket_sids is None or self._letters is None:
            raise NoMethodAvailable("bucket trie carries no string oracle")
        nodes = {}
        leaf_sid = {}
        for p, v in self._nu.items():
            if v > self.b:
                nodes[p] = v
        for p, sids in self._bucket_sids.items():
            d = len(p)
            sub = build_trie([(lambda i, _s=sid, _d=d: self._letters(_s, i + _d))
                              for sid in sids], r=self.r)
            for q in sub.nodes():
                nodes[p + q] = sub.nu(q)
                if sub.nu(q) == 1:
                    leaf_sid[p + q] = sids[sub._leaf_sid[q]]
        n = sum(1 for v in nodes.values() if v == 1)
        return Trie(self.r, nodes, n, leaf_sid=leaf_sid, letters=self._letters)

    def to_dict(self) -> dict:
        if self.r > 10:
            raise ValueError("digit-path serialization requires alphabet size <= 10")
        return {
            "alphabet_size": self.r,
            "bucket_size": self.b,
            "nodes": [{"path": "".join(map(str, p)),
                       "nu": int(self._nu[p]),
                       "kind": "internal" if self._nu[p] > self.b else "external"}
                      for p in self.nodes()],
        }


def bucket_trie(strings, b: int, r=None) -> BucketTrie:
    """Build the bucket trie (b-trie) of a string set; b=1 gives the trie."""
    if b < 1:
        raise ValueError("bucket size must be >= 1")
    fns = [_as_letter_fn(s) for s in strings]
    n = len(fns)
    nodes = {}
    bucket_sids = {}
    rr = 2
    if n:
        stack = [((), list(range(n)))]
        while stack:
            path, ids = stack.pop()
            nodes[path] = len(ids)
            if len(ids) <= b:
                bucket_sids[path] = tuple(ids)
                continue
            depth = len(path)
            if depth >= D_MAX:
                raise DepthCapExceeded(
                    f"{len(ids)} strings agree through depth {D_MAX}")
            groups = {}
            for i in ids:
                a = fns[i](depth)
                rr = max(rr, a + 1)
                groups.setdefault(a, []).append(i)
            for a, grp in groups.items():
                stack.append((path + (a,), grp))
    if r is None:
        r = max(rr, max((max(p) + 1 for p in nodes if p), default=0))
    return BucketTrie(r, b, nodes, n, bucket_sids=bucket_sids,
                      letters=(lambda sid, i: fns[sid](i)) if n else None)


def sample_bucket_fixed(n: int, b: int, src: StringSource) -> BucketTrie:
    lv = _build_levels(src, np.arange(n, dtype=np.int64), bucket=b)
    paths = lv.paths()
    nodes = {}
    bucket_sids = {}
    for d in range(lv.depth):
        for p, v in zip(paths[d], lv.nu[d]):
            nodes[p] = int(v)
        leaf_nodes, members = lv.leaf_members[d]
        if members is not None:
            for j, sids in zip(leaf_nodes, members):
                bucket_sids[paths[d][int(j)]] = tuple(int(s) for s in sids)

    def letters(sid, i, _src=src):
        return _src.stream(sid).letter(i)

    return BucketTrie(lv.r, b, nodes, n, bucket_sids=bucket_sids, letters=letters)
