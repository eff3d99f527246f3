"""Dyadic geometry of the Walsh phase plane.

Intervals are ``(level, index)`` integer pairs and every geometric predicate is
decided in integer arithmetic.  Time intervals live in ``[0, 1)``; frequency
intervals are ``[index 2^level, (index+1) 2^level)``.

A tile has time and frequency at the same level (area one).  A bitile has
frequency level one above its time level (area two) and splits into a lower
tile ``s1`` and an upper tile ``s2``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import LacunaError, PreconditionError, ResolutionError
from .walsh import GridSignal

__all__ = [
    "TIME",
    "FREQ",
    "DyadicInterval",
    "Tile",
    "Bitile",
    "Tree",
    "Forest",
    "feff_leq",
    "is_convex",
    "enumerate_bitiles",
    "crown",
    "crown_contains",
    "counting_function",
    "crown_function",
    "bitile_arrays",
    "bitiles_to_json",
    "bitiles_from_json",
    "forest_to_json",
    "forest_from_json",
]

TIME = "time"
FREQ = "frequency"


@dataclass(frozen=True, order=True, slots=True)
class DyadicInterval:
    kind: str
    level: int
    index: int

    def __post_init__(self):
        if self.kind not in (TIME, FREQ):
            raise LacunaError(f"unknown interval kind {self.kind!r}")
        if self.index < 0:
            raise LacunaError(f"negative interval index {self.index}")
        if self.kind == TIME and (self.level < 0 or self.index >= 1 << self.level):
            raise LacunaError(f"time interval ({self.level}, {self.index}) not inside [0, 1)")

    @property
    def length(self) -> float:
        return 2.0 ** (-self.level if self.kind == TIME else self.level)

    @property
    def bounds(self) -> tuple[float, float]:
        if self.kind == TIME:
            return self.index * 2.0 ** -self.level, (self.index + 1) * 2.0 ** -self.level
        return float(self.index << self.level), float((self.index + 1) << self.level)

    def contains(self, other: "DyadicInterval") -> bool:
        """``other`` is a subset of ``self`` (same kind)."""
        if other.kind != self.kind:
            raise LacunaError("cannot compare time and frequency intervals")
        if self.kind == TIME:
            d = other.level - self.level
        else:
            d = self.level - other.level
        if d < 0:
            return False
        if self.kind == TIME:
            return other.index >> d == self.index
        return other.index >> d == self.index

    def contains_frequency(self, n: int) -> bool:
        if self.kind != FREQ:
            raise LacunaError("frequency membership on a time interval")
        return n >= 0 and n >> self.level == self.index

    def contains_cell(self, i: int, N: int) -> bool:
        if self.kind != TIME:
            raise LacunaError("cell membership on a frequency interval")
        return i >> (N - self.level) == self.index

    def cells(self, N: int) -> slice:
        """Grid cells of a time interval at resolution ``N``."""
        if self.level > N:
            raise ResolutionError(f"interval level {self.level} finer than resolution {N}")
        w = N - self.level
        return slice(self.index << w, (self.index + 1) << w)

    def parent(self) -> "DyadicInterval":
        if self.kind == TIME:
            return DyadicInterval(TIME, self.level - 1, self.index >> 1)
        return DyadicInterval(FREQ, self.level + 1, self.index >> 1)

    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        step = 1 if self.kind == TIME else -1
        return (
            DyadicInterval(self.kind, self.level + step, 2 * self.index),
            DyadicInterval(self.kind, self.level + step, 2 * self.index + 1),
        )


def _time(level: int, index: int) -> DyadicInterval:
    return DyadicInterval(TIME, level, index)


def _freq(level: int, index: int) -> DyadicInterval:
    return DyadicInterval(FREQ, level, index)


@dataclass(frozen=True, order=True, slots=True)
class Tile:
    time: DyadicInterval
    freq: DyadicInterval

    def __post_init__(self):
        if self.time.kind != TIME or self.freq.kind != FREQ:
            raise LacunaError("tile needs a time and a frequency interval")
        if self.freq.level != self.time.level:
            raise LacunaError("tile must have area one")

    @classmethod
    def at(cls, level: int, time_index: int, freq_index: int) -> "Tile":
        return cls(_time(level, time_index), _freq(level, freq_index))

    @property
    def n(self) -> int:
        """Walsh index ``|I_t| inf(omega_t)`` of the wave packet."""
        return self.freq.index

    def representable(self, N: int) -> bool:
        return self.time.level <= N and self.freq.index < 1 << (N - self.time.level)


@dataclass(frozen=True, order=True, slots=True)
class Bitile:
    time: DyadicInterval
    freq: DyadicInterval

    def __post_init__(self):
        if self.time.kind != TIME or self.freq.kind != FREQ:
            raise LacunaError("bitile needs a time and a frequency interval")
        if self.freq.level != self.time.level + 1:
            raise LacunaError("bitile must have area two")

    @classmethod
    def at(cls, level: int, time_index: int, freq_index: int) -> "Bitile":
        """Bitile with time interval of length ``2^-level``."""
        return cls(_time(level, time_index), _freq(level + 1, freq_index))

    @property
    def level(self) -> int:
        return self.time.level

    @property
    def key(self) -> tuple[int, int, int]:
        return self.time.level, self.time.index, self.freq.index

    @property
    def lower(self) -> Tile:
        return Tile(self.time, _freq(self.time.level, 2 * self.freq.index))

    @property
    def upper(self) -> Tile:
        return Tile(self.time, _freq(self.time.level, 2 * self.freq.index + 1))

    def representable(self, N: int) -> bool:
        j = self.time.level
        return j < N and self.freq.index < 1 << (N - j - 1)

    def __repr__(self) -> str:
        lo, hi = self.time.bounds
        f0, f1 = self.freq.bounds
        return f"Bitile([{lo:g},{hi:g})x[{f0:g},{f1:g}))"


def feff_leq(a, b) -> bool:
    """Fefferman order: ``I_a`` inside ``I_b`` and ``omega_a`` contains ``omega_b``."""
    if type(a) is not type(b):
        raise LacunaError("Fefferman order compares tiles with tiles, bitiles with bitiles")
    return b.time.contains(a.time) and a.freq.contains(b.freq)


def bitile_arrays(S: Iterable[Bitile]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Levels, time indices and frequency indices as int64 arrays."""
    keys = [s.key for s in S]
    if not keys:
        e = np.zeros(0, dtype=np.int64)
        return e, e.copy(), e.copy()
    arr = np.array(keys, dtype=np.int64)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def _codes(j, a, B):
    return (np.asarray(j, dtype=np.int64) << 56) | (np.asarray(a, dtype=np.int64) << 28) | np.asarray(B, dtype=np.int64)


def is_convex(S: Iterable[Bitile], N: int | None = None) -> bool:
    """Closure of ``S`` under Fefferman-intermediate bitiles.

    Checking the intermediate one level above ``s`` for every comparable pair
    ``s << s''`` at level distance at least two is enough: the remaining
    intermediates are then reached from pairs inside ``S``.  The ambient grid
    at resolution ``N`` contains every such intermediate, so ``N`` only serves
    as a representability check.
    """
    S = list(S)
    if N is not None:
        bad = [s for s in S if not s.representable(N)]
        if bad:
            raise ResolutionError(f"bitiles not representable at resolution {N}: {bad[:3]}")
    if len(S) < 2:
        return True
    j, a, B = bitile_arrays(S)
    if a.max(initial=0) >= 1 << 28 or B.max(initial=0) >= 1 << 28:
        raise ResolutionError("indices too large for convexity encoding")
    codes = np.unique(_codes(j, a, B))
    levels = np.unique(j)
    for hi in levels:
        sel_hi = j == hi
        a_hi, B_hi = a[sel_hi], B[sel_hi]
        for lo in levels[levels <= hi - 2]:
            d = int(hi - lo)
            sel_lo = j == lo
            a_lo, B_lo = a[sel_lo], B[sel_lo]
            # s at level hi, s'' at level lo: s << s'' iff a_hi >> d == a_lo and B_lo >> d == B_hi
            k_hi = ((a_hi >> d) << 28) | B_hi
            k_lo = (a_lo << 28) | (B_lo >> d)
            order = np.argsort(k_lo, kind="stable")
            k_sorted = k_lo[order]
            left = np.searchsorted(k_sorted, k_hi, "left")
            right = np.searchsorted(k_sorted, k_hi, "right")
            counts = right - left
            if not counts.any():
                continue
            src = np.repeat(np.arange(len(k_hi)), counts)
            offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
            tgt = order[np.repeat(left, counts) + offs]
            mid = _codes(hi - 1, a_hi[src] >> 1, B_lo[tgt] >> (d - 1))
            if not np.isin(mid, codes).all():
                return False
    return True


def enumerate_bitiles(N: int, freq_bound: int | None = None) -> list[Bitile]:
    """All bitiles with time level ``0..N-1`` and frequency inside ``[0, freq_bound)``."""
    if freq_bound is None:
        freq_bound = 1 << N
    if freq_bound > 1 << N:
        raise ResolutionError(f"frequency bound {freq_bound} exceeds 2^{N}")
    out = []
    for j in range(N):
        nfreq = freq_bound >> (j + 1)
        for a in range(1 << j):
            for B in range(nfreq):
                out.append(Bitile.at(j, a, B))
    return out


@dataclass(frozen=True)
class Tree:
    """Bitiles below a top bitile in the Fefferman order."""

    top: Bitile
    members: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        members = frozenset(self.members)
        object.__setattr__(self, "members", members)
        for s in members:
            if not feff_leq(s, self.top):
                raise PreconditionError(f"{s} is not below the tree top {self.top}")

    @property
    def interval(self) -> DyadicInterval:
        return self.top.time

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(sorted(self.members))


@dataclass(frozen=True)
class Forest:
    """Partition of a bitile collection into trees."""

    trees: tuple = ()

    def __post_init__(self):
        trees = tuple(self.trees)
        object.__setattr__(self, "trees", trees)
        seen: set = set()
        total = 0
        for t in trees:
            seen |= t.members
            total += len(t.members)
        if len(seen) != total:
            raise PreconditionError("forest trees are not pairwise disjoint")

    @property
    def bitiles(self) -> frozenset:
        out: set = set()
        for t in self.trees:
            out |= t.members
        return frozenset(out)

    def __len__(self) -> int:
        return len(self.trees)

    def __iter__(self):
        return iter(self.trees)

    def counting_norm(self) -> float:
        """``||N_F||_1 = sum_T |I_T|``."""
        return float(sum(t.top.time.length for t in self.trees))


def _canonical_cover(intervals: Iterable[DyadicInterval]) -> frozenset:
    items = sorted(set(intervals), key=lambda w: -w.level)
    kept: set = set()
    for w in items:
        anc = w
        absorbed = False
        while anc.level <= max((k.level for k in kept), default=-1):
            if anc in kept:
                absorbed = True
                break
            anc = anc.parent()
        if not absorbed:
            kept.add(w)
    merged = True
    while merged:
        merged = False
        for w in sorted(kept, key=lambda w: w.level):
            c0, c1 = w.parent().children()
            if c0 in kept and c1 in kept:
                kept -= {c0, c1}
                kept.add(w.parent())
                merged = True
                break
    return frozenset(kept)


def crown(T: Tree) -> frozenset:
    """Union of upper-child frequency intervals as a minimal dyadic cover."""
    return _canonical_cover(s.upper.freq for s in T.members)


def crown_contains(cr: frozenset, n) -> np.ndarray | bool:
    """Membership of frequencies ``n`` (scalar or array) in a crown."""
    arr = np.asarray(n, dtype=np.int64)
    hit = np.zeros(arr.shape, dtype=bool)
    for w in cr:
        hit |= (arr >> w.level) == w.index
    return bool(hit) if hit.ndim == 0 else hit


def counting_function(F: Forest, N: int) -> GridSignal:
    """``N_F(x) = number of tree tops whose time interval contains x``."""
    out = np.zeros(1 << N, dtype=np.int64)
    for t in F.trees:
        if t.top.time.level > N:
            raise ResolutionError(f"tree top {t.top} finer than resolution {N}")
        out[t.top.time.cells(N)] += 1
    return GridSignal(N, out)


def crown_function(F: Forest, choice, N: int) -> GridSignal:
    """``W_F(x) = #{T : x in I_T and N(x) in cr(T)}``."""
    nvals = np.asarray(getattr(choice, "values", choice), dtype=np.int64)
    if nvals.shape != (1 << N,):
        raise ResolutionError(f"choice function has {nvals.shape[0]} cells, expected {1 << N}")
    out = np.zeros(1 << N, dtype=np.int64)
    for t in F.trees:
        sl = t.top.time.cells(N)
        out[sl] += crown_contains(crown(t), nvals[sl])
    return GridSignal(N, out)


def _bitile_record(s: Bitile) -> dict:
    return {
        "time_level": s.time.level,
        "time_index": s.time.index,
        "freq_level": s.freq.level,
        "freq_index": s.freq.index,
    }


def _bitile_from_record(r: dict) -> Bitile:
    return Bitile(_time(int(r["time_level"]), int(r["time_index"])),
                  _freq(int(r["freq_level"]), int(r["freq_index"])))


def bitiles_to_json(S: Iterable[Bitile], path=None) -> str:
    text = json.dumps([_bitile_record(s) for s in sorted(S)], indent=1)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def bitiles_from_json(source) -> list[Bitile]:
    text = Path(source).read_text() if isinstance(source, Path) else source
    return [_bitile_from_record(r) for r in json.loads(text)]


def forest_to_json(F: Forest, path=None) -> str:
    rows = []
    for tid, t in enumerate(F.trees):
        members = set(t.members) | {t.top}
        for s in sorted(members):
            r = _bitile_record(s)
            r["tree_id"] = tid
            r["is_top"] = s == t.top
            r["member"] = s in t.members
            rows.append(r)
    text = json.dumps(rows, indent=1)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def forest_from_json(source) -> Forest:
    text = Path(source).read_text() if isinstance(source, Path) else source
    tops: dict[int, Bitile] = {}
    members: dict[int, set] = {}
    for r in json.loads(text):
        tid = int(r["tree_id"])
        s = _bitile_from_record(r)
        members.setdefault(tid, set())
        if r.get("is_top"):
            tops[tid] = s
        if r.get("member", True):
            members[tid].add(s)
    missing = set(members) - set(tops)
    if missing:
        raise LacunaError(f"trees without a top record: {sorted(missing)}")
    return Forest(tuple(Tree(tops[k], frozenset(members[k])) for k in sorted(members)))
