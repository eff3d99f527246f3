"""Lacunary Walsh-Carleson operator and its tile model.

The model sum attaches to each bitile ``s`` the term
``<f, w_{s1}> w_{s1}(x) 1_{omega_{s2}}(N(x))``.  Summed over every bitile whose
upper frequency interval holds ``n``, it reproduces the Walsh partial sum with
``n`` terms, ``sum_{k < n} <f, W_k> W_k``; :data:`TILE_SUM_OFFSET` records that
shift and the test suite re-derives it by brute force on the 8-cell grid.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySequenceError, LacunaError, PreconditionError, ResolutionError
from .tiles import Bitile, bitile_arrays, enumerate_bitiles, is_convex
from .walsh import GridSignal, _paley_coefficients, bit_reverse, inverse_walsh, walsh_coefficients

log = logging.getLogger(__name__)

__all__ = [
    "TILE_SUM_OFFSET",
    "LacunarySequence",
    "ChoiceFunction",
    "TileCoefficients",
    "parse_sequence",
    "maximal_operator",
    "lacunary_bitiles",
    "model_sum",
    "tile_sum_partial",
    "greedy_choice",
    "dirichlet_kernel_magnitudes",
    "spike_maximal_distribution",
    "read_choice_csv",
    "write_choice_csv",
]

#: ``tile_sum_partial(f, n) == partial_sum(f, n - TILE_SUM_OFFSET)``.
TILE_SUM_OFFSET = 1


@dataclass(frozen=True)
class LacunarySequence:
    """Strictly increasing positive integers; ``theta`` is the smallest ratio."""

    terms: tuple

    def __post_init__(self):
        terms = tuple(int(t) for t in self.terms)
        if not terms:
            raise EmptySequenceError("a lacunary sequence needs at least one term")
        if terms[0] < 1:
            raise LacunaError("sequence terms must be positive")
        if any(b <= a for a, b in zip(terms, terms[1:])):
            raise LacunaError("sequence terms must be strictly increasing")
        object.__setattr__(self, "terms", terms)
        if self.theta <= 1:
            raise LacunaError("lacunarity constant must exceed 1")

    @cached_property
    def theta(self) -> float:
        t = self.terms
        if len(t) == 1:
            return math.inf
        return min(b / a for a, b in zip(t, t[1:]))

    @classmethod
    def powers_of_two(cls, count: int) -> "LacunarySequence":
        return cls(tuple(1 << j for j in range(count)))

    def retained(self, N: int) -> tuple:
        """Terms below ``2^N``; dropped terms are logged."""
        keep = tuple(t for t in self.terms if t < 1 << N)
        if len(keep) < len(self.terms):
            log.warning("dropping %d sequence terms >= 2^%d", len(self.terms) - len(keep), N)
        if not keep:
            raise EmptySequenceError(f"no sequence term below 2^{N}")
        return keep

    def layer_bound(self) -> int:
        """``ceil(log 2 / log theta) + 1``, the crown-function ceiling."""
        if math.isinf(self.theta):
            return 1
        return math.ceil(math.log(2) / math.log(self.theta)) + 1

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)


def parse_sequence(pattern: str) -> LacunarySequence:
    """``"1,2,4,8"``, ``"pow2:J"`` (first J powers of two), ``"ones:J"`` or ``"alt:J"``.

    ``ones:J`` is ``2^{j+1} - 1`` (binary ``11...1``) and ``alt:J`` is
    ``floor(2^{j+2}/3)`` (binary ``1010...``), ``j < J``.  Both have ratio
    infimum about 2; the alternating digits make the partial sums of ``alt``
    carry many dyadic blocks of opposite sign.
    """
    pattern = pattern.strip()
    if pattern.startswith("pow2:"):
        return LacunarySequence.powers_of_two(int(pattern[5:]))
    if pattern.startswith("ones:"):
        return LacunarySequence(tuple((1 << (j + 1)) - 1 for j in range(int(pattern[5:]))))
    if pattern.startswith("alt:"):
        count = int(pattern[4:])
        return LacunarySequence(tuple((1 << (j + 2)) // 3 for j in range(count)))
    try:
        terms = [int(x) for x in pattern.split(",") if x.strip()]
    except ValueError as exc:
        raise LacunaError(f"cannot parse sequence {pattern!r}") from exc
    return LacunarySequence(tuple(terms))


@dataclass(frozen=True, eq=False)
class ChoiceFunction:
    """Per-cell frequency selection ``N(x)``."""

    resolution: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.int64)
        if vals.shape != (1 << self.resolution,):
            raise ResolutionError(f"choice function needs {1 << self.resolution} cells")
        if vals.min(initial=0) < 0:
            raise LacunaError("choice values must be nonnegative")
        if vals.max(initial=0) >= 1 << self.resolution:
            raise ResolutionError(f"choice values must be below 2^{self.resolution}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, n: int, resolution: int) -> "ChoiceFunction":
        return cls(resolution, np.full(1 << resolution, n))

    def valued_in(self, seq: Iterable[int]) -> bool:
        return bool(np.isin(self.values, np.fromiter(seq, dtype=np.int64)).all())


class TileCoefficients:
    """All tile coefficients ``<f, w_t>`` of a signal, level by level.

    ``table[j][a, b]`` is the pairing with the tile of time interval
    ``[a 2^-j, (a+1) 2^-j)`` and Walsh index ``b``.  Each level is a batch of
    local transforms, ``O(N^2 2^N)`` in total.
    """

    def __init__(self, f: GridSignal):
        self.signal = f
        N = self.resolution = f.resolution
        vals = np.asarray(f.values)
        self.table = [
            _paley_coefficients(vals.reshape(1 << j, 1 << (N - j))) * 2.0 ** (-j / 2)
            for j in range(N + 1)
        ]

    def __getitem__(self, j: int) -> np.ndarray:
        return self.table[j]

    def bitile_pair(self, S: Iterable[Bitile]) -> tuple[np.ndarray, np.ndarray]:
        """``<f, w_{s1}>`` and ``<f, w_{s2}>`` for each bitile."""
        j, a, B = bitile_arrays(S)
        lo = np.empty(len(j), dtype=self.table[0].dtype)
        hi = np.empty_like(lo)
        for lev in np.unique(j):
            sel = j == lev
            tab = self.table[lev]
            lo[sel] = tab[a[sel], 2 * B[sel]]
            hi[sel] = tab[a[sel], 2 * B[sel] + 1]
        return lo, hi


def _coefficients(f: GridSignal, coefs: TileCoefficients | None) -> TileCoefficients:
    if coefs is None:
        return TileCoefficients(f)
    if coefs.signal is not f and coefs.resolution != f.resolution:
        raise ResolutionError("coefficient table built at another resolution")
    return coefs


def _packet_signs(b: np.ndarray, local_cell: np.ndarray, width: int) -> np.ndarray:
    """``W_b`` at resolution ``width`` evaluated on local cells."""
    rev = bit_reverse(width)[local_cell]
    return 1.0 - 2.0 * (np.bitwise_count(b & rev) & 1)


def _model_values(coefs: TileCoefficients, S: Sequence[Bitile], nvals: np.ndarray,
                  cells: slice | None = None) -> np.ndarray:
    """Model sum on ``cells`` (default: whole grid)."""
    N = coefs.resolution
    if cells is None:
        cells = slice(0, 1 << N)
    x = np.arange(cells.start, cells.stop)
    n = nvals[cells]
    out = np.zeros(len(x), dtype=coefs.table[0].dtype)
    j_arr, a_arr, B_arr = bitile_arrays(S)
    if len(j_arr) == 0:
        return out
    for j in np.unique(j_arr):
        j = int(j)
        sel = j_arr == j
        width = N - j
        stride = 1 << (N - j - 1)
        member = np.unique(a_arr[sel] * stride + B_arr[sel])
        a = x >> width
        B = n >> (j + 1)
        fires = ((n >> j) & 1).astype(bool) & (B < stride)
        key = a * stride + B
        fires &= np.isin(key, member)
        if not fires.any():
            continue
        xs, bs, as_ = x[fires], 2 * B[fires], a[fires]
        local = xs & ((1 << width) - 1)
        packet = 2.0 ** (j / 2) * _packet_signs(bs, local, width)
        out[fires] += coefs.table[j][as_, bs] * packet
    return out


def _choice_values(Nf, N: int) -> np.ndarray:
    if isinstance(Nf, ChoiceFunction):
        if Nf.resolution != N:
            raise ResolutionError(f"choice function at resolution {Nf.resolution}, signal at {N}")
        return Nf.values
    vals = np.asarray(Nf, dtype=np.int64)
    if vals.shape != (1 << N,):
        raise ResolutionError(f"choice function needs {1 << N} cells")
    return vals


def model_sum(S: Iterable[Bitile], f: GridSignal, Nf, coefs: TileCoefficients | None = None,
              cells: slice | None = None) -> GridSignal:
    """``C_S f(x) = sum_s <f, w_{s1}> w_{s1}(x) 1_{omega_{s2}}(N(x))``.

    ``cells`` restricts evaluation to a window (zero outside), which is how
    tree sums supported on ``I_T`` are computed cheaply.
    """
    N = f.resolution
    S = list(S)
    for s in S:
        if not s.representable(N):
            raise ResolutionError(f"{s} not representable at resolution {N}")
    nvals = _choice_values(Nf, N)
    coefs = _coefficients(f, coefs)
    vals = np.zeros(1 << N, dtype=coefs.table[0].dtype)
    window = cells if cells is not None else slice(0, 1 << N)
    vals[window] = _model_values(coefs, S, nvals, window)
    return GridSignal(N, vals)


def tile_sum_partial(f: GridSignal, n: int, coefs: TileCoefficients | None = None) -> GridSignal:
    """Tile sum over every bitile whose upper frequency interval holds ``n``.

    The bitiles range over time levels ``0..N`` with representable lower tile;
    the single-cell level ``N`` is what makes ``n = 2^N`` reproduce ``f``.
    No upper interval holds ``0``, so ``n = 0`` gives the zero function.
    """
    N = f.resolution
    if not 0 <= n <= 1 << N:
        raise LacunaError(f"tile sum index must lie in [0, 2^{N}], got {n}")
    coefs = _coefficients(f, coefs)
    out = np.zeros(1 << N, dtype=coefs.table[0].dtype)
    x = np.arange(1 << N)
    for j in range(N + 1):
        if not (n >> j) & 1:
            continue
        b = (n >> (j + 1)) << 1
        width = N - j
        if b >= 1 << width:
            continue
        a = x >> width
        local = x & ((1 << width) - 1)
        packet = 2.0 ** (j / 2) * _packet_signs(np.int64(b), local, width)
        out += coefs.table[j][a, b] * packet
    return GridSignal(N, out)


def _partial_sums(f: GridSignal, ends: Sequence[int]) -> np.ndarray:
    """Rows ``sum_{k <= e} <f, W_k> W_k`` for each ``e`` (``e = -1`` gives 0)."""
    c = walsh_coefficients(f)
    rows = np.zeros((len(ends), f.size), dtype=c.dtype)
    for r, e in enumerate(ends):
        if e < 0:
            continue
        cc = c.copy()
        cc[e + 1:] = 0
        rows[r] = inverse_walsh(cc).values
    return rows


def maximal_operator(f: GridSignal, seq: LacunarySequence, offset: int = 0) -> GridSignal:
    """``sup_j |W_{n_j - offset} f|`` over the terms below ``2^N``.

    ``offset=0`` is the plain partial sum ``sum_{k <= n_j}``; with
    ``offset=TILE_SUM_OFFSET`` it is the convention realized by the tile model.
    """
    terms = seq.retained(f.resolution)
    rows = _partial_sums(f, [t - offset for t in terms])
    return GridSignal(f.resolution, np.abs(rows).max(axis=0))


def greedy_choice(f: GridSignal, seq: LacunarySequence, offset: int = TILE_SUM_OFFSET) -> ChoiceFunction:
    """Pointwise maximizing term, smallest index on ties.

    The default offset makes ``|model_sum(lacunary_bitiles, f, choice)|``
    coincide with ``maximal_operator(f, seq, offset=TILE_SUM_OFFSET)``.
    """
    terms = seq.retained(f.resolution)
    rows = np.abs(_partial_sums(f, [t - offset for t in terms]))
    idx = np.argmax(rows, axis=0)
    return ChoiceFunction(f.resolution, np.asarray(terms, dtype=np.int64)[idx])


def lacunary_bitiles(N: int, seq: LacunarySequence | Iterable[int], check_convex: bool = True) -> list[Bitile]:
    """Bitiles of the grid whose upper frequency interval meets the sequence.

    Convexity of the result is checked and a warning logged when it fails;
    it holds for powers of two and for ``ones:J`` but fails for ``alt:J``
    and for ``{1, 5}``.
    """
    terms = np.fromiter((t for t in seq if t < 1 << N), dtype=np.int64)
    out = []
    for s in enumerate_bitiles(N):
        w = s.upper.freq
        lo, hi = w.index << w.level, (w.index + 1) << w.level
        if np.any((terms >= lo) & (terms < hi)):
            out.append(s)
    if check_convex and not is_convex(out, N):
        log.warning("lacunary bitile collection at resolution %d is not convex", N)
    return out


def dirichlet_kernel_magnitudes(m: int, depth: int) -> np.ndarray:
    """``|D_m|`` on the shells ``[2^-k-1, 2^-k)``, ``k < depth``, then on ``[0, 2^-depth)``.

    ``D_m = sum_{k<m} W_k``.  On shell ``k`` the magnitude is
    ``|(m mod 2^k) - m_k 2^k|``; near zero it equals ``m`` when ``m <= 2^depth``.
    """
    if m > 1 << depth:
        raise ResolutionError(f"kernel index {m} exceeds 2^{depth}")
    k = np.arange(depth, dtype=object)
    shells = [abs((m % (1 << int(i))) - ((m >> int(i)) & 1) * (1 << int(i))) for i in k]
    return np.array(shells + [m], dtype=float)


def spike_maximal_distribution(depth: int, seq: LacunarySequence, offset: int = 0,
                               height: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Exact distribution of the maximal operator applied to ``height * 1_J``.

    ``J`` is a dyadic interval of length ``2^-depth``.  Returns ``(values,
    measures)``: value on each of the ``depth`` shells around ``J`` and on
    ``J`` itself.  Works far beyond grid-sized depths (e.g. 40).
    """
    scale = height * 2.0 ** -depth
    vals = np.zeros(depth + 1)
    for t in seq.terms:
        m = min(t - offset + 1, 1 << depth)
        if m <= 0:
            continue
        vals = np.maximum(vals, scale * dirichlet_kernel_magnitudes(m, depth))
    measures = np.array([2.0 ** (-k - 1) for k in range(depth)] + [2.0 ** -depth])
    return vals, measures


def write_choice_csv(path, Nf: ChoiceFunction) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "frequency"])
            for i, n in enumerate(Nf.values):
                w.writerow([i, int(n)])
    except OSError as exc:
        raise OSError(f"cannot write choice function to {path}: {exc}") from exc


def read_choice_csv(path) -> ChoiceFunction:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "frequency"]:
            raise LacunaError(f"{path}: expected header index,frequency, got {header}")
        rows = [r for r in reader if r]
    vals = np.array([int(r[1]) for r in rows], dtype=np.int64)
    size = len(vals)
    if size == 0 or size & (size - 1):
        raise ResolutionError(f"{path}: row count {size} is not a power of two")
    return ChoiceFunction(size.bit_length() - 1, vals)


def check_sequence_bitiles(S: Iterable[Bitile], seq: Iterable[int]) -> None:
    """Raise unless every upper frequency interval holds a sequence term."""
    terms = np.fromiter(seq, dtype=np.int64)
    for s in S:
        w = s.upper.freq
        if not np.any((terms >> w.level) == w.index):
            raise PreconditionError(f"{s} has no sequence term in its upper frequency interval")
