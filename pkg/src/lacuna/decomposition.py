"""Size, tree and forest decompositions of bitile collections.

The pieces fit together as follows.  :func:`size_decomposition` peels a
convex collection into forests ``F_sigma`` whose trees carry size at most
``A sigma``; :func:`repartition_bounded_crown` regroups a forest of
lacunary bitiles so that every point is captured by boundedly many tree
crowns; :func:`exceptional_set` combines both with the per-tree tail bound to
control the superlevel sets of a model sum.  :func:`multifreq_projection`
replaces the large part of a signal by a function that sees the same
pairings with every active lower tile while having controlled ``L^2`` norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.linalg

from .errors import LacunaError, PreconditionError, ResolutionError
from .model import (ChoiceFunction, LacunarySequence, TileCoefficients, _choice_values,
                    _packet_signs, check_sequence_bitiles, lacunary_bitiles, model_sum)
from .norms import lp_norm, maximal_mp
from .tiles import (TIME, Bitile, DyadicInterval, Forest, Tile, Tree, bitile_arrays, crown,
                    crown_function, is_convex)
from .walsh import GridSignal, wave_packet

__all__ = [
    "SIZE_BOUND_FACTOR",
    "DEFAULT_TAIL_GRID",
    "bitile_sizes",
    "size",
    "size_upper_bound",
    "tree_projection",
    "tree_model_sum",
    "tree_tail_profile",
    "fit_exponential_rate",
    "SizeDecomposition",
    "size_decomposition",
    "repartition_bounded_crown",
    "crown_layers",
    "exceptional_set",
    "ExceptionalSet",
    "multifreq_projection",
    "MultiFrequencyProjection",
    "john_nirenberg_probe",
]

#: The two-tile projection can exceed ``inf_{I_s} M_1 f`` by this factor,
#: e.g. ``f = 2 * 1_[0,1/2)`` on the top bitile of the unit square.
SIZE_BOUND_FACTOR = math.sqrt(2.0)

#: Bitiles of size at most this fraction of ``A`` are left in the residual.
ZERO_SIZE_RTOL = 1e-12

DEFAULT_TAIL_GRID = tuple(np.round(np.arange(0.0, 8.0001, 0.25), 10))


def _coefs(f: GridSignal, coefs):
    return TileCoefficients(f) if coefs is None else coefs


def bitile_sizes(S: Iterable[Bitile], f: GridSignal, coefs: TileCoefficients | None = None) -> np.ndarray:
    """``||Pi_{s} f||_2 / sqrt|I_s|`` for each bitile, in input order."""
    S = list(S)
    for s in S:
        if not s.representable(f.resolution):
            raise ResolutionError(f"{s} not representable at resolution {f.resolution}")
    if not S:
        return np.zeros(0)
    lo, hi = _coefs(f, coefs).bitile_pair(S)
    j, _, _ = bitile_arrays(S)
    return np.sqrt(np.abs(lo) ** 2 + np.abs(hi) ** 2) * 2.0 ** (j / 2)


def size(S: Iterable[Bitile], f: GridSignal, coefs: TileCoefficients | None = None) -> float:
    sz = bitile_sizes(S, f, coefs)
    return float(sz.max(initial=0.0))


def size_upper_bound(S: Iterable[Bitile], f: GridSignal) -> float:
    """``sup_s inf_{x in I_s} M_1 f(x)``.

    Each single-tile coefficient obeys ``|<f, w_t>| / sqrt|I_t| <= avg_{I_t} |f|``,
    so ``size <= SIZE_BOUND_FACTOR * size_upper_bound``.
    """
    m1 = np.asarray(maximal_mp(f, 1).values)
    best = 0.0
    for s in S:
        best = max(best, float(m1[s.time.cells(f.resolution)].min()))
    return best


def _tile_packets(tiles: Iterable[Tile], N: int) -> np.ndarray:
    cols = [wave_packet(t, N).values for t in tiles]
    if not cols:
        return np.zeros((1 << N, 0))
    return np.column_stack(cols)


def tree_projection(T: Tree | Iterable[Bitile], f: GridSignal) -> GridSignal:
    """Orthogonal projection onto ``span{w_{s1}, w_{s2} : s in T}``.

    Packets of nested tiles overlap, so the span is orthonormalized (SVD)
    rather than assumed orthogonal.
    """
    members = T.members if isinstance(T, Tree) else list(T)
    N = f.resolution
    tiles = {t for s in members for t in (s.lower, s.upper)}
    A = _tile_packets(sorted(tiles), N)
    if A.shape[1] == 0:
        return GridSignal(N, np.zeros(1 << N, dtype=np.asarray(f.values).dtype))
    Q = scipy.linalg.orth(A)
    v = np.asarray(f.values)
    return GridSignal(N, Q @ (Q.T @ v))


def tree_model_sum(T: Tree, f: GridSignal, Nf, coefs: TileCoefficients | None = None) -> GridSignal:
    """``C_T f``, evaluated only on ``I_T`` where it lives."""
    return model_sum(T.members, f, Nf, coefs=coefs, cells=T.interval.cells(f.resolution))


def tree_tail_profile(T: Tree, f: GridSignal, Nf, lambdas=DEFAULT_TAIL_GRID,
                      coefs: TileCoefficients | None = None) -> list[tuple[float, float]]:
    """``(lam, |{x in I_T : |C_T f(x)| > lam * size_f(T)}| / |I_T|)`` over a grid."""
    coefs = _coefs(f, coefs)
    sigma = size(T.members, f, coefs)
    window = T.interval.cells(f.resolution)
    vals = np.abs(np.asarray(tree_model_sum(T, f, Nf, coefs).values)[window])
    if sigma == 0:
        if np.any(vals > 0):
            raise LacunaError("zero-size tree with a nonzero model sum")
        return [(float(lam), 0.0) for lam in lambdas]
    return [(float(lam), float(np.mean(vals > lam * sigma))) for lam in lambdas]


def fit_exponential_rate(lambdas, measures) -> tuple[float, float]:
    """Least-squares ``log measure = c0 - rate * lam`` over the positive measures.

    Fewer than two positive points means the tail vanishes on the grid; the
    rate is then reported as ``inf``.
    """
    lam = np.asarray(lambdas, dtype=float)
    mu = np.asarray(measures, dtype=float)
    keep = mu > 0
    if keep.sum() < 2 or np.ptp(lam[keep]) == 0:
        return math.inf, float(np.log(mu[keep][0])) if keep.any() else -math.inf
    slope, intercept = np.polyfit(lam[keep], np.log(mu[keep]), 1)
    return float(-slope), float(intercept)


# --- size decomposition -------------------------------------------------------

def _below_mask(j, a, B, top) -> np.ndarray:
    """Mask of ``s << top`` over bitile arrays."""
    jt, at, Bt = top.key
    d = j - jt
    ok = d >= 0
    dd = np.where(ok, d, 0)
    return ok & ((a >> dd) == at) & ((Bt >> dd) == B)


@dataclass(frozen=True)
class SizeDecomposition:
    """Forests ``F_sigma`` for ``sigma = 1, 1/2, ...`` plus the zero-size residual."""

    A: float
    f_norm2: float
    levels: tuple = ()
    residual: frozenset = field(default_factory=frozenset)
    sizes: tuple = ()

    @property
    def forests(self) -> list[Forest]:
        return [F for _, F in self.levels]

    def counting_constant(self) -> float:
        """``max_sigma ||N_{F_sigma}||_1 sigma^2 A^2 / ||f||_2^2`` (0 with no trees)."""
        if not self.levels:
            return 0.0
        return max(F.counting_norm() * sigma ** 2 * self.A ** 2 / self.f_norm2
                   for sigma, F in self.levels)

    def rows(self) -> list[dict]:
        out = []
        for (sigma, F), sz in zip(self.levels, self.sizes):
            out.append({
                "sigma": sigma,
                "tree_count": len(F),
                "counting_norm": F.counting_norm(),
                "size": sz,
                "size_bound_ok": bool(sz <= self.A * sigma),
            })
        return out

    def report(self) -> dict:
        return {
            "A": self.A,
            "levels": self.rows(),
            "residual_count": len(self.residual),
            "C_dec": self.counting_constant(),
        }


def size_decomposition(S: Iterable[Bitile], f: GridSignal, A: float | None = None,
                       coefs: TileCoefficients | None = None, max_levels: int = 200) -> SizeDecomposition:
    """Split a convex collection into forests of geometrically decreasing size.

    At ``sigma = 1, 1/2, ...`` the bitile of largest ``|I_s|`` with size above
    ``A sigma / 2`` (ties: leftmost time, then lowest frequency) becomes a top,
    and everything remaining below it forms its tree.  The tops chosen at one
    ``sigma`` are pairwise disjoint bitiles, so Bessel's inequality keeps
    ``||N_{F_sigma}||_1 <= 4 ||f||_2^2 / (A sigma)^2``.
    """
    S = sorted(set(S))
    if not is_convex(S, f.resolution):
        raise PreconditionError("size decomposition needs a convex collection")
    coefs = _coefs(f, coefs)
    sz = bitile_sizes(S, f, coefs)
    smax = float(sz.max(initial=0.0))
    if A is None:
        A = smax
    if A < 0 or A < smax:
        raise PreconditionError(f"A = {A} is below the collection size {smax}")
    j, a, B = bitile_arrays(S)
    alive = np.ones(len(S), dtype=bool)
    tol = ZERO_SIZE_RTOL * A
    levels, sizes = [], []
    sigma = 1.0
    for _ in range(max_levels):
        if not alive.any() or sz[alive].max() <= tol:
            break
        before = alive.copy()
        trees = []
        while True:
            cand = np.flatnonzero(alive & (sz > A * sigma / 2))
            if cand.size == 0:
                break
            pick = cand[np.lexsort((B[cand], a[cand], j[cand]))[0]]
            top = S[pick]
            members = alive & _below_mask(j, a, B, top)
            trees.append(Tree(top, frozenset(S[i] for i in np.flatnonzero(members))))
            alive &= ~members
        if trees:
            levels.append((sigma, Forest(tuple(trees))))
            sizes.append(float(sz[before & ~alive].max()))
        sigma /= 2
    residual = frozenset(S[i] for i in np.flatnonzero(alive))
    return SizeDecomposition(float(A), f.norm() ** 2, tuple(levels), residual, tuple(sizes))


# --- crown repartition --------------------------------------------------------

def _maximal(S: list[Bitile]) -> list[Bitile]:
    """Fefferman-maximal elements."""
    if not S:
        return []
    j, a, B = bitile_arrays(S)
    out = []
    for s in S:
        above = _above_mask(j, a, B, s)
        if above.sum() == 1:
            out.append(s)
    return out


def _above_mask(j, a, B, s) -> np.ndarray:
    """Mask of ``s << u`` over bitile arrays ``u``."""
    js, as_, Bs = s.key
    d = js - j
    ok = d >= 0
    dd = np.where(ok, d, 0)
    return ok & ((as_ >> dd) == a) & ((B >> dd) == Bs)


def _order_key(s: Bitile):
    return (s.level, s.key[1], s.key[2])


def repartition_bounded_crown(S: Iterable[Bitile], F: Forest, seq: LacunarySequence) -> Forest:
    """Regroup a forest of lacunary bitiles into trees with bounded crown overlap.

    Bitiles whose frequency interval holds the first term form trees under
    their maximal elements, which have disjoint time intervals.  The rest are
    grouped under their own maximal elements, larger time intervals first.
    A point is then captured by at most ``seq.layer_bound()`` crowns for any
    choice function valued in the sequence.
    """
    S = set(S)
    if S != set(F.bitiles):
        raise PreconditionError("the forest does not partition the given bitiles")
    check_sequence_bitiles(S, seq)
    if not S:
        return Forest(())
    n1 = seq.terms[0]
    first = sorted(s for s in S if s.freq.contains_frequency(n1))
    rest = sorted(S - set(first))
    trees = []
    for part in (first, rest):
        if not part:
            continue
        j, a, B = bitile_arrays(part)
        alive = np.ones(len(part), dtype=bool)
        for top in sorted(_maximal(part), key=_order_key):
            members = alive & _below_mask(j, a, B, top)
            if members.any():
                trees.append(Tree(top, frozenset(part[i] for i in np.flatnonzero(members))))
                alive &= ~members
        if alive.any():
            raise LacunaError("maximal elements failed to cover the collection")
    return Forest(tuple(trees))


def crown_layers(F: Forest) -> list[list[int]]:
    """Greedy grouping of trees into layers with disjoint ``I_T x cr(T)``.

    Trees are taken in order of decreasing ``|I_T|``; each joins the first
    layer where it meets no tree in both time and crown.
    """
    crowns = [crown(T) for T in F.trees]
    order = sorted(range(len(F.trees)), key=lambda i: _order_key(F.trees[i].top))
    layers: list[list[int]] = []

    def clash(i: int, k: int) -> bool:
        Ti, Tk = F.trees[i].interval, F.trees[k].interval
        if not (Ti.contains(Tk) or Tk.contains(Ti)):
            return False
        return any(w.contains(v) or v.contains(w) for w in crowns[i] for v in crowns[k])

    for i in order:
        for layer in layers:
            if not any(clash(i, k) for k in layer):
                layer.append(i)
                break
        else:
            layers.append([i])
    return layers


# --- exceptional sets ---------------------------------------------------------

def _threshold_weight(sigma: float) -> float:
    return sigma * (1.0 + 4.0 * math.log(1.0 / sigma))


#: ``sum over sigma = 2^-k of sigma (1 + 4 log(1/sigma))``.
SIGMA_SERIES = 2.0 + 8.0 * math.log(2.0)


@dataclass
class ExceptionalSet:
    mask: np.ndarray
    K0: float
    report: dict

    @property
    def measure(self) -> float:
        return float(self.mask.mean())


def exceptional_set(S: Iterable[Bitile], f: GridSignal, lam: float, seq: LacunarySequence, Nf,
                    A: float | None = None, decomposition: SizeDecomposition | None = None,
                    coefs: TileCoefficients | None = None) -> ExceptionalSet:
    """Cells where some tree sum is large, covering the superlevel set of ``C_S f``.

    ``E`` is the union over ``sigma`` and over the repartitioned trees ``T`` of
    ``{x in I_T : |C_T f(x)| > lam sigma (1 + 4 log(1/sigma))}``.  Off ``E``
    the crown bound gives ``|C_S f| <= K0 lam`` plus the residual, with
    ``K0 = seq.layer_bound() * SIGMA_SERIES``.
    """
    if not lam > 0:
        raise LacunaError(f"lambda must be positive, got {lam}")
    S = sorted(set(S))
    N = f.resolution
    coefs = _coefs(f, coefs)
    if A is None and decomposition is not None:
        A = decomposition.A
    if A is None:
        # size <= sup|f| in exact arithmetic; the max absorbs rounding
        A = max(float(np.abs(np.asarray(f.values)).max(initial=0.0)), size(S, f, coefs))
    dec = decomposition or size_decomposition(S, f, A, coefs)
    nvals = _choice_values(Nf, N)
    bound = seq.layer_bound()
    K0 = bound * SIGMA_SERIES
    mask = np.zeros(1 << N, dtype=bool)
    crown_max = 0
    trees = 0
    for sigma, F in dec.levels:
        Fs = repartition_bounded_crown(F.bitiles, F, seq)
        crown_max = max(crown_max, int(np.asarray(crown_function(Fs, nvals, N).values).max(initial=0)))
        thr = lam * _threshold_weight(sigma)
        for T in Fs.trees:
            window = T.interval.cells(N)
            vals = np.abs(np.asarray(tree_model_sum(T, f, nvals, coefs).values)[window])
            mask[window] |= vals > thr
            trees += 1
    total = np.abs(np.asarray(model_sum(S, f, nvals, coefs=coefs).values))
    residual = float(np.abs(np.asarray(model_sum(dec.residual, f, nvals, coefs=coefs).values)).max(initial=0.0))
    level = K0 * lam * (1 + 1e-12) + residual
    superlevel = total > level
    inclusion = bool(np.all(~superlevel | mask))
    f2 = f.norm() ** 2
    rhs = math.exp(-lam / A) * f2 / A ** 2 if A > 0 else 0.0
    report = {
        "lambda": lam,
        "A": A,
        "K0": K0,
        "crown_bound": bound,
        "crown_max": crown_max,
        "crown_ok": crown_max <= bound,
        "trees": trees,
        "residual_sup": residual,
        "exceptional_measure": float(mask.mean()),
        "superlevel_measure": float(superlevel.mean()),
        "tail_rhs": rhs,
        "inclusion_ok": inclusion,
    }
    return ExceptionalSet(mask, K0, report)


# --- multi-frequency projection -----------------------------------------------

@dataclass
class MultiFrequencyProjection:
    g: GridSignal
    f2: GridSignal
    intervals: list
    families: dict
    active: list
    report: dict


def _maximal_intervals(f: GridSignal, p: float) -> list[DyadicInterval]:
    """Maximal dyadic ``I`` with ``avg_I |f|^p > 1``; these tile ``{M_p f > 1}``."""
    N = f.resolution
    power = np.abs(np.asarray(f.values, dtype=float)) ** p
    averages = [None] * (N + 1)
    averages[N] = power
    for j in range(N - 1, -1, -1):
        averages[j] = 0.5 * (averages[j + 1][0::2] + averages[j + 1][1::2])
    covered = np.zeros(1 << N, dtype=bool)
    out = []
    for j in range(N + 1):
        for idx in np.flatnonzero(averages[j] > 1):
            I = DyadicInterval(TIME, j, int(idx))
            sl = I.cells(N)
            if not covered[sl].any():
                out.append(I)
                covered[sl] = True
    return out


def multifreq_projection(f: GridSignal, p: float, seq: LacunarySequence,
                         S: Iterable[Bitile] | None = None) -> MultiFrequencyProjection:
    """Replace ``f 1_{M_p f > 1}`` by a function with the same active pairings.

    Active bitiles are those of ``S`` (default: the lacunary collection) whose
    time interval reaches a point with ``M_p f <= 1``; such an ``I_s`` strictly
    contains every maximal interval ``I`` of ``{M_p f > 1}`` it meets.  For each
    ``I`` the family ``T_I`` holds the tiles with time interval ``I`` whose
    frequency interval contains some active ``omega_{s1}``; ``g`` is the sum of
    the projections of ``f_2 1_I`` onto ``span{w_t : t in T_I}``.
    """
    if not 1 < p <= 2:
        raise LacunaError(f"p must lie in (1, 2], got {p}")
    N = f.resolution
    if S is None:
        S = lacunary_bitiles(N, seq, check_convex=False)
    S = list(S)
    mp = np.asarray(maximal_mp(f, p).values)
    big = mp > 1
    if big.all():
        raise PreconditionError("M_p f > 1 everywhere; nothing is left for the bounded part")
    f2 = GridSignal(N, np.where(big, np.asarray(f.values), 0))
    intervals = _maximal_intervals(f, p)
    active = [s for s in S if mp[s.time.cells(N)].min() <= 1]
    c2 = TileCoefficients(f2)
    g = np.zeros(1 << N, dtype=c2[0].dtype)
    families: dict = {}
    per_interval = []
    x = np.arange(1 << N)
    for I in intervals:
        jI = I.level
        freqs = set()
        for s in active:
            if s.time.contains(I) and s.time != I:
                freqs.add(s.lower.freq.index >> (jI - s.level))
        if not freqs:
            continue
        fam = sorted(freqs)
        families[I] = [Tile.at(jI, I.index, b) for b in fam]
        sl = I.cells(N)
        width = N - jI
        local = x[sl] & ((1 << width) - 1)
        b = np.array(fam, dtype=np.int64)
        coef = c2[jI][I.index, b]
        packets = 2.0 ** (jI / 2) * _packet_signs(b[:, None], local[None, :], width)
        gI = coef @ packets
        g[sl] += gI
        normI = float(np.sqrt(np.mean(np.abs(gI) ** 2)))
        per_interval.append({"level": jI, "index": I.index, "tiles": len(fam), "l2_avg": normI})
    g_sig = GridSignal(N, g)
    # pairing check on every active lower tile
    cg = TileCoefficients(g_sig)
    if active:
        lo_g, _ = cg.bitile_pair(active)
        lo_f, _ = c2.bitile_pair(active)
        err = float(np.abs(lo_g - lo_f).max())
    else:
        err = 0.0
    big_measure = float(big.mean())
    pprime = p / (p - 1)
    gnorm2 = g_sig.norm() ** 2
    report = {
        "p": p,
        "p_prime": pprime,
        "intervals": len(intervals),
        "active_bitiles": len(active),
        "big_measure": big_measure,
        "g_norm2": gnorm2,
        "C_proj": gnorm2 / (pprime ** 2 * big_measure) if big_measure > 0 else 0.0,
        "pairing_error": err,
        "per_interval": per_interval,
    }
    return MultiFrequencyProjection(g_sig, f2, intervals, families, active, report)


def john_nirenberg_probe(I: DyadicInterval, tiles: list[Tile], N: int, trials: int = 200,
                         seed: int = 0, qs=(4, 8, 16)) -> dict:
    """Ratios ``||v||_{L^q(I)} / (q ||v||_{L^2(I)})`` for random ``v`` in ``span{w_t}``.

    Norms are averages over ``I``.
    """
    if not tiles:
        raise PreconditionError("the tile family is empty")
    for t in tiles:
        if t.time != I:
            raise PreconditionError(f"{t} does not live on {I}")
    rng = np.random.default_rng(seed)
    P = _tile_packets(tiles, N)[I.cells(N)]
    worst = {q: 0.0 for q in qs}
    for _ in range(trials):
        v = P @ rng.standard_normal(P.shape[1])
        l2 = np.sqrt(np.mean(v ** 2))
        if l2 == 0:
            continue
        for q in qs:
            ratio = np.mean(np.abs(v) ** q) ** (1.0 / q) / (q * l2)
            worst[q] = max(worst[q], float(ratio))
    single = P[:, 0]
    return {
        "interval": [I.level, I.index],
        "tiles": len(tiles),
        "trials": trials,
        "max_ratio": {str(q): worst[q] for q in qs},
        "single_packet_ratio": {str(q): float(np.mean(np.abs(single) ** q) ** (1.0 / q)
                                               / np.sqrt(np.mean(single ** 2))) for q in qs},
    }
