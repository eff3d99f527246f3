"""Norm calculus on the dyadic grid and for tower-scale distributions.

Grid quantities (``L^p``, weak ``L^p``, ``M_p``, dyadic BMO, local Orlicz
norms) act on :class:`~lacuna.walsh.GridSignal`.  Magnitudes like
``exp(exp(exp(40)))`` do not fit in a double, so the layer decomposition works
on :class:`LayerCake`, which stores only ``log|f|`` and ``log`` of the
measure of each level set as :mod:`mpmath` numbers.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable

import mpmath
import numpy as np

from .errors import LacunaError, PreconditionError, ResolutionError
from .tiles import TIME, DyadicInterval
from .walsh import GridSignal

__all__ = [
    "tower_constant",
    "log_tower",
    "log_tower_from_log",
    "YoungFunction",
    "young_phi",
    "young_phi_log",
    "lp_norm",
    "weak_lp",
    "lp_norm_distribution",
    "weak_lp_distribution",
    "maximal_mp",
    "local_orlicz_norm",
    "dyadic_bmo",
    "LayerCake",
    "embedding_band",
    "embedding_decomposition",
    "QuasinormRow",
    "quasinorm_bound",
    "read_layercake_csv",
    "write_layercake_csv",
]

# Above this, a shift e_{k-1} (k >= 5) is so large that any representable
# log-argument is negligible against it.
_HUGE_LOG = mpmath.mpf(10) ** 100000


@lru_cache(maxsize=None)
def tower_constant(k: int) -> mpmath.mpf:
    """``e_0 = 1``, ``e_k = exp(e_{k-1})``; ``+inf`` from ``k = 5`` on."""
    if k < 0:
        raise LacunaError(f"tower index must be nonnegative, got {k}")
    if k == 0:
        return mpmath.mpf(1)
    if k >= 5:
        return mpmath.inf
    return mpmath.exp(tower_constant(k - 1))


def _float_tower(k: int) -> float:
    e = tower_constant(k)
    return math.inf if e > 1e308 else float(e)


def log_tower(k: int, t):
    """``log_k(t) = log(...log(e_k + t))`` with ``k`` logarithms.

    ``log_0(t) = 1 + t`` and ``log_k(0) = 1``.  Accepts scalars or arrays.
    Uses ``log(e_k + t) = e_{k-1} + log1p(t / e_k)`` so the shift never
    swallows ``t`` in rounding.
    """
    if k < 0:
        raise LacunaError(f"tower index must be nonnegative, got {k}")
    if isinstance(t, mpmath.mpf):
        if t < 0:
            raise LacunaError("log_tower needs t >= 0")
        return log_tower_from_log(k, mpmath.log(t)) if t > 0 else mpmath.mpf(1)
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise LacunaError("log_tower needs t >= 0")
    out = arr
    for level in range(k, 0, -1):
        out = np.log1p(out / _float_tower(level))
    out = 1.0 + out
    return float(out) if out.ndim == 0 else out


def _softplus(x):
    # exp(-x) for tower-sized x exhausts mpmath's exponent arithmetic
    if x > 1000:
        return x
    if x < -1000:
        return _exp(x)
    if x > 40:
        return x + mpmath.log1p(mpmath.exp(-x))
    return mpmath.log1p(mpmath.exp(x))


def log_tower_from_log(k: int, L):
    """``log_k(exp(L))`` without forming ``exp(L)``.

    Works for ``L`` as float or :class:`mpmath.mpf` (including tower-sized
    values); the result type follows the input.
    """
    if k < 0:
        raise LacunaError(f"tower index must be nonnegative, got {k}")
    as_mp = isinstance(L, mpmath.mpf)
    Lm = mpmath.mpf(L)
    if k == 0:
        res = 1 + mpmath.exp(Lm)
    elif k == 1:
        # log(e + e^L)
        res = (Lm if Lm > 1 else mpmath.mpf(1)) + _softplus(-abs(Lm - 1))
    else:
        shift = tower_constant(k - 1)
        if mpmath.isinf(shift):
            if Lm > _HUGE_LOG:
                raise ResolutionError(f"log_{k} argument too large for the tower shift")
            u = mpmath.mpf(0)
        else:
            u = _softplus(Lm - shift)
        res = _mp_log_tower(k - 1, u)
    return res if as_mp else float(res)


def _mp_log_tower(k: int, t):
    out = mpmath.mpf(t)
    for level in range(k, 0, -1):
        e = tower_constant(level)
        out = mpmath.mpf(0) if mpmath.isinf(e) else mpmath.log1p(out / e)
    return 1 + out


@dataclass(frozen=True)
class YoungFunction:
    """``phi_b(t) = t log_2(t) log_b(t)`` for all ``t >= 0``."""

    b: int

    def __post_init__(self):
        if self.b not in (3, 4):
            raise LacunaError(f"Young function index must be 3 or 4, got {self.b}")

    def __call__(self, t):
        return young_phi(self.b, t)

    def log(self, L):
        return young_phi_log(self.b, L)


def young_phi(b: int, t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise LacunaError("Young function needs t >= 0")
    with np.errstate(over="ignore", invalid="ignore"):
        out = arr * log_tower(2, arr) * log_tower(b, arr)
    out = np.where(arr == 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def young_phi_log(b: int, L):
    """``log phi_b(exp(L))``; result type follows ``L`` (float or mpf)."""
    as_mp = isinstance(L, mpmath.mpf)
    Lm = mpmath.mpf(L)
    if mpmath.isinf(Lm) and Lm < 0:
        res = -mpmath.inf
    else:
        res = Lm + mpmath.log(log_tower_from_log(2, Lm)) + mpmath.log(log_tower_from_log(b, Lm))
    return res if as_mp else float(res)


def _check_p(p: float, allow_inf: bool = True) -> None:
    if not p >= 1:
        raise LacunaError(f"exponent must be at least 1, got {p}")
    if not allow_inf and math.isinf(p):
        raise LacunaError("exponent must be finite here")


def lp_norm_distribution(values, measures, p: float) -> float:
    v = np.abs(np.asarray(values, dtype=float))
    m = np.asarray(measures, dtype=float)
    _check_p(p)
    keep = m > 0
    v, m = v[keep], m[keep]
    if v.size == 0:
        return 0.0
    if math.isinf(p):
        return float(v.max())
    top = v.max()
    if top == 0:
        return 0.0
    return float(top * np.sum(m * (v / top) ** p) ** (1.0 / p))


def weak_lp_distribution(values, measures, p: float) -> float:
    """``sup_t t |{|f| > t}|^{1/p}``, attained just below a value of ``|f|``."""
    _check_p(p)
    v = np.abs(np.asarray(values, dtype=float))
    m = np.asarray(measures, dtype=float)
    keep = m > 0
    v, m = v[keep], m[keep]
    if v.size == 0:
        return 0.0
    if math.isinf(p):
        return float(v.max())
    order = np.argsort(-v, kind="stable")
    v, m = v[order], m[order]
    tail = np.cumsum(m)
    # measure of {|f| >= v_i} must include ties further down the order
    last = np.searchsorted(-v, -v, side="right") - 1
    return float(np.max(v * tail[last] ** (1.0 / p)))


def lp_norm(f: GridSignal, p: float) -> float:
    return lp_norm_distribution(f.values, np.full(f.size, f.cell_measure), p)


def weak_lp(f: GridSignal, p: float) -> float:
    return weak_lp_distribution(f.values, np.full(f.size, f.cell_measure), p)


def maximal_mp(f: GridSignal, p: float) -> GridSignal:
    """``M_p f(x) = sup over dyadic I containing x of (avg_I |f|^p)^{1/p}``."""
    _check_p(p, allow_inf=False)
    N = f.resolution
    v = np.abs(np.asarray(f.values, dtype=float))
    top = float(v.max())
    if top == 0:
        return GridSignal(N, np.zeros(f.size))
    # powers of tiny values underflow unless taken relative to the maximum
    level = (v / top) ** p
    best = level.copy()
    for j in range(N - 1, -1, -1):
        level = 0.5 * (level[0::2] + level[1::2])
        best = np.maximum(best, np.repeat(level, 1 << (N - j)))
    return GridSignal(N, top * best ** (1.0 / p))


def dyadic_bmo(f: GridSignal) -> float:
    """Largest mean oscillation ``avg_I |f - avg_I f|`` over dyadic ``I``."""
    N = f.resolution
    vals = np.asarray(f.values)
    best = 0.0
    for j in range(N):
        blocks = vals.reshape(1 << j, 1 << (N - j))
        osc = np.abs(blocks - blocks.mean(axis=1, keepdims=True)).mean(axis=1)
        best = max(best, float(osc.max()))
    return best


def local_orlicz_norm(f: GridSignal, I: DyadicInterval, phi: Callable, rtol: float = 1e-10,
                      max_iter: int = 200) -> float:
    """``inf{lam > 0 : avg_I phi(|f| / lam) <= 1}`` by bisection in ``log lam``.

    ``phi`` must be a vectorized nondecreasing function with ``phi(0) = 0``
    that tends to infinity.
    """
    if I.kind != TIME:
        raise LacunaError("local Orlicz norms live on time intervals")
    if I.level > f.resolution:
        raise ResolutionError(f"interval level {I.level} finer than resolution {f.resolution}")
    v = np.abs(np.asarray(f.values)[I.cells(f.resolution)])
    top = float(v.max(initial=0.0))
    if top == 0:
        return 0.0
    v = v / top

    def excess(lam: float) -> float:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            val = float(np.mean(phi(v / lam)))
        return math.inf if not math.isfinite(val) else val - 1.0

    lo = hi = 1.0
    for _ in range(max_iter):
        if excess(hi) <= 0:
            break
        hi *= 2.0
    else:
        raise LacunaError("could not bracket the Orlicz norm from above")
    for _ in range(max_iter):
        if excess(lo) > 0:
            break
        lo /= 2.0
    else:
        return 0.0
    for _ in range(max_iter):
        if hi - lo <= rtol * hi:
            break
        mid = math.sqrt(lo * hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return top * hi


# --- tower-scale distributions ------------------------------------------------

def _mp(x) -> mpmath.mpf:
    return x if isinstance(x, mpmath.mpf) else mpmath.mpf(x)


def _exp(x) -> mpmath.mpf:
    """``exp`` that flushes tower-sized arguments instead of exhausting memory."""
    if x < -10000:
        return mpmath.mpf(0)
    if x > 10000:
        return mpmath.inf
    return mpmath.exp(x)


def _logsumexp(xs) -> mpmath.mpf:
    xs = [x for x in xs if not (mpmath.isinf(x) and x < 0)]
    if not xs:
        return -mpmath.inf
    top = max(xs)
    return top + mpmath.log(mpmath.fsum(_exp(x - top) for x in xs))


def _phi_over_t_log(b: int, lm) -> mpmath.mpf:
    """``log(phi_b(t) / t) = log log_2(t) + log log_b(t)`` at ``t = exp(lm)``."""
    return mpmath.log(log_tower_from_log(2, lm)) + mpmath.log(log_tower_from_log(b, lm))


@dataclass(frozen=True, eq=False)
class LayerCake:
    """Distribution of a nonnegative simple function, kept in logarithms.

    A layer is a level set: ``|f| = exp(logmag)`` on a set of measure
    ``exp(logmeasure)``.  Internally each layer stores ``logmag`` together
    with ``logmass = logmag + logmeasure``, the log of its contribution to
    ``||f||_1``.  At tower scale ``logmeasure`` is about ``-logmag`` and the
    sum cancels catastrophically, so constructors that know the mass (such as
    :meth:`on_unit_ball`) pass it directly.  Layers sharing a magnitude are
    merged; layers are kept in strictly decreasing ``logmag``.
    """

    masses: tuple = ()

    def __post_init__(self):
        merged: dict = {}
        for lm, lmass in self.masses:
            lm, lmass = _mp(lm), _mp(lmass)
            if mpmath.isnan(lm) or mpmath.isnan(lmass):
                raise LacunaError("layer cake entries must be numbers")
            if mpmath.isinf(lm) or (mpmath.isinf(lmass) and lmass < 0):
                continue
            merged[lm] = _logsumexp([merged[lm], lmass]) if lm in merged else lmass
        masses = tuple(sorted(merged.items(), key=lambda kv: -kv[0]))
        object.__setattr__(self, "masses", masses)
        if any(m - a > mpmath.mpf(1e-12) for a, m in masses):
            raise LacunaError("a layer cannot have measure above 1")
        if self.log_measure() > mpmath.mpf(1e-12):
            raise LacunaError("layer measures add up to more than 1")

    @classmethod
    def from_layers(cls, layers: Iterable) -> "LayerCake":
        """From ``(logmag, logmeasure)`` pairs."""
        out = []
        for a, m in layers:
            a, m = _mp(a), _mp(m)
            if m > mpmath.mpf(1e-12):
                raise LacunaError("a layer cannot have measure above 1")
            out.append((a, a + m))
        return cls(tuple(out))

    @classmethod
    def from_signal(cls, f: GridSignal) -> "LayerCake":
        vals, counts = np.unique(np.abs(np.asarray(f.values)), return_counts=True)
        return cls.from_layers((mpmath.log(float(v)), mpmath.log(float(c) * f.cell_measure))
                               for v, c in zip(vals, counts) if v > 0)

    @classmethod
    def on_unit_ball(cls, logmags: Iterable, weights: Iterable[float] | None = None, b: int = 4,
                     log_weights: Iterable | None = None) -> "LayerCake":
        """Layers at the given magnitudes carrying ``phi_b``-mass proportional to the weights.

        The result satisfies ``integral phi_b(|f|) = 1``.  ``log_weights``
        reaches weights far below the double range.
        """
        logmags = [_mp(x) for x in logmags]
        if (weights is None) == (log_weights is None):
            raise LacunaError("give exactly one of weights and log_weights")
        if log_weights is None:
            w = [float(x) for x in weights]
            if any(x < 0 for x in w):
                raise LacunaError("weights must be nonnegative")
            log_weights = [mpmath.log(x) if x > 0 else -mpmath.inf for x in w]
        lw = [_mp(x) for x in log_weights]
        if len(lw) != len(logmags):
            raise LacunaError("need one weight per layer")
        total = _logsumexp(lw)
        if mpmath.isinf(total):
            raise LacunaError("need a positive weight")
        return cls(tuple((lm, wi - total - _phi_over_t_log(b, lm))
                         for lm, wi in zip(logmags, lw) if not mpmath.isinf(wi)))

    @property
    def layers(self) -> tuple:
        """``(logmag, logmeasure)`` pairs."""
        return tuple((a, m - a) for a, m in self.masses)

    def __len__(self) -> int:
        return len(self.masses)

    def __iter__(self):
        return iter(self.layers)

    def log_measure(self) -> mpmath.mpf:
        return _logsumexp([m - a for a, m in self.masses])

    def log_l1(self) -> mpmath.mpf:
        return _logsumexp([m for _, m in self.masses])

    def log_sup(self) -> mpmath.mpf:
        return self.masses[0][0] if self.masses else -mpmath.inf

    def log_phi_integral(self, b: int = 4) -> mpmath.mpf:
        """``log integral phi_b(|f|)``."""
        return _logsumexp([m + _phi_over_t_log(b, a) for a, m in self.masses])

    def scaled(self, log_c) -> "LayerCake":
        c = _mp(log_c)
        return LayerCake(tuple((a + c, m + c) for a, m in self.masses))

    def normalized(self, b: int = 4) -> tuple["LayerCake", str]:
        """Rescale onto ``integral phi_b = 1`` and say how.

        Magnitudes are rescaled when they fit comfortably in working
        precision; otherwise the measures are scaled, which keeps the layer
        magnitudes (and so the band of every layer) unchanged.
        """
        if not self.masses:
            raise LacunaError("the empty cake cannot be normalized")
        cur = self.log_phi_integral(b)
        if abs(cur) < mpmath.mpf(1e-12):
            return self, "already on the unit sphere"
        if max(abs(a) for a, _ in self.masses) < 1e12:
            lo, hi = mpmath.mpf(-1), mpmath.mpf(1)
            while self.scaled(lo).log_phi_integral(b) > 0:
                lo *= 2
            while self.scaled(hi).log_phi_integral(b) < 0:
                hi *= 2
            for _ in range(200):
                mid = (lo + hi) / 2
                if self.scaled(mid).log_phi_integral(b) > 0:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < mpmath.mpf(1e-15) * (1 + abs(hi)):
                    break
            return self.scaled(lo), "magnitudes rescaled"
        if self.log_measure() - cur > mpmath.mpf(1e-12):
            raise LacunaError("cannot reach the unit sphere by scaling measures")
        return LayerCake(tuple((a, m - cur) for a, m in self.masses)), "measures rescaled"


def write_layercake_csv(path, cake: LayerCake) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["logmag", "logmeasure"])
            for a, m in cake.layers:
                w.writerow([mpmath.nstr(a, 20), mpmath.nstr(m, 20)])
    except OSError as exc:
        raise OSError(f"cannot write layer cake to {path}: {exc}") from exc


def read_layercake_csv(path) -> LayerCake:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["logmag", "logmeasure"]:
            raise LacunaError(f"{path}: expected header logmag,logmeasure, got {header}")
        return LayerCake.from_layers((mpmath.mpf(r[0]), mpmath.mpf(r[1])) for r in reader if r)


def embedding_band(logmag) -> int:
    """Band ``k`` of a magnitude given by its logarithm.

    ``k = 0`` for ``log|f| <= e^e``; otherwise the unique ``k >= 1`` with
    ``e^{e^k} < log|f| <= e^{e^{k+1}}``.
    """
    lm = _mp(logmag)
    if lm <= tower_constant(2):
        return 0
    ll = mpmath.log(mpmath.log(lm))
    k = int(mpmath.ceil(ll)) - 1
    # guard the boundaries against rounding of the double logarithm
    while k >= 1 and lm <= mpmath.exp(mpmath.exp(k)):
        k -= 1
    while lm > mpmath.exp(mpmath.exp(k + 1)):
        k += 1
    return max(k, 1)


def embedding_decomposition(cake: LayerCake) -> list[tuple[int, LayerCake]]:
    """Split a cake into the bands ``f_k = f 1_{F_k}``, in increasing ``k``."""
    bands: dict[int, list] = {}
    for a, m in cake.masses:
        bands.setdefault(embedding_band(a), []).append((a, m))
    return [(k, LayerCake(tuple(bands[k]))) for k in sorted(bands)]


@dataclass(frozen=True)
class QuasinormRow:
    k: int
    regime: str
    log_A: mpmath.mpf
    log_term: mpmath.mpf
    weight: float

    @property
    def A(self) -> float:
        return float(_exp(self.log_A))

    @property
    def term(self) -> float:
        return float(_exp(self.log_term))

    @property
    def weighted(self) -> float:
        return self.weight * self.term

    def regime_ratio(self) -> float:
        """``term / (A_k / log_1 k)`` in the first regime, ``term / e^{-k}`` in the second."""
        if self.regime == "R1":
            return float(_exp(self.log_term - self.log_A) * self.weight)
        return float(_exp(self.log_term + self.k))

    def as_dict(self) -> dict:
        return {"k": self.k, "regime": self.regime, "A_k": self.A, "term": self.term,
                "log_A_k": float(self.log_A), "regime_ratio": self.regime_ratio()}


def quasinorm_bound(pieces: list[tuple[int, LayerCake]]) -> tuple[float, list[QuasinormRow]]:
    """``sum_k log_1(k) ||f_k||_1 log_2(||f_k||_inf / ||f_k||_1)`` with per-band rows.

    A band is in the first regime when
    ``A_k / (e^k log_1 k) >= exp(-exp(exp(k+1)))``, ``A_k = integral phi_4(|f_k|)``.
    """
    rows = []
    total = mpmath.mpf(0)
    for k, piece in pieces:
        if not piece.masses:
            continue
        l1 = piece.log_l1()
        ratio = piece.log_sup() - l1
        if ratio < 0:
            raise PreconditionError("a piece has L1 norm above its sup norm")
        log_term = l1 + mpmath.log(log_tower_from_log(2, ratio))
        weight = float(log_tower(1, k))
        log_A = piece.log_phi_integral(4)
        lhs = log_A - k - mpmath.log(weight)
        regime = "R1" if lhs >= -mpmath.exp(mpmath.exp(k + 1)) else "R2"
        rows.append(QuasinormRow(k, regime, log_A, log_term, weight))
        total += weight * _exp(log_term)
    return float(total), rows
