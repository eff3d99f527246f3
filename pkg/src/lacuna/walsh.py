"""Walsh system on the dyadic grid of ``2**N`` cells.

A :class:`GridSignal` holds the values of a function on the half-open cells
``[i 2^-N, (i+1) 2^-N)``.  Walsh functions are in Paley order: ``W_n`` is the
product of the Rademacher factors selected by the binary digits of ``n``.

Coefficients are computed with an in-place Hadamard butterfly followed by a
bit-reversal permutation, so a full transform costs ``O(N 2^N)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import FrequencyError, LacunaError, ResolutionError

__all__ = [
    "GridSignal",
    "rademacher",
    "walsh_function",
    "walsh_coefficients",
    "inverse_walsh",
    "partial_sum",
    "wave_packet",
    "bit_reverse",
    "read_signal_csv",
    "write_signal_csv",
]


@dataclass(frozen=True, eq=False)
class GridSignal:
    """Cell-constant function on the torus at resolution ``N``.

    ``values[i]`` is the value on ``[i 2^-N, (i+1) 2^-N)``.  The array is
    stored read-only.
    """

    resolution: int
    values: np.ndarray

    def __post_init__(self):
        if self.resolution < 0:
            raise ResolutionError(f"resolution must be nonnegative, got {self.resolution}")
        vals = np.array(self.values)
        if vals.dtype.kind in "biu":
            vals = vals.astype(float)
        if vals.ndim != 1 or vals.shape[0] != 1 << self.resolution:
            raise ResolutionError(
                f"expected {1 << self.resolution} values for resolution "
                f"{self.resolution}, got shape {vals.shape}"
            )
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, values) -> "GridSignal":
        vals = np.asarray(values)
        size = vals.shape[0]
        if size == 0 or size & (size - 1):
            raise ResolutionError(f"signal length {size} is not a power of two")
        return cls(size.bit_length() - 1, vals)

    @classmethod
    def constant(cls, c, resolution: int) -> "GridSignal":
        return cls(resolution, np.full(1 << resolution, c))

    @classmethod
    def indicator(cls, resolution: int, start: int, stop: int, height=1.0) -> "GridSignal":
        """``height`` on cells ``start..stop-1``, zero elsewhere."""
        vals = np.zeros(1 << resolution)
        vals[start:stop] = height
        return cls(resolution, vals)

    @property
    def size(self) -> int:
        return 1 << self.resolution

    @property
    def cell_measure(self) -> float:
        return 2.0 ** -self.resolution

    def inner(self, other: "GridSignal") -> complex:
        """``<f, g> = 2^-N sum f conj(g)``."""
        _check_same_grid(self, other)
        return np.vdot(other.values, self.values) * self.cell_measure

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.cell_measure))

    def __add__(self, other: "GridSignal") -> "GridSignal":
        _check_same_grid(self, other)
        return GridSignal(self.resolution, self.values + other.values)

    def __sub__(self, other: "GridSignal") -> "GridSignal":
        _check_same_grid(self, other)
        return GridSignal(self.resolution, self.values - other.values)

    def __mul__(self, c) -> "GridSignal":
        if isinstance(c, GridSignal):
            _check_same_grid(self, c)
            return GridSignal(self.resolution, self.values * c.values)
        return GridSignal(self.resolution, self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "GridSignal":
        return GridSignal(self.resolution, -self.values)

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"GridSignal(resolution={self.resolution}, values={self.values!r})"


def _check_same_grid(f: GridSignal, g: GridSignal) -> None:
    if f.resolution != g.resolution:
        raise ResolutionError(f"resolution mismatch: {f.resolution} vs {g.resolution}")


@lru_cache(maxsize=None)
def bit_reverse(N: int) -> np.ndarray:
    """Permutation ``i -> i`` with its ``N`` low bits reversed."""
    idx = np.arange(1 << N)
    rev = np.zeros_like(idx)
    for b in range(N):
        rev |= ((idx >> b) & 1) << (N - 1 - b)
    rev.flags.writeable = False
    return rev


def _parity(x: np.ndarray) -> np.ndarray:
    return np.bitwise_count(x) & 1


def _hadamard(a: np.ndarray) -> np.ndarray:
    """Unnormalized natural-order Hadamard transform along the last axis."""
    a = np.array(a, dtype=np.result_type(a, float), copy=True)
    m = a.shape[-1]
    lead = a.shape[:-1]
    h = 1
    while h < m:
        a = a.reshape(lead + (m // (2 * h), 2, h))
        x = a[..., 0, :]
        y = a[..., 1, :]
        a = np.stack((x + y, x - y), axis=-2)
        h *= 2
    return a.reshape(lead + (m,))


def _paley_coefficients(values: np.ndarray) -> np.ndarray:
    """Walsh-Paley coefficients along the last axis (batched)."""
    m = values.shape[-1]
    n = m.bit_length() - 1
    return _hadamard(values)[..., bit_reverse(n)] / m


def rademacher(k: int, N: int) -> GridSignal:
    """``sign sin(2^k 2 pi x)`` sampled on the open cells of level ``N``."""
    if k < 0:
        raise LacunaError(f"Rademacher index must be nonnegative, got {k}")
    if k >= N:
        raise ResolutionError(f"Rademacher r_{k} needs resolution > {k}, got {N}")
    i = np.arange(1 << N)
    return GridSignal(N, 1.0 - 2.0 * ((i >> (N - 1 - k)) & 1))


def _walsh_values(n: int, N: int) -> np.ndarray:
    return 1.0 - 2.0 * _parity(bit_reverse(N) & n)


def walsh_function(n: int, N: int) -> GridSignal:
    if n < 0 or n >= 1 << N:
        raise FrequencyError(f"W_{n} is not representable at resolution {N}")
    return GridSignal(N, _walsh_values(n, N))


def walsh_coefficients(f: GridSignal) -> np.ndarray:
    """``out[k] = <f, W_k>`` for ``k < 2^N``."""
    return _paley_coefficients(f.values)


def inverse_walsh(coefficients) -> GridSignal:
    """Synthesize ``sum_k c_k W_k`` from Paley-ordered coefficients."""
    c = np.asarray(coefficients)
    m = c.shape[0]
    if m == 0 or m & (m - 1):
        raise ResolutionError(f"coefficient count {m} is not a power of two")
    N = m.bit_length() - 1
    return GridSignal(N, _hadamard(c[bit_reverse(N)]))


def partial_sum(f: GridSignal, n: int) -> GridSignal:
    """``W_n f = sum_{k <= n} <f, W_k> W_k``."""
    if n < 0 or n >= f.size:
        raise FrequencyError(f"partial sum index {n} not below 2^{f.resolution}")
    c = walsh_coefficients(f)
    c[n + 1:] = 0
    return inverse_walsh(c)


def wave_packet(t, N: int) -> GridSignal:
    """L2-normalized Walsh packet of a tile at resolution ``N``.

    ``w_t(x) = |I_t|^{-1/2} W_{n_t}((x - inf I_t)/|I_t|)`` with
    ``n_t = |I_t| inf(omega_t)``, which is the frequency index of the tile.
    """
    j = t.time.level
    if j > N:
        raise ResolutionError(f"tile time level {j} finer than resolution {N}")
    n_t = t.freq.index
    local = N - j
    if n_t >= 1 << local:
        raise ResolutionError(f"tile frequency {n_t} not representable at resolution {N}")
    vals = np.zeros(1 << N)
    start = t.time.index << local
    vals[start:start + (1 << local)] = 2.0 ** (j / 2) * _walsh_values(n_t, local)
    return GridSignal(N, vals)


def write_signal_csv(path, f: GridSignal) -> None:
    """Write ``index,re,im`` rows with 17 significant digits."""
    path = Path(path)
    vals = np.asarray(f.values, dtype=complex)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "re", "im"])
            for i, v in enumerate(vals):
                w.writerow([i, format(v.real, ".17g"), format(v.imag, ".17g")])
    except OSError as exc:
        raise OSError(f"cannot write signal to {path}: {exc}") from exc


def read_signal_csv(path) -> GridSignal:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "re", "im"]:
            raise LacunaError(f"{path}: expected header index,re,im, got {header}")
        rows = [r for r in reader if r]
    idx = [int(r[0]) for r in rows]
    if idx != list(range(len(rows))):
        raise LacunaError(f"{path}: indices must run 0..{len(rows) - 1} in order")
    re = np.array([float(r[1]) for r in rows])
    im = np.array([float(r[2]) for r in rows])
    vals = re if not np.any(im) else re + 1j * im
    return GridSignal.from_values(vals)
