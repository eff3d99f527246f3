"""
Walsh functions, wave packets and the tile sum
==============================================

Run with ``python3 demos/walsh_and_tiles.py``.
"""

import numpy as np

from lacuna import GridSignal, partial_sum, walsh_coefficients, walsh_function
from lacuna.model import TILE_SUM_OFFSET, TileCoefficients, tile_sum_partial
from lacuna.tiles import Tile
from lacuna.walsh import wave_packet

N = 4

# The first few Walsh functions on 16 cells, in Paley order.
for n in range(6):
    print(f"W_{n}:", "".join("+" if v > 0 else "-" for v in walsh_function(n, N).values))

# Coefficients come from one fast transform; the full partial sum gives f back.
rng = np.random.default_rng(0)
f = GridSignal(N, rng.standard_normal(1 << N))
c = walsh_coefficients(f)
print("\nParseval:", np.sum(c ** 2), "vs", f.norm() ** 2)
print("reconstruction error:", np.abs(partial_sum(f, 15).values - f.values).max())

# A wave packet lives on its time interval and oscillates at its frequency.
w = wave_packet(Tile.at(2, 1, 3), N)
print("\npacket on [1/4, 1/2) x [12, 16):", w.values)

# Summing packets over every bitile whose upper half holds n reproduces a
# Walsh partial sum, shifted by one index.
coefs = TileCoefficients(f)
for n in (1, 5, 11, 16):
    err = np.abs(tile_sum_partial(f, n, coefs).values - partial_sum(f, n - TILE_SUM_OFFSET).values).max()
    print(f"tile sum at n={n:2d} vs partial sum up to {n - TILE_SUM_OFFSET:2d}: {err:.1e}")
