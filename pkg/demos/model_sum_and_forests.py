"""
The lacunary model sum and its size decomposition
=================================================

Run with ``python3 demos/model_sum_and_forests.py``.
"""

import numpy as np

from lacuna import GridSignal
from lacuna.decomposition import crown_layers, repartition_bounded_crown, size, size_decomposition
from lacuna.model import (TILE_SUM_OFFSET, greedy_choice, lacunary_bitiles, maximal_operator,
                          model_sum, parse_sequence)
from lacuna.tiles import crown_function, is_convex

N = 8
seq = parse_sequence("pow2:8")
S = lacunary_bitiles(N, seq)
print(f"{len(S)} bitiles meet the powers of two; convex: {is_convex(S, N)}")

rng = np.random.default_rng(1)
f = GridSignal(N, rng.choice([-1.0, 1.0], 1 << N))

# The greedy choice linearizes the maximal operator exactly.
Nf = greedy_choice(f, seq)
C = model_sum(S, f, Nf)
W = maximal_operator(f, seq, offset=TILE_SUM_OFFSET)
print("max | |C f| - W* f | =", np.abs(np.abs(C.values) - W.values).max())

# Peel off trees of decreasing size.
A = max(1.0, size(S, f))
dec = size_decomposition(S, f, A)
print(f"\nA = {A:.3f}")
for row in dec.rows():
    print(f"  sigma={row['sigma']:<8g} trees={row['tree_count']:3d} "
          f"||N||_1={row['counting_norm']:.3f} size={row['size']:.3f}")
print(f"counting constant {dec.counting_constant():.3f}, residual {len(dec.residual)} bitiles")

# Regroup each forest so that few crowns capture any choice value.
for sigma, F in dec.levels[:3]:
    Fs = repartition_bounded_crown(F.bitiles, F, seq)
    worst = int(crown_function(Fs, Nf, N).values.max())
    print(f"sigma={sigma:g}: {len(F)} trees -> {len(Fs)}, crown count {worst}, "
          f"{len(crown_layers(Fs))} layers (bound {seq.layer_bound()})")
