"""
Iterated logarithms, Young functions and the quasinorm embedding
================================================================

Run with ``python3 demos/orlicz_embedding.py``.
"""

import mpmath
import numpy as np

from lacuna import GridSignal
from lacuna.norms import (LayerCake, YoungFunction, embedding_decomposition, local_orlicz_norm,
                          log_tower, quasinorm_bound, young_phi_log)
from lacuna.tiles import TIME, DyadicInterval

for k in range(4):
    print(f"log_{k}(t) at t = 1, 1e3, 1e30:", [round(float(log_tower(k, t)), 6) for t in (1.0, 1e3, 1e30)])

phi = YoungFunction(4)
print("\nphi_4 at 1, 10, 100:", phi(np.array([1.0, 10.0, 100.0])))
print("log phi_4(e^(10^6)) - 10^6 =", young_phi_log(4, 1e6) - 1e6)

rng = np.random.default_rng(3)
f = GridSignal(8, rng.exponential(size=256))
print("\nphi_4 Orlicz norm on [0, 1):", local_orlicz_norm(f, DyadicInterval(TIME, 0, 0), phi))

# A function on the unit sphere of the phi_4 space with layers at tower heights.
logmags = [mpmath.mpf(2), mpmath.exp(mpmath.exp(2.5)), mpmath.exp(mpmath.exp(12.5))]
cake = LayerCake.on_unit_ball(logmags, [0.5, 0.3, 0.2])
print("\nlog of the phi_4 integral:", mpmath.nstr(cake.log_phi_integral(4), 5))
total, rows = quasinorm_bound(embedding_decomposition(cake))
for r in rows:
    print(f"  band k={r.k:2d} {r.regime}: term {r.term:.3e}, weight {r.weight:.3f}")
print("quasinorm bound:", total)
