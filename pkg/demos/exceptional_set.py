"""
Exponential tails and the exceptional set
=========================================

Run with ``python3 demos/exceptional_set.py`` (about ten seconds).
"""

import numpy as np

from lacuna import GridSignal
from lacuna.decomposition import exceptional_set, fit_exponential_rate, size, size_decomposition
from lacuna.model import TileCoefficients, greedy_choice, lacunary_bitiles, model_sum, parse_sequence

N = 10
seq = parse_sequence("7,14,28,56,112,224,448,896")
S = lacunary_bitiles(N, seq)
rng = np.random.default_rng(2)
f = GridSignal(N, rng.uniform(-1, 1, 1 << N))
sup = np.abs(f.values).max()

coefs = TileCoefficients(f)
Nf = greedy_choice(f, seq)
Cf = np.abs(model_sum(S, f, Nf, coefs=coefs).values)

lams = np.arange(1.0, 3.01, 0.25)
measures = [np.mean(Cf > t * sup) for t in lams]
for t, m in zip(lams, measures):
    print(f"|{{|C f| > {t:4.2f} sup|f|}}| = {m:.4f}")
rate, _ = fit_exponential_rate(lams, measures)
print(f"fitted rate {rate:.2f}")

# The superlevel set at K0 lambda sits inside the union of large tree sums.
A = max(sup, size(S, f, coefs))
dec = size_decomposition(S, f, A, coefs)
for t in (1, 2, 4, 8):
    E = exceptional_set(S, f, t * sup, seq, Nf, A=A, decomposition=dec, coefs=coefs)
    r = E.report
    print(f"lambda={t} sup|f|: K0={E.K0:.2f} |E|={r['exceptional_measure']:.4f} "
          f"inclusion={r['inclusion_ok']} crowns<={r['crown_max']}")
