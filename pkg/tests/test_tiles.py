import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lacuna.errors import LacunaError, PreconditionError
from lacuna.tiles import (FREQ, TIME, Bitile, DyadicInterval, Forest, Tile, Tree, counting_function,
                          crown, crown_contains, crown_function, enumerate_bitiles, feff_leq,
                          forest_from_json, forest_to_json, bitiles_from_json, bitiles_to_json,
                          is_convex)


def brute_convex(S, N):
    """Oracle: check every triple against the full ambient grid."""
    S = set(S)
    ambient = enumerate_bitiles(N)
    for s, u in itertools.product(S, S):
        if s != u and feff_leq(s, u):
            for m in ambient:
                if feff_leq(s, m) and feff_leq(m, u) and m not in S:
                    return False
    return True


def test_interval_geometry():
    I = DyadicInterval(TIME, 2, 1)
    assert I.length == 0.25 and I.bounds == (0.25, 0.5)
    assert I.parent() == DyadicInterval(TIME, 1, 0)
    assert I.contains(DyadicInterval(TIME, 3, 3))
    assert not I.contains(DyadicInterval(TIME, 3, 4))
    w = DyadicInterval(FREQ, 3, 1)  # [8, 16)
    assert w.contains_frequency(8) and w.contains_frequency(15) and not w.contains_frequency(16)
    assert w.contains(DyadicInterval(FREQ, 1, 5))


def test_tile_area_checks():
    with pytest.raises(LacunaError):
        Tile(DyadicInterval(TIME, 1, 0), DyadicInterval(FREQ, 2, 0))
    with pytest.raises(LacunaError):
        Bitile(DyadicInterval(TIME, 1, 0), DyadicInterval(FREQ, 1, 0))


def test_bitile_halves():
    s = Bitile.at(2, 1, 3)
    assert s.lower == Tile.at(2, 1, 6) and s.upper == Tile.at(2, 1, 7)


def test_fefferman_order():
    top = Bitile.at(0, 0, 1)  # [0,1) x [2,4)
    below = Bitile.at(1, 1, 0)  # [1/2,1) x [0,4)
    assert feff_leq(below, top) and not feff_leq(top, below)
    assert not feff_leq(Bitile.at(1, 1, 1), top)
    with pytest.raises(LacunaError):
        feff_leq(top, top.lower)


def test_enumeration_counts():
    for N in range(1, 6):
        assert len(enumerate_bitiles(N)) == N * (1 << (N - 1))
    # frequencies below 2: only the top-level bitile [0,1) x [0,2)
    assert enumerate_bitiles(2, freq_bound=2) == [Bitile.at(0, 0, 0)]


@pytest.mark.parametrize("seed", range(6))
def test_convexity_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    N = 4
    ambient = enumerate_bitiles(N)
    for _ in range(25):
        k = int(rng.integers(1, 8))
        S = [ambient[i] for i in rng.choice(len(ambient), size=k, replace=False)]
        assert is_convex(S, N) == brute_convex(S, N)


def test_full_grid_and_downsets_are_convex():
    N = 5
    S = enumerate_bitiles(N)
    assert is_convex(S, N)
    top = Bitile.at(1, 0, 2)
    assert is_convex([s for s in S if feff_leq(s, top)], N)


def test_tree_and_forest_validation():
    top = Bitile.at(0, 0, 0)
    with pytest.raises(PreconditionError):
        Tree(top, frozenset({Bitile.at(1, 0, 1)}))
    T = Tree(top, frozenset({top, Bitile.at(1, 0, 0)}))
    with pytest.raises(PreconditionError):
        Forest((T, Tree(top, frozenset({top}))))


def test_crown_is_union_of_upper_frequencies():
    top = Bitile.at(0, 0, 0)  # omega_{s2} = [1,2)
    T = Tree(top, frozenset({top, Bitile.at(1, 0, 0), Bitile.at(1, 1, 0)}))  # upper [2,4)
    cr = crown(T)
    assert set(n for n in range(8) if crown_contains(cr, n)) == {1, 2, 3}


def test_counting_and_crown_functions():
    N = 3
    T1 = Tree(Bitile.at(0, 0, 0), frozenset({Bitile.at(0, 0, 0)}))
    T2 = Tree(Bitile.at(1, 1, 0), frozenset({Bitile.at(1, 1, 0)}))
    F = Forest((T1, T2))
    assert np.array_equal(counting_function(F, N).values, [1, 1, 1, 1, 2, 2, 2, 2])
    assert F.counting_norm() == 1.5
    choice = np.array([1, 1, 2, 2, 1, 2, 3, 0])
    # T1 crown {1}; T2 crown [2,4) on the right half
    assert np.array_equal(crown_function(F, choice, N).values, [1, 1, 0, 0, 1, 1, 1, 0])


bitiles = st.tuples(st.integers(0, 4), st.integers(0, 15), st.integers(0, 7)).filter(
    lambda t: t[1] < 1 << t[0]).map(lambda t: Bitile.at(*t))


@given(st.lists(bitiles, max_size=8))
def test_bitile_json_roundtrip(S):
    assert sorted(set(bitiles_from_json(bitiles_to_json(S)))) == sorted(set(S))


def test_forest_json_roundtrip():
    top = Bitile.at(0, 0, 1)
    T = Tree(top, frozenset({Bitile.at(1, 0, 0), Bitile.at(2, 3, 0)}))
    F = Forest((T, Tree(Bitile.at(1, 1, 3), frozenset({Bitile.at(1, 1, 3)}))))
    G = forest_from_json(forest_to_json(F))
    assert [t.top for t in G.trees] == [t.top for t in F.trees]
    assert [t.members for t in G.trees] == [t.members for t in F.trees]
