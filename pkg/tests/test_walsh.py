import numpy as np
import pytest
from hypothesis import given, strategies as st

from lacuna.errors import FrequencyError, LacunaError, ResolutionError
from lacuna.walsh import (GridSignal, bit_reverse, inverse_walsh, partial_sum, rademacher,
                          read_signal_csv, walsh_coefficients, walsh_function, wave_packet,
                          write_signal_csv)
from lacuna.tiles import Tile


def walsh_by_product(n, N):
    """Independent oracle: product of Rademacher factors selected by the digits of n."""
    x = (np.arange(1 << N) + 0.5) / (1 << N)
    out = np.ones(1 << N)
    k = 0
    while n >> k:
        if (n >> k) & 1:
            out *= np.sign(np.sin(2 ** k * 2 * np.pi * x))
        k += 1
    return out


signals = st.integers(1, 7).flatmap(
    lambda N: st.lists(st.floats(-10, 10), min_size=1 << N, max_size=1 << N).map(
        lambda v: GridSignal.from_values(np.array(v))))


def test_rademacher_matches_sine_sign():
    N = 5
    x = (np.arange(1 << N) + 0.5) / (1 << N)
    for k in range(N):
        assert np.array_equal(rademacher(k, N).values, np.sign(np.sin(2 ** k * 2 * np.pi * x)))


def test_rademacher_needs_finer_grid():
    with pytest.raises(ResolutionError):
        rademacher(3, 3)


@pytest.mark.parametrize("N", [1, 3, 6])
def test_walsh_functions_are_rademacher_products(N):
    for n in range(1 << N):
        assert np.array_equal(walsh_function(n, N).values, walsh_by_product(n, N))


def test_small_examples():
    assert np.array_equal(walsh_function(0, 2).values, [1, 1, 1, 1])
    assert np.array_equal(walsh_function(1, 2).values, [1, 1, -1, -1])
    assert np.array_equal(walsh_function(3, 2).values, [1, -1, -1, 1])


def test_frequency_must_fit():
    with pytest.raises(FrequencyError):
        walsh_function(8, 3)
    with pytest.raises(FrequencyError):
        partial_sum(GridSignal.constant(1.0, 3), 8)


def test_multiplicativity():
    N = 6
    for m in range(0, 64, 5):
        for n in range(0, 64, 3):
            prod = walsh_function(m, N).values * walsh_function(n, N).values
            assert np.array_equal(prod, walsh_function(m ^ n, N).values)


def test_coefficients_match_inner_products(rng):
    N = 5
    f = GridSignal(N, rng.standard_normal(1 << N))
    direct = np.array([f.inner(walsh_function(n, N)) for n in range(1 << N)])
    assert np.allclose(walsh_coefficients(f), direct, atol=1e-13)


def test_complex_signal_roundtrip(rng):
    N = 4
    f = GridSignal(N, rng.standard_normal(16) + 1j * rng.standard_normal(16))
    back = inverse_walsh(walsh_coefficients(f))
    assert np.allclose(back.values, f.values, atol=1e-13)


def test_partial_sum_of_character():
    N = 5
    w = walsh_function(9, N)
    assert np.allclose(partial_sum(w, 8).values, 0)
    assert np.allclose(partial_sum(w, 9).values, w.values)


@given(signals)
def test_parseval(f):
    c = walsh_coefficients(f)
    assert np.isclose(np.sum(np.abs(c) ** 2), f.norm() ** 2, rtol=1e-10, atol=1e-10)


@given(signals)
def test_full_partial_sum_reconstructs(f):
    assert np.allclose(partial_sum(f, f.size - 1).values, f.values, atol=1e-9)


def test_bit_reverse_is_involution():
    for N in range(6):
        r = bit_reverse(N)
        assert np.array_equal(r[r], np.arange(1 << N))


def test_wave_packet_normalized_and_local():
    N = 6
    t = Tile.at(2, 3, 5)
    w = wave_packet(t, N)
    assert np.isclose(w.norm(), 1.0)
    support = np.flatnonzero(w.values)
    assert support.min() == 3 * 16 and support.max() == 4 * 16 - 1
    assert np.allclose(np.abs(w.values[support]), 2.0)


def test_packets_of_disjoint_tiles_are_orthogonal():
    N = 5
    a = wave_packet(Tile.at(1, 0, 3), N)
    b = wave_packet(Tile.at(2, 0, 2), N)  # frequency [2,3)*4 = [8,12) vs [6,8)
    assert abs(a.inner(b)) < 1e-14


def test_packet_needs_representable_tile():
    with pytest.raises(ResolutionError):
        wave_packet(Tile.at(2, 0, 4), 3)


def test_signal_validation():
    with pytest.raises(ResolutionError):
        GridSignal(2, np.zeros(3))
    with pytest.raises(ResolutionError):
        GridSignal.from_values(np.zeros(6))
    f = GridSignal.constant(2.0, 2)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ResolutionError):
        f + GridSignal.constant(1.0, 3)


def test_arithmetic():
    f = GridSignal(1, [1.0, 2.0])
    g = GridSignal(1, [3.0, -1.0])
    assert np.array_equal((f + g).values, [4, 1])
    assert np.array_equal((f - g).values, [-2, 3])
    assert np.array_equal((2 * f).values, [2, 4])
    assert np.array_equal((f * g).values, [3, -2])
    assert np.array_equal((-f).values, [-1, -2])
    assert np.isclose(f.inner(g), (3 - 2) / 2)


def test_csv_roundtrip(tmp_path, rng):
    f = GridSignal(5, rng.standard_normal(32))
    path = tmp_path / "f.csv"
    write_signal_csv(path, f)
    assert path.read_text().splitlines()[0] == "index,re,im"
    g = read_signal_csv(path)
    assert np.array_equal(g.values, f.values)
    h = GridSignal(2, np.array([1 + 2j, 0, -1j, 3]))
    write_signal_csv(path, h)
    assert np.array_equal(read_signal_csv(path).values, h.values)


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("i,value\n0,1\n")
    with pytest.raises(LacunaError):
        read_signal_csv(path)
