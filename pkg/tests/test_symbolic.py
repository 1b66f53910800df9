import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from seqcomp.errors import ValidationError
from seqcomp.symbolic import SymbolSequence, downsample, equal_frequency_edges, quantise, symbolise

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_downsample_examples():
    np.testing.assert_array_equal(downsample([1, 2, 3, 4], 1), [1, 2, 3, 4])
    np.testing.assert_array_equal(downsample([1, 2, 3, 4], 2), [1.5, 3.5])
    np.testing.assert_array_equal(downsample([1, 2, 3, 4, 5], 2), [1.5, 3.5])
    np.testing.assert_array_equal(downsample([1, 2, 3, 4, 5], 2, method="decimate"), [1, 3])


def test_downsample_matrix_columns():
    x = np.arange(12.0).reshape(6, 2)
    np.testing.assert_array_equal(downsample(x, 3), [[2, 3], [8, 9]])


@pytest.mark.parametrize("factor", [0, -1])
def test_downsample_rejects_bad_factor(factor):
    with pytest.raises(ValidationError):
        downsample([1.0, 2.0], factor)


def test_downsample_too_short():
    with pytest.raises(ValidationError):
        downsample([1.0, 2.0, 3.0], 4)


@given(hnp.arrays(np.float64, st.integers(8, 200), elements=finite), st.sampled_from([1, 2, 4, 8]))
def test_downsample_length_and_mean(x, factor):
    y = downsample(x, factor)
    n = len(x) // factor
    assert y.shape == (n,)
    np.testing.assert_allclose(y.sum() * factor, x[: n * factor].sum(), rtol=1e-9, atol=1e-3)


def test_edges_tertiles():
    edges = equal_frequency_edges(np.arange(1, 10), 3)
    np.testing.assert_array_equal(edges, [3, 6])
    counts = np.bincount(quantise(np.arange(1, 10), edges).symbols, minlength=3)
    np.testing.assert_array_equal(counts, [3, 3, 3])


def test_edges_constant_sequence():
    edges = equal_frequency_edges([5, 5, 5, 5], 3)
    np.testing.assert_array_equal(edges, [5, 5])
    assert set(quantise([5, 5, 5, 5], edges).symbols.tolist()) == {0}


def test_edges_uniform_counts():
    x = np.random.default_rng(3).uniform(size=1000)
    counts = np.bincount(symbolise(x, 4).symbols, minlength=4)
    assert np.all(np.abs(counts - 250) <= 1)


def test_quantise_examples():
    np.testing.assert_array_equal(quantise([1, 4, 7], [3, 6]).symbols, [0, 1, 2])
    np.testing.assert_array_equal(quantise([3, 6], [3, 6]).symbols, [0, 1])


def test_quantise_matches_linear_scan():
    rng = np.random.default_rng(11)
    x = rng.normal(size=100)
    edges = np.sort(rng.normal(size=4))
    scan = [sum(1 for e in edges if v > e) for v in x]
    np.testing.assert_array_equal(quantise(x, edges).symbols, scan)


def test_quantise_rejects_unsorted_edges():
    with pytest.raises(ValidationError):
        quantise([1.0], [2.0, 1.0])


@settings(max_examples=60)
@given(hnp.arrays(np.float64, st.integers(5, 300), elements=finite), st.sampled_from([2, 3, 4, 5]))
def test_symbols_in_range_and_monotone(x, lam):
    if len(x) < lam:
        return
    s = symbolise(x, lam).symbols
    assert s.min() >= 0 and s.max() < lam
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(s[order]) >= 0)  # quantisation preserves order


@settings(max_examples=60)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=10, max_size=200, unique=True), st.sampled_from([3, 4, 5]))
def test_distinct_values_fill_bins_evenly(values, lam):
    counts = np.bincount(symbolise(np.array(values), lam).symbols, minlength=lam)
    assert counts.max() - counts.min() <= 1


def test_symbol_sequence_validation():
    with pytest.raises(ValidationError):
        SymbolSequence(np.array([0, 3]), 3)
    with pytest.raises(ValidationError):
        SymbolSequence(np.array([], dtype=int), 3)
