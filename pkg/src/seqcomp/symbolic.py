"""Multi-resolution downsampling and equal-frequency quantisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

FACTORS = (1, 2, 4, 8)
LAMBDAS = (3, 4, 5)


@dataclass(frozen=True, eq=False)
class SymbolSequence:
    symbols: np.ndarray  # integers in [0, alphabet_size)
    alphabet_size: int

    def __post_init__(self):
        s = np.ascontiguousarray(self.symbols, dtype=np.int64)
        if s.ndim != 1 or s.size < 1:
            raise ValidationError("symbol sequence must be 1-D and non-empty")
        if self.alphabet_size < 1:
            raise ValidationError("alphabet size must be positive")
        if s.min() < 0 or s.max() >= self.alphabet_size:
            raise ValidationError(f"symbol outside [0, {self.alphabet_size})")
        object.__setattr__(self, "symbols", s)

    def __len__(self):
        return self.symbols.size


def downsample(x, factor: int, method: str = "mean") -> np.ndarray:
    """Reduce the frame rate of ``x`` by an integer ``factor``.

    ``method="mean"`` averages non-overlapping windows of ``factor`` frames,
    ``"decimate"`` keeps the first frame of each window. A trailing partial
    window is dropped. Works along the first axis, so ``T x h`` input is
    accepted as well.
    """
    x = np.asarray(x, dtype=np.float64)
    if factor < 1:
        raise ValidationError(f"downsampling factor must be >= 1, got {factor}")
    T = x.shape[0]
    if T < factor:
        raise ValidationError(f"sequence of length {T} is shorter than factor {factor}")
    if factor == 1:
        return x.copy()
    n = T // factor
    blocks = x[: n * factor].reshape((n, factor) + x.shape[1:])
    if method == "mean":
        return blocks.mean(axis=1)
    if method == "decimate":
        return blocks[:, 0].copy()
    raise ValidationError(f"unknown downsampling method {method!r}")


def equal_frequency_edges(x, lam: int) -> np.ndarray:
    """The ``lam - 1`` empirical quantiles at probabilities ``m / lam``.

    The quantile at probability ``p`` is the order statistic with 1-based
    index ``ceil(p * T)``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if lam < 2:
        raise ValidationError(f"alphabet size must be >= 2, got {lam}")
    T = x.size
    if T < lam:
        raise ValidationError(f"sequence of length {T} is shorter than lambda={lam}")
    xs = np.sort(x)
    m = np.arange(1, lam)
    idx = (m * T + lam - 1) // lam  # ceil(m T / lam) in exact integer arithmetic
    return xs[idx - 1]


def quantise(x, edges) -> SymbolSequence:
    """Map each value to the number of edges strictly below it.

    Values equal to an edge fall in the lower bin.
    """
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or np.any(np.diff(edges) < 0):
        raise ValidationError("bin edges must be a non-decreasing 1-D array")
    x = np.asarray(x, dtype=np.float64).ravel()
    return SymbolSequence(np.searchsorted(edges, x, side="left"), edges.size + 1)


def symbolise(x, lam: int, factor: int = 1, method: str = "mean", edges=None) -> SymbolSequence:
    """Downsample, then quantise with equal-frequency edges of the downsampled
    sequence (or with caller-supplied ``edges``, e.g. corpus-wide ones)."""
    y = downsample(x, factor, method)
    if edges is None:
        edges = equal_frequency_edges(y, lam)
    return quantise(y, edges)
