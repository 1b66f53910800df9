"""Codelength estimation with prediction by partial matching (PPM).

The model is PPM with escape method C and symbol exclusion. Each symbol is
charged its ideal arithmetic-coding cost ``-log2 P(symbol | context)`` and
the model is updated online, so the total is the length of the adaptive
code for the whole string. The rate in bits per symbol is that total
divided by the string length.

At time ``t`` the coder visits contexts of length ``min(order, t)`` down to
0, then a uniform order -1 model. In a visited context with counts ``c``
over the symbols not yet excluded, ``n = sum(c)`` and ``q`` the number of
distinct such symbols:

* ``P(a) = c[a] / (n + q)`` and ``P(escape) = q / (n + q)``;
* if the context has seen every symbol that is not excluded, escaping is
  pointless and ``P(a) = c[a] / n``;
* contexts with no unexcluded counts are skipped at no cost;
* after an escape, the symbols seen in that context are excluded below.

After coding, the counts of every context length ``0..min(order, t)`` are
incremented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ValidationError
from .symbolic import SymbolSequence, downsample, equal_frequency_edges, quantise

DEFAULT_ORDER = 5
_MAX_TABLE = 1 << 26


@dataclass(frozen=True)
class CompressionResult:
    codelength_bits: float
    length: int
    escapes: int = 0

    @property
    def rate_bits_per_symbol(self) -> float:
        return self.codelength_bits / self.length


@njit(cache=True)
def _predict(counts, offsets, ctx, hi, lam, excl, dist, target):
    """Fill ``dist`` with the predictive distribution; return the number of
    escapes emitted before ``target`` is coded."""
    for a in range(lam):
        dist[a] = 0.0
        excl[a] = False
    mass = 1.0
    n_excl = 0
    escapes = 0
    taken = -1
    for k in range(hi, -1, -1):
        base = offsets[k] + ctx[k] * lam
        n = 0
        q = 0
        for a in range(lam):
            c = counts[base + a]
            if c > 0 and not excl[a]:
                n += c
                q += 1
        if q == 0:
            continue
        if q == lam - n_excl:
            denom = float(n)
            esc = 0.0
        else:
            denom = float(n + q)
            esc = q / denom
        for a in range(lam):
            c = counts[base + a]
            if c > 0 and not excl[a]:
                dist[a] = mass * c / denom
                excl[a] = True
                n_excl += 1
                if a == target:
                    taken = escapes
        mass *= esc
        if mass == 0.0:
            break
        escapes += 1
    if mass > 0.0:
        share = mass / (lam - n_excl)
        for a in range(lam):
            if not excl[a]:
                dist[a] = share
    if taken < 0:
        taken = escapes
    return taken


@njit(cache=True)
def _ppm_pass(symbols, lam, order, offsets, table_size, probes, probe_out):
    counts = np.zeros(table_size, dtype=np.int32)
    ctx = np.zeros(order + 1, dtype=np.int64)
    excl = np.zeros(lam, dtype=np.bool_)
    dist = np.zeros(lam, dtype=np.float64)
    bits = 0.0
    escapes = 0
    next_probe = 0
    for t in range(symbols.size):
        hi = min(order, t)
        c = 0
        pw = 1
        for k in range(1, hi + 1):
            c += symbols[t - k] * pw
            pw *= lam
            ctx[k] = c
        s = symbols[t]
        escapes += _predict(counts, offsets, ctx, hi, lam, excl, dist, s)
        bits -= math.log2(dist[s])
        while next_probe < probes.size and probes[next_probe] == t:
            for a in range(lam):
                probe_out[next_probe, a] = dist[a]
            next_probe += 1
        for k in range(hi + 1):
            counts[offsets[k] + ctx[k] * lam + s] += 1
    return bits, escapes


def _tables(lam: int, order: int):
    sizes = [lam**k for k in range(order + 1)]
    offsets = np.zeros(order + 1, dtype=np.int64)
    total = 0
    for k, size in enumerate(sizes):
        offsets[k] = total * lam
        total += size
    if total * lam > _MAX_TABLE:
        raise ValidationError(f"context table for lambda={lam}, order={order} is too large")
    return offsets, total * lam


def _as_symbols(s, alphabet_size):
    if isinstance(s, SymbolSequence):
        return s.symbols, s.alphabet_size if alphabet_size is None else alphabet_size
    arr = np.ascontiguousarray(s, dtype=np.int64)
    if alphabet_size is None:
        raise ValidationError("alphabet_size is required for raw symbol arrays")
    return arr, alphabet_size


def _run(symbols, lam, order, probes=None):
    if symbols.ndim != 1 or symbols.size == 0:
        raise ValidationError("symbol sequence must be 1-D and non-empty")
    if order < 0:
        raise ValidationError(f"order must be >= 0, got {order}")
    if lam < 1:
        raise ValidationError("alphabet size must be positive")
    if symbols.min() < 0 or symbols.max() >= lam:
        raise ValidationError(f"symbol outside [0, {lam})")
    offsets, size = _tables(lam, order)
    if probes is None:
        probes = np.zeros(0, dtype=np.int64)
    out = np.zeros((probes.size, lam), dtype=np.float64)
    bits, escapes = _ppm_pass(symbols, lam, order, offsets, size, probes, out)
    return bits, escapes, out


def ppm_codelength(s, order: int = DEFAULT_ORDER, alphabet_size: int | None = None) -> CompressionResult:
    """Adaptive PPM-C codelength of a symbol sequence.

    ``s`` is a :class:`SymbolSequence` or an integer array together with
    ``alphabet_size``.
    """
    symbols, lam = _as_symbols(s, alphabet_size)
    bits, escapes, _ = _run(symbols, lam, order)
    return CompressionResult(float(bits), int(symbols.size), int(escapes))


def ppm_predictive(s, positions, order: int = DEFAULT_ORDER, alphabet_size: int | None = None):
    """Predictive distributions the coder uses at the given positions.

    Returns an array of shape ``(len(positions), alphabet_size)``; row ``i``
    is the distribution for symbol ``positions[i]`` given everything before.
    """
    symbols, lam = _as_symbols(s, alphabet_size)
    positions = np.asarray(positions, dtype=np.int64)
    order_idx = np.argsort(positions, kind="stable")
    _, _, out = _run(symbols, lam, order, positions[order_idx])
    result = np.empty_like(out)
    result[order_idx] = out
    return result


def lz78_codelength(s, alphabet_size: int | None = None) -> CompressionResult:
    """Ideal codelength of an LZ78 parse.

    Phrase ``i`` (1-based) costs ``log2(i)`` bits for the pointer to its
    prefix plus ``log2(alphabet_size)`` for the new symbol; a trailing
    incomplete phrase costs only its pointer.
    """
    symbols, lam = _as_symbols(s, alphabet_size)
    if symbols.size == 0:
        raise ValidationError("symbol sequence must be non-empty")
    trie: dict[tuple[int, int], int] = {}
    node = 0
    phrases = 0
    bits = 0.0
    sym_bits = math.log2(lam) if lam > 1 else 0.0
    for a in symbols.tolist():
        nxt = trie.get((node, a))
        if nxt is not None:
            node = nxt
            continue
        phrases += 1
        trie[(node, a)] = phrases
        bits += math.log2(phrases) + sym_bits
        node = 0
    if node != 0:
        bits += math.log2(phrases + 1)
    return CompressionResult(bits, int(symbols.size), 0)


def compression_rate(
    x,
    lam: int,
    factor: int = 1,
    order: int = DEFAULT_ORDER,
    *,
    method: str = "mean",
    edges=None,
    compressor: str = "ppm",
) -> float:
    """Bits per symbol of ``x`` after downsampling and equal-frequency
    quantisation into ``lam`` levels.

    A sequence whose downsampled values are all equal has rate 0: it holds
    no information, while an adaptive code would still charge a startup cost
    of roughly ``log2(lam) + log2(T)`` bits that dominates short strings.
    """
    y = downsample(x, factor, method)
    if np.ptp(y) == 0:
        return 0.0
    seq = quantise(y, equal_frequency_edges(y, lam) if edges is None else edges)
    if compressor == "ppm":
        res = ppm_codelength(seq, order)
    elif compressor == "lz78":
        res = lz78_codelength(seq)
    else:
        raise ValidationError(f"unknown compressor {compressor!r}")
    return res.rate_bits_per_symbol
