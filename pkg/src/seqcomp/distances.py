"""Pairwise track distances used as regressors for similarity ratings.

Descriptor sets (the column groups of a distance table):

====  ===========================================  =========
set   distance                                     columns
====  ===========================================  =========
1     Euclidean between FCD vectors                4 x 25
2     cross-prediction error of frame sequences    25
3     Euclidean between FMD vectors (mean, std)    25
4     log-transformed Gaussian KLD on FMDs         25
5     sets 3 + 4                                   50
6     sets 1 + 3 + 4                               150
====  ===========================================  =========
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .data import Dataset
from .descriptors import DescriptorSet, DescriptorVector, split_name
from .errors import ValidationError

VAR_FLOOR = 1e-9
DEFAULT_EMBED_DIM = 12
EMBED_DIMS = (8, 12, 16, 20)
DISTANCE_HEADER = ("track_i", "track_j", "name", "value")

SET_PARTS = {1: (1,), 2: (2,), 3: (3,), 4: (4,), 5: (3, 4), 6: (1, 3, 4)}


def euclidean(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.linalg.norm(a - b))


def kld_diag(mu1, var1, mu2, var2, floor: float = VAR_FLOOR) -> float:
    """Closed-form divergence between two diagonal Gaussians, in nats.

    ``0.5 * sum(var2/var1 + (mu1 - mu2)**2/var1 - 1 - ln(var2/var1))``;
    variances are floored at ``floor``.
    """
    arrays = [np.asarray(v, dtype=np.float64).ravel() for v in (mu1, var1, mu2, var2)]
    if len({a.size for a in arrays}) != 1:
        raise ValidationError("dimension mismatch between Gaussian parameters")
    mu1, var1, mu2, var2 = arrays
    var1 = np.maximum(var1, floor)
    var2 = np.maximum(var2, floor)
    ratio = var2 / var1
    return float(0.5 * np.sum(ratio + (mu1 - mu2) ** 2 / var1 - 1.0 - np.log(ratio)))


def fmd_moments(v: DescriptorVector) -> tuple[np.ndarray, np.ndarray]:
    """Means and variances from an FMD vector laid out as [means, stds]."""
    h = v.values.size // 2
    return v.values[:h], v.values[h:] ** 2


def kld_distance(
    fmd_i: DescriptorVector,
    fmd_j: DescriptorVector,
    log: str = "plus1",
    symmetrise: bool = False,
) -> float:
    """Log-transformed KLD between the Gaussians summarised by two FMDs.

    ``log="plus1"`` returns ``ln(1 + KLD)``; ``"plain"`` returns
    ``ln(KLD)`` with the divergence floored at 1e-12.
    """
    if fmd_i.components != fmd_j.components:
        raise ValidationError(f"FMD layouts differ for {fmd_i.name} and {fmd_j.name}")
    mi, vi = fmd_moments(fmd_i)
    mj, vj = fmd_moments(fmd_j)
    value = kld_diag(mi, vi, mj, vj)
    if symmetrise:
        value = 0.5 * (value + kld_diag(mj, vj, mi, vi))
    if log == "plus1":
        return math.log1p(value)
    if log == "plain":
        return math.log(max(value, 1e-12))
    raise ValidationError(f"unknown KLD log transform {log!r}")


def delay_embed(V, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``d`` consecutive frames ``v[t-d] .. v[t-1]`` for each ``t >= d``.

    Returns the ``(T - d) x (d h)`` embedded points and their successor
    frames ``v[t]``.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim == 1:
        V = V[:, None]
    T, h = V.shape
    if d < 1:
        raise ValidationError("embedding dimension must be >= 1")
    if T < d + 2:
        raise ValidationError(f"sequence of length {T} too short for embedding dimension {d}")
    windows = np.lib.stride_tricks.sliding_window_view(V, d, axis=0)[: T - d]
    # windows: (T-d, h, d) -> order frames oldest first
    emb = np.ascontiguousarray(windows.transpose(0, 2, 1).reshape(T - d, d * h))
    return emb, V[d:]


def _nmse_sqrt(pred: np.ndarray, target: np.ndarray) -> float:
    var = target.var(axis=0)
    keep = var > 1e-300
    if not keep.any():
        return 0.0
    mse = ((pred - target) ** 2).mean(axis=0)
    return float(math.sqrt(np.mean(mse[keep] / var[keep])))


@njit(cache=True)
def _frame_row(At, b, out):
    """Squared distances from frame ``b`` to every frame of ``A`` (``At`` is ``h x T``)."""
    out[:] = 0.0
    for c in range(At.shape[0]):
        v = b[c]
        for j in range(At.shape[1]):
            e = At[c, j] - v
            out[j] += e * e


@njit(cache=True)
def _embedded_nearest(A, B, d):
    """Nearest embedded point of ``A`` for every embedded point of ``B``.

    The squared distance between windows ``B[i:i+d]`` and ``A[j:j+d]`` is
    a sum of frame distances along a diagonal, so row ``i`` follows from
    row ``i-1`` by adding one frame-distance row and dropping another; the
    last ``d + 1`` frame-distance rows are kept in a ring. Rows are rebuilt
    from scratch every 64 steps so that rounding cannot drift. Ties go to
    the earliest point of ``A``.
    """
    Ta = A.shape[0]
    na = Ta - d
    nb = B.shape[0] - d
    At = np.ascontiguousarray(A.T)
    r = d + 1
    ring = np.empty((r, Ta))
    prev = np.empty(na)
    cur = np.empty(na)
    arg = np.empty(nb, dtype=np.int64)
    for i in range(nb):
        if i % 64 == 0:
            for k in range(d):
                _frame_row(At, B[i + k], ring[(i + k) % r])
            for j in range(na):
                s = 0.0
                for k in range(d):
                    s += ring[(i + k) % r, j + k]
                cur[j] = s
            best = cur[0]
            a = 0
            for j in range(1, na):
                if cur[j] < best:
                    best = cur[j]
                    a = j
        else:
            new = ring[(i + d - 1) % r]
            _frame_row(At, B[i + d - 1], new)
            old = ring[(i - 1) % r]
            s = 0.0
            for k in range(d):
                s += ring[(i + k) % r, k]
            cur[0] = s
            best = s
            a = 0
            for j in range(1, na):
                v = prev[j - 1] + new[j + d - 1] - old[j - 1]
                cur[j] = v
                if v < best:
                    best = v
                    a = j
        arg[i] = a
        prev, cur = cur, prev
    return arg


@njit(cache=True)
def _embedded_nearest_1d(a, b, d):
    """``_embedded_nearest`` for scalar sequences, with the frame distances
    computed inline rather than through a ring of rows."""
    na = a.size - d
    nb = b.size - d
    prev = np.empty(na)
    cur = np.empty(na)
    arg = np.empty(nb, dtype=np.int64)
    for i in range(nb):
        if i % 64 == 0:
            best = np.inf
            am = 0
            for j in range(na):
                s = 0.0
                for k in range(d):
                    e = b[i + k] - a[j + k]
                    s += e * e
                cur[j] = s
                if s < best:
                    best = s
                    am = j
        else:
            new = b[i + d - 1]
            old = b[i - 1]
            s = 0.0
            for k in range(d):
                e = b[i + k] - a[k]
                s += e * e
            cur[0] = s
            best = s
            am = 0
            for j in range(1, na):
                e1 = a[j + d - 1] - new
                e0 = a[j - 1] - old
                v = prev[j - 1] + e1 * e1 - e0 * e0
                cur[j] = v
                if v < best:
                    best = v
                    am = j
        arg[i] = am
        prev, cur = cur, prev
    return arg


def _as_frames(V) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    return np.ascontiguousarray(V[:, None] if V.ndim == 1 else V)


def cross_prediction_error(A, B, d: int = DEFAULT_EMBED_DIM) -> float:
    """Square-rooted NMSE of predicting ``B`` from ``A``.

    Both sequences are delay-embedded with ``d`` frames. For each embedded
    point of ``B`` the nearest embedded point of ``A`` (exact Euclidean
    search) is found, and the frame following it in ``A`` is the
    prediction of the frame following the point in ``B``. The mean squared
    error per dimension is divided by the variance of ``B``'s predicted
    frames and averaged over dimensions; dimensions of zero variance are
    ignored.
    """
    A, B = _as_frames(A), _as_frames(B)
    if A.shape[1] != B.shape[1]:
        raise ValidationError("sequences differ in dimensionality")
    for V in (A, B):
        if d < 1:
            raise ValidationError("embedding dimension must be >= 1")
        if V.shape[0] < d + 2:
            raise ValidationError(f"sequence of length {V.shape[0]} too short for embedding dimension {d}")
    if A.shape[1] == 1:
        nn = _embedded_nearest_1d(np.ascontiguousarray(A[:, 0]), np.ascontiguousarray(B[:, 0]), d)
    else:
        nn = _embedded_nearest(A, B, d)
    return _nmse_sqrt(A[d:][nn], B[d:])


@dataclass(eq=False)
class DistanceTable:
    pairs: list[tuple[str, str]]
    names: list[str]
    values: np.ndarray  # len(pairs) x len(names)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DISTANCE_HEADER)
            for (i, j), row in zip(self.pairs, self.values):
                for name, v in zip(self.names, row):
                    w.writerow((i, j, name, f"{v:.9g}"))

    def columns(self, prefix: str) -> list[str]:
        return [n for n in self.names if n.startswith(prefix)]


def set_columns(descriptors: DescriptorSet, set_id: int) -> list[str]:
    """Column names of a descriptor set, in table order."""
    if set_id not in SET_PARTS:
        raise ValidationError(f"unknown descriptor set {set_id}; expected 1-6")
    fcd = descriptors.names("fcd")
    fmd = descriptors.names("fmd")
    features = [split_name(n)[1] for n in fmd]
    cols: list[str] = []
    for part in SET_PARTS[set_id]:
        if part == 1:
            cols += [f"euc:{n}" for n in fcd]
        elif part == 2:
            cols += [f"xpred:{f}" for f in features]
        elif part == 3:
            cols += [f"euc:{n}" for n in fmd]
        else:
            cols += [f"kld:{n}" for n in fmd]
    return cols


def distance_table(
    pairs: Sequence[tuple[str, str]],
    descriptors: DescriptorSet,
    set_id: int,
    ds: Dataset | None = None,
    *,
    kld_log: str = "plus1",
    symmetrise: bool = False,
    embed_dim: int = DEFAULT_EMBED_DIM,
) -> DistanceTable:
    """Distances for every pair under a descriptor set; rows follow ``pairs``.

    Set 2 needs the frame sequences, so ``ds`` is required for it.
    """
    names = set_columns(descriptors, set_id)
    if any(n.startswith("xpred:") for n in names) and ds is None:
        raise ValidationError("cross-prediction distances need the dataset frames")
    values = np.empty((len(pairs), len(names)))
    for r, (ti, tj) in enumerate(pairs):
        try:
            vi, vj = descriptors.vectors[ti], descriptors.vectors[tj]
        except KeyError as exc:
            raise ValidationError(f"no descriptors for track {exc.args[0]!r}") from None
        for c, col in enumerate(names):
            kind, _, ref = col.partition(":")
            if kind == "euc":
                a, b = vi.get(ref), vj.get(ref)
                if a is None or b is None or a.missing or b.missing:
                    raise ValidationError(f"missing descriptor {ref} for pair ({ti}, {tj})")
                values[r, c] = euclidean(a.values, b.values)
            elif kind == "kld":
                values[r, c] = kld_distance(vi[ref], vj[ref], kld_log, symmetrise)
            else:
                values[r, c] = cross_prediction_error(
                    ds.sequence(ti, ref).frames, ds.sequence(tj, ref).frames, embed_dim
                )
    return DistanceTable(list(pairs), names, values)
