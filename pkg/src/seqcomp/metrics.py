"""Agreement statistics between predictions and annotations, with
bootstrap standard errors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedStatisticError, ValidationError

logger = logging.getLogger(__name__)

QUADRATIC_MAX = 5000
MERGED = "1;2"


def _paired(q, o) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=np.float64).ravel()
    o = np.asarray(o, dtype=np.float64).ravel()
    if q.size != o.size:
        raise ValidationError(f"length mismatch: {q.size} vs {o.size}")
    if q.size < 2:
        raise ValidationError("need at least two paired observations")
    return q, o


def _tied_pairs(x: np.ndarray) -> int:
    _, counts = np.unique(x, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def _score_quadratic(q: np.ndarray, o: np.ndarray, chunk: int = 1024) -> int:
    """Concordant minus discordant pairs by direct enumeration."""
    total = 0
    for start in range(0, q.size, chunk):
        sq = np.sign(q[start : start + chunk, None] - q[None, :]).astype(np.int8)
        so = np.sign(o[start : start + chunk, None] - o[None, :]).astype(np.int8)
        total += int(np.sum(sq * so, dtype=np.int64))
    return total // 2  # every unordered pair counted twice


def _count_inversions(a: np.ndarray) -> int:
    """Pairs ``i < j`` with ``a[i] > a[j]`` for non-negative integer ``a``,
    by bottom-up merge sort."""
    n = a.size
    cur = a.astype(np.int64)
    span = int(cur.max()) + 1 if n else 1
    idx = np.arange(n)
    inversions = 0
    width = 1
    while width < n:
        block = idx // (2 * width)
        in_right = (idx % (2 * width)) >= width
        keyed = cur + block * span
        left = keyed[~in_right]  # sorted: each left half is sorted, blocks ascend
        rb = block[in_right]
        rv = cur[in_right]
        upper = np.searchsorted(left, rb * span + span - 1, side="right")
        at_most = np.searchsorted(left, rb * span + rv, side="right")
        inversions += int((upper - at_most).sum())
        cur = cur[np.argsort(keyed, kind="stable")]
        width *= 2
    return inversions


def _score_mergesort(q: np.ndarray, o: np.ndarray) -> int:
    n = q.size
    qr = rankdata(q, method="dense").astype(np.int64) - 1
    orr = rankdata(o, method="dense").astype(np.int64) - 1
    order = np.lexsort((orr, qr))
    discordant = _count_inversions(orr[order])
    both = _tied_pairs(qr * (orr.max() + 1) + orr)
    n_pairs = n * (n - 1) // 2
    return n_pairs - _tied_pairs(qr) - _tied_pairs(orr) + both - 2 * discordant


def kendall_tau_b(q, o, method: str = "auto") -> float:
    """Kendall's tau-b with tie-adjusted denominator.

    ``(Mc - Md) / sqrt((Mp - Mq)(Mp - Mo))`` where ``Mq`` and ``Mo`` count
    pairs tied in each sequence (pairs tied in both count in each).
    ``method`` selects direct pair enumeration (``"quadratic"``), the
    merge-sort count (``"mergesort"``), or the former up to 5000
    observations (``"auto"``).
    """
    q, o = _paired(q, o)
    n_pairs = q.size * (q.size - 1) // 2
    denom = (n_pairs - _tied_pairs(q)) * (n_pairs - _tied_pairs(o))
    if denom == 0:
        raise UndefinedStatisticError("tau_b undefined: a sequence is entirely tied")
    if method == "auto":
        method = "quadratic" if q.size <= QUADRATIC_MAX else "mergesort"
    if method == "quadratic":
        score = _score_quadratic(q, o)
    elif method == "mergesort":
        score = _score_mergesort(q, o)
    else:
        raise ValidationError(f"unknown tau_b method {method!r}")
    return score / math.sqrt(denom)


def spearman_rho(q, o) -> float:
    """Pearson correlation of mid-ranks."""
    q, o = _paired(q, o)
    rq = rankdata(q) - (q.size + 1) / 2.0
    ro = rankdata(o) - (o.size + 1) / 2.0
    denom = math.sqrt(float(rq @ rq) * float(ro @ ro))
    if denom == 0:
        raise UndefinedStatisticError("rho_s undefined: zero rank variance")
    return float(rq @ ro) / denom


def balanced_accuracy(confusion, true_axis: str = "rows") -> float:
    """Mean per-class recall of a ``K x K`` confusion matrix."""
    C = np.asarray(confusion, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValidationError("confusion matrix must be square")
    if true_axis == "cols":
        C = C.T
    elif true_axis != "rows":
        raise ValidationError("true_axis must be 'rows' or 'cols'")
    sums = C.sum(axis=1)
    if np.any(sums <= 0):
        raise ValidationError("confusion matrix has an empty true-class row")
    return float(np.mean(np.diag(C) / sums))


def confusion_matrix(true, pred, classes: Sequence | None = None) -> np.ndarray:
    """Counts with rows indexed by true class and columns by prediction."""
    true = np.asarray(true)
    pred = np.asarray(pred)
    if classes is None:
        classes = np.union1d(true, pred)
    lookup = {c: i for i, c in enumerate(classes)}
    C = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true.tolist(), pred.tolist()):
        C[lookup[t], lookup[p]] += 1
    return C


def balanced_accuracy_labels(pred, true) -> float:
    """Balanced accuracy over the classes that occur in ``true``."""
    pred = np.asarray(pred).ravel()
    true = np.asarray(true).ravel()
    if pred.size != true.size:
        raise ValidationError("length mismatch")
    classes = np.unique(true)
    return float(np.mean([np.mean(pred[true == c] == c) for c in classes]))


def mae_rmse(pred, obs) -> tuple[float, float]:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    obs = np.asarray(obs, dtype=np.float64).ravel()
    if pred.size != obs.size:
        raise ValidationError(f"length mismatch: {pred.size} vs {obs.size}")
    if pred.size == 0:
        raise ValidationError("empty input")
    err = pred - obs
    return float(np.mean(np.abs(err))), float(math.sqrt(np.mean(err**2)))


def mae(pred, obs) -> float:
    return mae_rmse(pred, obs)[0]


def rmse(pred, obs) -> float:
    return mae_rmse(pred, obs)[1]


STATISTICS: dict[str, Callable] = {
    "tau_b": kendall_tau_b,
    "rho_s": spearman_rho,
    "ba": balanced_accuracy_labels,
    "mae": mae,
    "rmse": rmse,
}


@dataclass(frozen=True)
class BootstrapResult:
    statistic: str
    point: float
    se: float
    level: float
    lo: float
    hi: float
    n_resamples: int
    seed: int
    redraws: int = 0

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "value": self.point,
            "se": self.se,
            "ci": {"level": self.level, "lo": self.lo, "hi": self.hi},
            "B": self.n_resamples,
            "seed": self.seed,
            "redraws": self.redraws,
        }


def bootstrap(
    stat: str | Callable,
    pred,
    obs,
    B: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> BootstrapResult:
    """Paired bootstrap of a statistic of ``(pred, obs)``.

    Resample ``b`` draws its indices from a generator seeded with
    ``(seed, b, attempt)``, so results do not depend on evaluation order.
    Resamples on which the statistic is undefined are redrawn.
    """
    if B < 100:
        raise ValidationError("use at least 100 bootstrap resamples")
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    name = stat if isinstance(stat, str) else getattr(stat, "__name__", "statistic")
    fn = STATISTICS[stat] if isinstance(stat, str) else stat
    pred = np.asarray(pred)
    obs = np.asarray(obs)
    if pred.shape[0] != obs.shape[0]:
        raise ValidationError("length mismatch")
    n = pred.shape[0]
    point = fn(pred, obs)
    values = np.empty(B)
    redraws = 0
    for b in range(B):
        attempt = 0
        while True:
            idx = np.random.default_rng([seed, b, attempt]).integers(0, n, n)
            try:
                values[b] = fn(pred[idx], obs[idx])
                break
            except UndefinedStatisticError:
                attempt += 1
                redraws += 1
                if redraws > B:
                    raise UndefinedStatisticError(
                        f"{name} undefined on more than half of the bootstrap draws"
                    ) from None
    if redraws:
        logger.info("bootstrap %s: %d undefined resamples redrawn", name, redraws)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(values, [100 * alpha, 100 * (1 - alpha)])
    return BootstrapResult(
        name, float(point), float(values.std(ddof=1)), level, float(lo), float(hi), B, seed, redraws
    )


def merge_four_point(x):
    """Merge scores 1 and 2 of a five-point scale into one class ``"1;2"``.

    Accepts a score sequence (returns a list with ``"1;2"`` in place of 1
    and 2) or a 5 x 5 confusion matrix (returns the 4 x 4 matrix with the
    first two rows and columns summed).
    """
    if isinstance(x, np.ndarray) and x.ndim == 2:
        if x.shape != (5, 5):
            raise ValidationError("expected a five-point (5 x 5) confusion matrix")
        M = np.asarray(x)
        rows = np.vstack([M[0] + M[1], M[2:]])
        return np.hstack([rows[:, :1] + rows[:, 1:2], rows[:, 2:]])
    out = []
    for s in x:
        if isinstance(s, str) or isinstance(s, (bool, np.bool_)) or int(s) != s or not 1 <= s <= 5:
            raise ValidationError(f"not a five-point score: {s!r}")
        out.append(MERGED if s in (1, 2) else int(s))
    return out


def four_point_codes(scores) -> np.ndarray:
    """Five-point scores as ordinal codes 1..4 of the merged scale."""
    s = np.asarray(scores, dtype=np.int64)
    if np.any((s < 1) | (s > 5)):
        raise ValidationError("scores must lie in 1..5")
    return np.where(s <= 2, 1, s - 1)
