"""Feature complexity descriptors (FCDs) and feature moment descriptors (FMDs).

An FCD is the PPM compression rate of a quantised feature sequence, one
value per alphabet size, computed at several downsampling factors. Vector
features are decorrelated with a per-track PCA first; each principal
component is quantised and compressed on its own and the rates are
averaged. An FMD holds the per-dimension mean and standard deviation of
the frames.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset, FeatureSequence
from .errors import DatasetError, SeqcompError, ValidationError
from .ppm import DEFAULT_ORDER, ppm_codelength
from .symbolic import FACTORS, LAMBDAS, downsample, equal_frequency_edges, quantise

logger = logging.getLogger(__name__)

DESCRIPTOR_HEADER = ("track_id", "name", "component", "value")


@dataclass(frozen=True)
class DescriptorConfig:
    lambdas: tuple[int, ...] = LAMBDAS
    factors: tuple[int, ...] = FACTORS
    order: int = DEFAULT_ORDER
    downsample_method: str = "mean"
    binning: str = "track"  # or "corpus"
    # components whose variance is below this fraction of the leading one are skipped
    min_variance: float = 1e-12


@dataclass(frozen=True, eq=False)
class PcaResult:
    scores: np.ndarray  # T x h, columns by descending variance
    variances: np.ndarray
    loadings: np.ndarray  # h x h, column k is the k-th direction
    mean: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class DescriptorVector:
    track_id: str
    name: str
    components: tuple[str, ...]
    values: np.ndarray
    retained: int | None = None  # PCA components used, for vector FCDs

    @property
    def missing(self) -> bool:
        return bool(np.isnan(self.values).any())


def fcd_name(feature: str, factor: int) -> str:
    return f"fcd:{feature}:{factor}"


def fmd_name(feature: str) -> str:
    return f"fmd:{feature}"


def split_name(name: str) -> tuple[str, str, int | None]:
    """``'fcd:<feature>:<factor>'`` -> ``('fcd', feature, factor)``."""
    kind, _, rest = name.partition(":")
    if kind == "fcd":
        feature, _, factor = rest.rpartition(":")
        return kind, feature, int(factor)
    return kind, rest, None


def track_pca(V) -> PcaResult:
    """Principal components of the frames of one track.

    Columns are mean-centred; all components are returned in order of
    decreasing variance (population convention). Each loading vector is
    signed so that its largest-magnitude entry is positive.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2:
        raise ValidationError("PCA input must be a T x h matrix")
    T, h = V.shape
    if T <= h:
        raise ValidationError(f"PCA needs more frames than dimensions (T={T}, h={h})")
    mean = V.mean(axis=0)
    Xc = V - mean
    if not np.any(Xc):
        return PcaResult(np.zeros_like(Xc), np.zeros(h), np.eye(h), mean, degenerate=True)
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    loadings = vt.T
    pivot = np.argmax(np.abs(loadings), axis=0)
    signs = np.sign(loadings[pivot, np.arange(h)])
    signs[signs == 0] = 1.0
    loadings = loadings * signs
    scores = Xc @ loadings
    return PcaResult(scores, s**2 / T, loadings, mean)


def _rates(columns: np.ndarray, lambdas, order, edges_for=None) -> np.ndarray:
    """Mean PPM rate over the columns of an already downsampled ``T' x m``
    matrix, for each alphabet size."""
    out = np.empty(len(lambdas))
    for li, lam in enumerate(lambdas):
        total = 0.0
        for c in range(columns.shape[1]):
            x = columns[:, c]
            if np.ptp(x) == 0:
                continue  # constant column: rate 0, as in compression_rate
            edges = equal_frequency_edges(x, lam) if edges_for is None else edges_for(c, lam)
            total += ppm_codelength(quantise(x, edges), order).rate_bits_per_symbol
        out[li] = total / columns.shape[1]
    return out


def _fcd_source(seq: FeatureSequence, config: DescriptorConfig) -> tuple[np.ndarray, int]:
    """Columns to be compressed (PCA scores for vector features) and the
    number of retained components."""
    if seq.h == 1:
        return seq.frames, 1
    pca = track_pca(seq.frames)
    lead = pca.variances[0]
    keep = pca.variances >= config.min_variance * lead if lead > 0 else np.zeros(seq.h, bool)
    if not keep.any():
        keep[0] = True
    return pca.scores[:, keep], int(keep.sum())


def compute_fcd(
    track: str,
    ds: Dataset,
    config: DescriptorConfig = DescriptorConfig(),
    corpus_edges: Mapping | None = None,
) -> list[DescriptorVector]:
    """FCD vectors of one track, one per (feature, factor).

    Variable-rate features only get factor 1. A (feature, factor) whose
    downsampled sequence is shorter than the largest alphabet is returned
    with NaN values (``missing``).
    """
    comps = tuple(f"lambda{lam}" for lam in config.lambdas)
    out = []
    for feature in ds.feature_names:
        seq = ds.sequence(track, feature)
        factors = (1,) if seq.variable_rate else config.factors
        source, retained = _fcd_source(seq, config)
        for factor in factors:
            name = fcd_name(feature, factor)
            if seq.T // factor < max(config.lambdas):
                logger.warning("%s: %s too short (T=%d) for factor %d", track, feature, seq.T, factor)
                out.append(DescriptorVector(track, name, comps, np.full(len(comps), np.nan), retained))
                continue
            cols = downsample(source, factor, config.downsample_method)
            edges_for = None
            if corpus_edges is not None:
                edges_for = lambda c, lam, f=feature, k=factor: corpus_edges[(f, c, k, lam)]
            values = _rates(cols, config.lambdas, config.order, edges_for)
            out.append(DescriptorVector(track, name, comps, values, retained))
    return out


def compute_fmd(track: str, ds: Dataset) -> list[DescriptorVector]:
    """Per-dimension mean then (population) standard deviation of each feature.

    Sums are exactly rounded (``math.fsum``), so the moments do not depend
    on frame order at all, not even in the last bit.
    """
    out = []
    for feature in ds.feature_names:
        frames = ds.sequence(track, feature).frames
        h = frames.shape[1]
        if h == 1:
            comps = ("mean", "std")
        else:
            comps = tuple(f"mean{d}" for d in range(h)) + tuple(f"std{d}" for d in range(h))
        T = frames.shape[0]
        means = np.array([math.fsum(col) / T for col in frames.T])
        stds = np.array([math.sqrt(math.fsum((col - m) ** 2) / T) for col, m in zip(frames.T, means)])
        values = np.concatenate([means, stds])
        out.append(DescriptorVector(track, fmd_name(feature), comps, values))
    return out


def corpus_edges(ds: Dataset, config: DescriptorConfig = DescriptorConfig()) -> dict:
    """Equal-frequency edges pooled over all tracks, keyed by
    ``(feature, component, factor, lambda)``. Vector features are pooled
    per principal-component index of the track-wise PCA."""
    pools: dict[tuple[str, int, int], list[np.ndarray]] = {}
    for track in ds.track_ids:
        for feature in ds.feature_names:
            seq = ds.sequence(track, feature)
            source = seq.frames if seq.h == 1 else track_pca(seq.frames).scores
            factors = (1,) if seq.variable_rate else config.factors
            for factor in factors:
                if seq.T // factor < 1:
                    continue
                cols = downsample(source, factor, config.downsample_method)
                for c in range(cols.shape[1]):
                    pools.setdefault((feature, c, factor), []).append(cols[:, c])
    edges = {}
    for (feature, c, factor), parts in pools.items():
        pooled = np.concatenate(parts)
        for lam in config.lambdas:
            edges[(feature, c, factor, lam)] = equal_frequency_edges(pooled, lam)
    return edges


def track_descriptors(
    track: str, ds: Dataset, config: DescriptorConfig = DescriptorConfig(), edges=None
) -> list[DescriptorVector]:
    return compute_fcd(track, ds, config, edges) + compute_fmd(track, ds)


@dataclass
class DescriptorSet:
    """Descriptor vectors for a corpus, keyed by track then name."""

    vectors: dict[str, dict[str, DescriptorVector]] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def track_ids(self) -> list[str]:
        return sorted(self.vectors)

    def names(self, kind: str | None = None) -> list[str]:
        """Descriptor names seen on any track, in a fixed order."""
        seen = {n for per_track in self.vectors.values() for n in per_track}
        names = sorted(seen, key=_name_key)
        if kind is not None:
            names = [n for n in names if n.startswith(kind + ":")]
        return names

    def complete_tracks(self, names: Sequence[str], track_ids: Iterable[str] | None = None) -> list[str]:
        """Tracks that have every descriptor in ``names`` without missing values."""
        ids = self.track_ids if track_ids is None else track_ids
        out = []
        for t in ids:
            per = self.vectors.get(t)
            if per is not None and all(n in per and not per[n].missing for n in names):
                out.append(t)
        return out

    def get(self, track: str, name: str) -> DescriptorVector:
        return self.vectors[track][name]

    def matrix(self, names: Sequence[str], track_ids: Sequence[str]) -> tuple[np.ndarray, list[str]]:
        """Tracks x columns matrix, columns labelled ``<name>:<component>``."""
        if not track_ids:
            raise ValidationError("no tracks")
        first = self.vectors[track_ids[0]]
        labels = [f"{n}:{c}" for n in names for c in first[n].components]
        rows = []
        for t in track_ids:
            per = self.vectors[t]
            rows.append(np.concatenate([per[n].values for n in names]))
        X = np.vstack(rows)
        if np.isnan(X).any():
            raise ValidationError("missing descriptor values in requested columns")
        return X, labels

    def write_csv(self, path: str | Path) -> int:
        rows = 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DESCRIPTOR_HEADER)
            for t in self.track_ids:
                for name in sorted(self.vectors[t], key=_name_key):
                    vec = self.vectors[t][name]
                    if vec.missing:
                        continue
                    for comp, value in zip(vec.components, vec.values):
                        w.writerow((t, name, comp, f"{value:.9g}"))
                        rows += 1
        return rows

    @classmethod
    def read_csv(cls, path: str | Path) -> "DescriptorSet":
        path = Path(path)
        if not path.is_file():
            raise DatasetError("missing file", path)
        acc: dict[str, dict[str, tuple[list[str], list[float]]]] = {}
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader, ()))
            if header != DESCRIPTOR_HEADER:
                raise DatasetError("column mismatch in descriptor header", path, 1)
            for row in reader:
                if len(row) != 4:
                    raise DatasetError("column mismatch", path, reader.line_num)
                t, name, comp, value = row
                try:
                    v = float(value)
                except ValueError:
                    raise DatasetError(f"bad value {value!r}", path, reader.line_num) from None
                comps, vals = acc.setdefault(t, {}).setdefault(name, ([], []))
                comps.append(comp)
                vals.append(v)
        vectors = {
            t: {n: DescriptorVector(t, n, tuple(c), np.array(v)) for n, (c, v) in per.items()}
            for t, per in acc.items()
        }
        return cls(vectors)


def _name_key(name: str):
    kind, feature, factor = split_name(name)
    return (0 if kind == "fcd" else 1, feature, factor or 0)


def _worker(args):
    tracks, ds, config, edges = args
    out = {}
    for t in tracks:
        try:
            out[t] = ({v.name: v for v in track_descriptors(t, ds, config, edges)}, None)
        except SeqcompError as exc:
            out[t] = (None, str(exc))
    return out


def compute_descriptors(
    ds: Dataset,
    config: DescriptorConfig = DescriptorConfig(),
    track_ids: Iterable[str] | None = None,
    jobs: int = 1,
) -> DescriptorSet:
    """Descriptors for every track. A track that fails is logged and
    recorded in ``failures`` instead of aborting the corpus."""
    ids = sorted(ds.track_ids if track_ids is None else track_ids)
    edges = corpus_edges(ds, config) if config.binning == "corpus" else None
    if config.binning not in ("track", "corpus"):
        raise ValidationError(f"unknown binning mode {config.binning!r}")
    if jobs > 1 and len(ids) > 1:
        chunks = [ids[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_worker, [(c, ds.subset(c), config, edges) for c in chunks]))
        merged = {k: v for part in parts for k, v in part.items()}
    else:
        merged = _worker((ids, ds, config, edges))
    result = DescriptorSet()
    for t in ids:
        vectors, err = merged[t]
        if err is not None:
            logger.error("track %s skipped: %s", t, err)
            result.failures[t] = err
        else:
            result.vectors[t] = vectors
            for v in vectors.values():
                if v.missing:
                    logger.warning("track %s: descriptor %s missing", t, v.name)
    return result
