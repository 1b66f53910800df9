"""Track metadata, feature sequences and similarity ratings.

Datasets are described by a manifest (``key=value`` lines) that points at
three CSV files::

    tracks=tracks.csv       # track_id,artist,title,chart_entry_date
    features=features.csv   # track_id,feature_name,path,frame_rate_hz,dims
    ratings=ratings.csv     # track_i,track_j,score   (optional)

Each row of ``features.csv`` references a headerless CSV holding the ``T x h``
frame matrix of one feature of one track. Relative paths are resolved against
the directory of the file that mentions them.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Container, Iterable, Mapping, Sequence

import numpy as np

from .errors import DatasetError, InfeasibleSplitError, ValidationError

logger = logging.getLogger(__name__)

VALID_YEARS = (1957.0, 2011.0)
TRACK_HEADER = ("track_id", "artist", "title", "chart_entry_date")
FEATURE_HEADER = ("track_id", "feature_name", "path", "frame_rate_hz", "dims")
RATING_HEADER = ("track_i", "track_j", "score")


def date_to_year(date: dt.date) -> float:
    """Fractional year, with 1 January mapping to the integer year."""
    return date.year + (date.timetuple().tm_yday - 1) / 365.25


def year_to_date(year: float) -> dt.date:
    whole = math.floor(year)
    day = int(round((year - whole) * 365.25))
    return dt.date(whole, 1, 1) + dt.timedelta(days=day)


@dataclass(frozen=True)
class TrackRecord:
    track_id: str
    artist: str
    title: str
    chart_entry_date: float  # fractional years


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """``T x h`` frame matrix of one feature of one track.

    ``frame_rate`` is in Hz, or ``None`` for variable-rate (onset based)
    features.
    """

    track_id: str
    feature_name: str
    frames: np.ndarray
    frame_rate: float | None = 40.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim == 1:
            frames = frames[:, None]
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValidationError(
                f"{self.track_id}/{self.feature_name}: frames must be a non-empty T x h matrix"
            )
        if not np.all(np.isfinite(frames)):
            raise ValidationError(f"{self.track_id}/{self.feature_name}: non-finite value")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def h(self) -> int:
        return self.frames.shape[1]

    @property
    def variable_rate(self) -> bool:
        return self.frame_rate is None


@dataclass(frozen=True)
class PairRating:
    track_i: str
    track_j: str
    score: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated, read-only collection of tracks, features and ratings."""

    tracks: Mapping[str, TrackRecord]
    features: Mapping[tuple[str, str], FeatureSequence]
    ratings: tuple[PairRating, ...] = ()
    feature_names: tuple[str, ...] = ()
    row_counts: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        tracks: Iterable[TrackRecord],
        features: Iterable[FeatureSequence],
        ratings: Iterable[PairRating] = (),
        *,
        n_classes: int = 5,
        valid_years: tuple[float, float] | None = VALID_YEARS,
        row_counts: Mapping[str, int] | None = None,
    ) -> "Dataset":
        track_map: dict[str, TrackRecord] = {}
        for rec in tracks:
            if rec.track_id in track_map:
                raise ValidationError(f"duplicate track_id {rec.track_id!r}")
            if valid_years is not None and not (
                valid_years[0] <= rec.chart_entry_date < valid_years[1]
            ):
                raise ValidationError(
                    f"track {rec.track_id!r}: chart entry date {rec.chart_entry_date:.3f} "
                    f"outside [{valid_years[0]}, {valid_years[1]})"
                )
            track_map[rec.track_id] = rec

        feat_map: dict[tuple[str, str], FeatureSequence] = {}
        dims: dict[str, int] = {}
        for seq in features:
            if seq.track_id not in track_map:
                raise ValidationError(f"dangling track reference {seq.track_id!r} in features")
            key = (seq.track_id, seq.feature_name)
            if key in feat_map:
                raise ValidationError(f"duplicate feature {key}")
            if dims.setdefault(seq.feature_name, seq.h) != seq.h:
                raise ValidationError(
                    f"feature {seq.feature_name!r}: dimensionality {seq.h} differs from "
                    f"{dims[seq.feature_name]} declared elsewhere"
                )
            feat_map[key] = seq
        names = tuple(sorted(dims))
        for tid in track_map:
            for name in names:
                if (tid, name) not in feat_map:
                    raise ValidationError(f"track {tid!r} lacks feature {name!r}")

        rating_list = []
        for r in ratings:
            _check_rating(r, track_map, n_classes)
            rating_list.append(r)

        ordered = {tid: track_map[tid] for tid in sorted(track_map)}
        return cls(
            tracks=MappingProxyType(ordered),
            features=MappingProxyType(dict(sorted(feat_map.items()))),
            ratings=tuple(rating_list),
            feature_names=names,
            row_counts=MappingProxyType(dict(row_counts or {})),
        )

    def __reduce__(self):
        # read-only mapping proxies do not pickle; worker processes need copies
        return (
            _rebuild_dataset,
            (dict(self.tracks), dict(self.features), self.ratings, self.feature_names, dict(self.row_counts)),
        )

    @property
    def track_ids(self) -> list[str]:
        return list(self.tracks)

    def sequence(self, track_id: str, feature_name: str) -> FeatureSequence:
        return self.features[(track_id, feature_name)]

    def feature_dims(self) -> dict[str, int]:
        first = next(iter(self.tracks), None)
        if first is None:
            return {}
        return {n: self.features[(first, n)].h for n in self.feature_names}

    def subset(self, track_ids: Iterable[str]) -> "Dataset":
        """Restrict to ``track_ids``; ratings are kept when both tracks survive."""
        keep = set(track_ids)
        missing = keep - set(self.tracks)
        if missing:
            raise ValidationError(f"unknown track ids: {sorted(missing)[:5]}")
        return Dataset(
            tracks=MappingProxyType({t: r for t, r in self.tracks.items() if t in keep}),
            features=MappingProxyType({k: v for k, v in self.features.items() if k[0] in keep}),
            ratings=tuple(r for r in self.ratings if r.track_i in keep and r.track_j in keep),
            feature_names=self.feature_names,
            row_counts=self.row_counts,
        )

    def years(self, track_ids: Sequence[str] | None = None) -> np.ndarray:
        ids = self.track_ids if track_ids is None else track_ids
        return np.array([self.tracks[t].chart_entry_date for t in ids], dtype=np.float64)


def _rebuild_dataset(tracks, features, ratings, feature_names, row_counts) -> Dataset:
    return Dataset(
        MappingProxyType(tracks), MappingProxyType(features), ratings, feature_names, MappingProxyType(row_counts)
    )


def _check_rating(r: PairRating, known: Container[str], n_classes: int) -> None:
    for tid in (r.track_i, r.track_j):
        if tid not in known:
            raise ValidationError(f"dangling track reference {tid!r} in ratings")
    if r.track_i == r.track_j:
        raise ValidationError(f"rating pairs a track with itself: {r.track_i!r}")
    if not 1 <= r.score <= n_classes:
        raise ValidationError(f"score {r.score} outside 1..{n_classes}")


# ---------------------------------------------------------------------------
# loading

def _read_manifest(path: Path) -> dict[str, Path]:
    if not path.is_file():
        raise DatasetError("missing file", path)
    entries: dict[str, Path] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in ("tracks", "features", "ratings"):
            raise DatasetError(f"unrecognised manifest entry {line!r}", path, lineno)
        entries[key] = (path.parent / value.strip()).resolve()
    for key in ("tracks", "features"):
        if key not in entries:
            raise DatasetError(f"manifest lacks '{key}='", path)
    return entries


def _csv_rows(path: Path, header: tuple[str, ...]):
    """Yield ``(line_number, row_dict)``, validating the header."""
    if not path.is_file():
        raise DatasetError("missing file", path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DatasetError("empty file", path, 1) from None
        if tuple(c.strip() for c in first) != header:
            raise DatasetError(
                f"column mismatch: expected header {','.join(header)}, got {','.join(first)}",
                path,
                1,
            )
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"column mismatch: expected {len(header)} fields, got {len(row)}", path, lineno
                )
            yield lineno, dict(zip(header, (c.strip() for c in row)))


def _parse_date(text: str, path: Path, lineno: int) -> float:
    try:
        return date_to_year(dt.date.fromisoformat(text))
    except ValueError:
        raise DatasetError(f"bad ISO-8601 date {text!r}", path, lineno) from None


def read_sequence(path: Path, dims: int) -> np.ndarray:
    """Parse a headerless ``T x dims`` CSV of decimal numbers."""
    if not path.is_file():
        raise DatasetError("missing file", path)
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        values = np.array(text.replace(",", " ").split(), dtype=np.float64)
    except ValueError:
        values = None
    if values is None or values.size != len(lines) * dims or not np.all(np.isfinite(values)):
        # slow path, only to locate the offending line
        for lineno, raw in enumerate(text.splitlines(), start=1):
            if not raw.strip():
                continue
            fields = raw.split(",")
            if len(fields) != dims:
                raise DatasetError(
                    f"column mismatch: expected {dims} values, got {len(fields)}", path, lineno
                )
            try:
                row = [float(f) for f in fields]
            except ValueError:
                raise DatasetError(f"non-numeric value in {raw!r}", path, lineno) from None
            if not all(math.isfinite(v) for v in row):
                raise DatasetError("non-finite value", path, lineno)
        raise DatasetError("malformed sequence file", path)
    if not lines:
        raise DatasetError("empty sequence (T must be >= 1)", path)
    return values.reshape(len(lines), dims)


def load_dataset(
    manifest_path: str | Path,
    *,
    n_classes: int = 5,
    valid_years: tuple[float, float] | None = VALID_YEARS,
) -> Dataset:
    """Load and validate the dataset described by ``manifest_path``."""
    manifest_path = Path(manifest_path)
    entries = _read_manifest(manifest_path)
    counts: dict[str, int] = {}

    tracks_path = entries["tracks"]
    tracks = []
    seen: set[str] = set()
    for lineno, row in _csv_rows(tracks_path, TRACK_HEADER):
        tid = row["track_id"]
        if not tid:
            raise DatasetError("empty track_id", tracks_path, lineno)
        if tid in seen:
            raise DatasetError(f"duplicate track_id {tid!r}", tracks_path, lineno)
        seen.add(tid)
        year = _parse_date(row["chart_entry_date"], tracks_path, lineno)
        if valid_years is not None and not valid_years[0] <= year < valid_years[1]:
            raise DatasetError(f"chart entry date outside {valid_years}", tracks_path, lineno)
        tracks.append(TrackRecord(tid, row["artist"], row["title"], year))
    counts[str(tracks_path)] = len(tracks)

    feats_path = entries["features"]
    features = []
    for lineno, row in _csv_rows(feats_path, FEATURE_HEADER):
        tid = row["track_id"]
        if tid not in seen:
            raise DatasetError(f"dangling track reference {tid!r}", feats_path, lineno)
        rate_text = row["frame_rate_hz"]
        if rate_text == "variable":
            rate = None
        else:
            try:
                rate = float(rate_text)
            except ValueError:
                rate = -1.0
            if not (math.isfinite(rate) and rate > 0):
                raise DatasetError(f"bad frame_rate_hz {rate_text!r}", feats_path, lineno)
        try:
            dims = int(row["dims"])
        except ValueError:
            dims = 0
        if dims < 1:
            raise DatasetError(f"bad dims {row['dims']!r}", feats_path, lineno)
        frames = read_sequence((feats_path.parent / row["path"]).resolve(), dims)
        try:
            features.append(FeatureSequence(tid, row["feature_name"], frames, rate))
        except ValidationError as exc:
            raise DatasetError(str(exc), feats_path, lineno) from None
    counts[str(feats_path)] = len(features)

    ratings = []
    if "ratings" in entries:
        ratings_path = entries["ratings"]
        for lineno, row in _csv_rows(ratings_path, RATING_HEADER):
            for key in ("track_i", "track_j"):
                if row[key] not in seen:
                    raise DatasetError(
                        f"dangling track reference {row[key]!r}", ratings_path, lineno
                    )
            try:
                score = int(row["score"])
            except ValueError:
                raise DatasetError(f"bad score {row['score']!r}", ratings_path, lineno) from None
            rating = PairRating(row["track_i"], row["track_j"], score)
            try:
                _check_rating(rating, seen, n_classes)
            except ValidationError as exc:
                raise DatasetError(str(exc), ratings_path, lineno) from None
            ratings.append(rating)
        counts[str(ratings_path)] = len(ratings)

    for name, n in counts.items():
        logger.info("%s: %d rows", name, n)
    try:
        return Dataset.build(
            tracks, features, ratings, n_classes=n_classes, valid_years=valid_years,
            row_counts=counts,
        )
    except ValidationError as exc:
        raise DatasetError(str(exc), manifest_path) from None


# ---------------------------------------------------------------------------
# splitting

def _normalise_key(s: str) -> str:
    return s.strip().casefold()


def _duplicate_groups(ds: Dataset) -> list[list[str]]:
    """Connected components of tracks linked by a shared artist or title."""
    parent = {tid: tid for tid in ds.tracks}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    owner: dict[tuple[str, str], str] = {}
    for tid, rec in ds.tracks.items():
        for key in (("artist", _normalise_key(rec.artist)), ("title", _normalise_key(rec.title))):
            other = owner.setdefault(key, tid)
            if other != tid:
                a, b = find(other), find(tid)
                if a != b:
                    parent[max(a, b)] = min(a, b)
    groups: dict[str, list[str]] = {}
    for tid in ds.tracks:
        groups.setdefault(find(tid), []).append(tid)
    return sorted(groups.values(), key=lambda g: g[0])


def dedup_split(
    ds: Dataset,
    train_fraction: float,
    seed: int,
    tolerance: float | None = 0.05,
) -> tuple[Dataset, Dataset]:
    """Random train/test partition with no artist or title shared across subsets.

    Tracks connected through a common artist or title form an atomic group.
    Groups are visited in a seeded random order and placed in the training
    subset while it has room, otherwise in the test subset.

    Raises :class:`InfeasibleSplitError` when a group is larger than both
    subset capacities or the achieved training fraction misses
    ``train_fraction`` by more than ``tolerance``. ``tolerance=None`` disables
    both checks.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must lie in (0, 1)")
    groups = _duplicate_groups(ds)
    n = len(ds.tracks)
    target = int(round(train_fraction * n))
    if tolerance is not None:
        biggest = max((len(g) for g in groups), default=0)
        if biggest > max(target, n - target):
            raise InfeasibleSplitError(
                f"a group of {biggest} tracks sharing artist/title strings exceeds "
                f"both subset capacities ({target}, {n - target})"
            )
    rng = np.random.default_rng(seed)
    train: list[str] = []
    test: list[str] = []
    for gi in rng.permutation(len(groups)):
        g = groups[gi]
        (train if len(train) + len(g) <= target else test).extend(g)
    achieved = len(train) / n if n else 0.0
    if tolerance is not None and abs(achieved - train_fraction) > tolerance:
        raise InfeasibleSplitError(
            f"achieved train fraction {achieved:.3f} is more than {tolerance:.2f} "
            f"from the requested {train_fraction:.3f}"
        )
    return ds.subset(train), ds.subset(test)


def split_ratings(
    ratings: Sequence[PairRating], train_fraction: float = 0.6, seed: int = 0
) -> tuple[list[PairRating], list[PairRating]]:
    """Seeded hold-out split of rating annotations."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(len(ratings))
    n_train = int(round(train_fraction * len(ratings)))
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return [ratings[i] for i in train_idx], [ratings[i] for i in test_idx]


# ---------------------------------------------------------------------------
# outliers

def outlier_mask(X: np.ndarray, n_sd: float = 10.0, upper_only: bool = False) -> np.ndarray:
    """Flag cells more than ``n_sd`` standard deviations beyond the 99th
    (or below the 1st) percentile of their column.

    Each candidate, from the most extreme inwards, is tested against the
    percentile and standard deviation of the remaining unflagged values of its
    column, so that a single huge value cannot mask itself.
    """
    X = np.asarray(X, dtype=np.float64)
    mask = np.zeros(X.shape, dtype=bool)
    for j in range(X.shape[1]):
        col = X[:, j]
        order = np.argsort(col, kind="stable")
        tails = [(order[::-1], 99.0, 1.0)]
        if not upper_only:
            tails.append((order, 1.0, -1.0))
        for candidates, q, sign in tails:
            active = ~mask[:, j]
            for idx in candidates:
                active[idx] = False
                rest = col[active]
                if rest.size < 2:
                    break
                bound = np.percentile(rest, q) + sign * n_sd * rest.std()
                if sign * (col[idx] - bound) > 0:
                    mask[idx, j] = True
                else:
                    break
    return mask


def impute_outliers(
    X: np.ndarray, k: int = 5, *, n_sd: float = 10.0, upper_only: bool = False
) -> np.ndarray:
    """Replace outlying cells by the column mean over their ``k`` nearest rows.

    Distances are Euclidean over z-scored columns, using only cells that are
    unflagged in both rows (rescaled to the full column count). Candidate
    neighbours must be unflagged in the column being imputed. Unflagged cells
    are returned unchanged.
    """
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if k >= n:
        raise ValidationError(f"k={k} must be smaller than the number of rows ({n})")
    mask = outlier_mask(X, n_sd=n_sd, upper_only=upper_only)
    out = X.copy()
    if not mask.any():
        return out
    ok = ~mask
    counts = ok.sum(axis=0)
    if np.any(counts == 0):
        raise ValidationError("a column is entirely flagged as outliers")
    means = np.where(ok, X, 0.0).sum(axis=0) / counts
    var = np.where(ok, (X - means) ** 2, 0.0).sum(axis=0) / counts
    scale = np.sqrt(var)
    scale[scale == 0] = 1.0
    Z = np.where(ok, (X - means) / scale, 0.0)

    for r, c in zip(*np.nonzero(mask)):
        cand = np.nonzero(ok[:, c])[0]
        cand = cand[cand != r]
        if cand.size < k:
            raise ValidationError(f"column {c}: fewer than k={k} unflagged neighbours")
        shared = ok[r][None, :] & ok[cand]
        diff = np.where(shared, Z[cand] - Z[r][None, :], 0.0)
        n_shared = shared.sum(axis=1)
        d2 = (diff**2).sum(axis=1) * p / np.maximum(n_shared, 1)
        d2[n_shared == 0] = np.inf
        nearest = cand[np.argsort(d2, kind="stable")[:k]]
        out[r, c] = X[nearest, c].mean()
    return out
