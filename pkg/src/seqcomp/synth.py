"""Synthetic corpora with known structure, for tests and demonstrations.

Every track gets a chart year and two hidden style vectors. Each of the 25
features is an AR(1) process plus a sinusoid:

* the AR coefficient depends on the year and on the *temporal* style
  vector, so temporal structure (what FCDs measure) carries both;
* the frame mean and scale depend more weakly on the year and on the
  *moment* style vector (what FMDs measure);
* both also carry independent per-track, per-feature quirks, so neither
  family pins down the year on its own.

Similarity ratings are a discretised, decreasing function of the L1
distance between the pair's combined style vectors plus noise, so both
descriptor families hold part of the signal.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .data import (
    FEATURE_HEADER,
    RATING_HEADER,
    TRACK_HEADER,
    Dataset,
    FeatureSequence,
    PairRating,
    TrackRecord,
    date_to_year,
    year_to_date,
)
from .errors import ValidationError

logger = logging.getLogger(__name__)

FEATURES: tuple[tuple[str, int], ...] = (
    ("chroma", 12),
    ("dynamics.rms", 1),
    ("rhythm.tempo", 1),
    ("rhythm.attack.time", 1),
    ("rhythm.attack.slope", 1),
    ("spectral.centroid", 1),
    ("spectral.brightness", 1),
    ("spectral.spread", 1),
    ("spectral.skewness", 1),
    ("spectral.kurtosis", 1),
    ("spectral.rolloff95", 1),
    ("spectral.rolloff85", 1),
    ("spectral.spectentropy", 1),
    ("spectral.flatness", 1),
    ("spectral.roughness", 1),
    ("spectral.irregularity", 1),
    ("spectral.mfcc", 12),
    ("spectral.dmfcc", 12),
    ("spectral.ddmfcc", 12),
    ("timbre.zerocross", 1),
    ("timbre.spectralflux", 1),
    ("tonal.chromagram.centroid", 1),
    ("tonal.keyclarity", 1),
    ("tonal.mode", 1),
    ("tonal.hcdf", 1),
)

_DESIGN_SEED = 20130604  # fixes how features respond to the latent factors
_RATING_STREAM = 1 << 30


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters.

    ``correlation`` scales all temporal structure (0 gives i.i.d. frames);
    ``year_drift`` scales every dependence on the year (0 removes it);
    ``track_noise`` is the spread of per-track, per-feature quirks that no
    other track shares.
    """

    n_tracks: int = 100
    n_frames: int = 1200
    n_ratings: int = 0
    seed: int = 0
    correlation: float = 1.0
    year_drift: float = 1.0
    rating_noise: float = 0.15
    track_noise: float = 0.5
    latent_dims: int = 2
    n_artists: int = 0  # 0: one artist per three tracks
    duplicate_titles: float = 0.02
    frame_rate: float = 40.0
    first_year: float = 1957.0
    last_year: float = 2010.99

    def __post_init__(self):
        if self.n_tracks < 2 or self.n_frames < 2:
            raise ValidationError("need at least two tracks of at least two frames")
        if self.n_ratings < 0 or self.latent_dims < 1:
            raise ValidationError("n_ratings must be >= 0 and latent_dims >= 1")
        if not 0.0 <= self.correlation <= 1.0:
            raise ValidationError("correlation must lie in [0, 1]")
        if min(self.year_drift, self.rating_noise, self.track_noise) < 0:
            raise ValidationError("year_drift, rating_noise and track_noise must be non-negative")
        max_pairs = self.n_tracks * (self.n_tracks - 1) // 2
        if self.n_ratings > max_pairs:
            raise ValidationError(f"{self.n_ratings} ratings exceed the {max_pairs} distinct pairs")

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ValidationError(f"unknown generator parameter {key!r}")
            kwargs[key] = int(raw) if kinds[key] == "int" else float(raw)
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class _Design:
    temporal_channel: np.ndarray  # per feature: latent index driving its AR coefficient
    temporal_sign: np.ndarray
    moment_channel: np.ndarray
    moment_sign: np.ndarray
    year_sign: np.ndarray
    base_mean: np.ndarray
    base_scale: np.ndarray
    mixing: dict  # vector features: h x h mixing matrices


def _design(latent_dims: int) -> _Design:
    rng = np.random.default_rng([_DESIGN_SEED, latent_dims])
    n = len(FEATURES)
    mixing = {}
    for name, h in FEATURES:
        if h > 1:
            q, _ = np.linalg.qr(rng.normal(size=(h, h)))
            mixing[name] = q * rng.uniform(0.5, 2.0, size=h)
    return _Design(
        temporal_channel=np.arange(n) % latent_dims,
        temporal_sign=rng.choice([-1.0, 1.0], size=n),
        moment_channel=(np.arange(n) // 2) % latent_dims,
        moment_sign=rng.choice([-1.0, 1.0], size=n),
        year_sign=rng.choice([-1.0, 1.0], size=n),
        base_mean=rng.uniform(-5.0, 5.0, size=n),
        base_scale=rng.uniform(0.5, 3.0, size=n),
        mixing=mixing,
    )


def _year_position(year: float, cfg: SynthConfig) -> float:
    """Year mapped to [-1, 1]."""
    mid = 0.5 * (cfg.first_year + cfg.last_year)
    return (year - mid) / (0.5 * (cfg.last_year - cfg.first_year))


def _track_frames(cfg: SynthConfig, design: _Design, idx: int, year: float, zt, zm) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([cfg.seed, idx])
    u = _year_position(year, cfg) * cfg.year_drift
    T = cfg.n_frames
    quirk = cfg.track_noise * rng.normal(size=(2, len(FEATURES)))
    out = {}
    for f, (name, h) in enumerate(FEATURES):
        drive = 0.9 * design.temporal_sign[f] * zt[design.temporal_channel[f]] + 1.2 * design.year_sign[f] * u
        drive += quirk[0, f]
        rho = cfg.correlation * (0.5 + 0.45 * math.tanh(drive))
        noise = rng.normal(size=(T, h))
        ar = lfilter([math.sqrt(1.0 - rho * rho)], [1.0, -rho], noise, axis=0)
        t = np.arange(T)[:, None]
        freq = rng.uniform(0.5, 3.0, size=h) / cfg.frame_rate
        phase = rng.uniform(0.0, 2 * math.pi, size=h)
        x = ar + 0.6 * cfg.correlation * np.sin(2 * math.pi * freq * t + phase)
        if h > 1:
            x = x @ design.mixing[name]
        level = design.moment_sign[f] * zm[design.moment_channel[f]] + 0.5 * design.year_sign[f] * u + quirk[1, f]
        mean = design.base_mean[f] + level
        scale = design.base_scale[f] * math.exp(0.3 * zm[(design.moment_channel[f] + 1) % cfg.latent_dims])
        out[name] = mean + scale * x
    return out


def _names(cfg: SynthConfig, rng: np.random.Generator) -> tuple[list[str], list[str]]:
    n_artists = cfg.n_artists or max(1, cfg.n_tracks // 3)
    artists = [f"Artist {rng.integers(0, n_artists):04d}" for _ in range(cfg.n_tracks)]
    titles = []
    for i in range(cfg.n_tracks):
        if i > 0 and rng.random() < cfg.duplicate_titles:
            titles.append(titles[int(rng.integers(0, i))])  # a cover version
        else:
            titles.append(f"Song {i:05d}")
    return artists, titles


def _ratings(cfg: SynthConfig, ids: list[str], latent: np.ndarray) -> list[PairRating]:
    if cfg.n_ratings == 0:
        return []
    rng = np.random.default_rng([cfg.seed, _RATING_STREAM])
    n = len(ids)
    chosen: set[tuple[int, int]] = set()
    pairs = []
    while len(pairs) < cfg.n_ratings:
        i, j = sorted(rng.choice(n, size=2, replace=False).tolist())
        if (i, j) not in chosen:
            chosen.add((i, j))
            pairs.append((i, j))
    d = np.array([np.abs(latent[i] - latent[j]).sum() for i, j in pairs])
    d = d / d.std()
    noisy = d + cfg.rating_noise * rng.normal(size=d.size)
    edges = np.quantile(noisy, [0.2, 0.4, 0.6, 0.8])
    scores = 5 - np.searchsorted(edges, noisy, side="right")  # closer pairs score higher
    return [PairRating(ids[i], ids[j], int(s)) for (i, j), s in zip(pairs, scores)]


def synth_corpus(cfg: SynthConfig = SynthConfig()) -> Dataset:
    """Build a synthetic corpus in memory."""
    design = _design(cfg.latent_dims)
    meta = np.random.default_rng([cfg.seed, _RATING_STREAM + 1])
    years = meta.uniform(cfg.first_year, cfg.last_year, size=cfg.n_tracks)
    zt = meta.normal(size=(cfg.n_tracks, cfg.latent_dims))
    zm = meta.normal(size=(cfg.n_tracks, cfg.latent_dims))
    artists, titles = _names(cfg, meta)
    ids = [f"t{i:05d}" for i in range(cfg.n_tracks)]
    tracks, features = [], []
    for i, tid in enumerate(ids):
        year = date_to_year(year_to_date(years[i]))
        tracks.append(TrackRecord(tid, artists[i], titles[i], year))
        for name, frames in _track_frames(cfg, design, i, year, zt[i], zm[i]).items():
            features.append(FeatureSequence(tid, name, frames, cfg.frame_rate))
    ratings = _ratings(cfg, ids, np.hstack([zt, zm]))
    return Dataset.build(tracks, features, ratings)


def write_corpus(ds: Dataset, out_dir: str | Path) -> Path:
    """Write ``ds`` as a manifest-described corpus; returns the manifest path.

    Frames go to ``tracks/<track_id>/<feature>.csv``. Numbers use a fixed
    format so identical datasets give identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "tracks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_HEADER)
        for rec in ds.tracks.values():
            w.writerow((rec.track_id, rec.artist, rec.title, year_to_date(rec.chart_entry_date).isoformat()))
    with open(out / "features.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_HEADER)
        for (tid, name), seq in ds.features.items():
            rel = Path("tracks") / tid / f"{name}.csv"
            (out / rel).parent.mkdir(parents=True, exist_ok=True)
            np.savetxt(out / rel, seq.frames, fmt="%.9g", delimiter=",")
            rate = "variable" if seq.frame_rate is None else f"{seq.frame_rate:g}"
            w.writerow((tid, name, rel.as_posix(), rate, seq.h))
    lines = ["tracks=tracks.csv", "features=features.csv"]
    if ds.ratings:
        with open(out / "ratings.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RATING_HEADER)
            for r in ds.ratings:
                w.writerow((r.track_i, r.track_j, r.score))
        lines.append("ratings=ratings.csv")
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    logger.info("wrote %d tracks to %s", len(ds.tracks), out)
    return manifest
