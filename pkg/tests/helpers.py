"""Small corpus builders shared by the tests."""

from __future__ import annotations

import numpy as np

from seqcomp.data import Dataset, FeatureSequence, PairRating, TrackRecord


def toy_dataset(frames_by_track: dict, years=None, artists=None, titles=None, ratings=(), rate=40.0) -> Dataset:
    """``frames_by_track``: ``{track_id: {feature: frames}}``."""
    tracks, feats = [], []
    for i, (tid, per) in enumerate(sorted(frames_by_track.items())):
        year = 1980.0 + i if years is None else years[i]
        artist = f"artist {i}" if artists is None else artists[i]
        title = f"title {i}" if titles is None else titles[i]
        tracks.append(TrackRecord(tid, artist, title, year))
        for name, frames in per.items():
            feats.append(FeatureSequence(tid, name, frames, rate))
    return Dataset.build(tracks, feats, [PairRating(*r) for r in ratings])


def metadata_only(n: int, n_artists: int, seed: int = 0, title_dup: float = 0.05) -> Dataset:
    """Corpus with shared artists and some repeated titles and one frame per track."""
    rng = np.random.default_rng(seed)
    tracks, feats = [], []
    titles: list[str] = []
    for i in range(n):
        if titles and rng.random() < title_dup:
            title = titles[int(rng.integers(len(titles)))]
        else:
            title = f"Song {i}"
        titles.append(title)
        tid = f"t{i:04d}"
        tracks.append(TrackRecord(tid, f"Artist {rng.integers(n_artists)}", title, 1960.0 + 50 * rng.random()))
        feats.append(FeatureSequence(tid, "x", np.zeros(1)))
    return Dataset.build(tracks, feats)


ACCEPTANCE_LINES: list[tuple[int, str]] = []


def verdict(number: int, title: str, ok: bool, detail: str) -> bool:
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    line = f"{'PASS' if ok else 'FAIL'} [{number:2d}] {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok

