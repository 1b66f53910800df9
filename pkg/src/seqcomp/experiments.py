"""End-to-end pipelines: descriptors, similarity-rating prediction and
song-year prediction, with their report files."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import metrics as M
from .data import Dataset, dedup_split, impute_outliers, load_dataset, split_ratings
from .descriptors import DescriptorConfig, DescriptorSet, compute_descriptors
from .distances import SET_PARTS, DistanceTable, distance_table, set_columns
from .errors import ValidationError
from .regress import (
    NU_GRID,
    YEAR_RANGE,
    eta_grid,
    fit_tuned,
    normalised_magnitudes,
    predict_rating,
    predict_year,
    standardise,
    tune,
    tune_nu,
    window_group,
)

logger = logging.getLogger(__name__)

YEAR_SETS = ("fmd", "fcd", "combined")
FIVE_LABELS = ("1", "2", "3", "4", "5")
FOUR_LABELS = (M.MERGED, "3", "4", "5")


@dataclass
class ExperimentConfig:
    """Settings shared by the pipeline commands.

    Read from ``key=value`` lines; list values are comma separated.
    ``nu`` of ``None`` means it is tuned over ``nu_grid``.
    """

    manifest: str = ""
    seed: int = 0
    jobs: int = 1
    # descriptors
    lambdas: tuple = (3, 4, 5)
    factors: tuple = (1, 2, 4, 8)
    order: int = 5
    downsample: str = "mean"
    binning: str = "track"
    # distances
    kld_log: str = "plus1"
    symmetrise: bool = False
    embed_dim: int = 12
    # similarity
    sets: tuple = (1, 2, 3, 4, 5, 6)
    scale: str = "five"
    statistic: str = "tau_b"
    rating_train_fraction: float = 0.6
    # year
    year_sets: tuple = YEAR_SETS
    year_train_fraction: float = 0.7
    window_days: tuple = (0,)
    impute_k: int = 5
    outlier_sd: float = 10.0
    # model fitting
    standardise: str = "std"
    nu: float | None = None
    nu_grid: tuple = NU_GRID
    n_eta: int = 50
    eta_ratio: float = 1e-4
    n_folds: int = 5
    max_iter: int = 200
    # reporting
    bootstrap: int = 1000
    level: float = 0.95

    def __post_init__(self):
        if self.scale not in ("five", "four"):
            raise ValidationError("scale must be 'five' or 'four'")
        if self.statistic not in ("tau_b", "rho_s", "ba"):
            raise ValidationError("statistic must be tau_b, rho_s or ba")
        if any(s not in SET_PARTS for s in self.sets):
            raise ValidationError(f"descriptor sets must be among {sorted(SET_PARTS)}")
        if any(s not in YEAR_SETS for s in self.year_sets):
            raise ValidationError(f"year sets must be among {YEAR_SETS}")
        if any(w < 0 for w in self.window_days):
            raise ValidationError("window_days must be >= 0 (0 = no windowing)")
        if self.standardise not in ("std", "variance"):
            raise ValidationError("standardise must be 'std' or 'variance'")

    @property
    def n_classes(self) -> int:
        return 5 if self.scale == "five" else 4

    def descriptor_config(self) -> DescriptorConfig:
        return DescriptorConfig(
            lambdas=tuple(self.lambdas),
            factors=tuple(self.factors),
            order=self.order,
            downsample_method=self.downsample,
            binning=self.binning,
        )

    def as_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v, tuple) else v) for f in fields(self) for v in [getattr(self, f.name)]}

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "ExperimentConfig":
        defaults = cls()
        kwargs: dict[str, Any] = {}
        for key, raw in values.items():
            if not hasattr(defaults, key):
                raise ValidationError(f"unknown configuration key {key!r}")
            kwargs[key] = _coerce(key, raw, getattr(defaults, key))
        return cls(**kwargs)

    @classmethod
    def read(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        cfg = cls.from_mapping(read_key_values(path))
        base = Path(path).parent
        if cfg.manifest and not Path(cfg.manifest).is_absolute():
            cfg = replace(cfg, manifest=str((base / cfg.manifest).resolve()))
        return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


def read_key_values(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: missing configuration file")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        out[key.strip()] = value.strip()
    return out


def _coerce(key: str, raw: str, default):
    try:
        if key == "nu":
            return None if raw.lower() in ("", "none", "tune") else float(raw)
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, tuple):
            kind = type(default[0]) if default else str
            return tuple(kind(p.strip()) for p in raw.split(",") if p.strip())
        return type(default)(raw)
    except ValueError:
        raise ValidationError(f"bad value {raw!r} for {key}") from None


# ---------------------------------------------------------------- output


def _clean(x):
    """JSON-ready copy with floats at fixed precision and NaN as null."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return float(f"{x:.10g}")
    return x


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- descriptors


def run_descriptors(ds: Dataset, cfg: ExperimentConfig, out_dir: str | Path | None = None) -> DescriptorSet:
    descriptors = compute_descriptors(ds, cfg.descriptor_config(), jobs=cfg.jobs)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = descriptors.write_csv(out / "descriptors.csv")
        logger.info("wrote %d descriptor rows", rows)
    return descriptors


# ---------------------------------------------------------------- similarity


def _coefficients(names: list[str], coef) -> dict:
    mags, all_zero = normalised_magnitudes(coef)
    return {"names": names, "magnitude": mags, "all_zero": all_zero}


def _rank_statistics(pred, obs, cfg: ExperimentConfig, seed: int) -> dict:
    out = {}
    for name in ("tau_b", "rho_s", "ba"):
        try:
            res = M.bootstrap(name, pred, obs, B=cfg.bootstrap, level=cfg.level, seed=seed)
            out[name] = res.as_dict()
        except M.UndefinedStatisticError as exc:
            logger.warning("%s undefined on the test set: %s", name, exc)
            out[name] = {"statistic": name, "value": None, "error": str(exc)}
    return out


@dataclass
class SimilarityResult:
    report: dict
    models: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)


def run_similarity(
    ds: Dataset,
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    descriptors: DescriptorSet | None = None,
) -> SimilarityResult:
    """Predict pairwise ratings from descriptor distances.

    Ratings are split 60/40 (seeded); for every configured descriptor set
    the training distances are standardised, ``eta`` is tuned by an inner
    hold-out, and the model is scored on the test ratings. ``nu`` is tuned
    once on the combined FCD+FMD set (set 6) unless fixed.
    """
    K = cfg.n_classes
    if len(ds.ratings) < 10 * K:
        raise ValidationError(f"need at least {10 * K} ratings, found {len(ds.ratings)}")
    if descriptors is None:
        descriptors = run_descriptors(ds, cfg, out_dir)
    sets = sorted(set(cfg.sets) | ({6} if cfg.nu is None else set()))
    parts = sorted({p for s in sets for p in SET_PARTS[s]})

    refs = {c.partition(":")[2] for p in parts if p != 2 for c in set_columns(descriptors, p)}
    complete = set(descriptors.complete_tracks(sorted(refs)))
    ratings = [r for r in ds.ratings if r.track_i in complete and r.track_j in complete]
    if len(ratings) < len(ds.ratings):
        logger.warning("dropped %d ratings with incomplete descriptors", len(ds.ratings) - len(ratings))
    train, test = split_ratings(ratings, cfg.rating_train_fraction, cfg.seed)
    labels = FIVE_LABELS if K == 5 else FOUR_LABELS

    def codes(rs):
        s = np.array([r.score for r in rs])
        return s if K == 5 else M.four_point_codes(s)

    y_train, y_test = codes(train), codes(test)
    pairs_train = [(r.track_i, r.track_j) for r in train]
    pairs_test = [(r.track_i, r.track_j) for r in test]

    tables = []
    for p in parts:
        kw = dict(kld_log=cfg.kld_log, symmetrise=cfg.symmetrise, embed_dim=cfg.embed_dim)
        tables.append(
            (
                distance_table(pairs_train, descriptors, p, ds, **kw),
                distance_table(pairs_test, descriptors, p, ds, **kw),
            )
        )
    names = [n for tr, _ in tables for n in tr.names]
    D_train = np.hstack([tr.values for tr, _ in tables])
    D_test = np.hstack([te.values for _, te in tables])
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        DistanceTable(pairs_train + pairs_test, names, np.vstack([D_train, D_test])).write_csv(
            Path(out_dir) / "distances.csv"
        )
    col = {n: i for i, n in enumerate(names)}
    classes = tuple(range(1, K + 1))

    def columns(s):
        return [col[n] for n in set_columns(descriptors, s)]

    nu_info: dict[str, Any] = {"fixed": cfg.nu is not None}
    if cfg.nu is None:
        idx = columns(6)
        Z, _ = standardise(D_train[:, idx], scale=cfg.standardise)
        nu, traces = tune_nu(
            "multinomial", Z, y_train, cfg.nu_grid, seed=cfg.seed, statistic=cfg.statistic,
            classes=classes, scale=cfg.standardise, max_iter=cfg.max_iter,
        )
        nu_info.update(value=nu, grid=list(cfg.nu_grid), best=[t.best_score for t in traces])
    else:
        nu = cfg.nu
        nu_info["value"] = nu

    results: dict[str, Any] = {}
    models = {}
    for s in cfg.sets:
        idx = columns(s)
        set_names = [names[i] for i in idx]
        Z, stats = standardise(D_train[:, idx], scale=cfg.standardise)
        grid = eta_grid("multinomial", Z, y_train, nu, cfg.n_eta, cfg.eta_ratio, classes)
        trace = tune(
            "multinomial", Z, y_train, nu, grid, "holdout", cfg.seed, statistic=cfg.statistic,
            classes=classes, scale=cfg.standardise, max_iter=cfg.max_iter,
        )
        model = fit_tuned("multinomial", Z, y_train, trace, classes=classes, stats=stats, names=set_names)
        pred = predict_rating(model, D_test[:, idx])
        conf = M.confusion_matrix(y_test, pred, classes)
        stats_out = _rank_statistics(pred, y_test, cfg, cfg.seed)
        results[f"set{s}"] = {
            "n_columns": len(idx),
            "metrics": stats_out,
            "confusion": {"rows": "annotated", "cols": "predicted", "labels": list(labels), "counts": conf},
            "coefficients": _coefficients(set_names, model.beta),
            "tuning": trace.as_dict(),
        }
        models[f"set{s}"] = {
            "names": set_names,
            "beta": model.beta,
            "gamma": model.gamma,
            "classes": list(labels),
            "eta": model.eta,
            "nu": model.nu,
            "standardisation": stats.as_dict(),
            "tuning": trace.as_dict(),
            "seed": cfg.seed,
        }
        logger.info("set %d: tau_b=%s", s, stats_out["tau_b"].get("value"))
    report = {
        "task": "similarity",
        "config": cfg.as_dict(),
        "n_ratings": {"train": len(train), "test": len(test), "dropped": len(ds.ratings) - len(ratings)},
        "nu": nu_info,
        "sets": results,
    }
    if out_dir is not None:
        out = Path(out_dir)
        write_json(out / "model.json", models)
        write_json(out / "metrics.json", {k: v["metrics"] for k, v in results.items()})
        write_json(out / "report.json", report)
    return SimilarityResult(report, models, {"names": names, "train": D_train, "test": D_test})


# ---------------------------------------------------------------- year


def _year_columns(descriptors: DescriptorSet, which: str) -> list[str]:
    if which == "fmd":
        return descriptors.names("fmd")
    if which == "fcd":
        return descriptors.names("fcd")
    return descriptors.names("fcd") + descriptors.names("fmd")


def _year_model(Xtr, ytr, nu, cfg: ExperimentConfig, labels):
    Z, stats = standardise(Xtr, scale=cfg.standardise)
    grid = eta_grid("linear", Z, ytr, nu, cfg.n_eta, cfg.eta_ratio)
    trace = tune("linear", Z, ytr, nu, grid, "kfold", cfg.seed, n_folds=cfg.n_folds, scale=cfg.standardise)
    model = fit_tuned("linear", Z, ytr, trace, stats=stats, names=labels)
    model.clamp = YEAR_RANGE
    return model, trace


def _error_statistics(pred, obs, cfg: ExperimentConfig) -> dict:
    return {
        name: M.bootstrap(name, pred, obs, B=cfg.bootstrap, level=cfg.level, seed=cfg.seed).as_dict()
        for name in ("mae", "rmse")
    }


def run_year(
    ds: Dataset,
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    descriptors: DescriptorSet | None = None,
) -> dict:
    """Predict chart-entry years from track descriptors.

    Tracks are split so that no artist or title spans both subsets;
    outliers in the training rows are imputed; ``eta`` is tuned by k-fold
    cross-validation on the training rows; predictions are clamped to the
    valid year range. With ``window_days > 0`` descriptor rows are averaged
    over chart-date windows (separately for train and test) and the
    targets become window centres.
    """
    if descriptors is None:
        descriptors = run_descriptors(ds, cfg, out_dir)
    cols_all = _year_columns(descriptors, "combined")
    complete = descriptors.complete_tracks(cols_all)
    if len(complete) < 10 * cfg.n_folds:
        raise ValidationError(f"only {len(complete)} tracks with complete descriptors")
    if len(complete) < len(ds.tracks):
        logger.warning("dropped %d tracks with incomplete descriptors", len(ds.tracks) - len(complete))
    train_ds, test_ds = dedup_split(ds.subset(complete), cfg.year_train_fraction, cfg.seed)
    tr_ids, te_ids = train_ds.track_ids, test_ds.track_ids
    y_tr, y_te = train_ds.years(), test_ds.years()

    X_tr_all, labels_all = descriptors.matrix(cols_all, tr_ids)
    X_te_all, _ = descriptors.matrix(cols_all, te_ids)
    X_tr_all = impute_outliers(X_tr_all, cfg.impute_k, n_sd=cfg.outlier_sd)
    label_idx = {n: i for i, n in enumerate(labels_all)}

    def select(which):
        names = _year_columns(descriptors, which)
        prefixes = tuple(n + ":" for n in names)
        idx = [i for i, lab in enumerate(labels_all) if lab.startswith(prefixes)]
        return idx, [labels_all[i] for i in idx]

    base = float(np.clip(y_tr.mean(), *YEAR_RANGE))
    baseline = _error_statistics(np.full(y_te.size, base), y_te, cfg)

    nu_info: dict[str, Any] = {"fixed": cfg.nu is not None}
    if cfg.nu is None:
        idx, _ = select("combined")
        Z, _ = standardise(X_tr_all[:, idx], scale=cfg.standardise)
        nu, traces = tune_nu("linear", Z, y_tr, cfg.nu_grid, seed=cfg.seed, n_folds=cfg.n_folds, scale=cfg.standardise)
        nu_info.update(value=nu, grid=list(cfg.nu_grid), best=[t.best_score for t in traces])
    else:
        nu = cfg.nu
        nu_info["value"] = nu

    results: dict[str, Any] = {}
    models = {}
    for which in cfg.year_sets:
        idx, labels = select(which)
        for w in cfg.window_days:
            key = which if w == 0 else f"{which}@{w}d"
            if w == 0:
                Xtr, ytr, Xte, yte = X_tr_all[:, idx], y_tr, X_te_all[:, idx], y_te
            else:
                gtr = window_group(tr_ids, y_tr, X_tr_all[:, idx], w)
                gte = window_group(te_ids, y_te, X_te_all[:, idx], w)
                Xtr, ytr, Xte, yte = gtr.X, gtr.centers, gte.X, gte.centers
            model, trace = _year_model(Xtr, ytr, nu, cfg, labels)
            pred = predict_year(model, Xte)
            results[key] = {
                "window_days": w,
                "n_train": int(ytr.size),
                "n_test": int(yte.size),
                "metrics": _error_statistics(pred, yte, cfg),
                "coefficients": _coefficients(labels, model.theta),
                "tuning": trace.as_dict(),
            }
            models[key] = {
                "names": labels,
                "theta": model.theta,
                "alpha": model.alpha,
                "eta": model.eta,
                "nu": model.nu,
                "clamp": list(model.clamp),
                "standardisation": model.stats.as_dict(),
                "tuning": trace.as_dict(),
                "seed": cfg.seed,
            }
            logger.info("year %s: MAE=%.3f", key, results[key]["metrics"]["mae"]["value"])
    report = {
        "task": "year",
        "config": cfg.as_dict(),
        "n_tracks": {"train": len(tr_ids), "test": len(te_ids), "dropped": len(ds.tracks) - len(complete)},
        "baseline": {"prediction": base, "metrics": baseline},
        "nu": nu_info,
        "sets": results,
    }
    if out_dir is not None:
        out = Path(out_dir)
        write_json(out / "model.json", models)
        write_json(
            out / "metrics.json",
            {"baseline": baseline, **{k: v["metrics"] for k, v in results.items()}},
        )
        write_json(out / "report.json", report)
    return report


def load(cfg: ExperimentConfig) -> Dataset:
    if not cfg.manifest:
        raise ValidationError("configuration lacks 'manifest='")
    return load_dataset(cfg.manifest)
