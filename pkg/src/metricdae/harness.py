"""Cross-validated experiments: training the DAE variants and evaluating their embeddings."""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from sklearn.model_selection import StratifiedKFold

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ._validation import minmax_normalize
from .dae import load_checkpoint, save_checkpoint
from .data import CLASS_CODES, LabeledDataset, load_manifest, load_manifest_datasets
from .estimator import MetricDAE
from .evaluate import LinearSVC, balanced_accuracy, ols_distance_analysis, ols_label_analysis
from .preprocess import Scaler, TransferSplit, remove_outliers, transfer_standardize

log = logging.getLogger(__name__)

# mode -> supervising label
MODES = {
    "unsupervised": None,
    "metric-act": "activation",
    "metric-val": "valence",
    "metric-act-supervised": "activation",
    "metric-val-supervised": "valence",
}
LABELS = ("activation", "valence")
FOUR_CLASS = (0, 1, 2, 3)   # N-S-H-A
THREE_CLASS = (0, 1, 3)     # N-S-A


class ExperimentError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    manifest: str | None = None
    mode: str = "unsupervised"
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    metric_weight: float = 1.0
    noise_std: float = 1.0
    mask_fraction: float = 1.0
    detach_slope: bool = False
    folds: int | None = None
    seed: int | None = None
    latent_dim: int = 2
    hidden_layers: tuple = ()
    outlier_threshold: float = 10.0
    transfer_fit_fraction: float = 0.2
    svc_C: float = 1.0

    def __post_init__(self):
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        if self.mode not in MODES:
            raise ExperimentError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        for name in ("epochs", "batch_size", "latent_dim"):
            if int(getattr(self, name)) < 1:
                raise ExperimentError(f"{name} must be a positive integer")
        for name in ("learning_rate", "outlier_threshold", "svc_C"):
            if not getattr(self, name) > 0:
                raise ExperimentError(f"{name} must be > 0")
        if self.metric_weight < 0 or self.noise_std < 0:
            raise ExperimentError("metric_weight and noise_std must be >= 0")
        if self.folds is not None and self.folds < 2:
            raise ExperimentError("folds must be >= 2")

    @property
    def supervising_label(self) -> str | None:
        return MODES[self.mode]

    @property
    def supervised_reference(self) -> bool:
        return self.mode.endswith("-supervised")

    @property
    def method(self) -> str:
        """Name of the objective actually optimized: a zero metric weight is the plain DAE."""
        if self.metric_weight == 0 and not self.supervised_reference:
            return "unsupervised"
        return self.mode

    def estimator(self, seed) -> MetricDAE:
        return MetricDAE(latent_dim=self.latent_dim, hidden_layers=self.hidden_layers,
                         noise_std=self.noise_std, mask_fraction=self.mask_fraction,
                         metric_weight=self.metric_weight, detach_slope=self.detach_slope,
                         epochs=self.epochs, batch_size=self.batch_size,
                         learning_rate=self.learning_rate, random_state=seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_layers"] = list(self.hidden_layers)
        return d


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a TOML config (keys at top level or under ``[experiment]``).

    A relative ``manifest`` path is resolved against the config file.
    """
    path = Path(path)
    doc = tomllib.loads(path.read_text(encoding="utf-8"))
    doc = doc.get("experiment", doc)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ExperimentError(f"{path}: unknown config key(s) {', '.join(unknown)}")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if doc.get("manifest") and not Path(doc["manifest"]).is_absolute():
        doc["manifest"] = str(path.parent / doc["manifest"])
    return ExperimentConfig(**doc)


# -- data preparation --------------------------------------------------------

@dataclass
class TransferData:
    dataset: LabeledDataset      # evaluation part, standardized by ``split.scaler``
    fit_dataset: LabeledDataset  # raw 20% part used only for the scaler
    split: TransferSplit
    n_outliers: int


@dataclass
class PreparedData:
    train: LabeledDataset
    n_train_outliers: int
    transfers: list[TransferData]
    folds: list[tuple[np.ndarray, np.ndarray]]
    seed: int


def _drop_outliers(ds: LabeledDataset, threshold: float) -> tuple[LabeledDataset, int]:
    _, removed = remove_outliers(ds.features, threshold)
    keep = np.setdiff1d(np.arange(ds.n), removed)
    return ds.subset(keep), removed.size


def prepare(datasets: list[LabeledDataset], config: ExperimentConfig, seed: int,
            folds: int) -> PreparedData:
    trains = [d for d in datasets if d.role == "train"]
    if len(trains) != 1:
        raise ExperimentError(f"need exactly one train dataset, got {len(trains)}")
    train, n_out = _drop_outliers(trains[0], config.outlier_threshold)

    label = config.supervising_label
    if label is not None and train.label(label) is None:
        raise ExperimentError(f"mode {config.mode} needs {label} labels but dataset "
                              f"{train.name!r} has none")

    transfers = []
    for j, ds in enumerate(d for d in datasets if d.role == "transfer"):
        ds, n_t = _drop_outliers(ds, config.outlier_threshold)
        split = transfer_standardize(ds.features, config.transfer_fit_fraction,
                                     seed=np.random.SeedSequence(seed, spawn_key=(10_000 + j,)),
                                     groups=ds.class_ids)
        ev = ds.subset(split.eval_index)
        ev.features = split.eval_part
        transfers.append(TransferData(ev, ds.subset(split.fit_index), split, n_t))
    if config.supervised_reference and not any(t.dataset.label(label) is not None for t in transfers):
        raise ExperimentError(f"mode {config.mode} needs a transfer dataset with {label} labels")

    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    plan = [(tr, va) for tr, va in skf.split(train.features, train.class_ids)]
    for k, (_, va) in enumerate(plan):
        if va.size < 5:
            raise ExperimentError(f"fold {k} has only {va.size} validation samples")
    return PreparedData(train, n_out, transfers, plan, seed)


# -- per-fold training and evaluation ---------------------------------------

def fold_seed(seed: int, fold: int, transfer: int | None = None) -> np.random.SeedSequence:
    key = (fold,) if transfer is None else (fold, transfer + 1)
    return np.random.SeedSequence(seed, spawn_key=key)


@dataclass
class FoldModel:
    estimator: MetricDAE
    scaler: Scaler
    target: str | None = None   # transfer dataset name for supervised-reference models

    def checkpoint_extra(self, fold: int) -> dict:
        return {"fold": fold, "target": self.target,
                "scaler_mean": self.scaler.mean_.tolist(),
                "scaler_scale": self.scaler.scale_.tolist()}


def _training_labels(config: ExperimentConfig, train_part: LabeledDataset,
                     extra: TransferData | None = None):
    label = config.supervising_label
    if label is None or config.metric_weight == 0:
        return None
    y = train_part.label(label)
    if np.ptp(y) == 0:
        raise ExperimentError(f"{label} labels are constant within a training fold")
    y = minmax_normalize(y)
    if extra is not None:
        y = np.concatenate([y, minmax_normalize(extra.fit_dataset.label(label))])
    return y


def train_fold(data: PreparedData, config: ExperimentConfig, fold: int) -> list[FoldModel]:
    tr_idx, _ = data.folds[fold]
    part = data.train.subset(tr_idx)
    scaler = Scaler().fit(part.features)
    xa = scaler.transform(part.features)
    if not config.supervised_reference:
        est = config.estimator(fold_seed(data.seed, fold))
        est.fit(xa, _training_labels(config, part))
        return [FoldModel(est, scaler)]
    models = []
    label = config.supervising_label
    for j, t in enumerate(data.transfers):
        if t.dataset.label(label) is None:
            continue
        x = np.vstack([xa, t.split.scaler.transform(t.fit_dataset.features)])
        est = config.estimator(fold_seed(data.seed, fold, j))
        est.fit(x, _training_labels(config, part, t))
        models.append(FoldModel(est, scaler, target=t.dataset.name))
    return models


def _ols_entry(res) -> dict:
    if res.degenerate:
        return {"r2_adjusted": None, "p_value": None, "significant": False, "degenerate": True}
    return {"r2_adjusted": res.r2_adjusted, "p_value": res.p_value,
            "significant": res.significant, "degenerate": False}


def class_subsets(present) -> dict[str, tuple[int, ...]]:
    """3- and 4-class evaluation subsets restricted to the classes a dataset has."""
    present = set(int(c) for c in present)
    out = {}
    for base in (THREE_CLASS, FOUR_CLASS):
        sub = tuple(c for c in base if c in present)
        if len(sub) >= 2:
            out["-".join(CLASS_CODES[c] for c in sub)] = sub
    return out


def _standardized_svc(z_train, y_train, classes, C, seed):
    mask = np.isin(y_train, classes)
    scaler = Scaler().fit(z_train[mask])
    svc = LinearSVC(C=C, random_state=seed).fit(scaler.transform(z_train[mask]), y_train[mask])
    return scaler, svc


def classify(z_train, y_train, targets: dict[str, tuple[np.ndarray, np.ndarray]], C: float,
             seed: int) -> dict[str, dict[str, float]]:
    """Balanced accuracy per target dataset and class subset for an SVC trained on
    ``(z_train, y_train)``. SVC inputs are standardized with training statistics."""
    cache = {}
    out = {}
    for name, (z, y) in targets.items():
        out[name] = {}
        for subset_name, classes in class_subsets(np.unique(y)).items():
            if classes not in cache:
                if np.unique(y_train[np.isin(y_train, classes)]).size < 2:
                    continue
                cache[classes] = _standardized_svc(z_train, y_train, classes, C, seed)
            scaler, svc = cache[classes]
            mask = np.isin(y, classes)
            out[name][subset_name] = balanced_accuracy(y[mask], svc.predict(scaler.transform(z[mask])))
    return out


def evaluate_fold(data: PreparedData, config: ExperimentConfig, fold: int,
                  models: list[FoldModel]) -> dict:
    tr_idx, va_idx = data.folds[fold]
    part = data.train.subset(tr_idx)
    val = data.train.subset(va_idx)
    result = {"fold": fold, "datasets": {}, "training": []}
    for fm in models:
        est = fm.estimator
        last = est.history_[-1] if getattr(est, "history_", None) else None
        result["training"].append({
            "target": fm.target,
            "final_rec": None if last is None else last.rec,
            "final_metric": None if last is None else last.metric,
            "final_p_mean": None if last is None or math.isnan(last.p_mean) else last.p_mean,
            "skipped_batches": None if last is None else sum(e.skipped for e in est.history_),
        })
        z_train = est.transform(fm.scaler.transform(part.features))
        sets = {}
        if fm.target is None:
            sets[data.train.name] = (est.transform(fm.scaler.transform(val.features)), val)
        for t in data.transfers:
            if fm.target is None or fm.target == t.dataset.name:
                sets[t.dataset.name] = (est.transform(t.dataset.features), t.dataset)
        accs = classify(z_train, part.class_ids,
                        {n: (z, ds.class_ids) for n, (z, ds) in sets.items()},
                        config.svc_C, data.seed)
        for name, (z, ds) in sets.items():
            entry = {"n": ds.n, "balanced_accuracy": accs[name]}
            for label in LABELS:
                y = ds.label(label)
                key = label[:3]
                if y is None:
                    entry[f"r2_{key}"] = None
                    entry[f"dist_r2_{key}"] = None
                    continue
                entry[f"r2_{key}"] = _ols_entry(ols_label_analysis(z, y))
                entry[f"dist_r2_{key}"] = _ols_entry(ols_distance_analysis(z, y))
            result["datasets"][name] = entry
    return result


# -- aggregation -------------------------------------------------------------

def _stats(values: list[float]) -> dict:
    return {"mean": float(np.mean(values)), "std": float(np.std(values))}


def aggregate(fold_results: list[dict], n_folds: int) -> dict:
    """Mean and (population) std over folds per dataset and quantity.

    An R^2 entry carries ``insignificant = True`` if any fold's F-test p-value
    exceeds 0.05; it is None when any fold lacks a value.
    """
    names = []
    for fr in fold_results:
        names.extend(n for n in fr["datasets"] if n not in names)
    summary = {}
    for name in names:
        entries = [fr["datasets"][name] for fr in fold_results if name in fr["datasets"]]
        out = {}
        for key in ("r2_act", "r2_val", "dist_r2_act", "dist_r2_val"):
            vals = [e.get(key) for e in entries]
            if len(vals) != n_folds or any(v is None or v["degenerate"] for v in vals):
                out[key] = None
                continue
            s = _stats([v["r2_adjusted"] for v in vals])
            s["insignificant"] = any(not v["significant"] for v in vals)
            out[key] = s
        accs = {}
        subsets = []
        for e in entries:
            subsets.extend(s for s in e["balanced_accuracy"] if s not in subsets)
        for s in subsets:
            vals = [e["balanced_accuracy"].get(s) for e in entries]
            if len(vals) == n_folds and all(v is not None for v in vals):
                accs[s] = _stats(vals)
        out["balanced_accuracy"] = accs
        summary[name] = out
    return summary


@dataclass
class EvalReport:
    method: str
    seed: int
    n_folds: int
    datasets: list[dict]
    folds: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"method": self.method, "seed": self.seed, "n_folds": self.n_folds,
                "datasets": self.datasets, "folds": self.folds, "summary": self.summary}


# Labels keep their corpus scale on disk; the metric loss sees them min-max scaled
# to [0, 1] per training set. Adjusted R^2 is invariant to that affine map.
LABEL_NORMALIZATION = "minmax-01"


def _label_info(ds: LabeledDataset) -> dict:
    labels = [l for l in LABELS if ds.label(l) is not None]
    return {"labels": labels,
            "label_range": {l: [float(ds.label(l).min()), float(ds.label(l).max())] for l in labels},
            "label_normalization": LABEL_NORMALIZATION}


def _dataset_info(data: PreparedData) -> list[dict]:
    info = [{"name": data.train.name, "role": "train", "n": data.train.n,
             "outliers_removed": data.n_train_outliers, **_label_info(data.train)}]
    for t in data.transfers:
        info.append({"name": t.dataset.name, "role": "transfer", "n": t.dataset.n,
                     "n_scaler_fit": t.fit_dataset.n, "outliers_removed": t.n_outliers,
                     **_label_info(t.dataset)})
    return info


def resolve_datasets(config: ExperimentConfig, datasets=None) -> tuple[list[LabeledDataset], int, int]:
    seed, folds = config.seed, config.folds
    if datasets is None:
        if config.manifest is None:
            raise ExperimentError("config has no manifest and no datasets were given")
        manifest = load_manifest(config.manifest)
        datasets = load_manifest_datasets(manifest)
        seed = manifest.seed if seed is None else seed
        folds = manifest.folds if folds is None else folds
    return datasets, (0 if seed is None else seed), (5 if folds is None else folds)


def _checkpoint_name(fold: int, target: str | None) -> str:
    return f"fold{fold}.json" if target is None else f"fold{fold}-{target}.json"


def run_experiment(config: ExperimentConfig, datasets: list[LabeledDataset] | None = None,
                   checkpoint_dir=None, from_checkpoints: bool = False) -> EvalReport:
    """Run (or, with ``from_checkpoints``, re-evaluate) every fold and aggregate."""
    datasets, seed, n_folds = resolve_datasets(config, datasets)
    data = prepare(datasets, config, seed, n_folds)
    fold_results = []
    for k in range(n_folds):
        if from_checkpoints:
            models = load_fold_models(checkpoint_dir, k, config, data)
        else:
            models = train_fold(data, config, k)
            if checkpoint_dir is not None:
                Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
                for fm in models:
                    save_checkpoint(Path(checkpoint_dir) / _checkpoint_name(k, fm.target),
                                    fm.estimator.model_, fm.checkpoint_extra(k))
        fold_results.append(evaluate_fold(data, config, k, models))
        log.info("fold %d/%d done", k + 1, n_folds)
    return EvalReport(config.method, seed, n_folds, _dataset_info(data), fold_results,
                      aggregate(fold_results, n_folds))


def load_fold_models(checkpoint_dir, fold: int, config: ExperimentConfig,
                     data: PreparedData) -> list[FoldModel]:
    if checkpoint_dir is None:
        raise ExperimentError("no checkpoint directory given")
    targets = [None]
    if config.supervised_reference:
        label = config.supervising_label
        targets = [t.dataset.name for t in data.transfers if t.dataset.label(label) is not None]
    models = []
    for target in targets:
        path = Path(checkpoint_dir) / _checkpoint_name(fold, target)
        if not path.exists():
            raise ExperimentError(f"missing checkpoint {path}; run `train` first")
        model, extra = load_checkpoint(path)
        est = config.estimator(None)
        est.model_ = model
        est.n_features_in_ = model.n_features
        est.history_ = []
        scaler = Scaler()
        scaler.mean_ = np.array(extra["scaler_mean"])
        scaler.scale_ = np.array(extra["scaler_scale"])
        scaler.n_features_in_ = scaler.mean_.size
        models.append(FoldModel(est, scaler, target))
    return models


# -- raw-feature reference ---------------------------------------------------

def run_classification(config: ExperimentConfig, source: str = "raw",
                       datasets: list[LabeledDataset] | None = None) -> EvalReport:
    """Classification-only report.

    ``source="raw"`` is the supervised SVC reference: within every dataset, a
    stratified k-fold split trains a linear SVC on standardized raw features.
    ``source="embedding"`` trains the configured DAE and reports only the
    embedding classification accuracies.
    """
    if source == "embedding":
        rep = run_experiment(config, datasets)
        for fr in rep.folds:
            for entry in fr["datasets"].values():
                for key in ("r2_act", "r2_val", "dist_r2_act", "dist_r2_val"):
                    entry[key] = None
        rep.summary = aggregate(rep.folds, rep.n_folds)
        return rep
    if source != "raw":
        raise ExperimentError(f"unknown feature source {source!r}")

    datasets, seed, n_folds = resolve_datasets(config, datasets)
    cleaned = [_drop_outliers(ds, config.outlier_threshold) for ds in datasets]
    fold_results = [{"fold": k, "datasets": {}, "training": []} for k in range(n_folds)]
    info = []
    for ds, n_out in cleaned:
        info.append({"name": ds.name, "role": ds.role, "n": ds.n, "outliers_removed": n_out,
                     **_label_info(ds)})
        skf = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=seed)
        for k, (tr, va) in enumerate(skf.split(ds.features, ds.class_ids)):
            scaler = Scaler().fit(ds.features[tr])
            accs = classify(scaler.transform(ds.features[tr]), ds.class_ids[tr],
                            {ds.name: (scaler.transform(ds.features[va]), ds.class_ids[va])},
                            config.svc_C, seed)
            fold_results[k]["datasets"][ds.name] = {
                "n": int(va.size), "balanced_accuracy": accs[ds.name],
                "r2_act": None, "r2_val": None, "dist_r2_act": None, "dist_r2_val": None}
    return EvalReport("svc-supervised", seed, n_folds, info, fold_results,
                      aggregate(fold_results, n_folds))


def train_full(config: ExperimentConfig, datasets: list[LabeledDataset] | None = None):
    """Fit the configured DAE on the whole (outlier-filtered) training corpus.

    Returns ``(estimator, scaler, prepared_data)``.
    """
    datasets, seed, n_folds = resolve_datasets(config, datasets)
    if config.supervised_reference:
        raise ExperimentError("full-corpus training is not defined for supervised reference modes")
    data = prepare(datasets, config, seed, n_folds)
    scaler = Scaler().fit(data.train.features)
    est = config.estimator(np.random.SeedSequence(seed, spawn_key=(n_folds,)))
    est.fit(scaler.transform(data.train.features), _training_labels(config, data.train))
    return est, scaler, data
