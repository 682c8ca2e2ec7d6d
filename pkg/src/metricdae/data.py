"""Feature tables, embedding exports, manifests and the synthetic corpus generator.

Feature CSV schema::

    feat_0,...,feat_87,class[,activation][,valence]

``class`` holds N/S/H/A or a full emotion name (case-insensitive). Label cells
may be ``NA`` only if the whole column is ``NA``, in which case the label is
treated as absent.
"""

from __future__ import annotations

import csv
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

N_FEATURES = 88
CLASS_CODES = ("N", "S", "H", "A")
CLASS_NAMES = ("neutral", "sad", "happy", "angry")
_CLASS_TABLE = {
    "n": 0, "neu": 0, "neutral": 0,
    "s": 1, "sad": 1, "sadness": 1,
    "h": 2, "hap": 2, "happy": 2, "happiness": 2, "joy": 2, "exc": 2, "excited": 2,
    "a": 3, "ang": 3, "angry": 3, "anger": 3,
}
MISSING = "NA"
EMBEDDING_HEADER = ("z1", "z2", "class", "activation", "valence")


class SchemaError(ValueError):
    pass


def class_id(token: str) -> int:
    try:
        return _CLASS_TABLE[token.strip().lower()]
    except KeyError:
        raise SchemaError(f"unknown class label {token!r}") from None


@dataclass
class LabeledDataset:
    name: str
    features: np.ndarray
    class_ids: np.ndarray
    activation: np.ndarray | None = None
    valence: np.ndarray | None = None
    role: str = "train"
    latent: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        n = self.features.shape[0]
        if self.class_ids.shape != (n,):
            raise ValueError(f"{self.name}: {self.class_ids.shape[0]} class ids for {n} rows")
        for label in ("activation", "valence"):
            v = getattr(self, label)
            if v is not None:
                v = np.asarray(v, dtype=np.float64)
                if v.shape != (n,):
                    raise ValueError(f"{self.name}: {label} has {v.shape[0]} entries for {n} rows")
                setattr(self, label, v)
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"{self.name}: features contain non-finite values")
        if np.any((self.class_ids < 0) | (self.class_ids >= len(CLASS_CODES))):
            raise ValueError(f"{self.name}: class ids outside {{0..{len(CLASS_CODES) - 1}}}")
        if self.role not in ("train", "transfer"):
            raise ValueError(f"{self.name}: role must be 'train' or 'transfer'")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def label(self, which: str) -> np.ndarray | None:
        if which not in ("activation", "valence"):
            raise ValueError(f"unknown label {which!r}")
        return getattr(self, which)

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index)
        pick = lambda v: None if v is None else v[index]  # noqa: E731
        return replace(self, features=self.features[index], class_ids=self.class_ids[index],
                       activation=pick(self.activation), valence=pick(self.valence),
                       latent=pick(self.latent))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def load_csv(path, name: str | None = None, role: str = "train",
             n_features: int = N_FEATURES) -> LabeledDataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip() for h in header]
        rows = list(reader)
    col = {h: i for i, h in enumerate(header)}
    feat_cols = [f"feat_{j}" for j in range(n_features)]
    missing = [c for c in feat_cols + ["class"] if c not in col]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    known = set(feat_cols) | {"class", "activation", "valence"}
    extra = [h for h in header if h not in known]
    if extra:
        log.warning("%s: ignoring unknown column(s) %s", path, ", ".join(extra))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    fidx = [col[c] for c in feat_cols]
    feats = np.empty((len(rows), n_features))
    classes = np.empty(len(rows), dtype=np.int64)
    errors = []
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            errors.append(f"line {r}: expected {len(header)} cells, found {len(row)}")
            continue
        try:
            feats[r - 2] = [float(row[i]) for i in fidx]
        except ValueError:
            bad = next(feat_cols[j] for j, i in enumerate(fidx) if not _is_float(row[i]))
            errors.append(f"line {r}: non-numeric value {row[col[bad]]!r} in {bad}")
            continue
        if not np.all(np.isfinite(feats[r - 2])):
            errors.append(f"line {r}: non-finite feature value")
            continue
        try:
            classes[r - 2] = class_id(row[col["class"]])
        except SchemaError as e:
            errors.append(f"line {r}: {e}")
    if errors:
        raise SchemaError(f"{path}: " + "; ".join(errors[:10])
                          + (f" (+{len(errors) - 10} more)" if len(errors) > 10 else ""))

    labels = {}
    for label in ("activation", "valence"):
        if label not in col:
            labels[label] = None
            continue
        cells = [row[col[label]].strip() for row in rows]
        if all(c.upper() == MISSING or c == "" for c in cells):
            labels[label] = None
            continue
        try:
            labels[label] = np.array([float(c) for c in cells])
        except ValueError:
            r = next(i for i, c in enumerate(cells) if not _is_float(c)) + 2
            raise SchemaError(f"{path}: line {r}: {label} value {cells[r - 2]!r} is not numeric") from None
    return LabeledDataset(name or path.stem, feats, classes, labels["activation"],
                          labels["valence"], role)


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_csv(dataset: LabeledDataset, path) -> None:
    d = dataset.features.shape[1]
    header = [f"feat_{j}" for j in range(d)] + ["class"]
    if dataset.activation is not None:
        header.append("activation")
    if dataset.valence is not None:
        header.append("valence")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(dataset.n):
            row = [_fmt(v) for v in dataset.features[i]] + [CLASS_CODES[dataset.class_ids[i]]]
            if dataset.activation is not None:
                row.append(_fmt(dataset.activation[i]))
            if dataset.valence is not None:
                row.append(_fmt(dataset.valence[i]))
            w.writerow(row)


def export_embeddings(z, dataset: LabeledDataset, path) -> None:
    """Write ``z1,z2,class,activation,valence``; absent labels are written as NA."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape != (dataset.n, 2):
        raise ValueError(f"embedding shape {z.shape} does not match {dataset.n} rows x 2")
    act, val = dataset.activation, dataset.valence
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EMBEDDING_HEADER)
        for i in range(dataset.n):
            w.writerow([_fmt(z[i, 0]), _fmt(z[i, 1]), CLASS_CODES[dataset.class_ids[i]],
                        MISSING if act is None else _fmt(act[i]),
                        MISSING if val is None else _fmt(val[i])])


def load_embeddings(path) -> dict:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != EMBEDDING_HEADER:
            raise SchemaError(f"{path}: unexpected header {header}")
        rows = list(reader)

    def column(j):
        cells = [r[j] for r in rows]
        if all(c == MISSING for c in cells):
            return None
        return np.array([float(c) for c in cells])

    return {
        "z": np.array([[float(r[0]), float(r[1])] for r in rows]).reshape(-1, 2),
        "class_ids": np.array([class_id(r[2]) for r in rows], dtype=np.int64),
        "activation": column(3),
        "valence": column(4),
    }


# -- synthetic corpora -------------------------------------------------------

@dataclass
class SyntheticConfig:
    """Knobs for :func:`generate_synthetic`.

    Latents are drawn around the four quadrant centres ``(+-centre, +-centre)``;
    the first latent axis carries activation and the second valence. Features
    are a fixed random linear lift of the latents (``map_seed``) plus
    ``n_nuisance`` high-variance nuisance factors and white noise.
    """

    n_features: int = N_FEATURES
    centre: float = 1.5
    spread: float = 0.6
    activation_noise: float = 0.1
    valence_noise: float = 0.1
    valence_gain: float = 1.0
    n_nuisance: int = 3
    nuisance_scale: float = 2.0
    feature_noise: float = 0.5
    class_weights: tuple = (0.25, 0.25, 0.25, 0.25)
    latent_shift: tuple = (0.0, 0.0)
    nuisance_shift: float = 0.0
    feature_offset: float = 0.0
    map_seed: int = 0
    include_activation: bool = True
    include_valence: bool = True

# quadrant -> class: (activation sign, valence sign)
_QUADRANT_CLASS = {(-1, 1): 0, (-1, -1): 1, (1, 1): 2, (1, -1): 3}
_CLASS_CENTRE_SIGN = {c: s for s, c in _QUADRANT_CLASS.items()}


def _lift_maps(cfg: SyntheticConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(cfg.map_seed)
    signal = rng.normal(size=(2, cfg.n_features))
    nuisance = rng.normal(size=(max(cfg.n_nuisance, 0), cfg.n_features))
    bias = rng.normal(size=cfg.n_features)
    return signal, nuisance, bias


def generate_synthetic(n: int, seed=0, config: SyntheticConfig | None = None,
                       name: str = "synthetic", role: str = "train") -> LabeledDataset:
    """Desk-scale stand-in for an emotion corpus with planted activation/valence.

    ``activation = u1 + noise`` and ``valence = tanh(gain * u2) + noise`` for
    generating latents ``u``; classes follow the latent quadrant. The generating
    latents are kept in ``dataset.latent``.
    """
    cfg = config or SyntheticConfig()
    if n < 16:
        raise ValueError("generate_synthetic needs n >= 16")
    rng = np.random.default_rng(seed)
    weights = np.asarray(cfg.class_weights, dtype=np.float64)
    centre_class = rng.choice(len(CLASS_CODES), size=n, p=weights / weights.sum())
    signs = np.array([_CLASS_CENTRE_SIGN[c] for c in centre_class], dtype=np.float64)
    u = signs * cfg.centre + rng.normal(scale=cfg.spread, size=(n, 2)) + np.asarray(cfg.latent_shift)
    quadrant = np.where(u >= 0, 1, -1)
    classes = np.array([_QUADRANT_CLASS[(int(a), int(v))] for a, v in quadrant], dtype=np.int64)

    activation = u[:, 0] + rng.normal(scale=cfg.activation_noise, size=n)
    valence = np.tanh(cfg.valence_gain * u[:, 1]) + rng.normal(scale=cfg.valence_noise, size=n)

    signal, nuisance, bias = _lift_maps(cfg)
    v = rng.normal(scale=cfg.nuisance_scale, size=(n, nuisance.shape[0])) + cfg.nuisance_shift
    x = u @ signal + v @ nuisance + bias + cfg.feature_offset
    x += rng.normal(scale=cfg.feature_noise, size=x.shape)
    return LabeledDataset(name, x, classes,
                          activation if cfg.include_activation else None,
                          valence if cfg.include_valence else None,
                          role, latent=u)


# -- manifests ---------------------------------------------------------------

@dataclass
class ManifestEntry:
    name: str
    path: Path
    role: str
    labels: tuple = ()


@dataclass
class Manifest:
    datasets: list[ManifestEntry]
    seed: int = 0
    folds: int = 5

    def __post_init__(self):
        n_train = sum(d.role == "train" for d in self.datasets)
        if n_train != 1:
            raise ValueError(f"manifest needs exactly one train dataset, found {n_train}")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ValueError("manifest dataset names must be unique")

    @property
    def train(self) -> ManifestEntry:
        return next(d for d in self.datasets if d.role == "train")

    @property
    def transfer(self) -> list[ManifestEntry]:
        return [d for d in self.datasets if d.role == "transfer"]


def load_manifest(path) -> Manifest:
    """Read a TOML manifest::

        seed = 0
        folds = 5
        [[datasets]]
        name = "iemocap"
        path = "iemocap.csv"     # relative to the manifest file
        role = "train"
        labels = ["activation", "valence"]
    """
    path = Path(path)
    doc = tomllib.loads(path.read_text(encoding="utf-8"))
    entries = []
    for d in doc.get("datasets", []):
        for key in ("name", "path", "role"):
            if key not in d:
                raise ValueError(f"{path}: dataset entry missing {key!r}")
        p = Path(d["path"])
        entries.append(ManifestEntry(d["name"], p if p.is_absolute() else path.parent / p,
                                     d["role"], tuple(d.get("labels", ()))))
    return Manifest(entries, int(doc.get("seed", 0)), int(doc.get("folds", 5)))


def load_manifest_datasets(manifest: Manifest) -> list[LabeledDataset]:
    out = []
    for entry in manifest.datasets:
        ds = load_csv(entry.path, name=entry.name, role=entry.role)
        for label in entry.labels:
            if ds.label(label) is None:
                raise SchemaError(f"{entry.path}: manifest declares {label} but the file has none")
        out.append(ds)
    return out
