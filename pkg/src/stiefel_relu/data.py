"""Dataset ingestion: IDX image sets, schema-driven CSV, standardization, splits.

The data directory defaults to ``$STIEFEL_RELU_DATA`` or
``~/.cache/stiefel_relu``. Nothing here touches the network.
"""
import csv
import gzip
import json
import logging
import os
import struct
import warnings
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DegenerateFeature,
    InsufficientClassSamples,
    LengthMismatch,
    MissingColumn,
    ParseError,
)
from .initializers import make_rng

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DATA_ENV = "STIEFEL_RELU_DATA"


def default_data_dir():
    return Path(os.environ.get(DATA_ENV) or Path.home() / ".cache" / "stiefel_relu")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = ""
    task: str = "classification"
    n_classes: int = 0
    feature_names: tuple = ()

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be a (samples, features) matrix")
        if len(self.features) != len(self.labels):
            raise LengthMismatch(f"{len(self.features)} feature rows vs {len(self.labels)} labels")
        if np.isnan(self.features).any():
            raise ValueError(f"{self.name}: NaN in features")

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, idx, name=None):
        return replace(self, features=self.features[idx], labels=self.labels[idx],
                       name=name or self.name)


@dataclass(frozen=True)
class ShiftSpec:
    alpha0: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.alpha0):
            raise ValueError("alpha0 must be finite")


# --- IDX -----------------------------------------------------------------

def _read_bytes(path):
    path = Path(path)
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw, expected_magic, path):
    if len(raw) < 8:
        raise LengthMismatch(f"{path}: file too short for an IDX header")
    magic, = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise LengthMismatch(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) - header != count:
        raise LengthMismatch(f"{path}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, name="idx"):
    """Images scaled to [0, 1] and flattened, with integer labels."""
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, labels_path)
    if len(images) != len(labels):
        raise LengthMismatch(f"{len(images)} images vs {len(labels)} labels")
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    return Dataset(x, y, name=name, task="classification", n_classes=int(y.max()) + 1)


_IDX_NAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find_idx(directory, stem):
    # accept both "train-images-idx3-ubyte" and "train-images.idx3-ubyte", optionally .gz
    candidates = [stem, stem.replace("-idx", ".idx")]
    for c in candidates:
        for suffix in ("", ".gz"):
            p = Path(directory) / (c + suffix)
            if p.exists():
                return p
    raise FileNotFoundError(f"no IDX file matching {stem} in {directory}")


def load_image_dataset(name="mnist", split="train", data_dir=None):
    """MNIST or Fashion-MNIST split from ``<data_dir>/<name>/``."""
    directory = Path(data_dir or default_data_dir()) / name
    img, lab = _IDX_NAMES[split]
    return load_idx(_find_idx(directory, img), _find_idx(directory, lab), name=f"{name}-{split}")


# --- transforms ----------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    keep: np.ndarray


def fit_standardizer(ds):
    mean = ds.features.mean(axis=0)
    std = ds.features.std(axis=0)
    keep = std > 1e-12 * np.maximum(1.0, np.abs(mean))
    return Standardizer(mean, std, keep)


def standardize_shift(ds, spec, reference=None):
    """Unit variance per feature with mean shifted to ``spec.alpha0``.

    Statistics come from ``reference`` (the training split) when given, so the
    same transform can be applied to a test split. Constant features are
    dropped with a :class:`DegenerateFeature` warning.
    """
    st = reference if isinstance(reference, Standardizer) else fit_standardizer(reference or ds)
    if not st.keep.all():
        dropped = int((~st.keep).sum())
        warnings.warn(f"{ds.name}: dropped {dropped} constant feature(s)", DegenerateFeature,
                      stacklevel=2)
    x = (ds.features[:, st.keep] - st.mean[st.keep]) / st.std[st.keep] + spec.alpha0
    names = tuple(n for n, k in zip(ds.feature_names, st.keep) if k) if ds.feature_names else ()
    return replace(ds, features=x, feature_names=names)


def few_shot_sample(ds, k, seed):
    """Exactly ``k`` samples per class, without replacement, deterministic per seed."""
    rng = make_rng(seed, 0xF5)
    picks = []
    for c in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == c)
        if len(idx) < k:
            raise InsufficientClassSamples(f"class {c} has {len(idx)} samples, need {k}")
        picks.append(np.sort(rng.choice(idx, size=k, replace=False)))
    return ds.subset(np.concatenate(picks), name=f"{ds.name}-{k}shot")


def random_subset(ds, n, seed):
    if n is None or n >= len(ds):
        return ds
    rng = make_rng(seed, 0x5B)
    return ds.subset(np.sort(rng.choice(len(ds), size=n, replace=False)))


def train_test_split(ds, test_fraction=0.2, seed=0):
    """Deterministic split; stratified by class for classification tasks."""
    rng = make_rng(seed, 0x57)
    if ds.task == "classification":
        test = []
        for c in range(ds.n_classes):
            idx = np.flatnonzero(ds.labels == c)
            k = int(round(test_fraction * len(idx)))
            test.append(rng.choice(idx, size=k, replace=False))
        test = np.sort(np.concatenate(test))
    else:
        k = int(round(test_fraction * len(ds)))
        test = np.sort(rng.choice(len(ds), size=k, replace=False))
    mask = np.zeros(len(ds), dtype=bool)
    mask[test] = True
    return ds.subset(np.flatnonzero(~mask)), ds.subset(test)


# --- CSV -----------------------------------------------------------------

def load_schema(name_or_path):
    """A schema dict from a JSON path, or a bundled schema by dataset name."""
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        return json.loads(p.read_text())
    text = resources.files("stiefel_relu").joinpath("schemas", f"{name_or_path}.json").read_text()
    return json.loads(text)


def load_csv_tabular(path, schema):
    """Parse a headed CSV according to ``schema``.

    Schema keys: ``name``, ``task`` (classification|regression), ``target``,
    ``columns`` (ordered mapping column -> numeric|categorical|ignore),
    optional ``categorical_encoding`` (integer|onehot, default integer),
    ``missing`` (tokens treated as missing; rows containing them are dropped)
    and ``classes`` (explicit label order).
    """
    if not isinstance(schema, dict):
        schema = load_schema(schema)
    columns = schema["columns"]
    target = schema["target"]
    missing = set(schema.get("missing", ["", "?", "NA"]))
    encoding = schema.get("categorical_encoding", "integer")
    task = schema.get("task", "classification")

    with open(path, newline="") as f:
        reader = csv.reader(f, skipinitialspace=True)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file", row=1) from None
        for col in [*columns, target]:
            if col not in header:
                raise MissingColumn(f"{path}: column {col!r} not in header")
        pos = {h: i for i, h in enumerate(header)}
        rows, dropped = [], 0
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not v.strip() for v in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"{path}: row {line_no} has {len(rec)} fields, expected "
                                 f"{len(header)}", row=line_no)
            rec = [v.strip() for v in rec]
            if any(rec[pos[c]] in missing for c in [*columns, target] if columns.get(c) != "ignore"):
                dropped += 1
                continue
            rows.append((line_no, rec))
    if dropped:
        log.info("%s: dropped %d row(s) with missing values", path, dropped)

    feats, names = [], []
    for col, kind in columns.items():
        if kind == "ignore" or col == target:
            continue
        values = [rec[pos[col]] for _, rec in rows]
        if kind == "numeric":
            out = np.empty(len(values))
            for i, v in enumerate(values):
                try:
                    out[i] = float(v)
                except ValueError:
                    raise ParseError(f"{path}: row {rows[i][0]}, column {col!r}: "
                                     f"cannot parse {v!r} as a number",
                                     row=rows[i][0], column=col) from None
            feats.append(out[:, None])
            names.append(col)
        elif kind == "categorical":
            levels = sorted(set(values))
            codes = np.array([levels.index(v) for v in values])
            if encoding == "onehot":
                feats.append(np.eye(len(levels))[codes])
                names.extend(f"{col}={lv}" for lv in levels)
            else:
                feats.append(codes[:, None].astype(np.float64))
                names.append(col)
        else:
            raise ParseError(f"schema: unknown column kind {kind!r} for {col!r}", column=col)

    raw_target = [rec[pos[target]] for _, rec in rows]
    if task == "classification":
        classes = schema.get("classes") or sorted(set(raw_target), key=_numeric_first)
        index = {str(c): i for i, c in enumerate(classes)}
        # the Adult test file writes its labels with a trailing period
        raw_target = [v if v in index else v.rstrip(".") for v in raw_target]
        try:
            y = np.array([index[v] for v in raw_target], dtype=np.int64)
        except KeyError as e:
            raise ParseError(f"{path}: unknown class label {e.args[0]!r}", column=target) from None
        n_classes = len(classes)
    else:
        try:
            y = np.array([float(v) for v in raw_target])
        except ValueError as e:
            raise ParseError(f"{path}: non-numeric regression target ({e})", column=target) from None
        n_classes = 0
    x = np.hstack(feats) if feats else np.empty((len(rows), 0))
    return Dataset(x, y, name=schema.get("name", Path(path).stem), task=task,
                   n_classes=n_classes, feature_names=tuple(names))


def _numeric_first(v):
    try:
        return (0, float(v), "")
    except ValueError:
        return (1, 0.0, v)


def load_tabular(name, data_dir=None):
    """Bundled-schema dataset ``<data_dir>/tabular/<name>.csv``."""
    schema = load_schema(name)
    path = Path(data_dir or default_data_dir()) / "tabular" / f"{name}.csv"
    if not path.exists() and name in BUNDLED_TABULAR:
        export_bundled_tabular(data_dir)
    return load_csv_tabular(path, schema)


BUNDLED_TABULAR = ("wine", "cancer", "diabetes")


def export_bundled_tabular(data_dir=None):
    """Write Wine, Breast Cancer and Diabetes CSVs from scikit-learn's local copies.

    These three ship inside scikit-learn, so no download is involved. Adult,
    Pima and Ionosphere must be placed in ``<data_dir>/tabular`` by hand.
    """
    from sklearn import datasets

    out = Path(data_dir or default_data_dir()) / "tabular"
    out.mkdir(parents=True, exist_ok=True)
    loaders = {
        "wine": (datasets.load_wine, "class"),
        "cancer": (datasets.load_breast_cancer, "diagnosis"),
        "diabetes": (datasets.load_diabetes, "progression"),
    }
    written = []
    for name, (loader, target) in loaders.items():
        schema = load_schema(name)
        bunch = loader(scaled=False) if name == "diabetes" else loader()
        cols = list(schema["columns"])
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow([*cols, target])
            for row, t in zip(bunch.data, bunch.target):
                w.writerow([*(repr(float(v)) for v in row), repr(float(t)) if name == "diabetes"
                            else int(t)])
        written.append(path)
    return written
