"""Dataset model, on-disk format, and the synthetic benchmark generator.

A dataset directory contains five delimited text files:

    features.csv    N rows x D comma-separated floats
    labels.csv      N integer class ids, one per line
    attributes.csv  C rows x L comma-separated floats (one row per class id)
    split.csv       N tags, one of train_seen / test_seen / test_unseen
    classes.csv     C lines "id,name,seen|unseen" with dense ids 0..C-1

Loading is fail-closed: every invariant is checked before a dataset object
is handed out.
"""

import csv
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

SPLIT_TAGS = ("train_seen", "test_seen", "test_unseen")


def write_text_atomic(path, text):
    """Write via a temp file and rename, so readers never see partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bytes_atomic(path, payload):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ZslDataset:
    features: np.ndarray          # (N, D)
    labels: np.ndarray            # (N,) int class ids
    attributes: np.ndarray        # (C, L), row per class id
    split: np.ndarray             # (N,) tags from SPLIT_TAGS
    seen_classes: np.ndarray      # sorted int ids
    unseen_classes: np.ndarray    # sorted int ids
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.attributes = np.asarray(self.attributes, dtype=np.float64)
        self.split = np.asarray(self.split, dtype=object)
        self.seen_classes = np.sort(np.asarray(self.seen_classes, dtype=np.int64))
        self.unseen_classes = np.sort(np.asarray(self.unseen_classes, dtype=np.int64))
        if not self.class_names:
            self.class_names = [f"class_{c}" for c in range(self.n_classes)]
        self.validate()

    @property
    def n_examples(self):
        return self.features.shape[0]

    @property
    def n_classes(self):
        return self.attributes.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def attribute_dim(self):
        return self.attributes.shape[1]

    def validate(self):
        n = self.n_examples
        if self.labels.shape != (n,) or self.split.shape != (n,):
            raise DataError(
                f"labels/split must have one entry per feature row ({n}), got "
                f"{self.labels.shape} and {self.split.shape}"
            )
        seen = set(self.seen_classes.tolist())
        unseen = set(self.unseen_classes.tolist())
        if seen & unseen:
            raise DataError(f"seen and unseen class sets overlap: {sorted(seen & unseen)}")
        all_ids = seen | unseen
        if all_ids != set(range(self.n_classes)):
            raise DataError(
                f"class ids must be dense 0..{self.n_classes - 1} and every id "
                "must be tagged seen or unseen"
            )
        if len(self.class_names) != self.n_classes:
            raise DataError(
                f"{len(self.class_names)} class names for {self.n_classes} classes"
            )
        for i in range(n):
            tag = self.split[i]
            y = int(self.labels[i])
            if tag not in SPLIT_TAGS:
                raise DataError(f"row {i}: unknown split tag '{tag}'")
            if y not in all_ids:
                raise DataError(f"row {i}: label {y} has no attribute row")
            if tag in ("train_seen", "test_seen") and y not in seen:
                raise DataError(f"row {i}: split '{tag}' but label {y} is not a seen class")
            if tag == "test_unseen" and y not in unseen:
                raise DataError(f"row {i}: split 'test_unseen' but label {y} is a seen class")

    def mask(self, tag):
        if tag not in SPLIT_TAGS:
            raise DataError(f"unknown split tag '{tag}'")
        return np.array([s == tag for s in self.split])

    def rows(self, tag):
        m = self.mask(tag)
        return self.features[m], self.labels[m]


def save_dataset(dataset, directory):
    os.makedirs(directory, exist_ok=True)

    def fmt_matrix(m):
        return "\n".join(",".join(repr(float(v)) for v in row) for row in m) + "\n"

    write_text_atomic(os.path.join(directory, "features.csv"), fmt_matrix(dataset.features))
    write_text_atomic(
        os.path.join(directory, "labels.csv"),
        "\n".join(str(int(v)) for v in dataset.labels) + "\n",
    )
    write_text_atomic(os.path.join(directory, "attributes.csv"), fmt_matrix(dataset.attributes))
    write_text_atomic(
        os.path.join(directory, "split.csv"), "\n".join(dataset.split) + "\n"
    )
    seen = set(dataset.seen_classes.tolist())
    lines = [
        f"{c},{dataset.class_names[c]},{'seen' if c in seen else 'unseen'}"
        for c in range(dataset.n_classes)
    ]
    write_text_atomic(os.path.join(directory, "classes.csv"), "\n".join(lines) + "\n")


def _load_matrix(path, name):
    if not os.path.exists(path):
        raise DataError(f"missing dataset file: {name}")
    try:
        m = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{name}: {exc}") from exc
    return m


def load_dataset(directory):
    """Load and validate a dataset directory; raises DataError on any defect."""
    classes_path = os.path.join(directory, "classes.csv")
    if not os.path.exists(classes_path):
        raise DataError("missing dataset file: classes.csv")
    names, seen_ids, unseen_ids = [], [], []
    with open(classes_path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if len(row) != 3 or row[2] not in ("seen", "unseen"):
                raise DataError(f"classes.csv line {lineno + 1}: expected 'id,name,seen|unseen'")
            cid = int(row[0])
            if cid != len(names):
                raise DataError(
                    f"classes.csv line {lineno + 1}: ids must be dense and in order, got {cid}"
                )
            names.append(row[1])
            (seen_ids if row[2] == "seen" else unseen_ids).append(cid)

    features = _load_matrix(os.path.join(directory, "features.csv"), "features.csv")
    attributes = _load_matrix(os.path.join(directory, "attributes.csv"), "attributes.csv")
    labels_path = os.path.join(directory, "labels.csv")
    split_path = os.path.join(directory, "split.csv")
    for p in (labels_path, split_path):
        if not os.path.exists(p):
            raise DataError(f"missing dataset file: {os.path.basename(p)}")
    labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
    with open(split_path) as fh:
        split = np.array([line.strip() for line in fh if line.strip()], dtype=object)
    if attributes.shape[0] != len(names):
        raise DataError(
            f"attributes.csv has {attributes.shape[0]} rows but classes.csv "
            f"declares {len(names)} classes"
        )
    return ZslDataset(
        features=features,
        labels=labels,
        attributes=attributes,
        split=split,
        seen_classes=np.array(seen_ids),
        unseen_classes=np.array(unseen_ids),
        class_names=names,
    )


def average_class_attributes(per_image_attributes, labels):
    """Mean attribute vector per class, for datasets annotated per image.

    Returns a (C, L) matrix where C = max(labels) + 1; every class id up to
    the maximum must have at least one attributed image.
    """
    per_image_attributes = np.asarray(per_image_attributes, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1
    out = np.zeros((n_classes, per_image_attributes.shape[1]))
    for c in range(n_classes):
        m = labels == c
        if not m.any():
            raise DataError(f"class {c} has no attributed images")
        out[c] = per_image_attributes[m].mean(axis=0)
    return out


@dataclass
class SyntheticSpec:
    """Desk-scale benchmark where attributes genuinely predict features."""

    n_seen: int = 15
    n_unseen: int = 5
    feature_dim: int = 64
    attribute_dim: int = 16
    examples_per_class: int = 50
    attribute_noise: float = 0.0
    feature_noise: float = 0.1
    seed: int = 0
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.n_seen < 2:
            raise ConfigError(f"n_seen must be >= 2, got {self.n_seen}")
        for name in ("n_unseen", "feature_dim", "attribute_dim", "examples_per_class"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.attribute_noise < 0 or self.feature_noise < 0:
            raise ConfigError("noise levels must be nonnegative")


def _synthetic_core(spec):
    """Class attribute vectors, the attribute->feature map, and class means.

    Deterministic in spec.seed; make_synthetic draws from the same stream in
    the same order so the oracle helpers below agree with the dataset.
    """
    rng = np.random.default_rng(spec.seed)
    n_classes = spec.n_seen + spec.n_unseen
    attrs = rng.standard_normal((n_classes, spec.attribute_dim))
    attrs /= np.linalg.norm(attrs, axis=1, keepdims=True)
    mapping = rng.standard_normal((spec.feature_dim, spec.attribute_dim))
    class_means = attrs @ mapping.T
    return rng, attrs, mapping, class_means


def synthetic_class_feature_means(spec):
    """Ground-truth feature-space class means of the synthetic benchmark."""
    _, _, _, class_means = _synthetic_core(spec)
    return class_means


def make_synthetic(spec):
    """Generate a solvable synthetic ZSL dataset.

    Unseen classes use the same attribute->feature map as seen classes, so a
    model that learns the map from seen data can classify unseen examples.
    """
    rng, attrs, _, class_means = _synthetic_core(spec)
    n_classes = spec.n_seen + spec.n_unseen
    per = spec.examples_per_class
    features = np.repeat(class_means, per, axis=0)
    features = features + spec.feature_noise * rng.standard_normal(features.shape)
    labels = np.repeat(np.arange(n_classes), per)

    observed_attrs = attrs
    if spec.attribute_noise > 0:
        observed_attrs = attrs + spec.attribute_noise * rng.standard_normal(attrs.shape)

    n_test = max(1, int(round(spec.test_fraction * per))) if per > 1 else 0
    split = np.empty(n_classes * per, dtype=object)
    for c in range(n_classes):
        block = slice(c * per, (c + 1) * per)
        if c < spec.n_seen:
            tags = ["train_seen"] * (per - n_test) + ["test_seen"] * n_test
        else:
            tags = ["test_unseen"] * per
        split[block] = tags

    return ZslDataset(
        features=features,
        labels=labels,
        attributes=observed_attrs,
        split=split,
        seen_classes=np.arange(spec.n_seen),
        unseen_classes=np.arange(spec.n_seen, n_classes),
    )


def nearest_class_mean_predict(features, class_means, candidate_ids):
    """Classify rows by the nearest candidate class mean (oracle baseline)."""
    candidate_ids = np.asarray(candidate_ids, dtype=np.int64)
    diffs = features[:, None, :] - class_means[candidate_ids][None, :, :]
    return candidate_ids[np.argmin((diffs * diffs).sum(axis=-1), axis=1)]
