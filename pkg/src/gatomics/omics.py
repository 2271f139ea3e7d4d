"""Loading, integration, and label encoding for multi-omics matrices.

File conventions
----------------
Matrix files are UTF-8 CSV/TSV (delimiter inferred from the extension:
``.csv`` comma, everything else tab). The first header cell is empty or
``feature_id``; the remaining header cells are sample IDs. Each data row
is a feature ID followed by one numeric cell per sample.

Label files have a header row and two columns: ``sample_id,label``.
"""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class OmicsFormatError(ValueError):
    """A file violated the matrix/label format contract."""


class IntegrationError(ValueError):
    """Layers could not be joined into one dataset."""


def _delimiter_for(path):
    return "," if str(path).lower().endswith(".csv") else "\t"


@dataclass
class OmicsMatrix:
    """One omics layer: a features x samples grid of finite values."""

    layer_name: str
    feature_ids: list
    sample_ids: list
    values: np.ndarray
    duplicate_samples_dropped: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.feature_ids), len(self.sample_ids)):
            raise ValueError(
                f"value grid {self.values.shape} does not match "
                f"{len(self.feature_ids)} features x {len(self.sample_ids)} samples")
        if len(set(self.feature_ids)) != len(self.feature_ids):
            raise ValueError("duplicate feature IDs")
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ValueError("duplicate sample IDs")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite values in omics matrix")

    @property
    def n_features(self):
        return len(self.feature_ids)

    @property
    def n_samples(self):
        return len(self.sample_ids)

    def with_values(self, values):
        """Copy of this layer with a replaced value grid (same shape)."""
        return OmicsMatrix(self.layer_name, list(self.feature_ids),
                           list(self.sample_ids), values,
                           self.duplicate_samples_dropped)

    def subset_features(self, keep_ids):
        """Restrict to the given feature IDs, preserving matrix order."""
        keep = set(keep_ids)
        idx = [i for i, f in enumerate(self.feature_ids) if f in keep]
        return OmicsMatrix(self.layer_name,
                           [self.feature_ids[i] for i in idx],
                           list(self.sample_ids),
                           self.values[idx, :],
                           self.duplicate_samples_dropped)


@dataclass
class SampleLabels:
    """Authoritative sample -> class-label map."""

    entries: dict

    def __post_init__(self):
        if not self.entries:
            raise ValueError("labels are empty")
        for sid, lab in self.entries.items():
            if not isinstance(lab, str) or lab == "":
                raise ValueError(f"empty label for sample {sid!r}")


@dataclass
class LabelEncoding:
    """Deterministic (lexicographic) label -> integer encoding."""

    classes: list
    index: dict = field(init=False)

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError(f"need at least 2 classes, got {len(self.classes)}")
        if list(self.classes) != sorted(set(self.classes)):
            raise ValueError("classes must be the sorted distinct labels")
        self.index = {c: i for i, c in enumerate(self.classes)}

    @property
    def n_classes(self):
        return len(self.classes)


@dataclass
class IntegratedDataset:
    """Inner-joined multi-omics table: samples x concatenated layer features."""

    sample_ids: list
    feature_ids: list
    feature_layers: list
    values: np.ndarray  # samples x features
    targets: np.ndarray  # int class index per sample
    encoding: LabelEncoding

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.values.shape != (len(self.sample_ids), len(self.feature_ids)):
            raise ValueError("value grid does not match sample/feature lists")
        if len(self.feature_layers) != len(self.feature_ids):
            raise ValueError("feature provenance length mismatch")
        if self.targets.shape != (len(self.sample_ids),):
            raise ValueError("targets length mismatch")
        k = self.encoding.n_classes
        if self.targets.size and (self.targets.min() < 0 or self.targets.max() >= k):
            raise ValueError("targets out of encoding range")

    @property
    def n_samples(self):
        return len(self.sample_ids)

    @property
    def n_features(self):
        return len(self.feature_ids)


def load_matrix(path, layer_name):
    """Read one omics layer from a CSV/TSV file.

    Duplicate sample columns are dropped keeping the first occurrence and the
    count is recorded on the returned matrix (and logged). Unparseable or
    non-finite cells raise :class:`OmicsFormatError` naming the location.
    """
    delim = _delimiter_for(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delim))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise OmicsFormatError(f"{path}: empty matrix file")
    header = rows[0]
    if header[0].strip() not in ("", "feature_id"):
        raise OmicsFormatError(
            f"{path}: first header cell must be empty or 'feature_id', got {header[0]!r}")
    raw_samples = [c.strip() for c in header[1:]]
    if not raw_samples:
        raise OmicsFormatError(f"{path}: no sample columns")

    keep_cols, seen = [], set()
    for j, sid in enumerate(raw_samples):
        if sid in seen:
            continue
        seen.add(sid)
        keep_cols.append(j)
    n_dup = len(raw_samples) - len(keep_cols)
    if n_dup:
        log.warning("%s: dropped %d duplicate sample column(s), keeping first occurrence",
                    path, n_dup)
    sample_ids = [raw_samples[j] for j in keep_cols]

    feature_ids = []
    data = np.empty((len(rows) - 1, len(keep_cols)), dtype=np.float64)
    feat_seen = set()
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(raw_samples) + 1:
            raise OmicsFormatError(
                f"{path}: row {i} has {len(row)} cells, expected {len(raw_samples) + 1}")
        fid = row[0].strip()
        if fid == "":
            raise OmicsFormatError(f"{path}: row {i} has an empty feature ID")
        if fid in feat_seen:
            raise OmicsFormatError(f"{path}: duplicate feature ID {fid!r} at row {i}")
        feat_seen.add(fid)
        feature_ids.append(fid)
        for out_j, j in enumerate(keep_cols):
            cell = row[j + 1].strip()
            try:
                val = float(cell)
            except ValueError:
                raise OmicsFormatError(
                    f"{path}: unparseable cell {cell!r} at row {i}, "
                    f"column {sample_ids[out_j]!r}") from None
            if not math.isfinite(val):
                raise OmicsFormatError(
                    f"{path}: non-finite cell {cell!r} at row {i}, "
                    f"column {sample_ids[out_j]!r}")
            data[i - 2, out_j] = val
    if not feature_ids:
        raise OmicsFormatError(f"{path}: no feature rows")
    return OmicsMatrix(layer_name, feature_ids, sample_ids, data,
                       duplicate_samples_dropped=n_dup)


def load_labels(path):
    """Read a two-column sample_id,label file (with header)."""
    delim = _delimiter_for(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delim)
                if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise OmicsFormatError(f"{path}: label file needs a header and at least one row")
    entries = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) < 2:
            raise OmicsFormatError(f"{path}: row {i} has fewer than 2 columns")
        sid, lab = row[0].strip(), row[1].strip()
        if sid in entries:
            raise OmicsFormatError(f"{path}: duplicate sample ID {sid!r} at row {i}")
        if lab == "":
            raise OmicsFormatError(f"{path}: empty label at row {i}")
        entries[sid] = lab
    return SampleLabels(entries)


def encode_labels(labels, sample_ids):
    """Lexicographic class encoding plus per-sample integer targets."""
    for sid in sample_ids:
        if sid not in labels.entries:
            raise KeyError(f"no label for sample {sid!r}")
    classes = sorted({labels.entries[sid] for sid in sample_ids})
    encoding = LabelEncoding(classes)
    targets = np.array([encoding.index[labels.entries[sid]] for sid in sample_ids],
                       dtype=np.int64)
    return encoding, targets


def integrate(layers, labels):
    """Inner-join layers on sample ID and attach encoded labels.

    Retained samples are the intersection of every layer's sample set and the
    label keys, sorted lexicographically. Each sample's row is the
    concatenation of its per-layer feature vectors in the given layer order.
    Samples missing from any layer (or missing a label) are dropped.
    """
    if not layers:
        raise IntegrationError("need at least one layer")
    common = set(layers[0].sample_ids)
    for layer in layers[1:]:
        common &= set(layer.sample_ids)
    common &= set(labels.entries)
    if not common:
        raise IntegrationError("no common samples")
    sample_ids = sorted(common)

    blocks = []
    feature_ids = []
    feature_layers = []
    for layer in layers:
        col_of = {sid: j for j, sid in enumerate(layer.sample_ids)}
        cols = [col_of[sid] for sid in sample_ids]
        blocks.append(layer.values[:, cols].T)  # samples x layer features
        feature_ids.extend(layer.feature_ids)
        feature_layers.extend([layer.layer_name] * layer.n_features)
    values = np.concatenate(blocks, axis=1) if len(blocks) > 1 else blocks[0].copy()

    encoding, targets = encode_labels(labels, sample_ids)
    return IntegratedDataset(sample_ids, feature_ids, feature_layers,
                             values, targets, encoding)


def standardize_columns(dataset):
    """Center and scale every feature column to mean 0, population sd 1.

    Constant columns become all-zero and their sd is recorded as 0. Returns
    ``(standardized dataset, means, sds)``.
    """
    if dataset.n_samples < 2:
        raise ValueError("standardization needs at least 2 samples")
    means = dataset.values.mean(axis=0)
    sds = dataset.values.std(axis=0)  # population (n) denominator
    safe = np.where(sds > 0.0, sds, 1.0)
    values = (dataset.values - means) / safe
    values[:, sds == 0.0] = 0.0
    out = IntegratedDataset(list(dataset.sample_ids), list(dataset.feature_ids),
                            list(dataset.feature_layers), values,
                            dataset.targets.copy(), dataset.encoding)
    return out, means, sds


def write_feature_list(path, feature_ids):
    """One feature ID per line; the selection interchange format."""
    with open(path, "w", encoding="utf-8") as fh:
        for fid in feature_ids:
            fh.write(f"{fid}\n")


def read_feature_list(path):
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]
