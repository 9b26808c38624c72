"""Tabular data: CSV ingestion, quantile binning, splits, resampling, synthetic sets.

Column 0 of every network built from a :class:`DiscretizedDataset` is the
label (``Class``); feature ``j`` becomes variable ``j + 1``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import (
    CSVParseError,
    DataError,
    InfeasibleRatioError,
    SchemaError,
    StratificationError,
)
from .model import FEATURE, LABEL, GraphStructure, VariableSpec

LABEL_COLUMN = "Class"
CREDITCARD_FEATURES = ("Time",) + tuple(f"V{i}" for i in range(1, 29)) + ("Amount",)
CREDITCARD_COLUMNS = CREDITCARD_FEATURES + (LABEL_COLUMN,)

PLANTED = ("none", "xor_pair", "pairwise")


@dataclass
class RawDataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.intp)
        self.feature_names = tuple(self.feature_names)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.size == 0:
            self.features = self.features.reshape(self.labels.size, len(self.feature_names))
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DataError("feature matrix and labels disagree on the number of rows")
        if self.features.shape[1] != len(self.feature_names):
            raise DataError("feature matrix and feature_names disagree on the number of columns")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features must be finite")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise DataError("labels must be 0 or 1")

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, indices) -> "RawDataset":
        idx = np.asarray(indices, dtype=np.intp)
        return RawDataset(self.features[idx], self.labels[idx], self.feature_names)


@dataclass(frozen=True)
class BinningSpec:
    """Per-feature cut points; a value ``x`` lands in bin ``#{cuts <= x}``."""

    cut_points: tuple
    n_bins: int
    feature_names: tuple = ()
    #: indices of features that collapsed to a single bin
    constant_features: tuple = ()

    @property
    def cardinalities(self) -> tuple:
        return tuple(len(c) + 1 for c in self.cut_points)

    def to_dict(self) -> dict:
        return {
            "n_bins": self.n_bins,
            "feature_names": list(self.feature_names),
            "cut_points": [[float(x) for x in c] for c in self.cut_points],
            "constant_features": list(self.constant_features),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BinningSpec":
        from .errors import ModelFormatError

        for key in ("n_bins", "feature_names", "cut_points"):
            if key not in doc:
                raise ModelFormatError(key, "missing from binning document")
        cuts = tuple(np.asarray(c, dtype=np.float64) for c in doc["cut_points"])
        if len(cuts) != len(doc["feature_names"]):
            raise ModelFormatError("cut_points", "one list of cut points per feature is required")
        return cls(cuts, int(doc["n_bins"]), tuple(doc["feature_names"]),
                   tuple(doc.get("constant_features", ())))


@dataclass
class DiscretizedDataset:
    instances: np.ndarray
    labels: np.ndarray
    spec: BinningSpec
    weights: np.ndarray | None = None
    feature_names: tuple = field(default=())

    def __post_init__(self):
        self.instances = np.asarray(self.instances, dtype=np.intp)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if not self.feature_names:
            self.feature_names = tuple(self.spec.feature_names) or tuple(
                f"x{j}" for j in range(self.instances.shape[1]))
        cards = np.asarray(self.spec.cardinalities)
        if self.instances.shape[0] and (np.any(self.instances < 0) or np.any(self.instances >= cards[None, :])):
            raise DataError("bin index outside its feature's effective cardinality")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def cardinalities(self) -> tuple:
        """Network cardinalities; single-bin features are padded to two states."""
        return tuple(max(2, c) for c in self.spec.cardinalities)

    def variable_specs(self) -> list[VariableSpec]:
        specs = [VariableSpec(0, LABEL_COLUMN, 2, LABEL)]
        for j, (name, card) in enumerate(zip(self.feature_names, self.cardinalities)):
            specs.append(VariableSpec(j + 1, name, card, FEATURE))
        return specs

    def assignments(self, structure: GraphStructure | None = None) -> np.ndarray:
        """Rows ordered by variable id: label in the label slot, features in the rest."""
        n_rows = self.labels.shape[0]
        if structure is None:
            return np.column_stack([self.labels, self.instances]) if n_rows else \
                np.zeros((0, 1 + self.instances.shape[1]), dtype=np.intp)
        out = np.empty((n_rows, structure.n), dtype=np.intp)
        out[:, structure.label_id] = self.labels
        out[:, list(structure.feature_ids)] = self.instances
        return out

    def subset(self, indices) -> "DiscretizedDataset":
        idx = np.asarray(indices, dtype=np.intp)
        w = None if self.weights is None else self.weights[idx]
        return DiscretizedDataset(self.instances[idx], self.labels[idx], self.spec, w, self.feature_names)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int


# -- CSV ---------------------------------------------------------------------

def _parse_float(text, row, column):
    try:
        value = float(text)
    except ValueError:
        raise CSVParseError(row, column, text) from None
    if not math.isfinite(value):
        raise CSVParseError(row, column, text)
    return value


def _read_table(path, feature_names, with_label: bool):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(LABEL_COLUMN if with_label else "header",
                              "file is empty; expected a header row") from None
        if feature_names is None:
            feature_names = tuple(h for h in header if h != LABEL_COLUMN)
        feature_names = tuple(feature_names)
        for name in feature_names + ((LABEL_COLUMN,) if with_label else ()):
            if name not in header:
                raise SchemaError(name)
        cols = [header.index(name) for name in feature_names]
        label_col = header.index(LABEL_COLUMN) if with_label else None

        feats, labels = [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {row_no}: expected {len(header)} cells, found {len(row)}")
            feats.append([_parse_float(row[c], row_no, header[c]) for c in cols])
            if with_label:
                y = _parse_float(row[label_col], row_no, LABEL_COLUMN)
                if y not in (0.0, 1.0):
                    raise CSVParseError(row_no, LABEL_COLUMN, row[label_col])
                labels.append(int(y))
    features = np.array(feats, dtype=np.float64).reshape(len(feats), len(feature_names))
    return features, np.array(labels, dtype=np.intp), feature_names


def load_csv(path, feature_names=None, allow_empty: bool = False) -> RawDataset:
    """Read a CSV with a ``Class`` column, resolving columns by header name.

    ``feature_names`` fixes which columns are features and in what order;
    by default every non-``Class`` column is a feature in header order.
    Row numbers in errors count the header as row 1.
    """
    features, labels, names = _read_table(path, feature_names, with_label=True)
    if not labels.size and not allow_empty:
        raise DataError(f"{path}: no data rows")
    return RawDataset(features, labels, names)


def load_feature_rows(path, feature_names) -> np.ndarray:
    """Feature matrix for scoring; a ``Class`` column, if present, is ignored."""
    features, _, _ = _read_table(path, tuple(feature_names), with_label=False)
    return features


def load_creditcard_csv(path) -> RawDataset:
    """Load the credit-card fraud file: 30 features (Time, V1..V28, Amount) and Class."""
    return load_csv(path, CREDITCARD_FEATURES)


def write_csv(raw: RawDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(raw.feature_names) + [LABEL_COLUMN])
        for x, y in zip(raw.features, raw.labels):
            writer.writerow([format(float(v), ".17g") for v in x] + [int(y)])


def write_split(split: SplitIndices, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("[train]\n")
        fh.writelines(f"{int(i)}\n" for i in split.train)
        fh.write("[test]\n")
        fh.writelines(f"{int(i)}\n" for i in split.test)


def read_split(path, seed: int = -1) -> SplitIndices:
    sections = {"train": [], "test": []}
    current = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line in ("[train]", "[test]"):
                current = line[1:-1]
                continue
            if current is None:
                raise DataError(f"{path}:{line_no}: index before any [train]/[test] header")
            try:
                sections[current].append(int(line))
            except ValueError:
                raise DataError(f"{path}:{line_no}: not an integer index: {line!r}") from None
    return SplitIndices(np.array(sections["train"], dtype=np.intp),
                        np.array(sections["test"], dtype=np.intp), seed)


# -- binning -----------------------------------------------------------------

def fit_bins(raw: RawDataset, n_bins: int = 5, rows=None) -> BinningSpec:
    """Quantile cut points at ``j / n_bins`` (linear interpolation).

    Fit on training rows only (pass ``rows``).  Duplicate cut points are
    merged and cut points at or below the column minimum are dropped, since
    they would leave the lowest bin empty; a constant column ends with no
    cut points and is reported in ``constant_features``.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    x = raw.features if rows is None else raw.features[np.asarray(rows, dtype=np.intp)]
    if x.shape[0] == 0:
        raise DataError("cannot fit bins on zero rows")
    qs = np.arange(1, n_bins) / n_bins
    cuts, constant = [], []
    for j in range(x.shape[1]):
        col = x[:, j]
        c = np.unique(np.quantile(col, qs))
        c = c[c > col.min()]
        if c.size == 0:
            constant.append(j)
        cuts.append(c)
    return BinningSpec(tuple(cuts), n_bins, raw.feature_names, tuple(constant))


def bin_features(features, spec: BinningSpec) -> np.ndarray:
    """Bin index of every cell; out-of-range values clamp to the edge bins."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != len(spec.cut_points):
        raise DataError(f"binning spec has {len(spec.cut_points)} features, "
                        f"data has {features.shape[-1] if features.ndim else 0}")
    inst = np.empty(features.shape, dtype=np.intp)
    for j, c in enumerate(spec.cut_points):
        inst[:, j] = np.searchsorted(c, features[:, j], side="right")
    return inst


def apply_bins(raw: RawDataset, spec: BinningSpec, weights=None) -> DiscretizedDataset:
    return DiscretizedDataset(bin_features(raw.features, spec), raw.labels.copy(), spec, weights,
                              raw.feature_names)


def bin_midpoints(spec: BinningSpec) -> tuple:
    """A representative value per bin (edge bins sit one half-width outside)."""
    reps = []
    for c in spec.cut_points:
        if c.size == 0:
            reps.append(np.zeros(1))
            continue
        width = np.diff(c).mean() if c.size > 1 else 1.0
        mids = (c[:-1] + c[1:]) / 2
        reps.append(np.concatenate([[c[0] - width / 2], mids, [c[-1] + width / 2]]))
    return tuple(reps)


# -- splitting and resampling ------------------------------------------------

def _labels_of(data):
    return np.asarray(data.labels if hasattr(data, "labels") else data, dtype=np.intp)


def stratified_split(data, test_frac: float = 0.3, seed: int = 42) -> SplitIndices:
    """Per-class shuffle; ``round(test_frac * N_c)`` of each class goes to test."""
    if not 0 < test_frac < 1:
        raise ValueError("test_frac must be in (0, 1)")
    y = _labels_of(data)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        if idx.size < 2:
            raise StratificationError(
                f"class {c} has {idx.size} instance(s); need at least 2 to place one on each side"
            )
        n_test = int(math.floor(test_frac * idx.size + 0.5))
        n_test = min(max(n_test, 1), idx.size - 1)
        perm = rng.permutation(idx)
        test.append(perm[:n_test])
        train.append(perm[n_test:])
    return SplitIndices(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)), seed)


def resample_indices(labels, ratio: float, seed: int) -> np.ndarray:
    """Sorted row indices keeping every minority row and enough majority rows for ``ratio``."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    y = _labels_of(labels)
    counts = np.bincount(y, minlength=2)
    minority = int(np.argmin(counts)) if counts[0] != counts[1] else 1
    majority = 1 - minority
    n_min, n_maj = int(counts[minority]), int(counts[majority])
    if n_min == 0:
        raise InfeasibleRatioError("no minority instances to keep")
    target = int(math.floor(n_min / ratio - n_min + 0.5))
    lowest = n_min / (n_min + n_maj)
    if target > n_maj or target < 1:
        raise InfeasibleRatioError(
            f"ratio {ratio} needs {target} majority rows but {n_maj} exist; "
            f"achievable minority ratios are [{lowest:.6g}, {n_min / (n_min + 1):.6g})"
        )
    rng = np.random.default_rng(seed)
    maj_idx = np.flatnonzero(y == majority)
    keep = rng.choice(maj_idx, size=target, replace=False)
    return np.sort(np.concatenate([np.flatnonzero(y == minority), keep]))


def resample_to_minority_ratio(dataset, ratio: float, seed: int):
    """Undersample the majority class so the minority makes up ``ratio`` of the rows."""
    return dataset.subset(resample_indices(dataset.labels, ratio, seed))


# -- synthetic data ----------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    n: int = 5000
    d: int = 10
    minority_ratio: float = 0.1
    planted: str = "xor_pair"
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.n < 10:
            problems.append("n must be >= 10")
        if self.d < 2:
            problems.append("d must be >= 2")
        if not 0 < self.minority_ratio <= 0.5:
            problems.append("minority_ratio must be in (0, 0.5]")
        if self.planted not in PLANTED:
            problems.append(f"planted must be one of {PLANTED}")
        if not 0 <= self.noise <= 1:
            problems.append("noise must be in [0, 1]")
        if problems:
            raise ValueError("invalid SynthConfig: " + "; ".join(problems))


def _band_feature(rng, on: np.ndarray, p_on: float) -> np.ndarray:
    """Standard-normal values inside the central band ``|x| < t`` where ``on``, outside elsewhere.

    ``t`` is chosen so that ``P(|x| < t) = p_on``; values are drawn by
    inverse-CDF sampling from the matching probability range.
    """
    lo, hi = 0.5 - p_on / 2, 0.5 + p_on / 2
    u = rng.random(on.size)
    inside = lo + u * (hi - lo)
    # outside mass [0, lo) U (hi, 1] mapped from a single uniform
    outside = np.where(u < 0.5, u * 2 * lo, hi + (u - 0.5) * 2 * (1 - hi))
    return ndtri(np.where(on, inside, outside))


def generate_synthetic(cfg: SynthConfig) -> RawDataset:
    """Seeded synthetic classification data with a known planted structure.

    The label vector has exactly ``round(minority_ratio * n)`` positives.
    Feature values are standard normal unless planted:

    ``xor_pair``
        Features 0 and 1 carry band indicators ``b_j = [|x_j| < t]`` and the
        label is their parity.  Band mass ``p`` solves ``2p(1-p) = ratio`` so
        the indicators are close to independent.  With probability ``noise``
        a row's indicator pair is drawn from the opposite parity instead.
        The response of each feature is symmetric about zero, so a model
        linear in the raw values sees no signal.
    ``pairwise``
        Features 0 and 1 are shifted by +1 for positives (flipped with
        probability ``noise``), and feature 2 is correlated with feature 0.
    ``none``
        Labels independent of features.
    """
    rng = np.random.default_rng(cfg.seed)
    n_pos = int(math.floor(cfg.minority_ratio * cfg.n + 0.5))
    y = np.zeros(cfg.n, dtype=np.intp)
    y[:n_pos] = 1
    y = rng.permutation(y)
    x = rng.standard_normal((cfg.n, cfg.d))

    if cfg.planted == "xor_pair":
        r = cfg.minority_ratio
        p = (1 - math.sqrt(1 - 2 * r)) / 2 if r < 0.5 else 0.5
        flip = rng.random(cfg.n) < cfg.noise
        parity = np.where(flip, 1 - y, y)
        u = rng.random(cfg.n)
        b1 = np.empty(cfg.n, dtype=bool)
        b2 = np.empty(cfg.n, dtype=bool)
        # parity 1: (1,0) or (0,1) equally likely
        odd = parity == 1
        b1[odd] = u[odd] < 0.5
        b2[odd] = ~b1[odd]
        # parity 0: (1,1) with the probability it has under independence, else (0,0)
        p11 = p * p / (p * p + (1 - p) ** 2)
        both = u < p11
        b1[~odd] = both[~odd]
        b2[~odd] = both[~odd]
        x[:, 0] = _band_feature(rng, b1, p)
        x[:, 1] = _band_feature(rng, b2, p)
    elif cfg.planted == "pairwise":
        flip = rng.random(cfg.n) < cfg.noise
        shift = np.where(flip, 1 - y, y).astype(np.float64)
        x[:, 0] += shift
        x[:, 1] += shift
        if cfg.d >= 3:
            x[:, 2] = 0.8 * x[:, 0] + 0.6 * x[:, 2]

    names = tuple(f"V{j}" for j in range(1, cfg.d + 1))
    return RawDataset(x, y, names)
