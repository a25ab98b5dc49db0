"""Datasets, the synthetic Gaussian-mixture domain, composition and loaders."""

import csv
import hashlib
import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError, ParseError, SamplingError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

#: Draws allowed per requested sample in :func:`sample_disjoint`.
DISJOINT_BUDGET_FACTOR = 100


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable labeled samples: ``features`` (N x d) and ``labels`` (N)."""

    features: np.ndarray
    labels: np.ndarray
    id: str
    num_classes: int | None = None

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64, order="C")
        y = np.asarray(self.labels)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise InputError(f"dataset {self.id!r}: features must be N x d with N, d >= 1")
        if y.shape != (x.shape[0],):
            raise InputError(f"dataset {self.id!r}: need exactly one label per row")
        if y.dtype.kind == "f":
            if not np.all(np.mod(y, 1) == 0):
                raise InputError(f"dataset {self.id!r}: labels must be integers")
        elif y.dtype.kind not in "iu":
            raise InputError(f"dataset {self.id!r}: labels must be integers")
        y = y.astype(np.int64)
        m = int(y.max()) + 1 if self.num_classes is None else int(self.num_classes)
        if y.min() < 0 or y.max() >= m:
            raise InputError(f"dataset {self.id!r}: labels must lie in [0, {m - 1}]")
        if not np.all(np.isfinite(x)):
            raise InputError(f"dataset {self.id!r}: features must be finite")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "num_classes", m)

    def __len__(self):
        return self.features.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def take(self, idx, new_id):
        return Dataset(self.features[idx], self.labels[idx], new_id, self.num_classes)


@dataclass(frozen=True)
class OverlapReport:
    shared_sample_count: int
    fraction_of_query: float


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Gaussian mixture with one isotropic component per class.

    ``scales[k]`` is the standard deviation of every feature in class ``k``.
    ``seed`` records how the means were generated (see :meth:`generate`).
    """

    means: np.ndarray
    scales: np.ndarray
    seed: int = 0

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64)
        scales = np.array(self.scales, dtype=np.float64).reshape(-1)
        if means.ndim != 2 or means.shape[0] < 2 or means.shape[1] < 1:
            raise ConfigError("domain needs at least 2 classes and 1 feature")
        if scales.shape != (means.shape[0],):
            raise ConfigError("domain needs one covariance scale per class")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(scales)):
            raise ConfigError("domain parameters must be finite")
        if np.any(scales <= 0):
            raise ConfigError("covariance scales must be positive")
        means.flags.writeable = False
        scales.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)

    @property
    def num_classes(self):
        return self.means.shape[0]

    @property
    def feature_dim(self):
        return self.means.shape[1]

    @property
    def digest(self):
        h = hashlib.sha256(self.means.tobytes() + self.scales.tobytes())
        return h.hexdigest()[:10]

    @classmethod
    def generate(cls, num_classes, feature_dim, separation=1.0, scale=1.0, seed=0):
        """Class means i.i.d. N(0, separation^2 I), shared scale."""
        if num_classes < 2 or feature_dim < 1:
            raise ConfigError("domain needs at least 2 classes and 1 feature")
        rng = np.random.default_rng([seed, 0xD0])
        means = separation * rng.standard_normal((num_classes, feature_dim))
        return cls(means, np.full(num_classes, float(scale)), seed)

    def shifted(self, distance, seed=0):
        """Same mixture with every mean moved by one random vector of length ``distance``."""
        rng = np.random.default_rng([seed, 0x5F])
        direction = rng.standard_normal(self.feature_dim)
        direction /= np.linalg.norm(direction)
        return DomainSpec(self.means + distance * direction, self.scales, self.seed)

    def provider(self, offset, seed=0):
        """A data provider's variant of this domain.

        Each class mean moves by its own random vector with expected length
        ``offset``; labels keep their meaning. ``offset=0`` returns ``self``.
        """
        if offset == 0:
            return self
        rng = np.random.default_rng([seed, 0x9E])
        moves = rng.standard_normal(self.means.shape) / math.sqrt(self.feature_dim)
        return DomainSpec(self.means + offset * moves, self.scales, self.seed)

    def to_dict(self):
        return {
            "means": self.means.tolist(),
            "scales": self.scales.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        """Build from explicit ``means``/``scales`` or from generator keys.

        Generator form: ``num_classes``, ``feature_dim`` and optionally
        ``separation``, ``scale``, ``seed``.
        """
        d = dict(d)
        try:
            if "means" in d:
                means = d["means"]
                scales = d.get("scales", 1.0)
                if np.ndim(scales) == 0:
                    scales = [float(scales)] * len(means)
                return cls(means, scales, int(d.get("seed", 0)))
            return cls.generate(
                int(d["num_classes"]),
                int(d["feature_dim"]),
                float(d.get("separation", 1.0)),
                float(d.get("scale", 1.0)),
                int(d.get("seed", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"domain spec missing key {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid domain spec: {exc}") from None


def _draw(spec, rng, n):
    labels = rng.integers(0, spec.num_classes, size=n)
    noise = rng.standard_normal((n, spec.feature_dim))
    features = spec.means[labels] + spec.scales[labels, None] * noise
    return features, labels


def sample_domain(spec, n, seed):
    """``n`` samples: uniform label, then that class's Gaussian."""
    if not isinstance(spec, DomainSpec):
        raise ConfigError("spec must be a DomainSpec")
    n = _positive_count(n)
    rng = np.random.default_rng([seed, 0xA1])
    features, labels = _draw(spec, rng, n)
    return Dataset(features, labels, f"domain:{spec.digest}:n{n}:s{seed}", spec.num_classes)


def subset_fraction(data, fraction, seed, keep_order=False):
    """floor(fraction * N) rows drawn without replacement.

    Rows come out in random order unless ``keep_order`` is set, in which case
    they keep their order in ``data`` (so fraction 1.0 returns ``data``'s rows
    unchanged).
    """
    if not 0 < fraction <= 1:
        raise InputError(f"fraction must lie in (0, 1], got {fraction}")
    k = math.floor(fraction * len(data))
    if k == 0:
        raise InputError(f"fraction {fraction} of {len(data)} rows leaves no samples")
    idx = np.random.default_rng([seed, 0xB2]).permutation(len(data))[:k]
    if keep_order:
        idx = np.sort(idx)
    return data.take(idx, f"{data.id}|frac{fraction:g}:s{seed}")


def mix(a, b):
    """Concatenate ``a`` then ``b``."""
    for d in (a, b):
        if not isinstance(d, Dataset):
            raise InputError("mix expects two non-empty Datasets")
    if a.feature_dim != b.feature_dim:
        raise InputError(f"feature dimensions differ: {a.feature_dim} vs {b.feature_dim}")
    if a.num_classes != b.num_classes:
        raise InputError(f"label spaces differ: {a.num_classes} vs {b.num_classes} classes")
    return Dataset(
        np.concatenate([a.features, b.features]),
        np.concatenate([a.labels, b.labels]),
        f"mix({a.id},{b.id})",
        a.num_classes,
    )


def _row_keys(x):
    x = np.ascontiguousarray(x)
    return x.view(np.dtype((np.void, x.itemsize * x.shape[1]))).reshape(-1)


def _labeled_row_keys(data):
    return _row_keys(np.concatenate([data.features.view(np.int64), data.labels[:, None]], axis=1))


def sample_disjoint(spec, n, exclude, seed):
    """``n`` domain samples, none of whose feature rows appear in ``exclude``.

    Rejection sampling with a budget of ``DISJOINT_BUDGET_FACTOR * n`` draws.
    """
    n = _positive_count(n)
    if exclude.feature_dim != spec.feature_dim:
        raise InputError("exclusion set has a different feature dimension")
    banned = set(_row_keys(exclude.features).tolist())
    rng = np.random.default_rng([seed, 0xC3])
    budget = DISJOINT_BUDGET_FACTOR * n
    drawn = 0
    feats, labs = [], []
    have = 0
    while have < n:
        want = min(n - have, budget - drawn)
        if want <= 0:
            raise SamplingError(
                f"drew {drawn} samples but only {have} of {n} avoid the exclusion set"
            )
        f, lab = _draw(spec, rng, want)
        drawn += want
        keep = np.array([k not in banned for k in _row_keys(f).tolist()], dtype=bool)
        feats.append(f[keep])
        labs.append(lab[keep])
        have += int(keep.sum())
    return Dataset(
        np.concatenate(feats),
        np.concatenate(labs),
        f"domain:{spec.digest}:n{n}:s{seed}:excl({exclude.id})",
        spec.num_classes,
    )


def overlap_report(a, b):
    """Rows of ``a`` (features and label) that also occur in ``b``.

    Duplicates count as a multiset intersection, so the count never exceeds
    ``min(len(a), len(b))``. The fraction is relative to ``a``.
    """
    if a.feature_dim != b.feature_dim:
        raise InputError(f"feature dimensions differ: {a.feature_dim} vs {b.feature_dim}")
    ca = Counter(_labeled_row_keys(a).tolist())
    cb = Counter(_labeled_row_keys(b).tolist())
    shared = sum(min(k, cb[key]) for key, k in ca.items() if key in cb)
    return OverlapReport(shared, shared / len(a))


def _positive_count(n):
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise InputError(f"sample count must be a positive integer, got {n!r}")
    return int(n)


# -- loaders ---------------------------------------------------------------


def _read_be_u32(blob, offset, path, what):
    if offset + 4 > len(blob):
        raise ParseError(f"truncated file while reading {what}", path=path, offset=offset)
    return struct.unpack_from(">I", blob, offset)[0]


def load_idx(images_path, labels_path, num_classes=None):
    """MNIST-style IDX image and label files.

    Pixels are scaled to [0, 1] and each image flattened row-major.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    img = images_path.read_bytes()
    lab = labels_path.read_bytes()

    magic = _read_be_u32(img, 0, images_path, "magic")
    if magic != IDX_IMAGES_MAGIC:
        raise ParseError(
            f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}",
            path=images_path, offset=0,
        )
    count = _read_be_u32(img, 4, images_path, "image count")
    rows = _read_be_u32(img, 8, images_path, "row count")
    cols = _read_be_u32(img, 12, images_path, "column count")
    need = 16 + count * rows * cols
    if len(img) < need:
        raise ParseError(
            f"expected {count * rows * cols} pixel bytes, found {len(img) - 16}",
            path=images_path, offset=len(img),
        )
    if len(img) > need:
        raise ParseError("trailing bytes after pixel data", path=images_path, offset=need)

    magic = _read_be_u32(lab, 0, labels_path, "magic")
    if magic != IDX_LABELS_MAGIC:
        raise ParseError(
            f"bad label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}",
            path=labels_path, offset=0,
        )
    n_labels = _read_be_u32(lab, 4, labels_path, "label count")
    if n_labels != count:
        raise ParseError(
            f"label count {n_labels} does not match image count {count}",
            path=labels_path, offset=4,
        )
    if len(lab) != 8 + n_labels:
        raise ParseError(
            f"expected {n_labels} label bytes, found {len(lab) - 8}",
            path=labels_path, offset=min(len(lab), 8 + n_labels),
        )
    if count == 0:
        raise ParseError("IDX files contain no samples", path=images_path, offset=4)

    pixels = np.frombuffer(img, dtype=np.uint8, offset=16).reshape(count, rows * cols)
    labels = np.frombuffer(lab, dtype=np.uint8, offset=8).astype(np.int64)
    try:
        return Dataset(pixels / 255.0, labels, f"idx:{images_path.name}", num_classes)
    except InputError as exc:
        raise ParseError(str(exc), path=labels_path, offset=8) from exc


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, header=None, num_classes=None):
    """Comma-separated features with a trailing integer label column.

    ``header=None`` auto-detects a header line (any non-numeric cell in the
    first row); ``True``/``False`` force it.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or all(not r for r in rows):
        raise ParseError("file is empty", path=path, line=1)
    start = 0
    if header is None:
        header = not all(_is_number(c) for c in rows[0])
    if header:
        start = 1
    feats, labels = [], []
    width = None
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row:
            continue
        if len(row) < 2:
            raise ParseError("need at least one feature and a label", path=path, line=lineno)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(
                f"expected {width} columns, found {len(row)}", path=path, line=lineno
            )
        try:
            feats.append([float(c) for c in row[:-1]])
        except ValueError:
            raise ParseError("non-numeric feature cell", path=path, line=lineno) from None
        try:
            labels.append(int(row[-1]))
        except ValueError:
            raise ParseError(
                f"label {row[-1]!r} is not an integer", path=path, line=lineno
            ) from None
        if labels[-1] < 0:
            raise ParseError("negative label", path=path, line=lineno)
    if not feats:
        raise ParseError("no data rows", path=path, line=start + 1)
    try:
        return Dataset(np.array(feats), np.array(labels), f"csv:{path.name}", num_classes)
    except InputError as exc:
        raise ParseError(str(exc), path=path) from exc


def write_csv(data, path, header=True):
    """Write ``data`` in the format :func:`load_csv` reads (17 significant digits)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"x{i}" for i in range(data.feature_dim)] + ["label"])
        for row, label in zip(data.features, data.labels):
            w.writerow([format(v, ".17g") for v in row] + [int(label)])
