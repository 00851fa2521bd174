"""Datasets: IDX (MNIST-style) loading, synthetic generators, min-max
normalization and k-fold splits."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path}: {message} (at byte offset {offset})")
        self.path = str(path)
        self.offset = offset


class DatasetSpecError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    normalization: tuple[np.ndarray, np.ndarray] | None = None
    provenance: str = ""

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise ValueError(f"features must be a 2-D matrix, got shape {X.shape}")
        if len(X) < 1:
            raise ValueError("a dataset needs at least one sample")
        if y.shape != (len(X),):
            raise ValueError(f"{y.shape[0] if y.ndim else 0} labels for {len(X)} samples")
        if y.min() < 0 or y.max() >= self.class_count:
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return replace(self, features=self.features[idx], labels=self.labels[idx])


# --- IDX ---------------------------------------------------------------------


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _parse_idx(path, expected_magic: int, ndim: int) -> np.ndarray:
    raw = _read_bytes(path)
    header = 4 + 4 * ndim
    if len(raw) < 4:
        raise IdxFormatError(path, len(raw), "file truncated inside the magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxFormatError(path, 0, f"bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if len(raw) < header:
        raise IdxFormatError(path, len(raw), "file truncated inside the dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims, dtype=np.int64))
    if len(raw) < header + size:
        raise IdxFormatError(path, len(raw), f"file truncated: payload needs {size} bytes after the header")
    if len(raw) > header + size:
        raise IdxFormatError(path, header + size, f"{len(raw) - header - size} unexpected trailing bytes")
    return np.frombuffer(raw, dtype=">u1", count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path, class_count: int | None = None) -> LabeledDataset:
    """Load an unsigned-byte IDX image tensor and its label vector.

    Images are flattened row-major to ``rows * cols`` raw pixel values.
    """
    images = _parse_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _parse_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            labels_path, 4, f"label count {labels.shape[0]} does not match image count {images.shape[0]} in {images_path}"
        )
    n, rows, cols = images.shape
    c = int(labels.max()) + 1 if class_count is None else class_count
    return LabeledDataset(
        images.reshape(n, rows * cols).astype(np.float64),
        labels.astype(np.int64),
        c,
        provenance=f"idx:{images_path}|{labels_path}",
    )


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("IDX image tensors are 3-D (count, rows, cols)")
    Path(path).write_bytes(struct.pack(">I3I", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes())


# --- normalization -----------------------------------------------------------


def minmax_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return X.min(axis=0), X.max(axis=0)


def apply_minmax(X: np.ndarray, stats, clamp: bool = True) -> np.ndarray:
    lo, hi = stats
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (X - lo) / safe, 0.0)
    return np.clip(out, 0.0, 1.0) if clamp else out


def minmax_normalize(dataset: LabeledDataset, stats=None) -> LabeledDataset:
    """Scale each feature to [0, 1] by ``(x - min) / (max - min)``.

    Constant features become 0.  With ``stats`` given (e.g. training-set
    min/max) those are used instead and values are clamped into [0, 1].
    """
    if stats is None:
        stats = minmax_stats(dataset.features)
    stats = (np.asarray(stats[0], dtype=np.float64), np.asarray(stats[1], dtype=np.float64))
    return replace(dataset, features=apply_minmax(dataset.features, stats), normalization=stats)


def denormalize(X: np.ndarray, stats) -> np.ndarray:
    lo, hi = stats
    return X * (hi - lo) + lo


# --- splits --------------------------------------------------------------------


@dataclass(frozen=True)
class FoldSplit:
    folds: tuple[np.ndarray, ...]

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_test(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices of every fold but ``i``, and of fold ``i``."""
        rest = np.concatenate([f for j, f in enumerate(self.folds) if j != i])
        return rest, self.folds[i]


def kfold_split(n: int, k: int, seed: int) -> FoldSplit:
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return FoldSplit(tuple(np.array_split(perm, k)))


# --- synthetic -----------------------------------------------------------------


def _balanced_labels(n: int, classes: int, rng) -> np.ndarray:
    return rng.permutation(np.arange(n) % classes)


def blob_centers(classes: int, spread: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(classes) / classes
    return spread * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def make_blobs(n: int, classes: int = 3, spread: float = 2.0, std: float = 0.5, seed: int = 0) -> LabeledDataset:
    """Gaussian blobs around centers evenly spaced on a circle of radius ``spread``."""
    if n < classes:
        raise ValueError(f"need n >= classes, got n={n}, classes={classes}")
    rng = np.random.default_rng(seed)
    y = _balanced_labels(n, classes, rng)
    X = blob_centers(classes, spread)[y] + std * rng.standard_normal((n, 2))
    spec = f"blobs:n={n},c={classes},spread={spread!r},std={std!r},seed={seed}"
    return LabeledDataset(X, y, classes, provenance=spec)


def make_spirals(n: int, classes: int = 2, turns: float = 1.0, noise: float = 0.0, seed: int = 0) -> LabeledDataset:
    """Interleaved spiral arms, one per class."""
    if n < classes:
        raise ValueError(f"need n >= classes, got n={n}, classes={classes}")
    rng = np.random.default_rng(seed)
    y = _balanced_labels(n, classes, rng)
    t = rng.uniform(0.05, 1.0, size=n)
    theta = 2.0 * np.pi * turns * t + 2.0 * np.pi * y / classes
    X = np.stack([t * np.cos(theta), t * np.sin(theta)], axis=1)
    X += noise * rng.standard_normal((n, 2))
    spec = f"spirals:n={n},c={classes},turns={turns!r},noise={noise!r},seed={seed}"
    return LabeledDataset(X, y, classes, provenance=spec)


# --- spec strings ----------------------------------------------------------------

_GENERATORS = {
    "blobs": (make_blobs, {"n": int, "c": int, "spread": float, "std": float, "seed": int}),
    "spirals": (make_spirals, {"n": int, "c": int, "turns": float, "noise": float, "seed": int}),
}

IDX_NAMES = {
    "mnist": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "fashion-mnist": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
}


def parse_dataset_spec(spec: str) -> tuple[str, dict]:
    """``"blobs:n=3000,c=3,std=0.5,seed=7"`` -> ``("blobs", {...})``."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    params: dict[str, str] = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        if "=" not in item:
            raise DatasetSpecError(f"dataset spec {spec!r}: expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        params[k.strip()] = v.strip()
    return kind, params


def _find_idx_file(data_dir: Path, kind: str, name: str) -> Path:
    tried = []
    for base in (data_dir / kind, data_dir):
        for cand in (name, name.replace("-idx", ".idx"), name + ".gz", name.replace("-idx", ".idx") + ".gz"):
            p = base / cand
            tried.append(str(p))
            if p.is_file():
                return p
    raise FileNotFoundError(f"{kind} file {name!r} not found; tried: {', '.join(tried)}")


def load_dataset(spec: str, data_dir=None) -> LabeledDataset:
    kind, params = parse_dataset_spec(spec)
    if kind in _GENERATORS:
        fn, types = _GENERATORS[kind]
        unknown = set(params) - set(types)
        if unknown:
            raise DatasetSpecError(f"dataset spec {spec!r}: unknown keys {sorted(unknown)}")
        try:
            kwargs = {k: types[k](v) for k, v in params.items()}
        except ValueError as exc:
            raise DatasetSpecError(f"dataset spec {spec!r}: {exc}") from None
        if "c" in kwargs:
            kwargs["classes"] = kwargs.pop("c")
        if "n" not in kwargs:
            raise DatasetSpecError(f"dataset spec {spec!r}: missing 'n'")
        return fn(**kwargs)

    if kind in IDX_NAMES or kind == "idx":
        if data_dir is None:
            raise DatasetSpecError(f"dataset {kind!r} needs --data-dir")
        data_dir = Path(data_dir)
        if not data_dir.is_dir():
            raise FileNotFoundError(f"data directory not found: {data_dir}")
        if kind == "idx":
            try:
                images, labels = data_dir / params["images"], data_dir / params["labels"]
            except KeyError as exc:
                raise DatasetSpecError(f"dataset spec {spec!r}: missing {exc.args[0]!r}") from None
            for p in (images, labels):
                if not p.is_file():
                    raise FileNotFoundError(f"IDX file not found: {p}")
        else:
            images = _find_idx_file(data_dir, kind, IDX_NAMES[kind][0])
            labels = _find_idx_file(data_dir, kind, IDX_NAMES[kind][1])
        ds = load_idx(images, labels, class_count=int(params["c"]) if "c" in params else None)
        if "subset" in params:
            m = int(params["subset"])
            if not 1 <= m <= ds.n:
                raise DatasetSpecError(f"subset={m} outside [1, {ds.n}]")
            idx = np.random.default_rng(int(params.get("seed", 0))).permutation(ds.n)[:m]
            ds = replace(ds.subset(idx), provenance=f"{ds.provenance}|subset={m},seed={params.get('seed', 0)}")
        return ds

    raise DatasetSpecError(f"unknown dataset kind {kind!r} in {spec!r}")
