"""Image ingestion, PCA, normalization, quantum labels and dataset splits for the regression task."""

from __future__ import annotations

import gzip
import hashlib
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ansatz as ansatz_mod
from . import encodings
from .learning import Dataset
from .models import ExplicitModel
from .simulator import Observable

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class ImageSet:
    images: np.ndarray  # (count, rows, cols) uint8

    @property
    def count(self) -> int:
        return self.images.shape[0]

    def flat(self) -> np.ndarray:
        return self.images.reshape(self.count, -1).astype(float)


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_idx(path) -> ImageSet:
    """Parse an IDX image file (magic 0x00000803, big-endian count/rows/cols, then pixels)."""
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise IdxFormatError(f"header needs 16 bytes, file has {len(raw)}", len(raw))
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(f"bad magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}", 0)
    need = 16 + count * rows * cols
    if len(raw) < need:
        raise IdxFormatError(f"truncated pixel data: header promises {need} bytes, file has {len(raw)}", len(raw))
    pixels = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16)
    return ImageSet(pixels.reshape(count, rows, cols).copy())


def write_idx(path, images: np.ndarray):
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IMAGE_MAGIC, count, rows, cols) + images.tobytes())


def synthetic_images(count: int, rng: np.random.Generator, side: int = 28, rank: int = 12) -> ImageSet:
    """Gaussian images with low-rank structure, for runs without the real dataset."""
    basis = rng.normal(size=(rank, side * side)) * np.linspace(1.0, 0.2, rank)[:, None]
    latent = rng.normal(size=(count, rank))
    pix = 128 + 40 * (latent @ basis) / math.sqrt(rank) + 8 * rng.normal(size=(count, side * side))
    return ImageSet(np.clip(np.rint(pix), 0, 255).astype(np.uint8).reshape(count, side, side))


def synthetic_pools(train_count: int, test_count: int, rng: np.random.Generator, **kw) -> tuple[ImageSet, ImageSet]:
    """Train and test pools drawn from one shared synthetic distribution."""
    imgs = synthetic_images(train_count + test_count, rng, **kw).images
    return ImageSet(imgs[:train_count]), ImageSet(imgs[train_count:])


# --------------------------------------------------------------------------
# PCA


def jacobi_eigh(a, tol: float = 1e-10, max_sweeps: int = 60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations on disjoint index pairs are applied simultaneously, pairs
    scheduled round-robin, until the off-diagonal Frobenius norm drops below
    ``tol`` times the matrix norm. Returns (eigenvalues, eigenvectors as
    columns), unsorted.
    """
    a = np.array(a, dtype=float)
    m = a.shape[0]
    if a.shape != (m, m) or not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("jacobi_eigh needs a symmetric matrix")
    v = np.eye(m)
    size = m + (m % 2)
    scale = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = math.sqrt(max(float(np.sum(a * a) - np.sum(np.diag(a) ** 2)), 0.0))
        if off <= tol * scale:
            break
        order = np.arange(size)
        for _ in range(size - 1):
            p = order[: size // 2]
            q = order[size // 2 :][::-1]
            keep = (p < m) & (q < m)
            p, q = p[keep], q[keep]
            apq = a[p, q]
            live = np.abs(apq) > 1e-300
            p, q, apq = p[live], q[live], apq[live]
            if p.size:
                theta = (a[q, q] - a[p, p]) / (2 * apq)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1))
                c = 1 / np.sqrt(t * t + 1)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c[:, None] * ap - s[:, None] * aq
                a[q, :] = s[:, None] * ap + c[:, None] * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
            order = np.concatenate(([order[0]], [order[-1]], order[1:-1]))
    return np.diag(a).copy(), v


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (n, features), rows orthonormal
    variances: np.ndarray

    @property
    def n(self) -> int:
        return self.components.shape[0]


def fit_pca(X, n: int, method: str = "lapack") -> PcaModel:
    """Top-n principal directions of the sample covariance.

    ``method="lapack"`` uses numpy's symmetric eigensolver; ``"jacobi"`` uses
    :func:`jacobi_eigh`. Each component is signed so its largest-magnitude
    entry is positive.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("PCA expects a 2-D sample matrix")
    if not 1 <= n <= X.shape[1]:
        raise ValueError(f"n={n} outside 1..{X.shape[1]}")
    if X.shape[0] < max(n, 2):
        raise ValueError(f"need at least {max(n, 2)} samples for {n} components, got {X.shape[0]}")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)
    if method == "lapack":
        w, v = np.linalg.eigh(cov)
    elif method == "jacobi":
        w, v = jacobi_eigh(cov)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    order = np.argsort(-w, kind="stable")[:n]
    comps = v[:, order].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return PcaModel(mean, comps, w[order].copy())


def project(pca: PcaModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return (X - pca.mean) @ pca.components.T


def reconstruct(pca: PcaModel, Z) -> np.ndarray:
    return np.asarray(Z) @ pca.components + pca.mean


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Normalizer":
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            raise ValueError("cannot normalize an empty sample")
        std = X.std(axis=0)
        flat = np.flatnonzero(std <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0)))
        if flat.size:
            raise ValueError(f"components {flat.tolist()} have zero variance")
        return cls(X.mean(axis=0), std)

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


def normalize_components(X):
    """Fit a per-component standardizer on X; returns (normalized X, the fitted map)."""
    norm = Normalizer.fit(X)
    return norm.apply(X), norm


# --------------------------------------------------------------------------
# labels and splits


@dataclass(frozen=True)
class LabelModel:
    theta: np.ndarray
    w_norm: float
    layers: int
    ansatz: str

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.theta, dtype="<f8").tobytes()).hexdigest()


def label_teacher(n: int, kind: str = "hea", layers: int | None = None) -> ExplicitModel:
    L = ansatz_mod.layer_schedule(n) if layers is None else layers
    return ExplicitModel(encodings.havlicek(n), ansatz_mod.build(kind, n, L), Observable.z(0, n))


def generate_labels(X_train, rng: np.random.Generator, kind: str = "hea", layers: int | None = None):
    """Random-teacher labels w_norm <Z_0> with theta ~ U[0, 2 pi) and w_norm giving unit training std.

    Returns (raw-label function, LabelModel); call ``label(X)`` on any split
    to obtain the rescaled labels.
    """
    X_train = np.asarray(X_train, dtype=float)
    n = X_train.shape[1]
    teacher = label_teacher(n, kind, layers)
    theta = rng.uniform(0, 2 * math.pi, size=teacher.num_params)
    raw = teacher.expectations(theta, X_train)
    spread = float(raw.std())
    if spread < 1e-12:
        raise ValueError("teacher outputs are constant on the training split; cannot normalize labels")
    label_model = LabelModel(theta, 1.0 / spread, teacher.variational.num_params // (3 * n), kind)

    def label(X):
        return label_model.w_norm * teacher.expectations(theta, X)

    return label, label_model


@dataclass
class RegressionData:
    train: Dataset
    validation: Dataset
    test: Dataset
    labels: LabelModel
    meta: dict


def make_splits(pool_train: int, pool_test: int, rng: np.random.Generator, M_train=1000, M_val=100, M_test=100):
    """Index sets: training from the training pool, validation and test disjoint from the test pool."""
    if M_train > pool_train:
        raise ValueError(f"training pool has {pool_train} items, {M_train} requested")
    if M_val + M_test > pool_test:
        raise ValueError(f"test pool has {pool_test} items, {M_val + M_test} requested")
    train_idx = rng.choice(pool_train, size=M_train, replace=False)
    rest = rng.choice(pool_test, size=M_val + M_test, replace=False)
    return train_idx, rest[:M_val], rest[M_val:]


def build_regression_data(
    n: int,
    rng: np.random.Generator,
    train_images: ImageSet,
    test_images: ImageSet,
    M_train: int = 1000,
    M_val: int = 100,
    M_test: int = 100,
    ansatz: str = "hea",
    layers: int | None = None,
    pca_method: str = "lapack",
) -> RegressionData:
    """PCA and normalization fitted on the training pool, then sampling and teacher labels."""
    pool = train_images.flat()
    pca = fit_pca(pool, n, pca_method)
    norm = Normalizer.fit(project(pca, pool))
    tr, va, te = make_splits(train_images.count, test_images.count, rng, M_train, M_val, M_test)
    X_train = norm.apply(project(pca, pool[tr]))
    test_pool = test_images.flat()
    X_val = norm.apply(project(pca, test_pool[va]))
    X_test = norm.apply(project(pca, test_pool[te]))
    label, label_model = generate_labels(X_train, rng, ansatz, layers)
    meta = {
        "n": n,
        "layers": label_model.layers,
        "ansatz": ansatz,
        "w_norm": label_model.w_norm,
        "theta_sha256": label_model.digest(),
        "sizes": [M_train, M_val, M_test],
        "pca_fit": "training pool",
        "normalization": "after projection, fitted on training pool",
    }
    return RegressionData(
        Dataset(X_train, label(X_train), "train"),
        Dataset(X_val, label(X_val), "validation"),
        Dataset(X_test, label(X_test), "test"),
        label_model,
        meta,
    )


def write_split(path, data: Dataset):
    n = data.inputs.shape[1]
    lines = [",".join([f"x_{i + 1}" for i in range(n)] + ["y"])]
    for x, y in zip(data.inputs, data.labels):
        lines.append(",".join(repr(float(v)) for v in (*x, y)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_split(path, split: str = "train") -> Dataset:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Dataset(arr[:, :-1], arr[:, -1], split)


def persist(data: RegressionData, directory, seed: int) -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for ds in (data.train, data.validation, data.test):
        write_split(directory / f"{ds.split}.csv", ds)
    sidecar = dict(data.meta, seed=seed)
    (directory / "dataset.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return sidecar
