"""Dataset container, binary file formats, and synthetic workload generators.

A dataset is a directory holding little-endian binary matrices plus a JSON
sidecar:

    corpus.vibe           corpus matrix
    queries.vibe          test queries (1000 by default)
    train_queries.vibe    train-query sample (OOD datasets)
    meta.json             name, measure, normalized flag, seed, generator params
    gt_k<k>.vigt          ground truth for the test queries
    train_gt_k<k>.vigt    ground truth for the train queries

Matrix files ("VIBE" magic) carry a 32-byte header: magic, version u32,
dtype u8 (0=f32, 1=u8, 2=packed bits), n u64, d u32, 11 reserved zero
bytes. Bit rows are padded up to whole 64-bit words. Ground-truth files
("VIGT" magic) carry magic, version u32, q u64, k u32, then q*k u32 ids,
q*k f32 distances, and q f32 thresholds, all row-major.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    WORD_BITS,
    BitMatrix,
    Measure,
    normalize,
    normalize_rows,
    row_norms,
)
from .oracle import GroundTruth
from .quantization import binarize, scalar_quantize

FORMAT_VERSION = 1
VIBE_MAGIC = b"VIBE"
VIGT_MAGIC = b"VIGT"
_VIBE_HEADER = struct.Struct("<4sIBQI11x")  # 32 bytes
_VIGT_HEADER = struct.Struct("<4sIQI")  # 20 bytes

DTYPE_F32, DTYPE_U8, DTYPE_BITS = 0, 1, 2
_DTYPE_NAMES = {DTYPE_F32: "f32", DTYPE_U8: "u8", DTYPE_BITS: "bits"}
_DTYPE_CODES = {v: k for k, v in _DTYPE_NAMES.items()}

DEFAULT_TEST_QUERIES = 1000
DEFAULT_TRAIN_QUERIES = 10000
NORM_TOL = 1e-5


class FileFormatError(ValueError):
    """Raised when a binary dataset/ground-truth file is malformed."""


def _rep(mat):
    """(dtype name, n, d) of a matrix in any supported representation."""
    if isinstance(mat, BitMatrix):
        return "bits", mat.n, mat.d
    mat = np.asarray(mat)
    if mat.ndim != 2:
        raise ValueError("matrices must be 2-D")
    if mat.dtype == np.float32:
        return "f32", mat.shape[0], mat.shape[1]
    if mat.dtype == np.uint8:
        return "u8", mat.shape[0], mat.shape[1]
    raise ValueError(f"unsupported matrix dtype {mat.dtype}")


@dataclass
class Dataset:
    """Corpus + query matrices plus the measure they are searched under."""

    name: str
    corpus: object
    test_queries: object
    measure: Measure
    train_queries: object = None
    normalized: bool = False
    seed: int = 0
    generator: dict = field(default_factory=dict)
    scale: np.ndarray = None  # scalar-quantization sidecar params (u8 datasets)
    offset: np.ndarray = None

    def __post_init__(self):
        kind, n, d = _rep(self.corpus)
        qkind, _, qd = _rep(self.test_queries)
        if qkind != kind or qd != d:
            raise ValueError("corpus and test queries must share dtype and dimension")
        if self.train_queries is not None:
            tkind, _, td = _rep(self.train_queries)
            if tkind != kind or td != d:
                raise ValueError(
                    "corpus and train queries must share dtype and dimension"
                )
        if self.measure.is_binary != (kind == "bits"):
            raise ValueError(
                f"measure {self.measure.value} is incompatible with {kind} data"
            )

    @property
    def d(self) -> int:
        return _rep(self.corpus)[2]

    @property
    def n(self) -> int:
        return _rep(self.corpus)[1]

    @property
    def q(self) -> int:
        return _rep(self.test_queries)[1]


def write_matrix(mat, path) -> None:
    """Write one matrix as a VIBE file."""
    kind, n, d = _rep(mat)
    with open(path, "wb") as f:
        f.write(_VIBE_HEADER.pack(VIBE_MAGIC, FORMAT_VERSION, _DTYPE_CODES[kind], n, d))
        if kind == "bits":
            f.write(mat.words.astype("<u8").tobytes())
        elif kind == "f32":
            f.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())
        else:
            f.write(np.ascontiguousarray(mat, dtype=np.uint8).tobytes())


def read_matrix(path):
    """Read a VIBE file back into a float32/uint8 array or BitMatrix."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _VIBE_HEADER.size:
        raise FileFormatError(f"{path}: truncated header")
    magic, version, dtype, n, d = _VIBE_HEADER.unpack_from(blob)
    if magic != VIBE_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    if dtype not in _DTYPE_NAMES:
        raise FileFormatError(f"{path}: unknown dtype code {dtype}")
    if dtype == DTYPE_BITS:
        w = (d + WORD_BITS - 1) // WORD_BITS
        expected = n * w * 8
    else:
        expected = n * d * (4 if dtype == DTYPE_F32 else 1)
    payload = blob[_VIBE_HEADER.size :]
    if len(payload) != expected:
        raise FileFormatError(
            f"{path}: payload size mismatch, expected {expected} bytes, "
            f"got {len(payload)}"
        )
    if dtype == DTYPE_F32:
        return np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float32)
    if dtype == DTYPE_U8:
        return np.frombuffer(payload, dtype=np.uint8).reshape(n, d).copy()
    w = (d + WORD_BITS - 1) // WORD_BITS
    words = np.frombuffer(payload, dtype="<u8").reshape(n, w).astype(np.uint64)
    return BitMatrix(words, d)


def _verify_normalized(mat, path) -> None:
    norms = row_norms(mat)
    if norms.size and np.max(np.abs(norms - 1.0)) > NORM_TOL:
        raise FileFormatError(
            f"{path}: normalized flag is set but row norms deviate from 1"
        )


def write_dataset(ds: Dataset, path, force: bool = False) -> None:
    """Write a dataset directory (matrices + meta.json)."""
    path = Path(path)
    if (path / "meta.json").exists() and not force:
        raise FileExistsError(f"{path} already holds a dataset (use force)")
    path.mkdir(parents=True, exist_ok=True)
    kind, n, d = _rep(ds.corpus)
    write_matrix(ds.corpus, path / "corpus.vibe")
    write_matrix(ds.test_queries, path / "queries.vibe")
    if ds.train_queries is not None:
        write_matrix(ds.train_queries, path / "train_queries.vibe")
    meta = {
        "format_version": FORMAT_VERSION,
        "name": ds.name,
        "measure": ds.measure.value,
        "normalized": ds.normalized,
        "seed": ds.seed,
        "dtype": kind,
        "n": n,
        "d": d,
        "test_queries": _rep(ds.test_queries)[1],
        "train_queries": None
        if ds.train_queries is None
        else _rep(ds.train_queries)[1],
        "generator": ds.generator,
        "scale": None if ds.scale is None else [float(v) for v in ds.scale],
        "offset": None if ds.offset is None else [float(v) for v in ds.offset],
    }
    with open(path / "meta.json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def read_dataset(path) -> Dataset:
    """Read a dataset directory, verifying the sidecar's claims."""
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{meta_path} not found")
    meta = json.loads(meta_path.read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise FileFormatError(
            f"{meta_path}: unsupported format_version {meta.get('format_version')}"
        )
    corpus = read_matrix(path / "corpus.vibe")
    queries = read_matrix(path / "queries.vibe")
    train = None
    if meta.get("train_queries"):
        train = read_matrix(path / "train_queries.vibe")
    measure = Measure.from_string(meta["measure"])
    kind, n, d = _rep(corpus)
    if kind != meta["dtype"] or n != meta["n"] or d != meta["d"]:
        raise FileFormatError(f"{path}: matrices disagree with meta.json")
    if meta["normalized"] and kind == "f32":
        _verify_normalized(corpus, path / "corpus.vibe")
        _verify_normalized(queries, path / "queries.vibe")
        if train is not None:
            _verify_normalized(train, path / "train_queries.vibe")
    ds = Dataset(
        name=meta["name"],
        corpus=corpus,
        test_queries=queries,
        train_queries=train,
        measure=measure,
        normalized=meta["normalized"],
        seed=meta["seed"],
        generator=meta.get("generator", {}),
        scale=None if meta.get("scale") is None else np.asarray(meta["scale"], np.float32),
        offset=None
        if meta.get("offset") is None
        else np.asarray(meta["offset"], np.float32),
    )
    return ds


def gt_path(dataset_dir, k: int) -> Path:
    return Path(dataset_dir) / f"gt_k{k}.vigt"


def train_gt_path(dataset_dir, k: int) -> Path:
    return Path(dataset_dir) / f"train_gt_k{k}.vigt"


def write_ground_truth(gt: GroundTruth, path) -> None:
    q, k = gt.ids.shape
    with open(path, "wb") as f:
        f.write(_VIGT_HEADER.pack(VIGT_MAGIC, FORMAT_VERSION, q, k))
        f.write(gt.ids.astype("<u4").tobytes())
        f.write(gt.dists.astype("<f4").tobytes())
        f.write(gt.thresholds.astype("<f4").tobytes())


def read_ground_truth(path) -> GroundTruth:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _VIGT_HEADER.size:
        raise FileFormatError(f"{path}: truncated header")
    magic, version, q, k = _VIGT_HEADER.unpack_from(blob)
    if magic != VIGT_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    expected = q * k * 4 + q * k * 4 + q * 4
    payload = blob[_VIGT_HEADER.size :]
    if len(payload) != expected:
        raise FileFormatError(
            f"{path}: payload size mismatch, expected {expected} bytes, "
            f"got {len(payload)}"
        )
    ids_end = q * k * 4
    dists_end = ids_end + q * k * 4
    ids = np.frombuffer(payload[:ids_end], dtype="<u4").reshape(q, k).astype(np.int64)
    dists = (
        np.frombuffer(payload[ids_end:dists_end], dtype="<f4")
        .reshape(q, k)
        .astype(np.float32)
    )
    thresholds = np.frombuffer(payload[dists_end:], dtype="<f4").astype(np.float32)
    return GroundTruth(k=k, ids=ids, dists=dists, thresholds=thresholds)


def split_queries(matrix: np.ndarray, q: int, seed: int):
    """Hold out a seeded sample of q rows as queries.

    The sampled rows (in ascending original position) become the queries;
    the remaining rows keep their original order and become the corpus.
    """
    matrix = np.asarray(matrix)
    n = matrix.shape[0]
    if q >= n:
        raise ValueError(f"cannot hold out {q} queries from {n} rows")
    if q == 0:
        return matrix.copy(), matrix[:0].copy()
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(n, size=q, replace=False))
    queries = matrix[picked].copy()
    corpus = np.delete(matrix, picked, axis=0)
    return corpus, queries


def _check_positive(**kwargs):
    for key, value in kwargs.items():
        if value <= 0:
            raise ValueError(f"{key} must be positive, got {value}")


def generate_id_gaussian(
    n: int,
    d: int,
    clusters: int = 16,
    spread: float = 1.0,
    separation: float = 4.0,
    seed: int = 0,
    normalized: bool = True,
    n_queries: int = DEFAULT_TEST_QUERIES,
    measure: Measure = Measure.EUCLIDEAN,
    name: str = None,
) -> Dataset:
    """In-distribution Gaussian-mixture workload.

    Cluster means are drawn from N(0, separation^2 I) and points get
    N(0, spread^2 I) within-cluster noise; spread versus separation dials
    the relative-contrast difficulty. Rows are normalized before the
    query split when ``normalized``.
    """
    _check_positive(n=n, d=d, clusters=clusters, spread=spread)
    if separation < 0:
        raise ValueError("separation must be >= 0")
    if measure.is_binary:
        raise ValueError("gaussian generator produces dense data")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, separation, size=(clusters, d))
    assign = rng.integers(0, clusters, size=n + n_queries)
    points = (means[assign] + rng.normal(0.0, spread, size=(n + n_queries, d))).astype(
        np.float32
    )
    if normalized:
        points = normalize_rows(points)
    corpus, queries = split_queries(points, n_queries, seed)
    return Dataset(
        name=name or f"id-gaussian-n{n}-d{d}-s{seed}",
        corpus=corpus,
        test_queries=queries,
        measure=measure,
        normalized=normalized,
        seed=seed,
        generator={
            "kind": "id-gaussian",
            "n": n,
            "d": d,
            "clusters": clusters,
            "spread": spread,
            "separation": separation,
            "normalized": normalized,
            "n_queries": n_queries,
            "split": "normalize-then-split",
        },
    )


def generate_ood_shifted(
    n: int,
    d: int,
    shift: float,
    seed: int = 0,
    clusters: int = 16,
    spread: float = 1.0,
    separation: float = 1.0,
    normalized: bool = False,
    n_test: int = DEFAULT_TEST_QUERIES,
    n_train: int = DEFAULT_TRAIN_QUERIES,
    name: str = None,
) -> Dataset:
    """Out-of-distribution workload: query cluster means get Gaussian offsets
    drawn with scale shift*separation.

    Each query cluster mean is displaced by its own seeded N(0,
    (shift*separation)^2 I) offset, which pushes queries into low-density
    regions between corpus clusters and spreads their true neighbors over
    many partitions. The corpus stream is drawn before the offsets, so two
    calls differing only in ``shift`` share a bit-identical corpus, and
    shift=0 reproduces the corpus distribution exactly.
    """
    _check_positive(n=n, d=d, clusters=clusters, spread=spread, n_test=n_test, n_train=n_train)
    if shift < 0:
        raise ValueError("shift must be >= 0")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, separation, size=(clusters, d))
    corpus_assign = rng.integers(0, clusters, size=n)
    corpus = (means[corpus_assign] + rng.normal(0.0, spread, size=(n, d))).astype(
        np.float32
    )
    offsets = rng.normal(0.0, shift * separation, size=(clusters, d))
    nq = n_test + n_train
    q_assign = rng.integers(0, clusters, size=nq)
    raw = means[q_assign] + offsets[q_assign] + rng.normal(0.0, spread, size=(nq, d))
    queries = raw.astype(np.float32)
    if normalized:
        corpus = normalize_rows(corpus)
        queries = normalize_rows(queries)
    return Dataset(
        name=name or f"ood-shifted-n{n}-d{d}-shift{shift:g}-s{seed}",
        corpus=corpus,
        test_queries=queries[:n_test],
        train_queries=queries[n_test:],
        measure=Measure.EUCLIDEAN,
        normalized=normalized,
        seed=seed,
        generator={
            "kind": "ood-shifted",
            "n": n,
            "d": d,
            "shift": shift,
            "clusters": clusters,
            "spread": spread,
            "separation": separation,
            "normalized": normalized,
            "n_test": n_test,
            "n_train": n_train,
        },
    )


def generate_ood_mips(
    n: int,
    d: int,
    query_mean_norm: float,
    seed: int = 0,
    n_test: int = DEFAULT_TEST_QUERIES,
    n_train: int = DEFAULT_TRAIN_QUERIES,
    name: str = None,
) -> Dataset:
    """Inner-product workload with mean-shifted, anisotropic queries.

    Corpus rows ("keys") are isotropic Gaussians with log-normal norm
    jitter, so high-norm rows dominate inner products; queries get a mean
    of the requested norm plus per-dimension anisotropic scales.
    """
    _check_positive(n=n, d=d, n_test=n_test, n_train=n_train)
    if d < 2:
        raise ValueError("d must be >= 2")
    if query_mean_norm < 0:
        raise ValueError("query_mean_norm must be >= 0")
    rng = np.random.default_rng(seed)
    corpus = rng.standard_normal((n, d))
    corpus *= np.exp(rng.normal(0.0, 0.3, size=n))[:, None]
    direction = normalize(rng.standard_normal(d))
    aniso = np.exp(rng.normal(0.0, 0.5, size=d))
    nq = n_test + n_train
    queries = rng.standard_normal((nq, d)) * aniso + query_mean_norm * direction
    return Dataset(
        name=name or f"ood-mips-n{n}-d{d}-qn{query_mean_norm:g}-s{seed}",
        corpus=corpus.astype(np.float32),
        test_queries=queries[:n_test].astype(np.float32),
        train_queries=queries[n_test:].astype(np.float32),
        measure=Measure.NEG_INNER_PRODUCT,
        normalized=False,
        seed=seed,
        generator={
            "kind": "ood-mips",
            "n": n,
            "d": d,
            "query_mean_norm": query_mean_norm,
            "n_test": n_test,
            "n_train": n_train,
        },
    )


def binarize_dataset(ds: Dataset, center: bool = False) -> Dataset:
    """Sign-binarized copy of a dense dataset, searched under Hamming.

    Centering thresholds come from the corpus and are applied to the
    queries as well.
    """
    if _rep(ds.corpus)[0] != "f32":
        raise ValueError("binarize_dataset expects a float32 dataset")
    corpus = np.asarray(ds.corpus)
    queries = np.asarray(ds.test_queries)
    train = None if ds.train_queries is None else np.asarray(ds.train_queries)
    if center:
        mu = corpus.mean(axis=0, dtype=np.float64).astype(np.float32)
        corpus = corpus - mu
        queries = queries - mu
        train = None if train is None else train - mu
    return Dataset(
        name=f"{ds.name}-bits",
        corpus=binarize(corpus),
        test_queries=binarize(queries),
        train_queries=None if train is None else binarize(train),
        measure=Measure.HAMMING,
        normalized=False,
        seed=ds.seed,
        generator={"kind": "binarize", "center": center, "source": ds.name},
    )


def scalar_quantize_dataset(ds: Dataset) -> Dataset:
    """8-bit scalar-quantized copy; corpus quantization params apply to queries."""
    if _rep(ds.corpus)[0] != "f32":
        raise ValueError("scalar_quantize_dataset expects a float32 dataset")
    sq = scalar_quantize(np.asarray(ds.corpus))

    def encode(mat):
        codes = np.round((np.asarray(mat) - sq.offset) / sq.scale)
        return np.clip(codes, 0, 255).astype(np.uint8)

    return Dataset(
        name=f"{ds.name}-u8",
        corpus=sq.codes,
        test_queries=encode(ds.test_queries),
        train_queries=None
        if ds.train_queries is None
        else encode(ds.train_queries),
        measure=ds.measure,
        normalized=False,
        seed=ds.seed,
        generator={"kind": "scalar-quantize", "source": ds.name},
        scale=sq.scale,
        offset=sq.offset,
    )
