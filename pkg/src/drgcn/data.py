"""Portable graph container format, split construction, synthetic fixtures.

On-disk layout (all integers little-endian, features f32 on disk / f64 in
memory):

    meta.json     {"name", "n", "e", "d", "c", "format_version": 1}
    features.bin  magic "GCF1" + u64 rows + u64 cols + rows*cols f32 row-major
    edges.bin     magic "GCE1" + u64 count + count x (u32, u32) pairs
    labels.bin    magic "GCL1" + u64 n + n x u32 class ids (0xFFFFFFFF = none)
    splits.json   {"train": [...], "valid": [...], "test": [...]}

Edges are stored as given; symmetrization and dedup happen on load.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Rng
from .graph import Graph

__all__ = ["Dataset", "SplitSpec", "DataError", "SplitError", "read_container",
           "write_container", "make_split", "gen_synthetic", "datasets_equal",
           "row_normalize_features"]

FORMAT_VERSION = 1
UNLABELED = 0xFFFFFFFF
_MAGICS = {"features.bin": b"GCF1", "edges.bin": b"GCE1", "labels.bin": b"GCL1"}
MASK_NAMES = ("train", "valid", "test")


class DataError(ValueError):
    pass


class SplitError(DataError):
    pass


@dataclass
class Dataset:
    """Features, labels (-1 = unlabeled), graph, and split masks."""

    graph: Graph
    x: np.ndarray            # n x d float64 (f32-representable values)
    y: np.ndarray            # n int64, -1 for unlabeled
    masks: dict[str, np.ndarray]
    meta: dict

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_features(self) -> int:
        return int(self.x.shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.meta["c"])

    def validate(self) -> None:
        n, d, c = self.n, self.num_features, self.num_classes
        if self.x.shape != (n, d):
            raise DataError(f"feature shape {self.x.shape} != ({n}, {d})")
        if self.y.shape != (n,):
            raise DataError("label count != node count")
        labeled = self.y[self.y >= 0]
        if labeled.size and labeled.max() >= c:
            raise DataError("class id out of range")
        if int(self.meta["n"]) != n:
            raise DataError("meta node count mismatch")
        if int(self.meta["d"]) != d:
            raise DataError("meta feature count mismatch")
        # masks may reference unlabeled nodes (hidden test labels); training
        # enforces labeled train/valid masks separately
        seen = np.zeros(n, dtype=bool)
        for name in MASK_NAMES:
            idx = self.masks[name]
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise DataError(f"{name} mask index out of range")
            if seen[idx].any():
                raise DataError(f"{name} mask overlaps another mask")
            seen[idx] = True


def row_normalize_features(ds: Dataset) -> Dataset:
    """Scale each feature row by its L1 mass, the usual bag-of-words
    preprocessing for the citation benchmarks; zero rows are left alone."""
    sums = np.abs(ds.x).sum(axis=1, keepdims=True)
    x = np.divide(ds.x, sums, out=ds.x.copy(), where=sums > 0.0)
    return Dataset(graph=ds.graph, x=x, y=ds.y, masks=dict(ds.masks),
                   meta=dict(ds.meta))


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    return (a.graph.n == b.graph.n
            and np.array_equal(a.graph.edges, b.graph.edges)
            and np.array_equal(a.x, b.x)
            and np.array_equal(a.y, b.y)
            and all(np.array_equal(a.masks[k], b.masks[k]) for k in MASK_NAMES)
            and a.meta == b.meta)


@dataclass
class SplitSpec:
    train_size: int
    valid_size: int
    test_size: int
    mode: str = "fixed_public"      # or "seeded_random"
    seed: int = 0

    def validate(self, n: int) -> None:
        sizes = (self.train_size, self.valid_size, self.test_size)
        if any(s <= 0 for s in sizes):
            raise SplitError("split sizes must be positive")
        if sum(sizes) > n:
            raise SplitError(f"split sizes {sizes} exceed {n} nodes")
        if self.mode not in ("fixed_public", "seeded_random"):
            raise SplitError(f"unknown split mode {self.mode!r}")


# ---------------------------------------------------------------------------
# binary helpers

def _read_exact(path: Path, magic: bytes) -> bytes:
    if not path.is_file():
        raise DataError(f"missing file: {path.name}")
    blob = path.read_bytes()
    if blob[:4] != magic:
        raise DataError(f"{path.name}: bad magic {blob[:4]!r}, want {magic!r}")
    return blob


def _expect_len(path_name: str, blob: bytes, expected: int) -> None:
    if len(blob) != expected:
        raise DataError(f"{path_name}: expected {expected} bytes, "
                        f"got {len(blob)} (truncated or trailing data)")


def read_container(path) -> Dataset:
    """Load and fully validate a container directory."""
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"container directory not found: {root}")
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise DataError("missing file: meta.json")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    for key in ("name", "n", "e", "d", "c", "format_version"):
        if key not in meta:
            raise DataError(f"meta.json: missing key {key!r}")
    if int(meta["format_version"]) != FORMAT_VERSION:
        raise DataError(f"unsupported format_version {meta['format_version']}")
    n, d, c = int(meta["n"]), int(meta["d"]), int(meta["c"])

    blob = _read_exact(root / "features.bin", _MAGICS["features.bin"])
    rows, cols = struct.unpack_from("<QQ", blob, 4)
    _expect_len("features.bin", blob, 20 + rows * cols * 4)
    if (rows, cols) != (n, d):
        raise DataError(f"features.bin is {rows}x{cols}, meta says {n}x{d}")
    x = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=20)
    x = x.astype(np.float64).reshape(rows, cols)

    blob = _read_exact(root / "edges.bin", _MAGICS["edges.bin"])
    (count,) = struct.unpack_from("<Q", blob, 4)
    _expect_len("edges.bin", blob, 12 + count * 8)
    if count != int(meta["e"]):
        raise DataError(f"edges.bin holds {count} pairs, meta says {meta['e']}")
    pairs = np.frombuffer(blob, dtype="<u4", count=count * 2, offset=12)
    pairs = pairs.astype(np.int64).reshape(-1, 2)
    if pairs.size and pairs.max() >= n:
        raise DataError("edges.bin: endpoint index out of range")

    blob = _read_exact(root / "labels.bin", _MAGICS["labels.bin"])
    (ln,) = struct.unpack_from("<Q", blob, 4)
    _expect_len("labels.bin", blob, 12 + ln * 4)
    if ln != n:
        raise DataError(f"labels.bin holds {ln} labels, meta says {n}")
    raw = np.frombuffer(blob, dtype="<u4", count=ln, offset=12)
    y = np.where(raw == UNLABELED, -1, raw.astype(np.int64))

    splits_path = root / "splits.json"
    if not splits_path.is_file():
        raise DataError("missing file: splits.json")
    splits = json.loads(splits_path.read_text(encoding="utf-8"))
    masks = {}
    for name in MASK_NAMES:
        if name not in splits:
            raise DataError(f"splits.json: missing mask {name!r}")
        masks[name] = np.asarray(splits[name], dtype=np.int64)

    ds = Dataset(graph=Graph(n, pairs), x=x, y=y, masks=masks, meta={
        "name": str(meta["name"]), "n": n, "e": int(meta["e"]), "d": d,
        "c": c, "format_version": FORMAT_VERSION,
    })
    ds.validate()
    return ds


def write_container(ds: Dataset, path) -> None:
    """Write a container; the deduplicated edge list is what gets stored."""
    ds.validate()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    edges = ds.graph.edges
    meta = dict(ds.meta)
    meta["e"] = int(edges.shape[0])
    (root / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8")

    feat = bytearray(_MAGICS["features.bin"])
    feat += struct.pack("<QQ", ds.n, ds.num_features)
    feat += ds.x.astype("<f4").tobytes()
    (root / "features.bin").write_bytes(bytes(feat))

    eb = bytearray(_MAGICS["edges.bin"])
    eb += struct.pack("<Q", edges.shape[0])
    eb += edges.astype("<u4").tobytes()
    (root / "edges.bin").write_bytes(bytes(eb))

    lb = bytearray(_MAGICS["labels.bin"])
    lb += struct.pack("<Q", ds.n)
    raw = np.where(ds.y < 0, UNLABELED, ds.y).astype("<u4")
    lb += raw.tobytes()
    (root / "labels.bin").write_bytes(bytes(lb))

    payload = {name: [int(i) for i in ds.masks[name]] for name in MASK_NAMES}
    (root / "splits.json").write_text(
        json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# splits

def _stratified_draw(pool: np.ndarray, labels: np.ndarray, size: int,
                     rng: Rng) -> np.ndarray:
    """Class-stratified sample from pool, proportional with largest remainder."""
    classes, counts = np.unique(labels[pool], return_counts=True)
    quota = counts * (size / counts.sum())
    take = np.floor(quota).astype(np.int64)
    rem = quota - take
    short = size - take.sum()
    for i in np.argsort(-rem)[:short]:
        take[i] += 1
    take = np.minimum(take, counts)
    deficit = size - take.sum()
    while deficit > 0:  # classes exhausted by rounding; spill to the largest
        room = counts - take
        i = int(np.argmax(room))
        if room[i] == 0:
            raise SplitError("stratified draw cannot reach requested size")
        grab = min(deficit, room[i])
        take[i] += grab
        deficit -= grab
    picked = []
    for cls, k in zip(classes, take):
        members = pool[labels[pool] == cls]
        sel = rng.split(f"class/{cls}").choice(members.size, int(k))
        picked.append(members[np.sort(sel)])
    return np.sort(np.concatenate(picked))


def make_split(ds: Dataset, spec: SplitSpec) -> Dataset:
    """New Dataset with masks resized/redrawn per spec; data is shared."""
    spec.validate(ds.n)
    shipped_valid = ds.masks["valid"]
    shipped_test = ds.masks["test"]
    if spec.valid_size > shipped_valid.size or spec.test_size > shipped_test.size:
        raise SplitError("valid/test sizes exceed the shipped masks")
    valid = shipped_valid[:spec.valid_size]
    test = shipped_test[:spec.test_size]

    if spec.mode == "fixed_public":
        shipped_train = ds.masks["train"]
        if spec.train_size > shipped_train.size:
            raise SplitError(
                f"fixed_public train size {spec.train_size} exceeds the "
                f"shipped pool of {shipped_train.size}")
        train = shipped_train[:spec.train_size]
    else:
        blocked = np.zeros(ds.n, dtype=bool)
        blocked[valid] = True
        blocked[test] = True
        pool = np.flatnonzero((ds.y >= 0) & ~blocked)
        if spec.train_size > pool.size:
            raise SplitError(
                f"train size {spec.train_size} exceeds the labeled pool "
                f"of {pool.size}")
        train = _stratified_draw(pool, ds.y, spec.train_size, Rng(spec.seed))

    out = Dataset(graph=ds.graph, x=ds.x, y=ds.y,
                  masks={"train": train, "valid": valid, "test": test},
                  meta=dict(ds.meta))
    out.validate()
    return out


# ---------------------------------------------------------------------------
# synthetic fixtures

def _sample_pairs(rng: Rng, ia: np.ndarray, ib: np.ndarray, prob: float,
                  same: bool) -> np.ndarray:
    """Approximately Binomial(N, prob) distinct pairs between two groups."""
    if prob <= 0.0:
        return np.empty((0, 2), dtype=np.int64)
    total = ia.size * (ia.size - 1) // 2 if same else ia.size * ib.size
    if total == 0:
        return np.empty((0, 2), dtype=np.int64)
    want = rng.binomial(total, min(prob, 1.0))
    if want == 0:
        return np.empty((0, 2), dtype=np.int64)
    draw = int(want * 1.3) + 16
    u = ia[rng.integers(0, ia.size, draw)]
    v = ib[rng.integers(0, ib.size, draw)]
    keep = u != v
    u, v = u[keep], v[keep]
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return pairs[:want]


def gen_synthetic(n: int, d: int, c: int, edge_prob: float, homophily: float,
                  seed: int) -> Dataset:
    """Block-model graph with class-correlated features; fully reproducible.

    Same-class pairs connect with ``edge_prob``; cross-class pairs with
    ``edge_prob * (1 - homophily)``. Classes are exactly balanced. Features
    are quantized to f32 so containers round-trip bit-exactly.
    """
    if n < 2:
        raise DataError("need at least 2 nodes")
    if not 0.0 <= edge_prob <= 1.0:
        raise DataError("edge_prob must be in [0, 1]")
    if not 0.0 <= homophily <= 1.0:
        raise DataError("homophily must be in [0, 1]")
    if c < 2 or c > n:
        raise DataError("need 2 <= classes <= nodes")
    rng = Rng(seed)
    y = (np.arange(n) % c)[rng.split("labels").permutation(n)]

    p_out = edge_prob * (1.0 - homophily)
    edge_rng = rng.split("edges")
    chunks = []
    members = [np.flatnonzero(y == k) for k in range(c)]
    for a in range(c):
        for b in range(a, c):
            prob = edge_prob if a == b else p_out
            chunks.append(_sample_pairs(edge_rng.split(f"{a}-{b}"),
                                        members[a], members[b], prob, a == b))
    edges = np.concatenate(chunks) if chunks else np.empty((0, 2), np.int64)
    graph = Graph(n, edges)

    feat_rng = rng.split("features")
    centroids = feat_rng.normal((c, d))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    x = centroids[y] + 0.35 * feat_rng.normal((n, d))
    x = x.astype(np.float32).astype(np.float64)

    mask_rng = rng.split("masks")
    train, valid, test = [], [], []
    for k in range(c):
        perm = members[k][mask_rng.split(f"class/{k}").permutation(members[k].size)]
        n_tr = max(1, int(round(perm.size * 0.6)))
        n_va = max(1, int(round(perm.size * 0.2)))
        train.append(perm[:n_tr])
        valid.append(perm[n_tr:n_tr + n_va])
        test.append(perm[n_tr + n_va:])
    masks = {"train": np.sort(np.concatenate(train)),
             "valid": np.sort(np.concatenate(valid)),
             "test": np.sort(np.concatenate(test))}

    ds = Dataset(graph=graph, x=x, y=y, masks=masks, meta={
        "name": f"synthetic-n{n}-c{c}", "n": n, "e": graph.num_edges,
        "d": d, "c": c, "format_version": FORMAT_VERSION,
    })
    ds.validate()
    return ds
