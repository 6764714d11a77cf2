"""Turn 2D drawings into bags of location words and count discomfort regions.

The location vocabulary is built once per training run by K-means over every
shaded point in the training drawings; front and back views are embedded into
a single plane (back-view x shifted by a fixed offset) so one vocabulary
spans both views.  Region counting runs mean shift separately per view with a
flat kernel, and the number of merged modes drives the prediction label
budget: twice the region count, clamped to [5, 50].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import DrawingPoint

VOCAB_MAGIC = b"IBTMVOC1"

DEFAULT_VOCAB_SIZE = 256
DEFAULT_BANDWIDTH = 0.08
DEFAULT_VIEW_OFFSET = 1.0

BUDGET_MIN = 5
BUDGET_MAX = 50

KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-9

MEANSHIFT_MAX_ITER = 500
MEANSHIFT_TOL = 1e-6


@dataclass(frozen=True)
class LocationVocab:
    """K-means centroids over the embedded drawing plane.

    The centroid index is the location word id.  The view offset must be
    >= 1 so embedded coordinates un-map to a view unambiguously.
    """

    centroids: np.ndarray
    view_offset: float = DEFAULT_VIEW_OFFSET

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.centroids, dtype=np.float64))
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 1:
            raise ValueError(f"centroids must be (V, 2), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("centroids must be finite")
        object.__setattr__(self, "centroids", c)

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    def unembed(self, word_id: int) -> tuple[str, float, float]:
        """Map a word id back to (view, x, y) body coordinates."""
        cx, cy = self.centroids[word_id]
        if cx >= self.view_offset:
            return "back", float(cx - self.view_offset), float(cy)
        return "front", float(cx), float(cy)


@dataclass(frozen=True)
class BagOfWords:
    """Sparse location-word histogram of one drawing."""

    counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted (ids, counts) arrays; ids are unique."""
        ids = np.array(sorted(self.counts), dtype=np.int64)
        cnt = np.array([self.counts[i] for i in ids], dtype=np.float64)
        return ids, cnt


@dataclass(frozen=True)
class RegionCount:
    """Merged mean-shift modes per view; n is the total over both views."""

    modes: dict[str, np.ndarray]
    n: int


def embed_points(points: Sequence[DrawingPoint],
                 view_offset: float = DEFAULT_VIEW_OFFSET) -> np.ndarray:
    """Stack points into an (N, 2) array, shifting back-view x by the offset."""
    out = np.empty((len(points), 2), dtype=np.float64)
    for i, p in enumerate(points):
        out[i, 0] = p.x + (view_offset if p.view == "back" else 0.0)
        out[i, 1] = p.y
    return out


def _kmeans_pp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-squared weighted seeding."""
    n = data.shape[0]
    centers = np.empty((k, 2), dtype=np.float64)
    centers[0] = data[rng.integers(n)]
    d2 = ((data - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All remaining mass sits on chosen centers; pick uniformly.
            centers[j] = data[rng.integers(n)]
            continue
        probs = d2 / total
        centers[j] = data[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((data - centers[j]) ** 2).sum(axis=1))
    return centers


def _assign(data: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # argmin takes the lowest index on ties.
    d2 = ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def build_location_vocab(points: Iterable[DrawingPoint],
                         v: int = DEFAULT_VOCAB_SIZE,
                         seed: int = 0,
                         view_offset: float = DEFAULT_VIEW_OFFSET) -> LocationVocab:
    """Cluster all training points into a v-word location vocabulary.

    Lloyd iterations run until the largest centroid motion drops below 1e-9
    or 300 rounds, whichever comes first.  Deterministic for a fixed seed.
    """
    points = list(points)
    data = embed_points(points, view_offset)
    if data.shape[0] == 0:
        raise ValueError("no points to cluster")
    n_distinct = np.unique(data, axis=0).shape[0]
    if n_distinct < v:
        raise ValueError(
            f"need at least {v} distinct points to build a {v}-word vocabulary, "
            f"got {n_distinct}")

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(data, v, rng)
    for _ in range(KMEANS_MAX_ITER):
        labels = _assign(data, centers)
        new_centers = centers.copy()
        reseed_d2 = None
        for j in range(v):
            members = data[labels == j]
            if members.shape[0] > 0:
                new_centers[j] = members.mean(axis=0)
            else:
                # Re-seed an empty cluster on the point farthest from its
                # center, consuming points so two empties never collide.
                if reseed_d2 is None:
                    reseed_d2 = ((data - centers[labels]) ** 2).sum(axis=1)
                far = reseed_d2.argmax()
                new_centers[j] = data[far]
                reseed_d2[far] = -1.0
        motion = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if motion < KMEANS_TOL:
            break
    return LocationVocab(centroids=centers, view_offset=view_offset)


def kmeans_objective(points: Sequence[DrawingPoint], vocab: LocationVocab) -> float:
    """Sum of squared distances from each embedded point to its centroid."""
    data = embed_points(points, vocab.view_offset)
    labels = _assign(data, vocab.centroids)
    return float(((data - vocab.centroids[labels]) ** 2).sum())


def encode_drawing(points: Sequence[DrawingPoint], vocab: LocationVocab) -> BagOfWords:
    """Quantize every point to its nearest centroid (ties to the lowest index)."""
    if len(points) == 0:
        raise ValueError("cannot encode an empty drawing")
    data = embed_points(points, vocab.view_offset)
    labels = _assign(data, vocab.centroids)
    counts: dict[int, int] = {}
    for w in labels:
        counts[int(w)] = counts.get(int(w), 0) + 1
    return BagOfWords(counts=counts)


def _mean_shift_modes(data: np.ndarray, bandwidth: float) -> np.ndarray:
    """Iterate every point to a mode under a flat kernel of the given radius."""
    modes = np.empty_like(data)
    bw2 = bandwidth * bandwidth
    for i in range(data.shape[0]):
        m = data[i].copy()
        for _ in range(MEANSHIFT_MAX_ITER):
            inside = ((data - m) ** 2).sum(axis=1) <= bw2
            new_m = data[inside].mean(axis=0)
            shift = np.sqrt(((new_m - m) ** 2).sum())
            m = new_m
            if shift < MEANSHIFT_TOL:
                break
        modes[i] = m
    return modes


def _merge_modes(modes: np.ndarray, radius: float) -> np.ndarray:
    """Greedy merge of modes closer than the radius, in canonical order.

    Candidates are sorted lexicographically first so the result does not
    depend on the input point order.
    """
    order = np.lexsort((modes[:, 1], modes[:, 0]))
    kept: list[np.ndarray] = []
    r2 = radius * radius
    for i in order:
        m = modes[i]
        if all(((m - k) ** 2).sum() > r2 for k in kept):
            kept.append(m)
    return np.array(kept) if kept else np.empty((0, 2))


def count_regions(points: Sequence[DrawingPoint],
                  bandwidth: float = DEFAULT_BANDWIDTH) -> RegionCount:
    """Count coherent discomfort regions per view with flat-kernel mean shift.

    Modes closer than bandwidth/2 are merged; n totals the merged modes over
    both views.
    """
    if len(points) == 0:
        raise ValueError("cannot count regions of an empty drawing")
    if not bandwidth > 0.0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    modes: dict[str, np.ndarray] = {}
    total = 0
    for view in ("front", "back"):
        coords = np.array([(p.x, p.y) for p in points if p.view == view],
                          dtype=np.float64)
        if coords.shape[0] == 0:
            modes[view] = np.empty((0, 2))
            continue
        merged = _merge_modes(_mean_shift_modes(coords, bandwidth), bandwidth / 2.0)
        modes[view] = merged
        total += merged.shape[0]
    return RegionCount(modes=modes, n=total)


def label_budget(n_clusters: int) -> int:
    """Prediction budget: twice the region count, clamped to [5, 50]."""
    if n_clusters < 0:
        raise ValueError("cluster count cannot be negative")
    return int(min(BUDGET_MAX, max(BUDGET_MIN, 2 * n_clusters)))


# ---------------------------------------------------------------------------
# Vocabulary file: magic "IBTMVOC1", little-endian u32 V, then V centroid
# pairs as 64-bit floats.
# ---------------------------------------------------------------------------


def vocab_to_bytes(vocab: LocationVocab) -> bytes:
    payload = struct.pack("<I", vocab.size)
    payload += vocab.centroids.astype("<f8").tobytes(order="C")
    return VOCAB_MAGIC + payload


def vocab_from_bytes(data: bytes, offset: int = 0) -> tuple[LocationVocab, int]:
    """Decode a vocabulary block; returns (vocab, next offset)."""
    if data[offset:offset + 8] != VOCAB_MAGIC:
        raise ValueError("not a location vocabulary block (bad magic)")
    offset += 8
    (v,) = struct.unpack_from("<I", data, offset)
    offset += 4
    end = offset + v * 2 * 8
    if len(data) < end:
        raise ValueError("truncated location vocabulary block")
    cents = np.frombuffer(data[offset:end], dtype="<f8").reshape(v, 2)
    return LocationVocab(centroids=cents.copy()), end


def save_location_vocab(vocab: LocationVocab, path: str | Path) -> None:
    Path(path).write_bytes(vocab_to_bytes(vocab))


def load_location_vocab(path: str | Path) -> LocationVocab:
    data = Path(path).read_bytes()
    vocab, end = vocab_from_bytes(data)
    if end != len(data):
        raise ValueError("trailing bytes after vocabulary block")
    return vocab
