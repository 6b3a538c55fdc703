"""Zero-shot retrieval metrics, batch matching statistics and the
compositional image+text retrieval benchmark."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Literal, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyLabelSet,
    EmptyQuery,
    KTooLarge,
    NoEligiblePairs,
    NotSquare,
    ShapeMismatch,
)
from .numerics import EmbeddingBatch, l2_normalize_rows, row_softmax


@dataclass(frozen=True)
class ClassIndex:
    class_embeddings: EmbeddingBatch
    class_ids: tuple[int, ...]

    def __post_init__(self):
        if not self.class_embeddings.normalized:
            object.__setattr__(self, "class_embeddings", l2_normalize_rows(self.class_embeddings.matrix))
        if self.class_embeddings.n < 2:
            raise ShapeMismatch("a class index needs at least 2 classes")
        if len(self.class_ids) != self.class_embeddings.n:
            raise ShapeMismatch("one id per class embedding required")
        if len(set(self.class_ids)) != len(self.class_ids):
            raise ValueError("class ids must be unique")

    @classmethod
    def from_embeddings(cls, emb: np.ndarray, ids: Optional[Sequence[int]] = None) -> "ClassIndex":
        ids = tuple(range(emb.shape[0])) if ids is None else tuple(int(i) for i in ids)
        return cls(l2_normalize_rows(emb), ids)

    @property
    def size(self) -> int:
        return len(self.class_ids)


def knn_predict(image_embeddings: EmbeddingBatch, index: ClassIndex, k: int) -> list[list[int]]:
    """Top-``k`` class ids per image by cosine similarity; ties go to the lower id."""
    if k > index.size:
        raise KTooLarge(f"k={k} exceeds the number of classes ({index.size})")
    if k < 1:
        raise ValueError("k must be positive")
    if image_embeddings.dim != index.class_embeddings.dim:
        raise DimensionMismatch(
            f"image embeddings have width {image_embeddings.dim}, classes {index.class_embeddings.dim}"
        )
    img = l2_normalize_rows(image_embeddings)
    ids = np.asarray(index.class_ids)
    by_id = np.argsort(ids, kind="stable")
    sims = img.matrix @ index.class_embeddings.matrix[by_id].T
    # stable sort on -sim keeps ascending-id order among exact ties
    order = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    return ids[by_id][order].tolist()


def flat_hit_at_k(predictions: Sequence[Sequence[int]], true_labels: Sequence[Iterable[int]], k: int) -> float:
    """Fraction of images whose top-``k`` predictions meet their label set."""
    if len(predictions) != len(true_labels):
        raise ShapeMismatch(f"{len(predictions)} predictions vs {len(true_labels)} label sets")
    if not predictions:
        raise ShapeMismatch("no predictions")
    hits = 0
    for i, (pred, labels) in enumerate(zip(predictions, true_labels)):
        labels = set(labels)
        if not labels:
            raise EmptyLabelSet(i)
        if labels.intersection(pred[:k]):
            hits += 1
    return hits / len(predictions)


@dataclass
class EvalReport:
    flat_hit_at: dict[int, float]
    n_images: int
    config_fingerprint: str

    def to_json(self) -> str:
        doc = {
            "flat_hit_at": {str(k): v for k, v in sorted(self.flat_hit_at.items())},
            "n_images": self.n_images,
            "config_fingerprint": self.config_fingerprint,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def fingerprint(obj) -> str:
    """Short stable hash of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def zero_shot_report(
    image_embeddings: EmbeddingBatch,
    index: ClassIndex,
    true_labels: Sequence[Iterable[int]],
    ks: Sequence[int] = (1, 5, 10),
    config_fingerprint: str = "",
) -> EvalReport:
    ks = sorted(set(ks))
    preds = knn_predict(image_embeddings, index, ks[-1])
    rates = {k: flat_hit_at_k(preds, true_labels, k) for k in ks}
    return EvalReport(rates, image_embeddings.n, config_fingerprint)


# ----------------------------------------------------------------------------
# Matching statistics of a scoring model over a batch


@dataclass
class NoiseStats:
    paired_mean: float
    unpaired_mean: float
    unpaired_max_mean: float
    batch_size: int
    n_batches: int = 1


def matching_probabilities(
    zv: EmbeddingBatch, zt: EmbeddingBatch, inv_temp: float, side: Literal["image_to_text", "text_to_image"] = "image_to_text"
) -> np.ndarray:
    logits = zv.matrix @ zt.matrix.T
    if side == "text_to_image":
        logits = logits.T
    elif side != "image_to_text":
        raise ValueError(f"unknown side {side!r}")
    return row_softmax(logits, inv_temp)


def noise_stats(prob) -> NoiseStats:
    """Paired / mean unpaired / mean per-row max unpaired probability of one batch."""
    p = np.asarray(prob, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise NotSquare(f"probability matrix must be square, got {p.shape}")
    n = p.shape[0]
    if n < 2:
        raise NotSquare("need at least a 2x2 matrix to have unpaired entries")
    off = ~np.eye(n, dtype=bool)
    unpaired = p[off].reshape(n, n - 1)
    return NoiseStats(
        paired_mean=float(np.diag(p).mean()),
        unpaired_mean=float(unpaired.mean()),
        unpaired_max_mean=float(unpaired.max(axis=1).mean()),
        batch_size=n,
    )


def average_noise_stats(stats: Sequence[NoiseStats]) -> NoiseStats:
    if not stats:
        raise ValueError("no batches to average")
    sizes = {s.batch_size for s in stats}
    if len(sizes) != 1:
        raise ShapeMismatch(f"batch sizes differ across batches: {sorted(sizes)}")
    return NoiseStats(
        paired_mean=float(np.mean([s.paired_mean for s in stats])),
        unpaired_mean=float(np.mean([s.unpaired_mean for s in stats])),
        unpaired_max_mean=float(np.mean([s.unpaired_max_mean for s in stats])),
        batch_size=sizes.pop(),
        n_batches=len(stats),
    )


# ----------------------------------------------------------------------------
# Compositional retrieval


@dataclass(frozen=True)
class AttributeSample:
    embedding: np.ndarray
    attributes: frozenset[int]


@dataclass(frozen=True)
class CompositionalQuery:
    image_index: int
    partner_index: int
    image_attributes: frozenset[int]  # Q^v = A_i
    text_attributes: frozenset[int]  # Q^t = A_j - A_i
    embedding: np.ndarray = field(repr=False, compare=False)

    @property
    def attributes(self) -> frozenset[int]:
        return self.image_attributes | self.text_attributes


def compositional_queries(
    samples: Sequence[AttributeSample],
    min_common: int,
    n_queries: int,
    seed: int,
    text_embedder: Optional[Callable[[frozenset[int]], np.ndarray]] = None,
) -> list[CompositionalQuery]:
    """Sample image pairs ``(i, j)``, ``i != j``, sharing ``>= min_common`` attributes.

    The query adds the image embedding of ``i`` to the text embedding of
    ``A_j - A_i`` (zero when that set is empty or no embedder is given).
    """
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    if min_common < 0:
        raise ValueError("min_common must be non-negative")
    universe = sorted(set().union(*(s.attributes for s in samples)))
    col = {a: c for c, a in enumerate(universe)}
    member = np.zeros((len(samples), max(len(universe), 1)), dtype=np.int64)
    for r, s in enumerate(samples):
        member[r, [col[a] for a in s.attributes]] = 1
    common = member @ member.T
    np.fill_diagonal(common, -1)
    ii, jj = np.nonzero(common >= min_common)
    if ii.size == 0:
        raise NoEligiblePairs(f"no pair of samples shares at least {min_common} attributes")
    rng = np.random.default_rng(seed)
    pick = rng.choice(ii.size, size=n_queries, replace=n_queries > ii.size)
    queries = []
    for p in pick:
        i, j = int(ii[p]), int(jj[p])
        qv = samples[i].attributes
        qt = samples[j].attributes - qv
        emb = np.asarray(samples[i].embedding, dtype=np.float64).copy()
        if qt and text_embedder is not None:
            emb = emb + text_embedder(qt)
        queries.append(CompositionalQuery(i, j, qv, qt, emb))
    return queries


@dataclass(frozen=True)
class CompositionScores:
    overlap_rate: float  # OR
    image_overlap_rate: float  # IOR
    text_overlap_rate: float  # TOR, over queries with non-empty Q^t
    n_queries: int
    n_text_empty: int


def compositionality_scores(queries: Sequence[CompositionalQuery], retrieved: Sequence) -> CompositionScores:
    """Mean attribute overlap of each retrieved item with the combined,
    image-only and text-only query attribute sets.

    ``retrieved`` holds one :class:`AttributeSample` or attribute set per query.
    """
    if len(queries) != len(retrieved):
        raise ShapeMismatch(f"{len(queries)} queries vs {len(retrieved)} retrieved items")
    or_sum = ior_sum = tor_sum = 0.0
    n_text = 0
    for k, (q, r) in enumerate(zip(queries, retrieved)):
        r_attrs = r.attributes if isinstance(r, AttributeSample) else frozenset(r)
        full = q.attributes
        if not full or not q.image_attributes:
            raise EmptyQuery(k)
        or_sum += len(full & r_attrs) / len(full)
        ior_sum += len(q.image_attributes & r_attrs) / len(q.image_attributes)
        if q.text_attributes:
            tor_sum += len(q.text_attributes & r_attrs) / len(q.text_attributes)
            n_text += 1
    n = len(queries)
    if n == 0:
        raise ShapeMismatch("no queries")
    return CompositionScores(
        or_sum / n,
        ior_sum / n,
        tor_sum / n_text if n_text else float("nan"),
        n,
        n - n_text,
    )


def retrieve_nearest(
    queries: Sequence[CompositionalQuery], gallery: EmbeddingBatch, exclude_source: bool = True
) -> list[int]:
    """Index of the gallery item with highest cosine similarity to each query."""
    q = l2_normalize_rows(np.stack([c.embedding for c in queries]))
    g = l2_normalize_rows(gallery)
    sims = q.matrix @ g.matrix.T
    if exclude_source:
        sims[np.arange(len(queries)), [c.image_index for c in queries]] = -np.inf
    return np.argmax(sims, axis=1).tolist()


def random_retrieval(queries: Sequence[CompositionalQuery], n_gallery: int, seed: int) -> list[int]:
    """Baseline that returns a uniformly random gallery item per query."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, n_gallery, size=len(queries)).tolist()


def stats_dict(obj) -> dict:
    return asdict(obj)
