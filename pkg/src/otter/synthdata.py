"""Synthetic loosely-paired image/caption features and the embedding file format.

Every concept owns one unit-norm prototype per modality. A sample's image
feature is its concept's image prototype plus isotropic Gaussian noise. Its
caption feature is built the same way from the *caption* concept, which with
probability ``caption_swap_prob`` is resampled uniformly among the other
concepts. The swap rate is therefore exactly the pairing-noise rate.

An attribute-annotated variant (:func:`generate_attributes`) drives the
compositional retrieval benchmark: each sample carries a set of attribute ids
and its features are noisy normalized sums of per-attribute prototypes.

Binary file layout (all little-endian)::

    offset  size  field
    0       8     magic b"OTTEREMB"
    8       4     version (uint32, currently 1)
    12      4     flags (uint32): bit0 labels, bit1 prototypes, bit2 attributes
    16      8     N            (uint64) number of pairs
    24      8     d_img_in     (uint64)
    32      8     d_txt_in     (uint64)
    40      8     n_classes    (uint64, 0 unless bit1)
    48      8     n_attributes (uint64, 0 unless bit2)
    56      ...   image block   float64[N, d_img_in], row-major
            ...   text block    float64[N, d_txt_in]
            ...   label block   int64[2, N]: image concept, then caption concept  (bit0)
            ...   prototype block float64[n_classes, d_img_in] then
                                  float64[n_classes, d_txt_in]                    (bit1)
            ...   attribute block uint8[N, n_attributes] membership, then
                                  float64[n_attributes, d_txt_in] text prototypes (bit2)

The text variant (``.csv``) carries pairs only: a one-line header
``image_label,caption_label,img_0..img_{d-1},txt_0..txt_{e-1}`` followed by one
comma-separated row per pair; label cells may be empty.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigInvalid, FormatError, NonFiniteValue
from .state import PairBatch

MAGIC = b"OTTEREMB"
VERSION = 1
HEADER = struct.Struct("<8sIIQQQQQ")
FLAG_LABELS, FLAG_PROTOTYPES, FLAG_ATTRIBUTES = 1, 2, 4

SPLITS = ("train", "test")


@dataclass(frozen=True)
class SynthConfig:
    n_concepts: int = 8
    samples_per_concept: int = 128
    d_img_in: int = 32
    d_txt_in: int = 32
    feature_noise_sigma: float = 0.1
    caption_swap_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_concepts < 2:
            raise ConfigInvalid("n_concepts must be at least 2")
        if self.samples_per_concept < 1:
            raise ConfigInvalid("samples_per_concept must be positive")
        if self.d_img_in < 2 or self.d_txt_in < 2:
            raise ConfigInvalid("feature dimensions must be at least 2")
        if not self.feature_noise_sigma >= 0:
            raise ConfigInvalid("feature_noise_sigma must be non-negative")
        if not 0.0 <= self.caption_swap_prob <= 1.0:
            raise ConfigInvalid("caption_swap_prob must lie in [0, 1]")


@dataclass
class SynthDataset:
    image_features: np.ndarray
    text_features: np.ndarray
    concept_of_image: Optional[np.ndarray] = None
    concept_of_caption: Optional[np.ndarray] = None
    class_prototypes_image: Optional[np.ndarray] = None
    class_prototypes_text: Optional[np.ndarray] = None
    attributes: Optional[np.ndarray] = None  # bool[N, n_attributes]
    attribute_prototypes_text: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.image_features.shape[0]

    @property
    def n_classes(self) -> int:
        return 0 if self.class_prototypes_text is None else self.class_prototypes_text.shape[0]

    def attribute_sets(self) -> list[frozenset[int]]:
        if self.attributes is None:
            raise ValueError("dataset carries no attribute annotations")
        return [frozenset(np.flatnonzero(row).tolist()) for row in self.attributes]

    def batches(self, batch_size: int, seed: int = 0, epoch: int = 0) -> list[PairBatch]:
        """Seeded shuffle into full batches; the trailing partial batch is dropped."""
        rng = np.random.default_rng([seed, epoch])
        order = rng.permutation(self.n)
        out = []
        for start in range(0, self.n - batch_size + 1, batch_size):
            idx = order[start:start + batch_size]
            labels = None if self.concept_of_image is None else self.concept_of_image[idx]
            out.append(PairBatch(self.image_features[idx], self.text_features[idx], labels))
        return out

    def subset(self, idx: np.ndarray) -> "SynthDataset":
        def pick(a):
            return None if a is None else a[idx]

        return SynthDataset(
            self.image_features[idx],
            self.text_features[idx],
            pick(self.concept_of_image),
            pick(self.concept_of_caption),
            self.class_prototypes_image,
            self.class_prototypes_text,
            pick(self.attributes),
            self.attribute_prototypes_text,
            dict(self.meta),
        )


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _streams(seed: int) -> tuple[np.random.Generator, dict[str, np.random.Generator]]:
    proto, *splits = np.random.SeedSequence(seed).spawn(1 + len(SPLITS))
    return np.random.default_rng(proto), {s: np.random.default_rng(ss) for s, ss in zip(SPLITS, splits)}


def swap_captions(concepts: np.ndarray, n_concepts: int, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Reassign each caption, with probability ``prob``, to a different concept."""
    swap = rng.random(concepts.shape[0]) < prob
    offsets = rng.integers(1, n_concepts, size=concepts.shape[0])
    return np.where(swap, (concepts + offsets) % n_concepts, concepts)


def generate(cfg: SynthConfig, split: str = "train") -> SynthDataset:
    """Draw a dataset. Splits share prototypes but use independent sample streams."""
    if split not in SPLITS:
        raise ConfigInvalid(f"split must be one of {SPLITS}, got {split!r}")
    proto_rng, streams = _streams(cfg.seed)
    protos_img = _unit_rows(proto_rng, cfg.n_concepts, cfg.d_img_in)
    protos_txt = _unit_rows(proto_rng, cfg.n_concepts, cfg.d_txt_in)

    rng = streams[split]
    concept = np.repeat(np.arange(cfg.n_concepts), cfg.samples_per_concept)
    caption = swap_captions(concept, cfg.n_concepts, cfg.caption_swap_prob, rng)
    n = concept.shape[0]
    img = protos_img[concept] + cfg.feature_noise_sigma * rng.standard_normal((n, cfg.d_img_in))
    txt = protos_txt[caption] + cfg.feature_noise_sigma * rng.standard_normal((n, cfg.d_txt_in))
    return SynthDataset(
        img,
        txt,
        concept.astype(np.int64),
        caption.astype(np.int64),
        protos_img,
        protos_txt,
        meta={"split": split},
    )


@dataclass(frozen=True)
class AttributeConfig:
    n_concepts: int = 8
    samples_per_concept: int = 64
    n_attributes: int = 64
    attributes_per_concept: int = 24
    keep_prob: float = 0.85
    extra_prob: float = 0.05
    d_img_in: int = 32
    d_txt_in: int = 32
    feature_noise_sigma: float = 0.1
    caption_swap_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_concepts < 2 or self.samples_per_concept < 1:
            raise ConfigInvalid("need at least 2 concepts and 1 sample per concept")
        if not 1 <= self.attributes_per_concept <= self.n_attributes:
            raise ConfigInvalid("attributes_per_concept must lie in [1, n_attributes]")
        for name in ("keep_prob", "extra_prob", "caption_swap_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigInvalid(f"{name} must lie in [0, 1]")
        if self.d_img_in < 2 or self.d_txt_in < 2:
            raise ConfigInvalid("feature dimensions must be at least 2")


def attribute_embedding(members: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    """Normalized sum of the prototypes of the attributes set in ``members`` (bool rows)."""
    s = members.astype(np.float64) @ prototypes
    norms = np.linalg.norm(s, axis=-1, keepdims=True)
    return np.divide(s, norms, out=np.zeros_like(s), where=norms > 0)


def generate_attributes(cfg: AttributeConfig, split: str = "train") -> SynthDataset:
    """Attribute-annotated pairs; images and captions describe the same attribute set."""
    if split not in SPLITS:
        raise ConfigInvalid(f"split must be one of {SPLITS}, got {split!r}")
    proto_rng, streams = _streams(cfg.seed)
    attr_img = _unit_rows(proto_rng, cfg.n_attributes, cfg.d_img_in)
    attr_txt = _unit_rows(proto_rng, cfg.n_attributes, cfg.d_txt_in)
    profiles = np.zeros((cfg.n_concepts, cfg.n_attributes), dtype=bool)
    for c in range(cfg.n_concepts):
        profiles[c, proto_rng.choice(cfg.n_attributes, cfg.attributes_per_concept, replace=False)] = True

    rng = streams[split]
    concept = np.repeat(np.arange(cfg.n_concepts), cfg.samples_per_concept)
    n = concept.shape[0]
    u = rng.random((n, cfg.n_attributes))
    members = np.where(profiles[concept], u < cfg.keep_prob, u < cfg.extra_prob)
    empty = ~members.any(axis=1)
    members[empty, rng.integers(0, cfg.n_attributes, size=int(empty.sum()))] = True

    caption_src = np.arange(n)
    swap = rng.random(n) < cfg.caption_swap_prob
    caption_src[swap] = rng.integers(0, n, size=int(swap.sum()))
    img = attribute_embedding(members, attr_img) + cfg.feature_noise_sigma * rng.standard_normal((n, cfg.d_img_in))
    txt = attribute_embedding(members[caption_src], attr_txt) + cfg.feature_noise_sigma * rng.standard_normal(
        (n, cfg.d_txt_in)
    )
    return SynthDataset(
        img,
        txt,
        concept.astype(np.int64),
        concept[caption_src].astype(np.int64),
        attributes=members,
        attribute_prototypes_text=attr_txt,
        meta={"split": split},
    )


# ----------------------------------------------------------------------------
# Serialization


def save_embeddings(path: str | Path, ds: SynthDataset) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        _save_csv(path, ds)
        return
    flags = 0
    if ds.concept_of_image is not None and ds.concept_of_caption is not None:
        flags |= FLAG_LABELS
    if ds.class_prototypes_image is not None and ds.class_prototypes_text is not None:
        flags |= FLAG_PROTOTYPES
    if ds.attributes is not None and ds.attribute_prototypes_text is not None:
        flags |= FLAG_ATTRIBUTES
    n, d_img = ds.image_features.shape
    d_txt = ds.text_features.shape[1]
    n_classes = ds.class_prototypes_text.shape[0] if flags & FLAG_PROTOTYPES else 0
    n_attr = ds.attributes.shape[1] if flags & FLAG_ATTRIBUTES else 0
    parts = [
        HEADER.pack(MAGIC, VERSION, flags, n, d_img, d_txt, n_classes, n_attr),
        _f64(ds.image_features),
        _f64(ds.text_features),
    ]
    if flags & FLAG_LABELS:
        parts.append(np.stack([ds.concept_of_image, ds.concept_of_caption]).astype("<i8").tobytes())
    if flags & FLAG_PROTOTYPES:
        parts += [_f64(ds.class_prototypes_image), _f64(ds.class_prototypes_text)]
    if flags & FLAG_ATTRIBUTES:
        parts += [ds.attributes.astype(np.uint8).tobytes(), _f64(ds.attribute_prototypes_text)]
    path.write_bytes(b"".join(parts))


def _f64(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, nbytes: int, block: str) -> bytes:
        end = self.pos + nbytes
        if end > len(self.buf):
            raise FormatError(
                f"truncated file: {block} block needs {nbytes} bytes, {len(self.buf) - self.pos} remain",
                self.pos,
            )
        chunk = self.buf[self.pos:end]
        self.pos = end
        return chunk

    def f64(self, shape: tuple[int, int], block: str) -> np.ndarray:
        a = np.frombuffer(self.take(8 * shape[0] * shape[1], block), dtype="<f8").reshape(shape).astype(np.float64)
        bad = np.flatnonzero(~np.isfinite(a))
        if bad.size:
            raise NonFiniteValue(int(bad[0]), block)
        return a


def load_embeddings(path: str | Path) -> SynthDataset:
    """Read a binary (default) or ``.csv`` embedding file."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _load_csv(path)
    r = _Reader(path.read_bytes())
    magic, version, flags, n, d_img, d_txt, n_classes, n_attr = HEADER.unpack(r.take(HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 8)
    ds = SynthDataset(r.f64((n, d_img), "image"), r.f64((n, d_txt), "text"))
    if flags & FLAG_LABELS:
        labels = np.frombuffer(r.take(16 * n, "label"), dtype="<i8").reshape(2, n).astype(np.int64)
        ds.concept_of_image, ds.concept_of_caption = labels[0].copy(), labels[1].copy()
    if flags & FLAG_PROTOTYPES:
        ds.class_prototypes_image = r.f64((n_classes, d_img), "image prototype")
        ds.class_prototypes_text = r.f64((n_classes, d_txt), "text prototype")
    if flags & FLAG_ATTRIBUTES:
        raw = np.frombuffer(r.take(n * n_attr, "attribute"), dtype=np.uint8).reshape(n, n_attr)
        if raw.max(initial=0) > 1:
            raise FormatError("attribute membership bytes must be 0 or 1")
        ds.attributes = raw.astype(bool)
        ds.attribute_prototypes_text = r.f64((n_attr, d_txt), "attribute prototype")
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes after last block", r.pos)
    return ds


def _save_csv(path: Path, ds: SynthDataset) -> None:
    d_img = ds.image_features.shape[1]
    d_txt = ds.text_features.shape[1]
    header = ["image_label", "caption_label"] + [f"img_{i}" for i in range(d_img)] + [f"txt_{i}" for i in range(d_txt)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(ds.n):
            li = "" if ds.concept_of_image is None else int(ds.concept_of_image[i])
            lc = "" if ds.concept_of_caption is None else int(ds.concept_of_caption[i])
            w.writerow([li, lc] + [repr(float(x)) for x in ds.image_features[i]] + [repr(float(x)) for x in ds.text_features[i]])


def _load_csv(path: Path) -> SynthDataset:
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError("empty file: header line missing", 1)
    header = rows[0]
    if header[:2] != ["image_label", "caption_label"]:
        raise FormatError("header must start with image_label,caption_label", 1)
    d_img = sum(h.startswith("img_") for h in header)
    d_txt = sum(h.startswith("txt_") for h in header)
    width = 2 + d_img + d_txt
    if width != len(header) or d_img == 0 or d_txt == 0:
        raise FormatError("header must list img_* then txt_* columns", 1)
    img, txt, li, lc = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise FormatError(f"line {lineno}: expected {width} fields, got {len(row)}", lineno)
        try:
            vals = [float(x) for x in row[2:]]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}", lineno) from exc
        for k, v in enumerate(vals):
            if not np.isfinite(v):
                raise NonFiniteValue((lineno - 2) * (d_img + d_txt) + k, "csv")
        img.append(vals[:d_img])
        txt.append(vals[d_img:])
        li.append(row[0])
        lc.append(row[1])
    if not img:
        raise FormatError("no data rows", 2)
    ds = SynthDataset(np.array(img, dtype=np.float64), np.array(txt, dtype=np.float64))
    if all(li) and all(lc):
        ds.concept_of_image = np.array([int(x) for x in li], dtype=np.int64)
        ds.concept_of_caption = np.array([int(x) for x in lc], dtype=np.int64)
    return ds
