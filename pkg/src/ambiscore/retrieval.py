"""Per-category flat vector stores and exact cosine top-k search."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._util import atomic_write_bytes, canonical_json
from .corpus import StoryInstance, dataset_hash, gold_score, render_story_text
from .difficulty import DifficultyCategory
from .gateway import DEFAULT_EMBEDDING_MODEL

MAGIC = b"AMBIDX1\n"
INDEX_FORMAT = "ambiscore-index/1"

# grouping order of few-shot examples in the prompt
BUNDLE_ORDER = (
    DifficultyCategory.HUMAN_EASY_HIGH,
    DifficultyCategory.AMBIGUOUS_CONTEXT,
    DifficultyCategory.HUMAN_EASY_LOW,
)


class RetrievalError(ValueError):
    pass


@dataclass(frozen=True)
class EmbedTextOptions:
    include_ending: bool = True
    include_meaning: bool = True

    def render(self, inst: StoryInstance) -> str:
        return render_story_text(inst, self.include_ending, self.include_meaning)


@dataclass
class CategoryIndex:
    category: DifficultyCategory
    ids: list[str]
    vectors: np.ndarray  # (n, d) float32, unit rows
    texts: list[str]
    gold: list[int]
    gold_mean: list[float]
    embedding_model_id: str
    dataset_hash: str = ""
    _pos: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise RetrievalError(f"vector block shape {self.vectors.shape} does not match {len(self.ids)} ids")
        if len(set(self.ids)) != len(self.ids):
            raise RetrievalError(f"duplicate ids in {self.category.value} index")
        self._pos = {iid: n for n, iid in enumerate(self.ids)}

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    def header(self) -> dict:
        return {
            "format": INDEX_FORMAT,
            "category": self.category.value,
            "embedding_model_id": self.embedding_model_id,
            "dimension": self.dimension,
            "count": len(self.ids),
            "dataset_hash": self.dataset_hash,
            "entries": [{"id": i, "text": t, "gold": g, "gold_mean": m}
                        for i, t, g, m in zip(self.ids, self.texts, self.gold, self.gold_mean)],
        }

    def to_bytes(self) -> bytes:
        head = canonical_json(self.header())
        block = self.vectors.astype("<f4", copy=False).tobytes(order="C")
        return MAGIC + struct.pack("<Q", len(head)) + head + block

    @classmethod
    def from_bytes(cls, data: bytes, expect_model: str | None = None,
                   expect_dimension: int | None = None) -> "CategoryIndex":
        if not data.startswith(MAGIC):
            raise RetrievalError("not an ambiscore index file")
        (hlen,) = struct.unpack_from("<Q", data, len(MAGIC))
        start = len(MAGIC) + 8
        head = json.loads(data[start:start + hlen].decode("utf-8"))
        if head.get("format") != INDEX_FORMAT:
            raise RetrievalError(f"unsupported index format {head.get('format')!r}")
        if expect_model is not None and head["embedding_model_id"] != expect_model:
            raise RetrievalError(
                f"index built with {head['embedding_model_id']!r}, config expects {expect_model!r}")
        dim, count = int(head["dimension"]), int(head["count"])
        if expect_dimension is not None and dim != expect_dimension:
            raise RetrievalError(f"index dimension {dim} != expected {expect_dimension}")
        block = np.frombuffer(data, dtype="<f4", count=dim * count, offset=start + hlen)
        entries = head["entries"]
        return cls(
            category=DifficultyCategory(head["category"]),
            ids=[e["id"] for e in entries],
            vectors=block.reshape(count, dim).astype(np.float32),
            texts=[e["text"] for e in entries],
            gold=[int(e["gold"]) for e in entries],
            gold_mean=[float(e["gold_mean"]) for e in entries],
            embedding_model_id=head["embedding_model_id"],
            dataset_hash=head["dataset_hash"],
        )

    def save(self, path: str | Path) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path: str | Path, **expect) -> "CategoryIndex":
        return cls.from_bytes(Path(path).read_bytes(), **expect)


@dataclass(frozen=True)
class RetrievedExample:
    id: str
    similarity: float
    text: str
    gold: int
    gold_mean: float
    category: DifficultyCategory


def unit_rows(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise RetrievalError("cannot normalize a zero vector")
    return v / norms


def build_index(
    instances: Sequence[StoryInstance],
    categories: Mapping[str, DifficultyCategory],
    gateway,
    model_id: str = DEFAULT_EMBEDDING_MODEL,
    text_options: EmbedTextOptions = EmbedTextOptions(),
) -> dict[DifficultyCategory, CategoryIndex]:
    """Embed every labeled instance and file it under its category, ids sorted."""
    for inst in instances:
        if inst.id not in categories:
            raise RetrievalError(f"instance {inst.id} has no difficulty category")
        if not inst.labeled:
            raise RetrievalError(f"instance {inst.id} is unlabeled")
    ordered = sorted(instances, key=lambda i: i.id)
    texts = [text_options.render(i) for i in ordered]
    vecs = gateway.embed(texts, model_id) if ordered else []
    dims = {len(v) for v in vecs}
    if len(dims) > 1:
        raise RetrievalError(f"embedding dimension drift: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    dhash = dataset_hash(ordered)
    out = {}
    for cat in DifficultyCategory:
        members = [(i, v) for i, v in zip(ordered, vecs) if categories[i.id] == cat]
        mat = unit_rows(np.stack([v for _, v in members])) if members else np.zeros((0, dim))
        out[cat] = CategoryIndex(
            category=cat,
            ids=[i.id for i, _ in members],
            vectors=mat,
            texts=[render_story_text(i, include_ending=True) for i, _ in members],
            gold=[gold_score(i) for i, _ in members],
            gold_mean=[i.stats().mean for i, _ in members],
            embedding_model_id=model_id,
            dataset_hash=dhash,
        )
    return out


def search(index: CategoryIndex, query, k: int, exclude: Sequence[str] = ()) -> list[RetrievedExample]:
    """Exact cosine ranking; ties broken by id ascending."""
    if k < 1:
        raise RetrievalError("k must be >= 1")
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or (len(index) and q.shape[0] != index.dimension):
        raise RetrievalError(f"query dimension {q.shape} does not match index dimension {index.dimension}")
    if len(index) == 0:
        return []
    q = unit_rows(q)
    sims = index.vectors.astype(np.float64) @ q
    keep = np.ones(len(index), dtype=bool)
    for iid in exclude:
        pos = index._pos.get(iid)
        if pos is not None:
            keep[pos] = False
    cand = np.flatnonzero(keep)
    ids = np.array(index.ids, dtype=object)[cand]
    # lexsort: last key is primary
    order = cand[np.lexsort((ids.astype(str), -sims[cand]))]
    return [
        RetrievedExample(index.ids[p], float(sims[p]), index.texts[p], index.gold[p],
                         index.gold_mean[p], index.category)
        for p in order[:k]
    ]


def few_shot_bundle(query_instance: StoryInstance, k: int, indexes: Mapping[DifficultyCategory, CategoryIndex],
                    gateway, model_id: str | None = None,
                    text_options: EmbedTextOptions = EmbedTextOptions()) -> list[RetrievedExample]:
    """k nearest examples from each category; the query itself is never returned."""
    if k < 1:
        raise RetrievalError("k must be >= 1")
    for cat in BUNDLE_ORDER:
        if cat not in indexes or len(indexes[cat]) == 0:
            raise RetrievalError(f"empty index for category {cat.value}")
    model_id = model_id or indexes[BUNDLE_ORDER[0]].embedding_model_id
    (qvec,) = gateway.embed([text_options.render(query_instance)], model_id)
    out: list[RetrievedExample] = []
    for cat in BUNDLE_ORDER:
        got = search(indexes[cat], qvec, k, exclude=(query_instance.id,))
        if len(got) < k:
            raise RetrievalError(f"category {cat.value} has only {len(got)} eligible examples, need {k}")
        out.extend(got)
    return out


def save_indexes(indexes: Mapping[DifficultyCategory, CategoryIndex], directory: str | Path) -> None:
    d = Path(directory)
    for cat, idx in indexes.items():
        idx.save(d / f"{cat.value}.idx")


def load_indexes(directory: str | Path, expect_model: str | None = None) -> dict[DifficultyCategory, CategoryIndex]:
    d = Path(directory)
    out = {}
    for cat in DifficultyCategory:
        p = d / f"{cat.value}.idx"
        if not p.exists():
            raise RetrievalError(f"missing index file {p}")
        out[cat] = CategoryIndex.load(p, expect_model=expect_model)
    dims = {i.dimension for i in out.values() if len(i)}
    if len(dims) > 1:
        raise RetrievalError(f"indexes disagree on dimension: {sorted(dims)}")
    return out
