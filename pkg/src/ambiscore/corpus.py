"""AmbiStory-format records: parsing, validation, annotation statistics, bands."""

from __future__ import annotations

import enum
import json
import logging
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from ._util import canonical_json, round_half_away, sha256_hex

log = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
N_ANNOTATORS = 5

_WS = re.compile(r"\s+")


class CorpusError(ValueError):
    pass


class CorpusParseError(CorpusError):
    """Malformed JSON input; ``offset`` is the character offset of the failure."""

    def __init__(self, message: str, offset: int, line: int):
        super().__init__(f"{message} (line {line}, offset {offset})")
        self.offset = offset
        self.line = line


@dataclass(frozen=True)
class RecordError:
    line: int
    index: int
    message: str


def normalize_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class StoryInstance:
    id: str
    split: str
    homonym: str
    precontext: str
    sentence: str
    ending: str | None
    judged_meaning: str
    annotations: tuple[int, ...] = ()

    @property
    def labeled(self) -> bool:
        return len(self.annotations) > 0

    def stats(self) -> "AnnotationStats":
        return annotation_stats(self.annotations)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "split": self.split,
            "homonym": self.homonym,
            "precontext": self.precontext,
            "sentence": self.sentence,
            "ending": self.ending,
            "judged_meaning": self.judged_meaning,
            "annotations": list(self.annotations),
        }


@dataclass(frozen=True)
class FieldMapping:
    """Canonical field name -> source field name."""

    id: str = "id"
    homonym: str = "homonym"
    precontext: str = "precontext"
    sentence: str = "sentence"
    ending: str = "ending"
    judged_meaning: str = "judged_meaning"
    annotations: str = "annotations"

    @classmethod
    def from_dict(cls, d: dict) -> "FieldMapping":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise CorpusError(f"unknown canonical fields in field map: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "FieldMapping":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class ParseResult(NamedTuple):
    instances: list[StoryInstance]
    rejects: list[RecordError]


def _line_of(text: str, offset: int) -> int:
    return text.count("\n", 0, offset) + 1


def _iter_records(text: str, id_key: str = "id") -> Iterable[tuple[int, object]]:
    """Yield (line, record) pairs from a JSON array, an id-keyed object, or JSONL."""
    decoder = json.JSONDecoder()
    stripped = text.lstrip()
    lead = len(text) - len(stripped)
    if stripped.startswith("[") or stripped.startswith("{"):
        try:
            value, end = decoder.raw_decode(text, lead)
        except json.JSONDecodeError as exc:
            raise CorpusParseError(exc.msg, exc.pos, exc.lineno) from None
        if text[end:].strip():
            rest = end + (len(text[end:]) - len(text[end:].lstrip()))
            if stripped.startswith("{"):
                # several top-level objects: treat as JSONL
                yield from _iter_jsonl(text)
                return
            raise CorpusParseError("extra data after JSON value", rest, _line_of(text, rest))
        if isinstance(value, dict):
            if _looks_like_record(value):
                yield _line_of(text, lead), value
                return
            # {"<id>": {...}, ...}; there is no per-record offset, so report the key order
            for n, (key, rec) in enumerate(value.items()):
                if isinstance(rec, dict) and id_key not in rec:
                    rec = {id_key: key, **rec}
                yield n + 1, rec
            return
        yield from _iter_array(text, lead)
        return
    yield from _iter_jsonl(text)


def _looks_like_record(d: dict) -> bool:
    return any(isinstance(v, str) for v in d.values())


def _iter_array(text: str, start: int) -> Iterable[tuple[int, object]]:
    decoder = json.JSONDecoder()
    pos = start + 1
    n = len(text)
    first = True
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos < n and text[pos] == "]":
            return
        if not first:
            if pos >= n or text[pos] != ",":
                raise CorpusParseError("expected ',' or ']'", pos, _line_of(text, pos))
            pos += 1
            while pos < n and text[pos].isspace():
                pos += 1
        first = False
        try:
            value, end = decoder.raw_decode(text, pos)
        except json.JSONDecodeError as exc:
            raise CorpusParseError(exc.msg, exc.pos, exc.lineno) from None
        yield _line_of(text, pos), value
        pos = end


def _iter_jsonl(text: str) -> Iterable[tuple[int, object]]:
    offset = 0
    for lineno, line in enumerate(text.splitlines(keepends=True), start=1):
        body = line.strip()
        if body:
            try:
                yield lineno, json.loads(body)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(exc.msg, offset + exc.pos, lineno) from None
        offset += len(line)


def _coerce_annotations(raw, require_labels: bool) -> tuple[int, ...]:
    if raw is None:
        raw = []
    if not isinstance(raw, list):
        raise CorpusError("annotations must be a list")
    out = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise CorpusError(f"annotation {v!r} is not a number")
        if isinstance(v, float):
            if not v.is_integer():
                raise CorpusError(f"annotation {v!r} is not an integer")
            v = int(v)
        if not 1 <= v <= 5:
            raise CorpusError(f"annotation {v} outside [1, 5]")
        out.append(v)
    if len(out) > N_ANNOTATORS:
        raise CorpusError(f"{len(out)} annotations, at most {N_ANNOTATORS} expected")
    if not out and require_labels:
        raise CorpusError("annotations required but none present")
    return tuple(out)


def validate_record(rec: object, split: str, fm: FieldMapping, require_labels: bool = False) -> StoryInstance:
    if not isinstance(rec, dict):
        raise CorpusError("record is not a JSON object")

    def text(name: str, required: bool = True) -> str | None:
        key = getattr(fm, name)
        if key not in rec or rec[key] is None:
            if required:
                raise CorpusError(f"missing required field {key!r}")
            return None
        v = rec[key]
        if not isinstance(v, str):
            if name == "id" and isinstance(v, int):
                v = str(v)
            else:
                raise CorpusError(f"field {key!r} must be a string")
        return normalize_ws(v)

    rid = text("id")
    homonym = text("homonym")
    sentence = text("sentence")
    precontext = text("precontext")
    judged = text("judged_meaning")
    ending = text("ending", required=False) or None
    if not rid:
        raise CorpusError("empty id")
    if not homonym:
        raise CorpusError("empty homonym")
    if homonym.lower() not in sentence.lower():
        raise CorpusError(f"homonym {homonym!r} does not occur in sentence")
    if not judged:
        raise CorpusError("empty judged meaning")
    annotations = _coerce_annotations(rec.get(fm.annotations), require_labels)
    if 0 < len(annotations) < N_ANNOTATORS:
        log.warning("record %s has %d annotations (expected %d)", rid, len(annotations), N_ANNOTATORS)
    return StoryInstance(
        id=rid,
        split=split,
        homonym=homonym,
        precontext=precontext,
        sentence=sentence,
        ending=ending,
        judged_meaning=judged,
        annotations=annotations,
    )


def parse_dataset(
    raw: bytes | str,
    split: str,
    field_map: FieldMapping | None = None,
    require_labels: bool = False,
) -> ParseResult:
    """Parse a JSON array, id-keyed object, or JSON-lines file into validated instances.

    Records failing validation are skipped and reported in ``rejects`` with
    their line number; malformed JSON raises :class:`CorpusParseError`.
    Duplicate ids are rejected after the first occurrence.
    """
    if split not in SPLITS:
        raise CorpusError(f"unknown split {split!r}")
    fm = field_map or FieldMapping()
    text = raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw
    instances: list[StoryInstance] = []
    rejects: list[RecordError] = []
    seen: set[str] = set()
    for index, (line, rec) in enumerate(_iter_records(text, fm.id)):
        try:
            inst = validate_record(rec, split, fm, require_labels)
            if inst.id in seen:
                raise CorpusError(f"duplicate id {inst.id!r}")
        except CorpusError as exc:
            rejects.append(RecordError(line=line, index=index, message=str(exc)))
            continue
        seen.add(inst.id)
        instances.append(inst)
    for r in rejects:
        log.warning("rejected record at line %d: %s", r.line, r.message)
    return ParseResult(instances, rejects)


def load_dataset(path: str | Path, split: str, field_map: FieldMapping | None = None,
                 require_labels: bool = False) -> ParseResult:
    return parse_dataset(Path(path).read_bytes(), split, field_map, require_labels)


def serialize_dataset(instances: Iterable[StoryInstance]) -> bytes:
    """Canonical export: one sorted-key JSON object per line."""
    return b"".join(canonical_json(i.to_dict()) + b"\n" for i in instances)


def dataset_hash(instances: Iterable[StoryInstance]) -> str:
    """Order-independent digest over the canonical records."""
    lines = sorted(canonical_json(i.to_dict()) for i in instances)
    return sha256_hex(b"\n".join(lines))


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnotationStats:
    mean: float
    std_sample: float
    std_population: float
    histogram: tuple[int, int, int, int, int]
    n: int

    def std(self, convention: str = "sample") -> float:
        if convention == "sample":
            return self.std_sample
        if convention == "population":
            return self.std_population
        raise ValueError(f"unknown std convention {convention!r}")


def annotation_stats(annotations: Sequence[int]) -> AnnotationStats:
    n = len(annotations)
    if n == 0:
        raise ValueError("annotation stats undefined for an empty list")
    mean = math.fsum(annotations) / n
    ss = math.fsum((a - mean) ** 2 for a in annotations)
    hist = [0] * 5
    for a in annotations:
        if not 1 <= a <= 5:
            raise ValueError(f"annotation {a} outside [1, 5]")
        hist[int(a) - 1] += 1
    return AnnotationStats(
        mean=mean,
        std_sample=math.sqrt(ss / (n - 1)) if n > 1 else 0.0,
        std_population=math.sqrt(ss / n),
        histogram=tuple(hist),
        n=n,
    )


class PlausibilityBand(enum.Enum):
    HIGH = "high"
    MODERATE = "moderate"
    SLIGHT = "slight"
    NOT_PLAUSIBLE = "not_plausible"

    @property
    def rationale(self) -> str:
        return _RATIONALE[self]


_RATIONALE = {
    PlausibilityBand.HIGH: "The meaning strongly fits the context and the ending, so it is highly plausible.",
    PlausibilityBand.MODERATE: "The meaning reasonably fits the context and the ending, so it is moderately plausible.",
    PlausibilityBand.SLIGHT: "The meaning has only a weak connection to the context and the ending, so it is slightly plausible.",
    PlausibilityBand.NOT_PLAUSIBLE: "The meaning does not fit the context or the ending, so it is not plausible.",
}


def plausibility_band(mean: float) -> PlausibilityBand:
    if not (1.0 <= mean <= 5.0):
        raise ValueError(f"mean {mean} outside [1, 5]")
    if mean >= 4.0:
        return PlausibilityBand.HIGH
    if mean >= 3.0:
        return PlausibilityBand.MODERATE
    if mean >= 2.0:
        return PlausibilityBand.SLIGHT
    return PlausibilityBand.NOT_PLAUSIBLE


def render_story_text(instance: StoryInstance, include_ending: bool = True,
                      include_meaning: bool = True) -> str:
    lines = [instance.precontext, instance.sentence]
    if include_ending and instance.ending:
        lines.append(instance.ending)
    lines.append(f"Word: {instance.homonym}")
    if include_meaning:
        lines.append(f"Meaning: {instance.judged_meaning}")
    return "\n".join(lines)


def gold_score(instance: StoryInstance) -> int:
    """Rounded mean rating (half away from zero)."""
    return round_half_away(instance.stats().mean)


@dataclass
class DatasetSummary:
    split: str
    n_instances: int
    n_labeled: int
    n_rejected: int
    n_unique_homonyms: int
    n_unique_senses: int
    band_counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def summarize(result: ParseResult, split: str) -> DatasetSummary:
    insts = result.instances
    bands: dict[str, int] = {b.value: 0 for b in PlausibilityBand}
    for i in insts:
        if i.labeled:
            bands[plausibility_band(i.stats().mean).value] += 1
    return DatasetSummary(
        split=split,
        n_instances=len(insts),
        n_labeled=sum(i.labeled for i in insts),
        n_rejected=len(result.rejects),
        n_unique_homonyms=len({i.homonym.lower() for i in insts}),
        n_unique_senses=len({(i.homonym.lower(), i.judged_meaning) for i in insts}),
        band_counts=bands,
    )
