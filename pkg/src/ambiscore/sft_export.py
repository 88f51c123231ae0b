"""Chat-format fine-tuning corpora for the four annotator-simulation strategies.

Output is JSON lines with ``messages``, ``target``, ``strategy`` and
``instance_id``; any SFT trainer that reads chat records can consume it.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import StoryInstance, gold_score, plausibility_band
from .difficulty import CategoryThresholds, categorize

USER_TEMPLATE = """Rate how plausible the proposed meaning of the word is in this story, on a scale of 1-5.

Precontext: {precontext}
Sentence: {sentence}
Ending: {ending}

Word: "{homonym}"
Proposed Meaning: "{judged_meaning}"
"""

ASK_ONE = "Answer with a single integer score from 1 to 5."
ASK_FIVE = "Simulate five independent annotators and give each one's integer score from 1 to 5, then their mean."


class Strategy(enum.Enum):
    SINGLE_ANNOTATOR = "single_annotator"
    FIVE_ANNOTATOR = "five_annotator"
    SINGLE_WITH_THINKING = "single_with_thinking"
    SINGLE_WITH_DIFFICULTY = "single_with_difficulty"


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class SftRecord:
    strategy: Strategy
    instance_id: str
    messages: tuple[tuple[str, str], ...]
    target: str
    target_scores: tuple[int, ...]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "instance_id": self.instance_id,
            "messages": [{"role": r, "content": t} for r, t in self.messages],
            "target": self.target,
            "target_scores": list(self.target_scores),
            "meta": self.meta,
        }


def _story(inst: StoryInstance) -> str:
    return USER_TEMPLATE.format(precontext=inst.precontext, sentence=inst.sentence, ending=inst.ending or "",
                                homonym=inst.homonym, judged_meaning=inst.judged_meaning)


def export_strategy(
    instances: Sequence[StoryInstance],
    strategy: Strategy | str,
    thresholds: CategoryThresholds | None = None,
    sense_hints: Mapping[str, str] | None = None,
) -> list[SftRecord]:
    strategy = Strategy(strategy)
    if strategy is Strategy.SINGLE_WITH_DIFFICULTY and thresholds is None:
        raise ExportError("difficulty strategy needs calibrated thresholds")
    if strategy is Strategy.SINGLE_WITH_THINKING and sense_hints is None:
        raise ExportError("thinking strategy needs sense hints")
    out: list[SftRecord] = []
    for inst in sorted(instances, key=lambda i: i.id):
        if not inst.labeled:
            raise ExportError(f"instance {inst.id} is unlabeled")
        story = _story(inst)
        if strategy is Strategy.SINGLE_ANNOTATOR:
            msgs = (("user", story + "\n" + ASK_ONE),)
            for n, s in enumerate(inst.annotations):
                out.append(SftRecord(strategy, inst.id, msgs, str(s), (s,), {"annotator": n}))
        elif strategy is Strategy.FIVE_ANNOTATOR:
            mean = inst.stats().mean
            scores = tuple(inst.annotations)
            target = "Annotator scores: " + ", ".join(map(str, scores)) + f"\nMean score: {mean:.2f}"
            out.append(SftRecord(strategy, inst.id, (("user", story + "\n" + ASK_FIVE),), target, scores,
                                 {"mean": mean}))
        elif strategy is Strategy.SINGLE_WITH_THINKING:
            if inst.id not in sense_hints:
                raise ExportError(f"no sense hint for instance {inst.id}")
            band = plausibility_band(inst.stats().mean)
            reasoning = (
                f"Likely intended sense of \"{inst.homonym}\": {sense_hints[inst.id]}\n"
                f"Reasoning steps: compare the proposed meaning against that sense and the story's clues. "
                f"{band.rationale}"
            )
            g = gold_score(inst)
            msgs = (("user", story + "\n" + reasoning + "\n\n" + ASK_ONE),)
            out.append(SftRecord(strategy, inst.id, msgs, str(g), (g,),
                                 {"band": band.value, "sense_hint": sense_hints[inst.id]}))
        else:
            cat = categorize(inst.stats(), thresholds)
            g = gold_score(inst)
            msgs = (("user", f"[Difficulty: {cat.label}]\n" + story + "\n" + ASK_ONE),)
            out.append(SftRecord(strategy, inst.id, msgs, str(g), (g,), {"difficulty": cat.value}))
    return out


def dump_records(records: Sequence[SftRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for r in records)


SCHEMA = {
    "type": "object",
    "required": ["strategy", "instance_id", "messages", "target", "target_scores"],
    "properties": {
        "strategy": {"enum": [s.value for s in Strategy]},
        "instance_id": {"type": "string", "minLength": 1},
        "messages": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["role", "content"],
                "properties": {"role": {"enum": ["system", "user", "assistant"]}, "content": {"type": "string"}},
            },
        },
        "target": {"type": "string", "minLength": 1},
        "target_scores": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1, "maximum": 5}},
        "meta": {"type": "object"},
    },
}
