"""Plausibility prompts, completion parsing, and per-instance scoring."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ._util import canonical_json, sha256_hex
from .corpus import StoryInstance, render_story_text
from .difficulty import DifficultyCategory
from .gateway import ChatRequest, GatewayError

log = logging.getLogger(__name__)

ZERO_SHOT = "zero-shot"
FEW_SHOT = "few-shot"

INTRO = (
    "Your task is to rate the plausibility of a word's meaning on a scale of 1-5 based on a short story. "
    "You must follow the Thinking Process below to arrive at your score."
)
EXAMPLES_LEAD = (
    " You will be provided with few example stories that illustrate the scoring rubric for different "
    "levels of plausibility, based on similar stories:"
)
BODY = """

Now evaluate the following story and proposed meaning:

Precontext: {precontext}
Sentence: {sentence}
Ending: {ending}

Word: "{homonym}"
Proposed Meaning to Evaluate: "{judged_meaning}"

Complete each step of this process in your analysis.

Instructions:
1. Analyze the Context: Read the complete story and identify all clues that might support or contradict the 'Proposed Meaning'.
2. List Evidence For: State the parts of the story that make the 'Proposed Meaning' plausible.
3. List Evidence Against: State any parts of the story that make the 'Proposed Meaning' implausible.
4. Synthesize and Score: Based on the evidence, provide a final plausibility score using the rubric below.

Scoring Rubric:
- 5: Perfectly plausible. The meaning is strongly supported by the entire context, and all parts of the story form a consistent, logical narrative.
- 4: Very plausible. The meaning fits well and is consistent. There might be minor ambiguity, but no real contradictions.
- 3: Moderately plausible. The meaning is possible, but the context is ambiguous or contains minor conflicting clues.
- 2: Barely plausible. The meaning largely conflicts with the context.
- 1: Implausible. The meaning is directly and strongly contradicted by the context.

Do all the reasoning mentally / privately - do not print it; print only the final integer score as an output."""

RETRY_REMINDER = "Reply with a single integer from 1 to 5 and nothing else."

SENSE_HINT_TEMPLATE = """Read the story and give the most probable meaning of the word "{homonym}" as it is used in it.
Answer with one short gloss sentence and nothing else.

{story}"""


class PromptError(ValueError):
    pass


class ScoreParseError(ValueError):
    def __init__(self, raw: str):
        super().__init__(f"no score in 1..5 found in completion {raw[:80]!r}")
        self.raw = raw


@dataclass(frozen=True)
class PromptBundle:
    messages: tuple[tuple[str, str], ...]
    mode: str
    k: int
    instance_id: str
    example_ids: tuple[str, ...]

    @property
    def text(self) -> str:
        return self.messages[-1][1]

    def digest(self) -> str:
        return sha256_hex(canonical_json([list(m) for m in self.messages]))


def target_marker(inst: StoryInstance) -> str:
    """Text that appears only in the evaluated section of a prompt for ``inst``."""
    return (f'Precontext: {inst.precontext}\nSentence: {inst.sentence}\nEnding: {inst.ending or ""}\n\n'
            f'Word: "{inst.homonym}"\nProposed Meaning to Evaluate: "{inst.judged_meaning}"')


def render_example(n: int, ex, use_mean: bool = False) -> str:
    score = f"{ex.gold_mean:.1f}" if use_mean else str(ex.gold)
    return f"Example {n}:\n{ex.text}\nHuman plausibility score: {score}"


def examples_block(examples: Sequence, use_mean: bool = False) -> str:
    if not examples:
        return ""
    rendered = "\n\n".join(render_example(n, ex, use_mean) for n, ex in enumerate(examples, start=1))
    return EXAMPLES_LEAD + "\n\n" + rendered


def build_prompt(instance: StoryInstance, examples: Sequence = (), use_mean: bool = False) -> PromptBundle:
    if instance.homonym.lower() not in instance.sentence.lower():
        raise PromptError(f"homonym {instance.homonym!r} absent from sentence of {instance.id}")
    body = BODY.format(
        precontext=instance.precontext,
        sentence=instance.sentence,
        ending=instance.ending or "",
        homonym=instance.homonym,
        judged_meaning=instance.judged_meaning,
    )
    text = INTRO + examples_block(examples, use_mean) + body
    if examples and len(examples) % 3:
        raise PromptError(f"few-shot bundles carry 3*k examples, got {len(examples)}")
    mode, k = (FEW_SHOT, len(examples) // 3) if examples else (ZERO_SHOT, 0)
    return PromptBundle(
        messages=(("user", text),),
        mode=mode,
        k=k,
        instance_id=instance.id,
        example_ids=tuple(ex.id for ex in examples),
    )


@dataclass(frozen=True)
class ParsedScore:
    score: int
    raw_completion: str
    parse_path: str  # "exact" | "scanned"


_INT = re.compile(r"(?<![\w.])(\d+)(?!\w|\.\d)")


def parse_score(completion: str) -> ParsedScore:
    if completion is None or not completion.strip():
        raise ScoreParseError(completion or "")
    body = completion.strip()
    if body.isdigit() and 1 <= int(body) <= 5:
        return ParsedScore(int(body), completion, "exact")
    for m in reversed(list(_INT.finditer(body))):
        v = int(m.group(1))
        if 1 <= v <= 5:
            return ParsedScore(v, completion, "scanned")
    raise ScoreParseError(completion)


def sense_hint(instance: StoryInstance, gateway, model_id: str, max_tokens: int = 64) -> str:
    """One-sentence gloss of the homonym's likely sense; auxiliary input only."""
    prompt = SENSE_HINT_TEMPLATE.format(
        homonym=instance.homonym, story=render_story_text(instance, include_meaning=False))
    comp = gateway.chat_complete(ChatRequest(model_id, (("user", prompt),), 0.0, max_tokens))
    gloss = comp.text.strip()
    if not gloss:
        raise GatewayError(f"empty sense gloss for {instance.id}")
    return gloss.splitlines()[0].strip()


# --------------------------------------------------------------------------

RUN_FIELDS = ("instance_id", "mode", "k", "model_id", "score", "status", "prompt_digest",
              "example_ids", "raw_completion", "error")


@dataclass
class RunRecord:
    instance_id: str
    mode: str
    k: int
    model_id: str
    score: float | None
    status: str  # "ok" | "retried" | "failed"
    prompt_digest: str = ""
    example_ids: list[str] = field(default_factory=list)
    raw_completion: str = ""
    error: str | None = None
    provenance: str | None = None  # in-memory only; not persisted

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in RUN_FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(**{k: d.get(k) for k in RUN_FIELDS if k in d})


def dump_run(records: Sequence[RunRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def load_run(text: str) -> list[RunRecord]:
    return [RunRecord.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


@dataclass
class Scorer:
    """Bundles what :meth:`score_instance` needs: gateway, models, indexes."""

    gateway: object
    model_id: str
    indexes: Mapping[DifficultyCategory, object] | None = None
    embedding_model_id: str | None = None
    max_tokens: int = 16
    use_mean_labels: bool = False
    embed_options: object = None

    def score_instance(self, instance: StoryInstance, mode: str = ZERO_SHOT, k: int = 0) -> RunRecord:
        from .retrieval import EmbedTextOptions, few_shot_bundle

        rec = RunRecord(instance.id, mode, k if mode == FEW_SHOT else 0, self.model_id, None, "failed")
        try:
            examples = []
            if mode == FEW_SHOT:
                if not self.indexes:
                    raise PromptError("few-shot mode needs loaded indexes")
                examples = few_shot_bundle(instance, k, self.indexes, self.gateway, self.embedding_model_id,
                                           self.embed_options or EmbedTextOptions())
            elif mode != ZERO_SHOT:
                raise PromptError(f"unknown mode {mode!r}")
            bundle = build_prompt(instance, examples, self.use_mean_labels)
            rec.prompt_digest = bundle.digest()
            rec.example_ids = list(bundle.example_ids)
            messages = bundle.messages
            for attempt in range(2):
                comp = self.gateway.chat_complete(ChatRequest(self.model_id, messages, 0.0, self.max_tokens))
                rec.raw_completion = comp.text
                rec.provenance = comp.provenance
                try:
                    parsed = parse_score(comp.text)
                except ScoreParseError as exc:
                    if attempt == 0:
                        messages = ((messages[0][0], messages[0][1] + "\n\n" + RETRY_REMINDER),)
                        continue
                    raise exc
                rec.score = parsed.score
                rec.status = "ok" if attempt == 0 else "retried"
                rec.error = None
                break
        except Exception as exc:  # failures are data; the batch keeps going
            rec.status = "failed"
            rec.score = None
            rec.error = f"{type(exc).__name__}: {exc}"
            log.warning("instance %s failed: %s", instance.id, rec.error)
        return rec

    def score_batch(self, instances: Sequence[StoryInstance], mode: str = ZERO_SHOT, k: int = 0,
                    workers: int = 4) -> list[RunRecord]:
        if workers <= 1:
            return [self.score_instance(i, mode, k) for i in instances]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda i: self.score_instance(i, mode, k), instances))
