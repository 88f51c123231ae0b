"""Seeded AmbiStory-shaped data for offline tests and demos.

The stories are templated nonsense with realistic structure: a precontext,
a sentence containing the homonym, an optional ending, a candidate sense,
and five 1-5 ratings drawn around a latent plausibility.
"""

from __future__ import annotations

import random
from typing import Sequence

from .corpus import StoryInstance

HOMONYMS = {
    "bank": ("a financial institution that holds money", "the sloping land beside a river"),
    "bat": ("a club used to hit a ball", "a nocturnal flying mammal"),
    "pitch": ("the field where a match is played", "the highness or lowness of a sound"),
    "spring": ("the season after winter", "a coiled piece of metal"),
    "crane": ("a machine for lifting heavy loads", "a tall wading bird"),
    "match": ("a stick that makes fire", "a sporting contest"),
    "bark": ("the outer layer of a tree", "the sound a dog makes"),
    "seal": ("a marine mammal", "a stamp used to close a letter"),
    "light": ("not heavy", "brightness that lets you see"),
    "ring": ("a piece of jewelry for the finger", "the sound of a bell"),
    "scale": ("a device for weighing", "a plate on a fish's skin"),
    "fan": ("a device that moves air", "an enthusiastic supporter"),
}

PLACES = ["the harbor", "the old mill", "the village square", "the campsite", "the city park",
          "the train station", "the museum", "the farm", "the school gym", "the riverside path"]
NAMES = ["Ada", "Bilal", "Chen", "Dara", "Emil", "Farah", "Goran", "Hana", "Ivo", "Jun", "Kemal", "Lena"]
EVENTS = ["the storm had passed", "the festival was starting", "the lights went out",
          "a letter arrived", "the market closed early", "the guests were late"]


def _ratings(rng: random.Random, center: float, spread: float) -> tuple[int, ...]:
    return tuple(min(5, max(1, int(round(rng.gauss(center, spread))))) for _ in range(5))


def make_instance(rng: random.Random, idx: int, split: str, with_labels: bool = True) -> StoryInstance:
    word = rng.choice(sorted(HOMONYMS))
    senses = HOMONYMS[word]
    intended = rng.randrange(2)
    judged = senses[rng.randrange(2)]
    name, place, event = rng.choice(NAMES), rng.choice(PLACES), rng.choice(EVENTS)
    pre = (f"{name} walked to {place} after {event}. The air smelled of rain. "
           f"{name} had been thinking about {senses[intended].split(' ', 1)[1]} all week. "
           f"A friend waited near gate {idx + 1}.")
    sentence = f"{name} finally noticed the {word} by the wall."
    ending = None if rng.random() < 0.2 else f"It was clearly {senses[intended]}."
    matches = judged == senses[intended]
    kind = rng.random()
    if kind < 0.45:
        center, spread = (rng.uniform(2.2, 4.2), rng.uniform(0.9, 1.6))
    elif matches:
        center, spread = (rng.uniform(4.3, 5.0), rng.uniform(0.0, 0.6))
    else:
        center, spread = (rng.uniform(1.0, 1.8), rng.uniform(0.0, 0.6))
    if ending is None:
        spread += 0.3
    ann = _ratings(rng, center, spread) if with_labels else ()
    return StoryInstance(
        id=f"{split}-{idx:05d}",
        split=split,
        homonym=word,
        precontext=pre,
        sentence=sentence,
        ending=ending,
        judged_meaning=judged,
        annotations=ann,
    )


def make_split(n: int, split: str = "dev", seed: int = 0, with_labels: bool = True) -> list[StoryInstance]:
    rng = random.Random(f"{split}:{seed}")
    return [make_instance(rng, i, split, with_labels) for i in range(n)]


def calibration_fixture() -> list[StoryInstance]:
    """30 instances with an exact (10, 10, 10) ambiguous/high/low partition."""
    patterns = [(5, 5, 5, 5, 5)] * 10 + [(1, 1, 1, 1, 1)] * 10 + [(1, 3, 5, 2, 4)] * 10
    rng = random.Random("calibration")
    out = []
    for n, ann in enumerate(patterns):
        base = make_instance(rng, n, "train")
        out.append(StoryInstance(base.id, "train", base.homonym, base.precontext, base.sentence, base.ending,
                                 base.judged_meaning, ann))
    return out


def to_records(instances: Sequence[StoryInstance]) -> list[dict]:
    return [i.to_dict() for i in instances]


def main(argv: Sequence[str] | None = None) -> int:
    import argparse
    import json
    from pathlib import Path

    ap = argparse.ArgumentParser(description="Write seeded synthetic train/dev/test files.")
    ap.add_argument("--out", required=True)
    ap.add_argument("--n-train", type=int, default=600)
    ap.add_argument("--n-dev", type=int, default=200)
    ap.add_argument("--n-test", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for split, n in (("train", args.n_train), ("dev", args.n_dev), ("test", args.n_test)):
        insts = make_split(n, split, args.seed, with_labels=split != "test")
        (out / f"{split}.json").write_text(json.dumps(to_records(insts), indent=1) + "\n", encoding="utf-8")
        print(f"{out / (split + '.json')}: {n} instances")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
