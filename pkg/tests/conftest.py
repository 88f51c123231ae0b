import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ambiscore.corpus import StoryInstance  # noqa: E402
from ambiscore.difficulty import DifficultyCategory  # noqa: E402
from ambiscore.gateway import MockScript, mock_gateway  # noqa: E402
from ambiscore.retrieval import RetrievedExample  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

# the suite never talks to a real endpoint, except the opt-in live smoke test
LIVE_API_KEY = os.environ.get("AMBISCORE_API_KEY")

H, A, L = (DifficultyCategory.HUMAN_EASY_HIGH, DifficultyCategory.AMBIGUOUS_CONTEXT,
           DifficultyCategory.HUMAN_EASY_LOW)


def inst(id="x-1", annotations=(4, 4, 4, 4, 4), homonym="bank", sentence="She went to the bank.",
         ending="It was closed.", meaning="a financial institution", split="train",
         precontext="It was a long day."):
    return StoryInstance(id, split, homonym, precontext, sentence, ending, meaning, tuple(annotations))


@pytest.fixture
def golden_instance():
    return StoryInstance(
        id="dev-golden",
        split="dev",
        homonym="bank",
        precontext=("Mira carried her savings across town. The line at the counter was long. "
                    "She held the envelope tight. The clerk finally waved her forward."),
        sentence="She handed the money to the bank teller.",
        ending="The teller counted it twice.",
        judged_meaning="a financial institution that holds money",
        annotations=(5, 5, 5, 4, 5),
    )


def _ex(eid, story, word, meaning, gold, cat):
    return RetrievedExample(eid, 1.0, f"{story}\nWord: {word}\nMeaning: {meaning}", gold, float(gold), cat)


@pytest.fixture
def golden_examples():
    k1 = [
        _ex("t1", "Tom fished by the water all day.\nHe sat on the bank of the river.", "bank",
            "the sloping land beside a river", 5, H),
        _ex("t2", "The parade started at noon.\nA bat hung near the stage.", "bat", "a club used to hit a ball", 3, A),
        _ex("t3", "The orchestra tuned for an hour.\nThe pitch was perfect.", "pitch",
            "the field where a match is played", 1, L),
    ]
    k3 = [
        k1[0],
        _ex("t4", "Ana counted her coins.\nShe went to the bank at noon.", "bank",
            "a financial institution that holds money", 5, H),
        _ex("t5", "The kite flew high.\nThe spring wind was warm.", "spring", "the season after winter", 4, H),
        k1[1],
        _ex("t6", "He lit the stove.\nThe match was short.", "match", "a sporting contest", 3, A),
        _ex("t7", "The tree was old.\nIts bark was rough.", "bark", "the sound a dog makes", 2, A),
        k1[2],
        _ex("t8", "The letter was sealed.\nThe seal was red.", "seal", "a marine mammal", 1, L),
        _ex("t9", "The tower rose over the docks.\nA crane lifted the crate.", "crane", "a tall wading bird", 1, L),
    ]
    return {1: k1, 3: k3}


@pytest.fixture
def mock_gw(tmp_path):
    def make(script=None, cache=True, **kw):
        return mock_gateway(script or MockScript(), tmp_path / "cache" if cache else None, **kw)

    return make


@pytest.fixture(autouse=True)
def _no_api_key(monkeypatch):
    monkeypatch.delenv("AMBISCORE_API_KEY", raising=False)
    yield


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
