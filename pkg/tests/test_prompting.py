import pytest
from hypothesis import given
from hypothesis import strategies as st

from ambiscore.corpus import gold_score
from ambiscore.difficulty import CategoryThresholds, categorize_all
from ambiscore.gateway import GatewayError, MockScript, Rule, oracle_script
from ambiscore.prompting import (
    FEW_SHOT,
    ZERO_SHOT,
    PromptError,
    RunRecord,
    Scorer,
    ScoreParseError,
    build_prompt,
    dump_run,
    load_run,
    parse_score,
    sense_hint,
    target_marker,
)
from ambiscore.retrieval import build_index
from ambiscore.synthetic import calibration_fixture, make_split
from conftest import FIXTURES, inst

GOLDEN = FIXTURES / "prompts"


def test_zero_shot_golden(golden_instance):
    text = build_prompt(golden_instance).text
    assert text == (GOLDEN / "zero_shot.txt").read_text(encoding="utf-8")
    assert "Proposed Meaning to Evaluate:" in text


@pytest.mark.parametrize("k", [1, 3])
def test_few_shot_golden(golden_instance, golden_examples, k):
    b = build_prompt(golden_instance, golden_examples[k])
    assert b.text == (GOLDEN / f"few_shot_k{k}.txt").read_text(encoding="utf-8")
    assert (b.mode, b.k, len(b.example_ids)) == (FEW_SHOT, k, 3 * k)


def test_k1_has_three_blocks_before_target(golden_instance, golden_examples):
    text = build_prompt(golden_instance, golden_examples[1]).text
    head, _ = text.split("Now evaluate the following story", 1)
    assert head.count("Example ") == 3


def test_zero_and_few_shot_differ_only_in_examples(golden_instance, golden_examples):
    zero = build_prompt(golden_instance).text
    few = build_prompt(golden_instance, golden_examples[3]).text
    cut = zero.index("\n\nNow evaluate")
    assert few.startswith(zero[:cut]) and few.endswith(zero[cut:])
    assert "Example 1:" in few[cut:len(few) - len(zero[cut:])]


def test_deterministic_and_digest(golden_instance, golden_examples):
    a = build_prompt(golden_instance, golden_examples[1])
    b = build_prompt(golden_instance, golden_examples[1])
    assert a == b and a.digest() == b.digest() and len(a.digest()) == 64
    assert a.digest() != build_prompt(golden_instance).digest()


def test_mean_labels_flag(golden_instance, golden_examples):
    text = build_prompt(golden_instance, golden_examples[1], use_mean=True).text
    assert "Human plausibility score: 5.0" in text


def test_homonym_absent_rejected():
    with pytest.raises(PromptError):
        build_prompt(inst(sentence="Nothing to see."))


def test_target_marker_only_in_evaluated_section(golden_instance, golden_examples):
    text = build_prompt(golden_instance, golden_examples[3]).text
    assert text.count(target_marker(golden_instance)) == 1
    assert text.index(target_marker(golden_instance)) > text.index("Now evaluate")


@pytest.mark.parametrize("raw,score,path", [
    ("4", 4, "exact"), (" 5\n", 5, "exact"), ("Score: 3", 3, "scanned"),
    ("I think 2, no wait, 4.", 4, "scanned"), ("7 then 1", 1, "scanned"), ("3/5", 5, "scanned"),
])
def test_parse_score(raw, score, path):
    p = parse_score(raw)
    assert (p.score, p.parse_path) == (score, path)


@pytest.mark.parametrize("raw", ["highly plausible", "", "0", "score 4.5", "10", "v2"])
def test_parse_score_fails(raw):
    with pytest.raises(ScoreParseError):
        parse_score(raw)


@given(st.integers(1, 5), st.text(alphabet="abc :\n", max_size=10))
def test_parse_score_finds_trailing_integer(n, prefix):
    assert parse_score(f"{prefix} {n}").score == n


def test_sense_hint(mock_gw):
    gw, backend = mock_gw(MockScript(chat_default="a financial institution"))
    i = inst()
    assert sense_hint(i, gw, "m") == "a financial institution"
    assert sense_hint(i, gw, "m") == "a financial institution"
    assert backend.requests["chat"] == 1
    gw2, _ = mock_gw(MockScript(chat_default="   "), cache=False)
    with pytest.raises(GatewayError):
        sense_hint(i, gw2, "m")


def _indexes(gw):
    train = calibration_fixture()
    return build_index(train, categorize_all(train, CategoryThresholds(0.5, 4.0, 2.0)), gw)


def test_scorer_constant_mock(mock_gw):
    gw, _ = mock_gw(MockScript(chat_default="5"))
    dev = make_split(8, "dev", seed=2)
    runs = Scorer(gw, "m", _indexes(gw)).score_batch(dev, FEW_SHOT, 1)
    assert [r.score for r in runs] == [5] * 8
    assert [r.instance_id for r in runs] == [d.id for d in dev]
    assert all(r.status == "ok" and len(r.example_ids) == 3 and r.provenance == "mock" for r in runs)


def test_scorer_oracle_mock(mock_gw):
    dev = make_split(20, "dev", seed=3)
    gw, _ = mock_gw(oracle_script(dev, default=None))
    runs = Scorer(gw, "m").score_batch(dev, ZERO_SHOT)
    assert [r.score for r in runs] == [gold_score(d) for d in dev]


def test_scorer_retry_then_fail(mock_gw):
    good, bad = make_split(2, "dev", seed=4)
    script = MockScript(chat_default="nope", rules=[Rule([target_marker(good)], ["plausible-ish", "2"])])
    gw, _ = mock_gw(script)
    s = Scorer(gw, "m")
    r1 = s.score_instance(good)
    assert (r1.score, r1.status) == (2, "retried")
    r2 = s.score_instance(bad)
    assert (r2.score, r2.status) == (None, "failed") and "ScoreParseError" in r2.error
    assert r2.raw_completion == "nope"


def test_scorer_few_shot_without_indexes_fails_as_data(mock_gw):
    gw, _ = mock_gw()
    rec = Scorer(gw, "m").score_instance(make_split(1, "dev")[0], FEW_SHOT, 1)
    assert rec.status == "failed" and "indexes" in rec.error


def test_run_roundtrip():
    recs = [RunRecord("a", ZERO_SHOT, 0, "m", 3, "ok", "d" * 64, [], "3"),
            RunRecord("b", FEW_SHOT, 1, "m", None, "failed", "e" * 64, ["x", "y", "z"], "??", "boom")]
    text = dump_run(recs)
    back = load_run(text)
    assert dump_run(back) == text
    assert back[1].error == "boom" and "provenance" not in text
