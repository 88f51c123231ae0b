import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambiscore.corpus import (
    CorpusParseError,
    FieldMapping,
    PlausibilityBand,
    annotation_stats,
    dataset_hash,
    gold_score,
    parse_dataset,
    plausibility_band,
    render_story_text,
    serialize_dataset,
    summarize,
)
from conftest import inst


def rec(i, ann=(3, 3, 4, 4, 5), **kw):
    d = {"id": str(i), "homonym": "bank", "precontext": "A story.", "sentence": "He saw the bank.",
         "ending": "The end.", "judged_meaning": "a river side", "annotations": list(ann)}
    d.update(kw)
    return d


# Frozen from statistics.mean / stdev / pstdev.
STATS_CASES = [
    ((3, 3, 3, 3, 3), 3.0, 0.0, 0.0),
    ((5, 5, 4, 4, 4), 4.4, 0.5477225575051661, 0.4898979485566356),
    ((1, 5), 3.0, 2.8284271247461903, 2.0),
    ((1, 3, 5, 2, 4), 3.0, 1.5811388300841898, 1.4142135623730951),
]


@pytest.mark.parametrize("ann,mean,ssd,psd", STATS_CASES)
def test_annotation_stats(ann, mean, ssd, psd):
    s = annotation_stats(ann)
    assert s.mean == pytest.approx(mean, abs=1e-12)
    assert s.std_sample == pytest.approx(ssd, abs=1e-12)
    assert s.std_population == pytest.approx(psd, abs=1e-12)
    assert sum(s.histogram) == len(ann)


def test_annotation_stats_empty():
    with pytest.raises(ValueError):
        annotation_stats([])


def test_parse_empty_array():
    res = parse_dataset("[]", "train")
    assert res.instances == [] and res.rejects == []


def test_out_of_range_annotation_rejected_rest_kept():
    raw = json.dumps([rec(1), rec(2, ann=(1, 2, 6, 3, 3)), rec(3)], indent=1)
    res = parse_dataset(raw, "train")
    assert [i.id for i in res.instances] == ["1", "3"]
    assert len(res.rejects) == 1 and "outside" in res.rejects[0].message
    assert res.rejects[0].line > 1


def test_missing_field_is_per_record():
    bad = rec(2)
    del bad["sentence"]
    res = parse_dataset(json.dumps([rec(1), bad]), "dev")
    assert len(res.instances) == 1 and "sentence" in res.rejects[0].message


def test_homonym_must_occur_in_sentence():
    res = parse_dataset(json.dumps([rec(1, sentence="Nothing here.")]), "dev")
    assert not res.instances and "does not occur" in res.rejects[0].message


def test_duplicate_ids_rejected():
    res = parse_dataset(json.dumps([rec(1), rec(1)]), "dev")
    assert len(res.instances) == 1 and "duplicate" in res.rejects[0].message


def test_malformed_json_has_offset():
    raw = '[{"id": "1", "homonym": "bank",\n  "oops" }]'
    with pytest.raises(CorpusParseError) as ei:
        parse_dataset(raw, "dev")
    assert ei.value.offset > 0 and ei.value.line == 2


def test_id_keyed_object_and_jsonl_forms():
    keyed = {"7": {k: v for k, v in rec(7).items() if k != "id"}}
    res = parse_dataset(json.dumps(keyed), "dev")
    assert [i.id for i in res.instances] == ["7"]
    jsonl = "\n".join(json.dumps(rec(i)) for i in range(3)) + "\n"
    assert len(parse_dataset(jsonl, "dev").instances) == 3


def test_field_mapping_and_unlabeled_test_split():
    fm = FieldMapping(homonym="word", annotations="choices")
    r = rec(1)
    r["word"] = r.pop("homonym")
    r.pop("annotations")
    res = parse_dataset(json.dumps([r]), "test", fm)
    assert res.instances[0].homonym == "bank" and not res.instances[0].labeled
    assert parse_dataset(json.dumps([r]), "test", fm, require_labels=True).rejects


def test_whitespace_normalized():
    res = parse_dataset(json.dumps([rec(1, precontext="  A   story.\n\tTwo ")]), "dev")
    assert res.instances[0].precontext == "A story. Two"


_text = st.text(alphabet="abcdefgh XYZ.,'", min_size=1, max_size=30).map(str.strip).filter(bool)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(_text, _text, st.booleans(), st.lists(st.integers(1, 5), min_size=0, max_size=5)),
                max_size=8))
def test_roundtrip(rows):
    insts = [inst(id=f"r{n}", precontext=" ".join(p.split()), meaning=" ".join(m.split()),
                  ending="Done." if e else None, annotations=a, split="dev")
             for n, (p, m, e, a) in enumerate(rows)]
    data = serialize_dataset(insts)
    back = parse_dataset(data, "dev").instances
    assert back == insts
    assert serialize_dataset(back) == data
    assert dataset_hash(back) == dataset_hash(list(reversed(insts)))


@pytest.mark.parametrize("mean,band", [
    (4.0, PlausibilityBand.HIGH), (3.0, PlausibilityBand.MODERATE), (1.99, PlausibilityBand.NOT_PLAUSIBLE),
    (2.0, PlausibilityBand.SLIGHT), (5.0, PlausibilityBand.HIGH), (1.0, PlausibilityBand.NOT_PLAUSIBLE),
])
def test_bands(mean, band):
    assert plausibility_band(mean) is band


@pytest.mark.parametrize("bad", [0.99, 5.01, float("nan")])
def test_band_out_of_range(bad):
    with pytest.raises(ValueError):
        plausibility_band(bad)


@given(st.floats(1.0, 5.0), st.floats(1.0, 5.0))
def test_band_monotone(a, b):
    order = list(PlausibilityBand)
    lo, hi = sorted((a, b))
    assert order.index(plausibility_band(lo)) >= order.index(plausibility_band(hi))


def test_high_band_rationale():
    assert "strongly fits the context" in PlausibilityBand.HIGH.rationale


def test_render_flags():
    with_end = inst(ending="It was closed.")
    no_end = inst(ending=None)
    assert render_story_text(with_end) == render_story_text(with_end)
    assert "It was closed." in render_story_text(with_end)
    assert "It was closed." not in render_story_text(with_end, include_ending=False)
    assert len(render_story_text(no_end).splitlines()) == 4
    assert "Meaning:" not in render_story_text(with_end, include_meaning=False)


def test_gold_score_rounds_half_away():
    assert gold_score(inst(annotations=(2, 3))) == 3
    assert gold_score(inst(annotations=(4, 4, 5, 5))) == 5
    assert gold_score(inst(annotations=(1, 1, 2, 2, 2))) == 2


def test_summary():
    res = parse_dataset(json.dumps([rec(1), rec(2, ann=(5, 5, 5, 5, 5)), rec(3, ann=(9,))]), "train")
    s = summarize(res, "train")
    assert (s.n_instances, s.n_rejected, s.n_unique_homonyms, s.n_unique_senses) == (2, 1, 1, 1)
    assert s.band_counts["high"] == 1 and s.band_counts["moderate"] == 1
