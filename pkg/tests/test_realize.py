import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from framevqa.realize import (
    AnnotationError, Dataset, ImageAnnotation, UnknownImage, VerbMismatch, build_dataset,
    placeholders, realize, substitute,
)
from framevqa.templates import VERB_TARGET, QuestionTemplate, generate_all, generate_templates

BOY = {"AGENT": "boy", "FOOD": "meat", "CONTAINER": "wok", "HEATSOURCE": "", "TOOL": "spatula", "PLACE": "kitchen"}


def _tpl(frames, verb, target, context):
    return next(t for t in generate_templates(frames[verb]) if t.key == (target, tuple(context)))


def test_tool_question(sample_frames):
    ann = ImageAnnotation("cooking_21", "cooking", BOY)
    s = realize(_tpl(sample_frames, "cooking", "TOOL", ["CONTAINER"]), ann, sample_frames["cooking"])
    assert (s.question, s.answer, s.frame_element) == ("What does the boy use to cook in wok?", "spatula", "TOOL")


def test_verb_question(sample_frames):
    ann = ImageAnnotation("buying_7", "buying", {"AGENT": "woman", "GOODS": "shoe"})
    s = realize(_tpl(sample_frames, "buying", VERB_TARGET, []), ann, sample_frames["buying"])
    assert (s.question, s.answer, s.frame_element) == ("What is the woman doing?", "buying", "VERB")


def test_empty_seller_is_skipped(sample_frames, sample_annotations):
    ann = next(a for a in sample_annotations if a.image_id == "buying_1")
    frame = sample_frames["buying"]
    for t in generate_templates(frame):
        if t.target == "SELLER" or "SELLER" in t.context or "PLACE" in t.context or t.target == "PLACE":
            assert realize(t, ann, frame) is None


def test_verb_mismatch(sample_frames):
    ann = ImageAnnotation("x", "buying", {"AGENT": "woman"})
    with pytest.raises(VerbMismatch):
        realize(_tpl(sample_frames, "cooking", "AGENT", []), ann, sample_frames["cooking"])


def test_full_annotation_yields_every_template(sample_frames):
    frame = sample_frames["catching"]
    ann = ImageAnnotation("c", "catching", {"AGENT": "bear", "CAUGHTITEM": "fish", "TOOL": "mouth", "PLACE": "river"})
    ts = generate_templates(frame)
    ds = build_dataset([ann], {"catching": ts}, sample_frames, {"c": "train"}, dedup=False)
    assert len(ds.samples) == len(ts)
    assert all(not re.search(r"\b[A-Z]{2,}\b", s.question) for s in ds.samples)


def test_only_subject_questions_when_objects_missing(sample_frames):
    ann = ImageAnnotation("o", "opening", {"AGENT": "cat", "ITEM": "", "TOOL": "", "PLACE": ""})
    ds = build_dataset([ann], generate_all(sample_frames), sample_frames, {"o": "train"})
    assert {(s.frame_element, s.context, s.question) for s in ds.samples} == {
        ("AGENT", (), "Who is opening?"), (VERB_TARGET, (), "What is the cat doing?")}


def test_dedup_of_identical_annotators(sample_frames):
    tpl = generate_all(sample_frames)
    one = ImageAnnotation("i", "cooking", BOY, 0)
    two = ImageAnnotation("i", "cooking", BOY, 1)
    single = build_dataset([one], tpl, sample_frames, {"i": "train"})
    double = build_dataset([one, two], tpl, sample_frames, {"i": "train"})
    assert double.samples == single.samples


def test_dataset_contract(sample_frames, sample_annotations, sample_splits):
    tpl = generate_all(sample_frames)
    ds = build_dataset(sample_annotations, tpl, sample_frames, sample_splits)
    assert len(ds.samples) <= len(sample_annotations) * max(map(len, tpl.values()))
    ids = [s.sample_id for s in ds.samples]
    assert len(ids) == len(set(ids))
    images = {sp: {s.image_id for s in ds.split(sp)} for sp in ("train", "dev", "test")}
    assert not images["train"] & images["test"] and not images["train"] & images["dev"]
    assert set(ds.answer_vocab.items) == {s.answer for s in ds.split("train")}
    assert "spatula" not in ds.answer_vocab  # test-only image
    triples = [(s.image_id, s.question, s.answer) for s in ds.samples]
    assert len(triples) == len(set(triples))
    assert all(s.answer == s.answer.lower() and s.answer for s in ds.samples)
    # sorted by image id first
    assert [s.image_id for s in ds.samples] == sorted(s.image_id for s in ds.samples)


def test_errors(sample_frames):
    tpl = generate_all(sample_frames)
    with pytest.raises(UnknownImage):
        build_dataset([ImageAnnotation("nope", "cooking", BOY)], tpl, sample_frames, {})
    with pytest.raises(AnnotationError):
        build_dataset([ImageAnnotation("a", "flying", {})], tpl, sample_frames, {"a": "train"})
    with pytest.raises(AnnotationError):
        build_dataset([ImageAnnotation("a", "cooking", {"PILOT": "x"})], tpl, sample_frames, {"a": "train"})


def test_jsonl_round_trip(sample_frames, sample_annotations, sample_splits, tmp_path):
    ds = build_dataset(sample_annotations, generate_all(sample_frames), sample_frames, sample_splits)
    p = tmp_path / "d.jsonl"
    with open(p, "w") as fh:
        ds.write_jsonl(fh)
    back = Dataset.read_jsonl(p)
    assert back.samples == ds.samples
    assert back.answer_vocab.items == ds.answer_vocab.items


_filler = st.text(alphabet="abcdefghij ", min_size=1, max_size=12).filter(lambda s: s.strip())


@given(st.dictionaries(st.sampled_from(["AGENT", "FOOD", "TOOL", "PLACE"]), _filler, min_size=4, max_size=4))
def test_substitution_is_pure(fillers):
    surface = "Where does the AGENT cook FOOD with TOOL?"
    out = substitute(surface, fillers)
    tokens = surface.split()
    expected = " ".join(fillers.get(t.rstrip("?"), t.rstrip("?")) + ("?" if t.endswith("?") else "") for t in tokens)
    assert out == expected
    assert placeholders(surface) == ["AGENT", "FOOD", "TOOL"]
