import json

import pytest

from helpers import scripted_backend, scripted_response, write_fixtures
from rapo.errors import DegradeRejected
from rapo.graph import ExtractionRecord, RelationGraph, add_record
from rapo.llm import CallableBackend, FixtureBackend, Gateway, render
from rapo.llm.templates import REFACTOR_PREFIX, REFACTOR_SUFFIX, SELECT_INSTRUCTION
from rapo.pipeline import Optimizer
from rapo.datasets import (
    DIMENSIONS,
    DiscriminatorTriple,
    RefactorPair,
    build_discriminator_dataset,
    build_refactor_dataset,
    degrade,
    load_labels,
    parse_dimension,
    read_discriminator_dataset,
    read_refactor_dataset,
    read_rows,
    route_dimension,
    simulate_user_prompts,
)


def test_identity_degrade_is_rejected():
    calls = []

    def echo(request):
        calls.append(1)
        return request.rendered_prompt.split("Caption: ", 1)[1].split("\nRewritten:")[0].upper()

    with pytest.raises(DegradeRejected):
        degrade(Gateway(CallableBackend(echo)), "A cat on a mat.")
    assert len(calls) == 2  # one re-ask before giving up


def test_degrade_fixture(tmp_path):
    path = write_fixtures(tmp_path / "f.jsonl", {render("pair_degrade", {"c": "A cat on a mat."}): "cat, mat"})
    assert degrade(Gateway(FixtureBackend.from_file(path)), "A cat on a mat.") == "cat, mat"


def test_hundred_prompts_ten_rejects(tmp_path):
    corpus = [f"caption number {i} of a scenic valley" for i in range(100)]
    rejects = set(corpus[::10])

    def fake(request):
        c = request.rendered_prompt.split("Caption: ", 1)[1].split("\nRewritten:")[0]
        return c if c in rejects else f"valley {c.split()[2]}"

    out = tmp_path / "dr.jsonl"
    summary = build_refactor_dataset(corpus, out, Gateway(CallableBackend(fake)), workers=4)
    assert (summary.written, summary.rejected, summary.requested) == (90, 10, 100)
    assert len(read_rows(out)) == 90


def test_limit_zero(tmp_path):
    out = tmp_path / "dr.jsonl"
    summary = build_refactor_dataset(["a b c"], out, Gateway(scripted_backend()), limit=0)
    assert out.read_text() == ""
    assert summary.as_dict() == {"dataset": "refactor", "requested": 0, "written": 0, "rejected": 0, "failed": 0}


def test_rows_carry_source_and_round_trip(tmp_path):
    corpus = ["A dog runs on a beach.", "Two cars race at night.", "A chef cooks pasta."]
    out = tmp_path / "dr.jsonl"
    build_refactor_dataset(corpus, out, Gateway(scripted_backend()))
    rows = read_rows(out)
    assert [r["output"] for r in rows] == corpus
    for row in rows:
        assert set(row) == {"instruction", "input", "output"}
        assert row["instruction"].startswith(REFACTOR_PREFIX) and row["instruction"].endswith(REFACTOR_SUFFIX)
    pairs = read_refactor_dataset(out)
    assert [p.c_i for p in pairs] == corpus
    assert pairs[0] == RefactorPair("beach. a on runs dog A please", corpus[0])


def test_refactor_pair_invariants():
    with pytest.raises(ValueError):
        RefactorPair("Same  text", "same text")
    with pytest.raises(ValueError):
        RefactorPair("", "x")


# simulation and routing


def test_simulate_distinct():
    res = simulate_user_prompts(Gateway(scripted_backend()), 5)
    assert len(res.prompts) == 5 and res.shortfall == 0
    assert [d for _, d in res.prompts] == list(DIMENSIONS[:5])


def test_simulate_duplicates_shortfall():
    answers = iter(["a cat", "A CAT", "a dog", "a bird", "a dog"])
    res = simulate_user_prompts(Gateway(CallableBackend(lambda r: next(answers))), 5)
    assert [t for t, _ in res.prompts] == ["a cat", "a dog", "a bird"]
    assert res.shortfall == 2


def test_simulate_single_dimension():
    res = simulate_user_prompts(Gateway(scripted_backend()), 4, dimensions=["human_action"])
    assert {d for _, d in res.prompts} == {"human_action"}


def test_simulate_quotas():
    res = simulate_user_prompts(Gateway(scripted_backend()), 0, quotas={"object_class": 2, "other": 1})
    assert [d for _, d in res.prompts] == ["object_class", "object_class", "other"]


@pytest.mark.parametrize(
    "answer, dim",
    [("multiple_objects", "multiple_objects"), ("Multiple objects.", "multiple_objects"), ("banana", "other")],
)
def test_route_dimension(answer, dim):
    assert route_dimension(Gateway(CallableBackend(lambda r: answer)), "a dog and a cat in a park") == dim


def test_parse_dimension_closed_set():
    assert parse_dimension("human-action") == "human_action"
    assert parse_dimension("imaging_quality", dimensions=("other",)) == "other"


# discriminator triples


@pytest.fixture
def optimizer(embedder):
    g = RelationGraph.empty_for(embedder)
    add_record(g, ExtractionRecord.create("park", ["a dog"], ["running"]), embedder)
    return Optimizer(g, embedder, Gateway(scripted_backend()))


PROMPTS = [(f"p{i}", f"a dog {i} running in the park") for i in range(6)]


def test_full_labels(tmp_path, optimizer):
    labels = {pid: "rn"[i % 2] for i, (pid, _) in enumerate(PROMPTS)}
    out = tmp_path / "dd.jsonl"
    summary = build_discriminator_dataset(PROMPTS, optimizer, out, labels=labels)
    assert summary.written == len(PROMPTS) and summary.skipped_missing_label == 0
    triples = read_discriminator_dataset(out)
    assert [t.y_d for t in triples] == [labels[p] for p, _ in PROMPTS]
    for row in read_rows(out):
        assert row["instruction"] == SELECT_INSTRUCTION
        assert row["dimension"] in DIMENSIONS


def test_half_labels(tmp_path, optimizer):
    labels = {pid: "r" for pid, _ in PROMPTS[:3]}
    summary = build_discriminator_dataset(PROMPTS, optimizer, tmp_path / "dd.jsonl", labels=labels)
    assert (summary.written, summary.skipped_missing_label) == (3, 3)


def test_heuristic_label_prefers_median_length(tmp_path, embedder):
    g = RelationGraph.empty_for(embedder)
    add_record(g, ExtractionRecord.create("park"), embedder)

    def fake(request):
        if request.template_id == "refactor":
            return " ".join(["short"] * 30)
        if request.template_id == "rewrite":
            return " ".join(["long"] * 300)
        return scripted_response(request)

    opt = Optimizer(g, embedder, Gateway(CallableBackend(fake)), max_refactor_words=1000)
    out = tmp_path / "dd.jsonl"
    build_discriminator_dataset([("a", "a cat")], opt, out, labels=None, median_words=36)
    (triple,) = read_discriminator_dataset(out)
    assert triple.y_d == "r"


def test_triple_round_trip_and_invariants():
    t = DiscriminatorTriple("a cat", "a cat, cinematic", "a fluffy cat", "n", "object_class", "7")
    assert DiscriminatorTriple.from_row(json.loads(json.dumps(t.to_row()))) == t
    with pytest.raises(ValueError):
        DiscriminatorTriple("a", "b", "c", "x")
    with pytest.raises(ValueError):
        DiscriminatorTriple("a\nb", "b", "c", "r")


def test_load_labels(tmp_path):
    path = tmp_path / "labels.jsonl"
    path.write_text('{"id": "1", "y_d": "R"}\n{"id": 2, "y_d": "n"}\n')
    assert load_labels(path) == {"1": "r", "2": "n"}
    path.write_text('{"id": "1", "y_d": "maybe"}\n')
    with pytest.raises(ValueError):
        load_labels(path)
