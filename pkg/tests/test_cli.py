import json

import pytest

from helpers import EXTRACTIONS, author_fixtures, recording_gateway, sha
from rapo.cli import main
from rapo.datasets import build_discriminator_dataset, build_refactor_dataset, read_refactor_dataset, read_rows
from rapo.embedding import LocalHashEmbedder
from rapo.graph import load_graph
from rapo.llm.templates import SELECT_INSTRUCTION
from rapo.pipeline import Optimizer

BATCH = ["a dog playing in the park", "a woman walking in the rain", "a chef in a kitchen"]


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Workspace with a corpus, a batch file, authored fixtures and a built graph."""
    root = tmp_path_factory.mktemp("ws")
    corpus = list(EXTRACTIONS)
    (root / "corpus.txt").write_text("\n".join(corpus) + "\n")
    (root / "batch.txt").write_text("\n".join(BATCH) + "\n")
    fixtures = root / "fixtures.jsonl"
    author_fixtures(fixtures, corpus, BATCH)
    assert main(["build-graph", "--corpus", str(root / "corpus.txt"), "--out", str(root / "graph.jsonl"),
                 "--fixtures", str(fixtures)]) == 0
    return root


def test_build_graph_header_first(ws):
    first = json.loads((ws / "graph.jsonl").read_text().splitlines()[0])
    assert first["type"] == "header"
    assert load_graph(ws / "graph.jsonl").stats["source_prompt_count"] == 5


def test_build_graph_limit_zero(tmp_path, ws, capsys):
    out = tmp_path / "g.jsonl"
    assert main(["build-graph", "--corpus", str(ws / "corpus.txt"), "--out", str(out), "--limit", "0"]) == 0
    graph = load_graph(out)
    assert graph.scenes == {} and graph.modifiers == {}
    assert len(out.read_text().splitlines()) == 1


def test_build_graph_counts_corrupt_lines(tmp_path, ws, capsys):
    corpus = tmp_path / "c.jsonl"
    prompts = list(EXTRACTIONS)[:2]
    corpus.write_text(
        json.dumps({"id": "a", "text": prompts[0]}) + "\n{broken\n" + json.dumps({"id": "b", "text": prompts[1]}) + "\n"
    )
    code = main(["build-graph", "--corpus", str(corpus), "--out", str(tmp_path / "g.jsonl"),
                 "--fixtures", str(ws / "fixtures.jsonl")])
    summary = json.loads(capsys.readouterr().out)
    assert code == 0
    assert summary["corrupt_lines"] == 1 and summary["prompts_ingested"] == 2


def test_build_graph_without_backend_fails(tmp_path, ws, monkeypatch, capsys):
    monkeypatch.delenv("RAPO_LLM_BASE_URL", raising=False)
    code = main(["build-graph", "--corpus", str(ws / "corpus.txt"), "--out", str(tmp_path / "g.jsonl")])
    assert code != 0
    assert "RAPO_LLM_BASE_URL" in capsys.readouterr().err


def _optimize(ws, *extra):
    return main(["optimize", "--graph", str(ws / "graph.jsonl"), "--fixtures", str(ws / "fixtures.jsonl"), *extra])


def test_optimize_single(ws, capsys):
    assert _optimize(ws, "--prompt", BATCH[0]) == 0
    (line,) = capsys.readouterr().out.splitlines()
    row = json.loads(line)
    assert row["input"] == BATCH[0]
    assert row["chosen_text"] == row[row["chosen"]]
    assert "timings" not in row


def test_optimize_no_select(ws, capsys):
    assert _optimize(ws, "--prompt", BATCH[1], "--no-select") == 0
    row = json.loads(capsys.readouterr().out)
    assert row["chosen"] is None and row["x_r"] and row["x_n"]


def test_optimize_batch_order_and_determinism(tmp_path, ws):
    outs = []
    for workers in ("1", "3"):
        out = tmp_path / f"out{workers}.jsonl"
        assert _optimize(ws, "--batch", str(ws / "batch.txt"), "--out", str(out), "--workers", workers) == 0
        outs.append(out)
    rows = [json.loads(l) for l in outs[0].read_text().splitlines()]
    assert [r["input"] for r in rows] == BATCH
    assert [r["id"] for r in rows] == ["1", "2", "3"]
    assert sha(outs[0]) == sha(outs[1])


def test_optimize_missing_fixture_exits_nonzero(ws, capsys):
    assert _optimize(ws, "--prompt", "a prompt nobody recorded") == 1
    row = json.loads(capsys.readouterr().out)
    assert row["chosen"] == "x_i" and row["warning"]


def test_optimize_timings_flag(ws, capsys):
    _optimize(ws, "--prompt", BATCH[0], "--timings")
    assert "timings" in json.loads(capsys.readouterr().out)


@pytest.mark.parametrize(
    "command",
    [[], ["build-graph"], ["optimize"], ["prepare-refactor-data"], ["prepare-discriminator-data"],
     ["analyze-lengths"], ["serve"]],
)
def test_help_exits_zero(command, capsys):
    with pytest.raises(SystemExit) as info:
        main([*command, "--help"])
    assert info.value.code == 0
    assert "usage:" in capsys.readouterr().out


def test_unknown_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["optimize", "--graph", "g", "--prompt", "x", "--bogus"])
    assert info.value.code != 0
    assert "usage:" in capsys.readouterr().err


def test_negative_k_rejected(capsys):
    with pytest.raises(SystemExit) as info:
        main(["optimize", "--graph", "g", "--prompt", "x", "--k-scenes", "-1"])
    assert info.value.code != 0


# datasets


def test_prepare_refactor_data(tmp_path, capsys):
    corpus = ["A dog runs on a beach.", "Two cars race at night.", "A chef cooks pasta."]
    (tmp_path / "c.txt").write_text("\n".join(corpus) + "\n")
    fixtures = tmp_path / "f.jsonl"
    build_refactor_dataset(corpus, tmp_path / "ref.jsonl", recording_gateway(fixtures))
    out = tmp_path / "dr.jsonl"
    code = main(["prepare-refactor-data", "--corpus", str(tmp_path / "c.txt"), "--out", str(out),
                 "--fixtures", str(fixtures), "--summary-out", str(tmp_path / "s.json")])
    assert code == 0
    assert [p.c_i for p in read_refactor_dataset(out)] == corpus
    assert json.loads((tmp_path / "s.json").read_text())["written"] == 3
    assert sha(out) == sha(tmp_path / "ref.jsonl")


def test_prepare_refactor_data_limit_zero(tmp_path, capsys):
    (tmp_path / "c.txt").write_text("a b\n")
    out = tmp_path / "dr.jsonl"
    assert main(["prepare-refactor-data", "--corpus", str(tmp_path / "c.txt"), "--out", str(out), "--limit", "0"]) == 0
    assert out.read_text() == ""
    assert json.loads(capsys.readouterr().out)["written"] == 0


def test_prepare_discriminator_data_with_half_labels(tmp_path, ws, capsys):
    graph = load_graph(ws / "graph.jsonl")
    fixtures = tmp_path / "f.jsonl"
    opt = Optimizer(graph, LocalHashEmbedder(), recording_gateway(fixtures))
    build_discriminator_dataset([(str(i + 1), p) for i, p in enumerate(BATCH)], opt, tmp_path / "ref.jsonl")
    (tmp_path / "labels.jsonl").write_text('{"id": "1", "y_d": "n"}\n{"id": "3", "y_d": "r"}\n')
    out = tmp_path / "dd.jsonl"
    code = main(["prepare-discriminator-data", "--graph", str(ws / "graph.jsonl"), "--fixtures", str(fixtures),
                 "--prompts", str(ws / "batch.txt"), "--labels", str(tmp_path / "labels.jsonl"), "--out", str(out)])
    summary = json.loads(capsys.readouterr().out)
    assert code == 0
    assert (summary["written"], summary["skipped_missing_label"]) == (2, 1)
    rows = read_rows(out)
    assert [r["output"] for r in rows] == ["n", "r"]
    assert all(r["instruction"] == SELECT_INSTRUCTION for r in rows)


# analyze-lengths


def test_analyze_lengths(tmp_path, capsys):
    (tmp_path / "train.txt").write_text("a b c\na b c d e\n")
    (tmp_path / "ours.txt").write_text("a b c d\n")
    code = main(["analyze-lengths", str(tmp_path / "train.txt"), str(tmp_path / "train.txt"), str(tmp_path / "ours.txt"),
                 "--labels", "train,copy,ours", "--csv", str(tmp_path / "csv"), "--stats-out", str(tmp_path / "st.json")])
    report = json.loads(capsys.readouterr().out)
    assert code == 0
    dist = {(d["a"], d["b"]): d["distance"] for d in report["distances"]}
    assert dist[("train", "copy")] == 0.0
    assert dist[("train", "ours")] == pytest.approx(1.0)
    assert sorted(p.name for p in (tmp_path / "csv").iterdir()) == ["copy.csv", "ours.csv", "train.csv"]
    assert json.loads((tmp_path / "st.json").read_text())["median"] == 4.0


def test_analyze_lengths_missing_file(tmp_path, capsys):
    assert main(["analyze-lengths", str(tmp_path / "nope.txt")]) != 0
