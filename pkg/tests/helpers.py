"""Scripted stand-in LLM and fixture-authoring helpers for the test suite."""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Mapping

from rapo.llm.backends import CallableBackend, fixture_key
from rapo.llm.templates import invert_refactor

EXTRACTIONS = {
    "a child running in the park on a sunny day": "SCENE: park\nSUBJECTS: a child\nACTIONS: running\nATMOSPHERE: sunny day",
    "a dog chasing a ball in the park at dusk": "SCENE: Park\nSUBJECTS: a dog, a ball\nACTIONS: chasing a ball\nATMOSPHERE: dusk light",
    "a woman in a black suit walking through a cemetery in the rain": (
        "SCENE: cemetery\nSUBJECTS: a woman in a black suit\nACTIONS: walking slowly\nATMOSPHERE: rain, somber mood"
    ),
    "waves crashing on a rocky beach under a grey sky": (
        "SCENE: rocky beach\nSUBJECTS: waves\nACTIONS: crashing on rocks\nATMOSPHERE: grey sky"
    ),
    "a chef chopping vegetables in a busy kitchen": (
        "SCENE: kitchen\nSUBJECTS: a chef, fresh vegetables\nACTIONS: chopping vegetables\nATMOSPHERE: busy, warm light"
    ),
}

_MERGE = re.compile(r"Input description body and modifier are: (.*), (.*)\.\nThe merged prompt is:$", re.S)
_REWRITE = re.compile(r"for a text-to-video model: (.*?)\. Refine format", re.S)
_SELECT = re.compile(r"x_r: (.*)\nx_n: (.*)$")
_DEGRADE = re.compile(r"Caption: (.*)\nRewritten:$", re.S)
_ROUTE = re.compile(r"Prompt: (.*)\nDimension:$", re.S)
_SIM = re.compile(r"dimension '([a-z_]+)'.*Request #(\d+):$", re.S)
_EXTRACT = re.compile(r"Prompt: (.*)$", re.S)


def scripted_response(request) -> str:
    """Deterministic, template-aware fake LLM."""
    p = request.rendered_prompt
    tid = request.template_id
    if tid == "extract":
        prompt = _EXTRACT.search(p).group(1)
        if prompt in EXTRACTIONS:
            return EXTRACTIONS[prompt]
        words = prompt.split()
        return f"SCENE: {words[-1]}\nSUBJECTS: {' '.join(words[:2])}\nACTIONS: none\nATMOSPHERE: none"
    if tid == "merge":
        body, modifier = _MERGE.search(p).groups()
        if (body, modifier) == ("a woman representing a funeral", "a black suit"):
            return "a woman dressed in a black suit representing a funeral"
        return f"{body} with {modifier}"
    if tid == "refactor":
        w = invert_refactor(p)
        return f"{w}, captured in a smooth cinematic shot"
    if tid == "rewrite":
        x_i = _REWRITE.search(p).group(1)
        return f"A vivid high quality video of {x_i}"
    if tid == "select":
        x_r, x_n = _SELECT.search(p).groups()
        return "R" if len(x_r) % 2 == 0 else "x_n"
    if tid == "pair_degrade":
        c = _DEGRADE.search(p).group(1)
        return " ".join(reversed(c.split())) + " please"
    if tid == "dimension_route":
        prompt = _ROUTE.search(p).group(1)
        return "multiple_objects" if " and " in prompt else "human_action"
    if tid == "simulate_user":
        dim, idx = _SIM.search(p).groups()
        return f"user prompt {idx} about {dim.replace('_', ' ')}"
    raise AssertionError(f"unscripted template {tid}")


def scripted_backend() -> CallableBackend:
    return CallableBackend(scripted_response, id="scripted")


def write_fixtures(path: Path, entries: Mapping[str, str]) -> Path:
    """Write a fixture file mapping rendered prompts to responses."""
    with path.open("w", encoding="utf-8") as fh:
        for prompt, response in entries.items():
            fh.write(json.dumps({"key": fixture_key(prompt), "response": response}) + "\n")
    return path


def sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def recording_gateway(path: Path):
    """Gateway over the scripted LLM that also writes every exchange to a fixture file."""
    from rapo.llm import Gateway, RecordingBackend

    return Gateway(RecordingBackend(scripted_backend(), path))


def author_fixtures(path: Path, corpus, prompts, **optimizer_kwargs):
    """Record the fixtures needed to build a graph from ``corpus`` and optimize ``prompts``."""
    from rapo.embedding import LocalHashEmbedder
    from rapo.graph import build_graph
    from rapo.llm import llm_extractor
    from rapo.pipeline import Optimizer

    gw = recording_gateway(path)
    emb = LocalHashEmbedder()
    graph = build_graph(corpus, llm_extractor(gw), emb)
    Optimizer(graph, emb, gw, **optimizer_kwargs).optimize_batch([(None, p) for p in prompts])
    return graph
