import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causallp.errors import DanglingEdge, MalformedInput
from causallp.fixtures import reference_path, load_reference
from causallp.ingest import (
    Composite,
    Unparseable,
    break_cycles,
    default_lexicon,
    drop_weak_edges,
    dumps_cegs,
    extract_event,
    normalize_lexicon,
    parse_ceg_file,
    preprocess,
    prune_shallow,
)
from causallp.model import Arity, Ceg, CegEdge, CegNode, ObjectRef, ParsedEvent, graph_depths, topological_order

from conftest import REFERENCE_EDGES


def ceg(edges, nodes=None, desc="the red cube moves", vid="v"):
    ids = nodes or sorted({x for e in edges for x in e[:2]})
    return Ceg(vid, tuple(CegNode(i, desc) for i in ids), tuple(CegEdge(*e) for e in edges))


# -- parsing ---------------------------------------------------------------------


def test_minimal_record(tmp_path):
    rec = {"video_id": "v1", "nodes": [{"id": "A", "description": "x"}, {"id": "B", "description": "y"}],
           "edges": [{"src": "A", "dst": "B", "score": 3}]}
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    (c,) = parse_ceg_file(path)
    assert len(c.nodes) == 2 and c.edges == (CegEdge("A", "B", 3),)


def test_dangling_edge(tmp_path):
    rec = {"video_id": "v1", "nodes": [{"id": "A", "description": "x"}],
           "edges": [{"src": "A", "dst": "Z", "score": 3}]}
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(DanglingEdge):
        parse_ceg_file(path)


def test_truncated_record_reports_line(tmp_path):
    good = json.dumps({"video_id": "v1", "nodes": [], "edges": []})
    path = tmp_path / "c.jsonl"
    path.write_text(good + "\n" + good[:-5] + "\n")
    with pytest.raises(MalformedInput) as info:
        parse_ceg_file(path)
    assert info.value.line == 2


def test_missing_field_and_bad_score(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps({"video_id": "v", "nodes": []}) + "\n")
    with pytest.raises(MalformedInput):
        parse_ceg_file(path)
    rec = {"video_id": "v", "nodes": [{"id": "A", "description": "x"}, {"id": "B", "description": "y"}],
           "edges": [{"src": "A", "dst": "B", "score": 7}]}
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(MalformedInput):
        parse_ceg_file(path)


def test_json_list_and_adapter(tmp_path):
    recs = [{"vid": "v1", "n": [], "e": []}, {"vid": "v2", "n": [], "e": []}]
    path = tmp_path / "c.json"
    path.write_text(json.dumps(recs))
    adapter = lambda r: {"video_id": r["vid"], "nodes": r["n"], "edges": r["e"]}
    assert [c.video_id for c in parse_ceg_file(path, adapter)] == ["v1", "v2"]


def test_bundled_fixture_shape():
    (c,) = load_reference()
    assert sorted(n.id for n in c.nodes) == list("ABCDEFGH")
    assert sorted(c.pairs()) == sorted(REFERENCE_EDGES)


def test_serialization_round_trip(tmp_path, ref_cegs):
    path = tmp_path / "out.jsonl"
    path.write_text(dumps_cegs(ref_cegs))
    assert parse_ceg_file(path) == ref_cegs


# -- score filter, cycles, depth ----------------------------------------------------


def test_drop_weak_edges():
    out = drop_weak_edges(ceg([("A", "B", 1), ("B", "C", 4)]))
    assert out.edges == (CegEdge("B", "C", 4),)
    assert len(out.nodes) == 3
    assert drop_weak_edges(ceg([("A", "B", 1)])).edges == ()


def test_reference_strong_edge_kept():
    (c,) = load_reference()
    assert CegEdge("E", "A", 5) in drop_weak_edges(c).edges


def test_break_self_loop():
    out, removed = break_cycles(ceg([("A", "A", 3)]))
    assert removed == [CegEdge("A", "A", 3)] and out.edges == ()


def test_break_three_cycle_removes_back_edge():
    out, removed = break_cycles(ceg([("A", "B", 3), ("B", "C", 3), ("C", "A", 3)]))
    assert removed == [CegEdge("C", "A", 3)]


def test_break_cycles_leaves_acyclic_reference_untouched():
    (c,) = load_reference()
    out, removed = break_cycles(c)
    assert removed == [] and out == c


def _min_feedback_arc_set(nodes, pairs):
    for k in range(len(pairs) + 1):
        for drop in itertools.combinations(range(len(pairs)), k):
            rest = [p for i, p in enumerate(pairs) if i not in drop]
            if topological_order(nodes, rest) is not None:
                return k
    return len(pairs)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 6), st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=9))
def test_break_cycles_properties(n, raw):
    pairs = sorted({(f"v{a}", f"v{b}") for a, b in raw if a < n and b < n})
    nodes = [f"v{i}" for i in range(n)]
    c = Ceg("v", tuple(CegNode(i, "x") for i in nodes), tuple(CegEdge(a, b, 3) for a, b in pairs))
    out, removed = break_cycles(c)
    assert topological_order(nodes, out.pairs()) is not None
    assert set(out.edges) | set(removed) == set(c.edges)
    assert not set(out.edges) & set(removed)
    assert break_cycles(c)[1] == removed
    assert len(removed) >= _min_feedback_arc_set(nodes, pairs)


def test_prune_shallow_rules():
    kept, delta = prune_shallow([ceg([], nodes=["A"]), ceg([("A", "B", 3)]), ceg([("A", "B", 3), ("B", "C", 3)])])
    assert len(kept) == 1 and kept[0].pairs() == [("A", "B"), ("B", "C")]
    assert delta.cegs_dropped_empty == 1 and delta.cegs_dropped_shallow == 1


# -- extraction --------------------------------------------------------------------


def test_composite_sentence():
    out = extract_event("The red ball collides with the blue sphere and hits the yellow cylinder")
    assert isinstance(out, Composite)


def test_singular_event():
    out = extract_event("the red cube enters from the left")
    assert out == ParsedEvent("enter", Arity.SINGULAR, (ObjectRef("red", "cube", None),))


def test_binary_event_with_alias():
    out = extract_event("the yellow ball hits the blue cylinder")
    assert out == ParsedEvent("hit", Arity.BINARY, (ObjectRef("yellow", "sphere", None), ObjectRef("blue", "cylinder", None)))


def test_inflections_and_case():
    assert extract_event("The Gray Sphere COLLIDED with the cube").event_type == "collide"
    assert extract_event("the cube hits the sphere").event_type == "hit"


def test_unparseable_cases():
    assert isinstance(extract_event("nothing happens here"), Unparseable)
    assert isinstance(extract_event("the red cube collides"), Unparseable)


def test_normalize_lexicon():
    lex = default_lexicon()
    assert normalize_lexicon(color="gold", lexicon=lex).color == "yellow"
    assert normalize_lexicon(shape="ball", lexicon=lex).shape == "sphere"
    assert normalize_lexicon(color="red", lexicon=lex).color == "red"
    assert normalize_lexicon(color="grey", shape="block", lexicon=lex) == ObjectRef("gray", "cube", None)


def test_unknown_tokens_are_counted():
    from causallp.ingest import Lexicon

    lex = Lexicon.load()
    obj = normalize_lexicon(color="mauve", shape="cube", lexicon=lex)
    assert obj.color is None and lex.unknown[("color", "mauve")] == 1


def test_vocabulary_has_27_events():
    assert len(default_lexicon().events) == 27


@given(st.lists(st.sampled_from(sorted(default_lexicon().forms) + ["the", "red", "cube", "blue", "ball", "with"]),
                max_size=10))
def test_arity_consistent_with_verb(words):
    lex = default_lexicon()
    out = extract_event(" ".join(words), lex)
    if isinstance(out, ParsedEvent):
        assert out.arity is lex.events[out.event_type]
        assert len(out.participants) == out.arity.n_participants


# -- pipeline ----------------------------------------------------------------------


def test_nothing_to_do_keeps_input(ref_cegs):
    (raw,) = load_reference()
    kept, report = preprocess([raw])
    assert [c.pairs() for c in kept] == [raw.pairs()]
    assert all(v == 0 for k, v in report.items() if k not in ("cegs_in", "cegs_out"))
    assert report.cegs_in == report.cegs_out == 1


def test_single_weak_edge_drops_ceg():
    kept, report = preprocess([ceg([("A", "B", 1)])])
    assert kept == []
    assert report.cegs_out == 0 and report.edges_dropped_score1 == 1 and report.cegs_dropped_empty == 1


def test_composite_node_removed_before_cycle_breaking():
    nodes = ("A", "B", "C", "D")
    descs = {"A": "the red cube moves", "B": "the red cube collides with the blue sphere and hits the cube",
             "C": "the blue sphere rolls", "D": "the blue sphere stops"}
    c = Ceg("v", tuple(CegNode(n, descs[n]) for n in nodes),
            tuple(CegEdge(*e) for e in [("A", "B", 3), ("B", "A", 3), ("A", "C", 4), ("C", "D", 4)]))
    kept, report = preprocess([c])
    assert report.nodes_dropped_composite == 1 and report.edges_dropped_node == 2
    assert report.edges_dropped_cycle == 0 and len(kept) == 1


def _random_ceg(rng, vid):
    lex_words = ["the red cube moves", "the blue sphere rolls", "the cube hits the sphere",
                 "the gray cylinder collides with the red cube", "nothing", "the cube hits the sphere and stops"]
    n = int(rng.integers(2, 7))
    ids = [f"n{i}" for i in range(n)]
    edges = {(a, b): int(rng.integers(1, 6)) for a in ids for b in ids if rng.random() < 0.3}
    nodes = tuple(CegNode(i, lex_words[int(rng.integers(len(lex_words)))]) for i in ids)
    return Ceg(vid, nodes, tuple(CegEdge(a, b, s) for (a, b), s in edges.items()))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pipeline_invariants_and_idempotence(seed):
    rng = np.random.default_rng(seed)
    cegs = [_random_ceg(rng, f"v{i}") for i in range(5)]
    out, report = preprocess(cegs)
    assert report.cegs_out == report.cegs_in - report.cegs_dropped_empty - report.cegs_dropped_shallow
    for c in out:
        assert all(e.score >= 2 for e in c.edges)
        assert all(n.event is not None for n in c.nodes)
        depths = graph_depths([n.id for n in c.nodes], c.pairs())
        assert max(depths.values()) >= 2
    again, _ = preprocess(out)
    assert again == out


def test_report_tsv():
    _, report = preprocess(load_reference())
    lines = report.to_tsv().splitlines()
    assert lines[0] == "cegs_in\t1" and lines[-1] == "cegs_out\t1"
