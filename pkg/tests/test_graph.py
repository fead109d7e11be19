"""Reasoning-graph construction: mentions, heuristics, nodes, edge rules."""

from collections import Counter

import pytest

from graphreader.graph import (EDGE_KINDS, build_edges, build_graph,
                               build_nodes, extract_reasoning_entities,
                               find_mentions, graph_from_dict, graph_to_dict,
                               relabel)
from graphreader.text import Sample, gen_synthetic, tokenize

from oracles import oracle_edge_multiset


def toks(docs):
    return [tokenize(d, doc_index=i) for i, d in enumerate(docs)]


def make_sample(docs, candidates, subject, answer=None, sid="fx"):
    return Sample(id=sid, relation="rel", subject=subject,
                  candidates=[c.lower() for c in candidates],
                  documents=list(docs), answer=answer)


class TestFindMentions:
    def test_basic_span(self):
        docs = toks(["the hampton wick war memorial stands"])
        assert find_mentions(docs, "hampton wick") == [(0, 1, 2)]

    def test_absent_target(self):
        docs = toks(["nothing here"])
        assert find_mentions(docs, "hampton wick") == []

    def test_case_insensitive(self):
        docs = toks(["the hampton wick war memorial stands"])
        assert find_mentions(docs, "Hampton WICK") == [(0, 1, 2)]

    def test_multiple_and_cross_document(self):
        docs = toks(["london is in london", "near London"])
        assert find_mentions(docs, "london") == [(0, 0, 0), (0, 3, 3), (1, 1, 1)]


class TestReasoningExtraction:
    def test_heuristic_fixture(self):
        doc = "The memorial is in Hampton Wick near London"
        tokens = tokenize(doc)
        spans = extract_reasoning_entities(tokens, doc, claimed_spans=[])
        surfaces = [" ".join(t.surface for t in tokens[s:e + 1]) for s, e in spans]
        assert surfaces == ["hampton wick", "london"]

    def test_claimed_spans_excluded(self):
        doc = "The memorial is in Hampton Wick near London"
        tokens = tokenize(doc)
        spans = extract_reasoning_entities(tokens, doc, claimed_spans=[(4, 5)])
        surfaces = [" ".join(t.surface for t in tokens[s:e + 1]) for s, e in spans]
        assert surfaces == ["london"]

    def test_all_lowercase_document(self):
        doc = "everything here is lowercase text"
        assert extract_reasoning_entities(tokenize(doc), doc, []) == []

    def test_digit_identifiers(self):
        doc = "db00007 interacts with db06825 strongly"
        spans = extract_reasoning_entities(tokenize(doc), doc, [])
        assert spans == [(0, 0), (3, 3)]

    def test_sidecar_overrides_heuristic(self):
        docs = ["Alpha Beta lives near Gamma", "Delta goes home"]
        sample = make_sample(docs, ["alpha beta", "delta"], subject="gamma")
        docs_tokens = toks(docs)
        nodes_plain = build_nodes(sample, docs_tokens)
        sidecar = {0: [(3, 3)]}  # only "near" -- nonsense, but it must win
        nodes_side = build_nodes(sample, docs_tokens, sidecar=sidecar)
        rea_plain = [(n.doc_index, n.token_span) for n in nodes_plain
                     if n.kind == "reasoning"]
        rea_side = [(n.doc_index, n.token_span) for n in nodes_side
                    if n.kind == "reasoning"]
        assert rea_side != rea_plain
        assert (0, (3, 3)) in rea_side


class TestBuildNodes:
    def test_one_support_node_per_document(self):
        docs = ["a b", "c d", "e f", "g h"]
        sample = make_sample(docs, ["a", "c"], subject="zzz")
        nodes = build_nodes(sample, toks(docs))
        assert sum(1 for n in nodes if n.kind == "support") == 4

    def test_unmentioned_candidate_still_gets_node(self):
        docs = ["alpha is here"]
        sample = make_sample(docs, ["alpha", "nowhere"], subject="alpha")
        nodes = build_nodes(sample, toks(docs))
        cands = [n for n in nodes if n.kind == "candidate"]
        assert [c.surface for c in cands] == ["alpha", "nowhere"]
        mentions = [n for n in nodes if n.kind == "mention"]
        assert {m.candidate_index for m in mentions} == {0}

    def test_overlapping_subject_and_mention_both_exist(self):
        docs = ["paris is lovely"]
        sample = make_sample(docs, ["paris"], subject="paris")
        sample.candidates.append("rome")
        nodes = build_nodes(sample, toks(docs))
        kinds_at_0 = {n.kind for n in nodes if n.token_span == (0, 0)}
        assert kinds_at_0 == {"subject", "mention"}

    def test_node_cap_drops_reasoning_first(self):
        docs = ["Alpha Beta Gamma Delta Epsilon near paris"]
        sample = make_sample(docs, ["paris", "rome"], subject="paris")
        uncapped = build_nodes(sample, toks(docs))
        n_uncapped = len(uncapped)
        capped = build_nodes(sample, toks(docs), node_cap=n_uncapped - 1)
        assert len(capped) == n_uncapped - 1
        lost = (Counter(n.kind for n in uncapped) - Counter(n.kind for n in capped))
        assert set(lost) == {"reasoning"}

    def test_span_nodes_precede_others(self):
        samples = gen_synthetic(seed=5, count=3, hop_length=2, n_candidates=3,
                                vocab_size=30)
        for s in samples:
            nodes = build_nodes(s, toks(s.documents))
            span_flags = [n.token_span is not None for n in nodes]
            assert span_flags == sorted(span_flags, reverse=True)


class TestBuildEdges:
    def test_two_candidates_one_can2can(self):
        docs = ["alpha is here", "beta is there"]
        sample = make_sample(docs, ["alpha", "beta"], subject="zzz")
        nodes = build_nodes(sample, toks(docs))
        edges = build_edges(nodes)
        assert sum(1 for e in edges if e.kind == "can2can") == 1

    def test_every_pair_covered(self):
        samples = gen_synthetic(seed=9, count=3, hop_length=2, n_candidates=4,
                                vocab_size=40)
        for s in samples:
            graph = build_graph(s, toks(s.documents))
            m = len(graph.nodes)
            assert len(graph.edges) == m * (m - 1) // 2
            assert len({(e.a, e.b) for e in graph.edges}) == len(graph.edges)

    def test_complete_iff_no_rule_fired(self):
        samples = gen_synthetic(seed=9, count=2, hop_length=2, n_candidates=3,
                                vocab_size=30)
        for s in samples:
            graph = build_graph(s, toks(s.documents))
            oracle = oracle_edge_multiset(graph.nodes)
            for e in graph.edges:
                assert oracle[(e.a, e.b, e.kind)] == 1

    def test_edgesin_edgesout_disjoint(self):
        docs = ["paris and paris again", "paris elsewhere"]
        sample = make_sample(docs, ["paris", "rome"], subject="zzz")
        nodes = build_nodes(sample, toks(docs))
        edges = build_edges(nodes)
        seen = {}
        for e in edges:
            assert (e.a, e.b) not in seen, "pair carries two relations"
            seen[(e.a, e.b)] = e.kind

    def test_complete_cap_downsamples_deterministically(self):
        docs = ["alpha one", "beta two", "gamma three", "delta four"]
        sample = make_sample(docs, ["alpha", "beta"], subject="zzz")
        nodes = build_nodes(sample, toks(docs))
        full = [e for e in build_edges(nodes) if e.kind == "complete"]
        capped1 = [e for e in build_edges(nodes, complete_cap=5) if e.kind == "complete"]
        capped2 = [e for e in build_edges(nodes, complete_cap=5) if e.kind == "complete"]
        assert len(full) > 5
        assert len(capped1) == 5
        assert capped1 == capped2
        assert set((e.a, e.b) for e in capped1) < set((e.a, e.b) for e in full)


class TestOracleEquivalence:
    def test_handcrafted_fixtures(self):
        fixtures = [
            # 2 docs, 2 candidates, one mentioned in each doc, subject in
            # doc 0, one same-surface reasoning entity per doc
            make_sample(["Zorp saw Blue near paris", "Blue likes rome"],
                        ["paris", "rome"], subject="zorp"),
            # candidate with no mention at all
            make_sample(["only alpha here"], ["alpha", "ghost"], subject="alpha"),
            # same candidate twice in one doc and once in another
            make_sample(["paris then paris", "paris again"], ["paris", "rome"],
                        subject="zzz"),
            # subject present in two docs, no candidates mentioned
            make_sample(["king rules", "king sleeps"], ["a", "b"], subject="king"),
            # digit identifiers as reasoning entities
            make_sample(["db00007 interacts with db06825", "db06825 alone"],
                        ["db00007", "db12345"], subject="db06825"),
            # three candidates sharing documents (edgesin and edgesout both)
            make_sample(["red blue green", "red blue"], ["red", "blue", "green"],
                        subject="green"),
        ]
        for i, sample in enumerate(fixtures):
            nodes = build_nodes(sample, toks(sample.documents))
            got = Counter((e.a, e.b, e.kind) for e in build_edges(nodes))
            assert got == oracle_edge_multiset(nodes), f"fixture {i}"

    def test_random_synthetic_samples(self):
        samples = gen_synthetic(seed=123, count=20, hop_length=2, n_candidates=4,
                                vocab_size=48)
        for s in samples:
            nodes = build_nodes(s, toks(s.documents))
            got = Counter((e.a, e.b, e.kind) for e in build_edges(nodes))
            assert got == oracle_edge_multiset(nodes), s.id

    def test_fixture_edge_counts(self):
        """The 2-doc/2-candidate fixture, counts pinned by the oracle."""
        sample = make_sample(["Zorp saw Blue near paris", "Blue likes rome"],
                             ["paris", "rome"], subject="zorp")
        nodes = build_nodes(sample, toks(sample.documents))
        counts = Counter(e.kind for e in build_edges(nodes))
        oracle_counts = Counter(k for (_, _, k) in oracle_edge_multiset(nodes))
        assert counts == oracle_counts
        assert counts["sup2can"] == 2   # one per containing doc
        assert counts["can2can"] == 1
        assert counts["sup2men"] == 2
        assert counts["can2men"] == 2
        assert counts["sub2rea"] == 1
        assert counts["rea2rea"] == 1
        assert counts["rea2men"] == 2


class TestSerialization:
    def test_round_trip(self):
        (s,) = gen_synthetic(seed=4, count=1, hop_length=2, n_candidates=3,
                             vocab_size=30)
        graph = build_graph(s, toks(s.documents))
        back = graph_from_dict(graph_to_dict(graph))
        assert back.sample_id == graph.sample_id
        assert back.nodes == graph.nodes
        assert back.edges == graph.edges

    def test_relabel_preserves_structure(self):
        import numpy as np

        (s,) = gen_synthetic(seed=4, count=1, hop_length=2, n_candidates=3,
                             vocab_size=30)
        graph = build_graph(s, toks(s.documents))
        perm = list(np.random.default_rng(0).permutation(len(graph.nodes)))
        permuted = relabel(graph, perm)
        assert Counter(e.kind for e in permuted.edges) == \
            Counter(e.kind for e in graph.edges)
        assert Counter(n.kind for n in permuted.nodes) == \
            Counter(n.kind for n in graph.nodes)
