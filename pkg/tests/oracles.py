"""Independent brute-force oracles used by the test suite.

The edge oracle re-derives the relation of every unordered node pair
directly from node fields, one rule predicate at a time, with no shared
code or indexing tricks from the builder under test.
"""

from collections import Counter


def _doc_contains_candidate(nodes, doc_index, candidate_index) -> bool:
    return any(
        n.kind == "mention" and n.doc_index == doc_index
        and n.candidate_index == candidate_index
        for n in nodes
    )


def oracle_pair_relation(nodes, x, y):
    """Relation of the unordered pair {x, y} under rules 1-9, else 'complete'."""
    kinds = tuple(sorted((x.kind, y.kind)))
    if kinds == ("candidate", "support"):
        can, sup = (x, y) if x.kind == "candidate" else (y, x)
        if _doc_contains_candidate(nodes, sup.doc_index, can.candidate_index):
            return "sup2can"
    if kinds == ("candidate", "candidate"):
        return "can2can"
    if kinds == ("mention", "support"):
        men, sup = (x, y) if x.kind == "mention" else (y, x)
        if men.doc_index == sup.doc_index:
            return "sup2men"
    if kinds == ("candidate", "mention"):
        can, men = (x, y) if x.kind == "candidate" else (y, x)
        if men.candidate_index == can.candidate_index:
            return "can2men"
    if kinds == ("reasoning", "subject"):
        if x.doc_index == y.doc_index:
            return "sub2rea"
    if kinds == ("reasoning", "reasoning"):
        if x.doc_index == y.doc_index or x.surface.lower() == y.surface.lower():
            return "rea2rea"
    if kinds == ("mention", "reasoning"):
        if x.doc_index == y.doc_index:
            return "rea2men"
    if kinds == ("mention", "mention"):
        if x.doc_index == y.doc_index:
            return "edgesin"
        if x.candidate_index == y.candidate_index:
            return "edgesout"
    return "complete"


def oracle_edge_multiset(nodes) -> Counter:
    """Every unordered pair tested against every rule independently."""
    out = Counter()
    for i, x in enumerate(nodes):
        for y in nodes[i + 1:]:
            out[(min(x.node_id, y.node_id), max(x.node_id, y.node_id),
                 oracle_pair_relation(nodes, x, y))] += 1
    return out
