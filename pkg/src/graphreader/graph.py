"""Reasoning-graph construction over document token spans.

Node kinds: subject (query-subject matches), reasoning (bridge entities),
mention (candidate matches), support (one per document), candidate (one
per candidate string). Token spans are inclusive (start, end) pairs.

Edge kinds and the rule that produces each:

1. sup2can   document contains the candidate's text
2. can2can   every candidate pair
3. sup2men   document hosts the mention's span
4. can2men   mention is an occurrence of the candidate
5. sub2rea   subject and reasoning span share a document
6. rea2rea   reasoning spans share a document or a case-folded surface
7. rea2men   reasoning and mention spans share a document
8. edgesin   two mentions share a document
9. edgesout  two mentions of one candidate sit in different documents
10. complete any remaining pair

Graph JSON schema (consumed by the viz tools and tests)::

    {"sample_id": str,
     "nodes": [{"id", "kind", "doc_index", "token_span", "candidate_index",
                "surface"}, ...],
     "edges": [{"a", "b", "kind"}, ...]}

Sidecar annotation files are JSON objects mapping document index (as a
string) to a list of [start, end] inclusive token spans; a listed document
uses those spans for its reasoning entities instead of the heuristic.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

from .errors import DataError
from .text import Sample, Token, tokenize

NODE_KINDS = ("subject", "reasoning", "mention", "support", "candidate")
EDGE_KINDS = (
    "sup2can", "can2can", "sup2men", "can2men", "sub2rea",
    "rea2rea", "rea2men", "edgesin", "edgesout", "complete",
)

# Function words never count as part of a capitalized entity run, so
# sentence-leading "The" does not leak into the extraction.
STOPWORDS = frozenset(
    "a an and are as at be but by for from in is it of on or the to was with".split()
)


@dataclass(frozen=True)
class GraphNode:
    node_id: int
    kind: str
    doc_index: int | None     # None for candidate nodes
    token_span: tuple[int, int] | None  # inclusive; None for support/candidate
    candidate_index: int | None  # mention and candidate nodes only
    surface: str


@dataclass(frozen=True)
class GraphEdge:
    a: int
    b: int  # a < b always
    kind: str


@dataclass
class ReasoningGraph:
    sample_id: str
    nodes: list[GraphNode]
    edges: list[GraphEdge]

    def by_relation(self) -> dict[str, list[GraphEdge]]:
        out: dict[str, list[GraphEdge]] = {k: [] for k in EDGE_KINDS}
        for e in self.edges:
            out[e.kind].append(e)
        return out

    def nodes_of_kind(self, kind: str) -> list[GraphNode]:
        return [n for n in self.nodes if n.kind == kind]


# ---------------------------------------------------------------------------
# span extraction
# ---------------------------------------------------------------------------


def find_mentions(docs_tokens: list[list[Token]], target: str):
    """All exact token-subsequence matches of `target`, case-insensitive.

    Returns (doc_index, start, end) triples with inclusive token spans.
    """
    target_surfaces = [t.surface for t in tokenize(target)]
    if not target_surfaces:
        return []
    n = len(target_surfaces)
    hits = []
    for di, tokens in enumerate(docs_tokens):
        surfaces = [t.surface for t in tokens]
        for i in range(len(surfaces) - n + 1):
            if surfaces[i : i + n] == target_surfaces:
                hits.append((di, i, i + n - 1))
    return hits


def _spans_overlap(a, b) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def extract_reasoning_entities(doc_tokens: list[Token], doc_text: str,
                               claimed_spans) -> list[tuple[int, int]]:
    """Heuristic bridge-entity spans for one document.

    Maximal runs of capitalized tokens (judged on the original-case text,
    stopwords break runs) plus digit-carrying identifier tokens, minus
    anything overlapping a claimed subject/mention span.
    """
    claimed = list(claimed_spans)
    spans: list[tuple[int, int]] = []
    run_start = None
    for i, tok in enumerate(doc_tokens):
        first = doc_text[tok.char_span[0]]
        capitalized = first.isupper() and tok.surface not in STOPWORDS
        if capitalized:
            if run_start is None:
                run_start = i
        else:
            if run_start is not None:
                spans.append((run_start, i - 1))
                run_start = None
    if run_start is not None:
        spans.append((run_start, len(doc_tokens) - 1))
    covered = set()
    for s, e in spans:
        covered.update(range(s, e + 1))
    for i, tok in enumerate(doc_tokens):
        if i not in covered and any(c.isdigit() for c in tok.surface):
            spans.append((i, i))
    spans.sort()
    return [sp for sp in spans if not any(_spans_overlap(sp, c) for c in claimed)]


def load_sidecar(path) -> dict[int, list[tuple[int, int]]]:
    """Read a sidecar reasoning-span annotation file."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    out = {}
    for key, spans in raw.items():
        try:
            out[int(key)] = [(int(s), int(e)) for s, e in spans]
        except (TypeError, ValueError) as exc:
            raise DataError(f"sidecar: bad span list for document {key!r}") from exc
    return out


# ---------------------------------------------------------------------------
# node construction
# ---------------------------------------------------------------------------


def _span_surface(tokens, span) -> str:
    return " ".join(t.surface for t in tokens[span[0] : span[1] + 1])


def build_nodes(sample: Sample, docs_tokens: list[list[Token]],
                node_cap: int = 500, sidecar=None) -> list[GraphNode]:
    """Assemble the node list: subject, reasoning, mention, support, candidate.

    Candidate nodes exist even for never-mentioned candidates. If the cap
    is exceeded, reasoning nodes drop first (then mentions, then subjects),
    later (doc, position) first, so construction stays deterministic.
    """
    subject_spans = find_mentions(docs_tokens, sample.subject)
    mention_spans = []  # (doc, start, end, candidate_index)
    for ci, cand in enumerate(sample.candidates):
        for di, s, e in find_mentions(docs_tokens, cand):
            mention_spans.append((di, s, e, ci))
    mention_spans.sort()

    claimed_by_doc: dict[int, list[tuple[int, int]]] = {}
    for di, s, e in subject_spans:
        claimed_by_doc.setdefault(di, []).append((s, e))
    for di, s, e, _ in mention_spans:
        claimed_by_doc.setdefault(di, []).append((s, e))

    sidecar = sidecar or {}
    reasoning_spans = []  # (doc, start, end)
    for di, tokens in enumerate(docs_tokens):
        claimed = claimed_by_doc.get(di, [])
        if di in sidecar:
            spans = [
                sp for sp in sidecar[di]
                if 0 <= sp[0] <= sp[1] < len(tokens)
                and not any(_spans_overlap(sp, c) for c in claimed)
            ]
        elif claimed:
            spans = extract_reasoning_entities(tokens, sample.documents[di], claimed)
        else:
            spans = []
        reasoning_spans.extend((di, s, e) for s, e in sorted(set(spans)))

    over = (
        len(subject_spans) + len(reasoning_spans) + len(mention_spans)
        + len(docs_tokens) + len(sample.candidates) - node_cap
    )
    if over > 0:
        for pool in (reasoning_spans, mention_spans, subject_spans):
            drop = min(over, len(pool))
            if drop:
                del pool[len(pool) - drop:]
                over -= drop
            if over <= 0:
                break

    nodes: list[GraphNode] = []

    def _add(kind, doc_index, token_span, candidate_index, surface):
        nodes.append(
            GraphNode(len(nodes), kind, doc_index, token_span, candidate_index, surface)
        )

    for di, s, e in sorted(subject_spans):
        _add("subject", di, (s, e), None, _span_surface(docs_tokens[di], (s, e)))
    for di, s, e in reasoning_spans:
        _add("reasoning", di, (s, e), None, _span_surface(docs_tokens[di], (s, e)))
    for di, s, e, ci in mention_spans:
        _add("mention", di, (s, e), ci, sample.candidates[ci])
    for di in range(len(docs_tokens)):
        _add("support", di, None, None, f"doc:{di}")
    for ci, cand in enumerate(sample.candidates):
        _add("candidate", None, None, ci, cand)
    return nodes


# ---------------------------------------------------------------------------
# edge construction
# ---------------------------------------------------------------------------


def _pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def _pair_rank(a: int, b: int) -> int:
    digest = hashlib.blake2b(f"{a}:{b}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def build_edges(nodes: list[GraphNode], complete_cap: int = 20000) -> list[GraphEdge]:
    """Apply edge rules 1-9, then connect every leftover pair as `complete`.

    The complete set is down-sampled by pair hash if it would exceed
    `complete_cap` (a memory guard; the full-coverage invariant holds
    whenever the cap is not binding).
    """
    subjects = [n for n in nodes if n.kind == "subject"]
    reasonings = [n for n in nodes if n.kind == "reasoning"]
    mentions = [n for n in nodes if n.kind == "mention"]
    supports = [n for n in nodes if n.kind == "support"]
    candidates = [n for n in nodes if n.kind == "candidate"]
    support_by_doc = {n.doc_index: n for n in supports}
    cand_docs = {(m.doc_index, m.candidate_index) for m in mentions}

    connected: dict[tuple[int, int], str] = {}

    def _connect(x: GraphNode, y: GraphNode, kind: str):
        if x.node_id == y.node_id:
            return
        connected.setdefault(_pair(x.node_id, y.node_id), kind)

    # 1. document contains the candidate's text
    for sup in supports:
        for can in candidates:
            if (sup.doc_index, can.candidate_index) in cand_docs:
                _connect(sup, can, "sup2can")
    # 2. candidates fully connected
    for i, ca in enumerate(candidates):
        for cb in candidates[i + 1:]:
            _connect(ca, cb, "can2can")
    # 3. document hosts the mention
    for m in mentions:
        sup = support_by_doc.get(m.doc_index)
        if sup is not None:
            _connect(sup, m, "sup2men")
    # 4. mention is an occurrence of the candidate
    cand_by_index = {c.candidate_index: c for c in candidates}
    for m in mentions:
        _connect(cand_by_index[m.candidate_index], m, "can2men")
    # 5. subject and reasoning share a document
    for s in subjects:
        for r in reasonings:
            if s.doc_index == r.doc_index:
                _connect(s, r, "sub2rea")
    # 6. reasoning pair: same document or same entity surface
    for i, ra in enumerate(reasonings):
        for rb in reasonings[i + 1:]:
            if ra.doc_index == rb.doc_index or ra.surface == rb.surface:
                _connect(ra, rb, "rea2rea")
    # 7. reasoning and mention share a document
    for r in reasonings:
        for m in mentions:
            if r.doc_index == m.doc_index:
                _connect(r, m, "rea2men")
    # 8/9. mention pairs: same document, or same candidate across documents
    for i, ma in enumerate(mentions):
        for mb in mentions[i + 1:]:
            if ma.doc_index == mb.doc_index:
                _connect(ma, mb, "edgesin")
            elif ma.candidate_index == mb.candidate_index:
                _connect(ma, mb, "edgesout")
    # 10. everything else
    complete_pairs = []
    m = len(nodes)
    for i in range(m):
        for j in range(i + 1, m):
            if (i, j) not in connected:
                complete_pairs.append((i, j))
    if len(complete_pairs) > complete_cap:
        complete_pairs.sort(key=lambda p: (_pair_rank(*p), p))
        complete_pairs = sorted(complete_pairs[:complete_cap])
    edges = [GraphEdge(a, b, kind) for (a, b), kind in sorted(connected.items())]
    edges.extend(GraphEdge(a, b, "complete") for a, b in complete_pairs)
    return edges


def build_graph(sample: Sample, docs_tokens: list[list[Token]],
                node_cap: int = 500, complete_cap: int = 20000,
                sidecar=None) -> ReasoningGraph:
    nodes = build_nodes(sample, docs_tokens, node_cap=node_cap, sidecar=sidecar)
    edges = build_edges(nodes, complete_cap=complete_cap)
    return ReasoningGraph(sample.id, nodes, edges)


# ---------------------------------------------------------------------------
# serialization and relabeling
# ---------------------------------------------------------------------------


def graph_to_dict(graph: ReasoningGraph) -> dict:
    return {
        "sample_id": graph.sample_id,
        "nodes": [
            {
                "id": n.node_id,
                "kind": n.kind,
                "doc_index": n.doc_index,
                "token_span": list(n.token_span) if n.token_span else None,
                "candidate_index": n.candidate_index,
                "surface": n.surface,
            }
            for n in graph.nodes
        ],
        "edges": [{"a": e.a, "b": e.b, "kind": e.kind} for e in graph.edges],
    }


def graph_from_dict(obj: dict) -> ReasoningGraph:
    nodes = [
        GraphNode(
            n["id"], n["kind"], n["doc_index"],
            tuple(n["token_span"]) if n["token_span"] else None,
            n["candidate_index"], n["surface"],
        )
        for n in obj["nodes"]
    ]
    edges = [GraphEdge(e["a"], e["b"], e["kind"]) for e in obj["edges"]]
    return ReasoningGraph(obj["sample_id"], nodes, edges)


def relabel(graph: ReasoningGraph, perm) -> ReasoningGraph:
    """Apply a node-id permutation; perm[i] is the new id of node i."""
    nodes = [None] * len(graph.nodes)
    for n in graph.nodes:
        nodes[perm[n.node_id]] = replace(n, node_id=perm[n.node_id])
    edges = [
        GraphEdge(*sorted((perm[e.a], perm[e.b])), kind=e.kind) for e in graph.edges
    ]
    return ReasoningGraph(graph.sample_id, list(nodes), edges)
