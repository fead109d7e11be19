"""Query-aware node featurization.

Each sequence is co-attended with the query, then attention-pooled to a
single row. The co-attended sequence is twice the encoder width (the
query-side and fused summaries are concatenated), so pooling is followed
by a learned projection back down to the node width 2h. Token-span nodes
(subject / reasoning / mention) pool only their span's rows and pass
through one extra affine+tanh so they can differentiate from whole-
document features.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from .errors import DimensionError
from .graph import GraphEdge, ReasoningGraph
from .numeric import Tensor, ops

log = logging.getLogger(__name__)


@dataclass
class CoattentionParams:
    """Fusion map f (2h->2h), pooling MLP (4h->2h->1), projection (4h->2h),
    and the span transform (2h->2h)."""

    fuse_w: Tensor
    fuse_b: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor
    proj_w: Tensor
    proj_b: Tensor
    span_w: Tensor
    span_b: Tensor

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": getattr(self, k) for k in (
            "fuse_w", "fuse_b", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2",
            "proj_w", "proj_b", "span_w", "span_b",
        )}


def coattention(h_seq: Tensor, h_query: Tensor, params: CoattentionParams) -> Tensor:
    """Mutual attention between a sequence and the query.

    h_seq: (l_s, 2h), h_query: (l_q, 2h). Returns (l_s, 4h): the
    query-side summary concatenated with the fused query context, all
    softmaxes row-wise.
    """
    if h_seq.shape[1] != h_query.shape[1]:
        raise DimensionError(
            f"coattention widths differ: {h_seq.shape[1]} vs {h_query.shape[1]}"
        )
    sim = ops.matmul(h_seq, ops.transpose(h_query))  # (l_s, l_q)
    over_seq = ops.softmax_rows(ops.transpose(sim))  # (l_q, l_s) rows over seq
    over_query = ops.softmax_rows(sim)               # (l_s, l_q) rows over query
    query_ctx = ops.matmul(over_seq, h_seq)          # (l_q, 2h)
    seq_ctx = ops.matmul(over_query, h_query)        # (l_s, 2h)
    fused = ops.tanh(ops.affine(ops.matmul(over_query, query_ctx),
                                params.fuse_w, params.fuse_b))
    return ops.concat([seq_ctx, fused], axis=1)


def attention_pool(rows: Tensor, params: CoattentionParams):
    """Collapse (l, 4h) rows to (1, 4h) with learned attention weights.

    Returns (pooled, weights); weights is the (1, l) row-stochastic
    attention. A constant-logit MLP therefore yields the column mean.
    """
    hidden = ops.tanh(ops.affine(rows, params.mlp_w1, params.mlp_b1))
    logits = ops.affine(hidden, params.mlp_w2, params.mlp_b2)  # (l, 1)
    weights = ops.softmax_rows(ops.transpose(logits))          # (1, l)
    pooled = ops.matmul(weights, rows)
    return pooled, weights


def self_pool(rows: Tensor, params: CoattentionParams) -> Tensor:
    """Pool co-attended rows and project to the node width; (1, 2h)."""
    pooled, _ = attention_pool(rows, params)
    return ops.tanh(ops.affine(pooled, params.proj_w, params.proj_b))


def _span_feature(coattended: Tensor, span, params: CoattentionParams) -> Tensor:
    rows = ops.slice_rows(coattended, span[0], span[1] + 1)
    base = self_pool(rows, params)
    return ops.tanh(ops.affine(base, params.span_w, params.span_b))


def _pool_logits(rows: Tensor, params: CoattentionParams) -> Tensor:
    """Per-row pooling logits; row-wise, so slicing commutes with it."""
    hidden = ops.tanh(ops.affine(rows, params.mlp_w1, params.mlp_b1))
    return ops.affine(hidden, params.mlp_w2, params.mlp_b2)


def featurize_nodes(graph: ReasoningGraph, coattended_docs: list[Tensor],
                    coattended_cands: list[Tensor], params: CoattentionParams):
    """Per-node fixed-width features, row order matching node ids.

    Support nodes pool their whole co-attended document, span nodes their
    span's rows, candidate nodes their co-attended candidate sequence.
    Nodes whose span falls outside the encoded (truncated) region are
    dropped with a warning; returns (graph, features) where the graph is
    re-indexed only if something was dropped.

    The math matches self_pool / the span transform node for node; the
    pooling MLP and the trailing projections run batched (they are
    row-wise, so sharing them across nodes changes nothing).
    """
    kept = []
    dropped = []
    for node in graph.nodes:
        if node.token_span is not None:
            enc_len = coattended_docs[node.doc_index].shape[0]
            if node.token_span[1] >= enc_len:
                dropped.append(node)
                continue
        kept.append(node)
    if dropped:
        for node in dropped:
            log.warning(
                "sample %s: dropping node %d (%s) with span %s beyond encoded length",
                graph.sample_id, node.node_id, node.kind, node.token_span,
            )
        graph = _without_nodes(graph, {n.node_id for n in dropped})
        kept = graph.nodes

    doc_logits: dict[int, Tensor] = {}
    cand_logits: dict[int, Tensor] = {}
    for node in kept:
        if node.kind == "candidate":
            if node.candidate_index not in cand_logits:
                cand_logits[node.candidate_index] = _pool_logits(
                    coattended_cands[node.candidate_index], params
                )
        elif node.doc_index not in doc_logits:
            doc_logits[node.doc_index] = _pool_logits(
                coattended_docs[node.doc_index], params
            )

    n_span = sum(1 for node in kept if node.token_span is not None)
    if any((node.token_span is not None) != (pos < n_span)
           for pos, node in enumerate(kept)):
        raise DimensionError(
            "featurize_nodes expects span nodes first in node-id order"
        )
    pooled_rows = []
    for node in kept:
        if node.kind == "support":
            rows, logits = coattended_docs[node.doc_index], doc_logits[node.doc_index]
        elif node.kind == "candidate":
            rows = coattended_cands[node.candidate_index]
            logits = cand_logits[node.candidate_index]
        else:
            start, stop = node.token_span[0], node.token_span[1] + 1
            rows = ops.slice_rows(coattended_docs[node.doc_index], start, stop)
            logits = ops.slice_rows(doc_logits[node.doc_index], start, stop)
        weights = ops.softmax_rows(ops.transpose(logits))
        pooled_rows.append(ops.matmul(weights, rows))
    pooled = ops.concat(pooled_rows, axis=0)
    base = ops.tanh(ops.affine(pooled, params.proj_w, params.proj_b))
    # Span nodes occupy the id prefix (subject, reasoning, mention come
    # first in construction order), so the extra span transform applies to
    # a contiguous block.
    if n_span == 0:
        return graph, base
    span_block = ops.tanh(
        ops.affine(ops.slice_rows(base, 0, n_span), params.span_w, params.span_b)
    )
    if n_span == base.shape[0]:
        return graph, span_block
    rest = ops.slice_rows(base, n_span, base.shape[0])
    return graph, ops.concat([span_block, rest], axis=0)


def _without_nodes(graph: ReasoningGraph, gone: set[int]) -> ReasoningGraph:
    remap = {}
    nodes = []
    for node in graph.nodes:
        if node.node_id in gone:
            continue
        remap[node.node_id] = len(nodes)
        nodes.append(replace(node, node_id=len(nodes)))
    edges = [
        GraphEdge(*sorted((remap[e.a], remap[e.b])), kind=e.kind)
        for e in graph.edges
        if e.a in remap and e.b in remap
    ]
    return ReasoningGraph(graph.sample_id, nodes, edges)
