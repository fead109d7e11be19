"""Relational multi-head graph attention with query-aware and general gates.

One hop is: per-relation multi-head attention aggregation (summed over the
relations connecting each pair, scaled by 1/|neighborhood| per relation),
tanh, a 1/K concat scaling, then a query-aware gate and a general gate.
The same layer parameters serve every hop (parameter sharing), so the hop
count never changes the parameter count.

Both attention normalization and the 1/|neighborhood| mean factor are
applied, as specified; ``neighbor_mean=False`` drops the mean factor for
ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .graph import EDGE_KINDS, ReasoningGraph
from .numeric import Tensor, ops

LEAKY_SLOPE = 0.2

# Short node-kind names accepted by ablation switches.
KIND_SHORT = {
    "sub": "subject",
    "rea": "reasoning",
    "men": "mention",
    "sup": "support",
    "can": "candidate",
}


@dataclass
class RelationParams:
    """Per-relation projection (2h, 2h, head-partitioned columns) and
    per-head attention vectors (K, 2h/K) for each edge side."""

    w: Tensor
    a_src: Tensor
    a_dst: Tensor


@dataclass
class GatLayerParams:
    relations: dict[str, RelationParams]
    heads: int

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for kind, rel in self.relations.items():
            out[f"{prefix}.{kind}.w"] = rel.w
            out[f"{prefix}.{kind}.a_src"] = rel.a_src
            out[f"{prefix}.{kind}.a_dst"] = rel.a_dst
        return out


@dataclass
class GateParams:
    """Mixing weights for the two gates; the dedicated query encoder that
    produces the gate's query states lives with the other encoders."""

    wq: Tensor    # (4h, 1): first 2h rows weight the node, last 2h the query position
    ws: Tensor    # (4h, 1)
    fg_w: Tensor  # (4h, 1)
    fg_b: Tensor  # (1,)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": getattr(self, k) for k in ("wq", "ws", "fg_w", "fg_b")}


@dataclass
class EdgeArrays:
    """One relation's directed edges, compacted to its incident nodes.

    ``nodes`` lists the graph node ids this relation touches; recv/send
    index into that compact list (sorted by receiver), so per-relation
    projections only run over incident nodes.
    """

    nodes: np.ndarray
    recv: np.ndarray
    send: np.ndarray
    seg_ptr: np.ndarray
    inv_deg: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(self.recv.shape[0])


def normalize_blocked_kinds(blocked) -> frozenset[str]:
    out = set()
    for b in blocked:
        kind = KIND_SHORT.get(b, b)
        if kind not in KIND_SHORT.values():
            raise DimensionError(f"unknown node kind to block: {b!r}")
        out.add(kind)
    return frozenset(out)


def prepare_graph_tensors(graph: ReasoningGraph, blocked_kinds=(),
                          neighbor_mean: bool = True) -> dict[str, EdgeArrays]:
    """Edge arrays per relation for the attention kernel.

    Edges incident to a blocked node kind are removed entirely, leaving
    those nodes isolated (features intact, degree zero).
    """
    blocked = normalize_blocked_kinds(blocked_kinds)
    kind_of = [n.kind for n in graph.nodes]
    out: dict[str, EdgeArrays] = {}
    for rel_kind in EDGE_KINDS:
        directed = []
        for e in graph.edges:
            if e.kind != rel_kind:
                continue
            if kind_of[e.a] in blocked or kind_of[e.b] in blocked:
                continue
            directed.append((e.a, e.b))
            directed.append((e.b, e.a))
        if not directed:
            continue
        directed.sort()
        recv_full = np.array([d[0] for d in directed], dtype=np.int64)
        send_full = np.array([d[1] for d in directed], dtype=np.int64)
        nodes = np.unique(np.concatenate([recv_full, send_full]))
        compact = np.full(len(graph.nodes), -1, dtype=np.int64)
        compact[nodes] = np.arange(len(nodes))
        recv = compact[recv_full]
        send = compact[send_full]
        boundaries = np.flatnonzero(np.diff(recv)) + 1
        seg_ptr = np.concatenate(([0], boundaries, [len(recv)])).astype(np.int64)
        lens = np.diff(seg_ptr)
        if neighbor_mean:
            inv_deg = np.repeat(1.0 / lens, lens)
        else:
            inv_deg = np.ones(len(recv))
        out[rel_kind] = EdgeArrays(nodes, recv, send, seg_ptr, inv_deg)
    return out


def relation_messages(n_feats: Tensor, rel: RelationParams, arrays: EdgeArrays,
                      alpha_sink: list | None = None) -> Tensor:
    """Attention-aggregated neighbor messages for one relation; (m, 2h).

    Only incident nodes get projected; non-incident rows come out zero.
    """
    incident = ops.gather_rows(n_feats, arrays.nodes)
    projected = ops.matmul(incident, rel.w)
    return ops.relation_attention(
        projected, rel.a_src, rel.a_dst,
        arrays.recv, arrays.send, arrays.seg_ptr, arrays.inv_deg,
        slope=LEAKY_SLOPE, alpha_sink=alpha_sink,
        scatter_rows=(arrays.nodes, n_feats.shape[0]),
    )


def gat_layer(n_feats: Tensor, gtensors: dict[str, EdgeArrays],
              params: GatLayerParams, capture: dict | None = None) -> Tensor:
    """One relational multi-head attention layer.

    Messages are summed across relations per receiver, squashed with tanh
    and scaled by 1/K (heads live in contiguous column blocks, so the
    per-head squash and the concatenation commute). Nodes with no edges
    in any relation end up at tanh(0)/K = 0.
    """
    total = None
    for rel_kind in EDGE_KINDS:
        arrays = gtensors.get(rel_kind)
        if arrays is None or arrays.n_edges == 0:
            continue
        sink: list | None = [] if capture is not None else None
        msg = relation_messages(n_feats, params.relations[rel_kind], arrays, sink)
        if capture is not None:
            capture[rel_kind] = sink[0]
        total = msg if total is None else ops.add(total, msg)
    if total is None:
        total = ops.constant(np.zeros(n_feats.shape))
    return ops.scale(ops.tanh(total), 1.0 / params.heads)


def query_gate(n_feats: Tensor, query_states: Tensor, params: GateParams,
               force_mix: float | None = None) -> Tensor:
    """Blend each node with an attention-selected query summary.

    Per node i and query position j the match score is
    sigmoid(wq . [n_i || q_j]); a softmax over the query positions picks a
    context q_i, and a learned mix beta_i produces
    beta*tanh(q_i) + (1-beta)*n_i. ``force_mix`` pins beta for
    diagnostics (0.0 gives exact pass-through).
    """
    two_h = n_feats.shape[1]
    wq_node = ops.slice_rows(params.wq, 0, two_h)
    wq_query = ops.slice_rows(params.wq, two_h, 2 * two_h)
    node_part = ops.matmul(n_feats, wq_node)            # (m, 1)
    query_part = ops.matmul(query_states, wq_query)     # (M, 1)
    match = ops.sigmoid(ops.add(node_part, ops.transpose(query_part)))  # (m, M)
    attn = ops.softmax_rows(match)
    q_ctx = ops.matmul(attn, query_states)              # (m, 2h)
    if force_mix is None:
        mix = ops.sigmoid(ops.matmul(ops.concat([q_ctx, n_feats], axis=1), params.ws))
    else:
        mix = ops.constant(np.full((n_feats.shape[0], 1), float(force_mix)))
    keep = ops.sub(ops.constant(1.0), mix)
    return ops.add(ops.mul(mix, ops.tanh(q_ctx)), ops.mul(keep, n_feats))


def general_gate(gated: Tensor, hop_input: Tensor, params: GateParams,
                 force_mix: float | None = None) -> Tensor:
    """Learned skip connection across the whole hop.

    w_i = sigmoid(affine([gated_i ; input_i])); output
    w*tanh(gated) + (1-w)*input, so a closed gate (w=0) passes the hop
    input through bit for bit.
    """
    if gated.shape != hop_input.shape:
        raise DimensionError("general_gate operands must share a shape")
    if force_mix is None:
        mix = ops.sigmoid(
            ops.affine(ops.concat([gated, hop_input], axis=1), params.fg_w, params.fg_b)
        )
    else:
        mix = ops.constant(np.full((gated.shape[0], 1), float(force_mix)))
    keep = ops.sub(ops.constant(1.0), mix)
    return ops.add(ops.mul(mix, ops.tanh(gated)), ops.mul(keep, hop_input))


def run_hops(n0: Tensor, gtensors: dict[str, EdgeArrays], layer: GatLayerParams,
             gates: GateParams, query_states: Tensor, hops: int,
             dropout: float = 0.0, rng: np.random.Generator | None = None,
             train: bool = False, force_query_mix: float | None = None,
             force_general_mix: float | None = None,
             capture: dict | None = None) -> Tensor:
    """Stack `hops` applications of layer -> query gate -> general gate.

    Dropout (inverted, seeded by `rng`) applies between hops during
    training only. `capture`, when given, receives the final hop's
    per-relation attention weights.
    """
    if hops < 1:
        raise DimensionError("hops must be >= 1")
    n = n0
    for hop in range(hops):
        cap = capture if (capture is not None and hop == hops - 1) else None
        aggregated = gat_layer(n, gtensors, layer, capture=cap)
        blended = query_gate(aggregated, query_states, gates, force_query_mix)
        n_next = general_gate(blended, n, gates, force_general_mix)
        if train and dropout > 0.0 and rng is not None and hop < hops - 1:
            mask = (rng.random(n_next.shape) >= dropout) / (1.0 - dropout)
            n_next = ops.mul(n_next, ops.constant(mask))
        n = n_next
    return n
