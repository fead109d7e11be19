"""Finite-difference verification suite over every differentiable block.

Each check builds a tiny randomized instance (per seed), runs the block
inside a scalar wrapper, and compares tape gradients against central
differences. Instances stay small on purpose: the point is gradient
correctness, not scale, and the whole suite over 10 seeds has to stay
fast.
"""

from __future__ import annotations

import numpy as np

from .encoder import LstmParams, bilstm_encode, lstm_cell
from .features import CoattentionParams, attention_pool, coattention, self_pool
from .gnn import (GateParams, GatLayerParams, RelationParams, gat_layer,
                  general_gate, prepare_graph_tensors, query_gate, run_hops)
from .graph import GraphEdge, GraphNode, ReasoningGraph
from .numeric import Tensor, grad_check, ops
from .scorer import OutputHeads, nll_loss, score_candidates

HIDDEN = 3          # per-direction width; node width 6
HEADS = 2
IN_DIM = 4
STEP = 1e-5
# Denominator floor for near-zero coordinates (see grad_check docs); the
# suite's pass threshold is 1e-4, so this floors the comparison at an
# absolute |analytic - numeric| <= 1e-10.
FLOOR = 1e-6


def _t(rng, shape, s=0.5) -> Tensor:
    return Tensor(rng.normal(size=shape) * s, requires_grad=True)


def _lstm_params(rng, in_dim) -> LstmParams:
    h = HIDDEN
    return LstmParams(wx=_t(rng, (in_dim, 4 * h)), wh=_t(rng, (h, 4 * h)),
                      wc=_t(rng, (4 * h,)), b=_t(rng, (4 * h,)))


def _coatt_params(rng) -> CoattentionParams:
    two_h = 2 * HIDDEN
    return CoattentionParams(
        fuse_w=_t(rng, (two_h, two_h)), fuse_b=_t(rng, (two_h,)),
        mlp_w1=_t(rng, (2 * two_h, two_h)), mlp_b1=_t(rng, (two_h,)),
        mlp_w2=_t(rng, (two_h, 1)), mlp_b2=_t(rng, (1,)),
        proj_w=_t(rng, (2 * two_h, two_h)), proj_b=_t(rng, (two_h,)),
        span_w=_t(rng, (two_h, two_h)), span_b=_t(rng, (two_h,)),
    )


def _toy_graph() -> ReasoningGraph:
    nodes = [
        GraphNode(0, "subject", 0, (0, 0), None, "s"),
        GraphNode(1, "reasoning", 0, (1, 1), None, "r"),
        GraphNode(2, "mention", 0, (2, 2), 0, "c0"),
        GraphNode(3, "mention", 1, (0, 0), 0, "c0"),
        GraphNode(4, "candidate", None, None, 0, "c0"),
        GraphNode(5, "candidate", None, None, 1, "c1"),
    ]
    edges = [
        GraphEdge(0, 1, "sub2rea"),
        GraphEdge(1, 2, "rea2men"),
        GraphEdge(2, 3, "edgesout"),
        GraphEdge(2, 4, "can2men"),
        GraphEdge(3, 4, "can2men"),
        GraphEdge(4, 5, "can2can"),
        GraphEdge(0, 5, "complete"),
        GraphEdge(1, 5, "complete"),
        GraphEdge(0, 4, "complete"),
    ]
    return ReasoningGraph("toy", nodes, edges)


def _gat_params(rng, kinds) -> GatLayerParams:
    two_h = 2 * HIDDEN
    dh = two_h // HEADS
    return GatLayerParams(
        relations={
            kind: RelationParams(w=_t(rng, (two_h, two_h)),
                                 a_src=_t(rng, (HEADS, dh)),
                                 a_dst=_t(rng, (HEADS, dh)))
            for kind in kinds
        },
        heads=HEADS,
    )


def _gate_params(rng) -> GateParams:
    two_h = 2 * HIDDEN
    return GateParams(wq=_t(rng, (2 * two_h, 1)), ws=_t(rng, (2 * two_h, 1)),
                      fg_w=_t(rng, (2 * two_h, 1)), fg_b=_t(rng, (1,)))


def _heads_params(rng) -> OutputHeads:
    two_h = 2 * HIDDEN
    return OutputHeads(
        can_w1=_t(rng, (two_h, two_h)), can_b1=_t(rng, (two_h,)),
        can_w2=_t(rng, (two_h, 1)), can_b2=_t(rng, (1,)),
        men_w1=_t(rng, (two_h, two_h)), men_b1=_t(rng, (two_h,)),
        men_w2=_t(rng, (two_h, 1)), men_b2=_t(rng, (1,)),
        gamma=0.5,
    )


def check_lstm_cell(rng) -> float:
    params = _lstm_params(rng, IN_DIM)
    x = _t(rng, (1, IN_DIM), 1.0)
    h0 = _t(rng, (1, HIDDEN), 0.5)
    c0 = _t(rng, (1, HIDDEN), 0.5)

    def f(*_):
        h1, c1 = lstm_cell(x, h0, c0, params)
        return ops.sum_all(ops.add(h1, c1))

    return grad_check(f, [x, h0, c0, params.wx, params.wh, params.wc, params.b],
                      step=STEP, floor=FLOOR)


def check_bilstm(rng) -> float:
    fwd = _lstm_params(rng, IN_DIM)
    bwd = _lstm_params(rng, IN_DIM)
    x = _t(rng, (5, IN_DIM), 1.0)

    def f(*_):
        return ops.sum_all(ops.tanh(bilstm_encode(x, fwd, bwd)))

    wrt = [x, fwd.wx, fwd.wh, fwd.wc, fwd.b, bwd.wx, bwd.wh, bwd.wc, bwd.b]
    return grad_check(f, wrt, step=STEP, floor=FLOOR)


def check_coattention(rng) -> float:
    params = _coatt_params(rng)
    h_seq = _t(rng, (5, 2 * HIDDEN), 1.0)
    h_query = _t(rng, (3, 2 * HIDDEN), 1.0)

    def f(*_):
        return ops.sum_all(ops.tanh(coattention(h_seq, h_query, params)))

    return grad_check(f, [h_seq, h_query, params.fuse_w, params.fuse_b],
                      step=STEP, floor=FLOOR)


def check_self_pool(rng) -> float:
    params = _coatt_params(rng)
    rows = _t(rng, (4, 4 * HIDDEN), 1.0)

    def f(*_):
        return ops.sum_all(self_pool(rows, params))

    wrt = [rows, params.mlp_w1, params.mlp_b1, params.mlp_w2, params.mlp_b2,
           params.proj_w, params.proj_b]
    return grad_check(f, wrt, step=STEP, floor=FLOOR)


def check_gat_layer(rng) -> float:
    graph = _toy_graph()
    gtensors = prepare_graph_tensors(graph)
    kinds = sorted(gtensors)
    params = _gat_params(rng, kinds)
    feats = _t(rng, (len(graph.nodes), 2 * HIDDEN), 0.8)

    def f(*_):
        return ops.sum_all(gat_layer(feats, gtensors, params))

    wrt = [feats]
    for kind in kinds:
        rel = params.relations[kind]
        wrt += [rel.w, rel.a_src, rel.a_dst]
    return grad_check(f, wrt, step=STEP, floor=FLOOR)


def check_query_gate(rng) -> float:
    params = _gate_params(rng)
    feats = _t(rng, (4, 2 * HIDDEN), 0.8)
    query = _t(rng, (3, 2 * HIDDEN), 0.8)

    def f(*_):
        return ops.sum_all(query_gate(feats, query, params))

    return grad_check(f, [feats, query, params.wq, params.ws], step=STEP, floor=FLOOR)


def check_general_gate(rng) -> float:
    params = _gate_params(rng)
    gated = _t(rng, (4, 2 * HIDDEN), 0.8)
    base = _t(rng, (4, 2 * HIDDEN), 0.8)

    def f(*_):
        return ops.sum_all(general_gate(gated, base, params))

    return grad_check(f, [gated, base, params.fg_w, params.fg_b], step=STEP, floor=FLOOR)


def check_hop_stack(rng) -> float:
    graph = _toy_graph()
    gtensors = prepare_graph_tensors(graph)
    kinds = sorted(gtensors)
    layer = _gat_params(rng, kinds)
    gates = _gate_params(rng)
    feats = _t(rng, (len(graph.nodes), 2 * HIDDEN), 0.8)
    query = _t(rng, (3, 2 * HIDDEN), 0.8)

    def f(*_):
        return ops.sum_all(run_hops(feats, gtensors, layer, gates, query, hops=2))

    wrt = [feats, query, gates.wq, gates.ws, gates.fg_w, gates.fg_b]
    for kind in kinds:
        rel = layer.relations[kind]
        wrt += [rel.w, rel.a_src, rel.a_dst]
    return grad_check(f, wrt, step=STEP, floor=FLOOR)


def check_heads(rng) -> float:
    graph = _toy_graph()
    heads = _heads_params(rng)
    feats = _t(rng, (len(graph.nodes), 2 * HIDDEN), 0.8)

    def f(*_):
        scores = score_candidates(feats, graph, heads)
        return ops.sum_all(ops.tanh(scores))

    wrt = [feats, heads.can_w1, heads.can_b1, heads.can_w2, heads.can_b2,
           heads.men_w1, heads.men_b1, heads.men_w2, heads.men_b2]
    return grad_check(f, wrt, step=STEP, floor=FLOOR)


def check_loss(rng) -> float:
    scores = _t(rng, (5,), 1.5)

    def f(*_):
        return nll_loss(scores, 2)

    return grad_check(f, scores, step=STEP, floor=FLOOR)


def check_pooling_weights(rng) -> float:
    params = _coatt_params(rng)
    rows = _t(rng, (4, 4 * HIDDEN), 1.0)

    def f(*_):
        _pooled, weights = attention_pool(rows, params)
        return ops.sum_all(ops.mul(weights, weights))

    return grad_check(f, [rows, params.mlp_w1, params.mlp_w2], step=STEP, floor=FLOOR)


ALL_CHECKS = {
    "lstm_cell": check_lstm_cell,
    "bilstm_encode": check_bilstm,
    "coattention": check_coattention,
    "self_pool": check_self_pool,
    "pooling_weights": check_pooling_weights,
    "relational_gat_layer": check_gat_layer,
    "query_gate": check_query_gate,
    "general_gate": check_general_gate,
    "hop_stack": check_hop_stack,
    "output_heads": check_heads,
    "loss": check_loss,
}


def run_grad_suite(n_seeds: int = 10) -> dict[str, float]:
    """Max relative error per block over `n_seeds` randomized instances."""
    results = {}
    for name, check in ALL_CHECKS.items():
        worst = 0.0
        for seed in range(n_seeds):
            rng = np.random.default_rng(1000 + seed)
            worst = max(worst, check(rng))
        results[name] = worst
    return results
