"""Candidate scoring, training loss, and prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .graph import ReasoningGraph
from .numeric import Tensor, ops

# Stand-in for max over an empty mention set; excluded from gradients.
NO_MENTION_SCORE = -1e9


@dataclass
class OutputHeads:
    """Two-layer scoring heads (2h -> 2h tanh -> 1) for candidate and
    mention nodes, plus the fixed harmonic weight mixing them."""

    can_w1: Tensor
    can_b1: Tensor
    can_w2: Tensor
    can_b2: Tensor
    men_w1: Tensor
    men_b1: Tensor
    men_w2: Tensor
    men_b2: Tensor
    gamma: float = 1.0

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": getattr(self, k) for k in (
            "can_w1", "can_b1", "can_w2", "can_b2",
            "men_w1", "men_b1", "men_w2", "men_b2",
        )}


def _head(rows: Tensor, w1, b1, w2, b2) -> Tensor:
    hidden = ops.tanh(ops.affine(rows, w1, b1))
    return ops.affine(hidden, w2, b2)


def score_candidates(features: Tensor, graph: ReasoningGraph, heads: OutputHeads,
                     detail: dict | None = None) -> Tensor:
    """Per-candidate scores as a 1-D tensor, indexed by candidate_index.

    score_c = gamma * head_can(candidate node)
            + (1 - gamma) * max over c's mentions of head_men(mention node);
    candidates with no mentions take a large negative constant for the
    mention term. `detail`, when given, receives the raw per-node head
    outputs for visualization.
    """
    cand_nodes = sorted(graph.nodes_of_kind("candidate"), key=lambda n: n.candidate_index)
    n = len(cand_nodes)
    if n == 0:
        raise ContractError("graph has no candidate nodes to score")
    men_nodes = graph.nodes_of_kind("mention")

    cand_rows = ops.gather_rows(features, [c.node_id for c in cand_nodes])
    can_scores = ops.reshape(_head(cand_rows, heads.can_w1, heads.can_b1,
                                   heads.can_w2, heads.can_b2), (n,))

    men_scores = None
    if men_nodes:
        men_rows = ops.gather_rows(features, [m.node_id for m in men_nodes])
        men_scores = ops.reshape(
            _head(men_rows, heads.men_w1, heads.men_b1, heads.men_w2, heads.men_b2),
            (len(men_nodes),),
        )
    by_candidate: dict[int, list[int]] = {}
    for pos, node in enumerate(men_nodes):
        by_candidate.setdefault(node.candidate_index, []).append(pos)

    mention_terms = []
    for node in cand_nodes:
        positions = by_candidate.get(node.candidate_index)
        if positions:
            best = ops.vec_max(ops.gather_rows(men_scores, positions))
        else:
            best = ops.constant(NO_MENTION_SCORE)
        mention_terms.append(ops.reshape(best, (1,)))
    mention_max = ops.concat(mention_terms, axis=0)

    if detail is not None:
        detail["can_node_ids"] = [c.node_id for c in cand_nodes]
        detail["can_scores"] = can_scores.data.copy()
        detail["men_node_ids"] = [m.node_id for m in men_nodes]
        detail["men_scores"] = (
            men_scores.data.copy() if men_scores is not None else np.zeros(0)
        )
    return ops.add(ops.scale(can_scores, heads.gamma),
                   ops.scale(mention_max, 1.0 - heads.gamma))


def nll_loss(scores: Tensor, answer_index: int) -> Tensor:
    """Negative log of the softmax-normalized score at the answer."""
    n = scores.shape[0]
    if not 0 <= answer_index < n:
        raise ContractError(f"answer index {answer_index} outside {n} candidates")
    probs = ops.masked_softmax(scores, np.ones(n, dtype=bool))
    return ops.neg(ops.log(ops.pick(probs, answer_index)))


def predict(scores) -> int:
    """Argmax candidate index; ties go to the lowest index."""
    data = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    if data.size == 0:
        raise ContractError("cannot predict from an empty score vector")
    return int(np.argmax(data))
