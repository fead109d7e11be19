"""Reasoning-graph visualization: DOT text and a standalone HTML report.

Node colors by kind: subject gray, reasoning orange, mention green,
candidate blue, support red. Edge thickness follows the final hop's
attention (head-averaged, direction- and relation-averaged per pair, then
normalized by the stronger endpoint's maximum so display weights sit in
[0, 1]). Mention and candidate nodes are filled with an opacity linear in
their scoring-head output, min-max normalized within the kind. Edges of
the `complete` relation are hidden unless asked for.

Both emitters are pure functions of the snapshot: identical snapshots
give byte-identical output.
"""

from __future__ import annotations

import html
from dataclasses import dataclass

import numpy as np

from .graph import ReasoningGraph
from .model import Model, PreparedSample
from .scorer import predict
from .text import Token

NODE_COLOR = {
    "subject": "#808080",    # gray
    "reasoning": "#ff8c00",  # orange
    "mention": "#228b22",    # green
    "candidate": "#1e4fd8",  # blue
    "support": "#cc2222",    # red
}
MIN_PENWIDTH = 0.6
MAX_PENWIDTH = 4.0


@dataclass
class VizSnapshot:
    sample_id: str
    graph: ReasoningGraph
    docs_tokens: list[list[Token]]
    edge_weights: dict[tuple[int, int], float]  # display weight in [0, 1]
    node_opacity: dict[int, float]              # mention/candidate nodes
    node_scores: dict[int, float]
    predicted: str
    predicted_index: int
    answer: str | None
    menmax_node: int | None


def build_snapshot(model: Model, prepared: PreparedSample) -> VizSnapshot:
    """Run one forward pass with attention capture and assemble the snapshot."""
    capture: dict = {}
    scores = model.forward(prepared, train=False, capture=capture)
    graph: ReasoningGraph = capture["graph"]
    detail = capture["detail"]

    raw: dict[tuple[int, int], list[float]] = {}
    alpha_by_rel = capture.get("alpha", {})
    for rel_kind, alpha in alpha_by_rel.items():
        arrays = capture["gtensors"].get(rel_kind)
        if arrays is None or alpha.shape[0] == 0:
            continue
        head_mean = alpha.mean(axis=1)
        for e in range(arrays.n_edges):
            a, b = int(arrays.recv[e]), int(arrays.send[e])
            pair = (a, b) if a < b else (b, a)
            raw.setdefault(pair, []).append(float(head_mean[e]))
    pair_raw = {pair: float(np.mean(vals)) for pair, vals in raw.items()}
    max_incident: dict[int, float] = {}
    for (a, b), w in pair_raw.items():
        max_incident[a] = max(max_incident.get(a, 0.0), w)
        max_incident[b] = max(max_incident.get(b, 0.0), w)
    edge_weights = {}
    for (a, b), w in pair_raw.items():
        denom = max(max_incident.get(a, 0.0), max_incident.get(b, 0.0))
        edge_weights[(a, b)] = w / denom if denom > 0 else 0.0

    node_scores: dict[int, float] = {}
    node_opacity: dict[int, float] = {}
    for ids, values in ((detail["can_node_ids"], detail["can_scores"]),
                        (detail["men_node_ids"], detail["men_scores"])):
        if len(ids) == 0:
            continue
        values = np.asarray(values, dtype=float)
        lo, hi = values.min(), values.max()
        for node_id, value in zip(ids, values):
            node_scores[node_id] = float(value)
            node_opacity[node_id] = float((value - lo) / (hi - lo)) if hi > lo else 1.0

    men_ids = detail["men_node_ids"]
    menmax = int(men_ids[int(np.argmax(detail["men_scores"]))]) if men_ids else None
    pred_index = predict(scores)
    return VizSnapshot(
        sample_id=prepared.sample.id,
        graph=graph,
        docs_tokens=prepared.docs_tokens,
        edge_weights=edge_weights,
        node_opacity=node_opacity,
        node_scores=node_scores,
        predicted=prepared.sample.candidates[pred_index],
        predicted_index=pred_index,
        answer=prepared.sample.answer,
        menmax_node=menmax,
    )


# ---------------------------------------------------------------------------
# DOT
# ---------------------------------------------------------------------------


def _dot_label(node) -> str:
    text = node.surface if node.surface else node.kind
    return f"{node.node_id}:{node.kind[:3]}\\n{text}"


def emit_dot(snapshot: VizSnapshot, show_complete: bool = False) -> str:
    """Graphviz text for the snapshot; deterministic node-id ordering."""
    lines = [f'graph "{snapshot.sample_id}" {{', "  node [style=filled];"]
    for node in sorted(snapshot.graph.nodes, key=lambda n: n.node_id):
        color = NODE_COLOR[node.kind]
        if node.node_id in snapshot.node_opacity:
            alpha = int(round(40 + 215 * snapshot.node_opacity[node.node_id]))
            fill = f"{color}{alpha:02x}"
        else:
            fill = color
        label = _dot_label(node).replace('"', "'")
        lines.append(
            f'  n{node.node_id} [label="{label}", fillcolor="{fill}"];'
        )
    for edge in sorted(snapshot.graph.edges, key=lambda e: (e.a, e.b, e.kind)):
        if edge.kind == "complete" and not show_complete:
            continue
        w = snapshot.edge_weights.get((edge.a, edge.b), 0.0)
        pen = MIN_PENWIDTH + (MAX_PENWIDTH - MIN_PENWIDTH) * w
        lines.append(
            f'  n{edge.a} -- n{edge.b} [penwidth={pen:.3f}, tooltip="{edge.kind}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# HTML
# ---------------------------------------------------------------------------

_CSS = """
body { font-family: sans-serif; margin: 2em; max-width: 60em; }
.doc { border: 1px solid #ccc; padding: .6em; margin: .6em 0; }
.subject { background: #c8c8c8; }
.reasoning { background: #ffd9a0; }
.mention { background: #b9e4b9; }
.candidate-list span { background: #ccd9ff; padding: 0 .3em; margin-right: .4em; }
.answer-frame { outline: 2px solid #222; outline-offset: 1px; }
.menmax-tag { background: #222; color: #fff; font-size: .7em; padding: 0 .2em; margin-left: .15em; }
.header { margin-bottom: 1em; }
"""

_SPAN_PRIORITY = {"subject": 0, "mention": 1, "reasoning": 2}


def _doc_spans(snapshot: VizSnapshot, doc_index: int):
    """Char-offset highlight spans for one document, non-overlapping.

    Overlapping node spans are resolved subject > mention > reasoning,
    earlier span first.
    """
    tokens = snapshot.docs_tokens[doc_index]
    spans = []
    for node in snapshot.graph.nodes:
        if node.doc_index != doc_index or node.token_span is None:
            continue
        start = tokens[node.token_span[0]].char_span[0]
        end = tokens[node.token_span[1]].char_span[1]
        spans.append((start, end, _SPAN_PRIORITY[node.kind], node))
    spans.sort(key=lambda s: (s[0], s[2], s[1]))
    chosen = []
    occupied_until = -1
    for start, end, _prio, node in spans:
        if start > occupied_until:
            chosen.append((start, end, node))
            occupied_until = end - 1
    return chosen


def emit_html(sample, snapshot: VizSnapshot) -> str:
    """Self-contained HTML report: highlighted documents plus the verdict."""
    out = ["<!DOCTYPE html>", "<html><head><meta charset='utf-8'>",
           f"<title>{html.escape(snapshot.sample_id)}</title>",
           f"<style>{_CSS}</style></head><body>"]
    verdict = ""
    if snapshot.answer is not None:
        verdict = " &#10003;" if snapshot.predicted == snapshot.answer else " &#10007;"
    out.append("<div class='header'>")
    out.append(f"<h2>{html.escape(snapshot.sample_id)}</h2>")
    out.append(
        f"<p>query: <b>{html.escape(sample.relation)}</b> "
        f"{html.escape(sample.subject)}</p>"
    )
    out.append(
        f"<p>prediction: <b>{html.escape(snapshot.predicted)}</b>{verdict}"
        + (f" &mdash; answer: {html.escape(snapshot.answer)}" if snapshot.answer else "")
        + "</p>"
    )
    out.append("<p class='candidate-list'>candidates: " + "".join(
        f"<span>{html.escape(c)}</span>" for c in sample.candidates
    ) + "</p></div>")

    for di, text in enumerate(sample.documents):
        parts = [f"<div class='doc'><b>document {di}</b><br>"]
        cursor = 0
        for start, end, node in _doc_spans(snapshot, di):
            parts.append(html.escape(text[cursor:start]))
            classes = [node.kind]
            if (node.kind == "mention" and snapshot.answer is not None
                    and node.surface == snapshot.answer):
                classes.append("answer-frame")
            tag = ""
            if snapshot.menmax_node is not None and node.node_id == snapshot.menmax_node:
                tag = "<span class='menmax-tag'>MENMAX</span>"
            parts.append(
                f"<span class='{' '.join(classes)}'>{html.escape(text[start:end])}</span>{tag}"
            )
            cursor = end
        parts.append(html.escape(text[cursor:]))
        parts.append("</div>")
        out.append("".join(parts))
    out.append("</body></html>")
    return "\n".join(out) + "\n"
