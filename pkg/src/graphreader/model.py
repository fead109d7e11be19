"""Full pipeline assembly: parameters, sample preparation, forward pass.

The Model owns every trainable tensor under stable dotted names (encoder
sets for documents / candidates / query plus a dedicated set feeding the
query gate, the co-attention block, per-relation attention layers, gates,
and scoring heads; word/char embedding matrices join only when they are
trainable). A Preprocessor turns raw Samples into PreparedSamples once:
tokens, reasoning graph, edge arrays, and embedded (or indexable)
sequences, so epochs never re-tokenize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .encoder import LstmParams, bilstm_encode
from .errors import DataError
from .features import CoattentionParams, coattention, featurize_nodes
from .gnn import (EdgeArrays, GateParams, GatLayerParams, RelationParams,
                  prepare_graph_tensors, run_hops)
from .graph import EDGE_KINDS, ReasoningGraph, build_graph
from .numeric import Tensor, ops
from .scorer import OutputHeads, nll_loss, score_candidates
from .text import CharNgramEmbedder, EmbeddingTable, Sample, Token, tokenize


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


@dataclass
class SeqData:
    """One sequence ready for embedding.

    Frozen path: `embedded` holds the (l, word+char) array. Trainable
    path: `word_ids` indexes the word matrix and (`gram_flat`, `gram_ptr`)
    the hashed char table, one segment per token.
    """

    length: int
    embedded: np.ndarray | None = None
    word_ids: np.ndarray | None = None
    gram_flat: np.ndarray | None = None
    gram_ptr: np.ndarray | None = None


@dataclass
class PreparedSample:
    sample: Sample
    docs_tokens: list[list[Token]]
    graph: ReasoningGraph
    gtensors: dict[str, EdgeArrays]
    doc_seqs: list[SeqData]
    cand_seqs: list[SeqData]
    query_seq: SeqData
    answer_index: int | None


class Preprocessor:
    """Sample -> PreparedSample, under one config and embedding setup."""

    def __init__(self, config: RunConfig, word_table: EmbeddingTable | None = None,
                 char_embedder: CharNgramEmbedder | None = None,
                 vocab: list[str] | None = None):
        self.config = config
        self.word_table = word_table or EmbeddingTable(config.word_dim, seed=config.seed)
        self.char_embedder = char_embedder or CharNgramEmbedder(
            config.char_dim, config.char_buckets, seed=config.seed
        )
        self.vocab_index = {tok: i for i, tok in enumerate(vocab)} if vocab else None
        self._embed_cache: dict[str, np.ndarray] = {}

    # -- embedding ---------------------------------------------------------

    def token_vector(self, surface: str) -> np.ndarray:
        vec = self._embed_cache.get(surface)
        if vec is None:
            vec = np.concatenate(
                [self.word_table.lookup(surface), self.char_embedder.vector(surface)]
            )
            self._embed_cache[surface] = vec
        return vec

    def _seq_data(self, tokens: list[Token]) -> SeqData:
        if not tokens:
            raise DataError("cannot encode an empty token sequence")
        if self.vocab_index is None:
            arr = np.stack([self.token_vector(t.surface) for t in tokens])
            return SeqData(length=len(tokens), embedded=arr)
        word_ids = np.array(
            [self.vocab_index.get(t.surface, -1) for t in tokens], dtype=np.int64
        )
        if np.any(word_ids < 0):
            # Tokens outside the trained vocabulary keep their frozen vector;
            # simplest encoding: fall back to the frozen path for the row.
            arr = np.stack([self.token_vector(t.surface) for t in tokens])
            return SeqData(length=len(tokens), embedded=arr)
        grams = [self.char_embedder.gram_ids(t.surface) for t in tokens]
        ptr = np.concatenate(([0], np.cumsum([len(g) for g in grams]))).astype(np.int64)
        return SeqData(
            length=len(tokens),
            word_ids=word_ids,
            gram_flat=np.concatenate(grams),
            gram_ptr=ptr,
        )

    # -- sample preparation -------------------------------------------------

    def tokenize_sample(self, sample: Sample):
        docs_tokens = [
            tokenize(doc, doc_index=i, max_tokens=self.config.max_doc_tokens)
            for i, doc in enumerate(sample.documents)
        ]
        query_tokens = tokenize(
            f"{sample.relation} {sample.subject}".strip(),
            max_tokens=self.config.max_query_tokens,
        )
        cand_tokens = [tokenize(c) for c in sample.candidates]
        return docs_tokens, cand_tokens, query_tokens

    def prepare(self, sample: Sample, sidecar=None) -> PreparedSample:
        docs_tokens, cand_tokens, query_tokens = self.tokenize_sample(sample)
        for i, toks in enumerate(docs_tokens):
            if not toks:
                raise DataError(f"sample {sample.id}: document {i} has no tokens")
        for i, toks in enumerate(cand_tokens):
            if not toks:
                raise DataError(f"sample {sample.id}: candidate {i} has no tokens")
        if not query_tokens:
            raise DataError(f"sample {sample.id}: empty query")
        graph = build_graph(
            sample, docs_tokens,
            node_cap=self.config.node_cap,
            complete_cap=self.config.complete_edge_cap,
            sidecar=sidecar,
        )
        gtensors = prepare_graph_tensors(
            graph,
            blocked_kinds=self.config.blocked_node_kinds,
            neighbor_mean=self.config.neighbor_mean,
        )
        answer_index = None
        if sample.answer is not None:
            answer_index = sample.candidates.index(sample.answer)
        return PreparedSample(
            sample=sample,
            docs_tokens=docs_tokens,
            graph=graph,
            gtensors=gtensors,
            doc_seqs=[self._seq_data(t) for t in docs_tokens],
            cand_seqs=[self._seq_data(t) for t in cand_tokens],
            query_seq=self._seq_data(query_tokens),
            answer_index=answer_index,
        )

    def prepare_all(self, samples, sidecars=None) -> list[PreparedSample]:
        sidecars = sidecars or {}
        return [self.prepare(s, sidecars.get(s.id)) for s in samples]


def build_vocab(samples, config: RunConfig) -> list[str]:
    """Sorted surface vocabulary over every sequence the model will see."""
    seen: set[str] = set()
    for sample in samples:
        for i, doc in enumerate(sample.documents):
            seen.update(t.surface for t in tokenize(doc, doc_index=i,
                                                    max_tokens=config.max_doc_tokens))
        for cand in sample.candidates:
            seen.update(t.surface for t in tokenize(cand))
        seen.update(
            t.surface
            for t in tokenize(f"{sample.relation} {sample.subject}".strip(),
                              max_tokens=config.max_query_tokens)
        )
    return sorted(seen)


class Model:
    """Parameters plus the forward pass over a PreparedSample."""

    def __init__(self, config: RunConfig, preprocessor: Preprocessor,
                 vocab: list[str] | None = None):
        self.config = config
        self.preprocessor = preprocessor
        self.vocab = list(vocab) if vocab else None
        rng = np.random.default_rng(config.seed)
        h = config.hidden_size
        two_h = config.node_width
        in_dim = config.word_dim + config.char_dim
        k = config.heads
        dh = two_h // k

        def param(arr) -> Tensor:
            return Tensor(arr, requires_grad=True)

        def lstm(input_dim: int) -> LstmParams:
            return LstmParams(
                wx=param(glorot(rng, (input_dim, 4 * h), input_dim, 4 * h)),
                wh=param(glorot(rng, (h, 4 * h), h, 4 * h)),
                wc=param(np.zeros(4 * h)),
                b=param(np.zeros(4 * h)),
            )

        self.enc_doc = (lstm(in_dim), lstm(in_dim))
        self.enc_cand = (lstm(in_dim), lstm(in_dim))
        self.enc_query = (lstm(in_dim), lstm(in_dim))
        self.enc_gate = (lstm(two_h), lstm(two_h))

        self.coatt = CoattentionParams(
            fuse_w=param(glorot(rng, (two_h, two_h), two_h, two_h)),
            fuse_b=param(np.zeros(two_h)),
            mlp_w1=param(glorot(rng, (2 * two_h, two_h), 2 * two_h, two_h)),
            mlp_b1=param(np.zeros(two_h)),
            mlp_w2=param(glorot(rng, (two_h, 1), two_h, 1)),
            mlp_b2=param(np.zeros(1)),
            proj_w=param(glorot(rng, (2 * two_h, two_h), 2 * two_h, two_h)),
            proj_b=param(np.zeros(two_h)),
            span_w=param(glorot(rng, (two_h, two_h), two_h, two_h)),
            span_b=param(np.zeros(two_h)),
        )
        self.gat = GatLayerParams(
            relations={
                kind: RelationParams(
                    w=param(glorot(rng, (two_h, two_h), two_h, two_h)),
                    a_src=param(glorot(rng, (k, dh), dh, 1)),
                    a_dst=param(glorot(rng, (k, dh), dh, 1)),
                )
                for kind in EDGE_KINDS
            },
            heads=k,
        )
        self.gates = GateParams(
            wq=param(glorot(rng, (2 * two_h, 1), 2 * two_h, 1)),
            ws=param(glorot(rng, (2 * two_h, 1), 2 * two_h, 1)),
            fg_w=param(glorot(rng, (2 * two_h, 1), 2 * two_h, 1)),
            fg_b=param(np.zeros(1)),
        )
        self.heads = OutputHeads(
            can_w1=param(glorot(rng, (two_h, two_h), two_h, two_h)),
            can_b1=param(np.zeros(two_h)),
            can_w2=param(glorot(rng, (two_h, 1), two_h, 1)),
            can_b2=param(np.zeros(1)),
            men_w1=param(glorot(rng, (two_h, two_h), two_h, two_h)),
            men_b1=param(np.zeros(two_h)),
            men_w2=param(glorot(rng, (two_h, 1), two_h, 1)),
            men_b2=param(np.zeros(1)),
            gamma=config.gamma,
        )
        self.embed_word: Tensor | None = None
        self.embed_char: Tensor | None = None
        if config.trainable_embeddings:
            if not self.vocab:
                raise DataError("trainable embeddings need a vocabulary")
            word_init = np.stack(
                [preprocessor.word_table.lookup(tok) for tok in self.vocab]
            )
            self.embed_word = param(word_init)
            self.embed_char = param(preprocessor.char_embedder.table.copy())

    # -- parameter registry --------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, pair in (("enc_doc", self.enc_doc), ("enc_cand", self.enc_cand),
                           ("enc_query", self.enc_query), ("enc_gate", self.enc_gate)):
            out.update(pair[0].named(f"{name}.fwd"))
            out.update(pair[1].named(f"{name}.bwd"))
        out.update(self.coatt.named("coatt"))
        out.update(self.gat.named("gat"))
        out.update(self.gates.named("gate"))
        out.update(self.heads.named("heads"))
        if self.embed_word is not None:
            out["embed.word"] = self.embed_word
            out["embed.char"] = self.embed_char
        return out

    def load_parameters(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        if missing or extra:
            raise DataError(
                f"checkpoint/model parameter mismatch: missing {sorted(missing)[:3]}, "
                f"extra {sorted(extra)[:3]}"
            )
        for name, tensor in params.items():
            if arrays[name].shape != tensor.data.shape:
                raise DataError(
                    f"checkpoint parameter {name} has shape {arrays[name].shape}, "
                    f"expected {tensor.data.shape}"
                )
            tensor.data = arrays[name].astype(np.float64)

    # -- forward -------------------------------------------------------------

    def _embed(self, seq: SeqData) -> Tensor:
        if seq.embedded is not None:
            return ops.constant(seq.embedded)
        word_rows = ops.gather_rows(self.embed_word, seq.word_ids)
        char_rows = ops.segment_mean_rows(self.embed_char, seq.gram_flat, seq.gram_ptr)
        return ops.concat([word_rows, char_rows], axis=1)

    def forward(self, prepared: PreparedSample, train: bool = False,
                rng: np.random.Generator | None = None,
                capture: dict | None = None,
                force_query_mix: float | None = None,
                force_general_mix: float | None = None) -> Tensor:
        """Per-candidate scores for one sample."""
        cfg = self.config
        h_query = bilstm_encode(self._embed(prepared.query_seq), *self.enc_query)
        h_docs = [bilstm_encode(self._embed(s), *self.enc_doc) for s in prepared.doc_seqs]
        h_cands = [bilstm_encode(self._embed(s), *self.enc_cand) for s in prepared.cand_seqs]
        coatt_docs = [coattention(hd, h_query, self.coatt) for hd in h_docs]
        coatt_cands = [coattention(hc, h_query, self.coatt) for hc in h_cands]
        graph, feats = featurize_nodes(prepared.graph, coatt_docs, coatt_cands, self.coatt)
        gtensors = prepared.gtensors
        if graph is not prepared.graph:
            gtensors = prepare_graph_tensors(
                graph, blocked_kinds=cfg.blocked_node_kinds,
                neighbor_mean=cfg.neighbor_mean,
            )
        if cfg.gat_off:
            final = feats
        else:
            gate_query = bilstm_encode(h_query, *self.enc_gate)
            alpha_capture = {} if capture is not None else None
            final = run_hops(
                feats, gtensors, self.gat, self.gates, gate_query,
                hops=cfg.hops, dropout=cfg.dropout, rng=rng, train=train,
                force_query_mix=force_query_mix,
                force_general_mix=force_general_mix,
                capture=alpha_capture,
            )
            if capture is not None:
                capture["alpha"] = alpha_capture
        detail = {} if capture is not None else None
        scores = score_candidates(final, graph, self.heads, detail=detail)
        if capture is not None:
            capture["graph"] = graph
            capture["gtensors"] = gtensors
            capture["scores"] = scores.data.copy()
            capture["detail"] = detail
        return scores

    def loss(self, prepared: PreparedSample, train: bool = False,
             rng: np.random.Generator | None = None) -> Tensor:
        if prepared.answer_index is None:
            raise DataError(f"sample {prepared.sample.id} has no answer to train on")
        scores = self.forward(prepared, train=train, rng=rng)
        return nll_loss(scores, prepared.answer_index)
