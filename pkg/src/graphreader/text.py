"""Text ingestion: tokenization, samples, embeddings, synthetic corpora.

File formats owned by this module:

* dataset JSON: an array of objects ``{id, query, candidates, supports,
  answer?, annotations?}`` where ``query`` is "relation subject tokens...",
  ``candidates``/``answer`` are strings, ``supports`` a list of document
  strings, and ``annotations`` a list of per-annotator ``[fact, docs]``
  pairs with fact in {follows, likely, not_follows} and docs in
  {single, multiple};
* embedding text files: one line per token, "token v1 v2 ... vD".
"""

from __future__ import annotations

import hashlib
import json
import re
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ParseError

# A token is a maximal run of word characters or one single other
# non-space character, so punctuation detaches and accession-style ids
# (db00007) survive intact.
_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+|[^\sA-Za-z0-9_]")

_FACT_LABELS = ("follows", "likely", "not_follows")
_DOC_LABELS = ("single", "multiple")


@dataclass(frozen=True)
class Token:
    """One tokenizer output: lowercased surface plus provenance.

    char_span is a [start, end) slice into the original document, so
    ``text[start:end].lower() == surface`` always holds.
    """

    surface: str
    doc_index: int
    position: int
    char_span: tuple[int, int]


@dataclass
class Sample:
    """One reading-comprehension instance."""

    id: str
    relation: str
    subject: str
    candidates: list[str]
    documents: list[str]
    answer: str | None = None
    annotations: list[tuple[str, str]] | None = None


def tokenize(text: str, doc_index: int = 0, max_tokens: int | None = None) -> list[Token]:
    """Lowercasing rule tokenizer; empty text gives an empty list."""
    tokens: list[Token] = []
    for m in _TOKEN_RE.finditer(text):
        if max_tokens is not None and len(tokens) >= max_tokens:
            break
        tokens.append(
            Token(m.group(0).lower(), doc_index, len(tokens), (m.start(), m.end()))
        )
    return tokens


def surfaces(tokens) -> list[str]:
    return [t.surface for t in tokens]


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


def _parse_annotations(raw, sample_id: str):
    out = []
    for entry in raw:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise DataError(f"sample {sample_id}: annotation entries must be [fact, docs] pairs")
        fact, docs = entry
        if fact not in _FACT_LABELS or docs not in _DOC_LABELS:
            raise DataError(f"sample {sample_id}: bad annotation labels {entry!r}")
        out.append((fact, docs))
    return out


def sample_from_dict(obj: dict) -> Sample:
    sample_id = str(obj.get("id", "<missing id>"))
    try:
        query = obj["query"]
        candidates = [c.lower() for c in obj["candidates"]]
        documents = list(obj["supports"])
    except KeyError as exc:
        raise DataError(f"sample {sample_id}: missing field {exc}") from exc
    if len(candidates) < 2:
        raise DataError(f"sample {sample_id}: needs at least 2 candidates")
    if not documents:
        raise DataError(f"sample {sample_id}: empty support documents")
    parts = query.split(None, 1)
    relation = parts[0] if parts else ""
    subject = parts[1].lower() if len(parts) > 1 else ""
    answer = obj.get("answer")
    if answer is not None:
        answer = answer.lower()
        if answer not in candidates:
            raise DataError(f"sample {sample_id}: answer not among candidates")
    annotations = obj.get("annotations")
    if annotations is not None:
        annotations = _parse_annotations(annotations, sample_id)
    return Sample(
        id=sample_id,
        relation=relation,
        subject=subject,
        candidates=candidates,
        documents=documents,
        answer=answer,
        annotations=annotations,
    )


def sample_to_dict(sample: Sample) -> dict:
    obj = {
        "id": sample.id,
        "query": f"{sample.relation} {sample.subject}".strip(),
        "candidates": list(sample.candidates),
        "supports": list(sample.documents),
    }
    if sample.answer is not None:
        obj["answer"] = sample.answer
    if sample.annotations is not None:
        obj["annotations"] = [list(a) for a in sample.annotations]
    return obj


def load_qangaroo(path) -> list[Sample]:
    """Read a dataset JSON file into Samples."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise DataError(f"{path}: expected a JSON array of samples")
    return [sample_from_dict(obj) for obj in raw]


def save_qangaroo(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([sample_to_dict(s) for s in samples], fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------


def _stable_seed(seed: int, key: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{key}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class EmbeddingTable:
    """Word-vector lookup with deterministic out-of-vocabulary fallback.

    Unknown tokens get a pseudo-random vector seeded by (seed, token), so
    the same token maps to the same vector in every run of the same seed.
    """

    def __init__(self, dim: int, vectors: dict[str, np.ndarray] | None = None,
                 seed: int = 0, trainable: bool = False):
        self.dim = dim
        self.vectors = dict(vectors or {})
        self.seed = seed
        self.trainable = trainable
        self._oov_cache: dict[str, np.ndarray] = {}

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def lookup(self, token: str) -> np.ndarray:
        vec = self.vectors.get(token)
        if vec is not None:
            return vec
        vec = self._oov_cache.get(token)
        if vec is None:
            rng = np.random.default_rng(_stable_seed(self.seed, token))
            vec = rng.uniform(-0.5, 0.5, self.dim)
            self._oov_cache[token] = vec
        return vec


def load_embeddings(path, dim: int, seed: int = 0, trainable: bool = False) -> EmbeddingTable:
    """Parse a text embedding file; every line must carry exactly dim values."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise ParseError(
                    f"{path}: line {lineno}: expected token + {dim} values, got {len(parts) - 1}"
                )
            try:
                vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    return EmbeddingTable(dim, vectors, seed=seed, trainable=trainable)


class CharNgramEmbedder:
    """Hashed character 2-4-gram embeddings, averaged per token.

    Grams hash into a fixed bucket table (crc32, stable across runs). A
    single-character token is padded to yield one 2-gram so every token
    has at least one gram.
    """

    PAD = "\x00"

    def __init__(self, dim: int = 100, buckets: int = 2 ** 15, seed: int = 0):
        self.dim = dim
        self.buckets = buckets
        rng = np.random.default_rng(_stable_seed(seed, "char-table"))
        self.table = rng.uniform(-0.5, 0.5, (buckets, dim))
        self._gram_cache: dict[str, np.ndarray] = {}

    def gram_ids(self, surface: str) -> np.ndarray:
        ids = self._gram_cache.get(surface)
        if ids is not None:
            return ids
        s = surface if len(surface) >= 2 else surface + self.PAD
        grams = []
        for n in (2, 3, 4):
            grams.extend(s[i : i + n] for i in range(len(s) - n + 1))
        ids = np.array(
            [zlib.crc32(g.encode("utf-8")) % self.buckets for g in grams],
            dtype=np.int64,
        )
        self._gram_cache[surface] = ids
        return ids

    def vector(self, surface: str) -> np.ndarray:
        return self.table[self.gram_ids(surface)].mean(axis=0)


def embed_token(token: Token, word_table: EmbeddingTable,
                char_embedder: CharNgramEmbedder) -> np.ndarray:
    """Concatenated word + character vector, width d_w + d_c."""
    return np.concatenate(
        [word_table.lookup(token.surface), char_embedder.vector(token.surface)]
    )


# ---------------------------------------------------------------------------
# synthetic multi-hop corpus
# ---------------------------------------------------------------------------

_CONSONANTS = "bcdfgklmnprstvz"
_VOWELS = "aeiou"
_FILLER = (
    "near", "the", "old", "quiet", "harbor", "beside", "a", "small",
    "garden", "along", "worn", "stone", "path", "gate",
)
RELATION = "relates"


def _entity_pool(rng: np.random.Generator, size: int) -> list[str]:
    pool: list[str] = []
    seen = set(_FILLER) | {RELATION, "unlike"}
    while len(pool) < size:
        n_syll = int(rng.integers(2, 4))
        word = "".join(
            _CONSONANTS[int(rng.integers(len(_CONSONANTS)))]
            + _VOWELS[int(rng.integers(len(_VOWELS)))]
            for _ in range(n_syll)
        )
        if word not in seen:
            seen.add(word)
            pool.append(word)
    return pool


def _chain_docs(chains, subject: str, candidates, rng) -> list[str]:
    docs = []
    for ci, chain in enumerate(chains):
        hop_length = len(chain) - 1
        for k in range(hop_length):
            head, tail = chain[k], chain[k + 1]
            words = [head.capitalize(), RELATION, tail.capitalize()]
            n_fill = int(rng.integers(0, 4))
            words += [_FILLER[int(rng.integers(len(_FILLER)))] for _ in range(n_fill)]
            # Docs that carry neither the subject nor a candidate would be
            # invisible to span extraction; give them a noise mention,
            # which doubles as a distractor.
            if head != subject and k != hop_length - 1:
                other = candidates[(ci + 1) % len(candidates)]
                words += ["unlike", other.capitalize()]
            words.append(".")
            docs.append(" ".join(words))
    return docs


def gen_synthetic(seed: int, count: int, hop_length: int, n_candidates: int = 5,
                  vocab_size: int = 24) -> list[Sample]:
    """Generate entity-chain samples whose answer needs every chain document.

    Each sample holds one "A relates B" chain per candidate, all of equal
    length; only the correct candidate's chain starts at the query
    subject, so dropping any chain document leaves the answer
    underdetermined.

    Samples come in twin pairs that differ in exactly two tokens yet flip
    the answer: tail-swap twins trade which candidates end the first two
    chains, head-swap twins reroute the subject through the other chain's
    bridge. Together with heavy entity reuse across samples (the default
    vocabulary is small on purpose), this contradicts every shortcut that
    scores candidates without composing evidence across documents: a
    document-blind scorer cannot even fit the training corpus, and
    single-document associations (subject-bridge-candidate triples) flip
    between twins. Output is deterministic under the seed.
    """
    if hop_length < 1:
        raise ConfigError("hop_length must be >= 1")
    if n_candidates < 2:
        raise ConfigError("n_candidates must be >= 2")
    per_sample = n_candidates * (hop_length + 1)
    if vocab_size < per_sample:
        raise ConfigError(
            f"vocab_size {vocab_size} too small for {per_sample} distinct entities per sample"
        )
    rng = np.random.default_rng(seed)
    pool = _entity_pool(rng, vocab_size)
    samples: list[Sample] = []

    def emit(index: int, subject: str, answer: str, candidates, docs) -> None:
        doc_order = rng.permutation(len(docs))
        cand_order = rng.permutation(len(candidates))
        samples.append(
            Sample(
                id=f"synth-{seed}-{index:04d}",
                relation=RELATION,
                subject=subject,
                candidates=[candidates[j] for j in cand_order],
                documents=[docs[j] for j in doc_order],
                answer=answer,
            )
        )

    i = 0
    tail_swap = True
    while i < count:
        picks = rng.permutation(vocab_size)[:per_sample]
        chains = [
            [pool[j] for j in picks[c * (hop_length + 1):(c + 1) * (hop_length + 1)]]
            for c in range(n_candidates)
        ]
        # Entities are drawn without replacement, so the chains are
        # vertex-disjoint and the subject occurs in exactly one document.
        assert len({e for c in chains for e in c}) == per_sample
        subject = chains[0][0]
        candidates = [c[-1] for c in chains]
        docs = _chain_docs(chains, subject, candidates, rng)
        emit(i, subject, chains[0][-1], candidates, docs)
        i += 1
        if i < count:
            # The twin differs in exactly two tokens and flips the answer.
            twin_docs = list(docs)
            if tail_swap or hop_length == 1:
                # last docs of the first two chains trade their tails
                t0 = hop_length - 1
                t1 = 2 * hop_length - 1
                twin_docs[t0] = _swap_object(docs[t0], chains[1][-1])
                twin_docs[t1] = _swap_object(docs[t1], chains[0][-1])
            else:
                # first docs trade their bridges: the subject now leads
                # into the second chain and vice versa
                h0 = 0
                h1 = hop_length
                twin_docs[h0] = _swap_object(docs[h0], chains[1][1])
                twin_docs[h1] = _swap_object(docs[h1], chains[0][1])
            emit(i, subject, chains[1][-1], candidates, twin_docs)
            i += 1
            tail_swap = not tail_swap
    return samples


def _swap_object(doc: str, new_object: str) -> str:
    """Replace the object of the leading "Subject relates Object" clause."""
    words = doc.split(" ")
    words[2] = new_object.capitalize()
    return " ".join(words)
