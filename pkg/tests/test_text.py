"""Tokenizer, dataset I/O, embeddings, synthetic corpus generator."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphreader.errors import ConfigError, DataError, ParseError
from graphreader.text import (CharNgramEmbedder, EmbeddingTable, Sample,
                              embed_token, gen_synthetic, load_embeddings,
                              load_qangaroo, save_qangaroo, tokenize)


class TestTokenize:
    def test_sentence(self):
        toks = tokenize("Hampton Wick is in London.")
        assert [t.surface for t in toks] == ["hampton", "wick", "is", "in", "london", "."]

    def test_empty(self):
        assert tokenize("") == []

    def test_accession_numbers_survive(self):
        assert [t.surface for t in tokenize("DB00007 interacts")] == ["db00007", "interacts"]

    def test_offsets_reconstruct_source(self):
        text = "A-b c,, d!"
        for tok in tokenize(text):
            s, e = tok.char_span
            assert text[s:e].lower() == tok.surface

    def test_positions_strictly_increasing(self):
        toks = tokenize("a b c d")
        assert [t.position for t in toks] == [0, 1, 2, 3]

    def test_truncation(self):
        assert len(tokenize("a b c d e", max_tokens=3)) == 3

    @given(st.text(min_size=0, max_size=80))
    @settings(max_examples=120, deadline=None)
    def test_offset_invariant_holds_for_arbitrary_text(self, text):
        for tok in tokenize(text):
            s, e = tok.char_span
            assert s < e
            assert text[s:e].lower() == tok.surface


class TestDatasetIO:
    def _write(self, tmp_path, payload):
        path = tmp_path / "data.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    def test_query_split_and_lowercasing(self, tmp_path):
        path = self._write(tmp_path, [{
            "id": "WH_1",
            "query": "located_in_the_administrative_territorial_entity hampton wick war memorial",
            "candidates": ["London Borough of Richmond upon Thames", "Greater London"],
            "supports": ["Hampton Wick is a Thames-side area."],
            "answer": "London Borough of Richmond upon Thames",
        }])
        (sample,) = load_qangaroo(path)
        assert sample.relation == "located_in_the_administrative_territorial_entity"
        assert sample.subject == "hampton wick war memorial"
        assert sample.answer == "london borough of richmond upon thames"
        assert sample.answer in sample.candidates

    def test_answer_outside_candidates(self, tmp_path):
        path = self._write(tmp_path, [{
            "id": "bad-1", "query": "r s", "candidates": ["a", "b"],
            "supports": ["doc"], "answer": "c",
        }])
        with pytest.raises(DataError, match="bad-1"):
            load_qangaroo(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("[{", encoding="utf-8")
        with pytest.raises(ParseError):
            load_qangaroo(path)

    def test_round_trip_identity(self, tmp_path):
        samples = gen_synthetic(seed=11, count=4, hop_length=2, n_candidates=3,
                                vocab_size=30)
        samples[0].annotations = [("follows", "multiple")] * 3
        path = tmp_path / "rt.json"
        save_qangaroo(samples, path)
        loaded = load_qangaroo(path)
        for a, b in zip(samples, loaded):
            assert (a.id, a.relation, a.subject, a.candidates, a.documents,
                    a.answer, a.annotations) == \
                   (b.id, b.relation, b.subject, b.candidates, b.documents,
                    b.answer, b.annotations)

    def test_bad_annotation_labels(self, tmp_path):
        path = self._write(tmp_path, [{
            "id": "x", "query": "r s", "candidates": ["a", "b"],
            "supports": ["doc"], "annotations": [["maybe", "multiple"]],
        }])
        with pytest.raises(DataError):
            load_qangaroo(path)


class TestEmbeddings:
    def test_load_and_lookup(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("the 0.1 0.2\ncat -1 2.5\n", encoding="utf-8")
        table = load_embeddings(path, dim=2)
        np.testing.assert_allclose(table.lookup("the"), [0.1, 0.2])

    def test_oov_deterministic(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("the 0.1 0.2\n", encoding="utf-8")
        table = load_embeddings(path, dim=2, seed=5)
        v1 = table.lookup("zzzunseen").copy()
        table2 = load_embeddings(path, dim=2, seed=5)
        np.testing.assert_array_equal(v1, table2.lookup("zzzunseen"))
        assert not np.array_equal(v1, EmbeddingTable(2, seed=6).lookup("zzzunseen"))

    def test_wrong_arity_names_line(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("the 0.1 0.2\nbroken 0.1\n", encoding="utf-8")
        with pytest.raises(ParseError, match="line 2"):
            load_embeddings(path, dim=2)

    def test_embed_token_width(self):
        table = EmbeddingTable(300, seed=0)
        chars = CharNgramEmbedder(dim=100, buckets=512, seed=0)
        (tok,) = tokenize("word")
        assert embed_token(tok, table, chars).shape == (400,)

    def test_single_character_token(self):
        table = EmbeddingTable(300, seed=0)
        chars = CharNgramEmbedder(dim=100, buckets=512, seed=0)
        (tok,) = tokenize("a")
        vec = embed_token(tok, table, chars)
        assert vec.shape == (400,)
        assert np.all(np.isfinite(vec))
        assert len(chars.gram_ids("a")) == 1

    def test_same_token_same_vector(self):
        table = EmbeddingTable(300, seed=0)
        chars = CharNgramEmbedder(dim=100, buckets=512, seed=0)
        t1, t2 = tokenize("dog dog")
        np.testing.assert_array_equal(embed_token(t1, table, chars),
                                      embed_token(t2, table, chars))


class TestSynthetic:
    def test_shape_and_uniqueness(self):
        samples = gen_synthetic(seed=7, count=50, hop_length=2, n_candidates=5,
                                vocab_size=60)
        assert len(samples) == 50
        for s in samples:
            assert len(s.candidates) == 5
            assert len(set(s.candidates)) == 5
            assert s.answer in s.candidates
            assert len(s.documents) == 10  # hop_length docs per candidate chain

    def test_deterministic(self):
        a = gen_synthetic(seed=3, count=6, hop_length=2, n_candidates=3, vocab_size=30)
        b = gen_synthetic(seed=3, count=6, hop_length=2, n_candidates=3, vocab_size=30)
        assert [s.__dict__ for s in a] == [s.__dict__ for s in b]

    def test_vocab_too_small(self):
        with pytest.raises(ConfigError):
            gen_synthetic(seed=0, count=1, hop_length=3, n_candidates=5, vocab_size=10)

    def test_chain_structure(self):
        """The answer is the unique candidate reachable from the subject."""
        samples = gen_synthetic(seed=1, count=8, hop_length=2, n_candidates=4,
                                vocab_size=40)
        for s in samples:
            links = {}
            for doc in s.documents:
                words = doc.lower().split(" ")
                links[words[0]] = words[2]
            node = s.subject
            for _ in range(2):
                node = links[node]
            assert node == s.answer
            # deleting any chain document breaks the derivation
            chain_heads = [s.subject, links[s.subject]]
            for head in chain_heads:
                pruned = dict(links)
                del pruned[head]
                walk = s.subject
                reached = True
                for _ in range(2):
                    if walk not in pruned:
                        reached = False
                        break
                    walk = pruned[walk]
                assert not reached

    def test_twin_pairs_flip_answers(self):
        samples = gen_synthetic(seed=2, count=10, hop_length=2, n_candidates=5,
                                vocab_size=60)
        for a, b in zip(samples[0::2], samples[1::2]):
            assert a.subject == b.subject
            assert sorted(a.candidates) == sorted(b.candidates)
            assert a.answer != b.answer
            assert sorted(a.documents) != sorted(b.documents)
