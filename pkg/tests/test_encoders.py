import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mentiondetect import autodiff as ad
from mentiondetect.corpus import Document
from mentiondetect.encoders import (BiRecurrentEncoder, CharConvEncoder, HashedEmbedding,
                                    PrecomputedVectors, TrainableLookup, align_pieces,
                                    embed_tokens, read_vectors, write_vectors)
from mentiondetect.exceptions import (AlignmentError, ContractError, DataError,
                                      FormatError)
from mentiondetect.gradcheck import grad_check


def _doc(*sentences, key="d0", pieces=None):
    return Document(key, [s.split() for s in sentences], pieces=pieces)


class TestProviders:
    def test_dimension_is_sum_of_providers(self):
        rng = np.random.default_rng(0)
        doc = _doc("the cat sat", "on a mat")
        out = embed_tokens(doc, [TrainableLookup(["the", "cat"], 4, rng),
                                 HashedEmbedding(16, 4, rng)])
        assert out.shape == (6, 8)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(["lookup", "hashed"]), st.integers(1, 9)),
                    min_size=1, max_size=4),
           st.booleans())
    def test_dimension_additivity(self, specs, with_char):
        rng = np.random.default_rng(1)
        doc = _doc("alpha beta gamma", "delta")
        providers = [TrainableLookup(["alpha"], d, rng) if kind == "lookup"
                     else HashedEmbedding(7, d, rng) for kind, d in specs]
        char = CharConvEncoder.from_documents([doc], rng, filters=3) if with_char else None
        out = embed_tokens(doc, providers, char)
        assert out.shape == (4, sum(d for _, d in specs) + (9 if with_char else 0))

    def test_default_lee_configuration_is_1474(self, tmp_path):
        rng = np.random.default_rng(0)
        doc = _doc("We respectfully invite you")
        write_vectors(tmp_path / doc.doc_key, doc.doc_key, rng.normal(size=(4, 1024)))
        providers = [TrainableLookup.from_documents([doc], 300, rng),
                     PrecomputedVectors(tmp_path, 1024)]
        char = CharConvEncoder.from_documents([doc], rng)
        assert char.dim == 150
        assert embed_tokens(doc, providers, char).shape == (4, 1474)

    def test_repeated_token_gets_identical_vectors(self):
        rng = np.random.default_rng(0)
        doc = _doc("a rose is a rose")
        for provider in (TrainableLookup(["rose", "a"], 5, rng), HashedEmbedding(50, 5, rng)):
            out = provider(doc).data
            np.testing.assert_array_equal(out[0], out[3])
            np.testing.assert_array_equal(out[1], out[4])

    def test_unknown_words_share_unk_row(self):
        lookup = TrainableLookup(["known"], 3, np.random.default_rng(0))
        out = lookup(_doc("x known y")).data
        np.testing.assert_array_equal(out[0], out[2])
        np.testing.assert_array_equal(out[0], lookup.table.data[0])

    def test_empty_provider_list_is_contract_error(self):
        with pytest.raises(ContractError):
            embed_tokens(_doc("a"), [])

    def test_frozen_providers_get_no_gradient(self, tmp_path):
        rng = np.random.default_rng(0)
        doc = _doc("one two three")
        write_vectors(tmp_path / "d0", "d0", rng.normal(size=(3, 2)))
        frozen = TrainableLookup(["one", "two"], 3, rng, frozen=True)
        live = TrainableLookup(["one", "two"], 3, rng)
        pre = PrecomputedVectors(tmp_path, 2)
        with ad.Tape() as tape:
            x = embed_tokens(doc, [frozen, pre, live])
            loss = ad.sum(ad.mul(x, x))
        tape.backward(loss)
        assert frozen.table.grad is None or not np.any(frozen.table.grad)
        assert frozen.parameters() == [] and pre.parameters() == []
        assert np.linalg.norm(live.table.grad) > 0


class TestVectorFiles:
    def test_round_trip_is_bit_exact_float32(self, tmp_path):
        vec = np.random.default_rng(0).normal(size=(5, 3)).astype(np.float32)
        write_vectors(tmp_path / "k", "k", vec)
        header, back = read_vectors(tmp_path / "k")
        assert header == {"dimension": 3, "doc_key": "k", "token_count": 5}
        assert back.dtype == np.dtype("<f4")
        np.testing.assert_array_equal(back, vec)

    def test_byte_layout(self, tmp_path):
        write_vectors(tmp_path / "k", "k", [[1.0, 2.0]])
        raw = (tmp_path / "k").read_bytes()
        head, body = raw.split(b"\n", 1)
        assert body == np.array([1.0, 2.0], dtype="<f4").tobytes()
        assert b'"dimension": 2' in head

    def test_missing_file_names_doc_and_token(self, tmp_path):
        with pytest.raises(DataError, match="'d0'.*token 0"):
            PrecomputedVectors(tmp_path, 2)(_doc("a b"))

    def test_too_few_records_names_token(self, tmp_path):
        write_vectors(tmp_path / "d0", "d0", np.zeros((2, 2)))
        with pytest.raises(DataError, match="token 2"):
            PrecomputedVectors(tmp_path, 2)(_doc("a b c"))

    def test_dimension_disagreement_is_format_error(self, tmp_path):
        write_vectors(tmp_path / "d0", "d0", np.zeros((2, 3)))
        with pytest.raises(FormatError):
            PrecomputedVectors(tmp_path, 2)(_doc("a b"))

    def test_truncated_body_is_format_error(self, tmp_path):
        write_vectors(tmp_path / "d0", "d0", np.zeros((2, 2)))
        path = tmp_path / "d0"
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError):
            read_vectors(path)

    def test_piece_level_file_uses_first_pieces(self, tmp_path):
        doc = _doc("We respectfully invite", pieces=[["We", "respect", "##fully", "invite"]])
        rows = np.arange(8, dtype=np.float32).reshape(4, 2)
        write_vectors(tmp_path / "d0", "d0", rows)
        np.testing.assert_array_equal(PrecomputedVectors(tmp_path, 2).vectors(doc),
                                      rows[[0, 1, 3]])


class TestAlignment:
    def test_respectfully_example(self):
        assert align_pieces(["We", "respectfully"], ["We", "respect", "##fully"]).tolist() == [0, 1]

    def test_single_pieces_give_identity(self):
        toks = ["a", "b", "c", "d"]
        assert align_pieces(toks, toks).tolist() == [0, 1, 2, 3]

    def test_three_piece_token_shifts_later_indices_by_two(self):
        toks = ["x", "unbelievable", "y", "z"]
        pieces = ["x", "un", "##believ", "##able", "y", "z"]
        assert align_pieces(toks, pieces).tolist() == [0, 1, 4, 5]

    def test_mismatch_reports_position(self):
        with pytest.raises(AlignmentError) as err:
            align_pieces(["a", "bc", "d"], ["a", "b", "##x", "d"])
        assert err.value.position == 1

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.text("abcdefgh", min_size=1, max_size=9), min_size=1, max_size=12),
           st.data())
    def test_random_segmentation_round_trip(self, tokens, data):
        pieces, firsts = [], []
        for tok in tokens:
            cuts = sorted(data.draw(st.sets(st.integers(1, max(1, len(tok) - 1)),
                                            max_size=len(tok) - 1)))
            cuts = [c for c in cuts if c < len(tok)]
            bounds = [0] + cuts + [len(tok)]
            firsts.append(len(pieces))
            for k, (a, b) in enumerate(zip(bounds, bounds[1:])):
                pieces.append(tok[a:b] if k == 0 else "##" + tok[a:b])
        assert align_pieces(tokens, pieces).tolist() == firsts


def _small_encoder(in_dim=3, hidden=4, layers=2, seed=0):
    return BiRecurrentEncoder(in_dim, np.random.default_rng(seed), hidden=hidden,
                              layers=layers, dropout=0.0)


class TestRecurrentEncoder:
    def test_output_dimension(self):
        enc = _small_encoder()
        x = ad.constant(np.random.default_rng(0).normal(size=(5, 3)))
        assert enc(x, [3, 2]).shape == (5, 8)
        assert BiRecurrentEncoder(7, np.random.default_rng(0)).out_dim == 400

    def test_single_token_sentence_is_one_step_each_way(self):
        enc = _small_encoder(layers=1)
        x = ad.constant(np.random.default_rng(0).normal(size=(1, 3)))
        out = enc(x, [1]).data
        fw, bw = enc.layers[0]
        steps = np.zeros((1, 1), dtype=np.int64)
        np.testing.assert_allclose(out[0, :4], fw.run(x, steps).data[0], atol=1e-15)
        np.testing.assert_allclose(out[0, 4:], bw.run(x, steps).data[0], atol=1e-15)

    def test_identical_sentences_give_identical_outputs(self):
        enc = _small_encoder()
        sent = np.random.default_rng(0).normal(size=(4, 3))
        out = enc(ad.constant(np.vstack([sent, sent])), [4, 4]).data
        np.testing.assert_allclose(out[:4], out[4:], rtol=0, atol=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.integers(1, 7), min_size=1, max_size=5), st.randoms())
    def test_sentence_permutation_permutes_outputs(self, lengths, rnd):
        enc = _small_encoder()
        x = np.random.default_rng(len(lengths)).normal(size=(sum(lengths), 3))
        starts = np.cumsum([0] + lengths[:-1])
        order = list(range(len(lengths)))
        rnd.shuffle(order)
        rows = np.concatenate([np.arange(starts[k], starts[k] + lengths[k]) for k in order])
        base = enc(ad.constant(x), lengths).data
        permuted = enc(ad.constant(x[rows]), [lengths[k] for k in order]).data
        np.testing.assert_allclose(permuted, base[rows], rtol=0, atol=1e-13)

    def test_direction_symmetry(self):
        enc = _small_encoder(layers=3)
        mirror = _small_encoder(layers=3)
        h = 4
        for k, ((fw, bw), (mf, mb)) in enumerate(zip(enc.layers, mirror.layers)):
            for src, dst in ((bw, mf), (fw, mb)):
                w_in = src.w_input.data
                if k > 0:  # upstream halves arrive as [backward; forward]
                    w_in = np.vstack([w_in[h:], w_in[:h]])
                dst.w_input.data[...] = w_in
                dst.w_hidden.data[...] = src.w_hidden.data
                dst.bias.data[...] = src.bias.data
        x = np.random.default_rng(2).normal(size=(6, 3))
        out = enc(ad.constant(x), [6]).data
        flipped = mirror(ad.constant(x[::-1].copy()), [6]).data[::-1]
        # swapping directions and reversing time swaps the two output halves
        np.testing.assert_allclose(flipped[:, :4], out[:, 4:], rtol=0, atol=1e-13)
        np.testing.assert_allclose(flipped[:, 4:], out[:, :4], rtol=0, atol=1e-13)

    def test_empty_sentence_is_skipped_with_warning(self, caplog):
        enc = _small_encoder()
        x = ad.constant(np.random.default_rng(0).normal(size=(3, 3)))
        with caplog.at_level(logging.WARNING):
            out = enc(x, [2, 0, 1]).data
        assert "empty" in caplog.text
        np.testing.assert_allclose(out, enc(x, [2, 1]).data, atol=0)

    def test_fused_matches_unfused_reference(self):
        enc = _small_encoder(layers=1)
        fw = enc.layers[0][0]
        x = ad.constant(np.random.default_rng(0).normal(size=(7, 3)))
        steps = np.array([[0, 1, 2, 3], [4, 5, 6, -1]])
        np.testing.assert_allclose(fw.run(x, steps).data, fw.run_unfused(x, steps).data[:],
                                   rtol=0, atol=1e-14)

    def test_gradcheck_three_layers_four_tokens(self):
        rng = np.random.default_rng(5)
        enc = _small_encoder(layers=3, seed=5)
        x = ad.parameter(rng.normal(size=(4, 3)), "x")
        w = rng.normal(size=(4, 8))

        def loss():
            return ad.sum(ad.mul(enc(x, [4]), ad.constant(w)))

        for r in grad_check(loss, [x] + enc.parameters(), max_elements=15):
            assert r.max_rel_error <= 1e-4, r

    def test_variational_mask_shared_within_sentence(self):
        enc = _small_encoder(layers=2)
        enc.dropout = 0.5
        x = ad.constant(np.ones((6, 3)))
        seen = []
        orig = ad.mul

        def spy(a, b):
            seen.append(b.data.copy())
            return orig(a, b)

        ad_mul, ad.mul = ad.mul, spy
        try:
            enc(x, [3, 3], training=True, rng=np.random.default_rng(0))
        finally:
            ad.mul = ad_mul
        mask = seen[0]
        np.testing.assert_array_equal(mask[0], mask[1])
        np.testing.assert_array_equal(mask[0], mask[2])
        np.testing.assert_array_equal(mask[3], mask[5])
