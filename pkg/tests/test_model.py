import math

import numpy as np
import pytest

from latentchat import text as tx
from latentchat.config import Config
from latentchat.corpus import Turn
from latentchat.model import (DecoderModel, LatentNets, beam_search,
                              encode_sequence, forward_logits,
                              generate_candidates, inject_latent,
                              score_candidates)
from latentchat.tensor import ContractError, Tensor
from latentchat.text import Vocab, context_token_ids, mask_user_turns, tokenize_text


@pytest.fixture(scope="module")
def cfg():
    return Config(d_model=32, d_ff=64, layers=2, heads=2, d_latent=8,
                  vocab_size=30, max_len=64, variant="dlvgen")


@pytest.fixture(scope="module")
def vocab():
    return Vocab(["hello", "i", "love", "food", ".", "!", "?", "fishing",
                  "what", "do", "you", "like"])


@pytest.fixture(scope="module")
def model(cfg, vocab):
    cfg.vocab_size = len(vocab)
    return DecoderModel(cfg, np.random.default_rng(0))


class TestTokenizer:
    def test_punct_split(self):
        assert tokenize_text("Hello!") == ["hello", "!"]

    def test_sentence(self):
        assert tokenize_text("i love food.") == ["i", "love", "food", "."]

    def test_oov_maps_to_unk(self, vocab):
        assert vocab.encode("zyzzyva")[0] == tx.UNK

    def test_round_trip(self, vocab):
        text = "i love food ."
        assert vocab.decode(vocab.encode(text)) == text

    def test_vocab_file_round_trip(self, vocab, tmp_path):
        p = tmp_path / "vocab.txt"
        vocab.save(p)
        again = Vocab.load(p)
        assert again.id_to_token == vocab.id_to_token


class TestMaskUserTurns:
    def test_drops_user_turns(self, vocab):
        turns = [Turn("user", "hello !"), Turn("agent", "i love food ."),
                 Turn("user", "what ?")]
        ids = mask_user_turns(vocab, turns)
        assert ids[0] == tx.SEP_AGENT
        assert tx.SEP_USER not in ids
        assert vocab.decode(ids) == "i love food ."

    def test_all_user_sentinel(self, vocab):
        assert mask_user_turns(vocab, [Turn("user", "hello !")]) == [tx.SEP_AGENT]

    def test_interleaved(self, vocab):
        turns = [Turn("agent", "hello !"), Turn("user", "what ?"),
                 Turn("agent", "i love fishing .")]
        ids = mask_user_turns(vocab, turns)
        assert ids.count(tx.SEP_AGENT) == 2

    def test_untagged_turn(self, vocab):
        with pytest.raises(ContractError):
            mask_user_turns(vocab, [Turn("narrator", "hello")])


class TestEncodeSequence:
    def test_single_token_pool_of_one(self, model, vocab):
        ids = vocab.encode("hello")
        emb = encode_sequence(model, ids)
        assert emb.shape == (model.cfg.d_model,)

    def test_deterministic(self, model, vocab):
        ids = vocab.encode("i love food .")
        a = encode_sequence(model, ids)
        b = encode_sequence(model, ids)
        assert np.array_equal(a.data, b.data)

    def test_pad_invariance(self, model, vocab):
        from latentchat.model import encode_sequences

        ids = vocab.encode("i love food .")
        plain = encode_sequence(model, ids).data
        padded = encode_sequences(model, [ids, ids + [tx.PAD] * 5])
        np.testing.assert_allclose(padded.data[0], plain, atol=1e-9)
        np.testing.assert_allclose(padded.data[1], plain, atol=1e-9)

    def test_empty_rejected(self, model):
        with pytest.raises(ContractError):
            encode_sequence(model, [])


class TestInjectLatent:
    def test_zero_injection_matches_plain(self, model, vocab):
        ctx = vocab.encode("i love food .")
        model_zero_w = model.w_lv.data.copy()
        model_zero_b = model.b_lv.data.copy()
        model.w_lv.data[...] = 0.0
        model.b_lv.data[...] = 0.0
        try:
            d = model.cfg.d_latent
            v = inject_latent(model, Tensor(np.ones(d)), Tensor(np.ones(d)))
            with_v = forward_logits(model, ctx, vocab.encode("hello"), v)
            without = forward_logits(model, ctx, vocab.encode("hello"), None)
            assert np.array_equal(with_v.data, without.data)
        finally:
            model.w_lv.data[...] = model_zero_w
            model.b_lv.data[...] = model_zero_b

    def test_zero_latents_give_bias(self, model):
        d = model.cfg.d_latent
        model.b_lv.data[...] = np.arange(model.cfg.d_model, dtype=float)
        try:
            v = inject_latent(model, Tensor(np.zeros(d)), Tensor(np.zeros(d)))
            np.testing.assert_array_equal(v.data, model.b_lv.data)
        finally:
            model.b_lv.data[...] = 0.0

    def test_output_length_is_d_model(self, model):
        d = model.cfg.d_latent
        v = inject_latent(model, Tensor(np.zeros(d)), Tensor(np.zeros(d)))
        assert v.shape == (model.cfg.d_model,)

    def test_dim_mismatch(self, model):
        with pytest.raises(ContractError):
            inject_latent(model, Tensor(np.zeros(3)), Tensor(np.zeros(3)))


class TestForwardLogits:
    def test_shapes_and_determinism(self, model, vocab):
        ctx = vocab.encode("what do you like ?")
        prefix = vocab.encode("i love")
        a = forward_logits(model, ctx, prefix)
        assert a.shape == (len(prefix) + 1, model.cfg.vocab_size)
        b = forward_logits(model, ctx, prefix)
        assert np.array_equal(a.data, b.data)

    def test_causality(self, model, vocab):
        ctx = vocab.encode("what do you like ?")
        p1 = vocab.encode("i love food")
        p2 = vocab.encode("i love fishing")  # differs only at the last token
        a = forward_logits(model, ctx, p1)
        b = forward_logits(model, ctx, p2)
        np.testing.assert_array_equal(a.data[:3], b.data[:3])

    def test_left_truncation_keeps_response(self, model, vocab):
        long_ctx = vocab.encode("hello ! " * 60)
        prefix = vocab.encode("i love food")
        out = forward_logits(model, long_ctx, prefix)
        assert out.shape[0] == len(prefix) + 1


class MarkovStub:
    """Next-token distribution depends only on the previous token; lets the
    tests enumerate every sequence exactly."""

    class _Cfg:
        max_len = 32
        vocab_size = 8
        d_model = 4

    cfg = _Cfg()

    def __init__(self, table):
        self.table = table  # prev_token -> {tok: prob}
        self._ids = None

    def forward_hidden(self, ids, mask, v=None):
        self._ids = ids
        return Tensor(np.zeros(ids.shape + (1,)))

    def logits(self, hidden):
        B, T = self._ids.shape
        out = np.full((B, T, self.cfg.vocab_size), -1e9)
        for b in range(B):
            for t in range(T):
                dist = self.table.get(int(self._ids[b, t]), {})
                for tok, prob in dist.items():
                    out[b, t, tok] = math.log(prob)
        return Tensor(out)


class TestBeamSearch:
    A, B_, C, D, E = 4, 5, 6, 7, 3  # E reuses UNK id as filler

    def trap_model(self):
        # greedy takes A then ties at 0.5; the better path is B -> D (0.38)
        table = {
            tx.BOS: {self.A: 0.6, self.B_: 0.4},
            self.A: {self.C: 0.5, self.E: 0.5},
            self.B_: {self.D: 0.95, self.C: 0.05},
            self.C: {tx.EOS: 1.0},
            self.D: {tx.EOS: 1.0},
            self.E: {tx.EOS: 1.0},
        }
        return MarkovStub(table)

    def enumerate_best(self, model, length=2):
        # independent oracle: score every 2-token sequence + EOS exactly
        best, best_score = None, -np.inf
        toks = [self.A, self.B_, self.C, self.D, self.E]
        for t1 in toks:
            for t2 in toks:
                p1 = model.table.get(tx.BOS, {}).get(t1, 0.0)
                p2 = model.table.get(t1, {}).get(t2, 0.0)
                pe = model.table.get(t2, {}).get(tx.EOS, 0.0)
                if p1 * p2 * pe == 0.0:
                    continue
                score = (math.log(p1) + math.log(p2) + math.log(pe)) / 3
                if score > best_score:
                    best, best_score = [t1, t2], score
        return best

    def test_beam_two_recovers_global_best(self):
        model = self.trap_model()
        oracle = self.enumerate_best(model)
        assert oracle == [self.B_, self.D]
        assert beam_search(model, [self.A], beam=2) == oracle

    def test_greedy_falls_into_trap(self):
        model = self.trap_model()
        greedy = beam_search(model, [self.A], beam=1)
        assert greedy == [self.A, self.E]  # tie at 0.5 -> lower token id

    def test_beam_one_equals_greedy_on_real_model(self, model, vocab):
        ctx = vocab.encode("hello !")
        assert beam_search(model, ctx, beam=1, max_len=8) == \
            beam_search(model, ctx, beam=1, max_len=8)

    def test_immediate_eos(self):
        stub = MarkovStub({tx.BOS: {tx.EOS: 1.0}})
        assert beam_search(stub, [self.A], beam=3) == []

    def test_beam_never_worse_than_greedy(self, model, vocab):
        from latentchat.model import _beam_search_scored

        for text in ["hello !", "i love food .", "what do you like ?"]:
            ctx = vocab.encode(text)
            _, s1 = _beam_search_scored(model, ctx, None, 1, 12)
            toks = beam_search(model, ctx, beam=3, max_len=12)
            # recompute the returned hypothesis' normalized score via greedy scorer
            _, s3 = _beam_search_scored(model, ctx, None, 3, 12)
            assert max(s1, s3) >= s1


class TestGenerateCandidates:
    def make_nets(self, cfg):
        return LatentNets.build(cfg, np.random.default_rng(1))

    def test_n_one(self, model, vocab, cfg):
        nets = self.make_nets(cfg)
        turns = [Turn("user", "hello !")]
        cs = generate_candidates(model, nets, vocab, turns, cfg,
                                 np.random.default_rng(0), n=1)
        assert len(cs.candidates) == 1
        assert cs.selected_index == 0

    def test_seed_determinism(self, model, vocab, cfg):
        nets = self.make_nets(cfg)
        turns = [Turn("user", "what do you like ?")]
        a = generate_candidates(model, nets, vocab, turns, cfg, np.random.default_rng(7))
        b = generate_candidates(model, nets, vocab, turns, cfg, np.random.default_rng(7))
        assert [c.text for c in a.candidates] == [c.text for c in b.candidates]
        assert a.selected_index == b.selected_index

    def test_plain_variant_identical_candidates(self, model, vocab):
        cfg2 = Config(d_model=32, d_ff=64, layers=2, heads=2, d_latent=8,
                      vocab_size=model.cfg.vocab_size, max_len=64, variant="plain")
        nets = self.make_nets(cfg2)
        turns = [Turn("user", "hello !")]
        cs = generate_candidates(model, nets, vocab, turns, cfg2,
                                 np.random.default_rng(0), n=3)
        texts = {c.text for c in cs.candidates}
        assert len(texts) == 1

    def test_score_candidates_empty_text(self):
        cs = score_candidates(["", "a b c d"], h=0.72, w=4)
        assert cs.candidates[0].combined == 0.0
        assert cs.selected_index == 1
