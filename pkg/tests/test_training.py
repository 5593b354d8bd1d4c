import io
import math

import numpy as np
import pytest

from latentchat.config import Config
from latentchat.corpus import generate_corpus
from latentchat.latent import LatentNetwork
from latentchat.model import DecoderModel, LatentNets
from latentchat.tensor import ContractError, Tensor, grad_check
from latentchat.text import Vocab
from latentchat.training import (BowHead, all_parameters, bow_loss,
                                 compute_loss, evaluate_recon, load_model,
                                 save_model, train)


def tiny_cfg(**overrides):
    base = dict(variant="dlvgen", d_model=32, d_ff=64, layers=2, heads=2,
                d_latent=8, vocab_size=200, max_len=64, batch=8, epochs=2,
                lr=1e-3, seed=0, kl_warmup_epochs=1)
    base.update(overrides)
    return Config(**base)


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(n_personas=4, n_dialogues=16, seed=0)


@pytest.fixture(scope="module")
def setup(corpus):
    cfg = tiny_cfg()
    texts = [t.text for d in corpus.train for t in d.turns]
    texts += [s for d in corpus.train for s in d.persona.statements]
    vocab = Vocab.from_texts(texts, max_size=cfg.vocab_size)
    cfg.vocab_size = len(vocab)
    rng = np.random.default_rng(0)
    return cfg, vocab, DecoderModel(cfg, rng), LatentNets.build(cfg, rng), BowHead(cfg, rng)


class TestBowLoss:
    def zero_head(self, d, V):
        cfg = tiny_cfg(d_latent=d, vocab_size=V)
        head = BowHead(cfg, np.random.default_rng(0))
        head.weight.data[...] = 0.0
        return head

    def test_uniform_logits_give_log_v(self):
        head = self.zero_head(2, 4)
        z = Tensor(np.zeros(2))
        val = float(bow_loss(head, z, z, [1, 3]).data)
        assert val == pytest.approx(math.log(4), abs=1e-12)

    def test_confident_head_near_zero(self):
        head = self.zero_head(2, 4)
        head.bias.data[2] = 1000.0
        z = Tensor(np.zeros(2))
        assert float(bow_loss(head, z, z, [2, 2]).data) == pytest.approx(0.0, abs=1e-9)

    def test_duplicates_count_per_occurrence(self):
        head = self.zero_head(2, 4)
        head.bias.data[...] = [0.0, 2.0, 0.0, 0.0]
        z = Tensor(np.zeros(2))
        one = float(bow_loss(head, z, z, [1]).data)
        rep = float(bow_loss(head, z, z, [1, 1]).data)
        mix = float(bow_loss(head, z, z, [1, 0]).data)
        assert rep == pytest.approx(one)
        assert mix > one  # token 0 is less likely than token 1
    def test_empty_response_rejected(self):
        head = self.zero_head(2, 4)
        z = Tensor(np.zeros(2))
        with pytest.raises(ContractError):
            bow_loss(head, z, z, [])


class TestComputeLoss:
    def frozen(self, cfg, B):
        return np.zeros((B, cfg.d_latent)), np.zeros((B, cfg.d_latent))

    def test_breakdown_sums_to_total(self, corpus, setup):
        cfg, vocab, model, nets, head = setup
        batch = corpus.train_examples()[:4]
        eps_p, eps_r = self.frozen(cfg, len(batch))
        bd, total = compute_loss(batch, model, nets, head, cfg, vocab,
                                 eps_p=eps_p, eps_r=eps_r)
        parts = bd.recon_nll + bd.kl_persona + bd.kl_response + bd.bow_nll + bd.reg_r + bd.reg_p
        assert parts == pytest.approx(bd.total, abs=1e-9)
        assert float(total.data) == pytest.approx(bd.total, abs=1e-12)

    def test_plain_variant_is_recon_only(self, corpus, setup):
        _, vocab, model, nets, head = setup
        cfg = tiny_cfg(variant="plain", vocab_size=len(vocab))
        batch = corpus.train_examples()[:4]
        bd, _ = compute_loss(batch, model, nets, head, cfg, vocab,
                             rng=np.random.default_rng(0))
        assert bd.kl_persona == 0.0
        assert bd.kl_response == 0.0
        assert bd.bow_nll == 0.0
        assert bd.reg_r == 0.0
        assert bd.reg_p == 0.0
        assert bd.total == pytest.approx(bd.recon_nll, abs=1e-12)

    def test_cvae_has_no_persona_terms(self, corpus, setup):
        _, vocab, model, nets, head = setup
        cfg = tiny_cfg(variant="cvae", vocab_size=len(vocab))
        batch = corpus.train_examples()[:4]
        eps_p, eps_r = self.frozen(cfg, len(batch))
        bd, _ = compute_loss(batch, model, nets, head, cfg, vocab,
                             eps_p=eps_p, eps_r=eps_r)
        assert bd.kl_persona == 0.0
        assert bd.reg_p == 0.0
        assert bd.kl_response > 0.0

    def test_zero_lambda_removes_regularizers(self, corpus, setup):
        _, vocab, model, nets, head = setup
        cfg = tiny_cfg(lambda_r=0.0, lambda_p=0.0, vocab_size=len(vocab))
        batch = corpus.train_examples()[:4]
        eps_p, eps_r = self.frozen(cfg, len(batch))
        bd, _ = compute_loss(batch, model, nets, head, cfg, vocab,
                             eps_p=eps_p, eps_r=eps_r)
        assert bd.reg_r == 0.0
        assert bd.reg_p == 0.0

    def test_tied_recognition_gives_exact_zero_kl(self, corpus, setup):
        # recognition weight [W_prior | 0] and shared bias reproduce the prior
        # for any response, so both KL terms must be exactly zero
        cfg, vocab, model, _, head = setup
        rng = np.random.default_rng(3)
        nets = LatentNets.build(cfg, rng)
        e = cfg.d_model
        for prior, rec in ((nets.response_prior, nets.response_recognition),
                           (nets.persona_prior, nets.persona_recognition)):
            rec.weight.data[...] = 0.0
            rec.weight.data[:, :e] = prior.weight.data
            rec.bias.data[...] = prior.bias.data
        batch = corpus.train_examples()[:4]
        eps_p, eps_r = self.frozen(cfg, len(batch))
        bd, _ = compute_loss(batch, model, nets, head, cfg, vocab,
                             eps_p=eps_p, eps_r=eps_r)
        assert bd.kl_persona == 0.0
        assert bd.kl_response == 0.0

    def test_kl_scale_zero_drops_kl(self, corpus, setup):
        cfg, vocab, model, nets, head = setup
        batch = corpus.train_examples()[:4]
        eps_p, eps_r = self.frozen(cfg, len(batch))
        bd, _ = compute_loss(batch, model, nets, head, cfg, vocab,
                             eps_p=eps_p, eps_r=eps_r, kl_scale=0.0)
        assert bd.kl_persona == 0.0
        assert bd.kl_response == 0.0

    def test_nan_parameter_names_component(self, corpus, setup):
        cfg, vocab, _, nets, head = setup
        model = DecoderModel(cfg, np.random.default_rng(9))
        model.emb.data[6, 0] = float("nan")
        batch = corpus.train_examples()[:2]
        eps_p, eps_r = self.frozen(cfg, len(batch))
        with pytest.raises(FloatingPointError, match="recon_nll|kl_|bow_nll"):
            compute_loss(batch, model, nets, head, cfg, vocab,
                         eps_p=eps_p, eps_r=eps_r)

    def test_full_loss_gradient(self, corpus, setup):
        cfg, vocab, model, nets, head = setup
        batch = corpus.train_examples()[:2]
        eps_p = np.random.default_rng(1).standard_normal((2, cfg.d_latent))
        eps_r = np.random.default_rng(2).standard_normal((2, cfg.d_latent))
        params = all_parameters(model, nets, head)
        f = lambda: compute_loss(batch, model, nets, head, cfg, vocab,
                                 eps_p=eps_p, eps_r=eps_r)[1]
        err = grad_check(f, list(params.values()), max_coords=3)
        assert err < 1e-3


class TestTrainLoop:
    def test_zero_lr_never_moves(self, corpus):
        cfg = tiny_cfg(lr=0.0, epochs=3)
        res = train(corpus, cfg)
        assert all(r == pytest.approx(res.initial_test_recon, abs=1e-12)
                   for r in res.test_recon)

    def test_seed_reproducibility(self, corpus):
        cfg = tiny_cfg(epochs=2, seed=5)
        log1, log2 = io.StringIO(), io.StringIO()
        train(corpus, tiny_cfg(epochs=2, seed=5), log_file=log1)
        train(corpus, tiny_cfg(epochs=2, seed=5), log_file=log2)
        assert log1.getvalue() == log2.getvalue()
        assert log1.getvalue().count("\n") == 2

    def test_overfits_small_corpus(self):
        # ~50 training examples memorized: final recon < 20% of epoch 1.
        # Held-in test dialogues so early stopping cannot cut the run short.
        from latentchat.corpus import Corpus

        base = generate_corpus(n_personas=4, n_dialogues=19, seed=0)
        small = Corpus(train=base.train, test=base.train[:2], seed=base.seed)
        assert len(small.train_examples()) >= 50
        cfg = tiny_cfg(epochs=30, lr=1e-2, batch=4, kl_warmup_epochs=2)
        res = train(small, cfg)
        first = res.epoch_logs[0].recon_nll
        last = res.epoch_logs[-1].recon_nll
        assert last < 0.2 * first

    def test_divergence_aborts(self, corpus):
        cfg = tiny_cfg(lr=50.0, epochs=30)
        with pytest.raises(FloatingPointError):
            train(corpus, cfg)

    def test_checkpoint_round_trip(self, corpus, tmp_path):
        cfg = tiny_cfg(epochs=1)
        res = train(corpus, cfg)
        path = tmp_path / "model.ckpt"
        save_model(path, res.model, res.nets, res.head, cfg, res.vocab)
        model2, nets2, head2, cfg2, vocab2 = load_model(path)
        before = evaluate_recon(corpus.test_examples(), res.model, res.nets,
                                res.head, cfg, res.vocab)
        after = evaluate_recon(corpus.test_examples(), model2, nets2,
                               head2, cfg2, vocab2)
        assert after == pytest.approx(before, abs=1e-12)
        assert vocab2.id_to_token == res.vocab.id_to_token
