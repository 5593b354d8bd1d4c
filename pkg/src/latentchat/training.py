"""SGVB objective assembly (reconstruction + KL + BoW + variance
regularizers) and the seeded training loop for the three model variants."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from . import text as tx
from .config import Config
from .corpus import Corpus
from .latent import (gaussian_from_net, kl_diag_gaussian, reparameterize,
                     variance_reg_p, variance_reg_r)
from .model import DecoderModel, LatentNets, encode_sequences, inject_latent, pad_batch
from .tensor import AdamState, ContractError, Tensor, adam_step, backward, clip_grad_norm

GRAD_CLIP = 5.0
LOSS_FIELDS = ("recon_nll", "kl_persona", "kl_response", "bow_nll", "reg_r", "reg_p", "total")


@dataclass
class LossBreakdown:
    recon_nll: float = 0.0
    kl_persona: float = 0.0
    kl_response: float = 0.0
    bow_nll: float = 0.0
    reg_r: float = 0.0
    reg_p: float = 0.0
    total: float = 0.0

    def as_row(self):
        return [getattr(self, f) for f in LOSS_FIELDS]


class BowHead:
    """Linear map from the concatenated latents to bag-of-words logits."""

    def __init__(self, cfg: Config, rng: np.random.Generator):
        d, V = cfg.d_latent, cfg.vocab_size
        self.weight = Tensor(rng.normal(0.0, 0.02, size=(2 * d, V)), requires_grad=True)
        self.bias = Tensor(np.zeros(V), requires_grad=True)

    def parameters(self):
        return {"bow.weight": self.weight, "bow.bias": self.bias}


def bow_loss(head: BowHead, z_p: Tensor, z_r: Tensor, response_ids) -> Tensor:
    """Mean over response tokens (EOS excluded) of -log softmax(head([z_p;z_r])).

    Duplicated tokens count once per occurrence (bag semantics). Accepts a
    single id list or a batch of lists; batches average over all tokens.
    """
    if len(response_ids) == 0:
        raise ContractError("bow_loss: empty response")
    single = isinstance(response_ids[0], (int, np.integer))
    batches = [response_ids] if single else response_ids
    if any(len(r) == 0 for r in batches):
        raise ContractError("bow_loss: empty response")
    z = T.concat([z_p, z_r], axis=-1)
    if z.ndim == 1:
        z = T.reshape(z, (1, z.shape[0]))
    logits = T.matmul(z, head.weight) + head.bias
    V = head.bias.shape[0]
    counts = np.zeros((len(batches), V))
    for b, ids in enumerate(batches):
        np.add.at(counts[b], np.asarray(ids, dtype=np.int64), 1.0)
    logp = T.log_softmax(logits)
    return (logp * Tensor(counts)).sum() * (-1.0 / counts.sum())


def _prepare_example(vocab, ex):
    ctx = tx.context_token_ids(vocab, ex.context)
    masked = tx.mask_user_turns(vocab, ex.context)
    persona = []
    for s in ex.persona.statements:
        persona.extend(vocab.encode(s))
    resp = vocab.encode(ex.response)
    return ctx, masked, persona or [tx.SEP_AGENT], resp


def compute_loss(batch, model: DecoderModel, nets: LatentNets, head: BowHead,
                 cfg: Config, vocab, eps_p=None, eps_r=None, rng=None,
                 kl_scale: float = 1.0):
    """LossBreakdown and the total Tensor for one mini-batch.

    Training-time latents come from the recognition networks; the variance
    regularizers read the prior networks' log-variances. ``eps_p``/``eps_r``
    inject frozen noise for gradient checks; otherwise ``rng`` draws it.
    """
    B = len(batch)
    d, e = cfg.d_latent, cfg.d_model
    prepped = [_prepare_example(vocab, ex) for ex in batch]
    ctxs, maskeds, personas, resps = zip(*prepped)
    if any(len(r) == 0 for r in resps):
        raise ContractError("compute_loss: empty gold response")

    zero = Tensor(np.zeros(()))
    recon_v = None
    kl_p = kl_r = bow = reg_r = reg_p = zero

    if cfg.variant == "plain":
        z_cat = None
    else:
        xbar = encode_sequences(model, list(ctxs))
        ybar = encode_sequences(model, [r + [tx.EOS] for r in resps])
        g_prior_r = gaussian_from_net(nets.response_prior, xbar)
        g_rec_r = gaussian_from_net(nets.response_recognition, T.concat([xbar, ybar], axis=1))
        if eps_r is None:
            eps_r = rng.standard_normal((B, d))
        z_r = reparameterize(g_rec_r, eps_r)
        kl_r = kl_diag_gaussian(g_rec_r, g_prior_r) * kl_scale
        reg_r = variance_reg_r(g_prior_r.log_var, cfg.lambda_r)

        if cfg.variant == "dlvgen":
            xbar_m = encode_sequences(model, list(maskeds))
            pbar = encode_sequences(model, list(personas))
            g_prior_p = gaussian_from_net(nets.persona_prior, xbar_m)
            g_rec_p = gaussian_from_net(nets.persona_recognition, T.concat([xbar_m, pbar], axis=1))
            if eps_p is None:
                eps_p = rng.standard_normal((B, d))
            z_p = reparameterize(g_rec_p, eps_p)
            kl_p = kl_diag_gaussian(g_rec_p, g_prior_p) * kl_scale
            reg_p = variance_reg_p(g_prior_p.log_var, cfg.lambda_p)
        else:
            z_p = Tensor(np.zeros((B, d)))

        recon_v = inject_latent(model, z_p, z_r)
        bow = bow_loss(head, z_p, z_r, list(resps))

    # teacher-forced reconstruction over context + BOS + response + EOS
    seqs, targets_list, losmask = [], [], []
    for ctx, resp in zip(ctxs, resps):
        full = list(ctx) + [tx.BOS] + list(resp) + [tx.EOS]
        if len(full) > cfg.max_len:
            full = full[-cfg.max_len:]
        seqs.append(full[:-1])
        targets_list.append(full[1:])
        m = [0.0] * len(full[1:])
        for i in range(len(resp) + 1):
            m[len(m) - 1 - i] = 1.0
        losmask.append(m)
    ids, pmask = pad_batch(seqs, cfg.max_len)
    Tlen = ids.shape[1]
    tgt = np.zeros((B, Tlen), dtype=np.int64)
    lm = np.zeros((B, Tlen))
    for b in range(B):
        tgt[b, : len(targets_list[b])] = targets_list[b]
        lm[b, : len(losmask[b])] = losmask[b]
    hidden = model.forward_hidden(ids, pmask, recon_v)
    recon = T.masked_cross_entropy(model.logits(hidden), tgt, lm)

    total = recon + kl_p + kl_r + bow + reg_r + reg_p
    bd = LossBreakdown(
        recon_nll=float(recon.data), kl_persona=float(kl_p.data),
        kl_response=float(kl_r.data), bow_nll=float(bow.data),
        reg_r=float(reg_r.data), reg_p=float(reg_p.data), total=float(total.data),
    )
    for name, val in zip(LOSS_FIELDS, bd.as_row()):
        if not math.isfinite(val):
            raise FloatingPointError(f"compute_loss: non-finite {name} component")
    return bd, total


def _mean_breakdown(rows):
    out = LossBreakdown()
    for f in LOSS_FIELDS:
        setattr(out, f, float(np.mean([getattr(r, f) for r in rows])))
    return out


@dataclass
class TrainResult:
    model: DecoderModel
    nets: LatentNets
    head: BowHead
    vocab: object
    epoch_logs: list
    test_recon: list
    initial_test_recon: float


def all_parameters(model, nets, head):
    params = dict(model.parameters())
    params.update(nets.parameters())
    params.update(head.parameters())
    return params


def evaluate_recon(examples, model, nets, head, cfg, vocab, batch_size=16):
    """Deterministic test reconstruction NLL (latent noise frozen at zero)."""
    rows = []
    for i in range(0, len(examples), batch_size):
        batch = examples[i : i + batch_size]
        B = len(batch)
        z0 = np.zeros((B, cfg.d_latent))
        bd, _ = compute_loss(batch, model, nets, head, cfg, vocab,
                             eps_p=z0, eps_r=z0)
        rows.append(bd.recon_nll)
    return float(np.mean(rows))


def train(corpus: Corpus, cfg: Config, vocab=None, log_file=None,
          checkpoint_path=None, progress=None, max_minutes=None) -> TrainResult:
    """Seeded training loop: shuffled mini-batches, Adam, KL warm-up,
    per-epoch logging, optional per-epoch checkpointing, early stopping
    when test reconstruction rises three epochs in a row."""
    from .text import Vocab

    train_examples = corpus.train_examples()
    test_examples = corpus.test_examples()
    if vocab is None:
        texts = [t.text for dlg in corpus.train for t in dlg.turns]
        texts += [s for dlg in corpus.train for s in dlg.persona.statements]
        vocab = Vocab.from_texts(texts, max_size=cfg.vocab_size)
    cfg.vocab_size = len(vocab)

    init_rng = np.random.default_rng(cfg.seed)
    model = DecoderModel(cfg, init_rng)
    nets = LatentNets.build(cfg, init_rng)
    head = BowHead(cfg, init_rng)
    params = all_parameters(model, nets, head)
    plist = [params[k] for k in sorted(params)]
    state = AdamState(plist)
    loop_rng = np.random.default_rng(cfg.seed + 1)

    steps_per_epoch = max(1, math.ceil(len(train_examples) / cfg.batch))
    warmup_steps = cfg.kl_warmup_epochs * steps_per_epoch
    initial_test = evaluate_recon(test_examples, model, nets, head, cfg, vocab)
    initial_total = None
    global_step = 0
    epoch_logs, test_recons = [], []
    rises = 0
    started = time.time()

    for epoch in range(cfg.epochs):
        order = loop_rng.permutation(len(train_examples))
        rows = []
        for s in range(steps_per_epoch):
            batch = [train_examples[i] for i in order[s * cfg.batch : (s + 1) * cfg.batch]]
            if not batch:
                continue
            kl_scale = 1.0 if warmup_steps <= 0 else min(1.0, global_step / warmup_steps)
            bd, total = compute_loss(batch, model, nets, head, cfg, vocab,
                                     rng=loop_rng, kl_scale=kl_scale)
            if initial_total is None:
                initial_total = bd.total
            for p in plist:
                p.zero_grad()
            backward(total)
            clip_grad_norm(plist, GRAD_CLIP)
            adam_step(plist, state, lr=cfg.lr)
            rows.append(bd)
            global_step += 1
        epoch_bd = _mean_breakdown(rows)
        if initial_total is not None and epoch_bd.total > 10.0 * max(initial_total, 1e-9):
            raise FloatingPointError(
                f"training diverged at epoch {epoch}: total {epoch_bd.total:.3f} "
                f"vs initial {initial_total:.3f}"
            )
        test_recon = evaluate_recon(test_examples, model, nets, head, cfg, vocab)
        epoch_logs.append(epoch_bd)
        test_recons.append(test_recon)
        if log_file is not None:
            line = "\t".join(f"{v:.6f}" for v in epoch_bd.as_row())
            log_file.write(f"{epoch}\t{line}\t{test_recon:.6f}\n")
            log_file.flush()
        if progress is not None:
            progress(epoch, epoch_bd, test_recon)
        if checkpoint_path is not None:
            save_model(checkpoint_path, model, nets, head, cfg, vocab)
        if len(test_recons) >= 2 and test_recons[-1] > test_recons[-2]:
            rises += 1
        else:
            rises = 0
        if rises >= 3:
            break
        if max_minutes is not None and (time.time() - started) / 60.0 > max_minutes:
            break

    return TrainResult(model=model, nets=nets, head=head, vocab=vocab,
                       epoch_logs=epoch_logs, test_recon=test_recons,
                       initial_test_recon=initial_test)


def save_model(path, model, nets, head, cfg: Config, vocab):
    from .tensor import save_checkpoint

    params = all_parameters(model, nets, head)
    config = dict(cfg.to_dict())
    # local paths and serving knobs are run-time settings, not model state
    for key in ("corpus_dir", "checkpoint", "vocab_path", "log_path",
                "report_path", "host", "port"):
        config.pop(key, None)
    config["_vocab"] = list(vocab.id_to_token[len(tx.SPECIAL_TOKENS):])
    save_checkpoint(path, params, config, cfg.seed)


def load_model(path):
    from .tensor import load_checkpoint
    from .text import Vocab

    arrays, config, seed = load_checkpoint(path)
    vocab = Vocab(config.pop("_vocab"))
    cfg = Config.from_dict(config)
    rng = np.random.default_rng(seed)
    model = DecoderModel(cfg, rng)
    nets = LatentNets.build(cfg, rng)
    head = BowHead(cfg, rng)
    params = all_parameters(model, nets, head)
    for name, arr in arrays.items():
        if name not in params:
            raise KeyError(f"checkpoint tensor {name!r} has no matching parameter")
        if params[name].data.shape != arr.shape:
            raise ContractError(f"checkpoint tensor {name!r}: shape {arr.shape} "
                                f"!= expected {params[name].data.shape}")
        params[name].data[...] = arr
    return model, nets, head, cfg, vocab
