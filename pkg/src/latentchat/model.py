"""Causal transformer decoder with per-step latent injection, sequence
embedding (mean-pooled trunk states), beam search, and N-sample candidate
generation.

The same trunk serves three roles: teacher-forced scoring during
training, sequence embedding for the latent networks (run with zero
injection and mean-pooled), and autoregressive generation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from . import text as tx
from .config import Config
from .latent import LatentNetwork, gaussian_from_net, reparameterize
from .lexsel import score_tokens
from .tensor import ContractError, Tensor

NEG_INF = -1e9


class DecoderModel:
    """Token embeddings, sinusoidal positions, pre-LN decoder blocks,
    output projection, and the latent-to-embedding projection."""

    def __init__(self, cfg: Config, rng: np.random.Generator):
        e, V, L = cfg.d_model, cfg.vocab_size, cfg.layers
        if e % cfg.heads != 0:
            raise ContractError(f"d_model {e} not divisible by heads {cfg.heads}")
        self.cfg = cfg
        self.pos = _sinusoidal(cfg.max_len, e)
        init = lambda *shape: Tensor(rng.normal(0.0, 0.02, size=shape), requires_grad=True)
        zeros = lambda *shape: Tensor(np.zeros(shape), requires_grad=True)
        ones = lambda *shape: Tensor(np.ones(shape), requires_grad=True)

        self.emb = init(V, e)
        self.blocks = []
        for _ in range(L):
            self.blocks.append({
                "ln1_g": ones(e), "ln1_b": zeros(e),
                "wq": init(e, e), "wk": init(e, e), "wv": init(e, e), "wo": init(e, e),
                "ln2_g": ones(e), "ln2_b": zeros(e),
                "w1": init(e, cfg.d_ff), "b1": zeros(cfg.d_ff),
                "w2": init(cfg.d_ff, e), "b2": zeros(e),
            })
        self.lnf_g, self.lnf_b = ones(e), zeros(e)
        self.out_w, self.out_b = init(e, V), zeros(V)
        self.w_lv = init(2 * cfg.d_latent, e)
        self.b_lv = zeros(e)

    def parameters(self):
        params = {"emb": self.emb, "lnf_g": self.lnf_g, "lnf_b": self.lnf_b,
                  "out_w": self.out_w, "out_b": self.out_b,
                  "w_lv": self.w_lv, "b_lv": self.b_lv}
        for i, blk in enumerate(self.blocks):
            for k, v in blk.items():
                params[f"block{i}.{k}"] = v
        return params

    # -- trunk ------------------------------------------------------------

    def forward_hidden(self, ids: np.ndarray, pad_mask: np.ndarray, v=None) -> Tensor:
        """Final hidden states [B, T, e] under causal + padding masks.

        ``v``, when given, is a [B, e] Tensor added at every input position.
        """
        B, Tlen = ids.shape
        if Tlen > self.cfg.max_len:
            raise ContractError(f"sequence length {Tlen} exceeds max_len {self.cfg.max_len}")
        cfg = self.cfg
        H, e = cfg.heads, cfg.d_model
        hd = e // H

        x = T.take_rows(self.emb, ids) + Tensor(self.pos[:Tlen])
        if v is not None:
            x = x + T.reshape(v, (B, 1, e))

        causal = np.triu(np.full((Tlen, Tlen), NEG_INF), k=1)
        key_pad = np.where(pad_mask[:, None, None, :] > 0, 0.0, NEG_INF)
        attn_mask = causal[None, None, :, :] + key_pad

        scale = 1.0 / np.sqrt(hd)
        for blk in self.blocks:
            h = T.layer_norm(x, blk["ln1_g"], blk["ln1_b"])
            q = _split_heads(T.matmul(h, blk["wq"]), B, Tlen, H, hd)
            k = _split_heads(T.matmul(h, blk["wk"]), B, Tlen, H, hd)
            vv = _split_heads(T.matmul(h, blk["wv"]), B, Tlen, H, hd)
            scores = T.matmul(q, T.swapaxes(k, -1, -2)) * scale
            attn = T.softmax(scores, additive_mask=attn_mask)
            ctx = T.matmul(attn, vv)
            ctx = T.reshape(T.swapaxes(ctx, 1, 2), (B, Tlen, e))
            x = x + T.matmul(ctx, blk["wo"])
            h = T.layer_norm(x, blk["ln2_g"], blk["ln2_b"])
            x = x + T.matmul(T.tanh(T.matmul(h, blk["w1"]) + blk["b1"]), blk["w2"]) + blk["b2"]
        return T.layer_norm(x, self.lnf_g, self.lnf_b)

    def logits(self, hidden: Tensor) -> Tensor:
        return T.matmul(hidden, self.out_w) + self.out_b


def _split_heads(t: Tensor, B, Tlen, H, hd) -> Tensor:
    return T.swapaxes(T.reshape(t, (B, Tlen, H, hd)), 1, 2)


def _sinusoidal(max_len: int, e: int) -> np.ndarray:
    pos = np.arange(max_len)[:, None]
    i = np.arange(e // 2)[None, :]
    angle = pos / np.power(10000.0, 2 * i / e)
    pe = np.zeros((max_len, e))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


# -- batched helpers ------------------------------------------------------


def pad_batch(id_lists, max_len: int):
    """Right-pad id lists to a rectangle; returns (ids, pad_mask) arrays.

    Overlong sequences are left-truncated (most recent tokens kept).
    """
    clipped = [ids[-max_len:] for ids in id_lists]
    Tlen = max(len(ids) for ids in clipped)
    B = len(clipped)
    out = np.full((B, Tlen), tx.PAD, dtype=np.int64)
    for b, ids in enumerate(clipped):
        out[b, : len(ids)] = ids
    # explicit PAD tokens in the input count as padding too
    mask = (out != tx.PAD).astype(np.float64)
    if not mask.any(axis=1).all():
        raise ContractError("pad_batch: sequence with no non-PAD tokens")
    return out, mask


def encode_sequences(model: DecoderModel, id_lists) -> Tensor:
    """Sequence embeddings [B, e]: mean pool of final hidden states over
    non-PAD positions, trunk run with zero latent injection."""
    if any(len(ids) == 0 for ids in id_lists):
        raise ContractError("encode_sequences: empty token sequence")
    ids, mask = pad_batch(id_lists, model.cfg.max_len)
    hidden = model.forward_hidden(ids, mask)
    weights = mask[:, :, None] / mask.sum(axis=1)[:, None, None]
    return (hidden * Tensor(weights)).sum(axis=1)


def encode_sequence(model: DecoderModel, ids) -> Tensor:
    """Single-sequence embedding vector of length d_model."""
    return T.reshape(encode_sequences(model, [list(ids)]), (model.cfg.d_model,))


def inject_latent(model: DecoderModel, z_p: Tensor, z_r: Tensor) -> Tensor:
    """v = W_LV [z_p; z_r] + b_LV, added at every decoding step."""
    d = model.cfg.d_latent
    if z_p.shape[-1] != d or z_r.shape[-1] != d:
        raise ContractError(
            f"inject_latent: latent dims {z_p.shape[-1]}/{z_r.shape[-1]} != {d}"
        )
    z = T.concat([z_p, z_r], axis=-1)
    batched = z.ndim == 2
    zmat = z if batched else T.reshape(z, (1, 2 * d))
    v = T.matmul(zmat, model.w_lv) + model.b_lv
    return v if batched else T.reshape(v, (model.cfg.d_model,))


def forward_logits(model: DecoderModel, context_ids, response_prefix_ids, v=None) -> Tensor:
    """Next-token logits at the BOS and each response-prefix position.

    Input sequence is context + BOS + prefix; the context is left-truncated
    if the total would exceed max_len (the response is never cut).
    """
    context_ids = list(context_ids)
    prefix = list(response_prefix_ids)
    budget = model.cfg.max_len - (len(prefix) + 1)
    if budget < 0:
        raise ContractError("forward_logits: response longer than max_len")
    context_ids = context_ids[-budget:] if budget else []
    seq = context_ids + [tx.BOS] + prefix
    ids = np.asarray([seq], dtype=np.int64)
    mask = np.ones((1, len(seq)))
    vb = None if v is None else T.reshape(v, (1, model.cfg.d_model))
    hidden = model.forward_hidden(ids, mask, vb)
    logits = model.logits(hidden)
    return T.reshape(T.narrow(logits, 1, len(context_ids), len(prefix) + 1),
                     (len(prefix) + 1, model.cfg.vocab_size))


# -- beam search ----------------------------------------------------------


def beam_search(model: DecoderModel, context_ids, v=None, beam: int = 3,
                max_len: int = 32):
    """Length-normalized beam search; returns generated token ids (no EOS).

    Ties in the per-step candidate ranking break toward the lower token id,
    then the lower originating beam index. Returns the best finished
    hypothesis, or the best unfinished one if none reached EOS. With
    beam > 1 the greedy rollout is scored as well, so widening the beam
    can never return a worse normalized score than beam=1.
    """
    toks, score = _beam_search_scored(model, context_ids, v, beam, max_len)
    if beam > 1:
        gtoks, gscore = _beam_search_scored(model, context_ids, v, 1, max_len)
        if gscore > score:
            return gtoks
    return toks


def _step_logprobs(model, context_ids, beams, vb):
    """Next-token log-probabilities for each unfinished hypothesis."""
    budget = model.cfg.max_len
    seqs = [(context_ids + [tx.BOS] + toks)[-budget:] for toks, _ in beams]
    ids, mask = pad_batch(seqs, budget)
    vbb = None if vb is None else T.concat([vb] * len(beams), axis=0)
    logits = model.logits(model.forward_hidden(ids, mask, vbb)).data
    rows = []
    for bi, seq in enumerate(seqs):
        row = logits[bi, len(seq) - 1]
        row = row - row.max()
        rows.append(row - np.log(np.exp(row).sum()))
    return rows


def _beam_search_scored(model: DecoderModel, context_ids, v, beam: int, max_len: int):
    if beam < 1:
        raise ContractError("beam_search: beam must be >= 1")
    context_ids = list(context_ids)
    vb = None if v is None else T.reshape(v, (1, model.cfg.d_model))

    if beam == 1:
        # plain greedy: argmax each step, stop at EOS
        toks, lp = [], 0.0
        for _ in range(max_len):
            logp = _step_logprobs(model, context_ids, [(toks, lp)], vb)[0]
            logp[tx.PAD] = -np.inf
            tok = int(np.argmax(logp))
            lp += logp[tok]
            if tok == tx.EOS:
                return toks, lp / (len(toks) + 1)
            toks.append(tok)
        return toks, lp / max(1, len(toks))

    beams = [([], 0.0)]  # (tokens, sum logp)
    finished = []
    for _ in range(max_len):
        rows = _step_logprobs(model, context_ids, beams, vb)
        candidates = []
        for bi, (toks, lp) in enumerate(beams):
            logp = rows[bi]
            top = np.argsort(-logp, kind="stable")[: beam + 1]
            for tok in top:
                if tok == tx.PAD:
                    continue
                candidates.append((lp + logp[tok], int(tok), bi, toks))
        # ties break toward the lower token id, then the lower beam index
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        next_beams = []
        for lp, tok, bi, toks in candidates:
            if tok == tx.EOS:
                finished.append((toks, lp, len(toks) + 1))
            else:
                next_beams.append((toks + [tok], lp))
            if len(next_beams) >= beam:
                break
        if not next_beams or len(finished) >= beam:
            break
        beams = next_beams

    def normalized(entry):
        toks, lp, length = entry
        return lp / max(1, length)

    if finished:
        best = max(finished, key=lambda e: (normalized(e), -len(e[0])))
        return best[0], normalized(best)
    toks, lp = max(beams, key=lambda e: e[1] / max(1, len(e[0])))
    return toks, lp / max(1, len(toks))


# -- candidate generation -------------------------------------------------


@dataclass
class Candidate:
    text: str
    tokens: list
    mtld: float
    mattr: float
    combined: float


@dataclass
class CandidateSet:
    candidates: list
    selected_index: int

    @property
    def selected(self) -> Candidate:
        return self.candidates[self.selected_index]


@dataclass
class LatentNets:
    """The four single-layer Gaussian networks plus the BoW head's latents."""

    persona_prior: LatentNetwork
    response_prior: LatentNetwork
    persona_recognition: LatentNetwork
    response_recognition: LatentNetwork

    @classmethod
    def build(cls, cfg: Config, rng: np.random.Generator):
        e, d = cfg.d_model, cfg.d_latent
        return cls(
            persona_prior=LatentNetwork("persona_prior", e, d, rng),
            response_prior=LatentNetwork("response_prior", e, d, rng),
            persona_recognition=LatentNetwork("persona_recognition", 2 * e, d, rng),
            response_recognition=LatentNetwork("response_recognition", 2 * e, d, rng),
        )

    def parameters(self):
        params = {}
        for net in (self.persona_prior, self.response_prior,
                    self.persona_recognition, self.response_recognition):
            params.update(net.parameters())
        return params


def generate_candidates(model: DecoderModel, nets: LatentNets, vocab,
                        context_turns, cfg: Config, rng: np.random.Generator,
                        n: int | None = None) -> CandidateSet:
    """Sample the prior latents n times, beam-search each draw, and score
    the resulting pool with the lexical-diversity selector."""
    n = cfg.n_candidates if n is None else n
    ctx_ids = tx.context_token_ids(vocab, context_turns)
    d = cfg.d_latent

    if cfg.variant == "plain":
        toks = beam_search(model, ctx_ids, None, cfg.beam, cfg.max_gen_len)
        texts = [vocab.decode(toks)] * n
    else:
        xbar = encode_sequence(model, ctx_ids)
        g_r = gaussian_from_net(nets.response_prior, xbar)
        g_p = None
        if cfg.variant == "dlvgen":
            masked = tx.mask_user_turns(vocab, context_turns)
            g_p = gaussian_from_net(nets.persona_prior, encode_sequence(model, masked))
        texts = []
        for _ in range(n):
            z_r = reparameterize(g_r, rng.standard_normal(d))
            if g_p is not None:
                z_p = reparameterize(g_p, rng.standard_normal(d))
            else:
                z_p = Tensor(np.zeros(d))
            v = inject_latent(model, z_p, z_r)
            toks = beam_search(model, ctx_ids, v, cfg.beam, cfg.max_gen_len)
            texts.append(vocab.decode(toks))

    return score_candidates(texts, cfg.h, cfg.w)


def score_candidates(texts, h: float, w: int) -> CandidateSet:
    """Re-tokenize candidate texts, score them, and pick the argmax of the
    combined lexical-diversity score (ties to the lowest index)."""
    if not texts:
        raise ContractError("score_candidates: empty candidate pool")
    cands = []
    for text in texts:
        toks = tx.tokenize_text(text)
        if toks:
            s = score_tokens(toks, h, w)
            cands.append(Candidate(text, toks, s.mtld, s.mattr, s.combined))
        else:
            # an empty generation scores zero rather than erroring
            cands.append(Candidate(text, toks, 0.0, 0.0, 0.0))
    best = max(range(len(cands)), key=lambda i: (cands[i].combined, -i))
    return CandidateSet(candidates=cands, selected_index=best)
