"""Evaluation over a test set: Distinct-1/2, the persona-consistency
proxy, and prior log-variance norms, under three aggregation modes
(mean over the N sampled candidates, selected-candidate only, and
first-candidate only).

Distinct columns pool n-grams across the test split, so a model that
gives everyone the same reply scores low: the mean-over-N row scores
each candidate index k over the whole split and averages the N scores,
while selected-only and first-only score the corresponding single
response per context. Proxy consistency is a plain mean per response."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import text as tx
from .corpus import persona_consistency_proxy
from .latent import gaussian_from_net
from .lexsel import pooled_distinct_n
from .model import encode_sequence, generate_candidates

REPORT_COLUMNS = ["variant", "mode", "distinct_1", "distinct_2",
                  "proxy_consistency", "norm_log_var_r", "norm_log_var_p"]


@dataclass
class EvalRow:
    variant: str
    mode: str  # "mean-over-N" or "selected-only" or "first-only"
    distinct_1: float
    distinct_2: float
    proxy_consistency: float
    norm_log_var_r: float
    norm_log_var_p: float

    def cells(self):
        return [self.variant, self.mode] + [
            f"{v:.3f}" for v in (self.distinct_1, self.distinct_2,
                                 self.proxy_consistency,
                                 self.norm_log_var_r, self.norm_log_var_p)]


@dataclass
class EvalResult:
    rows: list
    candidate_sets: list  # one CandidateSet per evaluated context


def evaluate_model(model, nets, head, cfg, vocab, examples, seed=None,
                   max_contexts=None) -> EvalResult:
    """Generate N candidates per test context and aggregate the metrics.

    Each context gets its own PRNG stream derived from (seed, index), so
    results are reproducible and independent of evaluation order.
    """
    seed = cfg.seed if seed is None else seed
    if max_contexts is not None:
        examples = examples[:max_contexts]
    if not examples:
        raise ValueError("evaluate_model: empty test set")

    sets = []
    sel_tokens, first_tokens = [], []
    proxy_all, proxy_sel, proxy_first = [], [], []
    norms_r, norms_p = [], []
    personas = [ex.persona for ex in examples]

    for idx, ex in enumerate(examples):
        rng = np.random.default_rng([seed, idx])
        cs = generate_candidates(model, nets, vocab, ex.context, cfg, rng)
        sets.append(cs)
        for c in cs.candidates:
            proxy_all.append(persona_consistency_proxy(c.text, ex.persona, personas))
        sel = cs.selected
        first = cs.candidates[0]
        sel_tokens.append(sel.tokens)
        first_tokens.append(first.tokens)
        proxy_sel.append(persona_consistency_proxy(sel.text, ex.persona, personas))
        proxy_first.append(persona_consistency_proxy(first.text, ex.persona, personas))

        ctx_ids = tx.context_token_ids(vocab, ex.context)
        g_r = gaussian_from_net(nets.response_prior, encode_sequence(model, ctx_ids))
        norms_r.append(float(np.linalg.norm(g_r.log_var.data)))
        masked = tx.mask_user_turns(vocab, ex.context)
        g_p = gaussian_from_net(nets.persona_prior, encode_sequence(model, masked))
        norms_p.append(float(np.linalg.norm(g_p.log_var.data)))

    def row(mode, d1, d2, proxies):
        return EvalRow(
            variant=cfg.variant, mode=mode,
            distinct_1=d1 or 0.0,
            distinct_2=d2 or 0.0,
            proxy_consistency=float(np.mean(proxies)),
            norm_log_var_r=float(np.mean(norms_r)),
            norm_log_var_p=float(np.mean(norms_p)),
        )

    def mean_over_candidate_index(n):
        width = min(len(cs.candidates) for cs in sets)
        scores = []
        for k in range(width):
            val = pooled_distinct_n([cs.candidates[k].tokens for cs in sets], n)
            if val is not None:
                scores.append(val)
        return sum(scores) / len(scores) if scores else None

    rows = [
        row("mean-over-N", mean_over_candidate_index(1),
            mean_over_candidate_index(2), proxy_all),
        row("selected-only", pooled_distinct_n(sel_tokens, 1),
            pooled_distinct_n(sel_tokens, 2), proxy_sel),
        row("first-only", pooled_distinct_n(first_tokens, 1),
            pooled_distinct_n(first_tokens, 2), proxy_first),
    ]
    return EvalResult(rows=rows, candidate_sets=sets)


def format_report(rows) -> str:
    """Aligned text table, 3-decimal numbers."""
    table = [REPORT_COLUMNS] + [r.cells() for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(REPORT_COLUMNS))]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def report_tsv(rows) -> str:
    out = ["\t".join(REPORT_COLUMNS)]
    for r in rows:
        out.append("\t".join(r.cells()))
    return "\n".join(out) + "\n"
