"""Lexical diversity metrics (TTR, MTLD, MATTR), the combined-score
candidate selection rule, and Distinct-1/2 evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

from .tensor import ContractError

MTLD_THRESHOLD = 0.72
MATTR_WINDOW = 4
MTLD_WEIGHT = 0.1


@dataclass
class LexScore:
    mtld: float
    mattr: float

    @property
    def combined(self) -> float:
        return MTLD_WEIGHT * self.mtld + self.mattr


def ttr(tokens) -> float:
    """Type-token ratio: distinct tokens over total tokens."""
    if not tokens:
        raise ContractError("ttr: empty token sequence")
    return len(set(tokens)) / len(tokens)


def _mtld_directional(tokens, h: float, partial: bool) -> float:
    factors = 0.0
    seen = set()
    seg_len = 0
    for tok in tokens:
        seen.add(tok)
        seg_len += 1
        if len(seen) / seg_len < h:
            factors += 1.0
            seen.clear()
            seg_len = 0
    if partial and seg_len > 0:
        remainder_ttr = len(seen) / seg_len
        factors += (1.0 - remainder_ttr) / (1.0 - h)
    if factors == 0.0:
        # no segment ever crossed the threshold: saturate at the token count
        return float(len(tokens))
    return len(tokens) / factors


def mtld(tokens, h: float = MTLD_THRESHOLD, partial: bool = True) -> float:
    """Measure of textual lexical diversity, averaged forward and backward.

    Grows a segment token by token; whenever the running TTR drops below
    ``h`` the factor count is incremented and the segment restarts. A
    nonempty remainder contributes the standard partial factor
    (1 - TTR) / (1 - h); ``partial=False`` drops that term (the simplified
    whole-factor variant).
    """
    if not tokens:
        raise ContractError("mtld: empty token sequence")
    fwd = _mtld_directional(list(tokens), h, partial)
    bwd = _mtld_directional(list(tokens)[::-1], h, partial)
    return (fwd + bwd) / 2.0


def mattr(tokens, w: int = MATTR_WINDOW) -> float:
    """Moving-average TTR over sliding windows of size ``w`` (stride 1)."""
    if not tokens:
        raise ContractError("mattr: empty token sequence")
    tokens = list(tokens)
    if len(tokens) < w:
        return ttr(tokens)
    windows = [tokens[i : i + w] for i in range(len(tokens) - w + 1)]
    return sum(ttr(win) for win in windows) / len(windows)


def score_tokens(tokens, h: float = MTLD_THRESHOLD, w: int = MATTR_WINDOW) -> LexScore:
    return LexScore(mtld=mtld(tokens, h), mattr=mattr(tokens, w))


def select_response(token_lists, h: float = MTLD_THRESHOLD, w: int = MATTR_WINDOW):
    """Pick the candidate maximizing 0.1*MTLD + MATTR; ties -> lowest index.

    Returns (selected index, list of LexScore).
    """
    if not token_lists:
        raise ContractError("select_response: empty candidate pool")
    scores = [score_tokens(toks, h, w) for toks in token_lists]
    best = max(range(len(scores)), key=lambda i: (scores[i].combined, -i))
    return best, scores


def distinct_n(responses, n: int):
    """Mean over responses of distinct n-grams / total n-grams.

    Responses with fewer than ``n`` tokens are excluded; returns None when
    nothing qualifies.
    """
    per_response = []
    for toks in responses:
        toks = list(toks)
        if len(toks) < n:
            continue
        grams = [tuple(toks[i : i + n]) for i in range(len(toks) - n + 1)]
        per_response.append(len(set(grams)) / len(grams))
    if not per_response:
        return None
    return sum(per_response) / len(per_response)


def pooled_distinct_n(responses, n: int):
    """Distinct n-grams across the whole response set / total n-grams.

    Unlike ``distinct_n`` this pools n-grams over all responses, so a model
    that repeats the same reply everywhere scores low even when each reply
    is internally non-repetitive. Returns None when no response qualifies.
    """
    seen = set()
    total = 0
    for toks in responses:
        toks = list(toks)
        for i in range(len(toks) - n + 1):
            seen.add(tuple(toks[i : i + n]))
            total += 1
    if total == 0:
        return None
    return len(seen) / total
