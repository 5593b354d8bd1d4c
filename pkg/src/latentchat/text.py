"""Whitespace/punctuation tokenizer and the fixed-special-id vocabulary."""

from __future__ import annotations

import re

from .tensor import ContractError

PAD, BOS, EOS, UNK, SEP_USER, SEP_AGENT = range(6)
SPECIAL_TOKENS = ["<pad>", "<bos>", "<eos>", "<unk>", "<sep_user>", "<sep_agent>"]

_PUNCT_RE = re.compile(r"([.,!?])")


def tokenize_text(text: str):
    """Lowercase, split on whitespace, and split . , ! ? into own tokens."""
    return _PUNCT_RE.sub(r" \1 ", text.lower()).split()


class Vocab:
    """token <-> id maps; ids 0-5 are the fixed specials."""

    def __init__(self, tokens):
        self.id_to_token = list(SPECIAL_TOKENS) + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ContractError("Vocab: duplicate tokens")

    def __len__(self):
        return len(self.id_to_token)

    @classmethod
    def from_texts(cls, texts, max_size: int = 1000):
        seen = {}
        for text in texts:
            for tok in tokenize_text(text):
                seen[tok] = seen.get(tok, 0) + 1
        ranked = sorted(seen, key=lambda t: (-seen[t], t))
        room = max_size - len(SPECIAL_TOKENS)
        return cls(sorted(ranked[:room]))

    def encode(self, text: str):
        return [self.token_to_id.get(t, UNK) for t in tokenize_text(text)]

    def decode(self, ids) -> str:
        return " ".join(
            self.id_to_token[i] for i in ids if i >= len(SPECIAL_TOKENS) or i == UNK
        )

    def save(self, path):
        """One non-special token per line; line number = id - 6."""
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.id_to_token[len(SPECIAL_TOKENS):]:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.rstrip("\n")])


def context_token_ids(vocab: Vocab, turns):
    """Speaker-tagged flat token ids for a full dialogue context."""
    ids = []
    for turn in turns:
        if turn.speaker == "user":
            ids.append(SEP_USER)
        elif turn.speaker == "agent":
            ids.append(SEP_AGENT)
        else:
            raise ContractError(f"untagged turn speaker {turn.speaker!r}")
        ids.extend(vocab.encode(turn.text))
    return ids


def mask_user_turns(vocab: Vocab, turns):
    """Persona-view ids: agent turns only, each prefixed by SEP_AGENT.

    An all-user context collapses to the single sentinel token [SEP_AGENT].
    """
    ids = []
    for turn in turns:
        if turn.speaker == "agent":
            ids.append(SEP_AGENT)
            ids.extend(vocab.encode(turn.text))
        elif turn.speaker != "user":
            raise ContractError(f"untagged turn speaker {turn.speaker!r}")
    return ids or [SEP_AGENT]
